//! Concrete test cases: parameter and body serialisation, and the
//! transports that put them on the wire.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::http::{self, body_serde, HttpRequest, HttpResponse};
use crate::schema::{Operation, ParamLocation};

/// Everything except RFC 3986 unreserved characters.
const SEGMENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

/// Cookie values may not contain separators, quotes, whitespace or `%`.
const COOKIE: &AsciiSet = &percent_encoding::CONTROLS
    .add(b' ')
    .add(b'"')
    .add(b',')
    .add(b';')
    .add(b'\\')
    .add(b'%');

/// Boundary used for `multipart/form-data` bodies. Fixed so that replays
/// are byte-identical.
pub const MULTIPART_BOUNDARY: &str = "schemafuzz-7d1c5e0a9b3f";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("missing required parameter `{0}`")]
    MissingRequiredParameter(String),
    #[error("cannot encode value: {0}")]
    UnencodableValue(String),
    #[error("no serialiser for media type `{0}`")]
    UnknownMediaType(String),
    #[error("invalid base URL `{0}`")]
    InvalidBaseUrl(String),
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("TLS is not supported: {0}")]
    Tls(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl TransportError {
    /// Whether the error came from talking to the target rather than from
    /// building the request.
    pub fn is_infrastructure(&self) -> bool {
        !matches!(
            self,
            TransportError::MissingRequiredParameter(_)
                | TransportError::UnencodableValue(_)
                | TransportError::UnknownMediaType(_)
        )
    }
}

impl From<http::ClientError> for TransportError {
    fn from(e: http::ClientError) -> Self {
        match e {
            http::ClientError::Connect { addr, message } => TransportError::Connection(format!("{addr}: {message}")),
            http::ClientError::Timeout(d) => TransportError::Timeout(d),
            http::ClientError::Io(m) => TransportError::Io(m),
            http::ClientError::BadResponse(e) => TransportError::Protocol(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Positive,
    Negative,
}

/// The generated values behind a test case, before serialisation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub path: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub query: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub header: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub cookie: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<Value>,
}

impl Inputs {
    pub fn get(&self, location: ParamLocation, name: &str) -> Option<&Value> {
        match location {
            ParamLocation::Path => self.path.get(name),
            ParamLocation::Query => self.query.get(name),
            ParamLocation::Header => self.header.get(name),
            ParamLocation::Cookie => self.cookie.get(name),
        }
    }

    pub fn set(&mut self, location: ParamLocation, name: &str, value: Value) {
        let map = match location {
            ParamLocation::Path => &mut self.path,
            ParamLocation::Query => &mut self.query,
            ParamLocation::Header => &mut self.header,
            ParamLocation::Cookie => &mut self.cookie,
        };
        map.insert(name.to_string(), value);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedBody {
    pub media_type: String,
    #[serde(with = "body_serde")]
    pub bytes: Vec<u8>,
}

/// One concrete request, ready to send.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub operation: String,
    pub method: String,
    pub path_template: String,
    pub resolved_path: String,
    pub query: Vec<(String, String)>,
    pub headers: Vec<(String, String)>,
    pub cookies: Vec<(String, String)>,
    pub body: Option<EncodedBody>,
    pub inputs: Inputs,
    pub intent: Intent,
    /// For negative cases, which component was drawn from a negated schema.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    /// The choice sequence the case was generated from.
    #[serde(default, with = "hex_bytes")]
    pub choices: Vec<u8>,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

impl TestCase {
    /// Path and query, percent-encoded, relative to the base URL.
    pub fn target(&self) -> String {
        if self.query.is_empty() {
            return self.resolved_path.clone();
        }
        let mut ser = form_urlencoded::Serializer::new(String::new());
        for (k, v) in &self.query {
            ser.append_pair(k, v);
        }
        format!("{}?{}", self.resolved_path, ser.finish())
    }

    /// Adds headers, replacing any with the same name.
    pub fn set_headers(&mut self, extra: &[(String, String)]) -> Result<(), TransportError> {
        for (k, v) in extra {
            check_header(k, v)?;
            self.headers.retain(|(n, _)| !n.eq_ignore_ascii_case(k));
            self.headers.push((k.clone(), v.clone()));
        }
        Ok(())
    }

    /// The request as it goes on the wire, with `prefix` (the base URL's
    /// path) prepended to the target.
    pub fn to_http(&self, prefix: &str) -> HttpRequest {
        let mut headers = self.headers.clone();
        if !self.cookies.is_empty() {
            let c: Vec<String> = self.cookies.iter().map(|(k, v)| format!("{k}={v}")).collect();
            headers.push(("Cookie".into(), c.join("; ")));
        }
        let mut body = Vec::new();
        if let Some(b) = &self.body {
            headers.push(("Content-Type".into(), content_type_header(&b.media_type)));
            body = b.bytes.clone();
        }
        HttpRequest {
            method: self.method.clone(),
            target: format!("{}{}", prefix.trim_end_matches('/'), self.target()),
            headers,
            body,
        }
    }

    /// A shell command reproducing the request.
    pub fn curl(&self, base_url: &str) -> String {
        let (origin, prefix) = split_base(base_url);
        let req = self.to_http(prefix);
        let mut out = format!("curl -X {} {}", req.method, shell_quote(&format!("{origin}{}", req.target)));
        for (k, v) in &req.headers {
            out.push_str(&format!(" -H {}", shell_quote(&format!("{k}: {v}"))));
        }
        if !req.body.is_empty() {
            match std::str::from_utf8(&req.body) {
                Ok(t) => out.push_str(&format!(" --data-binary {}", shell_quote(t))),
                Err(_) => {
                    let esc: String = req.body.iter().map(|b| format!("\\x{b:02x}")).collect();
                    out.push_str(&format!(" --data-binary \"$(printf '{esc}')\""));
                }
            }
        }
        out
    }
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn content_type_header(media_type: &str) -> String {
    if media_essence(media_type) == "multipart/form-data" {
        format!("multipart/form-data; boundary={MULTIPART_BOUNDARY}")
    } else {
        media_type.to_string()
    }
}

/// Splits a base URL into origin (`http://host:port`) and path prefix.
fn split_base(base_url: &str) -> (&str, &str) {
    let after_scheme = base_url.find("://").map(|i| i + 3).unwrap_or(0);
    match base_url[after_scheme..].find('/') {
        Some(i) => base_url.split_at(after_scheme + i),
        None => (base_url, ""),
    }
}

/// Lower-cased media type without parameters.
pub fn media_essence(media_type: &str) -> String {
    media_type.split(';').next().unwrap_or("").trim().to_ascii_lowercase()
}

fn check_header(name: &str, value: &str) -> Result<(), TransportError> {
    let name_ok = !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b"!#$%&'*+-.^_`|~".contains(&b));
    if !name_ok {
        return Err(TransportError::UnencodableValue(format!("invalid header name `{name}`")));
    }
    if value.chars().any(|c| (c.is_control() && c != '\t') || c == '\u{7f}') {
        return Err(TransportError::UnencodableValue(format!(
            "control character in header `{name}`"
        )));
    }
    Ok(())
}

/// Plain-text form of a scalar; nested values become JSON text.
fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        other => other.to_string(),
    }
}

/// Parts of a `simple`/`form` style value, unencoded.
fn style_parts(v: &Value, explode: bool) -> Vec<String> {
    match v {
        Value::Array(items) => items.iter().map(scalar_text).collect(),
        Value::Object(map) => {
            if explode {
                map.iter().map(|(k, v)| format!("{k}={}", scalar_text(v))).collect()
            } else {
                map.iter().flat_map(|(k, v)| [k.clone(), scalar_text(v)]).collect()
            }
        }
        other => vec![scalar_text(other)],
    }
}

/// Serialises a path parameter value, percent-encoded.
pub fn encode_path_value(v: &Value, explode: bool) -> String {
    style_parts(v, explode)
        .iter()
        .map(|p| utf8_percent_encode(p, SEGMENT).to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Query pairs for one parameter, unencoded.
pub fn query_pairs(name: &str, v: &Value, explode: bool, json_encoded: bool) -> Vec<(String, String)> {
    if json_encoded {
        return vec![(name.to_string(), v.to_string())];
    }
    match v {
        Value::Array(items) if explode => items.iter().map(|i| (name.to_string(), scalar_text(i))).collect(),
        Value::Object(map) if explode => map.iter().map(|(k, v)| (k.clone(), scalar_text(v))).collect(),
        other => vec![(name.to_string(), style_parts(other, false).join(","))],
    }
}

/// Text of a header parameter value.
pub fn header_text(v: &Value, explode: bool, json_encoded: bool) -> String {
    if json_encoded {
        v.to_string()
    } else {
        style_parts(v, explode).join(",")
    }
}

/// Serialises a body with the built-in serialisers.
pub fn serialise_body(media_type: &str, value: &Value) -> Result<Vec<u8>, TransportError> {
    let essence = media_essence(media_type);
    match essence.as_str() {
        "application/json" | "*/*" | "application/*" => json_bytes(value),
        e if e.ends_with("+json") => json_bytes(value),
        "application/x-www-form-urlencoded" => {
            let mut ser = form_urlencoded::Serializer::new(String::new());
            for (k, v) in form_fields(value, &essence)? {
                ser.append_pair(&k, &v);
            }
            Ok(ser.finish().into_bytes())
        }
        "multipart/form-data" => {
            let mut out = Vec::new();
            for (k, v) in form_fields(value, &essence)? {
                if k.contains(['"', '\r', '\n']) {
                    return Err(TransportError::UnencodableValue(format!("multipart field name `{k}`")));
                }
                out.extend_from_slice(
                    format!("--{MULTIPART_BOUNDARY}\r\nContent-Disposition: form-data; name=\"{k}\"\r\n\r\n").as_bytes(),
                );
                out.extend_from_slice(v.as_bytes());
                out.extend_from_slice(b"\r\n");
            }
            out.extend_from_slice(format!("--{MULTIPART_BOUNDARY}--\r\n").as_bytes());
            Ok(out)
        }
        "application/octet-stream" => Ok(raw_text(value).into_bytes()),
        e if e.starts_with("text/") => Ok(raw_text(value).into_bytes()),
        _ => Err(TransportError::UnknownMediaType(media_type.to_string())),
    }
}

fn json_bytes(value: &Value) -> Result<Vec<u8>, TransportError> {
    serde_json::to_vec(value).map_err(|e| TransportError::UnencodableValue(e.to_string()))
}

fn raw_text(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn form_fields(value: &Value, essence: &str) -> Result<Vec<(String, String)>, TransportError> {
    let Value::Object(map) = value else {
        return Err(TransportError::UnencodableValue(format!("{essence} body must be an object")));
    };
    let mut out = Vec::new();
    for (k, v) in map {
        match v {
            Value::Array(items) => out.extend(items.iter().map(|i| (k.clone(), scalar_text(i)))),
            other => out.push((k.clone(), scalar_text(other))),
        }
    }
    Ok(out)
}

pub type SerialiseFn = Arc<dyn Fn(&Value) -> Result<Vec<u8>, TransportError> + Send + Sync>;

/// Body serialisers: the built-ins plus user registrations, which win.
#[derive(Clone, Default)]
pub struct Serialisers {
    custom: BTreeMap<String, SerialiseFn>,
}

impl std::fmt::Debug for Serialisers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Serialisers")
            .field("custom", &self.custom.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Serialisers {
    pub fn register(&mut self, media_type: &str, f: SerialiseFn) {
        self.custom.insert(media_essence(media_type), f);
    }

    pub fn supports(&self, media_type: &str) -> bool {
        !matches!(
            self.serialise(media_type, &Value::Object(Default::default())),
            Err(TransportError::UnknownMediaType(_))
        )
    }

    pub fn serialise(&self, media_type: &str, value: &Value) -> Result<Vec<u8>, TransportError> {
        match self.custom.get(&media_essence(media_type)) {
            Some(f) => f(value),
            None => serialise_body(media_type, value),
        }
    }
}

/// Builds a test case from generated values. The `User-Agent` header is
/// set; config headers are added by the caller with [`TestCase::set_headers`].
pub fn build_test_case(
    op: &Operation,
    inputs: Inputs,
    media_type: Option<&str>,
    intent: Intent,
    serialisers: &Serialisers,
) -> Result<TestCase, TransportError> {
    let mut resolved = op.path.clone();
    let mut query = Vec::new();
    let mut headers = vec![("User-Agent".to_string(), format!("schemafuzz/{}", crate::VERSION))];
    let mut cookies = Vec::new();
    for p in &op.parameters {
        let Some(v) = inputs.get(p.location, &p.name) else {
            if p.required {
                return Err(TransportError::MissingRequiredParameter(p.name.clone()));
            }
            continue;
        };
        match p.location {
            ParamLocation::Path => {
                let text = if p.json_encoded {
                    utf8_percent_encode(&v.to_string(), SEGMENT).to_string()
                } else {
                    encode_path_value(v, p.explode)
                };
                resolved = resolved.replace(&format!("{{{}}}", p.name), &text);
            }
            ParamLocation::Query => query.extend(query_pairs(&p.name, v, p.explode, p.json_encoded)),
            ParamLocation::Header => {
                let text = header_text(v, p.explode, p.json_encoded);
                check_header(&p.name, &text)?;
                headers.push((p.name.clone(), text));
            }
            ParamLocation::Cookie => {
                if p.name.is_empty() || p.name.contains(['=', ';', ' ', ',']) {
                    return Err(TransportError::UnencodableValue(format!("cookie name `{}`", p.name)));
                }
                let text = header_text(v, p.explode, p.json_encoded);
                cookies.push((p.name.clone(), utf8_percent_encode(&text, COOKIE).to_string()));
            }
        }
    }
    if resolved.contains('{') {
        let missing = crate::schema::template_names(&resolved).into_iter().next().unwrap_or_default();
        return Err(TransportError::MissingRequiredParameter(missing));
    }
    let body = match (&inputs.body, media_type) {
        (Some(v), Some(mt)) => Some(EncodedBody {
            media_type: mt.to_string(),
            bytes: serialisers.serialise(mt, v)?,
        }),
        (Some(_), None) => return Err(TransportError::UnknownMediaType(String::new())),
        (None, _) => None,
    };
    Ok(TestCase {
        operation: op.id.clone(),
        method: op.method.clone(),
        path_template: op.path.clone(),
        resolved_path: resolved,
        query,
        headers,
        cookies,
        body,
        inputs,
        intent,
        provenance: None,
        choices: Vec::new(),
    })
}

/// Sends test cases. Implementations never retry.
pub trait Transport: Send + Sync {
    fn send(&self, tc: &TestCase, base_url: &str, timeout: Duration) -> Result<HttpResponse, TransportError>;

    /// Restores the target to its initial state, if it supports that.
    fn reset(&self, _base_url: &str) -> Result<(), TransportError> {
        Ok(())
    }

    /// Whether replays are free of outside side effects, which makes
    /// shrinking safe by default.
    fn is_in_process(&self) -> bool {
        false
    }
}

/// Plain HTTP/1.1 over TCP.
#[derive(Debug, Clone, Default)]
pub struct NetworkTransport {
    /// Path that resets the target when POSTed to, e.g. `/reset`.
    pub reset_path: Option<String>,
}

fn endpoint(base_url: &str) -> Result<(String, u16, String), TransportError> {
    let url = url::Url::parse(base_url).map_err(|_| TransportError::InvalidBaseUrl(base_url.to_string()))?;
    match url.scheme() {
        "http" => {}
        "https" => return Err(TransportError::Tls(base_url.to_string())),
        _ => return Err(TransportError::InvalidBaseUrl(base_url.to_string())),
    }
    let host = url
        .host_str()
        .ok_or_else(|| TransportError::InvalidBaseUrl(base_url.to_string()))?
        .trim_start_matches('[')
        .trim_end_matches(']')
        .to_string();
    let port = url.port_or_known_default().unwrap_or(80);
    Ok((host, port, url.path().to_string()))
}

impl Transport for NetworkTransport {
    fn send(&self, tc: &TestCase, base_url: &str, timeout: Duration) -> Result<HttpResponse, TransportError> {
        let (host, port, prefix) = endpoint(base_url)?;
        Ok(http::send(&host, port, &tc.to_http(&prefix), timeout)?)
    }

    fn reset(&self, base_url: &str) -> Result<(), TransportError> {
        let Some(path) = &self.reset_path else { return Ok(()) };
        let (host, port, prefix) = endpoint(base_url)?;
        let req = HttpRequest {
            method: "POST".into(),
            target: format!("{}{path}", prefix.trim_end_matches('/')),
            headers: vec![],
            body: vec![],
        };
        let resp = http::send(&host, port, &req, Duration::from_secs(10))?;
        if resp.status >= 300 {
            return Err(TransportError::Protocol(format!("reset answered {}", resp.status)));
        }
        Ok(())
    }
}

/// A service that can be called without a network.
pub trait Service: Send + Sync {
    /// Handles one request. A non-zero `elapsed` on the response is
    /// simulated processing time.
    fn handle(&self, req: &HttpRequest) -> HttpResponse;
    fn reset(&self);
}

/// Dispatches to a [`Service`] in the same process. Requests and responses
/// still go through the wire encoding so both sides see real HTTP.
#[derive(Clone)]
pub struct InProcessTransport {
    service: Arc<dyn Service>,
}

impl InProcessTransport {
    pub fn new(service: Arc<dyn Service>) -> Self {
        InProcessTransport { service }
    }
}

impl Transport for InProcessTransport {
    fn send(&self, tc: &TestCase, base_url: &str, timeout: Duration) -> Result<HttpResponse, TransportError> {
        let (_, prefix) = split_base(base_url);
        let wire = http::render_request(&tc.to_http(prefix), "in-process");
        let (req, _) = http::parse_request(&wire).map_err(|e| TransportError::Protocol(e.to_string()))?;
        let resp = self.service.handle(&req);
        let simulated = resp.elapsed;
        if simulated > timeout {
            return Err(TransportError::Timeout(timeout));
        }
        let mut resp = http::parse_response(&http::render_response(&resp))
            .map_err(|e| TransportError::Protocol(e.to_string()))?;
        resp.elapsed = simulated;
        resp.ttfb = simulated;
        Ok(resp)
    }

    fn reset(&self, _base_url: &str) -> Result<(), TransportError> {
        self.service.reset();
        Ok(())
    }

    fn is_in_process(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Parameter;
    use serde_json::json;

    fn op(path: &str, params: Vec<Parameter>) -> Operation {
        Operation {
            id: "op".into(),
            method: "GET".into(),
            path: path.into(),
            parameters: params,
            body: None,
            responses: BTreeMap::new(),
        }
    }

    fn param(name: &str, location: ParamLocation, explode: bool) -> Parameter {
        Parameter {
            name: name.into(),
            location,
            required: true,
            schema: json!({}),
            explode,
            json_encoded: false,
        }
    }

    #[test]
    fn path_values_are_encoded() {
        let o = op("/pets/{id}", vec![param("id", ParamLocation::Path, false)]);
        let mut inputs = Inputs::default();
        inputs.path.insert("id".into(), json!(7));
        let tc = build_test_case(&o, inputs.clone(), None, Intent::Positive, &Serialisers::default()).unwrap();
        assert_eq!(tc.resolved_path, "/pets/7");
        inputs.path.insert("id".into(), json!("a/b"));
        let tc = build_test_case(&o, inputs, None, Intent::Positive, &Serialisers::default()).unwrap();
        assert_eq!(tc.resolved_path, "/pets/a%2Fb");
    }

    #[test]
    fn missing_required_parameter() {
        let o = op("/pets/{id}", vec![param("id", ParamLocation::Path, false)]);
        assert_eq!(
            build_test_case(&o, Inputs::default(), None, Intent::Positive, &Serialisers::default()),
            Err(TransportError::MissingRequiredParameter("id".into()))
        );
    }

    #[test]
    fn header_injection_is_refused() {
        let o = op("/", vec![param("X-Token", ParamLocation::Header, false)]);
        let mut inputs = Inputs::default();
        inputs.header.insert("X-Token".into(), json!("a\r\nInjected: 1"));
        assert!(matches!(
            build_test_case(&o, inputs, None, Intent::Positive, &Serialisers::default()),
            Err(TransportError::UnencodableValue(_))
        ));
    }

    #[test]
    fn query_styles() {
        assert_eq!(
            query_pairs("ids", &json!([1, 2]), false, false),
            vec![("ids".to_string(), "1,2".to_string())]
        );
        assert_eq!(query_pairs("ids", &json!([1, 2]), true, false).len(), 2);
        let o = op("/s", vec![param("q", ParamLocation::Query, true)]);
        let mut inputs = Inputs::default();
        inputs.query.insert("q".into(), json!("a b&c"));
        let tc = build_test_case(&o, inputs, None, Intent::Positive, &Serialisers::default()).unwrap();
        assert_eq!(tc.target(), "/s?q=a+b%26c");
    }

    #[test]
    fn body_serialisers() {
        assert_eq!(serialise_body("application/json", &json!({"a": 1})).unwrap(), br#"{"a":1}"#);
        assert_eq!(
            serialise_body("application/x-www-form-urlencoded", &json!({"a": "b c"})).unwrap(),
            b"a=b+c"
        );
        assert_eq!(
            serialise_body("application/vnd.unknown", &json!(1)),
            Err(TransportError::UnknownMediaType("application/vnd.unknown".into()))
        );
        assert_eq!(serialise_body("text/plain; charset=utf-8", &json!("hi")).unwrap(), b"hi");
        let mp = String::from_utf8(serialise_body("multipart/form-data", &json!({"f": "x"})).unwrap()).unwrap();
        assert!(mp.contains("name=\"f\"\r\n\r\nx\r\n"));
        assert!(mp.ends_with(&format!("--{MULTIPART_BOUNDARY}--\r\n")));
    }

    #[test]
    fn custom_serialiser_wins() {
        let mut s = Serialisers::default();
        assert!(!s.supports("application/xml"));
        s.register("application/xml", Arc::new(|_| Ok(b"<x/>".to_vec())));
        assert!(s.supports("application/xml; charset=utf-8"));
        assert_eq!(s.serialise("application/xml", &json!(null)).unwrap(), b"<x/>");
    }

    #[test]
    fn curl_line_quotes() {
        let o = op("/a", vec![param("q", ParamLocation::Query, true)]);
        let mut inputs = Inputs::default();
        inputs.query.insert("q".into(), json!("it's"));
        let tc = build_test_case(&o, inputs, None, Intent::Positive, &Serialisers::default()).unwrap();
        let line = tc.curl("http://localhost:8080/api");
        assert!(line.starts_with("curl -X GET 'http://localhost:8080/api/a?q=it%27s'"), "{line}");
    }

    #[test]
    fn base_url_parsing() {
        assert_eq!(split_base("http://h:1/x/y"), ("http://h:1", "/x/y"));
        assert_eq!(split_base("http://h:1"), ("http://h:1", ""));
        assert!(matches!(endpoint("https://h"), Err(TransportError::Tls(_))));
        assert!(matches!(endpoint("nope"), Err(TransportError::InvalidBaseUrl(_))));
    }
}
