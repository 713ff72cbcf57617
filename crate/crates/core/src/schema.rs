//! Loading OpenAPI 2.0 and 3.x documents and extracting operations.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::json::escape_pointer_token;

/// Default number of times one reference target may appear on the path
/// from the root during inlining.
pub const DEFAULT_RECURSION_DEPTH: usize = 3;

/// Upper bound on the size of a resolved operation, in JSON nodes.
const MAX_RESOLVED_NODES: usize = 2_000_000;

/// Marker left in place of a reference that could not be resolved.
pub const UNRESOLVED_MARKER: &str = "x-schemafuzz-unresolved";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("parse error at line {line}, column {column}: {message}")]
    ParseError { message: String, line: usize, column: usize },
    #[error("unsupported document version: {0}")]
    UnsupportedVersion(String),
    #[error("remote reference `{0}` is not supported")]
    RemoteRef(String),
    #[error("reference `{0}` does not resolve")]
    DanglingRef(String),
    #[error("resolved document exceeds {0} nodes")]
    TooLarge(usize),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpecVersion {
    Swagger2,
    OpenApi30,
    OpenApi31,
}

/// A parsed API description.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub version: SpecVersion,
    pub root: Value,
    /// True once `$ref`s under `paths` have been inlined.
    pub resolved: bool,
}

/// Parses a JSON or YAML document and detects its version.
pub fn load_document(text: &str) -> Result<Document, SchemaError> {
    let trimmed = text.trim_start_matches('\u{feff}').trim_start();
    let root: Value = if trimmed.starts_with('{') {
        serde_json::from_str(trimmed).map_err(|e| SchemaError::ParseError {
            message: e.to_string(),
            line: e.line(),
            column: e.column(),
        })?
    } else {
        let y: serde_yaml::Value = serde_yaml::from_str(trimmed).map_err(|e| {
            let (line, column) = e.location().map(|l| (l.line(), l.column())).unwrap_or((0, 0));
            SchemaError::ParseError {
                message: e.to_string(),
                line,
                column,
            }
        })?;
        yaml_to_json(y)?
    };
    let version = detect_version(&root)?;
    Ok(Document {
        version,
        root,
        resolved: false,
    })
}

fn detect_version(root: &Value) -> Result<SpecVersion, SchemaError> {
    let obj = root
        .as_object()
        .ok_or_else(|| SchemaError::InvalidDocument("top level is not an object".into()))?;
    if let Some(v) = obj.get("swagger") {
        let s = v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string());
        return if s == "2.0" {
            Ok(SpecVersion::Swagger2)
        } else {
            Err(SchemaError::UnsupportedVersion(format!("swagger {s}")))
        };
    }
    if let Some(v) = obj.get("openapi") {
        let s = v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string());
        return if s.starts_with("3.0") {
            Ok(SpecVersion::OpenApi30)
        } else if s.starts_with("3.1") {
            Ok(SpecVersion::OpenApi31)
        } else {
            Err(SchemaError::UnsupportedVersion(format!("openapi {s}")))
        };
    }
    Err(SchemaError::UnsupportedVersion("no `swagger` or `openapi` field".into()))
}

fn yaml_to_json(y: serde_yaml::Value) -> Result<Value, SchemaError> {
    use serde_yaml::Value as Y;
    Ok(match y {
        Y::Null => Value::Null,
        Y::Bool(b) => Value::Bool(b),
        Y::Number(n) => {
            if let Some(i) = n.as_i64() {
                Value::from(i)
            } else if let Some(u) = n.as_u64() {
                Value::from(u)
            } else {
                let f = n.as_f64().unwrap_or(f64::NAN);
                serde_json::Number::from_f64(f)
                    .map(Value::Number)
                    .ok_or_else(|| SchemaError::InvalidDocument(format!("non-finite number {f}")))?
            }
        }
        Y::String(s) => Value::String(s),
        Y::Sequence(items) => Value::Array(items.into_iter().map(yaml_to_json).collect::<Result<_, _>>()?),
        Y::Mapping(m) => {
            let mut out = Map::new();
            for (k, v) in m {
                let key = match k {
                    Y::String(s) => s,
                    Y::Number(n) => n.to_string(),
                    Y::Bool(b) => b.to_string(),
                    Y::Null => "null".into(),
                    other => return Err(SchemaError::InvalidDocument(format!("unsupported mapping key {other:?}"))),
                };
                out.insert(key, yaml_to_json(v)?);
            }
            Value::Object(out)
        }
        Y::Tagged(t) => yaml_to_json(t.value)?,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ResolveOptions {
    pub max_recursion: usize,
    /// Leave a marker instead of failing on remote or dangling references.
    pub lenient: bool,
}

impl Default for ResolveOptions {
    fn default() -> Self {
        ResolveOptions {
            max_recursion: DEFAULT_RECURSION_DEPTH,
            lenient: false,
        }
    }
}

/// Inlines every local `$ref` reachable from `paths`. A reference whose
/// target already occurs `max_recursion` times among its ancestors is
/// replaced by `false`, which cuts recursive structures at that depth.
pub fn resolve_references(doc: &Document, opts: ResolveOptions) -> Result<Document, SchemaError> {
    let mut root = doc.root.clone();
    if let Some(paths) = doc.root.get("paths") {
        let mut r = Resolver {
            root: &doc.root,
            opts,
            stack: Vec::new(),
            nodes: 0,
        };
        let resolved = r.walk(paths)?;
        root["paths"] = resolved;
    }
    Ok(Document {
        version: doc.version,
        root,
        resolved: true,
    })
}

struct Resolver<'a> {
    root: &'a Value,
    opts: ResolveOptions,
    stack: Vec<String>,
    nodes: usize,
}

/// Looks up a JSON pointer given as a URI fragment (`#/a/b`).
pub fn lookup_pointer<'v>(root: &'v Value, reference: &str) -> Option<&'v Value> {
    let frag = reference.strip_prefix('#')?;
    let decoded = percent_encoding::percent_decode_str(frag).decode_utf8().ok()?;
    if decoded.is_empty() {
        return Some(root);
    }
    let mut cur = root;
    for token in decoded.strip_prefix('/')?.split('/') {
        let t = token.replace("~1", "/").replace("~0", "~");
        cur = match cur {
            Value::Object(m) => m.get(&t)?,
            Value::Array(a) => a.get(t.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(cur)
}

impl Resolver<'_> {
    fn count(&mut self) -> Result<(), SchemaError> {
        self.nodes += 1;
        if self.nodes > MAX_RESOLVED_NODES {
            return Err(SchemaError::TooLarge(MAX_RESOLVED_NODES));
        }
        Ok(())
    }

    fn walk(&mut self, v: &Value) -> Result<Value, SchemaError> {
        self.count()?;
        match v {
            Value::Object(m) => {
                if let Some(Value::String(r)) = m.get("$ref") {
                    return self.reference(r, m);
                }
                let mut out = Map::new();
                for (k, sub) in m {
                    // Example payloads are data, not schema.
                    if k == "example" || k == "examples" {
                        out.insert(k.clone(), sub.clone());
                        continue;
                    }
                    out.insert(k.clone(), self.walk(sub)?);
                }
                Ok(Value::Object(out))
            }
            Value::Array(a) => Ok(Value::Array(a.iter().map(|x| self.walk(x)).collect::<Result<_, _>>()?)),
            other => Ok(other.clone()),
        }
    }

    fn reference(&mut self, r: &str, node: &Map<String, Value>) -> Result<Value, SchemaError> {
        if !r.starts_with('#') {
            if self.opts.lenient {
                return Ok(json!({ UNRESOLVED_MARKER: r }));
            }
            return Err(SchemaError::RemoteRef(r.to_string()));
        }
        let Some(target) = lookup_pointer(self.root, r) else {
            if self.opts.lenient {
                return Ok(json!({ UNRESOLVED_MARKER: r }));
            }
            return Err(SchemaError::DanglingRef(r.to_string()));
        };
        let seen = self.stack.iter().filter(|s| *s == r).count();
        if seen >= self.opts.max_recursion {
            return Ok(Value::Bool(false));
        }
        self.stack.push(r.to_string());
        let resolved = self.walk(target);
        self.stack.pop();
        let resolved = resolved?;
        let siblings: Map<String, Value> = node
            .iter()
            .filter(|(k, _)| !matches!(k.as_str(), "$ref" | "description" | "summary" | "title"))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        if siblings.is_empty() {
            return Ok(resolved);
        }
        let siblings = self.walk(&Value::Object(siblings))?;
        Ok(json!({"allOf": [resolved, siblings]}))
    }
}

fn contains_marker(v: &Value) -> bool {
    match v {
        Value::Object(m) => m.contains_key(UNRESOLVED_MARKER) || m.values().any(contains_marker),
        Value::Array(a) => a.iter().any(contains_marker),
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamLocation {
    Path,
    Query,
    Header,
    Cookie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub location: ParamLocation,
    pub required: bool,
    pub schema: Value,
    /// Arrays and objects are sent as repeated keys rather than joined.
    pub explode: bool,
    /// Sent as a JSON document (parameters described by `content`).
    pub json_encoded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaBody {
    pub media_type: String,
    pub schema: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestBody {
    pub required: bool,
    pub content: Vec<MediaBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaderSpec {
    pub required: bool,
    pub schema: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub operation_id: Option<String>,
    pub operation_ref: Option<String>,
    /// Target parameter name to runtime expression (or literal).
    pub parameters: BTreeMap<String, Value>,
    pub request_body: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ResponseSpec {
    /// Media type to schema (`None` when the media type has no schema).
    pub content: BTreeMap<String, Option<Value>>,
    pub headers: BTreeMap<String, HeaderSpec>,
    pub links: BTreeMap<String, Link>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operation {
    /// `operationId`, or `METHOD path` when absent.
    pub id: String,
    pub method: String,
    pub path: String,
    pub parameters: Vec<Parameter>,
    pub body: Option<RequestBody>,
    /// Keyed by status code, `NXX` range or `default`.
    pub responses: BTreeMap<String, ResponseSpec>,
}

impl Operation {
    /// `METHOD path`, used in reports.
    pub fn label(&self) -> String {
        format!("{} {}", self.method, self.path)
    }

    pub fn path_params(&self) -> impl Iterator<Item = &Parameter> {
        self.parameters.iter().filter(|p| p.location == ParamLocation::Path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedOperation {
    pub method: String,
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extraction {
    pub operations: Vec<Operation>,
    pub skipped: Vec<SkippedOperation>,
    pub warnings: Vec<String>,
}

const METHODS: &[&str] = &["get", "put", "post", "delete", "options", "head", "patch", "trace"];

/// Extracts operations. Documents that have not been resolved are resolved
/// leniently; operations touching unresolvable references are skipped.
pub fn extract_operations(doc: &Document) -> Result<Extraction, SchemaError> {
    let resolved;
    let doc = if doc.resolved {
        doc
    } else {
        resolved = resolve_references(
            doc,
            ResolveOptions {
                lenient: true,
                ..Default::default()
            },
        )?;
        &resolved
    };
    let mut out = Extraction::default();
    let Some(paths) = doc.root.get("paths").and_then(Value::as_object) else {
        return Ok(out);
    };
    let swagger = doc.version == SpecVersion::Swagger2;
    let global_consumes = string_list(doc.root.get("consumes"));
    let global_produces = string_list(doc.root.get("produces"));
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();
    for (path, item) in paths {
        let Some(item) = item.as_object() else { continue };
        let shared = item.get("parameters").and_then(Value::as_array).cloned().unwrap_or_default();
        for method in METHODS {
            let Some(op) = item.get(*method).and_then(Value::as_object) else {
                continue;
            };
            let upper = method.to_uppercase();
            let skip = |reason: String, out: &mut Extraction| {
                out.skipped.push(SkippedOperation {
                    method: upper.clone(),
                    path: path.clone(),
                    reason,
                })
            };
            if contains_marker(&Value::Object(op.clone())) || shared.iter().any(contains_marker) {
                skip("unresolvable reference".into(), &mut out);
                continue;
            }
            let ctx = OpContext {
                swagger,
                consumes: string_list(op.get("consumes")).or_else(|| global_consumes.clone()),
                produces: string_list(op.get("produces")).or_else(|| global_produces.clone()),
            };
            match build_operation(path, &upper, op, &shared, &ctx, &mut out.warnings) {
                Ok(mut operation) => {
                    if !seen_ids.insert(operation.id.clone()) {
                        out.warnings
                            .push(format!("duplicate operationId `{}`; using `{}`", operation.id, operation.label()));
                        operation.id = operation.label();
                        seen_ids.insert(operation.id.clone());
                    }
                    out.operations.push(operation);
                }
                Err(reason) => skip(reason, &mut out),
            }
        }
    }
    Ok(out)
}

fn string_list(v: Option<&Value>) -> Option<Vec<String>> {
    let a = v?.as_array()?;
    let list: Vec<String> = a.iter().filter_map(|x| x.as_str().map(str::to_string)).collect();
    (!list.is_empty()).then_some(list)
}

struct OpContext {
    swagger: bool,
    consumes: Option<Vec<String>>,
    produces: Option<Vec<String>>,
}

fn build_operation(
    path: &str,
    method: &str,
    op: &Map<String, Value>,
    shared: &[Value],
    ctx: &OpContext,
    warnings: &mut Vec<String>,
) -> Result<Operation, String> {
    let label = format!("{method} {path}");
    let id = op
        .get("operationId")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| label.clone());
    // Operation-level parameters override path-level ones with the same name and location.
    let mut raw_params: Vec<&Value> = Vec::new();
    let own = op.get("parameters").and_then(Value::as_array);
    let key = |p: &Value| {
        (
            p.get("name").and_then(Value::as_str).unwrap_or("").to_string(),
            p.get("in").and_then(Value::as_str).unwrap_or("").to_string(),
        )
    };
    let own_keys: BTreeSet<(String, String)> = own.into_iter().flatten().map(key).collect();
    for p in shared {
        if !own_keys.contains(&key(p)) {
            raw_params.push(p);
        }
    }
    raw_params.extend(own.into_iter().flatten());

    let mut parameters = Vec::new();
    let mut body: Option<RequestBody> = None;
    let mut form_fields: Vec<(String, bool, Value)> = Vec::new();
    for p in raw_params {
        let name = p
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| "parameter without a name".to_string())?;
        let location = p.get("in").and_then(Value::as_str).unwrap_or("");
        let required = p.get("required").and_then(Value::as_bool).unwrap_or(false);
        match location {
            "body" => {
                let schema = convert_schema(p.get("schema").cloned().unwrap_or(Value::Bool(true)));
                let media = ctx.consumes.clone().unwrap_or_else(|| vec!["application/json".into()]);
                body = Some(RequestBody {
                    required,
                    content: media
                        .into_iter()
                        .map(|m| MediaBody {
                            media_type: m,
                            schema: schema.clone(),
                        })
                        .collect(),
                });
                continue;
            }
            "formData" => {
                form_fields.push((name.to_string(), required, convert_schema(swagger_param_schema(p))));
                continue;
            }
            _ => {}
        }
        let location = match location {
            "path" => ParamLocation::Path,
            "query" => ParamLocation::Query,
            "header" => ParamLocation::Header,
            "cookie" => ParamLocation::Cookie,
            other => return Err(format!("parameter `{name}` has unknown location `{other}`")),
        };
        if location == ParamLocation::Header
            && ["accept", "content-type", "authorization"].contains(&name.to_ascii_lowercase().as_str())
        {
            continue;
        }
        let (schema, json_encoded) = if ctx.swagger {
            (swagger_param_schema(p), false)
        } else if let Some(s) = p.get("schema") {
            (s.clone(), false)
        } else if let Some(content) = p.get("content").and_then(Value::as_object) {
            let s = content
                .values()
                .next()
                .and_then(|m| m.get("schema"))
                .cloned()
                .unwrap_or(Value::Bool(true));
            (s, true)
        } else {
            (json!({"type": "string"}), false)
        };
        let explode = if ctx.swagger {
            p.get("collectionFormat").and_then(Value::as_str) == Some("multi")
        } else {
            p.get("explode").and_then(Value::as_bool).unwrap_or(matches!(
                location,
                ParamLocation::Query | ParamLocation::Cookie
            ) && p.get("style").and_then(Value::as_str).is_none_or(|s| s == "form"))
        };
        parameters.push(Parameter {
            name: name.to_string(),
            location,
            required: required || location == ParamLocation::Path,
            schema: convert_schema(schema),
            explode,
            json_encoded,
        });
    }
    if !form_fields.is_empty() {
        let media = ctx
            .consumes
            .clone()
            .filter(|c| c.iter().any(|m| m.contains("form")))
            .unwrap_or_else(|| vec!["application/x-www-form-urlencoded".into()]);
        let mut props = Map::new();
        let mut required = Vec::new();
        for (name, req, schema) in &form_fields {
            props.insert(name.clone(), schema.clone());
            if *req {
                required.push(Value::String(name.clone()));
            }
        }
        let schema = json!({"type": "object", "properties": props, "required": required});
        body = Some(RequestBody {
            required: !required.is_empty(),
            content: media
                .into_iter()
                .filter(|m| m.contains("form"))
                .map(|m| MediaBody {
                    media_type: m,
                    schema: schema.clone(),
                })
                .collect(),
        });
    }
    if let Some(rb) = op.get("requestBody").and_then(Value::as_object) {
        let required = rb.get("required").and_then(Value::as_bool).unwrap_or(false);
        let mut content = Vec::new();
        if let Some(c) = rb.get("content").and_then(Value::as_object) {
            for (media, m) in c {
                let schema = m.get("schema").cloned().unwrap_or(Value::Bool(true));
                content.push(MediaBody {
                    media_type: media.clone(),
                    schema: convert_schema(schema),
                });
            }
        }
        if !content.is_empty() {
            body = Some(RequestBody { required, content });
        }
    }
    // Template parameters that were never declared get a string schema.
    for name in template_names(path) {
        let declared = parameters
            .iter()
            .any(|p| p.location == ParamLocation::Path && p.name == name);
        if !declared {
            warnings.push(format!("{label}: path parameter `{name}` is not declared; assuming a string"));
            parameters.push(Parameter {
                name,
                location: ParamLocation::Path,
                required: true,
                schema: json!({"type": "string", "minLength": 1}),
                explode: false,
                json_encoded: false,
            });
        }
    }
    let mut responses = BTreeMap::new();
    if let Some(rs) = op.get("responses").and_then(Value::as_object) {
        for (status, r) in rs {
            responses.insert(status.to_uppercase().replace("DEFAULT", "default"), response_spec(r, ctx));
        }
    }
    Ok(Operation {
        id,
        method: method.to_string(),
        path: path.to_string(),
        parameters,
        body,
        responses,
    })
}

/// Names of `{param}` segments in a path template.
pub fn template_names(path: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = path;
    while let Some(start) = rest.find('{') {
        let Some(end) = rest[start..].find('}') else { break };
        out.push(rest[start + 1..start + end].to_string());
        rest = &rest[start + end + 1..];
    }
    out
}

fn response_spec(r: &Value, ctx: &OpContext) -> ResponseSpec {
    let mut spec = ResponseSpec::default();
    if ctx.swagger {
        if let Some(schema) = r.get("schema") {
            let schema = convert_schema(schema.clone());
            let media = ctx.produces.clone().unwrap_or_else(|| vec!["application/json".into()]);
            for m in media {
                spec.content.insert(m, Some(schema.clone()));
            }
        }
    } else if let Some(c) = r.get("content").and_then(Value::as_object) {
        for (media, m) in c {
            spec.content
                .insert(media.clone(), m.get("schema").cloned().map(convert_schema));
        }
    }
    if let Some(h) = r.get("headers").and_then(Value::as_object) {
        for (name, hv) in h {
            let schema = if ctx.swagger {
                swagger_param_schema(hv)
            } else {
                hv.get("schema").cloned().unwrap_or(Value::Bool(true))
            };
            spec.headers.insert(
                name.clone(),
                HeaderSpec {
                    required: hv.get("required").and_then(Value::as_bool).unwrap_or(false),
                    schema: convert_schema(schema),
                },
            );
        }
    }
    if let Some(links) = r.get("links").and_then(Value::as_object) {
        for (name, l) in links {
            let parameters = l
                .get("parameters")
                .and_then(Value::as_object)
                .map(|m| m.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
                .unwrap_or_default();
            spec.links.insert(
                name.clone(),
                Link {
                    operation_id: l.get("operationId").and_then(Value::as_str).map(str::to_string),
                    operation_ref: l.get("operationRef").and_then(Value::as_str).map(str::to_string),
                    parameters,
                    request_body: l.get("requestBody").cloned(),
                },
            );
        }
    }
    spec
}

/// Swagger 2 non-body parameters carry their schema inline.
fn swagger_param_schema(p: &Value) -> Value {
    if let Some(s) = p.get("schema") {
        return s.clone();
    }
    let mut m = Map::new();
    let Some(obj) = p.as_object() else {
        return Value::Bool(true);
    };
    for (k, v) in obj {
        match k.as_str() {
            "type" | "format" | "items" | "enum" | "minimum" | "maximum" | "exclusiveMinimum"
            | "exclusiveMaximum" | "multipleOf" | "minLength" | "maxLength" | "pattern" | "minItems"
            | "maxItems" | "uniqueItems" | "x-nullable" => {
                let v = if k == "items" { swagger_param_schema(v) } else { v.clone() };
                m.insert(k.clone(), v);
            }
            _ => {}
        }
    }
    Value::Object(m)
}

/// Converts OpenAPI schema dialect to plain JSON Schema: `nullable` adds
/// `null` to the type, and the Swagger `file` type becomes a string.
pub fn convert_schema(v: Value) -> Value {
    let Value::Object(mut m) = v else { return v };
    let nullable = m.remove("nullable").and_then(|x| x.as_bool()).unwrap_or(false)
        | m.remove("x-nullable").and_then(|x| x.as_bool()).unwrap_or(false);
    if m.get("type").and_then(Value::as_str) == Some("file") {
        m.insert("type".into(), json!("string"));
        m.remove("format");
    }
    for key in ["items", "additionalProperties", "not", "contains"] {
        if let Some(sub) = m.remove(key) {
            let converted = if key == "items" {
                match sub {
                    Value::Array(a) => Value::Array(a.into_iter().map(convert_schema).collect()),
                    other => convert_schema(other),
                }
            } else {
                convert_schema(sub)
            };
            m.insert(key.into(), converted);
        }
    }
    for key in ["allOf", "anyOf", "oneOf"] {
        if let Some(Value::Array(a)) = m.remove(key) {
            m.insert(key.into(), Value::Array(a.into_iter().map(convert_schema).collect()));
        }
    }
    if let Some(Value::Object(props)) = m.remove("properties") {
        let props: Map<String, Value> = props.into_iter().map(|(k, v)| (k, convert_schema(v))).collect();
        m.insert("properties".into(), Value::Object(props));
    }
    if nullable {
        match m.get_mut("type") {
            Some(Value::String(t)) => {
                let t = t.clone();
                m.insert("type".into(), json!([t, "null"]));
            }
            Some(Value::Array(a))
                if !a.contains(&json!("null")) => {
                    a.push(json!("null"));
                }
            _ => {}
        }
        if let Some(Value::Array(e)) = m.get_mut("enum") {
            if !e.contains(&Value::Null) {
                e.push(Value::Null);
            }
        }
        // A nullable composition accepts null in addition to its branches.
        if !m.contains_key("type") && (m.contains_key("allOf") || m.contains_key("oneOf") || m.contains_key("anyOf")) {
            return json!({"anyOf": [Value::Object(m), {"type": "null"}]});
        }
    }
    Value::Object(m)
}

/// One edge of the link graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkEdge {
    pub source: String,
    pub status: String,
    pub name: String,
    pub target: String,
    pub parameters: BTreeMap<String, Value>,
    pub request_body: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkGraph {
    pub edges: Vec<LinkEdge>,
    /// Links whose target operation does not exist.
    pub dangling: Vec<String>,
}

impl LinkGraph {
    pub fn outgoing<'a>(&'a self, source: &'a str) -> impl Iterator<Item = &'a LinkEdge> + 'a {
        self.edges.iter().filter(move |e| e.source == source)
    }
}

/// Builds the graph of response links between operations.
pub fn extract_link_graph(operations: &[Operation]) -> LinkGraph {
    let mut g = LinkGraph::default();
    for op in operations {
        for (status, r) in &op.responses {
            for (name, link) in &r.links {
                let target = if let Some(id) = &link.operation_id {
                    operations.iter().find(|o| &o.id == id)
                } else if let Some(r) = &link.operation_ref {
                    operations.iter().find(|o| operation_ref_matches(r, o))
                } else {
                    None
                };
                match target {
                    Some(t) => g.edges.push(LinkEdge {
                        source: op.id.clone(),
                        status: status.clone(),
                        name: name.clone(),
                        target: t.id.clone(),
                        parameters: link.parameters.clone(),
                        request_body: link.request_body.clone(),
                    }),
                    None => g.dangling.push(format!("{} {status} {name}", op.id)),
                }
            }
        }
    }
    g
}

fn operation_ref_matches(r: &str, op: &Operation) -> bool {
    let expected = format!(
        "#/paths/{}/{}",
        escape_pointer_token(&op.path),
        op.method.to_lowercase()
    );
    let decoded = percent_encoding::percent_decode_str(r).decode_utf8_lossy();
    r == expected || decoded == expected || decoded.ends_with(&expected[1..])
}
