//! Response checks and defect keys.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::http::HttpResponse;
use crate::schema::{Operation, ResponseSpec};
use crate::transport::{media_essence, Intent, TestCase};
use crate::validate::validate_instance;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CheckKind {
    ServerError,
    StatusCodeConformance,
    ContentTypeConformance,
    ResponseSchemaConformance,
    MissingRequiredHeader,
    EmptyBodyOn200,
    NonemptyBodyOn204205,
    AllowHeaderOn405,
    NegativeRequestAccepted,
    UseAfterFree,
    ResourceLeak,
    ResponseTimeExceeded,
    AmplificationExceeded,
    /// A user-supplied check, identified by name.
    Custom(String),
}

const NAMES: &[(&str, CheckKind)] = &[
    ("server_error", CheckKind::ServerError),
    ("status_code_conformance", CheckKind::StatusCodeConformance),
    ("content_type_conformance", CheckKind::ContentTypeConformance),
    ("response_schema_conformance", CheckKind::ResponseSchemaConformance),
    ("missing_required_header", CheckKind::MissingRequiredHeader),
    ("empty_body_on_200", CheckKind::EmptyBodyOn200),
    ("nonempty_body_on_204_205", CheckKind::NonemptyBodyOn204205),
    ("allow_header_on_405", CheckKind::AllowHeaderOn405),
    ("negative_request_accepted", CheckKind::NegativeRequestAccepted),
    ("use_after_free", CheckKind::UseAfterFree),
    ("resource_leak", CheckKind::ResourceLeak),
    ("response_time_exceeded", CheckKind::ResponseTimeExceeded),
    ("amplification_exceeded", CheckKind::AmplificationExceeded),
];

impl CheckKind {
    pub fn name(&self) -> String {
        match self {
            CheckKind::Custom(n) => format!("custom:{n}"),
            k => NAMES.iter().find(|(_, v)| v == k).map(|(n, _)| n.to_string()).unwrap_or_default(),
        }
    }

    /// Checks that need a sequence of requests.
    pub fn is_sequence(&self) -> bool {
        matches!(self, CheckKind::UseAfterFree | CheckKind::ResourceLeak)
    }

    pub fn builtins() -> impl Iterator<Item = CheckKind> {
        NAMES.iter().map(|(_, k)| k.clone())
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown check `{0}`")]
pub struct UnknownCheck(pub String);

impl FromStr for CheckKind {
    type Err = UnknownCheck;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(n) = s.strip_prefix("custom:") {
            return Ok(CheckKind::Custom(n.to_string()));
        }
        NAMES
            .iter()
            .find(|(n, _)| *n == s)
            .map(|(_, k)| k.clone())
            .ok_or_else(|| UnknownCheck(s.to_string()))
    }
}

impl Serialize for CheckKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for CheckKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A set of enabled checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckSet(pub BTreeSet<CheckKind>);

impl CheckSet {
    pub fn default_set() -> Self {
        use CheckKind::*;
        CheckSet(
            [ServerError, StatusCodeConformance, ContentTypeConformance, ResponseSchemaConformance]
                .into_iter()
                .collect(),
        )
    }

    /// Every check that is not opt-in: the default checks, the stricter
    /// HTTP checks, negative testing and the sequence rules.
    pub fn all() -> Self {
        use CheckKind::*;
        let mut s = Self::default_set();
        s.0.extend([
            MissingRequiredHeader,
            EmptyBodyOn200,
            NonemptyBodyOn204205,
            AllowHeaderOn405,
            NegativeRequestAccepted,
            UseAfterFree,
            ResourceLeak,
        ]);
        s
    }

    pub fn negative() -> Self {
        CheckSet([CheckKind::NegativeRequestAccepted, CheckKind::ServerError].into_iter().collect())
    }

    pub fn performance() -> Self {
        CheckSet(
            [CheckKind::ResponseTimeExceeded, CheckKind::AmplificationExceeded]
                .into_iter()
                .collect(),
        )
    }

    /// Parses `default`, `all`, `negative`, `performance` or a comma list
    /// mixing those with individual check names.
    pub fn parse(spec: &str) -> Result<Self, UnknownCheck> {
        let mut out = BTreeSet::new();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "default" => out.extend(Self::default_set().0),
                "all" => out.extend(Self::all().0),
                "negative" => out.extend(Self::negative().0),
                "performance" => out.extend(Self::performance().0),
                name => {
                    out.insert(name.parse()?);
                }
            }
        }
        Ok(CheckSet(out))
    }

    pub fn contains(&self, k: &CheckKind) -> bool {
        self.0.contains(k)
    }

    pub fn wants_negative(&self) -> bool {
        self.contains(&CheckKind::NegativeRequestAccepted)
    }

    pub fn wants_sequences(&self) -> bool {
        self.0.iter().any(CheckKind::is_sequence)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub request: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub kind: CheckKind,
    pub passed: bool,
    pub operation: String,
    /// Human-readable explanation; non-empty for failures.
    pub detail: String,
    /// Stable grouping class for deduplication.
    pub class: String,
    pub evidence: Evidence,
}

/// What makes two failures the same defect.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DefectKey {
    pub kind: CheckKind,
    pub operation: String,
    pub class: String,
}

impl fmt::Display for DefectKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.class.is_empty() {
            write!(f, "{} @ {}", self.kind, self.operation)
        } else {
            write!(f, "{} @ {} [{}]", self.kind, self.operation, self.class)
        }
    }
}

/// Class given to 404s on operations whose path is generated.
pub const UNEXPECTED_404: &str = "unexpected 404";

/// Groups a failure. Unexpected 404s on generated paths all map to one key
/// regardless of operation.
pub fn defect_key(cr: &CheckResult) -> DefectKey {
    let operation = if cr.kind == CheckKind::StatusCodeConformance && cr.class == UNEXPECTED_404 {
        "*".to_string()
    } else {
        cr.operation.clone()
    };
    DefectKey {
        kind: cr.kind.clone(),
        operation,
        class: cr.class.clone(),
    }
}

/// A user-defined check. Returns a failure detail, or `None` to pass.
pub trait CustomCheck: Send + Sync {
    fn name(&self) -> &str;
    fn check(&self, tc: &TestCase, resp: &HttpResponse, op: &Operation) -> Option<String>;
}

/// Checks plus their thresholds.
#[derive(Clone)]
pub struct Checker {
    pub set: CheckSet,
    pub max_response_time: Duration,
    pub max_amplification: f64,
    pub custom: Vec<Arc<dyn CustomCheck>>,
}

impl fmt::Debug for Checker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Checker")
            .field("set", &self.set)
            .field("max_response_time", &self.max_response_time)
            .field("max_amplification", &self.max_amplification)
            .field("custom", &self.custom.iter().map(|c| c.name().to_string()).collect::<Vec<_>>())
            .finish()
    }
}

impl Checker {
    pub fn new(set: CheckSet) -> Self {
        Checker {
            set,
            max_response_time: Duration::from_secs(1),
            max_amplification: 100.0,
            custom: Vec::new(),
        }
    }

    /// Runs every applicable single-response check.
    pub fn run(&self, tc: &TestCase, resp: &HttpResponse, op: &Operation) -> Vec<CheckResult> {
        let mut out = Vec::new();
        let ev = evidence(tc, resp);
        let mut push = |kind: CheckKind, outcome: Option<(String, String)>| {
            let (passed, detail, class) = match outcome {
                None => (true, String::new(), String::new()),
                Some((d, c)) => (false, d, c),
            };
            out.push(CheckResult {
                kind,
                passed,
                operation: op.id.clone(),
                detail,
                class,
                evidence: ev.clone(),
            });
        };
        let matched = matched_response(op, resp.status);
        for kind in &self.set.0 {
            let outcome = match kind {
                CheckKind::ServerError => Some(server_error(resp)),
                CheckKind::StatusCodeConformance => Some(status_code(op, resp, matched.is_some())),
                CheckKind::ContentTypeConformance => matched.and_then(|m| content_type(m, resp)),
                CheckKind::ResponseSchemaConformance => matched.and_then(|m| response_schema(m, resp)),
                CheckKind::MissingRequiredHeader => matched.map(|m| missing_header(m, resp)),
                CheckKind::EmptyBodyOn200 => (resp.status == 200).then(|| {
                    resp.body
                        .is_empty()
                        .then(|| ("200 response with an empty body".to_string(), String::new()))
                }),
                CheckKind::NonemptyBodyOn204205 => matches!(resp.status, 204 | 205).then(|| {
                    (!resp.body.is_empty()).then(|| {
                        (
                            format!("{} response with a {}-byte body", resp.status, resp.body.len()),
                            format!("status {}", resp.status),
                        )
                    })
                }),
                CheckKind::AllowHeaderOn405 => (resp.status == 405).then(|| {
                    resp.header("allow")
                        .is_none()
                        .then(|| ("405 response without an Allow header".to_string(), String::new()))
                }),
                CheckKind::NegativeRequestAccepted => (tc.intent == Intent::Negative).then(|| {
                    (200..300).contains(&resp.status).then(|| {
                        let what = tc.provenance.as_deref().unwrap_or("request");
                        (
                            format!("schema-violating {what} accepted with status {}", resp.status),
                            String::new(),
                        )
                    })
                }),
                CheckKind::ResponseTimeExceeded => Some((resp.elapsed > self.max_response_time).then(|| {
                    (
                        format!(
                            "response took {} ms, limit {} ms",
                            resp.elapsed.as_millis(),
                            self.max_response_time.as_millis()
                        ),
                        String::new(),
                    )
                })),
                CheckKind::AmplificationExceeded => {
                    let sent = crate::http::render_request(&tc.to_http(""), "").len().max(1);
                    let ratio = resp.body.len() as f64 / sent as f64;
                    Some((ratio > self.max_amplification).then(|| {
                        (
                            format!(
                                "{} response bytes for {sent} request bytes (ratio {ratio:.1}, limit {})",
                                resp.body.len(),
                                self.max_amplification
                            ),
                            String::new(),
                        )
                    }))
                }
                CheckKind::UseAfterFree | CheckKind::ResourceLeak | CheckKind::Custom(_) => None,
            };
            if let Some(o) = outcome {
                push(kind.clone(), o);
            }
        }
        for c in &self.custom {
            let failure = c.check(tc, resp, op).map(|d| {
                let d = if d.is_empty() { "custom check failed".to_string() } else { d };
                (d, String::new())
            });
            push(CheckKind::Custom(c.name().to_string()), failure);
        }
        out
    }
}

/// Runs `set` with default thresholds.
pub fn run_checks(tc: &TestCase, resp: &HttpResponse, op: &Operation, set: &CheckSet) -> Vec<CheckResult> {
    Checker::new(set.clone()).run(tc, resp, op)
}

fn evidence(tc: &TestCase, resp: &HttpResponse) -> Evidence {
    let mut body = String::from_utf8_lossy(&resp.body).into_owned();
    if body.len() > 200 {
        let cut = (0..=200).rev().find(|i| body.is_char_boundary(*i)).unwrap_or(0);
        body.truncate(cut);
        body.push_str("...");
    }
    Evidence {
        request: format!("{} {}", tc.method, tc.target()),
        response: format!("{} {}", resp.status, body).trim_end().to_string(),
    }
}

/// Exact status first, then `4XX`-style ranges, then `default`.
pub fn matched_response(op: &Operation, status: u16) -> Option<&ResponseSpec> {
    matched_response_key(op, status).map(|k| &op.responses[k])
}

/// Key of the declared response that `status` falls under.
pub fn matched_response_key(op: &Operation, status: u16) -> Option<&str> {
    let exact = status.to_string();
    let range = format!("{}XX", status / 100);
    op.responses
        .keys()
        .find(|k| **k == exact)
        .or_else(|| op.responses.keys().find(|k| k.eq_ignore_ascii_case(&range)))
        .or_else(|| op.responses.keys().find(|k| *k == "default"))
        .map(String::as_str)
}

fn server_error(resp: &HttpResponse) -> Option<(String, String)> {
    (500..600).contains(&resp.status).then(|| {
        (
            format!("server error {}", resp.status),
            format!("status {}", resp.status),
        )
    })
}

fn status_code(op: &Operation, resp: &HttpResponse, matched: bool) -> Option<(String, String)> {
    if matched || op.responses.is_empty() {
        return None;
    }
    let declared: Vec<&str> = op.responses.keys().map(String::as_str).collect();
    let detail = format!("undeclared status {} (declared: {})", resp.status, declared.join(", "));
    let class = if resp.status == 404 && op.path.contains('{') {
        UNEXPECTED_404.to_string()
    } else {
        format!("status {}", resp.status)
    };
    Some((detail, class))
}

fn content_type(m: &ResponseSpec, resp: &HttpResponse) -> Option<Option<(String, String)>> {
    if m.content.is_empty() || resp.body.is_empty() {
        return None;
    }
    let Some(actual) = resp.header("content-type") else {
        return Some(Some(("response has no Content-Type".to_string(), "missing".to_string())));
    };
    let actual = media_essence(actual);
    let ok = m.content.keys().any(|declared| media_matches(&media_essence(declared), &actual));
    Some((!ok).then(|| {
        let declared: Vec<&str> = m.content.keys().map(String::as_str).collect();
        (
            format!("undeclared Content-Type `{actual}` (declared: {})", declared.join(", ")),
            actual.clone(),
        )
    }))
}

fn media_matches(declared: &str, actual: &str) -> bool {
    if declared == actual || declared == "*/*" {
        return true;
    }
    match declared.strip_suffix("/*") {
        Some(prefix) => actual.split('/').next() == Some(prefix),
        None => false,
    }
}

fn is_json(essence: &str) -> bool {
    essence == "application/json" || essence.ends_with("+json")
}

fn response_schema(m: &ResponseSpec, resp: &HttpResponse) -> Option<Option<(String, String)>> {
    let actual = resp.header("content-type").map(media_essence);
    let schema = match &actual {
        Some(a) => m
            .content
            .iter()
            .find(|(d, _)| media_matches(&media_essence(d), a))
            .and_then(|(_, s)| s.as_ref()),
        None if m.content.len() == 1 => m.content.values().next().and_then(Option::as_ref),
        None => None,
    }?;
    let treat_as_json = match &actual {
        Some(a) => is_json(a),
        None => m.content.keys().all(|d| is_json(&media_essence(d))),
    };
    if !treat_as_json {
        return None;
    }
    let body: Value = match serde_json::from_slice(&resp.body) {
        Ok(v) => v,
        Err(_) => return Some(Some(("unparseable body".to_string(), "unparseable body".to_string()))),
    };
    // Schemas the validator cannot judge are skipped rather than guessed.
    let result = validate_instance(schema, &body).ok()?;
    let first = result.violations.first();
    Some(first.map(|v| {
        (
            format!("response body violates `{}` at `{}`: {}", v.keyword, v.path, v.message),
            format!("{} at {}", v.keyword, collapse_indices(&body, &v.path)),
        )
    }))
}

/// Replaces array indices in a pointer into `doc` with `*`.
fn collapse_indices(doc: &Value, pointer: &str) -> String {
    let mut cur = Some(doc);
    let mut out = String::new();
    for token in pointer.split('/').skip(1) {
        out.push('/');
        match cur {
            Some(Value::Array(items)) => {
                out.push('*');
                cur = token.parse::<usize>().ok().and_then(|i| items.get(i));
            }
            Some(Value::Object(map)) => {
                out.push_str(token);
                let key = token.replace("~1", "/").replace("~0", "~");
                cur = map.get(&key);
            }
            _ => {
                out.push_str(token);
                cur = None;
            }
        }
    }
    out
}

fn missing_header(m: &ResponseSpec, resp: &HttpResponse) -> Option<(String, String)> {
    let missing: Vec<&str> = m
        .headers
        .iter()
        .filter(|(name, spec)| spec.required && resp.header(name).is_none())
        .map(|(name, _)| name.as_str())
        .collect();
    (!missing.is_empty()).then(|| {
        (
            format!("missing required header(s): {}", missing.join(", ")),
            missing.join(",").to_ascii_lowercase(),
        )
    })
}
