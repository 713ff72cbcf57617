//! Link-driven request sequences.
//!
//! Operations are the states of a machine whose transitions are the
//! response links of the schema. A sequence starts at an operation that
//! needs no bound input and then follows links, feeding values from earlier
//! responses into later requests. Two rules look across a whole sequence:
//! a resource must be gone after a successful DELETE, and must not exist
//! after a failed POST.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cases::{CaseContext, PreparedOperation};
use crate::choice::ChoiceSequence;
use crate::http::HttpResponse;
use crate::oracle::{matched_response_key, CheckKind, CheckResult, Checker, Evidence};
use crate::schema::{LinkGraph, ParamLocation};
use crate::transport::{Inputs, Intent, TestCase, Transport, TransportError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    Url,
    Method,
    StatusCode,
    RequestPath(String),
    RequestQuery(String),
    RequestHeader(String),
    RequestBody,
    ResponseHeader(String),
    ResponseBody,
}

/// A parsed OpenAPI runtime expression such as `$response.body#/id`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RuntimeExpression {
    pub source: Source,
    /// JSON pointer after `#`, kept in escaped form.
    pub pointer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExpressionError {
    #[error("invalid runtime expression at {position}: {message}")]
    InvalidExpression { position: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvaluationError {
    #[error("response body is not JSON")]
    BodyNotJson,
    #[error("nothing at `{0}`")]
    Missing(String),
}

fn invalid(position: usize, message: &str) -> ExpressionError {
    ExpressionError::InvalidExpression {
        position,
        message: message.to_string(),
    }
}

fn is_tchar(c: char) -> bool {
    c.is_ascii_alphanumeric() || "!#$%&'*+-.^_`|~".contains(c)
}

pub fn parse_runtime_expression(s: &str) -> Result<RuntimeExpression, ExpressionError> {
    let Some(rest) = s.strip_prefix('$') else {
        return Err(invalid(0, "expected `$`"));
    };
    match rest {
        "url" => return Ok(RuntimeExpression { source: Source::Url, pointer: None }),
        "method" => return Ok(RuntimeExpression { source: Source::Method, pointer: None }),
        "statusCode" => {
            return Ok(RuntimeExpression {
                source: Source::StatusCode,
                pointer: None,
            })
        }
        _ => {}
    }
    let (side, tail, offset) = if let Some(t) = rest.strip_prefix("request.") {
        (true, t, 9)
    } else if let Some(t) = rest.strip_prefix("response.") {
        (false, t, 10)
    } else {
        return Err(invalid(1, "expected `request.`, `response.`, `url`, `method` or `statusCode`"));
    };
    if let Some(after) = tail.strip_prefix("body") {
        let pointer = match after {
            "" => None,
            p => {
                let Some(ptr) = p.strip_prefix('#') else {
                    return Err(invalid(offset + 4, "expected `#` before the pointer"));
                };
                if !ptr.is_empty() && !ptr.starts_with('/') {
                    return Err(invalid(offset + 5, "JSON pointer must start with `/`"));
                }
                let bad_escape = ptr
                    .match_indices('~')
                    .find(|(i, _)| !matches!(ptr.as_bytes().get(i + 1), Some(b'0' | b'1')));
                if let Some((i, _)) = bad_escape {
                    return Err(invalid(offset + 5 + i, "`~` must be followed by 0 or 1"));
                }
                Some(ptr.to_string())
            }
        };
        let source = if side { Source::RequestBody } else { Source::ResponseBody };
        return Ok(RuntimeExpression { source, pointer });
    }
    let (kind, name) = tail
        .split_once('.')
        .ok_or_else(|| invalid(offset, "expected `body`, `header.`, `path.` or `query.`"))?;
    let name_at = offset + kind.len() + 1;
    if name.is_empty() {
        return Err(invalid(name_at, "empty name"));
    }
    let source = match (side, kind) {
        (_, "header") => {
            if let Some(i) = name.find(|c| !is_tchar(c)) {
                return Err(invalid(name_at + i, "invalid header name character"));
            }
            if side {
                Source::RequestHeader(name.to_string())
            } else {
                Source::ResponseHeader(name.to_string())
            }
        }
        (true, "path") => Source::RequestPath(name.to_string()),
        (true, "query") => Source::RequestQuery(name.to_string()),
        _ => return Err(invalid(offset, "unknown expression source")),
    };
    Ok(RuntimeExpression { source, pointer: None })
}

impl fmt::Display for RuntimeExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.source {
            Source::Url => f.write_str("$url"),
            Source::Method => f.write_str("$method"),
            Source::StatusCode => f.write_str("$statusCode"),
            Source::RequestPath(n) => write!(f, "$request.path.{n}"),
            Source::RequestQuery(n) => write!(f, "$request.query.{n}"),
            Source::RequestHeader(n) => write!(f, "$request.header.{n}"),
            Source::ResponseHeader(n) => write!(f, "$response.header.{n}"),
            Source::RequestBody | Source::ResponseBody => {
                let side = if self.source == Source::RequestBody { "request" } else { "response" };
                match &self.pointer {
                    Some(p) => write!(f, "${side}.body#{p}"),
                    None => write!(f, "${side}.body"),
                }
            }
        }
    }
}

fn header_value(headers: &[(String, String)], name: &str) -> Option<Value> {
    headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(name))
        .map(|(_, v)| Value::String(v.clone()))
}

fn at_pointer(doc: Value, pointer: &Option<String>, text: &str) -> Result<Value, EvaluationError> {
    match pointer {
        None => Ok(doc),
        Some(p) => doc.pointer(p).cloned().ok_or_else(|| EvaluationError::Missing(text.to_string())),
    }
}

pub fn evaluate_expression(e: &RuntimeExpression, tc: &TestCase, resp: &HttpResponse) -> Result<Value, EvaluationError> {
    let missing = || EvaluationError::Missing(e.to_string());
    match &e.source {
        Source::Url => Ok(Value::String(tc.target())),
        Source::Method => Ok(Value::String(tc.method.clone())),
        Source::StatusCode => Ok(Value::from(resp.status)),
        Source::RequestPath(n) => tc.inputs.path.get(n).cloned().ok_or_else(missing),
        Source::RequestQuery(n) => tc.inputs.query.get(n).cloned().ok_or_else(missing),
        Source::RequestHeader(n) => tc
            .inputs
            .header
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(n))
            .map(|(_, v)| v.clone())
            .or_else(|| header_value(&tc.headers, n))
            .ok_or_else(missing),
        Source::ResponseHeader(n) => header_value(&resp.headers, n).ok_or_else(missing),
        Source::RequestBody => {
            let body = tc.inputs.body.clone().ok_or_else(missing)?;
            at_pointer(body, &e.pointer, &e.to_string())
        }
        Source::ResponseBody => {
            let body: Value = serde_json::from_slice(&resp.body).map_err(|_| EvaluationError::BodyNotJson)?;
            at_pointer(body, &e.pointer, &e.to_string())
        }
    }
}

/// A link parameter value: an expression, a string with embedded
/// `{expression}` parts, or a constant.
#[derive(Debug, Clone, PartialEq)]
pub enum BindingValue {
    Expression(RuntimeExpression),
    Template(Vec<TemplatePart>),
    Literal(Value),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TemplatePart {
    Text(String),
    Expression(RuntimeExpression),
}

impl BindingValue {
    pub fn parse(v: &Value) -> Result<Self, ExpressionError> {
        let Value::String(s) = v else {
            return Ok(BindingValue::Literal(v.clone()));
        };
        if s.starts_with('$') {
            return Ok(BindingValue::Expression(parse_runtime_expression(s)?));
        }
        if !s.contains("{$") {
            return Ok(BindingValue::Literal(v.clone()));
        }
        let mut parts = Vec::new();
        let mut rest = s.as_str();
        let mut offset = 0;
        while let Some(start) = rest.find("{$") {
            if start > 0 {
                parts.push(TemplatePart::Text(rest[..start].to_string()));
            }
            let end = rest[start..]
                .find('}')
                .ok_or_else(|| invalid(offset + start, "unterminated `{`"))?;
            let expr = parse_runtime_expression(&rest[start + 1..start + end]).map_err(|e| match e {
                ExpressionError::InvalidExpression { position, message } => {
                    invalid(offset + start + 1 + position, &message)
                }
            })?;
            parts.push(TemplatePart::Expression(expr));
            offset += start + end + 1;
            rest = &rest[start + end + 1..];
        }
        if !rest.is_empty() {
            parts.push(TemplatePart::Text(rest.to_string()));
        }
        Ok(BindingValue::Template(parts))
    }

    pub fn evaluate(&self, tc: &TestCase, resp: &HttpResponse) -> Result<Value, EvaluationError> {
        match self {
            BindingValue::Literal(v) => Ok(v.clone()),
            BindingValue::Expression(e) => evaluate_expression(e, tc, resp),
            BindingValue::Template(parts) => {
                let mut out = String::new();
                for p in parts {
                    match p {
                        TemplatePart::Text(t) => out.push_str(t),
                        TemplatePart::Expression(e) => match evaluate_expression(e, tc, resp)? {
                            Value::String(s) => out.push_str(&s),
                            other => out.push_str(&other.to_string()),
                        },
                    }
                }
                Ok(Value::String(out))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Binding {
    pub location: ParamLocation,
    pub name: String,
    pub value: BindingValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Index of the source operation.
    pub source: usize,
    /// Response key (`201`, `2XX`, `default`) the link is declared under.
    pub status: String,
    pub name: String,
    pub target: usize,
    pub bindings: Vec<Binding>,
    pub body: Option<BindingValue>,
}

#[derive(Debug, Clone, Default)]
pub struct StateMachine {
    pub transitions: Vec<Transition>,
    /// Operations a sequence may start from.
    pub start: Vec<usize>,
    /// Links dropped because they could not be used, with the reason.
    pub dropped: Vec<String>,
}

impl StateMachine {
    pub fn new(ops: &[PreparedOperation], graph: &LinkGraph) -> Self {
        let index: BTreeMap<&str, usize> = ops.iter().enumerate().map(|(i, p)| (p.op.id.as_str(), i)).collect();
        let mut sm = StateMachine::default();
        for edge in &graph.edges {
            let (Some(&source), Some(&target)) = (index.get(edge.source.as_str()), index.get(edge.target.as_str()))
            else {
                sm.dropped.push(format!("{} -> {}: operation not tested", edge.source, edge.target));
                continue;
            };
            let target_op = &ops[target].op;
            let mut bindings = Vec::new();
            let mut problem = None;
            for (key, raw) in &edge.parameters {
                let (loc, name) = match key.split_once('.') {
                    Some(("path", n)) => (Some(ParamLocation::Path), n),
                    Some(("query", n)) => (Some(ParamLocation::Query), n),
                    Some(("header", n)) => (Some(ParamLocation::Header), n),
                    Some(("cookie", n)) => (Some(ParamLocation::Cookie), n),
                    _ => (None, key.as_str()),
                };
                let Some(param) = target_op
                    .parameters
                    .iter()
                    .find(|p| p.name == name && loc.is_none_or(|l| l == p.location))
                else {
                    problem = Some(format!("no parameter `{key}` on {}", target_op.id));
                    break;
                };
                match BindingValue::parse(raw) {
                    Ok(value) => bindings.push(Binding {
                        location: param.location,
                        name: param.name.clone(),
                        value,
                    }),
                    Err(e) => {
                        problem = Some(format!("parameter `{key}`: {e}"));
                        break;
                    }
                }
            }
            let body = match edge.request_body.as_ref().map(BindingValue::parse).transpose() {
                Ok(b) => b,
                Err(e) => {
                    problem.get_or_insert(format!("request body: {e}"));
                    None
                }
            };
            if let Some(p) = problem {
                sm.dropped.push(format!("{} {} {}: {p}", edge.source, edge.status, edge.name));
                continue;
            }
            sm.transitions.push(Transition {
                source,
                status: edge.status.clone(),
                name: edge.name.clone(),
                target,
                bindings,
                body,
            });
        }
        sm.start = (0..ops.len())
            .filter(|&i| ops[i].op.path_params().next().is_none())
            .collect();
        if sm.start.is_empty() {
            sm.start = (0..ops.len()).collect();
        }
        sm
    }
}

/// What a resource is, for the sequence rules: a path template and the
/// values of its path parameters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResourceId {
    pub path: String,
    pub params: BTreeMap<String, String>,
}

impl ResourceId {
    fn of(tc: &TestCase) -> Self {
        ResourceId {
            path: tc.path_template.clone(),
            params: tc.inputs.path.iter().map(|(k, v)| (k.clone(), plain(v))).collect(),
        }
    }
}

fn plain(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, Default)]
pub struct SessionState {
    pub history: Vec<(TestCase, HttpResponse)>,
    /// Values bound from successful creation responses, per creating operation.
    pub created_resources: BTreeMap<String, Vec<ResourceId>>,
    pub deleted_resources: BTreeSet<ResourceId>,
    /// Resources that a failed POST would have created.
    pub failed_creations: BTreeSet<ResourceId>,
}

/// A link that can be followed, with its inputs already evaluated.
#[derive(Debug, Clone, PartialEq)]
struct Enabled {
    transition: usize,
    inputs: Inputs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceEnd {
    MaxSteps,
    /// The choice sequence ran out during replay.
    Exhausted,
}

#[derive(Debug, Clone)]
pub struct SequenceOutcome {
    pub state: SessionState,
    /// Every check result with the index into `state.history` of the
    /// request that produced it.
    pub results: Vec<(usize, CheckResult)>,
    pub end: SequenceEnd,
    /// Steps whose test case could not be generated.
    pub skipped_steps: usize,
}

impl SequenceOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &(usize, CheckResult)> {
        self.results.iter().filter(|(_, r)| !r.passed)
    }
}

/// Everything needed to run sequences against one target.
pub struct SequenceRunner<'a> {
    pub machine: &'a StateMachine,
    pub ops: &'a [PreparedOperation],
    pub cx: &'a CaseContext,
    pub checker: &'a Checker,
    pub transport: &'a dyn Transport,
    pub base_url: &'a str,
    pub timeout: Duration,
    pub max_steps: usize,
    /// Probability of following an enabled link instead of starting fresh.
    pub link_bias: f64,
}

impl SequenceRunner<'_> {
    /// Runs one sequence drawn from `seq`. Transport failures abort it.
    pub fn run(&self, seq: &mut ChoiceSequence) -> Result<SequenceOutcome, TransportError> {
        let mut state = SessionState::default();
        let mut results = Vec::new();
        let mut enabled: Vec<Enabled> = Vec::new();
        let mut skipped_steps = 0;
        let mut end = SequenceEnd::MaxSteps;
        for _ in 0..self.max_steps.max(1) {
            let choice = self.choose(seq, &enabled);
            let (op_index, bound) = match choice {
                Ok(c) => c,
                Err(_) => {
                    end = SequenceEnd::Exhausted;
                    break;
                }
            };
            let prepared = &self.ops[op_index];
            let mut tc = match prepared.generate(seq, self.cx, Intent::Positive, &bound) {
                Ok(tc) => tc,
                Err(crate::cases::CaseError::Generation(crate::generate::GenerationError::Choice(_))) => {
                    end = SequenceEnd::Exhausted;
                    break;
                }
                Err(_) => {
                    skipped_steps += 1;
                    continue;
                }
            };
            tc.choices.clear();
            let resp = self.transport.send(&tc, self.base_url, self.timeout)?;
            let at = state.history.len();
            for r in self.checker.run(&tc, &resp, &prepared.op) {
                results.push((at, r));
            }
            for r in self.sequence_checks(&state, &tc, &resp, &prepared.op.id) {
                results.push((at, r));
            }
            self.track(&mut state, &mut enabled, op_index, &tc, &resp);
            state.history.push((tc, resp));
        }
        Ok(SequenceOutcome {
            state,
            results,
            end,
            skipped_steps,
        })
    }

    fn choose(
        &self,
        seq: &mut ChoiceSequence,
        enabled: &[Enabled],
    ) -> Result<(usize, Inputs), crate::choice::ChoiceError> {
        if !enabled.is_empty() && seq.draw_bool(self.link_bias)? {
            let e = &enabled[seq.draw_uniform_index(enabled.len())?];
            return Ok((self.machine.transitions[e.transition].target, e.inputs.clone()));
        }
        let start = self.machine.start[seq.draw_uniform_index(self.machine.start.len())?];
        Ok((start, Inputs::default()))
    }

    fn sequence_checks(&self, state: &SessionState, tc: &TestCase, resp: &HttpResponse, op_id: &str) -> Vec<CheckResult> {
        let mut out = Vec::new();
        if tc.method != "GET" {
            return out;
        }
        let id = ResourceId::of(tc);
        let ok = (200..300).contains(&resp.status);
        let evidence = Evidence {
            request: format!("{} {}", tc.method, tc.target()),
            response: format!("{}", resp.status),
        };
        let mut push = |kind: CheckKind, applies: bool, detail: &str| {
            if !applies || !self.checker.set.contains(&kind) {
                return;
            }
            out.push(CheckResult {
                kind,
                passed: !ok,
                operation: op_id.to_string(),
                detail: if ok { detail.to_string() } else { String::new() },
                class: String::new(),
                evidence: evidence.clone(),
            });
        };
        push(
            CheckKind::UseAfterFree,
            state.deleted_resources.contains(&id),
            &format!("resource still readable (status {}) after a successful DELETE", resp.status),
        );
        push(
            CheckKind::ResourceLeak,
            state.failed_creations.contains(&id),
            &format!("resource readable (status {}) although its POST failed", resp.status),
        );
        out
    }

    fn track(&self, state: &mut SessionState, enabled: &mut Vec<Enabled>, op_index: usize, tc: &TestCase, resp: &HttpResponse) {
        let ok = (200..300).contains(&resp.status);
        if tc.method == "DELETE" && ok {
            state.deleted_resources.insert(ResourceId::of(tc));
        }
        let key = matched_response_key(&self.ops[op_index].op, resp.status).map(str::to_string);
        let failed_post = tc.method == "POST" && !ok;
        for (ti, t) in self.machine.transitions.iter().enumerate() {
            if t.source != op_index {
                continue;
            }
            let follows = key.as_deref() == Some(t.status.as_str());
            // After a failed POST, links of its success responses show where
            // the resource would have been, as far as the request tells.
            let probe = failed_post && t.status.starts_with('2');
            if !follows && !probe {
                continue;
            }
            let Some(inputs) = evaluate_bindings(t, tc, resp) else { continue };
            let target = &self.ops[t.target].op;
            let would_be = ResourceId {
                path: target.path.clone(),
                params: inputs.path.iter().map(|(k, v)| (k.clone(), plain(v))).collect(),
            };
            if probe && !follows {
                state.failed_creations.insert(would_be);
            } else if tc.method == "POST" && ok && !inputs.path.is_empty() {
                let created = state.created_resources.entry(tc.operation.clone()).or_default();
                if !created.contains(&would_be) {
                    created.push(would_be);
                }
            }
            let e = Enabled { transition: ti, inputs };
            if !enabled.contains(&e) {
                enabled.push(e);
            }
        }
    }
}

fn evaluate_bindings(t: &Transition, tc: &TestCase, resp: &HttpResponse) -> Option<Inputs> {
    let mut inputs = Inputs::default();
    for b in &t.bindings {
        let v = b.value.evaluate(tc, resp).ok()?;
        inputs.set(b.location, &b.name, v);
    }
    if let Some(body) = &t.body {
        inputs.body = Some(body.evaluate(tc, resp).ok()?);
    }
    Some(inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn parses_and_renders() {
        for s in [
            "$response.body#/id",
            "$response.body",
            "$request.path.id",
            "$request.query.limit",
            "$request.header.X-Trace",
            "$response.header.Location",
            "$request.body#/items/0/a~1b",
            "$url",
            "$method",
            "$statusCode",
        ] {
            assert_eq!(parse_runtime_expression(s).unwrap().to_string(), s);
        }
        let e = parse_runtime_expression("$response.body#/id").unwrap();
        assert_eq!(e.source, Source::ResponseBody);
        assert_eq!(e.pointer.as_deref(), Some("/id"));
    }

    #[test]
    fn rejects_bad_expressions() {
        for (s, pos) in [
            ("$bogus.thing", 1),
            ("response.body", 0),
            ("$response.body#id", 15),
            ("$response.path.id", 10),
            ("$request.header.a b", 17),
            ("$request.body#/a~2", 16),
        ] {
            match parse_runtime_expression(s) {
                Err(ExpressionError::InvalidExpression { position, .. }) => assert_eq!(position, pos, "{s}"),
                Ok(e) => panic!("{s} parsed as {e:?}"),
            }
        }
    }

    fn case() -> TestCase {
        let mut inputs = Inputs::default();
        inputs.path.insert("id".into(), json!(9));
        TestCase {
            operation: "op".into(),
            method: "GET".into(),
            path_template: "/u/{id}".into(),
            resolved_path: "/u/9".into(),
            query: vec![],
            headers: vec![],
            cookies: vec![],
            body: None,
            inputs,
            intent: Intent::Positive,
            provenance: None,
            choices: vec![],
        }
    }

    #[test]
    fn evaluates() {
        let resp = HttpResponse::json(201, &json!({"id": 42, "a/b": [1, 2]})).with_header("Location", "/u/9");
        let tc = case();
        let ev = |s: &str| evaluate_expression(&parse_runtime_expression(s).unwrap(), &tc, &resp);
        assert_eq!(ev("$response.body#/id"), Ok(json!(42)));
        assert_eq!(ev("$response.body#/a~1b/1"), Ok(json!(2)));
        assert_eq!(ev("$response.header.location"), Ok(json!("/u/9")));
        assert_eq!(ev("$request.path.id"), Ok(json!(9)));
        assert_eq!(ev("$statusCode"), Ok(json!(201)));
        assert!(matches!(ev("$response.body#/missing"), Err(EvaluationError::Missing(_))));
        let text = HttpResponse::new(200).with_body("text/plain", "x");
        assert_eq!(
            evaluate_expression(&parse_runtime_expression("$response.body#/id").unwrap(), &tc, &text),
            Err(EvaluationError::BodyNotJson)
        );
    }

    #[test]
    fn templates_and_literals() {
        let resp = HttpResponse::json(200, &json!({"id": 5}));
        let tc = case();
        let b = BindingValue::parse(&json!("item-{$response.body#/id}-x")).unwrap();
        assert_eq!(b.evaluate(&tc, &resp), Ok(json!("item-5-x")));
        assert_eq!(BindingValue::parse(&json!(3)).unwrap(), BindingValue::Literal(json!(3)));
        assert_eq!(
            BindingValue::parse(&json!("plain")).unwrap(),
            BindingValue::Literal(json!("plain"))
        );
        assert!(BindingValue::parse(&json!("a{$nope}")).is_err());
    }
}
