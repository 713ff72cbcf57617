//! Whole test cases: every parameter and the body of one operation drawn
//! from a single choice sequence.

use serde_json::{json, Value};

use crate::choice::ChoiceSequence;
use crate::generate::{Alphabet, GenContext, GenerationError, PreparedSchema};
use crate::schema::{Operation, ParamLocation, Parameter};
use crate::transport::{self, build_test_case, Inputs, Intent, Serialisers, TestCase, TransportError};
use crate::validate::is_valid;

/// Attempts at a negative value before giving up on the test case.
const NEGATIVE_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CaseError {
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    /// No parameter or body of the operation can be made invalid.
    #[error("operation has nothing to negate")]
    NothingToNegate,
    /// Every negative value drawn could be read back as a valid one.
    #[error("negative values are indistinguishable from valid ones on the wire")]
    Ambiguous,
}

/// Shared generation settings for test cases.
#[derive(Debug, Clone, Default)]
pub struct CaseContext {
    pub gen: GenContext,
    pub serialisers: Serialisers,
    /// Sent with every request; replaces generated headers of the same name.
    pub headers: Vec<(String, String)>,
}

impl CaseContext {
    fn gen_for(&self, location: ParamLocation) -> GenContext {
        let mut cx = self.gen.clone();
        if matches!(location, ParamLocation::Header | ParamLocation::Cookie) {
            cx.alphabet = Alphabet::HeaderSafe;
        }
        cx
    }
}

struct PreparedParam {
    param: Parameter,
    schema: PreparedSchema,
}

struct PreparedBody {
    media_type: String,
    schema: PreparedSchema,
}

/// An operation with its schemas canonicalised once.
pub struct PreparedOperation {
    pub op: Operation,
    params: Vec<PreparedParam>,
    bodies: Vec<PreparedBody>,
    body_required: bool,
    /// Request media types without a serialiser.
    pub unsupported_media: Vec<String>,
}

impl std::fmt::Debug for PreparedOperation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PreparedOperation").field("op", &self.op.id).finish()
    }
}

/// Path values must be a single non-empty segment that servers will not
/// normalise away.
fn path_schema(schema: &Value) -> Value {
    json!({"allOf": [schema, {"minLength": 1}, {"not": {"enum": [".", ".."]}}]})
}

impl PreparedOperation {
    /// Prepares every schema. The error explains why the operation must be
    /// skipped.
    pub fn new(op: &Operation, serialisers: &Serialisers) -> Result<Self, String> {
        let mut params = Vec::new();
        for p in &op.parameters {
            let raw = if p.location == ParamLocation::Path {
                path_schema(&p.schema)
            } else {
                p.schema.clone()
            };
            let schema = PreparedSchema::new(&raw).map_err(|e| format!("parameter `{}`: {e}", p.name))?;
            if p.required && schema.canonical().is_unsatisfiable() {
                return Err(format!("required parameter `{}` has no valid values", p.name));
            }
            params.push(PreparedParam { param: p.clone(), schema });
        }
        let mut bodies = Vec::new();
        let mut unsupported_media = Vec::new();
        let mut body_required = false;
        if let Some(b) = &op.body {
            body_required = b.required;
            for m in &b.content {
                if !serialisers.supports(&m.media_type) {
                    unsupported_media.push(m.media_type.clone());
                    continue;
                }
                let schema = PreparedSchema::new(&m.schema).map_err(|e| format!("body `{}`: {e}", m.media_type))?;
                if schema.canonical().is_unsatisfiable() {
                    continue;
                }
                bodies.push(PreparedBody {
                    media_type: m.media_type.clone(),
                    schema,
                });
            }
            if body_required && bodies.is_empty() {
                return Err(format!(
                    "no usable request body media type (unsupported: {})",
                    unsupported_media.join(", ")
                ));
            }
        }
        Ok(PreparedOperation {
            op: op.clone(),
            params,
            bodies,
            body_required,
            unsupported_media,
        })
    }

    /// Draws one test case. Values in `bound` are used as given instead of
    /// being drawn. A negative case negates exactly one drawn component.
    pub fn generate(
        &self,
        seq: &mut ChoiceSequence,
        cx: &CaseContext,
        intent: Intent,
        bound: &Inputs,
    ) -> Result<TestCase, CaseError> {
        let p_include = seq.inclusion_probability();
        // Component order is fixed so that a choice sequence maps to the
        // same values on replay: parameters in declaration order, then body.
        let mut inputs = Inputs::default();
        let mut negatable = Vec::new();
        for (i, pp) in self.params.iter().enumerate() {
            let p = &pp.param;
            if let Some(v) = bound.get(p.location, &p.name) {
                inputs.set(p.location, &p.name, v.clone());
                continue;
            }
            if !p.required && !seq.draw_bool(p_include).map_err(GenerationError::from)? {
                // Optional and absent: still a negation target when negative.
                negatable.push(Component::Param(i));
                continue;
            }
            negatable.push(Component::Param(i));
            if pp.schema.canonical().is_unsatisfiable() {
                continue;
            }
            let v = pp.schema.generate(seq, &cx.gen_for(p.location))?;
            inputs.set(p.location, &p.name, v);
        }
        let mut media = None;
        if !self.bodies.is_empty() {
            let which = if self.bodies.len() == 1 {
                0
            } else {
                seq.draw_index(self.bodies.len()).map_err(GenerationError::from)?
            };
            let b = &self.bodies[which];
            media = Some(b.media_type.as_str());
            if let Some(v) = &bound.body {
                inputs.body = Some(v.clone());
            } else {
                negatable.push(Component::Body(which));
                if self.body_required || seq.draw_bool(p_include).map_err(GenerationError::from)? {
                    inputs.body = Some(b.schema.generate(seq, &cx.gen)?);
                }
            }
        }
        let mut provenance = None;
        if intent == Intent::Negative {
            let (component, value) = self.negate_one(seq, cx, &negatable)?;
            match component {
                Component::Param(i) => {
                    let p = &self.params[i].param;
                    provenance = Some(format!("{} parameter `{}`", location_name(p.location), p.name));
                    inputs.set(p.location, &p.name, value);
                }
                Component::Body(i) => {
                    provenance = Some("body".to_string());
                    media = Some(self.bodies[i].media_type.as_str());
                    inputs.body = Some(value);
                }
            }
        }
        let mut tc = build_test_case(&self.op, inputs, media, intent, &cx.serialisers)?;
        tc.set_headers(&cx.headers)?;
        tc.provenance = provenance;
        Ok(tc)
    }

    fn negate_one(
        &self,
        seq: &mut ChoiceSequence,
        cx: &CaseContext,
        candidates: &[Component],
    ) -> Result<(Component, Value), CaseError> {
        // Only components whose negation exists are eligible; checked up
        // front so that the draw below never lands on a dead end.
        let eligible: Vec<Component> = candidates
            .iter()
            .copied()
            .filter(|c| self.schema_of(*c).can_negate())
            .collect();
        if eligible.is_empty() {
            return Err(CaseError::NothingToNegate);
        }
        let pick = eligible[seq.draw_index(eligible.len()).map_err(GenerationError::from)?];
        let gen_cx = match pick {
            Component::Param(i) => cx.gen_for(self.params[i].param.location),
            Component::Body(_) => cx.gen.clone(),
        };
        for _ in 0..NEGATIVE_ATTEMPTS {
            let v = match self.schema_of(pick).generate_negative(seq, &gen_cx) {
                Ok(v) => v,
                Err(GenerationError::NothingToNegate) => return Err(CaseError::NothingToNegate),
                Err(e) => return Err(e.into()),
            };
            if !self.ambiguous(pick, &v) {
                return Ok((pick, v));
            }
        }
        Err(CaseError::Ambiguous)
    }

    fn schema_of(&self, c: Component) -> &PreparedSchema {
        match c {
            Component::Param(i) => &self.params[i].schema,
            Component::Body(i) => &self.bodies[i].schema,
        }
    }

    /// Whether the serialised form of a negative value could be read by a
    /// server as a valid one, which would make a 2xx answer legitimate.
    fn ambiguous(&self, c: Component, v: &Value) -> bool {
        let valid = |cand: &Value| is_valid(self.schema_of(c).raw(), cand).unwrap_or(true);
        match c {
            Component::Body(i) => {
                let media = transport::media_essence(&self.bodies[i].media_type);
                let mut cands = vec![v.clone()];
                match media.as_str() {
                    "application/x-www-form-urlencoded" | "multipart/form-data" => {
                        let Value::Object(map) = v else { return true };
                        cands = vec![
                            Value::Object(map.iter().map(|(k, x)| (k.clone(), Value::String(text(x)))).collect()),
                            Value::Object(map.iter().map(|(k, x)| (k.clone(), coerce(&text(x)))).collect()),
                        ];
                    }
                    m if m.starts_with("text/") || m == "application/octet-stream" => {
                        let t = text(v);
                        cands = vec![Value::String(t.clone()), coerce(&t)];
                    }
                    _ => {}
                }
                cands.iter().any(valid)
            }
            Component::Param(i) => {
                let p = &self.params[i].param;
                if p.json_encoded {
                    return valid(v);
                }
                let wire: Vec<String> = match p.location {
                    ParamLocation::Query => transport::query_pairs(&p.name, v, p.explode, false)
                        .into_iter()
                        .map(|(_, t)| t)
                        .collect(),
                    _ => vec![transport::header_text(v, p.explode, false)],
                };
                let joined = wire.join(",");
                if p.location == ParamLocation::Path {
                    let seg = transport::encode_path_value(v, p.explode);
                    if seg.is_empty() || seg == "." || seg == ".." {
                        return true;
                    }
                }
                if wire.iter().all(|t| t.trim().is_empty()) && !p.required {
                    return true;
                }
                let mut cands = Vec::new();
                for t in [joined.as_str(), joined.trim()] {
                    cands.push(Value::String(t.to_string()));
                    cands.push(coerce(t));
                }
                let parts: Vec<String> = if wire.len() > 1 {
                    wire.clone()
                } else if joined.is_empty() {
                    Vec::new()
                } else {
                    joined.split(',').map(str::to_string).collect()
                };
                cands.push(Value::Array(parts.iter().map(|t| Value::String(t.clone())).collect()));
                cands.push(Value::Array(parts.iter().map(|t| coerce(t)).collect()));
                cands.iter().any(valid)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Component {
    Param(usize),
    Body(usize),
}

fn location_name(l: ParamLocation) -> &'static str {
    match l {
        ParamLocation::Path => "path",
        ParamLocation::Query => "query",
        ParamLocation::Header => "header",
        ParamLocation::Cookie => "cookie",
    }
}

fn text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// How a lenient server might read a text: as a JSON scalar when it parses
/// as one, otherwise as the text itself.
fn coerce(t: &str) -> Value {
    match serde_json::from_str::<Value>(t.trim()) {
        Ok(v @ (Value::Number(_) | Value::Bool(_) | Value::Null)) => v,
        _ => Value::String(t.to_string()),
    }
}
