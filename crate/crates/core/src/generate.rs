//! Generation of schema instances from canonical schemas.
//!
//! Values are built directly from the canonical form, so nearly every draw
//! is valid by construction. The few constraints that cannot be built in
//! (residual `not`, `oneOf`, `uniqueItems` collisions) are filtered, and a
//! case that keeps failing them gives up after the rejection budget.

use std::sync::OnceLock;

use serde_json::{Map, Number, Value};

use crate::canonical::{
    self, CanonicalError, CanonicalSchema, Canonicaliser, Flat, Node, NegateError, ARRAY, BOOLEAN, FRACTION,
    INTEGER, NULL, OBJECT, STRING,
};
use crate::choice::{ChoiceError, ChoiceSequence};
use crate::format::FormatRegistry;
use crate::json::{as_i128, json_eq, number_from_f64};
use crate::pattern::{Pattern, PatternError};
use crate::validate::{self, ValidateError};

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub max_depth: usize,
    pub max_array: usize,
    pub max_properties: usize,
    pub max_string: usize,
    /// Rejected attempts allowed per generated value.
    pub rejection_budget: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_depth: 8,
            max_array: 16,
            max_properties: 16,
            max_string: 256,
            rejection_budget: 100,
        }
    }
}

/// Which characters free-form strings may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alphabet {
    #[default]
    Unicode,
    /// Visible ASCII and space, for values sent in headers.
    HeaderSafe,
}

/// Everything generation needs besides the schema and the byte stream.
#[derive(Debug, Clone, Default)]
pub struct GenContext {
    pub config: GenConfig,
    pub formats: FormatRegistry,
    pub alphabet: Alphabet,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error("schema has no valid instances")]
    Unsatisfiable,
    #[error("gave up after {attempts} rejected attempts")]
    ExhaustedRejectionBudget { attempts: usize },
    #[error("every value of the declared types is valid; no negative instance exists")]
    NothingToNegate,
    #[error("cannot generate: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Choice(#[from] ChoiceError),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

impl From<PatternError> for GenerationError {
    fn from(e: PatternError) -> Self {
        match e {
            PatternError::Choice(c) => GenerationError::Choice(c),
            other => GenerationError::Unsupported(other.to_string()),
        }
    }
}

impl From<ValidateError> for GenerationError {
    fn from(e: ValidateError) -> Self {
        GenerationError::Unsupported(e.to_string())
    }
}

/// Internal outcome: either a hard error or a rejected attempt.
enum Fail {
    Reject,
    Hard(GenerationError),
}

impl<E: Into<GenerationError>> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail::Hard(e.into())
    }
}

type G<T> = Result<T, Fail>;

/// A schema prepared for repeated generation.
#[derive(Debug, Clone)]
pub struct PreparedSchema {
    raw: Value,
    canonical: CanonicalSchema,
    node: Node,
    /// Constraints were relaxed; generated values are checked against `raw`.
    lossy: bool,
    negation: OnceLock<Result<Box<(CanonicalSchema, Node)>, GenerationError>>,
}

impl PreparedSchema {
    /// Canonicalises `raw`. Constraints that cannot be merged exactly are
    /// relaxed and compensated by filtering.
    pub fn new(raw: &Value) -> Result<Self, CanonicalError> {
        let (canonical, lossy) = match Canonicaliser::default().run(raw) {
            Ok((c, _)) => (c, false),
            Err(CanonicalError::Unmergeable { .. }) => {
                let (c, _) = Canonicaliser {
                    lossy: true,
                    ..Default::default()
                }
                .run(raw)?;
                (c, true)
            }
            Err(e) => return Err(e),
        };
        let node = canonical.to_node()?;
        Ok(PreparedSchema {
            raw: raw.clone(),
            canonical,
            node,
            lossy,
            negation: OnceLock::new(),
        })
    }

    pub fn from_canonical(schema: &CanonicalSchema) -> Result<Self, CanonicalError> {
        Ok(PreparedSchema {
            raw: schema.as_value().clone(),
            canonical: schema.clone(),
            node: schema.to_node()?,
            lossy: false,
            negation: OnceLock::new(),
        })
    }

    pub fn raw(&self) -> &Value {
        &self.raw
    }

    pub fn canonical(&self) -> &CanonicalSchema {
        &self.canonical
    }

    pub fn is_lossy(&self) -> bool {
        self.lossy
    }

    /// Generates a valid instance.
    pub fn generate(&self, seq: &mut ChoiceSequence, cx: &GenContext) -> Result<Value, GenerationError> {
        if self.canonical.is_unsatisfiable() {
            return Err(GenerationError::Unsatisfiable);
        }
        let check = if self.lossy { &self.raw } else { self.canonical.as_value() };
        let mut g = Gen { cx, seq };
        for _ in 0..cx.config.rejection_budget {
            match g.node(&self.node, 0) {
                Ok(v) => {
                    if validate::is_valid(check, &v)? {
                        return Ok(v);
                    }
                }
                Err(Fail::Reject) => {}
                Err(Fail::Hard(e)) => return Err(e),
            }
        }
        Err(GenerationError::ExhaustedRejectionBudget {
            attempts: cx.config.rejection_budget,
        })
    }

    fn negation(&self) -> &Result<Box<(CanonicalSchema, Node)>, GenerationError> {
        self.negation.get_or_init(|| {
            let negated = match canonical::negate_for_testing(self.canonical.as_value()) {
                Ok(n) => n,
                Err(NegateError::NothingToNegate) => return Err(GenerationError::NothingToNegate),
                Err(NegateError::Canonical(e)) => return Err(e.into()),
            };
            let node = negated.to_node()?;
            Ok(Box::new((negated, node)))
        })
    }

    /// Whether [`generate_negative`](Self::generate_negative) can succeed.
    pub fn can_negate(&self) -> bool {
        !self.lossy && self.negation().as_ref().is_ok_and(|b| !b.0.is_unsatisfiable())
    }

    /// Generates an instance of one of the declared types that the schema
    /// rejects.
    pub fn generate_negative(&self, seq: &mut ChoiceSequence, cx: &GenContext) -> Result<Value, GenerationError> {
        if self.lossy {
            return Err(GenerationError::Unsupported(
                "negation of a schema with unmergeable constraints".into(),
            ));
        }
        let (negated, node) = match self.negation() {
            Ok(b) => (&b.0, &b.1),
            Err(e) => return Err(e.clone()),
        };
        let mut g = Gen { cx, seq };
        for _ in 0..cx.config.rejection_budget {
            match g.node(node, 0) {
                Ok(v) => {
                    if validate::is_valid(negated.as_value(), &v)? && !validate::is_valid(&self.raw, &v)? {
                        return Ok(v);
                    }
                }
                Err(Fail::Reject) => {}
                Err(Fail::Hard(e)) => return Err(e),
            }
        }
        Err(GenerationError::ExhaustedRejectionBudget {
            attempts: cx.config.rejection_budget,
        })
    }
}

/// Generates a valid instance of a canonical schema.
pub fn generate_instance(
    schema: &CanonicalSchema,
    seq: &mut ChoiceSequence,
    cx: &GenContext,
) -> Result<Value, GenerationError> {
    PreparedSchema::from_canonical(schema)?.generate(seq, cx)
}

/// Generates an instance of the schema's types that the schema rejects.
pub fn generate_negative_instance(
    schema: &Value,
    seq: &mut ChoiceSequence,
    cx: &GenContext,
) -> Result<Value, GenerationError> {
    PreparedSchema::new(schema)?.generate_negative(seq, cx)
}

/// Printable ASCII, ordered so that the simplest draw is `a`.
const ASCII: &[u8; 95] =
    b"abcdefghijklmnopqrstuvwxyz0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ -_.,:;!?'\"#$%&()*+/<=>@[\\]^`{|}~";

struct Gen<'a, 's> {
    cx: &'a GenContext,
    seq: &'s mut ChoiceSequence,
}

fn int_value(i: i128) -> Value {
    if let Ok(v) = i64::try_from(i) {
        Value::from(v)
    } else if let Ok(v) = u64::try_from(i) {
        Value::from(v)
    } else {
        number_from_f64(i as f64)
    }
}

fn bound_i128(n: &Number) -> Option<i128> {
    as_i128(n).or_else(|| n.as_f64().filter(|f| f.abs() < 1e30).map(|f| f as i128))
}

impl Gen<'_, '_> {
    fn node(&mut self, node: &Node, depth: usize) -> G<Value> {
        match node {
            Node::False => Err(Fail::Reject),
            Node::True => self.any(depth),
            Node::AnyOf(bs) => {
                let i = self.seq.draw_index(bs.len())?;
                self.node(&bs[i], depth)
            }
            Node::OneOf(bs) => {
                let i = self.seq.draw_index(bs.len())?;
                let v = self.node(&bs[i], depth)?;
                for (j, b) in bs.iter().enumerate() {
                    if j != i && validate::is_valid(&canonical::render(b), &v)? {
                        return Err(Fail::Reject);
                    }
                }
                Ok(v)
            }
            Node::Flat(f) => {
                let v = self.flat(f, depth)?;
                for n in &f.nots {
                    if validate::is_valid(&canonical::render(n), &v)? {
                        return Err(Fail::Reject);
                    }
                }
                Ok(v)
            }
        }
    }

    fn any(&mut self, depth: usize) -> G<Value> {
        let deep = depth >= self.cx.config.max_depth;
        let kinds: &[u8] = if deep {
            &[NULL, BOOLEAN, INTEGER, FRACTION, STRING]
        } else {
            &[NULL, BOOLEAN, INTEGER, FRACTION, STRING, ARRAY, OBJECT]
        };
        let k = kinds[self.seq.draw_index(kinds.len())?];
        let mut f = Flat::any();
        f.types = k;
        self.typed(&f, k, depth)
    }

    fn flat(&mut self, f: &Flat, depth: usize) -> G<Value> {
        if let Some(values) = &f.enumeration {
            if values.is_empty() {
                return Err(Fail::Reject);
            }
            let i = self.seq.draw_index(values.len())?;
            return Ok(values[i].clone());
        }
        let mut kinds: Vec<u8> = [NULL, BOOLEAN, INTEGER, FRACTION, STRING, ARRAY, OBJECT]
            .into_iter()
            .filter(|k| f.types & k != 0)
            .collect();
        if depth >= self.cx.config.max_depth && kinds.len() > 1 {
            let shallow: Vec<u8> = kinds.iter().copied().filter(|k| k & (ARRAY | OBJECT) == 0).collect();
            if !shallow.is_empty() {
                kinds = shallow;
            }
        }
        if kinds.is_empty() {
            return Err(Fail::Reject);
        }
        let k = kinds[self.seq.draw_index(kinds.len())?];
        self.typed(f, k, depth)
    }

    fn typed(&mut self, f: &Flat, kind: u8, depth: usize) -> G<Value> {
        match kind {
            NULL => Ok(Value::Null),
            BOOLEAN => Ok(Value::Bool(self.seq.draw_bool(0.5)?)),
            INTEGER => self.integer(f),
            FRACTION => self.fraction(f),
            STRING => self.string(f).map(Value::String),
            ARRAY => self.array(f, depth),
            OBJECT => self.object(f, depth),
            _ => Err(Fail::Reject),
        }
    }

    fn integer(&mut self, f: &Flat) -> G<Value> {
        let mut lo = f.lower.as_ref().and_then(|b| bound_i128(&b.value));
        let mut hi = f.upper.as_ref().and_then(|b| bound_i128(&b.value));
        // Bounds on a mixed integer/number type are not normalised.
        if let (Some(b), Some(l)) = (&f.lower, lo.as_mut()) {
            if b.exclusive || !crate::json::is_integral(&b.value) {
                let fl = b.value.as_f64().unwrap_or(0.0);
                *l = if b.exclusive && fl.fract() == 0.0 { *l + 1 } else { fl.ceil() as i128 };
            }
        }
        if let (Some(b), Some(h)) = (&f.upper, hi.as_mut()) {
            if b.exclusive || !crate::json::is_integral(&b.value) {
                let fl = b.value.as_f64().unwrap_or(0.0);
                *h = if b.exclusive && fl.fract() == 0.0 { *h - 1 } else { fl.floor() as i128 };
            }
        }
        let step = match &f.multiple_of {
            Some(m) => match canonical::to_rational(m) {
                Some((num, _)) if num > 0 => num,
                _ => return Err(Fail::Hard(GenerationError::Unsupported("multipleOf".into()))),
            },
            None => 1,
        };
        let klo = lo.map(|l| l.div_euclid(step) + i128::from(l.rem_euclid(step) != 0));
        let khi = hi.map(|h| h.div_euclid(step));
        if let (Some(a), Some(b)) = (klo, khi) {
            if a > b {
                return Err(Fail::Reject);
            }
        }
        let k = match (klo, khi) {
            (Some(a), Some(b)) if a == b => a,
            (a, b) => self.seq.draw_integer(a, b)?,
        };
        Ok(int_value(k * step))
    }

    fn fraction(&mut self, f: &Flat) -> G<Value> {
        let lo = f.lower.as_ref().and_then(|b| b.value.as_f64());
        let hi = f.upper.as_ref().and_then(|b| b.value.as_f64());
        let v = if let Some(m) = f.multiple_of.as_ref().and_then(|m| m.as_f64()) {
            let klo = lo.map(|l| (l / m).ceil() as i128);
            let khi = hi.map(|h| (h / m).floor() as i128);
            let k = self.seq.draw_integer(klo, khi.or(klo.map(|l| l + 1_000_000)))?;
            k as f64 * m
        } else {
            let unit = self.seq.draw_unit()?;
            let frac = if unit == 0.0 { 0.5 } else { unit };
            match (lo, hi) {
                (Some(l), Some(h)) => l + (h - l) * frac,
                (Some(l), None) => {
                    let ip = self.seq.draw_integer(Some(0), Some(1 << 40))? as f64;
                    l + ip + frac
                }
                (None, Some(h)) => {
                    let ip = self.seq.draw_integer(Some(0), Some(1 << 40))? as f64;
                    h - ip - frac
                }
                (None, None) => {
                    let ip = self.seq.draw_integer(Some(-(1 << 40)), Some(1 << 40))? as f64;
                    ip + frac
                }
            }
        };
        if !v.is_finite() {
            return Err(Fail::Reject);
        }
        let out = number_from_f64(v);
        // A fraction-only type must not produce an integral value.
        if f.types & INTEGER == 0 && out.is_i64() {
            return Err(Fail::Reject);
        }
        let n = match &out {
            Value::Number(n) => n.clone(),
            _ => return Err(Fail::Reject),
        };
        if let Some(b) = &f.lower {
            let c = crate::json::num_cmp(&n, &b.value);
            if c.is_lt() || (b.exclusive && c.is_eq()) {
                return Err(Fail::Reject);
            }
        }
        if let Some(b) = &f.upper {
            let c = crate::json::num_cmp(&n, &b.value);
            if c.is_gt() || (b.exclusive && c.is_eq()) {
                return Err(Fail::Reject);
            }
        }
        Ok(out)
    }

    fn string(&mut self, f: &Flat) -> G<String> {
        let cfg = &self.cx.config;
        let min = f.min_length as usize;
        let max = f
            .max_length
            .map(|m| m as usize)
            .unwrap_or(usize::MAX)
            .min(cfg.max_string.max(min));
        let s = if let Some(p) = &f.pattern {
            let pat = Pattern::parse(p)?;
            pat.generate(self.seq, min, max)?
        } else if let Some(gen) = f.format.as_ref().and_then(|name| self.cx.formats.get(name)) {
            gen(self.seq)?
        } else {
            let mut out = String::new();
            let mut n = 0;
            while n < min {
                out.push(self.char()?);
                n += 1;
            }
            while n < max && self.seq.more(0.75)? {
                out.push(self.char()?);
                n += 1;
            }
            out
        };
        let len = s.chars().count();
        if len < min || f.max_length.is_some_and(|m| len as u64 > m) {
            return Err(Fail::Reject);
        }
        if self.cx.alphabet == Alphabet::HeaderSafe && !header_safe(&s) {
            return Err(Fail::Reject);
        }
        Ok(s)
    }

    fn char(&mut self) -> G<char> {
        let header = self.cx.alphabet == Alphabet::HeaderSafe;
        if !header && self.seq.draw_bool(0.05)? {
            let c = self.seq.draw_integer(Some(0x80), Some(0xD7FF))? as u32;
            return Ok(char::from_u32(c).unwrap_or('?'));
        }
        if !header && self.seq.draw_bool(0.02)? {
            let c = self.seq.draw_integer(Some(0), Some(0x1f))? as u32;
            return Ok(char::from_u32(c).unwrap_or('?'));
        }
        let i = self.seq.draw_index(ASCII.len())?;
        Ok(ASCII[i] as char)
    }

    fn array(&mut self, f: &Flat, depth: usize) -> G<Value> {
        let cfg = &self.cx.config;
        let min = f.min_items as usize;
        let mut max = f.max_items.map(|m| m as usize).unwrap_or(usize::MAX);
        max = max.min(cfg.max_array.max(min));
        if depth >= cfg.max_depth {
            max = max.min(min.max(usize::from(f.contains.is_some())));
        }
        let item = f.items.clone().unwrap_or(Node::True);
        let mut out: Vec<Value> = Vec::new();
        let mut need_contains = f.contains.clone();
        if let Some(c) = &need_contains {
            if out.iter().any(|v| node_accepts(c, v)) {
                need_contains = None;
            }
        }
        let contains_node = need_contains.as_ref().map(|c| match canonical_merge(&item, c) {
                Some(n) => n,
                None => c.clone(),
            });
        let mut placed = contains_node.is_none();
        let target_extra = |out: &Vec<Value>, placed: bool| out.len() + usize::from(!placed) < min;
        while out.len() < max {
            let must = target_extra(&out, placed);
            if !must && !self.seq.more(0.6)? {
                break;
            }
            let v = if !placed && (out.len() + 1 == max || self.seq.draw_bool(0.3)?) {
                placed = true;
                match &contains_node {
                    Some(n) => self.node(n, depth + 1)?,
                    None => self.node(&item, depth + 1)?,
                }
            } else {
                self.node(&item, depth + 1)?
            };
            if f.unique_items && out.iter().any(|o| json_eq(o, &v)) {
                // Retry once before giving up on this element.
                let again = self.node(&item, depth + 1)?;
                if out.iter().any(|o| json_eq(o, &again)) {
                    if out.len() >= min && placed {
                        break;
                    }
                    return Err(Fail::Reject);
                }
                out.push(again);
                continue;
            }
            out.push(v);
        }
        if !placed {
            if out.len() >= max {
                return Err(Fail::Reject);
            }
            if let Some(n) = &contains_node {
                let v = self.node(n, depth + 1)?;
                if f.unique_items && out.iter().any(|o| json_eq(o, &v)) {
                    return Err(Fail::Reject);
                }
                out.push(v);
            }
        }
        if out.len() < min {
            return Err(Fail::Reject);
        }
        Ok(Value::Array(out))
    }

    fn object(&mut self, f: &Flat, depth: usize) -> G<Value> {
        let cfg = &self.cx.config;
        let max = f
            .max_properties
            .map(|m| m as usize)
            .unwrap_or(usize::MAX)
            .min(cfg.max_properties.max(f.required.len()).max(f.min_properties as usize));
        let schema_for = |k: &str| -> Node {
            f.properties
                .get(k)
                .or(f.additional.as_ref())
                .cloned()
                .unwrap_or(Node::True)
        };
        let mut out = Map::new();
        for k in &f.required {
            let v = self.node(&schema_for(k), depth + 1)?;
            out.insert(k.clone(), v);
        }
        let shallow = depth >= cfg.max_depth;
        let p = self.seq.inclusion_probability();
        let optional: Vec<&String> = f
            .properties
            .iter()
            .filter(|(k, v)| !f.required.contains(*k) && **v != Node::False)
            .map(|(k, _)| k)
            .collect();
        let min = f.min_properties as usize;
        for k in &optional {
            if out.len() >= max {
                break;
            }
            let force = out.len() < min && f.additional == Some(Node::False);
            if force || (!shallow && self.seq.draw_bool(p)?) {
                let v = self.node(&f.properties[*k], depth + 1)?;
                out.insert((*k).clone(), v);
            }
        }
        let additional = f.additional.clone().unwrap_or(Node::True);
        if additional != Node::False {
            let mut attempts = 0;
            while out.len() < max && (out.len() < min || (!shallow && self.seq.more(0.2)?)) {
                attempts += 1;
                if attempts > 4 * cfg.max_properties + min {
                    return Err(Fail::Reject);
                }
                let key = self.key()?;
                if out.contains_key(&key) || f.properties.contains_key(&key) {
                    continue;
                }
                let v = self.node(&additional, depth + 1)?;
                out.insert(key, v);
            }
        }
        if out.len() < min || out.len() as u64 > f.max_properties.unwrap_or(u64::MAX) {
            return Err(Fail::Reject);
        }
        Ok(Value::Object(out))
    }

    fn key(&mut self) -> G<String> {
        let mut s = String::new();
        loop {
            let c = self.seq.draw_integer(Some(0), Some(25))? as u8;
            s.push((b'a' + c) as char);
            if s.len() >= 12 || !self.seq.more(0.5)? {
                return Ok(s);
            }
        }
    }
}

fn node_accepts(n: &Node, v: &Value) -> bool {
    validate::is_valid(&canonical::render(n), v).unwrap_or(false)
}

fn canonical_merge(a: &Node, b: &Node) -> Option<Node> {
    let sa = CanonicalSchema::from_value_unchecked(canonical::render(a));
    let sb = CanonicalSchema::from_value_unchecked(canonical::render(b));
    let merged = canonical::merge_constraints(&sa, &sb).ok()?;
    merged.to_node().ok()
}

/// Visible ASCII and spaces (not at either end).
pub(crate) fn header_safe(s: &str) -> bool {
    s.bytes().all(|b| (0x20..0x7f).contains(&b)) && !s.starts_with(' ') && !s.ends_with(' ')
}
