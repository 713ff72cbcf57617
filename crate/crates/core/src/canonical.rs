//! Canonicalisation of JSON Schemas.
//!
//! A schema is parsed into an intermediate form, rewritten by the rules in
//! `RULES.md` and rendered back to JSON until the output stops changing.
//! The canonical form never contains `allOf`; numeric bounds on integers are
//! inclusive; keywords that cannot apply to any permitted type are dropped;
//! and a schema with no possible instance is rendered as `false`.
//!
//! Negation pushes `not` inwards wherever the result can be written without
//! `not`, which is what makes negative test data cheap to generate.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Number, Value};

use crate::json::{as_i128, is_integral, json_eq, node_count, normalise_number, num_cmp};
use crate::validate;

pub(crate) const NULL: u8 = 1;
pub(crate) const BOOLEAN: u8 = 2;
pub(crate) const INTEGER: u8 = 4;
/// Numbers with a non-zero fractional part.
pub(crate) const FRACTION: u8 = 8;
pub(crate) const STRING: u8 = 16;
pub(crate) const ARRAY: u8 = 32;
pub(crate) const OBJECT: u8 = 64;
pub(crate) const NUMERIC: u8 = INTEGER | FRACTION;
pub(crate) const ALL: u8 = 127;

/// Default rewrite budget, in schema tree nodes.
pub const DEFAULT_NODE_BUDGET: usize = 10_000;

/// Keywords that carry no validation meaning and are dropped.
const ANNOTATIONS: &[&str] = &[
    "title",
    "description",
    "default",
    "examples",
    "example",
    "$comment",
    "$schema",
    "$id",
    "id",
    "readOnly",
    "writeOnly",
    "deprecated",
    "discriminator",
    "xml",
    "externalDocs",
    "definitions",
    "nullable",
    "collectionFormat",
];

const UNSUPPORTED: &[&str] = &[
    "$ref",
    "$dynamicRef",
    "$recursiveRef",
    "patternProperties",
    "dependencies",
    "dependentRequired",
    "dependentSchemas",
    "if",
    "then",
    "else",
    "additionalItems",
    "propertyNames",
    "prefixItems",
    "unevaluatedItems",
    "unevaluatedProperties",
    "minContains",
    "maxContains",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CanonicalError {
    #[error("rewriting exceeded the budget of {budget} schema nodes")]
    ComplexityBudgetExceeded { budget: usize },
    #[error("cannot intersect two different `{keyword}` constraints")]
    Unmergeable { keyword: String },
    #[error("unsupported keyword `{keyword}`")]
    Unsupported { keyword: String },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NegateError {
    #[error("every instance of the declared types is valid; nothing to negate")]
    NothingToNegate,
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

/// A schema in canonical form.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalSchema(Value);

impl CanonicalSchema {
    pub fn as_value(&self) -> &Value {
        &self.0
    }

    pub fn into_value(self) -> Value {
        self.0
    }

    /// True iff this is the canonical FALSE schema.
    pub fn is_unsatisfiable(&self) -> bool {
        self.0 == Value::Bool(false)
    }

    /// True iff this is the canonical TRUE schema.
    pub fn is_trivial(&self) -> bool {
        self.0 == Value::Bool(true)
    }

    pub(crate) fn to_node(&self) -> Result<Node, CanonicalError> {
        let mut cx = Ctx::new(usize::MAX / 4, true);
        parse(&self.0, &mut cx)
    }

    pub(crate) fn from_value_unchecked(v: Value) -> Self {
        CanonicalSchema(v)
    }
}

/// Canonicalisation settings.
#[derive(Debug, Clone, Copy)]
pub struct Canonicaliser {
    pub node_budget: usize,
    /// When set, constraints that cannot be intersected are relaxed instead
    /// of failing. The result then accepts a superset of the input and
    /// generated values need to be filtered against the original.
    pub lossy: bool,
}

impl Default for Canonicaliser {
    fn default() -> Self {
        Canonicaliser {
            node_budget: DEFAULT_NODE_BUDGET,
            lossy: false,
        }
    }
}

impl Canonicaliser {
    /// Returns the canonical schema and whether any constraint was relaxed.
    pub fn run(&self, schema: &Value) -> Result<(CanonicalSchema, bool), CanonicalError> {
        let mut cx = Ctx::new(self.node_budget, self.lossy);
        let mut current = schema.clone();
        for _ in 0..8 {
            let node = parse(&current, &mut cx)?;
            let next = render(&node);
            if node_count(&next) > self.node_budget {
                return Err(CanonicalError::ComplexityBudgetExceeded {
                    budget: self.node_budget,
                });
            }
            if next == current {
                break;
            }
            current = next;
        }
        Ok((CanonicalSchema(current), cx.lost))
    }
}

/// Rewrites `schema` into canonical form, preserving its meaning.
pub fn canonicalise(schema: &Value) -> Result<CanonicalSchema, CanonicalError> {
    Canonicaliser::default().run(schema).map(|(s, _)| s)
}

/// Intersection of two canonical schemas.
pub fn merge_constraints(a: &CanonicalSchema, b: &CanonicalSchema) -> Result<CanonicalSchema, CanonicalError> {
    let mut cx = Ctx::new(DEFAULT_NODE_BUDGET, false);
    let na = parse(&a.0, &mut cx)?;
    let nb = parse(&b.0, &mut cx)?;
    let merged = merge(na, nb, &mut cx)?;
    canonicalise(&render(&merged))
}

/// Builds `{"type": <types of schema>, "not": schema}` in canonical form:
/// values of a type the schema declares that the schema rejects.
pub fn negate_for_testing(schema: &Value) -> Result<CanonicalSchema, NegateError> {
    let canonical = canonicalise(schema)?;
    let mut cx = Ctx::new(DEFAULT_NODE_BUDGET, false);
    let node = parse(canonical.as_value(), &mut cx)?;
    let types = possible_types(&node);
    let mut wrapper = Flat::any();
    wrapper.types = types;
    wrapper.nots.push(node);
    let negated = simplify(wrapper, &mut cx)?;
    let out = canonicalise(&render(&negated))?;
    if out.is_unsatisfiable() {
        return Err(NegateError::NothingToNegate);
    }
    Ok(out)
}

pub(crate) struct Ctx {
    budget: usize,
    work: usize,
    lossy: bool,
    pub(crate) lost: bool,
}

impl Ctx {
    fn new(budget: usize, lossy: bool) -> Self {
        Ctx {
            budget,
            work: 0,
            lossy,
            lost: false,
        }
    }

    fn charge(&mut self, n: usize) -> Result<(), CanonicalError> {
        self.work = self.work.saturating_add(n);
        if self.work > self.budget.saturating_mul(20) {
            return Err(CanonicalError::ComplexityBudgetExceeded { budget: self.budget });
        }
        Ok(())
    }

    fn conflict(&mut self, keyword: &str) -> Result<(), CanonicalError> {
        if self.lossy {
            self.lost = true;
            Ok(())
        } else {
            Err(CanonicalError::Unmergeable {
                keyword: keyword.to_string(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Bound {
    pub(crate) value: Number,
    pub(crate) exclusive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    True,
    False,
    Flat(Box<Flat>),
    AnyOf(Vec<Node>),
    OneOf(Vec<Node>),
}

/// A conjunction of keyword constraints.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Flat {
    pub(crate) types: u8,
    pub(crate) enumeration: Option<Vec<Value>>,
    pub(crate) lower: Option<Bound>,
    pub(crate) upper: Option<Bound>,
    pub(crate) multiple_of: Option<Number>,
    pub(crate) min_length: u64,
    pub(crate) max_length: Option<u64>,
    pub(crate) pattern: Option<String>,
    pub(crate) format: Option<String>,
    pub(crate) items: Option<Node>,
    pub(crate) min_items: u64,
    pub(crate) max_items: Option<u64>,
    pub(crate) unique_items: bool,
    pub(crate) contains: Option<Node>,
    pub(crate) properties: BTreeMap<String, Node>,
    pub(crate) required: BTreeSet<String>,
    pub(crate) additional: Option<Node>,
    pub(crate) min_properties: u64,
    pub(crate) max_properties: Option<u64>,
    /// Negated subschemas that could not be pushed inwards.
    pub(crate) nots: Vec<Node>,
    pub(crate) extra: BTreeMap<String, Value>,
}

impl Flat {
    pub(crate) fn any() -> Self {
        Flat {
            types: ALL,
            enumeration: None,
            lower: None,
            upper: None,
            multiple_of: None,
            min_length: 0,
            max_length: None,
            pattern: None,
            format: None,
            items: None,
            min_items: 0,
            max_items: None,
            unique_items: false,
            contains: None,
            properties: BTreeMap::new(),
            required: BTreeSet::new(),
            additional: None,
            min_properties: 0,
            max_properties: None,
            nots: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    fn typed(types: u8) -> Self {
        let mut f = Flat::any();
        f.types = types;
        f
    }

    /// No constraints other than the type set (inert keywords ignored).
    fn is_type_only(&self) -> bool {
        let mut probe = self.clone();
        probe.types = ALL;
        probe.extra.clear();
        probe == Flat::any()
    }

    fn clear_numeric(&mut self) {
        self.lower = None;
        self.upper = None;
        self.multiple_of = None;
    }

    fn clear_string(&mut self) {
        self.min_length = 0;
        self.max_length = None;
        self.pattern = None;
        self.format = None;
    }

    fn clear_array(&mut self) {
        self.items = None;
        self.min_items = 0;
        self.max_items = None;
        self.unique_items = false;
        self.contains = None;
    }

    fn clear_object(&mut self) {
        self.properties.clear();
        self.required.clear();
        self.additional = None;
        self.min_properties = 0;
        self.max_properties = None;
    }
}

fn flat(f: Flat) -> Node {
    Node::Flat(Box::new(f))
}

fn type_bits(name: &str) -> Result<u8, CanonicalError> {
    Ok(match name {
        "null" => NULL,
        "boolean" => BOOLEAN,
        "integer" => INTEGER,
        "number" => NUMERIC,
        "string" => STRING,
        "array" => ARRAY,
        "object" => OBJECT,
        other => return Err(CanonicalError::InvalidSchema(format!("unknown type `{other}`"))),
    })
}

fn value_type_bits(v: &Value) -> u8 {
    match v {
        Value::Null => NULL,
        Value::Bool(_) => BOOLEAN,
        Value::Number(n) if is_integral(n) => INTEGER,
        Value::Number(_) => FRACTION,
        Value::String(_) => STRING,
        Value::Array(_) => ARRAY,
        Value::Object(_) => OBJECT,
    }
}

/// Types an instance of `node` may have.
pub(crate) fn possible_types(node: &Node) -> u8 {
    match node {
        Node::True => ALL,
        Node::False => 0,
        Node::Flat(f) => match &f.enumeration {
            Some(values) => values.iter().fold(0, |acc, v| acc | value_type_bits(v)),
            None => f.types,
        },
        Node::AnyOf(xs) | Node::OneOf(xs) => xs.iter().fold(0, |acc, x| acc | possible_types(x)),
    }
}

fn invalid(msg: impl Into<String>) -> CanonicalError {
    CanonicalError::InvalidSchema(msg.into())
}

fn get_number(v: &Value, kw: &str) -> Result<Number, CanonicalError> {
    match v {
        Value::Number(n) => Ok(n.clone()),
        _ => Err(invalid(format!("{kw} must be a number"))),
    }
}

fn get_count(v: &Value, kw: &str) -> Result<u64, CanonicalError> {
    match v {
        Value::Number(n) if is_integral(n) && n.as_f64().unwrap_or(-1.0) >= 0.0 => {
            Ok(n.as_u64().unwrap_or_else(|| n.as_f64().unwrap_or(0.0) as u64))
        }
        _ => Err(invalid(format!("{kw} must be a non-negative integer"))),
    }
}

fn tighter_lower(a: Option<Bound>, b: Option<Bound>) -> Option<Bound> {
    match (a, b) {
        (Some(x), Some(y)) => Some(match num_cmp(&x.value, &y.value) {
            std::cmp::Ordering::Greater => x,
            std::cmp::Ordering::Less => y,
            std::cmp::Ordering::Equal => Bound {
                value: x.value,
                exclusive: x.exclusive || y.exclusive,
            },
        }),
        (x, None) => x,
        (None, y) => y,
    }
}

fn tighter_upper(a: Option<Bound>, b: Option<Bound>) -> Option<Bound> {
    match (a, b) {
        (Some(x), Some(y)) => Some(match num_cmp(&x.value, &y.value) {
            std::cmp::Ordering::Less => x,
            std::cmp::Ordering::Greater => y,
            std::cmp::Ordering::Equal => Bound {
                value: x.value,
                exclusive: x.exclusive || y.exclusive,
            },
        }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Parses a schema value into a simplified node. Subschemas are handled
/// recursively, so the result is canonical throughout.
pub(crate) fn parse(value: &Value, cx: &mut Ctx) -> Result<Node, CanonicalError> {
    cx.charge(1)?;
    let obj = match value {
        Value::Bool(true) => return Ok(Node::True),
        Value::Bool(false) => return Ok(Node::False),
        Value::Object(o) => o,
        other => return Err(invalid(format!("schema must be an object or boolean, got {other}"))),
    };
    let mut f = Flat::any();
    let mut parts: Vec<Node> = Vec::new();
    for (kw, v) in obj {
        match kw.as_str() {
            "type" => {
                f.types = match v {
                    Value::String(s) => type_bits(s)?,
                    Value::Array(names) => {
                        let mut bits = 0;
                        for n in names {
                            bits |= type_bits(n.as_str().ok_or_else(|| invalid("type entries must be strings"))?)?;
                        }
                        bits
                    }
                    _ => return Err(invalid("type must be a string or array")),
                };
            }
            "enum" => {
                let values = v.as_array().ok_or_else(|| invalid("enum must be an array"))?;
                let mut e = Flat::any();
                e.enumeration = Some(values.clone());
                parts.push(simplify(e, cx)?);
            }
            "const" => {
                let mut e = Flat::any();
                e.enumeration = Some(vec![v.clone()]);
                parts.push(simplify(e, cx)?);
            }
            "minimum" => {
                let excl = obj.get("exclusiveMinimum") == Some(&Value::Bool(true));
                let b = Bound {
                    value: get_number(v, kw)?,
                    exclusive: excl,
                };
                f.lower = tighter_lower(f.lower.take(), Some(b));
            }
            "maximum" => {
                let excl = obj.get("exclusiveMaximum") == Some(&Value::Bool(true));
                let b = Bound {
                    value: get_number(v, kw)?,
                    exclusive: excl,
                };
                f.upper = tighter_upper(f.upper.take(), Some(b));
            }
            "exclusiveMinimum" => {
                if let Value::Number(n) = v {
                    let b = Bound {
                        value: n.clone(),
                        exclusive: true,
                    };
                    f.lower = tighter_lower(f.lower.take(), Some(b));
                } else if !v.is_boolean() {
                    return Err(invalid("exclusiveMinimum must be a number or boolean"));
                }
            }
            "exclusiveMaximum" => {
                if let Value::Number(n) = v {
                    let b = Bound {
                        value: n.clone(),
                        exclusive: true,
                    };
                    f.upper = tighter_upper(f.upper.take(), Some(b));
                } else if !v.is_boolean() {
                    return Err(invalid("exclusiveMaximum must be a number or boolean"));
                }
            }
            "multipleOf" => {
                let m = get_number(v, kw)?;
                if m.as_f64().unwrap_or(0.0) <= 0.0 {
                    return Err(invalid("multipleOf must be positive"));
                }
                f.multiple_of = Some(m);
            }
            "minLength" => f.min_length = get_count(v, kw)?,
            "maxLength" => f.max_length = Some(get_count(v, kw)?),
            "pattern" => f.pattern = Some(v.as_str().ok_or_else(|| invalid("pattern must be a string"))?.to_string()),
            "format" => {
                if let Some(s) = v.as_str() {
                    f.format = Some(s.to_string());
                }
            }
            "items" => {
                if v.is_array() {
                    if cx.lossy {
                        cx.lost = true;
                        continue;
                    }
                    return Err(CanonicalError::Unsupported {
                        keyword: "items".into(),
                    });
                }
                f.items = Some(parse(v, cx)?);
            }
            "minItems" => f.min_items = get_count(v, kw)?,
            "maxItems" => f.max_items = Some(get_count(v, kw)?),
            "uniqueItems" => f.unique_items = v == &Value::Bool(true),
            "contains" => f.contains = Some(parse(v, cx)?),
            "properties" => {
                let props = v.as_object().ok_or_else(|| invalid("properties must be an object"))?;
                for (name, sub) in props {
                    f.properties.insert(name.clone(), parse(sub, cx)?);
                }
            }
            "required" => {
                let names = v.as_array().ok_or_else(|| invalid("required must be an array"))?;
                for n in names {
                    f.required
                        .insert(n.as_str().ok_or_else(|| invalid("required entries must be strings"))?.to_string());
                }
            }
            "additionalProperties" => {
                if obj.contains_key("patternProperties") && cx.lossy {
                    continue;
                }
                f.additional = Some(parse(v, cx)?);
            }
            "minProperties" => f.min_properties = get_count(v, kw)?,
            "maxProperties" => f.max_properties = Some(get_count(v, kw)?),
            "allOf" => {
                for sub in v.as_array().ok_or_else(|| invalid("allOf must be an array"))? {
                    parts.push(parse(sub, cx)?);
                }
            }
            "anyOf" => {
                let mut branches = Vec::new();
                for sub in v.as_array().ok_or_else(|| invalid("anyOf must be an array"))? {
                    branches.push(parse(sub, cx)?);
                }
                parts.push(any_of(branches));
            }
            "oneOf" => {
                let mut branches = Vec::new();
                for sub in v.as_array().ok_or_else(|| invalid("oneOf must be an array"))? {
                    branches.push(parse(sub, cx)?);
                }
                parts.push(one_of(branches, cx)?);
            }
            "not" => f.nots.push(parse(v, cx)?),
            k if ANNOTATIONS.contains(&k) => {}
            k if UNSUPPORTED.contains(&k) => {
                if cx.lossy {
                    cx.lost = true;
                } else {
                    return Err(CanonicalError::Unsupported { keyword: k.to_string() });
                }
            }
            k => {
                f.extra.insert(k.to_string(), v.clone());
            }
        }
    }
    let mut node = simplify(f, cx)?;
    for part in parts {
        node = merge(node, part, cx)?;
    }
    Ok(node)
}

/// Union of alternatives, normalised: nested unions are flattened,
/// impossible branches dropped, duplicates removed and type-only branches
/// combined into one.
pub(crate) fn any_of(branches: Vec<Node>) -> Node {
    let mut flat_list = Vec::new();
    let mut stack: Vec<Node> = branches.into_iter().rev().collect();
    while let Some(b) = stack.pop() {
        match b {
            Node::AnyOf(inner) => stack.extend(inner.into_iter().rev()),
            Node::False => {}
            Node::True => return Node::True,
            other => flat_list.push(other),
        }
    }
    let mut out: Vec<Node> = Vec::new();
    let mut type_slot: Option<usize> = None;
    for b in flat_list {
        if let Node::Flat(f) = &b {
            if f.is_type_only() {
                match type_slot {
                    Some(i) => {
                        if let Node::Flat(existing) = &mut out[i] {
                            existing.types |= f.types;
                        }
                    }
                    None => {
                        type_slot = Some(out.len());
                        out.push(flat(Flat::typed(f.types)));
                    }
                }
                continue;
            }
        }
        if !out.contains(&b) {
            out.push(b);
        }
    }
    if let Some(i) = type_slot {
        if let Node::Flat(f) = &out[i] {
            if f.types == ALL {
                return Node::True;
            }
        }
    }
    match out.len() {
        0 => Node::False,
        1 => out.pop().unwrap_or(Node::False),
        _ => Node::AnyOf(out),
    }
}

/// Exactly-one-of, normalised. Branches with disjoint types become a union.
pub(crate) fn one_of(branches: Vec<Node>, cx: &mut Ctx) -> Result<Node, CanonicalError> {
    let mut rest: Vec<Node> = branches.into_iter().filter(|b| *b != Node::False).collect();
    let trues = rest.iter().filter(|b| **b == Node::True).count();
    if trues >= 2 {
        return Ok(Node::False);
    }
    if trues == 1 {
        rest.retain(|b| *b != Node::True);
        if rest.is_empty() {
            return Ok(Node::True);
        }
        let mut f = Flat::any();
        f.nots.push(any_of(rest));
        return simplify(f, cx);
    }
    match rest.len() {
        0 => return Ok(Node::False),
        1 => return Ok(rest.pop().unwrap_or(Node::False)),
        _ => {}
    }
    let types: Vec<u8> = rest.iter().map(possible_types).collect();
    let disjoint = types
        .iter()
        .enumerate()
        .all(|(i, a)| types[i + 1..].iter().all(|b| a & b == 0));
    if disjoint {
        return Ok(any_of(rest));
    }
    if let Some(n) = exclusive_union(&rest, cx.lossy) {
        return Ok(n);
    }
    Ok(Node::OneOf(rest))
}

/// Largest rewrite of `oneOf` into a union of exclusive branches that is
/// still preferred over keeping the `oneOf`.
const EXCLUSIVE_UNION_LIMIT: usize = 400;

/// `oneOf[A, B, ..]` as `anyOf[A ∧ ¬B ∧ .., B ∧ ¬A ∧ ..]`, when every
/// negation can be pushed inwards and the result stays small.
fn exclusive_union(branches: &[Node], lossy: bool) -> Option<Node> {
    let mut trial = Ctx::new(EXCLUSIVE_UNION_LIMIT * 4, lossy);
    let mut negations = Vec::with_capacity(branches.len());
    for b in branches {
        negations.push(negate(b, &mut trial).ok()??);
    }
    let mut out = Vec::with_capacity(branches.len());
    for (i, b) in branches.iter().enumerate() {
        let mut acc = b.clone();
        for (j, n) in negations.iter().enumerate() {
            if i != j {
                acc = merge(acc, n.clone(), &mut trial).ok()?;
                if size(&acc) > EXCLUSIVE_UNION_LIMIT {
                    return None;
                }
            }
        }
        out.push(acc);
    }
    if trial.lost {
        return None;
    }
    let union = any_of(out);
    (size(&union) <= EXCLUSIVE_UNION_LIMIT).then_some(union)
}

fn size(node: &Node) -> usize {
    match node {
        Node::True | Node::False => 1,
        Node::Flat(f) => {
            1 + f.properties.values().map(size).sum::<usize>()
                + f.items.as_ref().map_or(0, size)
                + f.additional.as_ref().map_or(0, size)
                + f.contains.as_ref().map_or(0, size)
                + f.nots.iter().map(size).sum::<usize>()
                + f.enumeration.as_ref().map_or(0, |e| e.len())
        }
        Node::AnyOf(xs) | Node::OneOf(xs) => 1 + xs.iter().map(size).sum::<usize>(),
    }
}

/// Conjunction of two canonical nodes.
pub(crate) fn merge(a: Node, b: Node, cx: &mut Ctx) -> Result<Node, CanonicalError> {
    match (a, b) {
        (Node::False, _) | (_, Node::False) => Ok(Node::False),
        (Node::True, x) | (x, Node::True) => Ok(x),
        (Node::AnyOf(xs), other) | (other, Node::AnyOf(xs)) => {
            cx.charge(xs.len() * size(&other))?;
            let mut out = Vec::with_capacity(xs.len());
            for x in xs {
                out.push(merge(x, other.clone(), cx)?);
            }
            Ok(any_of(out))
        }
        (Node::OneOf(xs), other) | (other, Node::OneOf(xs)) => {
            cx.charge(xs.len() * size(&other))?;
            let mut out = Vec::with_capacity(xs.len());
            for x in xs {
                out.push(merge(x, other.clone(), cx)?);
            }
            one_of(out, cx)
        }
        (Node::Flat(x), Node::Flat(y)) => merge_flat(*x, *y, cx),
    }
}

fn merge_opt(a: Option<Node>, b: Option<Node>, cx: &mut Ctx) -> Result<Option<Node>, CanonicalError> {
    Ok(match (a, b) {
        (None, None) => None,
        (Some(x), None) | (None, Some(x)) => Some(x),
        (Some(x), Some(y)) => Some(merge(x, y, cx)?),
    })
}

fn merge_flat(a: Flat, b: Flat, cx: &mut Ctx) -> Result<Node, CanonicalError> {
    cx.charge(2)?;
    let mut r = Flat::any();
    r.types = a.types & b.types;
    r.enumeration = match (a.enumeration, b.enumeration) {
        (Some(x), Some(y)) => Some(x.into_iter().filter(|v| y.iter().any(|w| json_eq(v, w))).collect()),
        (Some(x), None) | (None, Some(x)) => Some(x),
        (None, None) => None,
    };
    r.lower = tighter_lower(a.lower, b.lower);
    r.upper = tighter_upper(a.upper, b.upper);
    r.multiple_of = match (a.multiple_of, b.multiple_of) {
        (Some(x), Some(y)) => match lcm_number(&x, &y) {
            Some(m) => Some(m),
            None => {
                cx.conflict("multipleOf")?;
                Some(x)
            }
        },
        (x, None) => x,
        (None, y) => y,
    };
    r.min_length = a.min_length.max(b.min_length);
    r.max_length = min_opt(a.max_length, b.max_length);
    r.pattern = match (a.pattern, b.pattern) {
        (Some(x), Some(y)) if x != y => {
            cx.conflict("pattern")?;
            Some(x)
        }
        (x, y) => x.or(y),
    };
    // `format` is an annotation for validation purposes; either side will do.
    r.format = a.format.or(b.format);
    r.items = merge_opt(a.items, b.items, cx)?;
    r.min_items = a.min_items.max(b.min_items);
    r.max_items = min_opt(a.max_items, b.max_items);
    r.unique_items = a.unique_items || b.unique_items;
    r.contains = match (a.contains, b.contains) {
        (Some(x), Some(y)) if x != y => {
            cx.conflict("contains")?;
            Some(x)
        }
        (x, y) => x.or(y),
    };
    let keys: BTreeSet<String> = a.properties.keys().chain(b.properties.keys()).cloned().collect();
    for k in keys {
        let sa = a
            .properties
            .get(&k)
            .or(a.additional.as_ref())
            .cloned()
            .unwrap_or(Node::True);
        let sb = b
            .properties
            .get(&k)
            .or(b.additional.as_ref())
            .cloned()
            .unwrap_or(Node::True);
        r.properties.insert(k, merge(sa, sb, cx)?);
    }
    r.required = a.required.union(&b.required).cloned().collect();
    r.additional = merge_opt(a.additional, b.additional, cx)?;
    r.min_properties = a.min_properties.max(b.min_properties);
    r.max_properties = min_opt(a.max_properties, b.max_properties);
    r.nots = a.nots;
    for n in b.nots {
        if !r.nots.contains(&n) {
            r.nots.push(n);
        }
    }
    r.extra = b.extra;
    r.extra.extend(a.extra);
    simplify(r, cx)
}

fn min_opt(a: Option<u64>, b: Option<u64>) -> Option<u64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Exact rational value of a JSON number's decimal representation.
pub(crate) fn to_rational(n: &Number) -> Option<(i128, i128)> {
    if let Some(i) = as_i128(n) {
        return Some((i, 1));
    }
    let text = n.to_string();
    let (mantissa, exp) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], text[i + 1..].parse::<i32>().ok()?),
        None => (text.as_str(), 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(i) => (&mantissa[..i], &mantissa[i + 1..]),
        None => (mantissa, ""),
    };
    let digits = format!("{int_part}{frac_part}");
    if digits.len() > 30 {
        return None;
    }
    let mut num: i128 = digits.parse().ok()?;
    let mut scale = frac_part.len() as i32 - exp;
    while scale < 0 {
        num = num.checked_mul(10)?;
        scale += 1;
    }
    if scale > 30 {
        return None;
    }
    let mut den: i128 = 10i128.checked_pow(scale as u32)?;
    let g = gcd(num.abs(), den);
    if g > 1 {
        num /= g;
        den /= g;
    }
    Some((if neg { -num } else { num }, den))
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.abs()
}

fn rational_number(num: i128, den: i128) -> Option<Number> {
    if den == 1 {
        if let Ok(i) = i64::try_from(num) {
            return Some(Number::from(i));
        }
        return Number::from_f64(num as f64);
    }
    Number::from_f64(num as f64 / den as f64)
}

/// Least common multiple of two positive multipleOf values.
fn lcm_number(x: &Number, y: &Number) -> Option<Number> {
    if num_cmp(x, y) == std::cmp::Ordering::Equal {
        return Some(x.clone());
    }
    let (a, b) = to_rational(x)?;
    let (c, d) = to_rational(y)?;
    let g = gcd(a, c);
    let num = (a / g).checked_mul(c)?;
    let den = gcd(b, d);
    if num > (1i128 << 62) {
        return None;
    }
    rational_number(num, den)
}

fn ceil_div(a: i128, b: i128) -> i128 {
    let q = a.div_euclid(b);
    if a.rem_euclid(b) == 0 {
        q
    } else {
        q + 1
    }
}

/// Integer bounds implied by a numeric bound, when representable.
fn int_lower(b: &Bound) -> Option<i128> {
    if let Some(i) = as_i128(&b.value) {
        return Some(if b.exclusive { i + 1 } else { i });
    }
    let f = b.value.as_f64()?;
    if f.abs() > 1e30 {
        return None;
    }
    let c = f.ceil();
    Some(if b.exclusive && c == f { c as i128 + 1 } else { c as i128 })
}

fn int_upper(b: &Bound) -> Option<i128> {
    if let Some(i) = as_i128(&b.value) {
        return Some(if b.exclusive { i - 1 } else { i });
    }
    let f = b.value.as_f64()?;
    if f.abs() > 1e30 {
        return None;
    }
    let c = f.floor();
    Some(if b.exclusive && c == f { c as i128 - 1 } else { c as i128 })
}

fn int_number(i: i128) -> Number {
    match i64::try_from(i) {
        Ok(v) => Number::from(v),
        Err(_) => match u64::try_from(i) {
            Ok(v) => Number::from(v),
            Err(_) => Number::from_f64(i as f64).unwrap_or_else(|| Number::from(0)),
        },
    }
}

fn normalise_numeric(f: &mut Flat) {
    if f.types & NUMERIC == 0 {
        f.clear_numeric();
        return;
    }
    if let Some(m) = &f.multiple_of {
        if is_integral(m) && f.types & !NUMERIC == 0 {
            f.types &= !FRACTION;
        }
    }
    if f.types & NUMERIC == INTEGER {
        let mut step: Option<i128> = None;
        if let Some(m) = f.multiple_of.clone() {
            match to_rational(&m) {
                Some((num, _)) if num > 0 => {
                    if num == 1 {
                        f.multiple_of = None;
                    } else {
                        step = Some(num);
                        f.multiple_of = Some(int_number(num));
                    }
                }
                _ => {}
            }
        }
        let mut lo = f.lower.as_ref().and_then(int_lower);
        let mut hi = f.upper.as_ref().and_then(int_upper);
        if let Some(s) = step {
            lo = lo.map(|l| ceil_div(l, s) * s);
            hi = hi.map(|h| h.div_euclid(s) * s);
        }
        if f.lower.is_some() && lo.is_none() || f.upper.is_some() && hi.is_none() {
            // Out of representable range; leave as written.
            return;
        }
        if let (Some(l), Some(h)) = (lo, hi) {
            if l > h {
                f.types &= !INTEGER;
                f.clear_numeric();
                return;
            }
        }
        f.lower = lo.map(|l| Bound {
            value: int_number(l),
            exclusive: false,
        });
        f.upper = hi.map(|h| Bound {
            value: int_number(h),
            exclusive: false,
        });
        return;
    }
    if let (Some(lo), Some(hi)) = (&f.lower, &f.upper) {
        let c = num_cmp(&lo.value, &hi.value);
        let empty = c == std::cmp::Ordering::Greater
            || (c == std::cmp::Ordering::Equal && (lo.exclusive || hi.exclusive));
        if empty {
            f.types &= !NUMERIC;
            f.clear_numeric();
        }
    }
}

fn normalise_string(f: &mut Flat) {
    if f.types & STRING == 0 {
        f.clear_string();
        return;
    }
    if f.max_length.is_some_and(|m| f.min_length > m) {
        f.types &= !STRING;
        f.clear_string();
    }
}

fn normalise_array(f: &mut Flat) {
    if f.types & ARRAY == 0 {
        f.clear_array();
        return;
    }
    if f.items == Some(Node::True) {
        f.items = None;
    }
    if f.contains == Some(Node::True) {
        f.contains = None;
        f.min_items = f.min_items.max(1);
    }
    if f.items == Some(Node::False) {
        f.items = None;
        f.max_items = Some(0);
    }
    let dead = f.contains == Some(Node::False)
        || f.max_items.is_some_and(|m| f.min_items > m)
        || (f.max_items == Some(0) && f.contains.is_some());
    if dead {
        f.types &= !ARRAY;
        f.clear_array();
        return;
    }
    if f.max_items == Some(0) {
        f.items = None;
        f.unique_items = false;
    }
}

fn normalise_object(f: &mut Flat) {
    if f.types & OBJECT == 0 {
        f.clear_object();
        return;
    }
    if f.additional == Some(Node::True) {
        f.additional = None;
    }
    let mut dead = f
        .required
        .iter()
        .any(|r| f.properties.get(r) == Some(&Node::False));
    if f.additional == Some(Node::False) {
        f.properties.retain(|_, v| *v != Node::False);
        let allowed = f.properties.len() as u64;
        dead |= f.required.iter().any(|r| !f.properties.contains_key(r));
        dead |= f.min_properties > allowed;
        if f.max_properties.is_some_and(|m| m >= allowed) {
            f.max_properties = None;
        }
        if allowed == 0 {
            f.max_properties = Some(0);
        }
    } else if f.additional.is_some() {
        // A property listed with the same schema as additionalProperties is redundant.
        let add = f.additional.clone();
        f.properties.retain(|_, v| Some(&*v) != add.as_ref());
    }
    if let Some(m) = f.max_properties {
        dead |= (f.required.len() as u64) > m || f.min_properties > m;
    }
    if dead {
        f.types &= !OBJECT;
        f.clear_object();
        return;
    }
    if f.max_properties == Some(0) {
        f.properties.clear();
        f.additional = None;
        f.min_properties = 0;
    }
    if f.min_properties <= f.required.len() as u64 {
        f.min_properties = 0;
    }
    if f.additional.is_none() {
        f.properties.retain(|_, v| *v != Node::True);
    }
}

/// Applies the single-schema rewrite rules to a conjunction.
pub(crate) fn simplify(mut f: Flat, cx: &mut Ctx) -> Result<Node, CanonicalError> {
    cx.charge(1)?;
    let mut pending: Vec<Node> = std::mem::take(&mut f.nots);
    let mut kept: Vec<Node> = Vec::new();
    let mut merges: Vec<Node> = Vec::new();
    while let Some(n) = pending.pop() {
        match n {
            Node::False => {}
            Node::True => return Ok(Node::False),
            Node::AnyOf(xs) => pending.extend(xs),
            Node::Flat(x) if x.is_type_only() => f.types &= !x.types,
            other => match negate(&other, cx)? {
                Some(neg) => merges.push(neg),
                None => {
                    if !kept.contains(&other) {
                        kept.push(other);
                    }
                }
            },
        }
    }
    kept.reverse();
    f.nots = kept;
    if !merges.is_empty() {
        let mut node = simplify(f, cx)?;
        for m in merges {
            node = merge(node, m, cx)?;
        }
        return Ok(node);
    }
    normalise_numeric(&mut f);
    normalise_string(&mut f);
    normalise_array(&mut f);
    normalise_object(&mut f);
    if f.types == 0 {
        return Ok(Node::False);
    }
    let types = f.types;
    f.nots.retain(|n| possible_types(n) & types != 0);
    if let Some(values) = f.enumeration.take() {
        let rest = render(&flat(f.clone()));
        let mut kept: Vec<Value> = Vec::new();
        for v in values {
            let ok = validate::is_valid(&rest, &v).map_err(|e| invalid(e.to_string()))?;
            if ok && !kept.iter().any(|k| json_eq(k, &v)) {
                kept.push(v);
            }
        }
        if kept.is_empty() {
            return Ok(Node::False);
        }
        let mut e = Flat::any();
        e.enumeration = Some(kept);
        e.extra = f.extra;
        return Ok(flat(e));
    }
    let mut probe = f.clone();
    probe.extra.clear();
    if probe == Flat::any() && f.extra.is_empty() {
        return Ok(Node::True);
    }
    Ok(flat(f))
}

fn negate_or_residual(node: &Node, cx: &mut Ctx) -> Result<Node, CanonicalError> {
    match negate(node, cx)? {
        Some(n) => Ok(n),
        None => {
            let mut f = Flat::any();
            f.nots.push(node.clone());
            Ok(flat(f))
        }
    }
}

/// Pushes a negation inwards. Returns `None` when the negation cannot be
/// expressed more simply than `{"not": node}`.
pub(crate) fn negate(node: &Node, cx: &mut Ctx) -> Result<Option<Node>, CanonicalError> {
    match node {
        Node::True => Ok(Some(Node::False)),
        Node::False => Ok(Some(Node::True)),
        Node::OneOf(_) => Ok(None),
        Node::AnyOf(xs) => {
            let mut acc = Node::True;
            for x in xs {
                let Some(n) = negate(x, cx)? else { return Ok(None) };
                acc = match merge(acc, n, cx) {
                    Ok(m) => m,
                    Err(CanonicalError::ComplexityBudgetExceeded { .. }) | Err(CanonicalError::Unmergeable { .. }) => {
                        return Ok(None)
                    }
                    Err(e) => return Err(e),
                };
            }
            Ok(Some(acc))
        }
        Node::Flat(f) => negate_flat(f, cx),
    }
}

fn negate_flat(f: &Flat, cx: &mut Ctx) -> Result<Option<Node>, CanonicalError> {
    let mut branches: Vec<Flat> = Vec::new();
    let mut extra_nodes: Vec<Node> = Vec::new();
    let mut groups = 0usize;
    let mut residuals = 0usize;
    let residual = |domain: u8, inner: Flat| {
        let mut b = Flat::typed(domain);
        b.nots.push(flat(inner));
        b
    };
    if f.types != ALL {
        groups += 1;
        branches.push(Flat::typed(ALL & !f.types));
    }
    if let Some(values) = &f.enumeration {
        groups += 1;
        residuals += 1;
        let mut inner = Flat::any();
        inner.enumeration = Some(values.clone());
        branches.push(residual(ALL, inner));
    }
    let nd = f.types & NUMERIC;
    if nd != 0 {
        if let Some(lo) = &f.lower {
            groups += 1;
            let mut b = Flat::typed(nd);
            b.upper = Some(Bound {
                value: lo.value.clone(),
                exclusive: !lo.exclusive,
            });
            branches.push(b);
        }
        if let Some(hi) = &f.upper {
            groups += 1;
            let mut b = Flat::typed(nd);
            b.lower = Some(Bound {
                value: hi.value.clone(),
                exclusive: !hi.exclusive,
            });
            branches.push(b);
        }
        if let Some(m) = &f.multiple_of {
            groups += 1;
            residuals += 1;
            let mut inner = Flat::any();
            inner.multiple_of = Some(m.clone());
            branches.push(residual(nd, inner));
        }
    }
    if f.types & STRING != 0 {
        if f.min_length > 0 {
            groups += 1;
            let mut b = Flat::typed(STRING);
            b.max_length = Some(f.min_length - 1);
            branches.push(b);
        }
        if let Some(m) = f.max_length {
            groups += 1;
            let mut b = Flat::typed(STRING);
            b.min_length = m + 1;
            branches.push(b);
        }
        if let Some(p) = &f.pattern {
            groups += 1;
            residuals += 1;
            let mut inner = Flat::any();
            inner.pattern = Some(p.clone());
            branches.push(residual(STRING, inner));
        }
    }
    if f.types & ARRAY != 0 {
        if f.min_items > 0 {
            groups += 1;
            let mut b = Flat::typed(ARRAY);
            b.max_items = Some(f.min_items - 1);
            branches.push(b);
        }
        if let Some(m) = f.max_items {
            groups += 1;
            let mut b = Flat::typed(ARRAY);
            b.min_items = m + 1;
            branches.push(b);
        }
        if f.unique_items {
            groups += 1;
            residuals += 1;
            let mut inner = Flat::any();
            inner.unique_items = true;
            branches.push(residual(ARRAY, inner));
        }
        if let Some(items) = &f.items {
            groups += 1;
            let mut b = Flat::typed(ARRAY);
            b.contains = Some(negate_or_residual(items, cx)?);
            branches.push(b);
        }
        if let Some(c) = &f.contains {
            groups += 1;
            let mut b = Flat::typed(ARRAY);
            b.items = Some(negate_or_residual(c, cx)?);
            branches.push(b);
        }
    }
    if f.types & OBJECT != 0 {
        for r in &f.required {
            groups += 1;
            let mut b = Flat::typed(OBJECT);
            b.properties.insert(r.clone(), Node::False);
            branches.push(b);
        }
        for (k, s) in &f.properties {
            if *s == Node::True {
                continue;
            }
            groups += 1;
            let mut b = Flat::typed(OBJECT);
            b.required.insert(k.clone());
            b.properties.insert(k.clone(), negate_or_residual(s, cx)?);
            branches.push(b);
        }
        if let Some(a) = &f.additional {
            groups += 1;
            residuals += 1;
            let mut inner = Flat::any();
            inner.properties = f.properties.keys().map(|k| (k.clone(), Node::True)).collect();
            inner.additional = Some(a.clone());
            branches.push(residual(OBJECT, inner));
        }
        if f.min_properties > 0 {
            groups += 1;
            let mut b = Flat::typed(OBJECT);
            b.max_properties = Some(f.min_properties - 1);
            branches.push(b);
        }
        if let Some(m) = f.max_properties {
            groups += 1;
            let mut b = Flat::typed(OBJECT);
            b.min_properties = m + 1;
            branches.push(b);
        }
    }
    for n in &f.nots {
        groups += 1;
        extra_nodes.push(n.clone());
    }
    if groups == 0 {
        return Ok(Some(Node::False));
    }
    if groups == 1 && residuals == 1 {
        return Ok(None);
    }
    let mut nodes = Vec::with_capacity(branches.len() + extra_nodes.len());
    for b in branches {
        nodes.push(simplify(b, cx)?);
    }
    nodes.extend(extra_nodes);
    Ok(Some(any_of(nodes)))
}

fn type_names(bits: u8) -> Vec<&'static str> {
    let mut names = Vec::new();
    if bits & ARRAY != 0 {
        names.push("array");
    }
    if bits & BOOLEAN != 0 {
        names.push("boolean");
    }
    if bits & NUMERIC == INTEGER {
        names.push("integer");
    }
    if bits & NULL != 0 {
        names.push("null");
    }
    if bits & FRACTION != 0 {
        names.push("number");
    }
    if bits & OBJECT != 0 {
        names.push("object");
    }
    if bits & STRING != 0 {
        names.push("string");
    }
    names
}

fn number_value(n: &Number) -> Value {
    normalise_number(n)
}

/// Renders a node back to a JSON Schema value.
pub(crate) fn render(node: &Node) -> Value {
    match node {
        Node::True => Value::Bool(true),
        Node::False => Value::Bool(false),
        Node::AnyOf(xs) => {
            let mut m = Map::new();
            m.insert("anyOf".into(), Value::Array(xs.iter().map(render).collect()));
            Value::Object(m)
        }
        Node::OneOf(xs) => {
            let mut m = Map::new();
            m.insert("oneOf".into(), Value::Array(xs.iter().map(render).collect()));
            Value::Object(m)
        }
        Node::Flat(f) => render_flat(f),
    }
}

fn render_flat(f: &Flat) -> Value {
    let mut m = Map::new();
    for (k, v) in &f.extra {
        m.insert(k.clone(), v.clone());
    }
    let mut nots: Vec<Value> = f.nots.iter().map(render).collect();
    if f.types != ALL {
        let names = type_names(f.types);
        if f.types & NUMERIC == FRACTION {
            nots.push(serde_json::json!({"type": "integer"}));
        }
        m.insert(
            "type".into(),
            if names.len() == 1 {
                Value::String(names[0].into())
            } else {
                Value::Array(names.into_iter().map(|n| Value::String(n.into())).collect())
            },
        );
    }
    if let Some(e) = &f.enumeration {
        m.insert("enum".into(), Value::Array(e.clone()));
    }
    if let Some(b) = &f.lower {
        let key = if b.exclusive { "exclusiveMinimum" } else { "minimum" };
        m.insert(key.into(), number_value(&b.value));
    }
    if let Some(b) = &f.upper {
        let key = if b.exclusive { "exclusiveMaximum" } else { "maximum" };
        m.insert(key.into(), number_value(&b.value));
    }
    if let Some(x) = &f.multiple_of {
        m.insert("multipleOf".into(), number_value(x));
    }
    if f.min_length > 0 {
        m.insert("minLength".into(), f.min_length.into());
    }
    if let Some(x) = f.max_length {
        m.insert("maxLength".into(), x.into());
    }
    if let Some(p) = &f.pattern {
        m.insert("pattern".into(), Value::String(p.clone()));
    }
    if let Some(p) = &f.format {
        m.insert("format".into(), Value::String(p.clone()));
    }
    if let Some(i) = &f.items {
        m.insert("items".into(), render(i));
    }
    if f.min_items > 0 {
        m.insert("minItems".into(), f.min_items.into());
    }
    if let Some(x) = f.max_items {
        m.insert("maxItems".into(), x.into());
    }
    if f.unique_items {
        m.insert("uniqueItems".into(), Value::Bool(true));
    }
    if let Some(c) = &f.contains {
        m.insert("contains".into(), render(c));
    }
    if !f.properties.is_empty() {
        let props: Map<String, Value> = f.properties.iter().map(|(k, v)| (k.clone(), render(v))).collect();
        m.insert("properties".into(), Value::Object(props));
    }
    if !f.required.is_empty() {
        m.insert(
            "required".into(),
            Value::Array(f.required.iter().map(|r| Value::String(r.clone())).collect()),
        );
    }
    if let Some(a) = &f.additional {
        m.insert("additionalProperties".into(), render(a));
    }
    if f.min_properties > 0 {
        m.insert("minProperties".into(), f.min_properties.into());
    }
    if let Some(x) = f.max_properties {
        m.insert("maxProperties".into(), x.into());
    }
    match nots.len() {
        0 => {}
        1 => {
            m.insert("not".into(), nots.pop().unwrap_or(Value::Bool(false)));
        }
        _ => {
            let mut inner = Map::new();
            inner.insert("anyOf".into(), Value::Array(nots));
            m.insert("not".into(), Value::Object(inner));
        }
    }
    if m.is_empty() {
        return Value::Bool(true);
    }
    Value::Object(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validate::is_valid;
    use serde_json::json;

    fn canon(v: Value) -> Value {
        canonicalise(&v).unwrap().into_value()
    }

    #[test]
    fn merges_allof_into_minimal_object() {
        let s = json!({"type": "object", "allOf": [
            {"additionalProperties": false},
            {"properties": {"a": {"type": "string"}}}
        ]});
        assert_eq!(canon(s), json!({"type": "object", "maxProperties": 0}));
    }

    #[test]
    fn merges_allof_numeric() {
        assert_eq!(
            canon(json!({"allOf": [{"type": "integer"}, {"minimum": 5}]})),
            json!({"type": "integer", "minimum": 5})
        );
    }

    #[test]
    fn empty_integer_range_is_false() {
        let c = canonicalise(&json!({"type": "integer", "minimum": 10, "maximum": 5})).unwrap();
        assert!(c.is_unsatisfiable());
        assert_eq!(c.as_value(), &json!(false));
    }

    #[test]
    fn true_stays_true() {
        let c = canonicalise(&json!(true)).unwrap();
        assert!(c.is_trivial());
        assert!(!c.is_unsatisfiable());
        assert_eq!(canon(json!({})), json!(true));
    }

    #[test]
    fn exclusive_integer_bounds_become_inclusive() {
        assert_eq!(
            canon(json!({"type": "integer", "exclusiveMinimum": 0, "exclusiveMaximum": 10})),
            json!({"type": "integer", "minimum": 1, "maximum": 9})
        );
        assert_eq!(
            canon(json!({"type": "integer", "minimum": 0, "exclusiveMinimum": true})),
            json!({"type": "integer", "minimum": 1})
        );
        assert_eq!(
            canon(json!({"type": "integer", "minimum": 0.5, "maximum": 9.5})),
            json!({"type": "integer", "minimum": 1, "maximum": 9})
        );
    }

    #[test]
    fn number_keeps_exclusive_bounds() {
        assert_eq!(
            canon(json!({"type": "number", "exclusiveMinimum": 0})),
            json!({"type": "number", "exclusiveMinimum": 0})
        );
    }

    #[test]
    fn merge_takes_tighter_bounds() {
        let a = canonicalise(&json!({"minimum": 0})).unwrap();
        let b = canonicalise(&json!({"minimum": 3, "maximum": 9})).unwrap();
        let m = merge_constraints(&a, &b).unwrap();
        assert_eq!(m.as_value(), &json!({"minimum": 3, "maximum": 9}));
    }

    #[test]
    fn merge_disjoint_types_is_false() {
        let a = canonicalise(&json!({"type": "string"})).unwrap();
        let b = canonicalise(&json!({"type": "integer"})).unwrap();
        assert!(merge_constraints(&a, &b).unwrap().is_unsatisfiable());
    }

    #[test]
    fn merge_true_is_identity() {
        let t = canonicalise(&json!(true)).unwrap();
        let s = canonicalise(&json!({"type": "string", "minLength": 2})).unwrap();
        assert_eq!(merge_constraints(&t, &s).unwrap(), s);
        assert_eq!(merge_constraints(&s, &t).unwrap(), s);
    }

    #[test]
    fn multiple_of_rounds_integer_bounds() {
        assert!(canonicalise(&json!({"type": "integer", "minimum": 1, "maximum": 2, "multipleOf": 3}))
            .unwrap()
            .is_unsatisfiable());
        assert_eq!(
            canon(json!({"type": "integer", "minimum": 1, "maximum": 10, "multipleOf": 3})),
            json!({"type": "integer", "minimum": 3, "maximum": 9, "multipleOf": 3})
        );
        assert_eq!(canon(json!({"type": "integer", "multipleOf": 0.5})), json!({"type": "integer"}));
        assert_eq!(
            canon(json!({"type": "integer", "multipleOf": 1.5})),
            json!({"type": "integer", "multipleOf": 3})
        );
    }

    #[test]
    fn multiple_of_lcm() {
        assert_eq!(
            canon(json!({"allOf": [{"multipleOf": 4}, {"multipleOf": 6}]})),
            json!({"multipleOf": 12})
        );
        let c = canon(json!({"allOf": [{"multipleOf": 0.3}, {"multipleOf": 0.5}]}));
        assert_eq!(c, json!({"multipleOf": 1.5}));
    }

    #[test]
    fn enum_is_filtered_by_siblings() {
        assert_eq!(
            canon(json!({"type": "integer", "enum": [1, "a", 2.5, 3], "minimum": 2})),
            json!({"enum": [3]})
        );
        assert!(canonicalise(&json!({"enum": ["a"], "type": "integer"})).unwrap().is_unsatisfiable());
        assert_eq!(canon(json!({"const": null})), json!({"enum": [null]}));
    }

    #[test]
    fn keywords_for_absent_types_are_dropped() {
        assert_eq!(
            canon(json!({"type": "string", "minimum": 3, "items": {"type": "integer"}})),
            json!({"type": "string"})
        );
    }

    #[test]
    fn anyof_distributes_and_collapses() {
        assert_eq!(
            canon(json!({"anyOf": [{"type": "string"}, {"type": "integer"}]})),
            json!({"type": ["integer", "string"]})
        );
        assert_eq!(
            canon(json!({"type": "integer", "anyOf": [{"minimum": 3}, {"type": "string"}]})),
            json!({"type": "integer", "minimum": 3})
        );
    }

    #[test]
    fn oneof_with_disjoint_types_becomes_anyof() {
        assert_eq!(
            canon(json!({"oneOf": [{"type": "string"}, {"type": "integer"}]})),
            json!({"type": ["integer", "string"]})
        );
        assert_eq!(
            canon(json!({"oneOf": [{"type": "integer"}, {"minimum": 2}]})),
            json!({"anyOf": [
                {"type": "integer", "maximum": 1},
                {"type": ["array", "boolean", "null", "number", "object", "string"], "minimum": 2, "not": {"type": "integer"}}
            ]})
        );
        let c = canon(json!({"oneOf": [{"pattern": "a"}, {"pattern": "b"}]}));
        assert!(c.get("oneOf").is_some());
    }

    #[test]
    fn not_of_type_is_complement() {
        assert_eq!(
            canon(json!({"not": {"type": ["string", "number", "array", "object", "boolean"]}})),
            json!({"type": "null"})
        );
        assert_eq!(
            canon(json!({"type": "number", "not": {"type": "integer"}})),
            json!({"type": "number", "not": {"type": "integer"}})
        );
    }

    #[test]
    fn double_negation_cancels() {
        assert_eq!(
            canon(json!({"not": {"not": {"type": "integer", "minimum": 1}}})),
            json!({"type": "integer", "minimum": 1})
        );
    }

    #[test]
    fn negation_of_integer_range() {
        let n = negate_for_testing(&json!({"type": "integer", "minimum": 0, "maximum": 10})).unwrap();
        assert_eq!(
            n.as_value(),
            &json!({"anyOf": [{"type": "integer", "maximum": -1}, {"type": "integer", "minimum": 11}]})
        );
        assert!(is_valid(n.as_value(), &json!(-5)).unwrap());
        assert!(!is_valid(n.as_value(), &json!(5)).unwrap());
    }

    #[test]
    fn negation_of_plain_string_is_empty() {
        assert_eq!(
            negate_for_testing(&json!({"type": "string"})).unwrap_err(),
            NegateError::NothingToNegate
        );
    }

    #[test]
    fn negation_of_required() {
        let n = negate_for_testing(&json!({"type": "object", "required": ["a"]})).unwrap();
        assert_eq!(n.as_value(), &json!({"type": "object", "properties": {"a": false}}));
        assert!(is_valid(n.as_value(), &json!({})).unwrap());
        assert!(!is_valid(n.as_value(), &json!({"a": 1})).unwrap());
    }

    #[test]
    fn conflicting_patterns() {
        let s = json!({"allOf": [{"pattern": "a"}, {"pattern": "b"}]});
        assert!(matches!(canonicalise(&s), Err(CanonicalError::Unmergeable { .. })));
        let (c, lost) = Canonicaliser { lossy: true, ..Default::default() }.run(&s).unwrap();
        assert!(lost);
        assert_eq!(c.as_value(), &json!({"pattern": "a"}));
    }

    #[test]
    fn budget_is_enforced() {
        let branches: Vec<Value> = (0..12).map(|i| json!({"anyOf": [{"minimum": i}, {"maximum": -i}, {"multipleOf": i + 2}]})).collect();
        let s = json!({"allOf": branches});
        let r = Canonicaliser { node_budget: 200, lossy: false }.run(&s);
        assert!(matches!(r, Err(CanonicalError::ComplexityBudgetExceeded { .. })));
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(to_rational(&Number::from_f64(0.1).unwrap()), Some((1, 10)));
        assert_eq!(to_rational(&Number::from_f64(1.5).unwrap()), Some((3, 2)));
        assert_eq!(to_rational(&Number::from_f64(1e-7).unwrap()), Some((1, 10_000_000)));
        assert_eq!(to_rational(&Number::from(12)), Some((12, 1)));
    }

    #[test]
    fn unknown_keywords_are_preserved() {
        assert_eq!(
            canon(json!({"type": "string", "x-internal": true, "description": "d"})),
            json!({"type": "string", "x-internal": true})
        );
    }
}
