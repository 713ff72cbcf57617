//! JSON Schema validation for the draft-04 to draft-07 keyword subset used
//! by OpenAPI documents.
//!
//! This validator works directly on raw schema values and shares no code
//! with the canonicaliser or the generators, so it can serve as their test
//! oracle. `format` is treated as an annotation, as draft-07 does by
//! default.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use regex::Regex;
use serde_json::{Map, Number, Value};

use crate::json::{escape_pointer_token, is_integral, json_eq, num_cmp};

/// A single failed keyword.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// JSON pointer into the instance.
    pub path: String,
    pub keyword: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationResult {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidateError {
    #[error("unsupported keyword `{keyword}`: {reason}")]
    UnsupportedKeyword { keyword: String, reason: String },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
}

/// Keywords that would change validity but are not implemented.
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

/// Validates `instance` against `schema`, collecting every violation.
pub fn validate_instance(schema: &Value, instance: &Value) -> Result<ValidationResult, ValidateError> {
    let mut out = Vec::new();
    let mut path = String::new();
    check(schema, instance, &mut path, &mut out, true)?;
    Ok(ValidationResult {
        valid: out.is_empty(),
        violations: out,
    })
}

/// Validity only; stops at the first violation.
pub fn is_valid(schema: &Value, instance: &Value) -> Result<bool, ValidateError> {
    let mut out = Vec::new();
    let mut path = String::new();
    check(schema, instance, &mut path, &mut out, false)?;
    Ok(out.is_empty())
}

fn push(out: &mut Vec<Violation>, path: &str, keyword: &str, message: String) {
    out.push(Violation {
        path: path.to_string(),
        keyword: keyword.to_string(),
        message,
    });
}

fn check(
    schema: &Value,
    instance: &Value,
    path: &mut String,
    out: &mut Vec<Violation>,
    collect: bool,
) -> Result<(), ValidateError> {
    let obj = match schema {
        Value::Bool(true) => return Ok(()),
        Value::Bool(false) => {
            push(out, path, "false", "no value is allowed here".into());
            return Ok(());
        }
        Value::Object(o) => o,
        other => {
            return Err(ValidateError::InvalidSchema(format!(
                "schema must be an object or boolean, got {other}"
            )))
        }
    };
    for key in UNSUPPORTED {
        if obj.contains_key(*key) {
            return Err(ValidateError::UnsupportedKeyword {
                keyword: (*key).to_string(),
                reason: "not part of the supported keyword subset".into(),
            });
        }
    }
    for (keyword, value) in obj {
        if !collect && !out.is_empty() {
            return Ok(());
        }
        match keyword.as_str() {
            "type" => check_type(value, instance, path, out)?,
            "enum" => {
                let options = value
                    .as_array()
                    .ok_or_else(|| invalid("enum must be an array"))?;
                if !options.iter().any(|o| json_eq(o, instance)) {
                    push(out, path, "enum", "value is not one of the allowed values".into());
                }
            }
            "const" => {
                if !json_eq(value, instance) {
                    push(out, path, "const", format!("value must equal {value}"));
                }
            }
            "minimum" | "maximum" | "exclusiveMinimum" | "exclusiveMaximum" => {
                if let Value::Number(x) = instance {
                    check_bound(keyword, value, obj, x, path, out)?;
                }
            }
            "multipleOf" => {
                if let Value::Number(x) = instance {
                    let m = as_number(value, "multipleOf")?;
                    if m.as_f64().unwrap_or(0.0) <= 0.0 {
                        return Err(invalid("multipleOf must be positive"));
                    }
                    if !is_multiple(x, m) {
                        push(out, path, "multipleOf", format!("{x} is not a multiple of {m}"));
                    }
                }
            }
            "minLength" | "maxLength" => {
                if let Value::String(s) = instance {
                    let limit = as_count(value, keyword)?;
                    let len = s.chars().count() as u64;
                    let bad = if keyword == "minLength" { len < limit } else { len > limit };
                    if bad {
                        push(out, path, keyword, format!("string length {len} violates {keyword} {limit}"));
                    }
                }
            }
            "pattern" => {
                if let Value::String(s) = instance {
                    let p = value.as_str().ok_or_else(|| invalid("pattern must be a string"))?;
                    let re = compiled(p)?;
                    if !re.is_match(s) {
                        push(out, path, "pattern", format!("string does not match {p}"));
                    }
                }
            }
            "items" => {
                if let Value::Array(items) = instance {
                    if value.is_array() {
                        return Err(ValidateError::UnsupportedKeyword {
                            keyword: "items".into(),
                            reason: "tuple form of items".into(),
                        });
                    }
                    for (i, item) in items.iter().enumerate() {
                        let len = path.len();
                        path.push('/');
                        path.push_str(&i.to_string());
                        check(value, item, path, out, collect)?;
                        path.truncate(len);
                    }
                }
            }
            "contains" => {
                if let Value::Array(items) = instance {
                    let mut found = false;
                    for item in items {
                        if is_valid(value, item)? {
                            found = true;
                            break;
                        }
                    }
                    if !found {
                        push(out, path, "contains", "no item matches the contains schema".into());
                    }
                }
            }
            "minItems" | "maxItems" => {
                if let Value::Array(items) = instance {
                    let limit = as_count(value, keyword)?;
                    let len = items.len() as u64;
                    let bad = if keyword == "minItems" { len < limit } else { len > limit };
                    if bad {
                        push(out, path, keyword, format!("array length {len} violates {keyword} {limit}"));
                    }
                }
            }
            "uniqueItems" => {
                if let (Value::Bool(true), Value::Array(items)) = (value, instance) {
                    let dup = items
                        .iter()
                        .enumerate()
                        .any(|(i, a)| items[i + 1..].iter().any(|b| json_eq(a, b)));
                    if dup {
                        push(out, path, "uniqueItems", "array items are not unique".into());
                    }
                }
            }
            "properties" => {
                if let Value::Object(map) = instance {
                    let props = value
                        .as_object()
                        .ok_or_else(|| invalid("properties must be an object"))?;
                    for (name, sub) in props {
                        if let Some(v) = map.get(name) {
                            let len = path.len();
                            path.push('/');
                            path.push_str(&escape_pointer_token(name));
                            check(sub, v, path, out, collect)?;
                            path.truncate(len);
                        }
                    }
                }
            }
            "additionalProperties" => {
                if let Value::Object(map) = instance {
                    let declared = obj.get("properties").and_then(Value::as_object);
                    for (name, v) in map {
                        if declared.is_some_and(|d| d.contains_key(name)) {
                            continue;
                        }
                        let len = path.len();
                        path.push('/');
                        path.push_str(&escape_pointer_token(name));
                        if value == &Value::Bool(false) {
                            push(out, path, "additionalProperties", format!("property `{name}` is not allowed"));
                        } else {
                            check(value, v, path, out, collect)?;
                        }
                        path.truncate(len);
                    }
                }
            }
            "required" => {
                if let Value::Object(map) = instance {
                    let names = value
                        .as_array()
                        .ok_or_else(|| invalid("required must be an array"))?;
                    for name in names {
                        let name = name.as_str().ok_or_else(|| invalid("required entries must be strings"))?;
                        if !map.contains_key(name) {
                            push(out, path, "required", format!("property `{name}` is missing"));
                        }
                    }
                }
            }
            "minProperties" | "maxProperties" => {
                if let Value::Object(map) = instance {
                    let limit = as_count(value, keyword)?;
                    let len = map.len() as u64;
                    let bad = if keyword == "minProperties" { len < limit } else { len > limit };
                    if bad {
                        push(out, path, keyword, format!("object size {len} violates {keyword} {limit}"));
                    }
                }
            }
            "allOf" => {
                for sub in subschemas(value, "allOf")? {
                    check(sub, instance, path, out, collect)?;
                }
            }
            "anyOf" => {
                let mut matched = false;
                for sub in subschemas(value, "anyOf")? {
                    if is_valid(sub, instance)? {
                        matched = true;
                        break;
                    }
                }
                if !matched {
                    push(out, path, "anyOf", "value matches none of the alternatives".into());
                }
            }
            "oneOf" => {
                let mut count = 0;
                for sub in subschemas(value, "oneOf")? {
                    if is_valid(sub, instance)? {
                        count += 1;
                    }
                }
                if count != 1 {
                    push(out, path, "oneOf", format!("value matches {count} alternatives, expected exactly one"));
                }
            }
            "not"
                if is_valid(value, instance)? => {
                    push(out, path, "not", "value matches a forbidden schema".into());
                }
            _ => {}
        }
    }
    Ok(())
}

fn invalid(msg: &str) -> ValidateError {
    ValidateError::InvalidSchema(msg.to_string())
}

fn subschemas<'a>(value: &'a Value, keyword: &str) -> Result<&'a Vec<Value>, ValidateError> {
    value
        .as_array()
        .ok_or_else(|| ValidateError::InvalidSchema(format!("{keyword} must be an array")))
}

fn as_number<'a>(value: &'a Value, keyword: &str) -> Result<&'a Number, ValidateError> {
    match value {
        Value::Number(n) => Ok(n),
        _ => Err(ValidateError::InvalidSchema(format!("{keyword} must be a number"))),
    }
}

fn as_count(value: &Value, keyword: &str) -> Result<u64, ValidateError> {
    match value {
        Value::Number(n) if is_integral(n) && n.as_f64().unwrap_or(-1.0) >= 0.0 => {
            Ok(n.as_u64().unwrap_or_else(|| n.as_f64().unwrap_or(0.0) as u64))
        }
        _ => Err(ValidateError::InvalidSchema(format!(
            "{keyword} must be a non-negative integer"
        ))),
    }
}

fn check_type(value: &Value, instance: &Value, path: &str, out: &mut Vec<Violation>) -> Result<(), ValidateError> {
    let names: Vec<&str> = match value {
        Value::String(s) => vec![s.as_str()],
        Value::Array(a) => a
            .iter()
            .map(|v| v.as_str().ok_or_else(|| invalid("type entries must be strings")))
            .collect::<Result<_, _>>()?,
        _ => return Err(invalid("type must be a string or an array")),
    };
    let mut ok = false;
    for name in &names {
        let matches = match *name {
            "null" => instance.is_null(),
            "boolean" => instance.is_boolean(),
            "object" => instance.is_object(),
            "array" => instance.is_array(),
            "string" => instance.is_string(),
            "number" => instance.is_number(),
            "integer" => matches!(instance, Value::Number(n) if is_integral(n)),
            other => return Err(ValidateError::InvalidSchema(format!("unknown type `{other}`"))),
        };
        ok |= matches;
    }
    if !ok {
        push(out, path, "type", format!("value is not of type {}", names.join(" or ")));
    }
    Ok(())
}

fn check_bound(
    keyword: &str,
    value: &Value,
    schema: &Map<String, Value>,
    x: &Number,
    path: &str,
    out: &mut Vec<Violation>,
) -> Result<(), ValidateError> {
    use std::cmp::Ordering::*;
    match (keyword, value) {
        // Draft-04 boolean form modifies the sibling minimum/maximum.
        ("exclusiveMinimum" | "exclusiveMaximum", Value::Bool(_)) => Ok(()),
        ("minimum", Value::Number(b)) => {
            let excl = schema.get("exclusiveMinimum") == Some(&Value::Bool(true));
            let c = num_cmp(x, b);
            if c == Less || (excl && c == Equal) {
                push(out, path, "minimum", format!("{x} is below the minimum {b}"));
            }
            Ok(())
        }
        ("maximum", Value::Number(b)) => {
            let excl = schema.get("exclusiveMaximum") == Some(&Value::Bool(true));
            let c = num_cmp(x, b);
            if c == Greater || (excl && c == Equal) {
                push(out, path, "maximum", format!("{x} is above the maximum {b}"));
            }
            Ok(())
        }
        ("exclusiveMinimum", Value::Number(b)) => {
            if num_cmp(x, b) != Greater {
                push(out, path, "exclusiveMinimum", format!("{x} is not above {b}"));
            }
            Ok(())
        }
        ("exclusiveMaximum", Value::Number(b)) => {
            if num_cmp(x, b) != Less {
                push(out, path, "exclusiveMaximum", format!("{x} is not below {b}"));
            }
            Ok(())
        }
        _ => Err(ValidateError::InvalidSchema(format!("{keyword} has the wrong type"))),
    }
}

fn is_multiple(x: &Number, m: &Number) -> bool {
    if let (Some(a), Some(b)) = (crate::json::as_i128(x), crate::json::as_i128(m)) {
        return b != 0 && a % b == 0;
    }
    let (a, b) = (x.as_f64().unwrap_or(f64::NAN), m.as_f64().unwrap_or(f64::NAN));
    let q = a / b;
    if !q.is_finite() {
        return false;
    }
    (q - q.round()).abs() <= 1e-9 * q.abs().max(1.0)
}

type Compiled = Result<Arc<Regex>, ValidateError>;

static REGEX_CACHE: LazyLock<Mutex<HashMap<String, Compiled>>> =
    LazyLock::new(|| Mutex::new(HashMap::new()));

fn compiled(pattern: &str) -> Result<Arc<Regex>, ValidateError> {
    let mut cache = REGEX_CACHE.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(hit) = cache.get(pattern) {
        return hit.clone();
    }
    let result = translate_ecma(pattern)
        .and_then(|p| {
            Regex::new(&p).map_err(|e| ValidateError::UnsupportedKeyword {
                keyword: "pattern".into(),
                reason: e.to_string(),
            })
        })
        .map(Arc::new);
    if cache.len() > 4096 {
        cache.clear();
    }
    cache.insert(pattern.to_string(), result.clone());
    result
}

/// Rewrites the ECMA 262 constructs that the `regex` crate spells
/// differently and rejects the ones it cannot express.
pub(crate) fn translate_ecma(pattern: &str) -> Result<String, ValidateError> {
    let unsupported = |reason: &str| ValidateError::UnsupportedKeyword {
        keyword: "pattern".into(),
        reason: reason.to_string(),
    };
    let chars: Vec<char> = pattern.chars().collect();
    let mut out = String::with_capacity(pattern.len() + 8);
    let mut i = 0;
    let mut in_class = false;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '\\' => {
                let next = *chars.get(i + 1).ok_or_else(|| unsupported("trailing backslash"))?;
                match next {
                    '1'..='9' if !in_class => return Err(unsupported("backreferences")),
                    'c' => return Err(unsupported("control escapes")),
                    'u' => {
                        let hex: String = chars.iter().skip(i + 2).take(4).collect();
                        if hex.len() == 4 && hex.chars().all(|h| h.is_ascii_hexdigit()) {
                            out.push_str(&format!("\\x{{{hex}}}"));
                            i += 6;
                            continue;
                        }
                        return Err(unsupported("malformed \\u escape"));
                    }
                    'd' => out.push_str(if in_class { "0-9" } else { "[0-9]" }),
                    'D' if !in_class => out.push_str("[^0-9]"),
                    'w' => out.push_str(if in_class { "A-Za-z0-9_" } else { "[A-Za-z0-9_]" }),
                    'W' if !in_class => out.push_str("[^A-Za-z0-9_]"),
                    '/' => out.push('/'),
                    '-' => out.push_str("\\-"),
                    _ => {
                        out.push('\\');
                        out.push(next);
                    }
                }
                i += 2;
                continue;
            }
            '[' if !in_class => {
                in_class = true;
                out.push('[');
                if chars.get(i + 1) == Some(&'^') {
                    out.push('^');
                    i += 1;
                }
                if chars.get(i + 1) == Some(&']') {
                    // `[]` matches nothing in ECMA; `[^]` matches anything.
                    return Err(unsupported("empty character class"));
                }
                i += 1;
                continue;
            }
            '[' if in_class => out.push_str("\\["),
            ']' if in_class => {
                in_class = false;
                out.push(']');
            }
            '&' | '~' if in_class => {
                out.push('\\');
                out.push(c);
            }
            '(' if !in_class && chars.get(i + 1) == Some(&'?') => {
                match chars.get(i + 2) {
                    Some(':') => out.push_str("(?:"),
                    Some('<') if !matches!(chars.get(i + 3), Some('=') | Some('!')) => {
                        out.push_str("(?P<");
                        i += 3;
                        continue;
                    }
                    _ => return Err(unsupported("lookaround or inline flags")),
                }
                i += 3;
                continue;
            }
            '{' if !in_class => {
                if let Some(end) = quantifier_end(&chars, i) {
                    if out.is_empty() || out.ends_with('(') || out.ends_with('|') {
                        return Err(unsupported("quantifier without operand"));
                    }
                    out.extend(&chars[i..=end]);
                    i = end + 1;
                    continue;
                }
                out.push_str("\\{");
            }
            '}' if !in_class => out.push_str("\\}"),
            _ => out.push(c),
        }
        i += 1;
    }
    if in_class {
        return Err(unsupported("unterminated character class"));
    }
    Ok(out)
}

/// Index of the closing brace when `{` at `start` begins `{n}`, `{n,}` or `{n,m}`.
pub(crate) fn quantifier_end(chars: &[char], start: usize) -> Option<usize> {
    let mut i = start + 1;
    let digits = |i: &mut usize| {
        let from = *i;
        while *i < chars.len() && chars[*i].is_ascii_digit() {
            *i += 1;
        }
        *i > from
    };
    if !digits(&mut i) {
        return None;
    }
    if chars.get(i) == Some(&',') {
        i += 1;
        digits(&mut i);
    }
    (chars.get(i) == Some(&'}')).then_some(i)
}
