//! Small helpers over `serde_json` values shared by several modules.

use std::cmp::Ordering;

use serde_json::{Number, Value};

/// Compares two JSON numbers. Integers are compared exactly, anything
/// involving a float goes through `f64`.
pub(crate) fn num_cmp(a: &Number, b: &Number) -> Ordering {
    match (as_i128(a), as_i128(b)) {
        (Some(x), Some(y)) => x.cmp(&y),
        _ => {
            let x = a.as_f64().unwrap_or(f64::NAN);
            let y = b.as_f64().unwrap_or(f64::NAN);
            x.partial_cmp(&y).unwrap_or(Ordering::Equal)
        }
    }
}

pub(crate) fn as_i128(n: &Number) -> Option<i128> {
    if let Some(i) = n.as_i64() {
        Some(i as i128)
    } else {
        n.as_u64().map(|u| u as i128)
    }
}

/// True when the number has no fractional part.
pub(crate) fn is_integral(n: &Number) -> bool {
    if n.is_i64() || n.is_u64() {
        return true;
    }
    n.as_f64().is_some_and(|f| f.is_finite() && f.fract() == 0.0)
}

/// Structural JSON equality where `1` and `1.0` are equal.
pub(crate) fn json_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => num_cmp(x, y) == Ordering::Equal,
        (Value::Array(x), Value::Array(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| json_eq(p, q))
        }
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len()
                && x.iter()
                    .all(|(k, v)| y.get(k).is_some_and(|w| json_eq(v, w)))
        }
        _ => a == b,
    }
}

/// Builds a JSON number from an `f64`, preferring the integer
/// representation when the value is integral and fits.
pub(crate) fn number_from_f64(f: f64) -> Value {
    if f.is_finite() && f.fract() == 0.0 && f.abs() < 9.0e15 {
        Value::from(f as i64)
    } else {
        Number::from_f64(f).map(Value::Number).unwrap_or(Value::Null)
    }
}

/// Rewrites integral floats (`5.0`) as integers so structural comparison
/// of generated schemas is stable.
pub(crate) fn normalise_number(n: &Number) -> Value {
    if n.is_f64() {
        number_from_f64(n.as_f64().unwrap_or(0.0))
    } else {
        Value::Number(n.clone())
    }
}

/// Counts nodes of a JSON tree.
pub(crate) fn node_count(v: &Value) -> usize {
    match v {
        Value::Array(a) => 1 + a.iter().map(node_count).sum::<usize>(),
        Value::Object(o) => 1 + o.values().map(node_count).sum::<usize>(),
        _ => 1,
    }
}

/// Escapes one JSON pointer reference token.
pub(crate) fn escape_pointer_token(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn integer_and_float_compare_equal() {
        assert!(json_eq(&json!(1), &json!(1.0)));
        assert!(json_eq(&json!([1, {"a": 2.0}]), &json!([1.0, {"a": 2}])));
        assert!(!json_eq(&json!({"a": 1}), &json!({"a": 1, "b": 2})));
    }

    #[test]
    fn large_integers_compare_exactly() {
        let a: Number = (u64::MAX).into();
        let b: Number = (u64::MAX - 1).into();
        assert_eq!(num_cmp(&a, &b), Ordering::Greater);
    }

    #[test]
    fn integral_floats_render_as_integers() {
        assert_eq!(number_from_f64(5.0), json!(5));
        assert_eq!(number_from_f64(2.5), json!(2.5));
    }
}
