//! Random schemas and instances for equivalence testing. Deliberately
//! independent of the crate's own generators.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Map, Value};

const TYPES: &[&str] = &["null", "boolean", "integer", "number", "string", "array", "object"];
const KEYS: &[&str] = &["a", "b", "c"];
const PATTERNS: &[&str] = &["^a", "b$", "^[ab]*$", "a|c"];

pub fn random_schema<R: Rng>(rng: &mut R, depth: u32) -> Value {
    if depth == 0 || rng.gen_ratio(1, 10) {
        return match rng.gen_range(0..6) {
            0 => json!(true),
            1 => json!(false),
            _ => json!({"type": *TYPES.choose(rng).unwrap()}),
        };
    }
    let mut m = Map::new();
    let n = rng.gen_range(1..=4);
    for _ in 0..n {
        match rng.gen_range(0..26) {
            0 | 1 => {
                let t = if rng.gen_bool(0.7) {
                    json!(*TYPES.choose(rng).unwrap())
                } else {
                    let k = rng.gen_range(1..=3);
                    let v: Vec<&str> = TYPES.choose_multiple(rng, k).copied().collect();
                    json!(v)
                };
                m.insert("type".into(), t);
            }
            2 => {
                let k = rng.gen_range(1..=4);
                let vals: Vec<Value> = (0..k).map(|_| random_instance(rng, 1)).collect();
                m.insert("enum".into(), json!(vals));
            }
            3 => {
                m.insert("const".into(), random_instance(rng, 1));
            }
            4 => {
                m.insert("minimum".into(), small_number(rng));
            }
            5 => {
                m.insert("maximum".into(), small_number(rng));
            }
            6 => {
                m.insert("exclusiveMinimum".into(), small_number(rng));
            }
            7 => {
                m.insert("exclusiveMaximum".into(), small_number(rng));
            }
            8 => {
                let v = [json!(2), json!(3), json!(0.5), json!(1.5), json!(4)].choose(rng).unwrap().clone();
                m.insert("multipleOf".into(), v);
            }
            9 => {
                m.insert("minLength".into(), json!(rng.gen_range(0..4)));
            }
            10 => {
                m.insert("maxLength".into(), json!(rng.gen_range(0..4)));
            }
            11 => {
                if rng.gen_ratio(1, 3) {
                    m.insert("pattern".into(), json!(*PATTERNS.choose(rng).unwrap()));
                }
            }
            12 => {
                m.insert("items".into(), random_schema(rng, depth - 1));
            }
            13 => {
                m.insert("minItems".into(), json!(rng.gen_range(0..3)));
                if rng.gen_bool(0.5) {
                    m.insert("maxItems".into(), json!(rng.gen_range(0..3)));
                }
            }
            14 => {
                m.insert("uniqueItems".into(), json!(rng.gen_bool(0.7)));
            }
            15 => {
                if rng.gen_ratio(1, 2) {
                    m.insert("contains".into(), random_schema(rng, depth - 1));
                }
            }
            16 | 17 => {
                let mut props = Map::new();
                let count = rng.gen_range(1..=2);
                for k in KEYS.choose_multiple(rng, count) {
                    props.insert(k.to_string(), random_schema(rng, depth - 1));
                }
                m.insert("properties".into(), Value::Object(props));
            }
            18 => {
                let k = rng.gen_range(1..=2);
                let req: Vec<&str> = KEYS.choose_multiple(rng, k).copied().collect();
                m.insert("required".into(), json!(req));
            }
            19 => {
                let v = if rng.gen_bool(0.5) {
                    json!(rng.gen_bool(0.5))
                } else {
                    random_schema(rng, depth - 1)
                };
                m.insert("additionalProperties".into(), v);
            }
            20 => {
                m.insert("minProperties".into(), json!(rng.gen_range(0..3)));
                if rng.gen_bool(0.5) {
                    m.insert("maxProperties".into(), json!(rng.gen_range(0..3)));
                }
            }
            21 | 22 => {
                let k = rng.gen_range(1..=3);
                let subs: Vec<Value> = (0..k).map(|_| random_schema(rng, depth - 1)).collect();
                m.insert("allOf".into(), json!(subs));
            }
            23 => {
                let k = rng.gen_range(1..=3);
                let subs: Vec<Value> = (0..k).map(|_| random_schema(rng, depth - 1)).collect();
                m.insert("anyOf".into(), json!(subs));
            }
            24 => {
                let k = rng.gen_range(1..=3);
                let subs: Vec<Value> = (0..k).map(|_| random_schema(rng, depth - 1)).collect();
                m.insert("oneOf".into(), json!(subs));
            }
            _ => {
                m.insert("not".into(), random_schema(rng, depth - 1));
            }
        }
    }
    Value::Object(m)
}

fn small_number<R: Rng>(rng: &mut R) -> Value {
    if rng.gen_bool(0.75) {
        json!(rng.gen_range(-3..=3))
    } else {
        json!(rng.gen_range(-6..=6) as f64 / 2.0 + 0.25)
    }
}

pub fn random_instance<R: Rng>(rng: &mut R, depth: u32) -> Value {
    let top = if depth == 0 { 5 } else { 7 };
    match rng.gen_range(0..top) {
        0 => Value::Null,
        1 => json!(rng.gen_bool(0.5)),
        2 => json!(rng.gen_range(-4..=4)),
        3 => json!(rng.gen_range(-8..=8) as f64 / 4.0),
        4 => {
            let len = rng.gen_range(0..4);
            let s: String = (0..len).map(|_| *['a', 'b', 'c'].choose(rng).unwrap()).collect();
            json!(s)
        }
        5 => {
            let len = rng.gen_range(0..4);
            json!((0..len).map(|_| random_instance(rng, depth - 1)).collect::<Vec<_>>())
        }
        _ => {
            let mut m = Map::new();
            for k in KEYS {
                if rng.gen_bool(0.4) {
                    m.insert(k.to_string(), random_instance(rng, depth - 1));
                }
            }
            if rng.gen_ratio(1, 5) {
                m.insert("z".into(), random_instance(rng, depth - 1));
            }
            Value::Object(m)
        }
    }
}
