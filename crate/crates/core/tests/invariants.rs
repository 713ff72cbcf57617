mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use schemafuzz::canonical::CanonicalError;
use schemafuzz::generate::{generate_instance, generate_negative_instance, GenContext, GenerationError};
use schemafuzz::http::{decode_chunked, parse_request, parse_response, render_request, render_response, HttpRequest, HttpResponse};
use schemafuzz::schema::SchemaError;
use schemafuzz::validate::is_valid;
use schemafuzz::{canonicalise, load_document, ChoiceSequence};
use serde_json::{json, Value};
use yaml_rust2::{Yaml, YamlLoader};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 128,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn header_name() -> impl Strategy<Value = String> {
    "X-[A-Za-z][A-Za-z0-9-]{0,8}"
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn request_round_trips(method in prop::sample::select(vec!["GET", "POST", "PUT", "DELETE", "PATCH"]),
        path in "(/[a-z0-9%]{1,6}){1,3}", query in prop::option::of("[a-z]{1,4}=[a-z0-9]{0,4}"),
        headers in prop::collection::vec((header_name(), "[ -~&&[^ ]][ -~]{0,10}[ -~&&[^ ]]"), 0..4),
        body in prop::collection::vec(any::<u8>(), 0..64))
    {
        let target = match &query {
            Some(q) => format!("{path}?{q}"),
            None => path.clone(),
        };
        let req = HttpRequest { method: method.into(), target: target.clone(), headers: headers.clone(), body: body.clone() };
        let wire = render_request(&req, "example.test");
        let (parsed, used) = parse_request(&wire).unwrap();
        prop_assert_eq!(used, wire.len());
        prop_assert_eq!(parsed.method, method);
        prop_assert_eq!(parsed.target, target);
        prop_assert_eq!(parsed.body, body);
        for (k, v) in &headers {
            prop_assert!(parsed.headers.iter().any(|(pk, pv)| pk == k && pv == v));
        }
    }

    #[test]
    fn response_round_trips(status in 200u16..600, body in prop::collection::vec(any::<u8>(), 0..64)) {
        // These statuses never carry a body.
        prop_assume!(status != 204 && status != 304);
        let resp = HttpResponse::new(status).with_body("application/octet-stream", body.clone());
        let parsed = parse_response(&render_response(&resp)).unwrap();
        prop_assert_eq!(parsed.status, status);
        prop_assert_eq!(parsed.body, body);
    }

    #[test]
    fn chunked_bodies_decode(chunks in prop::collection::vec(prop::collection::vec(any::<u8>(), 1..20), 0..5),
        trailing in prop::collection::vec(any::<u8>(), 0..8))
    {
        let mut wire = Vec::new();
        for c in &chunks {
            wire.extend_from_slice(format!("{:x}\r\n", c.len()).as_bytes());
            wire.extend_from_slice(c);
            wire.extend_from_slice(b"\r\n");
        }
        wire.extend_from_slice(b"0\r\n\r\n");
        let end = wire.len();
        wire.extend_from_slice(&trailing);
        let (body, used) = decode_chunked(&wire).unwrap();
        prop_assert_eq!(body, chunks.concat());
        prop_assert_eq!(used, end);
        prop_assert!(decode_chunked(&wire[..end - 1]).is_err());
    }

    #[test]
    fn replaying_recorded_choices_reproduces_values(seed in any::<u64>(), n in 1usize..40) {
        let mut rec = ChoiceSequence::record(seed);
        let drawn: Vec<i128> = (0..n).map(|_| rec.draw_integer(Some(-100), Some(1_000_000)).unwrap()).collect();
        let mut rep = ChoiceSequence::replay(rec.consumed());
        let again: Vec<i128> = (0..n).map(|_| rep.draw_integer(Some(-100), Some(1_000_000)).unwrap()).collect();
        prop_assert_eq!(drawn, again);
    }

    #[test]
    fn zero_bytes_give_the_simplest_values(n in 1usize..64) {
        let mut seq = ChoiceSequence::replay(&vec![0; 256]);
        prop_assert_eq!(seq.draw_integer(Some(-5), Some(5)).unwrap().abs(), 0);
        prop_assert_eq!(seq.draw_index(n).unwrap(), 0);
        prop_assert!(!seq.draw_bool(0.5).unwrap());
    }

    #[test]
    fn generated_instances_are_valid(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schema = common::random_schema(&mut rng, 3);
        let canonical = match canonicalise(&schema) {
            Ok(c) => c,
            Err(CanonicalError::Unmergeable { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let cx = GenContext::default();
        for i in 0..10u64 {
            let mut seq = ChoiceSequence::record(seed ^ i);
            match generate_instance(&canonical, &mut seq, &cx) {
                Ok(v) => prop_assert!(is_valid(&schema, &v).unwrap(), "{} rejects {}", schema, v),
                Err(GenerationError::Unsatisfiable) => prop_assert!(canonical.is_unsatisfiable()),
                // Residual `oneOf`/`not` nodes are sampled with rejection; giving up is allowed here.
                Err(GenerationError::ExhaustedRejectionBudget { .. }) => {}
                Err(e) => return Err(TestCaseError::fail(format!("{schema}: {e}"))),
            }
        }
    }

    #[test]
    fn negative_instances_are_invalid(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schema = common::random_schema(&mut rng, 2);
        let cx = GenContext::default();
        for i in 0..10u64 {
            let mut seq = ChoiceSequence::record(seed ^ i);
            if let Ok(v) = generate_negative_instance(&schema, &mut seq, &cx) {
                prop_assert!(!is_valid(&schema, &v).unwrap(), "{} accepts negative {}", schema, v);
            }
        }
    }

    #[test]
    fn yaml_documents_match_an_independent_parser(title in "[a-z ]{1,10}", paths in prop::collection::vec("[a-z]{1,6}", 0..4),
        tab_indent in any::<bool>())
    {
        let indent = if tab_indent { "\t" } else { "  " };
        let mut text = format!("openapi: 3.0.0\ninfo:\n{indent}title: \"{title}\"\n{indent}version: \"1\"\npaths:");
        if paths.is_empty() {
            text.push_str(" {}\n");
        } else {
            text.push('\n');
            for p in &paths {
                text.push_str(&format!("{indent}/{p}:\n{indent}{indent}get:\n{indent}{indent}{indent}responses: {{}}\n"));
            }
        }
        let reference = YamlLoader::load_from_str(&text);
        match load_document(&text) {
            Ok(doc) => {
                let docs = reference.map_err(|e| TestCaseError::fail(format!("reference rejects: {e}")))?;
                prop_assert_eq!(&doc.root, &yaml_to_json(&docs[0]));
            }
            Err(SchemaError::ParseError { .. }) => prop_assert!(reference.is_err(), "only ours rejects:\n{}", text),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}

fn yaml_to_json(y: &Yaml) -> Value {
    match y {
        Yaml::Real(s) => s.parse::<f64>().map(Value::from).unwrap_or(Value::Null),
        Yaml::Integer(i) => json!(i),
        Yaml::String(s) => json!(s),
        Yaml::Boolean(b) => json!(b),
        Yaml::Array(xs) => Value::Array(xs.iter().map(yaml_to_json).collect()),
        Yaml::Hash(h) => Value::Object(
            h.iter()
                .map(|(k, v)| {
                    let key = match k {
                        Yaml::String(s) => s.clone(),
                        Yaml::Integer(i) => i.to_string(),
                        other => format!("{other:?}"),
                    };
                    (key, yaml_to_json(v))
                })
                .collect(),
        ),
        _ => Value::Null,
    }
}

#[test]
fn tab_indented_mapping_is_a_parse_error() {
    let text = "swagger: \"2.0\"\ninfo:\n\ttitle: x\n";
    assert!(YamlLoader::load_from_str(text).is_err());
    assert!(matches!(load_document(text), Err(SchemaError::ParseError { .. })));
}

#[test]
fn chunked_request_renders_with_a_length() {
    let wire = b"PUT /x HTTP/1.1\r\nTransfer-Encoding: chunked\r\n\r\n3\r\nabc\r\n0\r\n\r\n";
    let (req, _) = parse_request(wire).unwrap();
    let (again, _) = parse_request(&render_request(&req, "a")).unwrap();
    assert_eq!(again.body, b"abc");
    assert!(again.header("transfer-encoding").is_none());
}
