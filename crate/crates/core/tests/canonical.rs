mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use schemafuzz::canonical::CanonicalError;
use schemafuzz::validate::is_valid;
use schemafuzz::{canonicalise, negate_for_testing};
use serde_json::json;

#[test]
fn canonical_form_agrees_with_original() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut declined = 0;
    for _ in 0..300 {
        let schema = common::random_schema(&mut rng, 3);
        let canonical = match canonicalise(&schema) {
            Ok(c) => c,
            Err(CanonicalError::Unmergeable { .. }) => {
                declined += 1;
                continue;
            }
            Err(e) => panic!("{schema}: {e}"),
        };
        for _ in 0..50 {
            let inst = common::random_instance(&mut rng, 2);
            let a = is_valid(&schema, &inst).unwrap();
            let b = is_valid(canonical.as_value(), &inst).unwrap();
            assert_eq!(a, b, "schema {schema}\ncanonical {}\ninstance {inst}", canonical.as_value());
        }
    }
    assert!(declined < 30, "declined {declined}");
}

#[test]
fn canonicalisation_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..300 {
        let schema = common::random_schema(&mut rng, 3);
        let Ok(c) = canonicalise(&schema) else { continue };
        let again = canonicalise(c.as_value()).unwrap();
        assert_eq!(c, again, "{schema}");
    }
}

#[test]
fn canonical_form_has_no_allof() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..300 {
        let schema = common::random_schema(&mut rng, 3);
        let Ok(c) = canonicalise(&schema) else { continue };
        assert!(!c.as_value().to_string().contains("\"allOf\""), "{}", c.as_value());
    }
}

#[test]
fn negation_is_exact_within_declared_types() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..300 {
        let schema = common::random_schema(&mut rng, 2);
        let Ok(neg) = negate_for_testing(&schema) else { continue };
        for _ in 0..30 {
            let inst = common::random_instance(&mut rng, 2);
            if is_valid(neg.as_value(), &inst).unwrap() {
                assert!(!is_valid(&schema, &inst).unwrap(), "{schema} / {} / {inst}", neg.as_value());
            }
        }
    }
}

#[test]
fn boolean_schemas() {
    assert_eq!(canonicalise(&json!(false)).unwrap().as_value(), &json!(false));
    assert_eq!(canonicalise(&json!({"not": {}})).unwrap().as_value(), &json!(false));
    assert_eq!(canonicalise(&json!({"anyOf": [false, false]})).unwrap().as_value(), &json!(false));
}
