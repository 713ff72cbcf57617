#![no_main]
use libfuzzer_sys::fuzz_target;
use schemafuzz::generate::{generate_instance, GenContext};
use schemafuzz::validate::is_valid;
use schemafuzz::ChoiceSequence;
use serde_json::json;

fuzz_target!(|data: &[u8]| {
    let schema = json!({
        "type": "object",
        "required": ["id", "tags"],
        "properties": {
            "id": {"type": "integer", "minimum": 1},
            "name": {"type": "string", "pattern": "^[a-z]+$", "maxLength": 8},
            "tags": {"type": "array", "items": {"enum": ["a", "b", null]}, "uniqueItems": true},
            "ratio": {"type": "number", "exclusiveMaximum": 1}
        },
        "additionalProperties": false
    });
    let canonical = schemafuzz::canonicalise(&schema).unwrap();
    let mut seq = ChoiceSequence::replay(data);
    if let Ok(v) = generate_instance(&canonical, &mut seq, &GenContext::default()) {
        assert!(is_valid(&schema, &v).unwrap(), "{v}");
    }
});
