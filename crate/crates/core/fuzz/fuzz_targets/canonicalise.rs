#![no_main]
use libfuzzer_sys::fuzz_target;
use serde_json::Value;

fuzz_target!(|data: &[u8]| {
    let Ok(schema) = serde_json::from_slice::<Value>(data) else { return };
    if let Ok(c) = schemafuzz::canonicalise(&schema) {
        let again = schemafuzz::canonicalise(c.as_value()).expect("canonical form is accepted");
        assert_eq!(c, again);
    }
    let _ = schemafuzz::negate_for_testing(&schema);
});
