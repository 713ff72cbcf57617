#![no_main]
use libfuzzer_sys::fuzz_target;
use serde_json::Value;

// Input is a JSON array `[schema, instance]`.
fuzz_target!(|data: &[u8]| {
    let Ok(Value::Array(pair)) = serde_json::from_slice::<Value>(data) else { return };
    if let [schema, instance] = pair.as_slice() {
        let _ = schemafuzz::validate_instance(schema, instance);
    }
});
