#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((body, used)) = schemafuzz::http::decode_chunked(data) {
        assert!(used <= data.len());
        assert!(body.len() <= used);
    }
});
