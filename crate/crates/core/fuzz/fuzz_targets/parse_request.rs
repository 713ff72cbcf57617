#![no_main]
use libfuzzer_sys::fuzz_target;
use schemafuzz::http::{parse_request, render_request};

fuzz_target!(|data: &[u8]| {
    if let Ok((req, used)) = parse_request(data) {
        assert!(used <= data.len());
        // Whatever parsed once must parse again after rendering.
        let again = render_request(&req, "fuzz.test");
        let (req2, _) = parse_request(&again).expect("rendered request parses");
        assert_eq!(req.method, req2.method);
        assert_eq!(req.body, req2.body);
    }
});
