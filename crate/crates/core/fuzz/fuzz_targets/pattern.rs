#![no_main]
use libfuzzer_sys::fuzz_target;
use schemafuzz::pattern::Pattern;
use schemafuzz::ChoiceSequence;

fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|b| *b == 0).unwrap_or(data.len());
    let Ok(source) = std::str::from_utf8(&data[..split]) else { return };
    let Ok(p) = Pattern::parse(source) else { return };
    let mut seq = ChoiceSequence::replay(data.get(split + 1..).unwrap_or(&[]));
    // Generation is best-effort (e.g. `a$b`); callers check the result.
    if let Ok(s) = p.generate(&mut seq, 0, 64) {
        let _ = p.is_match(&s);
    }
});
