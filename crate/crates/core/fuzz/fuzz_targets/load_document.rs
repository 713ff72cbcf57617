#![no_main]
use libfuzzer_sys::fuzz_target;
use schemafuzz::schema::ResolveOptions;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(doc) = schemafuzz::load_document(text) else { return };
    let opts = ResolveOptions { lenient: true, ..ResolveOptions::default() };
    if let Ok(resolved) = schemafuzz::resolve_references(&doc, opts) {
        if let Ok(ex) = schemafuzz::extract_operations(&resolved) {
            let _ = schemafuzz::extract_link_graph(&ex.operations);
        }
    }
});
