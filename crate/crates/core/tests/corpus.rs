use std::path::PathBuf;

use schemafuzz::choice::ChoiceSequence;
use schemafuzz::generate::{GenContext, GenerationError, PreparedSchema};
use schemafuzz::validate::is_valid;
use schemafuzz::{extract_operations, load_document};

fn corpus_files() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "yaml" | "yml")))
        .collect();
    files.sort();
    files
}

#[test]
fn corpus_loads_and_generates() {
    let files = corpus_files();
    assert!(files.len() >= 20);
    let cx = GenContext::default();
    let mut schemas = 0;
    let mut failures = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(&f).unwrap();
        let doc = load_document(&text).unwrap_or_else(|e| panic!("{}: {e}", f.display()));
        let ex = extract_operations(&doc).unwrap_or_else(|e| panic!("{}: {e}", f.display()));
        for op in &ex.operations {
            let mut raws: Vec<&serde_json::Value> = op.parameters.iter().map(|p| &p.schema).collect();
            if let Some(b) = &op.body {
                raws.extend(b.content.iter().map(|m| &m.schema));
            }
            for raw in raws {
                schemas += 1;
                let prepared = match PreparedSchema::new(raw) {
                    Ok(p) => p,
                    Err(e) => {
                        failures.push(format!("{} {}: {e}", f.display(), op.label()));
                        continue;
                    }
                };
                for seed in 0..200 {
                    let mut seq = ChoiceSequence::record(seed);
                    match prepared.generate(&mut seq, &cx) {
                        Ok(v) => {
                            if !is_valid(raw, &v).unwrap() {
                                failures.push(format!("{} {}: invalid {v}", f.display(), op.label()));
                                break;
                            }
                        }
                        Err(GenerationError::Unsatisfiable) => break,
                        Err(e) => {
                            failures.push(format!("{} {}: {e}", f.display(), op.label()));
                            break;
                        }
                    }
                }
            }
        }
    }
    assert!(failures.is_empty(), "{schemas} schemas; failures:\n{}", failures.join("\n"));
}
