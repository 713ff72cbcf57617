//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schemafuzz::canonical::CanonicalError;
use schemafuzz::choice::ChoiceSequence;
use schemafuzz::demo::{self, DemoService};
use schemafuzz::engine::{run_campaign, CampaignConfig, Mode, Reproduction, RunReport, StopPolicy};
use schemafuzz::generate::{GenContext, GenerationError, PreparedSchema};
use schemafuzz::http::{HttpRequest, HttpResponse};
use schemafuzz::oracle::{defect_key, CheckKind, CheckSet, Checker, DefectKey};
use schemafuzz::schema::{Document, Operation};
use schemafuzz::transport::{InProcessTransport, Service, TestCase, Transport};
use schemafuzz::validate::is_valid;
use schemafuzz::{canonicalise, extract_operations, load_document};
use serde_json::{json, Value};

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(pass: bool, summary: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        summary: summary.into(),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("1 canonical worked example", c1_worked_example),
        ("2 canonical semantics preserved", c2_semantics),
        ("3 generator validity on corpus", c3_generator_validity),
        ("4 negative soundness", c4_negative_soundness),
        ("5 corpus robustness", c5_corpus_robustness),
        ("6 end-to-end recall", c6_recall),
        ("7 stateful rule detection", c7_stateful),
        ("8 one reproduction per defect", c8_reproductions),
        ("9 shrink quality", c9_shrink_quality),
        ("10 unexpected 404 dedup", c10_dedup_404),
        ("11 determinism", c11_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let started = Instant::now();
        let o = f();
        let status = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("{status} [{name}] {} ({:.2} s)", o.summary, started.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn corpus() -> Vec<(String, Document)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "yaml" | "yml")))
        .collect();
    files.sort();
    files
        .into_iter()
        .filter_map(|f| {
            let text = std::fs::read_to_string(&f).ok()?;
            let name = f.file_name()?.to_string_lossy().into_owned();
            load_document(&text).ok().map(|d| (name, d))
        })
        .collect()
}

/// Every parameter and request body schema of the corpus.
fn corpus_schemas() -> Vec<(String, Value)> {
    let mut out = Vec::new();
    for (name, doc) in corpus() {
        let Ok(ex) = extract_operations(&doc) else { continue };
        for op in &ex.operations {
            for p in &op.parameters {
                out.push((format!("{name} {} param {}", op.label(), p.name), p.schema.clone()));
            }
            if let Some(b) = &op.body {
                for m in &b.content {
                    out.push((format!("{name} {} body {}", op.label(), m.media_type), m.schema.clone()));
                }
            }
        }
    }
    out
}

fn c1_worked_example() -> Outcome {
    let input = json!({"type": "object", "allOf": [
        {"additionalProperties": false},
        {"properties": {"a": {"type": "string"}}}
    ]});
    let expected = json!({"type": "object", "maxProperties": 0});
    let started = Instant::now();
    let got = canonicalise(&input);
    let took = started.elapsed();
    match got {
        Ok(c) => {
            let exact = c.as_value() == &expected;
            outcome(
                exact && took < Duration::from_millis(1),
                format!("got {} in {} us (limit 1000 us)", c.as_value(), took.as_micros()),
            )
        }
        Err(e) => outcome(false, format!("error: {e}")),
    }
}

fn c2_semantics() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut disagreements, mut declined, mut compared) = (0, 0, 0);
    let mut example = String::new();
    for _ in 0..1000 {
        let schema = common::random_schema(&mut rng, 3);
        let canonical = match canonicalise(&schema) {
            Ok(c) => c,
            Err(CanonicalError::Unmergeable { .. }) | Err(CanonicalError::ComplexityBudgetExceeded { .. }) => {
                declined += 1;
                // Still draw the instances so later schemas see the same stream.
                for _ in 0..100 {
                    common::random_instance(&mut rng, 2);
                }
                continue;
            }
            Err(e) => {
                disagreements += 1;
                example = format!("{schema}: {e}");
                continue;
            }
        };
        for _ in 0..100 {
            let inst = common::random_instance(&mut rng, 2);
            compared += 1;
            if is_valid(&schema, &inst).unwrap() != is_valid(canonical.as_value(), &inst).unwrap() {
                disagreements += 1;
                if example.is_empty() {
                    example = format!("{schema} vs {} on {inst}", canonical.as_value());
                }
            }
        }
    }
    let took = started.elapsed();
    outcome(
        disagreements == 0 && took < Duration::from_secs(60),
        format!(
            "{disagreements} disagreements over {compared} comparisons, {declined}/1000 schemas declined as unmergeable{}",
            if example.is_empty() { String::new() } else { format!("; e.g. {example}") }
        ),
    )
}

fn c3_generator_validity() -> Outcome {
    let cx = GenContext::default();
    let files = corpus().len();
    let (mut schemas, mut instances, mut invalid, mut exhausted, mut other, mut unsat) = (0, 0, 0, 0, 0, 0);
    let mut example = String::new();
    for (label, raw) in corpus_schemas() {
        schemas += 1;
        let prepared = match PreparedSchema::new(&raw) {
            Ok(p) => p,
            Err(e) => {
                other += 1;
                example = format!("{label}: {e}");
                continue;
            }
        };
        for seed in 0..200 {
            let mut seq = ChoiceSequence::record(seed);
            match prepared.generate(&mut seq, &cx) {
                Ok(v) => {
                    instances += 1;
                    if !is_valid(&raw, &v).unwrap() {
                        invalid += 1;
                        example = format!("{label}: {v}");
                    }
                }
                Err(GenerationError::Unsatisfiable) => {
                    unsat += 1;
                    break;
                }
                Err(GenerationError::ExhaustedRejectionBudget { .. }) => exhausted += 1,
                Err(e) => {
                    other += 1;
                    example = format!("{label}: {e}");
                }
            }
        }
    }
    outcome(
        files >= 20 && invalid == 0 && exhausted == 0 && other == 0,
        format!(
            "{files} documents, {schemas} schemas, {instances} instances: {invalid} invalid, {exhausted} ExhaustedRejectionBudget, {other} other errors, {unsat} unsatisfiable schemas{}",
            if example.is_empty() { String::new() } else { format!("; e.g. {example}") }
        ),
    )
}

fn c4_negative_soundness() -> Outcome {
    let cx = GenContext::default();
    let negatable: Vec<(String, Value, PreparedSchema)> = corpus_schemas()
        .into_iter()
        .filter_map(|(l, raw)| {
            let p = PreparedSchema::new(&raw).ok()?;
            p.can_negate().then_some((l, raw, p))
        })
        .collect();
    if negatable.is_empty() {
        return outcome(false, "no negatable schemas in the corpus");
    }
    let (mut produced, mut accepted, mut errors) = (0, 0, 0);
    let mut example = String::new();
    let mut seed = 0u64;
    while produced < 1000 && seed < 20_000 {
        let (label, raw, p) = &negatable[seed as usize % negatable.len()];
        let mut seq = ChoiceSequence::record(seed);
        seed += 1;
        match p.generate_negative(&mut seq, &cx) {
            Ok(v) => {
                produced += 1;
                if is_valid(raw, &v).unwrap() {
                    accepted += 1;
                    example = format!("{label}: {v}");
                }
            }
            Err(_) => errors += 1,
        }
    }
    outcome(
        produced >= 1000 && accepted == 0,
        format!(
            "{produced} negative instances from {} schemas, {accepted} valid against the original, {errors} generation errors{}",
            negatable.len(),
            if example.is_empty() { String::new() } else { format!("; e.g. {example}") }
        ),
    )
}

fn c5_corpus_robustness() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    let mut files = 0;
    let mut fatal = Vec::new();
    let (mut operations, mut skipped) = (0, 0);
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if !matches!(path.extension().and_then(|e| e.to_str()), Some("json" | "yaml" | "yml")) {
            continue;
        }
        files += 1;
        let text = std::fs::read_to_string(&path).unwrap();
        match load_document(&text).map(|d| extract_operations(&d)) {
            Ok(Ok(ex)) => {
                operations += ex.operations.len();
                skipped += ex.skipped.len();
            }
            Ok(Err(e)) | Err(e) => fatal.push(format!("{}: {e}", path.display())),
        }
    }
    outcome(
        files >= 20 && fatal.is_empty(),
        format!(
            "{files} documents, {} fatal, {operations} operations extracted, {skipped} skipped{}",
            fatal.len(),
            fatal.first().map(|f| format!("; e.g. {f}")).unwrap_or_default()
        ),
    )
}

fn demo_doc() -> Document {
    load_document(demo::openapi()).unwrap()
}

fn demo_transport() -> InProcessTransport {
    InProcessTransport::new(Arc::new(DemoService::new()))
}

fn demo_config(checks: CheckSet, mode: Mode, stop: StopPolicy, seed: u64) -> CampaignConfig {
    CampaignConfig {
        base_url: "http://demo.invalid".into(),
        checks,
        mode,
        stop_policy: stop,
        seed,
        ..CampaignConfig::default()
    }
}

fn demo_run(cfg: &CampaignConfig) -> RunReport {
    run_campaign(&demo_doc(), cfg, &demo_transport()).expect("demo campaign runs")
}

fn recall_keys() -> BTreeSet<DefectKey> {
    demo::manifest().into_iter().filter(|d| d.recall).map(|d| d.key).collect()
}

fn c6_recall() -> Outcome {
    let wanted = recall_keys();
    let started = Instant::now();
    let all = demo_run(&demo_config(CheckSet::all(), Mode::Both, StopPolicy::Exhaustive, 1));
    let took = started.elapsed();
    let found = all.defect_keys();
    let hits = wanted.intersection(&found).count();
    let missed: Vec<String> = wanted.difference(&found).map(|k| k.to_string()).collect();

    let default_expected: BTreeSet<DefectKey> = demo::manifest()
        .into_iter()
        .filter(|d| CheckSet::default_set().contains(&d.expected_check_kind))
        .map(|d| d.key)
        .collect();
    let default_found = demo_run(&demo_config(
        CheckSet::default_set(),
        Mode::Unit,
        StopPolicy::FirstFailurePerOperation,
        1,
    ))
    .defect_keys();

    let negative = demo_run(&demo_config(CheckSet::negative(), Mode::Unit, StopPolicy::Exhaustive, 1));
    let negative_found = negative
        .defect_keys()
        .iter()
        .any(|k| k.kind == CheckKind::NegativeRequestAccepted && k.operation == "createItem");

    let mut perf = CheckSet::all();
    perf.0.extend(CheckSet::performance().0);
    let with_perf = demo_run(&demo_config(perf, Mode::Both, StopPolicy::Exhaustive, 1)).defect_keys();
    let every: BTreeSet<DefectKey> = demo::manifest().into_iter().map(|d| d.key).collect();

    outcome(
        hits >= 9 && took < Duration::from_secs(120) && default_found == default_expected && negative_found,
        format!(
            "all-checks found {hits}/{} in {:.2} s (missed: {}); default mode exact: {} ({} keys); negative mode: {}; with performance checks {}/{} of the full manifest",
            wanted.len(),
            took.as_secs_f64(),
            if missed.is_empty() { "none".to_string() } else { missed.join(", ") },
            default_found == default_expected,
            default_found.len(),
            if negative_found { "found" } else { "missing" },
            every.intersection(&with_perf).count(),
            every.len()
        ),
    )
}

fn c7_stateful() -> Outcome {
    let is_uaf = |k: &DefectKey| k.kind == CheckKind::UseAfterFree && k.operation == "getItem";
    let started = Instant::now();
    let with = demo_run(&demo_config(CheckSet::all(), Mode::Both, StopPolicy::FirstFailurePerOperation, 1));
    let took = started.elapsed();
    let found_with = with.defect_keys().iter().any(is_uaf);
    let without = demo_run(&demo_config(CheckSet::all(), Mode::Unit, StopPolicy::Exhaustive, 1));
    let found_without = without.defect_keys().iter().any(is_uaf);
    outcome(
        found_with && !found_without && took < Duration::from_secs(60),
        format!(
            "with sequences: {} in {:.2} s; without: {}",
            if found_with { "found" } else { "missing" },
            took.as_secs_f64(),
            if found_without { "found" } else { "not reported" }
        ),
    )
}

/// Replays a reproduction against a reset service and reports whether the
/// defect's key recurs. Sequence rules are re-derived here from the raw
/// responses rather than through the library's sequence runner.
fn replays(
    key: &DefectKey,
    repro: &Reproduction,
    ops: &[Operation],
    transport: &InProcessTransport,
    checker: &Checker,
) -> bool {
    transport.reset("").unwrap();
    let mut trace: Vec<(&TestCase, HttpResponse)> = Vec::new();
    for tc in repro.cases() {
        let Ok(resp) = transport.send(tc, "http://demo.invalid", Duration::from_secs(10)) else {
            return false;
        };
        trace.push((tc, resp));
    }
    let Some((last, resp)) = trace.last() else { return false };
    let ok = |r: &HttpResponse| (200..300).contains(&r.status);
    match key.kind {
        CheckKind::UseAfterFree => {
            last.method == "GET"
                && ok(resp)
                && trace[..trace.len() - 1]
                    .iter()
                    .any(|(tc, r)| tc.method == "DELETE" && tc.resolved_path == last.resolved_path && ok(r))
        }
        CheckKind::ResourceLeak => {
            last.method == "GET"
                && ok(resp)
                && trace[..trace.len() - 1]
                    .iter()
                    .any(|(tc, r)| tc.method == "POST" && !ok(r))
        }
        _ => {
            let Some(op) = ops.iter().find(|o| o.id == last.operation) else { return false };
            checker
                .run(last, resp, op)
                .iter()
                .any(|r| !r.passed && &defect_key(r) == key)
        }
    }
}

fn c8_reproductions() -> Outcome {
    let mut checks = CheckSet::all();
    checks.0.extend(CheckSet::performance().0);
    let report = demo_run(&demo_config(checks.clone(), Mode::Both, StopPolicy::Exhaustive, 1));
    let distinct: BTreeSet<&DefectKey> = report.defects.iter().map(|d| &d.key).collect();
    let ops = extract_operations(&demo_doc()).unwrap().operations;
    let transport = demo_transport();
    let checker = Checker::new(checks);
    let mut failed = Vec::new();
    for d in &report.defects {
        if d.minimal_reproduction.cases().is_empty() || !replays(&d.key, &d.minimal_reproduction, &ops, &transport, &checker) {
            failed.push(d.key.to_string());
        }
    }
    outcome(
        distinct.len() == report.defects.len() && failed.is_empty() && !report.defects.is_empty(),
        format!(
            "{} defects, {} distinct keys, {}/{} reproductions re-trigger their key after reset{}",
            report.defects.len(),
            distinct.len(),
            report.defects.len() - failed.len(),
            report.defects.len(),
            if failed.is_empty() { String::new() } else { format!("; failing: {}", failed.join(", ")) }
        ),
    )
}

fn c9_shrink_quality() -> Outcome {
    let key = DefectKey {
        kind: CheckKind::ServerError,
        operation: "createItem".into(),
        class: "status 500".into(),
    };
    let mut exact = 0;
    let mut seen = Vec::new();
    for seed in 1..=20 {
        let r = demo_run(&demo_config(
            CheckSet::default_set(),
            Mode::Unit,
            StopPolicy::FirstFailurePerOperation,
            seed,
        ));
        let quantity = r
            .defect(&key)
            .and_then(|d| d.minimal_reproduction.cases().last().cloned())
            .and_then(|tc| tc.inputs.body)
            .and_then(|b| b.get("quantity").cloned());
        if quantity == Some(json!(2_147_483_648u64)) {
            exact += 1;
        } else {
            seen.push(format!("seed {seed}: {quantity:?}"));
        }
    }
    outcome(
        exact >= 19,
        format!(
            "{exact}/20 runs shrink to quantity 2147483648 (need 19){}",
            if seen.is_empty() { String::new() } else { format!("; others: {}", seen.join(", ")) }
        ),
    )
}

struct NotFound;

impl Service for NotFound {
    fn handle(&self, _: &HttpRequest) -> HttpResponse {
        HttpResponse::json(404, &json!({"error": "not found"}))
    }

    fn reset(&self) {}
}

fn c10_dedup_404() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut paths = serde_json::Map::new();
    while paths.len() < 50 {
        let segment: String = (0..rng.gen_range(3..10)).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
        paths.insert(
            format!("/{segment}/{{id}}"),
            json!({"get": {
                "parameters": [{"name": "id", "in": "path", "required": true, "schema": {"type": "integer"}}],
                "responses": {"200": {"description": "ok"}}
            }}),
        );
    }
    let doc = load_document(&json!({"openapi": "3.0.3", "info": {"title": "404s", "version": "1"}, "paths": paths}).to_string())
        .unwrap();
    let cfg = CampaignConfig {
        base_url: "http://fixture.invalid".into(),
        max_examples: 1,
        ..CampaignConfig::default()
    };
    let r = run_campaign(&doc, &cfg, &InProcessTransport::new(Arc::new(NotFound))).unwrap();
    let failures: usize = r.operations.iter().map(|o| o.failures).sum();
    let occurrences: usize = r.defects.iter().map(|d| d.occurrences).sum();
    outcome(
        failures == 50 && r.defects.len() == 1,
        format!(
            "{failures} unexpected 404s over {} operations -> {} defect(s), {occurrences} occurrences",
            r.operations.len(),
            r.defects.len()
        ),
    )
}

fn c11_determinism() -> Outcome {
    let cfg = demo_config(CheckSet::all(), Mode::Both, StopPolicy::Exhaustive, 1);
    let a = demo_run(&cfg);
    let b = demo_run(&cfg);
    let repros = |r: &RunReport| -> Vec<(DefectKey, Reproduction)> {
        r.defects
            .iter()
            .map(|d| (d.key.clone(), d.minimal_reproduction.clone()))
            .collect()
    };
    let same_keys = a.defect_keys() == b.defect_keys();
    let same_repros = repros(&a) == repros(&b);
    outcome(
        same_keys && same_repros,
        format!(
            "{} keys; identical key sets: {same_keys}; identical reproductions: {same_repros}",
            a.defects.len()
        ),
    )
}
