use std::collections::BTreeSet;
use std::sync::Arc;

use schemafuzz::demo::{self, DemoService};
use schemafuzz::engine::{
    emit_report, parse_report, run_campaign, run_campaign_with, CampaignConfig, EngineError, Hooks, Mode,
    OperationPatch, ReportFormat, Reproduction, StopPolicy, ValueFilter,
};
use schemafuzz::http::{HttpRequest, HttpResponse};
use schemafuzz::oracle::{CheckKind, CheckSet, DefectKey};
use schemafuzz::transport::{InProcessTransport, NetworkTransport, Service, Transport};
use schemafuzz::{load_document, RunReport};
use serde_json::json;

fn demo_doc() -> schemafuzz::schema::Document {
    load_document(demo::openapi()).unwrap()
}

fn in_process() -> InProcessTransport {
    InProcessTransport::new(Arc::new(DemoService::new()))
}

fn config(checks: CheckSet, seed: u64) -> CampaignConfig {
    CampaignConfig {
        checks,
        seed,
        base_url: "http://demo.invalid".into(),
        ..CampaignConfig::default()
    }
}

fn run(cfg: &CampaignConfig) -> RunReport {
    run_campaign(&demo_doc(), cfg, &in_process()).unwrap()
}

fn without_timing(mut r: RunReport) -> RunReport {
    r.wall_clock_ms = 0;
    r
}

#[test]
fn same_seed_same_report() {
    let mut cfg = config(CheckSet::all(), 11);
    cfg.mode = Mode::Both;
    cfg.stop_policy = StopPolicy::Exhaustive;
    let a = without_timing(run(&cfg));
    let b = without_timing(run(&cfg));
    assert_eq!(a, b);
    assert!(!a.defects.is_empty());
}

#[test]
fn default_checks_find_the_default_defects() {
    let r = run(&config(CheckSet::default_set(), 3));
    let expected: BTreeSet<DefectKey> = demo::manifest()
        .into_iter()
        .filter(|d| CheckSet::default_set().contains(&d.expected_check_kind))
        .map(|d| d.key)
        .collect();
    assert_eq!(r.defect_keys(), expected);
    assert_eq!(r.exit_code, 1);
}

#[test]
fn exhaustive_finds_a_superset_of_first_failure() {
    let mut cfg = config(CheckSet::all(), 5);
    let first = run(&cfg).defect_keys();
    cfg.stop_policy = StopPolicy::Exhaustive;
    let all = run(&cfg).defect_keys();
    assert!(first.is_subset(&all), "{first:?} vs {all:?}");
}

#[test]
fn json_report_round_trips() {
    let mut cfg = config(CheckSet::all(), 2);
    cfg.mode = Mode::Both;
    let r = run(&cfg);
    let bytes = emit_report(&r, ReportFormat::Json);
    let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["report_version"], 1);
    assert_eq!(parse_report(&bytes).unwrap(), r);
}

#[test]
fn text_report_has_one_block_per_defect() {
    let r = run(&config(CheckSet::default_set(), 3));
    let text = String::from_utf8(emit_report(&r, ReportFormat::Text)).unwrap();
    assert_eq!(text.matches("Reproduction:").count(), r.defects.len());
    assert_eq!(text.matches("curl -X").count(), r.defects.len());
    assert!(text.contains("2147483648"));
}

struct Healthy;

impl Service for Healthy {
    fn handle(&self, _: &HttpRequest) -> HttpResponse {
        HttpResponse::json(200, &json!({"status": "ok"}))
    }

    fn reset(&self) {}
}

fn health_only() -> schemafuzz::schema::Document {
    load_document(
        &json!({
            "openapi": "3.0.3",
            "info": {"title": "t", "version": "1"},
            "paths": {"/health": {"get": {"responses": {"200": {
                "description": "ok",
                "content": {"application/json": {"schema": {"type": "object"}}}
            }}}}}
        })
        .to_string(),
    )
    .unwrap()
}

#[test]
fn clean_run_reports_no_defects() {
    let t = InProcessTransport::new(Arc::new(Healthy));
    let r = run_campaign(&health_only(), &config(CheckSet::all(), 1), &t).unwrap();
    assert!(r.defects.is_empty());
    assert_eq!(r.exit_code, 0);
    let v: serde_json::Value = serde_json::from_slice(&emit_report(&r, ReportFormat::Json)).unwrap();
    assert_eq!(v["defects"], json!([]));
    let text = String::from_utf8(emit_report(&r, ReportFormat::Text)).unwrap();
    assert!(text.contains("No defects found."));
}

#[test]
fn zero_operations_is_fatal() {
    let doc = load_document(r#"{"openapi":"3.0.3","info":{"title":"t","version":"1"},"paths":{}}"#).unwrap();
    let err = run_campaign(&doc, &CampaignConfig::default(), &in_process()).unwrap_err();
    assert!(matches!(err, EngineError::FatalSchema(_)));
}

#[test]
fn excluding_every_path_is_fatal() {
    let mut cfg = config(CheckSet::default_set(), 1);
    cfg.exclude_paths = vec!["/*".into(), "/*/*".into()];
    assert!(matches!(
        run_campaign(&demo_doc(), &cfg, &in_process()),
        Err(EngineError::FatalSchema(_))
    ));
}

#[test]
fn excluded_paths_are_not_requested() {
    let mut cfg = config(CheckSet::default_set(), 1);
    cfg.exclude_paths = vec!["/items*".into()];
    let r = run(&cfg);
    assert!(r.operations.iter().all(|o| !o.label.contains("/items")));
    assert!(r.target.excluded >= 5);
    assert!(r.defect_keys().iter().all(|k| k.operation != "createItem"));
}

#[test]
fn schema_patch_constrains_generation() {
    let mut cfg = config(CheckSet::default_set(), 4);
    cfg.stop_policy = StopPolicy::Exhaustive;
    cfg.patches.insert(
        "createItem".into(),
        OperationPatch {
            body: Some(json!({"properties": {"quantity": {"maximum": 1000}}})),
            ..OperationPatch::default()
        },
    );
    let r = run(&cfg);
    assert!(r.defect_keys().iter().all(|k| k.operation != "createItem"));
}

#[test]
fn value_filter_drops_cases() {
    let mut cfg = config(CheckSet::default_set(), 4);
    cfg.filters.push(ValueFilter {
        operation: Some("listItems".into()),
        pointer: "/query/limit".into(),
        reject: (1..=100).map(|n| json!(n)).collect(),
    });
    let r = run(&cfg);
    let stats = r.operations.iter().find(|o| o.operation == "listItems").unwrap();
    assert!(stats.filtered > 0);
}

#[test]
fn code_hooks_filter_and_check() {
    struct NoTeapots;
    impl schemafuzz::oracle::CustomCheck for NoTeapots {
        fn name(&self) -> &str {
            "short_bodies"
        }
        fn check(
            &self,
            _: &schemafuzz::transport::TestCase,
            resp: &HttpResponse,
            _: &schemafuzz::schema::Operation,
        ) -> Option<String> {
            (resp.body.len() > 10_000).then(|| "body over 10 kB".to_string())
        }
    }
    let hooks = Hooks {
        filters: vec![Arc::new(|tc| tc.method != "POST")],
        checks: vec![Arc::new(NoTeapots)],
        ..Hooks::default()
    };
    let r = run_campaign_with(&demo_doc(), &config(CheckSet::default_set(), 1), &in_process(), &hooks).unwrap();
    let keys = r.defect_keys();
    assert!(keys.iter().any(|k| k.kind == CheckKind::Custom("short_bodies".into()) && k.operation == "exportItems"));
    assert!(keys.iter().all(|k| k.operation != "createItem"));
}

#[test]
fn sequences_need_stateful_mode() {
    let mut cfg = config(CheckSet::all(), 1);
    cfg.stop_policy = StopPolicy::Exhaustive;
    let unit = run(&cfg);
    assert!(unit.stateful.is_none());
    assert!(unit.defect_keys().iter().all(|k| !k.kind.is_sequence()));
    cfg.mode = Mode::Stateful;
    let stateful = run(&cfg);
    let uaf = stateful
        .defects
        .iter()
        .find(|d| d.key.kind == CheckKind::UseAfterFree)
        .expect("use after free found");
    let Reproduction::Sequence { steps } = &uaf.minimal_reproduction else {
        panic!("sequence reproduction expected")
    };
    assert_eq!(steps.last().unwrap().method, "GET");
    assert!(steps.iter().any(|s| s.method == "DELETE"));
}

/// Every operation has a templated path and the service knows none of them.
#[test]
fn unexpected_404s_collapse_into_one_defect() {
    struct NotFound;
    impl Service for NotFound {
        fn handle(&self, _: &HttpRequest) -> HttpResponse {
            HttpResponse::new(404)
        }
        fn reset(&self) {}
    }
    let mut paths = serde_json::Map::new();
    for i in 0..50 {
        paths.insert(
            format!("/r{i}/{{id}}"),
            json!({"get": {
                "operationId": format!("get{i}"),
                "parameters": [{"name": "id", "in": "path", "required": true, "schema": {"type": "string"}}],
                "responses": {"200": {"description": "ok"}}
            }}),
        );
    }
    let doc = load_document(&json!({"openapi": "3.0.3", "info": {"title": "t", "version": "1"}, "paths": paths}).to_string())
        .unwrap();
    let t = InProcessTransport::new(Arc::new(NotFound));
    let mut cfg = config(CheckSet::default_set(), 1);
    cfg.max_examples = 1;
    let r = run_campaign(&doc, &cfg, &t).unwrap();
    assert_eq!(r.operations.iter().map(|o| o.failures).sum::<usize>(), 50);
    assert_eq!(r.defects.len(), 1);
    assert_eq!(r.defects[0].occurrences, 50);
    assert_eq!(r.defects[0].key.operation, "*");
}

#[test]
fn dead_port_is_an_infrastructure_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    drop(listener);
    let mut cfg = config(CheckSet::default_set(), 1);
    cfg.base_url = format!("http://127.0.0.1:{port}");
    cfg.max_examples = 5;
    let r = run_campaign(&demo_doc(), &cfg, &NetworkTransport::default()).unwrap();
    assert!(r.defects.is_empty());
    assert!(!r.infrastructure_errors.is_empty());
    assert_eq!(r.exit_code, 2);
}

#[test]
fn finds_defects_over_tcp() {
    let server = demo::serve("127.0.0.1:0").unwrap();
    let transport = NetworkTransport {
        reset_path: Some("/reset".into()),
    };
    let mut cfg = config(CheckSet::default_set(), 3);
    cfg.base_url = server.base_url();
    cfg.max_examples = 30;
    cfg.exclude_paths = vec!["/slow".into()];
    let r = run_campaign(&demo_doc(), &cfg, &transport).unwrap();
    assert!(r.infrastructure_errors.is_empty(), "{:?}", r.infrastructure_errors);
    let keys = r.defect_keys();
    assert!(keys.iter().any(|k| k.kind == CheckKind::StatusCodeConformance));
    // Network runs do not shrink unless asked to.
    assert!(r
        .defects
        .iter()
        .all(|d| d.shrink == schemafuzz::engine::ShrinkStatus::Skipped));
    for d in &r.defects {
        transport.reset(&cfg.base_url).unwrap();
        let case = &d.minimal_reproduction.cases()[0];
        let resp = transport.send(case, &cfg.base_url, std::time::Duration::from_secs(5)).unwrap();
        assert!(resp.status > 0);
    }
}

#[test]
fn slow_responses_time_out_over_tcp() {
    let server = demo::serve("127.0.0.1:0").unwrap();
    let mut cfg = config(CheckSet::default_set(), 1);
    cfg.base_url = server.base_url();
    cfg.include_paths = vec!["/slow".into()];
    cfg.timeout_ms = 300;
    let r = run_campaign(&demo_doc(), &cfg, &NetworkTransport::default()).unwrap();
    assert!(r.infrastructure_errors.iter().any(|e| e.message.contains("timed out")), "{:?}", r.infrastructure_errors);
    assert!(r.defects.is_empty());
}

#[test]
fn parallel_workers_still_find_defects() {
    let mut cfg = config(CheckSet::default_set(), 8);
    cfg.workers = 4;
    let r = run(&cfg);
    assert!(r.defect_keys().iter().any(|k| k.kind == CheckKind::ServerError));
    assert_eq!(r.operations.len(), r.target.operations);
}
