//! Runs a short campaign against the demo service without opening a socket.

use std::sync::Arc;

use schemafuzz::demo::{self, DemoService};
use schemafuzz::engine::{emit_report, run_campaign, CampaignConfig, Mode, ReportFormat};
use schemafuzz::oracle::CheckSet;
use schemafuzz::transport::InProcessTransport;

fn main() {
    let doc = schemafuzz::load_document(demo::openapi()).expect("demo schema loads");
    let config = CampaignConfig {
        checks: CheckSet::all(),
        max_examples: 50,
        seed: 7,
        mode: Mode::Both,
        exclude_paths: vec!["/slow*".into()],
        ..CampaignConfig::default()
    };
    let transport = InProcessTransport::new(Arc::new(DemoService::new()));
    let report = run_campaign(&doc, &config, &transport).expect("campaign runs");
    print!("{}", String::from_utf8_lossy(&emit_report(&report, ReportFormat::Text)));
    std::process::exit(report.exit_code);
}
