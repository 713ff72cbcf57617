use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use schemafuzz::engine::{
    emit_report, run_campaign, CampaignConfig, Mode, OperationPatch, ReportFormat, StopPolicy,
};
use schemafuzz::oracle::CheckSet;
use schemafuzz::transport::NetworkTransport;

#[derive(Parser)]
#[command(name = "schemafuzz", version, about = "Fuzz an HTTP API from its OpenAPI document")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign against a live service.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path or http:// URL of the OpenAPI document.
    #[arg(long)]
    schema: String,
    #[arg(long)]
    base_url: String,
    /// `default`, `all`, `negative`, `performance` or a comma list of check names.
    #[arg(long, default_value = "default")]
    checks: String,
    #[arg(long, default_value_t = 100)]
    max_examples: usize,
    #[arg(long, env = "SCHEMAFUZZ_SEED")]
    seed: Option<u64>,
    /// Also run link-driven request sequences.
    #[arg(long)]
    stateful: bool,
    /// Stop testing an operation after its first failure (the default).
    #[arg(long, conflicts_with = "exhaustive")]
    exclusive_stop: bool,
    /// Run every example of every operation.
    #[arg(long)]
    exhaustive: bool,
    /// Extra request header, `Name: value`. Repeatable.
    #[arg(long = "header")]
    headers: Vec<String>,
    /// Skip operations whose path matches this glob. Repeatable.
    #[arg(long = "exclude-path")]
    exclude_paths: Vec<String>,
    /// Only test operations whose path matches this glob. Repeatable.
    #[arg(long = "include-path")]
    include_paths: Vec<String>,
    #[arg(long)]
    report_json: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    max_response_time: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Request timeout in milliseconds.
    #[arg(long, default_value_t = 10_000)]
    timeout: u64,
    /// Path the target resets its state on when POSTed to.
    #[arg(long)]
    reset_path: Option<String>,
    /// Shrink failures by replaying them against the target.
    #[arg(long, conflicts_with = "no_shrink")]
    shrink: bool,
    #[arg(long)]
    no_shrink: bool,
    /// JSON file mapping operation ids to schema patches.
    #[arg(long)]
    patch: Option<PathBuf>,
    /// Sequences to run in stateful mode.
    #[arg(long)]
    sequences: Option<usize>,
    #[arg(long, default_value_t = 6)]
    max_steps: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let Command::Run(args) = Cli::parse().command;
    match run(args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(args: RunArgs) -> Result<u8, String> {
    let text = read_schema(&args.schema)?;
    let doc = schemafuzz::load_document(&text).map_err(|e| format!("{}: {e}", args.schema))?;
    let checks = CheckSet::parse(&args.checks).map_err(|e| e.to_string())?;
    let seed = args.seed.unwrap_or_else(|| {
        let s = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        eprintln!("seed: {s}");
        s
    });
    let headers = args
        .headers
        .iter()
        .map(|h| {
            h.split_once(':')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .filter(|(k, _)| !k.is_empty())
                .ok_or_else(|| format!("header `{h}` is not `Name: value`"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let patches = match &args.patch {
        Some(p) => {
            let raw = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            serde_json::from_str::<std::collections::BTreeMap<String, OperationPatch>>(&raw)
                .map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => Default::default(),
    };
    let config = CampaignConfig {
        base_url: args.base_url.clone(),
        checks,
        max_examples: args.max_examples,
        seed,
        mode: if args.stateful { Mode::Both } else { Mode::Unit },
        stop_policy: if args.exhaustive {
            StopPolicy::Exhaustive
        } else {
            StopPolicy::FirstFailurePerOperation
        },
        workers: args.workers,
        include_paths: args.include_paths,
        exclude_paths: args.exclude_paths,
        headers,
        timeout_ms: args.timeout,
        max_response_time_ms: args.max_response_time,
        shrink: if args.shrink {
            Some(true)
        } else if args.no_shrink {
            Some(false)
        } else {
            None
        },
        sequences: args.sequences,
        max_steps: args.max_steps,
        patches,
        ..CampaignConfig::default()
    };
    let transport = NetworkTransport {
        reset_path: args.reset_path,
    };
    let report = run_campaign(&doc, &config, &transport).map_err(|e| e.to_string())?;
    print!("{}", String::from_utf8_lossy(&emit_report(&report, ReportFormat::Text)));
    if let Some(path) = &args.report_json {
        std::fs::write(path, emit_report(&report, ReportFormat::Json))
            .map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(report.exit_code as u8)
}

fn read_schema(source: &str) -> Result<String, String> {
    if !source.starts_with("http://") && !source.starts_with("https://") {
        return std::fs::read_to_string(source).map_err(|e| format!("{source}: {e}"));
    }
    let url = url::Url::parse(source).map_err(|e| format!("{source}: {e}"))?;
    if url.scheme() != "http" {
        return Err(format!("{source}: only plain http is supported"));
    }
    let host = url.host_str().ok_or_else(|| format!("{source}: no host"))?;
    let port = url.port_or_known_default().unwrap_or(80);
    let mut target = url.path().to_string();
    if let Some(q) = url.query() {
        target = format!("{target}?{q}");
    }
    let req = schemafuzz::http::HttpRequest {
        method: "GET".into(),
        target,
        headers: vec![("Accept".into(), "application/json, application/yaml".into())],
        body: Vec::new(),
    };
    let resp = schemafuzz::http::send(host.trim_matches(['[', ']']), port, &req, Duration::from_secs(30))
        .map_err(|e| format!("{source}: {e}"))?;
    if resp.status != 200 {
        return Err(format!("{source}: status {}", resp.status));
    }
    String::from_utf8(resp.body).map_err(|_| format!("{source}: document is not UTF-8"))
}
