//! Campaigns: the fuzz loop per operation, link-driven sequences, shrinking,
//! defect grouping and reports.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cases::{CaseContext, CaseError, PreparedOperation};
use crate::choice::ChoiceSequence;
use crate::format::FormatRegistry;
use crate::http::HttpResponse;
use crate::oracle::{defect_key, CheckKind, CheckResult, CheckSet, Checker, CustomCheck, DefectKey};
use crate::schema::{self, Document, Operation, SkippedOperation, SpecVersion};
use crate::stateful::{SequenceRunner, StateMachine};
use crate::transport::{Inputs, Intent, Serialisers, TestCase, Transport, TransportError};

/// Version of the JSON report layout.
pub const REPORT_VERSION: u32 = 1;

/// Consecutive duplicate cases after which an operation counts as exhausted.
const MAX_DUPLICATE_RUN: usize = 30;
/// Consecutive transport failures after which an operation is abandoned.
const MAX_INFRA_RUN: usize = 3;
/// Every this many positive examples, one is mutated from the best-of-K pool.
const TARGET_EVERY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Independent requests per operation.
    #[default]
    Unit,
    /// Link-driven request sequences only.
    Stateful,
    Both,
}

impl Mode {
    fn unit(self) -> bool {
        self != Mode::Stateful
    }

    fn stateful(self) -> bool {
        self != Mode::Unit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopPolicy {
    /// Move on to the next operation after its first failing case. Stateful
    /// sequences always run to their configured count.
    #[default]
    FirstFailurePerOperation,
    /// Run every example.
    Exhaustive,
}

/// Extra constraints for one operation, combined with the declared schemas
/// through `allOf` before generation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OperationPatch {
    /// Parameter name to schema.
    pub parameters: BTreeMap<String, Value>,
    /// Applied to every request body media type.
    pub body: Option<Value>,
}

/// Drops generated cases whose value at `pointer` is one of `reject`.
/// The pointer addresses the inputs, e.g. `/query/limit` or `/body/name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFilter {
    /// Operation id; `None` applies to every operation.
    #[serde(default)]
    pub operation: Option<String>,
    pub pointer: String,
    pub reject: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub base_url: String,
    pub checks: CheckSet,
    pub max_examples: usize,
    pub seed: u64,
    pub mode: Mode,
    pub stop_policy: StopPolicy,
    pub workers: usize,
    /// Globs over path templates; empty includes everything.
    pub include_paths: Vec<String>,
    pub exclude_paths: Vec<String>,
    pub headers: Vec<(String, String)>,
    pub timeout_ms: u64,
    pub max_response_time_ms: u64,
    pub max_amplification: f64,
    /// `None` shrinks only when the transport is in-process.
    pub shrink: Option<bool>,
    /// Predicate evaluations allowed per defect.
    pub shrink_budget: usize,
    /// Sequences to run in stateful mode; defaults to `max_examples`.
    pub sequences: Option<usize>,
    pub max_steps: usize,
    pub link_bias: f64,
    /// The target isolates concurrent sessions, so sequences may run in
    /// parallel and cases need no exclusive reset.
    pub reset_isolated: bool,
    /// Size of the pool of largest-response inputs to mutate; 0 disables.
    pub best_of_k: usize,
    /// Operation id to schema patch.
    pub patches: BTreeMap<String, OperationPatch>,
    pub filters: Vec<ValueFilter>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            base_url: "http://localhost".into(),
            checks: CheckSet::default_set(),
            max_examples: 100,
            seed: 0,
            mode: Mode::Unit,
            stop_policy: StopPolicy::FirstFailurePerOperation,
            workers: 1,
            include_paths: Vec::new(),
            exclude_paths: Vec::new(),
            headers: Vec::new(),
            timeout_ms: 10_000,
            max_response_time_ms: 1_000,
            max_amplification: 100.0,
            shrink: None,
            shrink_budget: 2_000,
            sequences: None,
            max_steps: 6,
            link_bias: 0.8,
            reset_isolated: false,
            best_of_k: 4,
            patches: BTreeMap::new(),
            filters: Vec::new(),
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidConfig(m));
        if self.max_examples == 0 {
            return bad("max_examples must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.link_bias) {
            return bad(format!("link_bias {} is not a probability", self.link_bias));
        }
        for g in self.include_paths.iter().chain(&self.exclude_paths) {
            if let Err(e) = glob::Pattern::new(g) {
                return bad(format!("path glob `{g}`: {e}"));
            }
        }
        Ok(())
    }
}

/// Returns `false` to drop a generated case before it is sent.
pub type CaseFilter = Arc<dyn Fn(&TestCase) -> bool + Send + Sync>;

/// Code-level extension points.
#[derive(Clone, Default)]
pub struct Hooks {
    pub filters: Vec<CaseFilter>,
    pub checks: Vec<Arc<dyn CustomCheck>>,
    pub formats: FormatRegistry,
    pub serialisers: Serialisers,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("fatal schema error: {0}")]
    FatalSchema(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reproduction {
    Case { case: Box<TestCase> },
    /// Every request of the sequence up to the failing one.
    Sequence { steps: Vec<TestCase> },
}

impl Reproduction {
    pub fn cases(&self) -> &[TestCase] {
        match self {
            Reproduction::Case { case } => std::slice::from_ref(case),
            Reproduction::Sequence { steps } => steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Unit,
    Stateful,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstSeen {
    pub phase: Phase,
    pub operation: String,
    /// Example index within the operation, or sequence index.
    pub example: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShrinkStatus {
    Shrunk,
    Skipped,
    /// The failure did not recur on replay; the original case is kept.
    NotReproducible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Defect {
    pub key: DefectKey,
    pub detail: String,
    pub first_seen: FirstSeen,
    pub minimal_reproduction: Reproduction,
    pub occurrences: usize,
    pub shrink: ShrinkStatus,
    pub shrink_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OperationStats {
    pub operation: String,
    pub label: String,
    /// Cases sent.
    pub examples: usize,
    pub positive: usize,
    pub negative: usize,
    pub duplicates: usize,
    pub filtered: usize,
    pub generation_errors: usize,
    pub checks_run: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SequenceStats {
    pub sequences: usize,
    pub steps: usize,
    pub checks_run: usize,
    pub failures: usize,
    pub transitions: usize,
    pub dropped_links: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfraError {
    pub operation: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetInfo {
    pub base_url: String,
    pub title: Option<String>,
    pub api_version: Option<String>,
    pub spec_version: SpecVersion,
    /// Operations tested.
    pub operations: usize,
    /// Excluded by path filters.
    pub excluded: usize,
    pub skipped: Vec<SkippedOperation>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub report_version: u32,
    pub tool_version: String,
    pub target: TargetInfo,
    pub config: CampaignConfig,
    pub operations: Vec<OperationStats>,
    pub stateful: Option<SequenceStats>,
    /// Sorted by key.
    pub defects: Vec<Defect>,
    pub infrastructure_errors: Vec<InfraError>,
    pub wall_clock_ms: u64,
    pub exit_code: i32,
}

impl RunReport {
    pub fn defect_keys(&self) -> BTreeSet<DefectKey> {
        self.defects.iter().map(|d| d.key.clone()).collect()
    }

    pub fn defect(&self, key: &DefectKey) -> Option<&Defect> {
        self.defects.iter().find(|d| &d.key == key)
    }
}

/// 1 when defects were found, otherwise 2 when the target could not be
/// reached reliably, otherwise 0.
pub fn exit_code(defects: usize, infrastructure_errors: usize) -> i32 {
    if defects > 0 {
        1
    } else if infrastructure_errors > 0 {
        2
    } else {
        0
    }
}

/// Runs a campaign with no code-level hooks.
pub fn run_campaign(
    doc: &Document,
    config: &CampaignConfig,
    transport: &dyn Transport,
) -> Result<RunReport, EngineError> {
    run_campaign_with(doc, config, transport, &Hooks::default())
}

pub fn run_campaign_with(
    doc: &Document,
    config: &CampaignConfig,
    transport: &dyn Transport,
    hooks: &Hooks,
) -> Result<RunReport, EngineError> {
    let started = Instant::now();
    config.validate()?;
    let extraction = schema::extract_operations(doc).map_err(|e| EngineError::FatalSchema(e.to_string()))?;
    let globs = |gs: &[String]| -> Vec<glob::Pattern> { gs.iter().filter_map(|g| glob::Pattern::new(g).ok()).collect() };
    let include = globs(&config.include_paths);
    let exclude = globs(&config.exclude_paths);
    let mut skipped = extraction.skipped.clone();
    let mut excluded = 0;
    let mut ops = Vec::new();
    for op in &extraction.operations {
        let wanted = (include.is_empty() || include.iter().any(|g| g.matches(&op.path)))
            && !exclude.iter().any(|g| g.matches(&op.path));
        if !wanted {
            excluded += 1;
            continue;
        }
        let patched = apply_patch(op, config.patches.get(&op.id));
        match PreparedOperation::new(&patched, &hooks.serialisers) {
            Ok(p) => ops.push(p),
            Err(reason) => skipped.push(SkippedOperation {
                method: op.method.clone(),
                path: op.path.clone(),
                reason,
            }),
        }
    }
    if ops.is_empty() {
        return Err(EngineError::FatalSchema(format!(
            "no testable operations ({} extracted, {excluded} excluded, {} skipped)",
            extraction.operations.len(),
            skipped.len()
        )));
    }
    let info = doc.root.get("info");
    let text = |k: &str| info.and_then(|i| i.get(k)).and_then(Value::as_str).map(str::to_string);
    let target = TargetInfo {
        base_url: config.base_url.clone(),
        title: text("title"),
        api_version: text("version"),
        spec_version: doc.version,
        operations: ops.len(),
        excluded,
        skipped,
        warnings: extraction.warnings.clone(),
    };

    let mut checker = Checker::new(config.checks.clone());
    checker.max_response_time = Duration::from_millis(config.max_response_time_ms);
    checker.max_amplification = config.max_amplification;
    checker.custom = hooks.checks.clone();
    let mut cx = CaseContext {
        serialisers: hooks.serialisers.clone(),
        headers: config.headers.clone(),
        ..CaseContext::default()
    };
    cx.gen.formats = hooks.formats.clone();
    let campaign = Campaign {
        config,
        hooks,
        transport,
        ops,
        cx,
        checker,
        timeout: Duration::from_millis(config.timeout_ms),
        reset_each: config.workers == 1 || config.reset_isolated,
        shrink: config.shrink.unwrap_or_else(|| transport.is_in_process()),
        defects: Mutex::new(BTreeMap::new()),
        infra: Mutex::new(Vec::new()),
    };

    let mut operations = Vec::new();
    if config.mode.unit() {
        operations = parallel(campaign.ops.len(), config.workers, |i| campaign.run_operation(i));
    }
    let stateful = config.mode.stateful().then(|| {
        let graph = schema::extract_link_graph(&extraction.operations);
        campaign.run_sequences(&graph)
    });

    let defects: Vec<Defect> = campaign.defects.into_inner().unwrap().into_values().collect();
    let infrastructure_errors = campaign.infra.into_inner().unwrap();
    Ok(RunReport {
        report_version: REPORT_VERSION,
        tool_version: crate::VERSION.to_string(),
        target,
        config: config.clone(),
        operations,
        stateful,
        exit_code: exit_code(defects.len(), infrastructure_errors.len()),
        defects,
        infrastructure_errors,
        wall_clock_ms: started.elapsed().as_millis() as u64,
    })
}

fn apply_patch(op: &Operation, patch: Option<&OperationPatch>) -> Operation {
    let mut op = op.clone();
    let Some(patch) = patch else { return op };
    let merge = |orig: &Value, extra: &Value| serde_json::json!({"allOf": [orig, extra]});
    for p in &mut op.parameters {
        if let Some(extra) = patch.parameters.get(&p.name) {
            p.schema = merge(&p.schema, extra);
        }
    }
    if let (Some(body), Some(extra)) = (&mut op.body, &patch.body) {
        for m in &mut body.content {
            m.schema = merge(&m.schema, extra);
        }
    }
    op
}

/// Runs `f` over `0..n` on up to `workers` threads; results keep index order.
fn parallel<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.min(n) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let v = f(i);
                *slots[i].lock().unwrap() = Some(v);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every index is processed"))
        .collect()
}

/// Seed of one example: FNV-1a over the campaign seed, a stream name and
/// the index, so each operation has its own stream regardless of order.
fn example_seed(seed: u64, stream: &str, index: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let bytes = seed
        .to_le_bytes()
        .into_iter()
        .chain(stream.bytes())
        .chain([0xff])
        .chain((index as u64).to_le_bytes());
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn fingerprint(tc: &TestCase) -> String {
    format!(
        "{:?} {} {:?} {:?} {:?}",
        tc.intent,
        tc.target(),
        tc.headers,
        tc.cookies,
        tc.body.as_ref().map(|b| (&b.media_type, &b.bytes))
    )
}

struct Campaign<'a> {
    config: &'a CampaignConfig,
    hooks: &'a Hooks,
    transport: &'a dyn Transport,
    ops: Vec<PreparedOperation>,
    cx: CaseContext,
    checker: Checker,
    timeout: Duration,
    reset_each: bool,
    shrink: bool,
    defects: Mutex<BTreeMap<DefectKey, Defect>>,
    infra: Mutex<Vec<InfraError>>,
}

impl Campaign<'_> {
    fn run_operation(&self, oi: usize) -> OperationStats {
        let prep = &self.ops[oi];
        let set = &self.config.checks;
        let mut stats = OperationStats {
            operation: prep.op.id.clone(),
            label: prep.op.label(),
            ..OperationStats::default()
        };
        let positives = !self.hooks.checks.is_empty()
            || set
                .0
                .iter()
                .any(|k| *k != CheckKind::NegativeRequestAccepted && !k.is_sequence());
        let mut negatives = set.wants_negative();
        let mut seen = HashSet::new();
        let mut dup_run = 0;
        let mut infra_run = 0;
        let mut pool: Vec<(usize, Vec<u8>)> = Vec::new();
        for i in 0..self.config.max_examples {
            let intent = if negatives && (!positives || i % 2 == 1) {
                Intent::Negative
            } else if positives {
                Intent::Positive
            } else {
                break;
            };
            let seed = example_seed(self.config.seed, &prep.op.id, i);
            let mut seq = self.start_sequence(seed, intent, i, &pool);
            let tc = match prep.generate(&mut seq, &self.cx, intent, &Inputs::default()) {
                Ok(mut tc) => {
                    tc.choices = seq.consumed().to_vec();
                    tc
                }
                Err(CaseError::NothingToNegate) => {
                    negatives = false;
                    continue;
                }
                Err(_) => {
                    stats.generation_errors += 1;
                    continue;
                }
            };
            if !self.accepts(&tc) {
                stats.filtered += 1;
                continue;
            }
            if !seen.insert(fingerprint(&tc)) {
                stats.duplicates += 1;
                dup_run += 1;
                if dup_run >= MAX_DUPLICATE_RUN {
                    break;
                }
                continue;
            }
            dup_run = 0;
            let (resp, results) = match self.execute(&prep.op, &tc) {
                Ok(r) => {
                    infra_run = 0;
                    r
                }
                Err(e) => {
                    self.infra_error(Some(&prep.op.id), &e);
                    infra_run += 1;
                    if infra_run >= MAX_INFRA_RUN {
                        break;
                    }
                    continue;
                }
            };
            stats.examples += 1;
            match intent {
                Intent::Positive => stats.positive += 1,
                Intent::Negative => stats.negative += 1,
            }
            stats.checks_run += results.len();
            if intent == Intent::Positive && self.config.best_of_k > 0 {
                pool.push((resp.body.len(), tc.choices.clone()));
                pool.sort_by_key(|e| std::cmp::Reverse(e.0));
                pool.truncate(self.config.best_of_k);
            }
            let mut failed = false;
            for r in results.iter().filter(|r| !r.passed) {
                failed = true;
                stats.failures += 1;
                let first = FirstSeen {
                    phase: Phase::Unit,
                    operation: prep.op.id.clone(),
                    example: i,
                };
                if self.claim(r, first, Reproduction::Case { case: Box::new(tc.clone()) }) {
                    self.shrink_case(prep, intent, &tc, r);
                }
            }
            if failed && self.config.stop_policy == StopPolicy::FirstFailurePerOperation {
                break;
            }
        }
        stats
    }

    /// Fresh choices, or now and then a mutation of one of the inputs that
    /// drew the largest responses so far.
    fn start_sequence(&self, seed: u64, intent: Intent, i: usize, pool: &[(usize, Vec<u8>)]) -> ChoiceSequence {
        if intent == Intent::Negative || pool.is_empty() || i % TARGET_EVERY != TARGET_EVERY - 2 {
            return ChoiceSequence::record(seed);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bytes = pool[rng.gen_range(0..pool.len())].1.clone();
        let keep = rng.gen_range(bytes.len() / 2..=bytes.len());
        bytes.truncate(keep);
        for _ in 0..rng.gen_range(1..=3) {
            if !bytes.is_empty() {
                let j = rng.gen_range(0..bytes.len());
                bytes[j] = rng.gen();
            }
        }
        ChoiceSequence::record_with_prefix(bytes, seed)
    }

    fn accepts(&self, tc: &TestCase) -> bool {
        if !self.config.filters.is_empty() {
            let inputs = serde_json::to_value(&tc.inputs).unwrap_or(Value::Null);
            for f in &self.config.filters {
                if f.operation.as_ref().is_some_and(|o| *o != tc.operation) {
                    continue;
                }
                if inputs.pointer(&f.pointer).is_some_and(|v| f.reject.contains(v)) {
                    return false;
                }
            }
        }
        self.hooks.filters.iter().all(|f| f(tc))
    }

    fn execute(&self, op: &Operation, tc: &TestCase) -> Result<(HttpResponse, Vec<CheckResult>), TransportError> {
        if self.reset_each {
            self.transport.reset(&self.config.base_url)?;
        }
        let resp = self.transport.send(tc, &self.config.base_url, self.timeout)?;
        let results = self.checker.run(tc, &resp, op);
        Ok((resp, results))
    }

    fn infra_error(&self, operation: Option<&str>, e: &TransportError) {
        self.infra.lock().unwrap().push(InfraError {
            operation: operation.map(str::to_string),
            message: e.to_string(),
        });
    }

    /// Records an occurrence. Returns true when the key is new, in which
    /// case the caller owns shrinking it.
    fn claim(&self, r: &CheckResult, first_seen: FirstSeen, repro: Reproduction) -> bool {
        let key = defect_key(r);
        let mut map = self.defects.lock().unwrap();
        if let Some(d) = map.get_mut(&key) {
            d.occurrences += 1;
            return false;
        }
        map.insert(
            key.clone(),
            Defect {
                key,
                detail: r.detail.clone(),
                first_seen,
                minimal_reproduction: repro,
                occurrences: 1,
                shrink: ShrinkStatus::Skipped,
                shrink_evaluations: 0,
            },
        );
        true
    }

    fn settle(&self, key: &DefectKey, outcome: Result<(Shrunk, String, Reproduction), ShrinkError>) {
        let mut map = self.defects.lock().unwrap();
        let d = map.get_mut(key).expect("claimed before shrinking");
        match outcome {
            Ok((s, detail, repro)) => {
                d.shrink = ShrinkStatus::Shrunk;
                d.shrink_evaluations = s.evaluations;
                d.detail = detail;
                d.minimal_reproduction = repro;
            }
            Err(ShrinkError::NotReproducible) => d.shrink = ShrinkStatus::NotReproducible,
        }
    }

    fn shrink_case(&self, prep: &PreparedOperation, intent: Intent, tc: &TestCase, r: &CheckResult) {
        if !self.shrink {
            return;
        }
        let key = defect_key(r);
        let mut last = None;
        let outcome = shrink_failure(&tc.choices, self.config.shrink_budget, |bytes| {
            let mut seq = ChoiceSequence::replay(bytes);
            let mut tc = prep.generate(&mut seq, &self.cx, intent, &Inputs::default()).ok()?;
            if !self.accepts(&tc) {
                return None;
            }
            let (_, results) = self.execute(&prep.op, &tc).ok()?;
            let hit = results.into_iter().find(|x| !x.passed && defect_key(x) == key)?;
            tc.choices = seq.consumed().to_vec();
            last = Some((hit.detail, tc));
            Some(Attempt {
                consumed: seq.consumed().to_vec(),
                blocks: seq.blocks().to_vec(),
            })
        });
        let outcome = outcome.map(|s| {
            let (detail, case) = last.take().expect("a successful attempt was recorded");
            (s, detail, Reproduction::Case { case: Box::new(case) })
        });
        self.settle(&key, outcome);
    }

    fn run_sequences(&self, graph: &schema::LinkGraph) -> SequenceStats {
        let machine = StateMachine::new(&self.ops, graph);
        let runner = SequenceRunner {
            machine: &machine,
            ops: &self.ops,
            cx: &self.cx,
            checker: &self.checker,
            transport: self.transport,
            base_url: &self.config.base_url,
            timeout: self.timeout,
            max_steps: self.config.max_steps,
            link_bias: self.config.link_bias,
        };
        let count = self.config.sequences.unwrap_or(self.config.max_examples);
        let workers = if self.config.reset_isolated { self.config.workers } else { 1 };
        let per_sequence = parallel(count, workers, |i| {
            let mut s = SequenceStats::default();
            if let Err(e) = self.transport.reset(&self.config.base_url) {
                self.infra_error(None, &e);
                return s;
            }
            let mut seq = ChoiceSequence::record(example_seed(self.config.seed, "\0sequence", i));
            let outcome = match runner.run(&mut seq) {
                Ok(o) => o,
                Err(e) => {
                    self.infra_error(None, &e);
                    return s;
                }
            };
            let bytes = seq.consumed().to_vec();
            s.sequences = 1;
            s.steps = outcome.state.history.len();
            s.checks_run = outcome.results.len();
            for (at, r) in outcome.failures() {
                s.failures += 1;
                let steps = outcome.state.history[..=*at].iter().map(|(tc, _)| tc.clone()).collect();
                let first = FirstSeen {
                    phase: Phase::Stateful,
                    operation: r.operation.clone(),
                    example: i,
                };
                if self.claim(r, first, Reproduction::Sequence { steps }) {
                    self.shrink_sequence(&runner, &bytes, r);
                }
            }
            s
        });
        let mut total = SequenceStats {
            transitions: machine.transitions.len(),
            dropped_links: machine.dropped.clone(),
            ..SequenceStats::default()
        };
        for s in per_sequence {
            total.sequences += s.sequences;
            total.steps += s.steps;
            total.checks_run += s.checks_run;
            total.failures += s.failures;
        }
        total
    }

    fn shrink_sequence(&self, runner: &SequenceRunner<'_>, bytes: &[u8], r: &CheckResult) {
        if !self.shrink {
            return;
        }
        let key = defect_key(r);
        let mut last = None;
        let outcome = shrink_failure(bytes, self.config.shrink_budget, |cand| {
            self.transport.reset(&self.config.base_url).ok()?;
            let mut seq = ChoiceSequence::replay(cand);
            let out = runner.run(&mut seq).ok()?;
            let (at, hit) = out.failures().find(|(_, x)| defect_key(x) == key)?;
            let steps: Vec<TestCase> = out.state.history[..=*at].iter().map(|(tc, _)| tc.clone()).collect();
            last = Some((hit.detail.clone(), steps));
            Some(Attempt {
                consumed: seq.consumed().to_vec(),
                blocks: seq.blocks().to_vec(),
            })
        });
        let outcome = outcome.map(|s| {
            let (detail, steps) = last.take().expect("a successful attempt was recorded");
            (s, detail, Reproduction::Sequence { steps })
        });
        self.settle(&key, outcome);
    }
}

/// What one replay of a candidate consumed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attempt {
    pub consumed: Vec<u8>,
    /// `(start, len)` of every draw.
    pub blocks: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shrunk {
    pub bytes: Vec<u8>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ShrinkError {
    #[error("the failure did not reproduce on replay")]
    NotReproducible,
}

fn shortlex_less(a: &[u8], b: &[u8]) -> bool {
    (a.len(), a) < (b.len(), b)
}

/// Shrinks a failing choice sequence. `still_fails` replays a candidate and
/// returns what it consumed when the failure recurs. Candidates are only
/// ever shortlex-smaller than the current best, so every success is kept.
pub fn shrink_failure(
    initial: &[u8],
    budget: usize,
    still_fails: impl FnMut(&[u8]) -> Option<Attempt>,
) -> Result<Shrunk, ShrinkError> {
    let mut s = Shrinker {
        pred: still_fails,
        best: Attempt {
            consumed: Vec::new(),
            blocks: Vec::new(),
        },
        evaluations: 1,
        budget: budget.max(1),
    };
    s.best = (s.pred)(initial).ok_or(ShrinkError::NotReproducible)?;
    loop {
        let before = s.best.consumed.clone();
        s.delete_blocks();
        s.minimise_blocks();
        s.delete_chunks();
        if s.best.consumed == before || s.evaluations >= s.budget {
            break;
        }
    }
    Ok(Shrunk {
        bytes: s.best.consumed,
        evaluations: s.evaluations,
    })
}

struct Shrinker<F> {
    pred: F,
    best: Attempt,
    evaluations: usize,
    budget: usize,
}

impl<F: FnMut(&[u8]) -> Option<Attempt>> Shrinker<F> {
    fn attempt(&mut self, cand: Vec<u8>) -> bool {
        if self.evaluations >= self.budget || !shortlex_less(&cand, &self.best.consumed) {
            return false;
        }
        self.evaluations += 1;
        match (self.pred)(&cand) {
            Some(a) if shortlex_less(&a.consumed, &self.best.consumed) => {
                self.best = a;
                true
            }
            _ => false,
        }
    }

    fn delete_blocks(&mut self) {
        let mut i = self.best.blocks.len();
        while i > 0 {
            i -= 1;
            let Some(&(start, len)) = self.best.blocks.get(i) else { continue };
            if start + len > self.best.consumed.len() {
                continue;
            }
            let mut c = self.best.consumed.clone();
            c.drain(start..start + len);
            self.attempt(c);
        }
    }

    fn with_block(&mut self, start: usize, len: usize, v: u128) -> bool {
        if start + len > self.best.consumed.len() {
            return false;
        }
        let mut c = self.best.consumed.clone();
        c[start..start + len].copy_from_slice(&v.to_be_bytes()[16 - len..]);
        self.attempt(c)
    }

    /// Zeroes each block, or binary-searches the smallest value that still
    /// fails.
    fn minimise_blocks(&mut self) {
        let mut i = 0;
        while let Some(&(start, len)) = self.best.blocks.get(i) {
            i += 1;
            if len > 16 || start + len > self.best.consumed.len() {
                continue;
            }
            let cur = self.best.consumed[start..start + len]
                .iter()
                .fold(0u128, |acc, &b| (acc << 8) | u128::from(b));
            if cur == 0 || self.with_block(start, len, 0) {
                continue;
            }
            let (mut lo, mut hi) = (0u128, cur);
            while lo + 1 < hi && self.evaluations < self.budget {
                let mid = lo + (hi - lo) / 2;
                if self.with_block(start, len, mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
        }
    }

    fn delete_chunks(&mut self) {
        for k in [8, 4, 2, 1] {
            let mut i = 0;
            while i + k <= self.best.consumed.len() && self.evaluations < self.budget {
                let mut c = self.best.consumed.clone();
                c.drain(i..i + k);
                if !self.attempt(c) {
                    i += 1;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

pub fn emit_report(r: &RunReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(r).expect("reports serialise");
            v.push(b'\n');
            v
        }
        ReportFormat::Text => render_text(r).into_bytes(),
    }
}

pub fn parse_report(bytes: &[u8]) -> Result<RunReport, serde_json::Error> {
    serde_json::from_slice(bytes)
}

fn render_text(r: &RunReport) -> String {
    let mut s = String::new();
    let t = &r.target;
    let _ = writeln!(s, "schemafuzz {} against {}", r.tool_version, t.base_url);
    if let Some(title) = &t.title {
        let _ = writeln!(s, "API: {title} {}", t.api_version.as_deref().unwrap_or(""));
    }
    let _ = writeln!(
        s,
        "Operations: {} tested, {} skipped, {} excluded",
        t.operations,
        t.skipped.len(),
        t.excluded
    );
    let examples: usize = r.operations.iter().map(|o| o.examples).sum();
    let checks: usize = r.operations.iter().map(|o| o.checks_run).sum();
    let _ = writeln!(s, "Examples: {examples}, checks: {checks}");
    if let Some(st) = &r.stateful {
        let _ = writeln!(
            s,
            "Sequences: {}, steps: {}, links: {}",
            st.sequences, st.steps, st.transitions
        );
    }
    let _ = writeln!(s, "Seed: {}, time: {:.2} s", r.config.seed, r.wall_clock_ms as f64 / 1000.0);
    let _ = writeln!(s);
    if r.defects.is_empty() {
        let _ = writeln!(s, "No defects found.");
    } else {
        let _ = writeln!(s, "{} defect(s):", r.defects.len());
    }
    for (i, d) in r.defects.iter().enumerate() {
        let _ = writeln!(s);
        let _ = writeln!(s, "{}. {}", i + 1, d.key);
        if !d.detail.is_empty() {
            let _ = writeln!(s, "   {}", d.detail);
        }
        let shrink = match d.shrink {
            ShrinkStatus::Shrunk => "shrunk",
            ShrinkStatus::Skipped => "not shrunk",
            ShrinkStatus::NotReproducible => "flaky, not reproducible on replay",
        };
        let _ = writeln!(s, "   occurrences: {}, {shrink}", d.occurrences);
        let _ = writeln!(s, "   Reproduction:");
        for tc in d.minimal_reproduction.cases() {
            let _ = writeln!(s, "     {}", tc.curl(&t.base_url));
        }
    }
    if !r.infrastructure_errors.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "{} infrastructure error(s):", r.infrastructure_errors.len());
        for e in r.infrastructure_errors.iter().take(10) {
            let _ = writeln!(s, "   {}: {}", e.operation.as_deref().unwrap_or("-"), e.message);
        }
    }
    s
}
