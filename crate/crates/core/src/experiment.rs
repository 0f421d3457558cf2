//! Experiment files: which traces, cluster, workload and policies to run,
//! and where the CSV reports go.
//!
//! ```toml
//! name = "example"
//! output_dir = "out"
//!
//! [cluster]
//! preset = "standard"
//!
//! [workload]
//! seed = 7
//!
//! [[traces]]
//! label = "DE1"
//! path = "de.csv"
//! start = "2024-01-01"
//! end = "2024-01-08"
//!
//! [[policies]]
//! kind = "greedy_budget"
//! total = 10080.0
//! ```
//!
//! Relative paths are resolved against the directory holding the file.
//! Window `end` dates are exclusive.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::carbon_trace::{parse_timestamp, parse_trace, CarbonIntensityTrace, ColumnMap};
use crate::cluster::{build_cluster, NodeSpec};
use crate::engine::{run_scenario, ScenarioConfig, WorkloadSource};
use crate::policy::Policy;
use crate::report::{buckets_csv, ledger_csv, steps_csv, summarize, summary_csv, SummaryRow, DEFAULT_PRICES, SIX_HOURS_S};
use crate::samples::EVALUATION_WINDOWS;
use crate::workload::{tasks_from_csv, DiurnalTraceParams};

/// Weekly budget in grams used when a policy leaves its parameter out.
pub const DEFAULT_WEEKLY_BUDGET_G: f64 = 10_080.0;
const WEEK_S: f64 = 604_800.0;

/// Base rate of the default weekly budget, g/s.
pub fn default_rate_limit() -> f64 {
    DEFAULT_WEEKLY_BUDGET_G / WEEK_S
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot parse experiment file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("experiment is invalid:\n{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("unknown scenario `{wanted}`; available: {}", .available.join(", "))]
    UnknownScenario { wanted: String, available: Vec<String> },
    #[error("{failed} of {total} scenarios failed:\n{}", .messages.join("\n"))]
    ScenarioFailures { failed: usize, total: usize, messages: Vec<String> },
}

fn format_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

/// One problem found while checking an experiment file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Location in the file, e.g. `traces[1].path`.
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn diag(field: impl Into<String>, message: impl Into<String>) -> Diagnostic {
    Diagnostic { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub name: String,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_prices")]
    pub prices: Vec<f64>,
    #[serde(default = "default_bucket")]
    pub bucket_s: u64,
    #[serde(default = "yes")]
    pub write_steps: bool,
    #[serde(default)]
    pub write_ledger: bool,
    /// Simulated seconds per scenario; defaults to the window length.
    #[serde(default)]
    pub horizon_s: Option<u64>,
    #[serde(default)]
    pub cluster: ClusterSection,
    #[serde(default)]
    pub workload: WorkloadSection,
    pub traces: Vec<TraceSection>,
    pub policies: Vec<PolicySection>,
}

fn default_prices() -> Vec<f64> {
    DEFAULT_PRICES.to_vec()
}

fn default_bucket() -> u64 {
    SIX_HOURS_S
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSection {
    /// `"standard"` (one small, one medium, one large node) when `nodes` is empty.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub initial_node: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    #[serde(default)]
    pub seed: u64,
    /// Task CSV to replay instead of generating the diurnal trace.
    #[serde(default)]
    pub replay: Option<PathBuf>,
    #[serde(default)]
    pub diurnal: DiurnalTraceParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSection {
    pub label: String,
    /// CSV file with hourly intensities.
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Name of a bundled synthetic week (`DE1` .. `PL2`) instead of a file.
    #[serde(default)]
    pub sample: Option<String>,
    #[serde(default = "default_ts_column")]
    pub timestamp_column: String,
    #[serde(default = "default_ci_column")]
    pub intensity_column: String,
    #[serde(default)]
    pub start: Option<String>,
    #[serde(default)]
    pub end: Option<String>,
}

fn default_ts_column() -> String {
    ColumnMap::default().timestamp
}

fn default_ci_column() -> String {
    ColumnMap::default().intensity
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    /// `unlimited`, `fixed` or `greedy_budget`.
    pub kind: String,
    /// Used in scenario labels; defaults to `kind`.
    #[serde(default)]
    pub label: Option<String>,
    /// g/s for `fixed`; defaults to the weekly budget's base rate.
    #[serde(default)]
    pub rate_limit: Option<f64>,
    /// Grams over the horizon for `greedy_budget`; defaults to the weekly
    /// budget scaled to the horizon.
    #[serde(default)]
    pub total: Option<f64>,
}

impl PolicySection {
    pub fn display_label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.kind)
    }

    fn to_policy(&self, horizon: u64) -> Result<Policy, String> {
        match self.kind.as_str() {
            "unlimited" => Ok(Policy::Unlimited),
            "fixed" => {
                let rate_limit = self.rate_limit.unwrap_or_else(default_rate_limit);
                if !(rate_limit >= 0.0) || !rate_limit.is_finite() {
                    return Err(format!("rate_limit must be non-negative, got {rate_limit}"));
                }
                Ok(Policy::FixedRate { rate_limit })
            }
            "greedy_budget" => {
                let total = self.total.unwrap_or(default_rate_limit() * horizon as f64);
                if !(total > 0.0) || !total.is_finite() {
                    return Err(format!("total must be positive, got {total}"));
                }
                Ok(Policy::GreedyBudget { total })
            }
            other => Err(format!("unknown policy kind `{other}` (expected unlimited, fixed or greedy_budget)")),
        }
    }
}

/// A parsed experiment plus the directory its relative paths start from.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub file: ExperimentFile,
    pub base_dir: PathBuf,
    source: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    /// Run only these scenario labels (all when empty).
    pub scenarios: Vec<String>,
    pub seed: Option<u64>,
    pub dry_run: bool,
    /// Override `write_steps` from the file.
    pub write_steps: Option<bool>,
    /// Print one line per finished scenario to stderr.
    pub progress: bool,
}

/// Result of [`Experiment::run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub scenarios: Vec<String>,
    pub rows: Vec<SummaryRow>,
    /// Exact bytes written to `summary.csv` (empty on a dry run).
    pub summary_csv: String,
}

struct Resolved {
    scenarios: Vec<(String, ScenarioConfig)>,
    inputs_hash: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    ebsim_version: &'a str,
    config_sha256: &'a str,
    seed: u64,
    status: String,
    scenario: Vec<ManifestEntry>,
}

#[derive(Serialize, Clone)]
struct ManifestEntry {
    label: String,
    status: String,
}

const EVALUATION_PRESET: &str = include_str!("../experiments/evaluation_grid_builtin.toml");

impl Experiment {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ExperimentError> {
        Ok(Self { file: toml::from_str(text)?, base_dir: base_dir.into(), source: text.to_string() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
    }

    /// The 3 policies x 6 weeks grid on the bundled synthetic traces.
    pub fn evaluation_preset() -> Self {
        Self::from_toml_str(EVALUATION_PRESET, ".").expect("bundled preset parses")
    }

    /// Named preset, currently only `evaluation`.
    pub fn preset(name: &str) -> Option<Self> {
        (name == "evaluation").then(Self::evaluation_preset)
    }

    fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// All problems with the file; empty when it is runnable.
    pub fn validate(&self) -> Vec<Diagnostic> {
        self.resolve(None).err().unwrap_or_default()
    }

    /// Scenario labels in run order (policies outer, traces inner).
    pub fn scenario_labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        for p in &self.file.policies {
            for t in &self.file.traces {
                out.push(format!("{}-{}", p.display_label(), t.label));
            }
        }
        out
    }

    /// Builds every scenario, with the workload seed optionally overridden.
    pub fn scenarios(&self, seed: Option<u64>) -> Result<Vec<ScenarioConfig>, ExperimentError> {
        let resolved = self.resolve(seed).map_err(ExperimentError::Invalid)?;
        Ok(resolved.scenarios.into_iter().map(|(_, c)| c).collect())
    }

    fn load_trace(&self, i: usize, t: &TraceSection, hasher: &mut Sha256) -> Result<CarbonIntensityTrace, Diagnostic> {
        let field = |f: &str| format!("traces[{i}].{f}");
        let (csv, columns) = match (&t.path, &t.sample) {
            (Some(path), None) => {
                let full = self.resolve_path(path);
                let text = fs::read_to_string(&full)
                    .map_err(|e| diag(field("path"), format!("cannot read {}: {e}", full.display())))?;
                (text, ColumnMap::new(t.timestamp_column.clone(), t.intensity_column.clone()))
            }
            (None, Some(name)) => {
                let w = EVALUATION_WINDOWS
                    .iter()
                    .find(|w| w.label == name)
                    .ok_or_else(|| diag(field("sample"), format!("unknown sample `{name}`")))?;
                (w.csv(), ColumnMap::default())
            }
            _ => return Err(diag(field("path"), "exactly one of `path` and `sample` is required")),
        };
        hasher.update(csv.as_bytes());
        let trace = parse_trace(&csv, &columns).map_err(|e| diag(field("path"), e.to_string()))?;
        let date = |key: &str, raw: &Option<String>, default: i64| match raw {
            None => Ok(default),
            Some(s) => parse_timestamp(s).ok_or_else(|| diag(field(key), format!("cannot parse date `{s}`"))),
        };
        let start = date("start", &t.start, trace.start_epoch())?;
        let end = date("end", &t.end, trace.end_epoch())?;
        let window = trace.slice_window(start, end).map_err(|e| diag(field("start"), e.to_string()))?;
        Ok(window.with_zone_label(t.label.clone()))
    }

    fn resolve(&self, seed: Option<u64>) -> Result<Resolved, Vec<Diagnostic>> {
        let f = &self.file;
        let mut errors = Vec::new();
        let mut hasher = Sha256::new();
        hasher.update(self.source.as_bytes());

        if f.traces.is_empty() {
            errors.push(diag("traces", "at least one trace is required"));
        }
        if f.policies.is_empty() {
            errors.push(diag("policies", "at least one policy is required"));
        }
        if f.bucket_s == 0 {
            errors.push(diag("bucket_s", "must be positive"));
        }
        if f.horizon_s == Some(0) {
            errors.push(diag("horizon_s", "must be positive"));
        }
        for (i, p) in f.prices.iter().enumerate() {
            if !(*p >= 0.0) || !p.is_finite() {
                errors.push(diag(format!("prices[{i}]"), format!("must be non-negative, got {p}")));
            }
        }
        let mut seen = HashSet::new();
        for (i, t) in f.traces.iter().enumerate() {
            if !seen.insert(&t.label) {
                errors.push(diag(format!("traces[{i}].label"), format!("duplicate label `{}`", t.label)));
            }
        }
        let mut seen = HashSet::new();
        for (i, p) in f.policies.iter().enumerate() {
            if !seen.insert(p.display_label()) {
                errors.push(diag(format!("policies[{i}].label"), format!("duplicate label `{}`", p.display_label())));
            }
        }

        let cluster = if f.cluster.nodes.is_empty() {
            match f.cluster.preset.as_deref().unwrap_or("standard") {
                "standard" => NodeSpec::standard_presets(),
                other => {
                    errors.push(diag("cluster.preset", format!("unknown preset `{other}`")));
                    Vec::new()
                }
            }
        } else {
            if f.cluster.preset.is_some() {
                errors.push(diag("cluster", "give either `preset` or `nodes`, not both"));
            }
            f.cluster.nodes.clone()
        };
        if !cluster.is_empty() {
            if let Err(e) = build_cluster(&cluster) {
                errors.push(diag("cluster.nodes", e.to_string()));
            }
        }
        if let Some(name) = &f.cluster.initial_node {
            if !cluster.is_empty() && !cluster.iter().any(|n| &n.name == name) {
                errors.push(diag("cluster.initial_node", format!("`{name}` is not in the cluster")));
            }
        }

        let seed = seed.unwrap_or(f.workload.seed);
        let workload = match &f.workload.replay {
            Some(path) => {
                let full = self.resolve_path(path);
                match fs::read_to_string(&full) {
                    Ok(text) => {
                        hasher.update(text.as_bytes());
                        match tasks_from_csv(&text) {
                            Ok(tasks) => Some(WorkloadSource::Replay(Arc::new(tasks))),
                            Err(e) => {
                                errors.push(diag("workload.replay", e.to_string()));
                                None
                            }
                        }
                    }
                    Err(e) => {
                        errors.push(diag("workload.replay", format!("cannot read {}: {e}", full.display())));
                        None
                    }
                }
            }
            None => match f.workload.diurnal.validate() {
                Ok(()) => Some(WorkloadSource::Diurnal { params: f.workload.diurnal.clone(), seed }),
                Err(e) => {
                    errors.push(diag("workload.diurnal", e.to_string()));
                    None
                }
            },
        };

        let mut windows = Vec::new();
        for (i, t) in f.traces.iter().enumerate() {
            match self.load_trace(i, t, &mut hasher) {
                Ok(w) => {
                    if let Some(h) = f.horizon_s {
                        if h > w.span() {
                            errors.push(diag(
                                "horizon_s",
                                format!("{h}s exceeds the {}s window of trace `{}`", w.span(), t.label),
                            ));
                        }
                    }
                    windows.push(Arc::new(w));
                }
                Err(d) => errors.push(d),
            }
        }

        let mut scenarios = Vec::new();
        for (i, p) in f.policies.iter().enumerate() {
            for (t, window) in f.traces.iter().zip(&windows) {
                let horizon = f.horizon_s.unwrap_or(window.span());
                match p.to_policy(horizon) {
                    Ok(policy) => {
                        if let Some(w) = &workload {
                            let label = format!("{}-{}", p.display_label(), t.label);
                            scenarios.push((
                                p.display_label().to_string(),
                                ScenarioConfig {
                                    label,
                                    dataset: t.label.clone(),
                                    trace: Arc::clone(window),
                                    cluster: cluster.clone(),
                                    initial_node: f.cluster.initial_node.clone(),
                                    workload: w.clone(),
                                    policy,
                                    horizon,
                                },
                            ));
                        }
                    }
                    Err(m) => {
                        let d = diag(format!("policies[{i}]"), m);
                        if !errors.contains(&d) {
                            errors.push(d);
                        }
                    }
                }
            }
        }
        if f.traces.len() != windows.len() && errors.is_empty() {
            errors.push(diag("traces", "not all traces could be loaded"));
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        let inputs_hash = format!("{:x}", hasher.finalize());
        Ok(Resolved { scenarios, inputs_hash })
    }

    fn output_dir(&self, opts: &RunOptions) -> PathBuf {
        match (&opts.out_dir, &self.file.output_dir) {
            (Some(dir), _) => dir.clone(),
            (None, Some(dir)) => self.resolve_path(dir),
            (None, None) => self.resolve_path(Path::new("out")),
        }
    }

    /// Runs the selected scenarios and writes the reports.
    ///
    /// `manifest.txt` is written before the first scenario starts and
    /// rewritten when the run ends, whether it succeeded or not.
    pub fn run(&self, opts: &RunOptions) -> Result<RunOutcome, ExperimentError> {
        let resolved = self.resolve(opts.seed).map_err(ExperimentError::Invalid)?;
        let available: Vec<String> = resolved.scenarios.iter().map(|(_, c)| c.label.clone()).collect();
        for wanted in &opts.scenarios {
            if !available.contains(wanted) {
                return Err(ExperimentError::UnknownScenario { wanted: wanted.clone(), available });
            }
        }
        let selected: Vec<(String, ScenarioConfig)> = resolved
            .scenarios
            .into_iter()
            .filter(|(_, c)| opts.scenarios.is_empty() || opts.scenarios.contains(&c.label))
            .collect();
        let labels: Vec<String> = selected.iter().map(|(_, c)| c.label.clone()).collect();
        let out_dir = self.output_dir(opts);
        if opts.dry_run {
            return Ok(RunOutcome { out_dir, scenarios: labels, rows: Vec::new(), summary_csv: String::new() });
        }

        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ExperimentError::Io { path, source }
        };
        fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
        let seed = opts.seed.unwrap_or(self.file.workload.seed);
        let entries: Vec<ManifestEntry> =
            labels.iter().map(|l| ManifestEntry { label: l.clone(), status: "pending".into() }).collect();
        let manifest_path = out_dir.join("manifest.txt");
        let write_manifest = |status: &str, entries: &[ManifestEntry]| {
            let m = Manifest {
                experiment: &self.file.name,
                ebsim_version: env!("CARGO_PKG_VERSION"),
                config_sha256: &resolved.inputs_hash,
                seed,
                status: status.to_string(),
                scenario: entries.to_vec(),
            };
            let text = toml::to_string(&m).expect("manifest serializes");
            fs::write(&manifest_path, text).map_err(io_err(&manifest_path))
        };
        write_manifest("running", &entries)?;

        let write_steps = opts.write_steps.unwrap_or(self.file.write_steps);
        let done = Mutex::new(0usize);
        let total = selected.len();
        let results: Vec<Result<SummaryRow, String>> = selected
            .par_iter()
            .map(|(policy_label, config)| {
                let r = self.run_one(policy_label, config, &out_dir, write_steps);
                if opts.progress {
                    let mut n = done.lock().expect("progress counter");
                    *n += 1;
                    match &r {
                        Ok(_) => eprintln!("[{}/{}] {} done", *n, total, config.label),
                        Err(e) => eprintln!("[{}/{}] {} failed: {e}", *n, total, config.label),
                    }
                }
                r
            })
            .collect();

        let mut entries = entries;
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for (entry, r) in entries.iter_mut().zip(results) {
            match r {
                Ok(row) => {
                    entry.status = "ok".into();
                    rows.push(row);
                }
                Err(e) => {
                    entry.status = format!("failed: {e}");
                    failures.push(format!("  {}: {e}", entry.label));
                }
            }
        }
        let summary = summary_csv(&rows, &self.file.prices);
        let summary_path = out_dir.join("summary.csv");
        let written = fs::write(&summary_path, &summary).map_err(io_err(&summary_path));
        let status = if failures.is_empty() && written.is_ok() { "complete" } else { "failed" };
        write_manifest(status, &entries)?;
        written?;
        if !failures.is_empty() {
            return Err(ExperimentError::ScenarioFailures { failed: failures.len(), total, messages: failures });
        }
        Ok(RunOutcome { out_dir, scenarios: labels, rows, summary_csv: summary })
    }

    fn run_one(&self, policy_label: &str, config: &ScenarioConfig, out_dir: &Path, write_steps: bool) -> Result<SummaryRow, String> {
        let report = run_scenario(config).map_err(|e| e.to_string())?;
        let mut row = summarize(&report, &self.file.prices).map_err(|e| e.to_string())?;
        row.policy = policy_label.to_string();
        let write = |name: String, body: String| {
            let path = out_dir.join(name);
            fs::write(&path, body).map_err(|e| format!("cannot write {}: {e}", path.display()))
        };
        if write_steps {
            write(format!("steps_{}.csv", config.label), steps_csv(&report))?;
        }
        write(
            format!("buckets_{}.csv", config.label),
            buckets_csv(&report, self.file.bucket_s).map_err(|e| e.to_string())?,
        )?;
        if self.file.write_ledger {
            write(format!("ledger_{}.csv", config.label), ledger_csv(&report))?;
        }
        Ok(row)
    }
}
