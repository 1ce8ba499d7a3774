//! File-writing drivers behind the command-line interface: urgency listings,
//! simulation sweeps, run comparisons, and manifest summaries.
//!
//! Every output file embeds the configuration that produced it, so any result
//! is reproducible from its own header.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{load_manifest, priority_summary_csv, type_summary_csv, ManifestError, WebsiteManifest};
use crate::mapping::MappingStrategy;
use crate::netsim::{
    compare, compute_metrics, simulate, CompareError, DeliveryStrategy, LinkModel, MetricsError,
    ProxyMetrics, SimError, LOSS_MODEL_NOTE,
};
use crate::scheduler::SchedulerMode;

/// Version stamped into every report and metrics file.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Short metric column names used by tables, aligned with
/// [`crate::netsim::METRIC_NAMES`].
pub const METRIC_SHORT_NAMES: [&str; 5] = ["fcp", "lcp", "tti", "si", "page"];

/// Strategy selector as given on the command line, before any size threshold
/// is resolved against a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyChoice {
    Baseline,
    Dm,
    Rtam,
    Sam,
}

impl StrategyChoice {
    pub const ALL: [StrategyChoice; 4] = [
        StrategyChoice::Baseline,
        StrategyChoice::Dm,
        StrategyChoice::Rtam,
        StrategyChoice::Sam,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StrategyChoice::Baseline => "baseline",
            StrategyChoice::Dm => "dm",
            StrategyChoice::Rtam => "rtam",
            StrategyChoice::Sam => "sam",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.label() == label)
    }
}

/// One sweep: the cross product of strategies and modes over one manifest,
/// repeated with consecutive seeds.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub manifest_path: PathBuf,
    pub strategies: Vec<StrategyChoice>,
    pub modes: Vec<SchedulerMode>,
    pub link: LinkModel,
    pub quantum_bytes: u64,
    pub repetitions: u32,
    pub sam_threshold_override: Option<u64>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Compare(#[from] CompareError),
    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("metrics file {path}: {message}")]
    BadMetricsFile { path: PathBuf, message: String },
    #[error("{0}")]
    InvalidConfig(String),
}

impl ReportError {
    /// CLI exit code: 2 for input validation failures, 1 for runtime
    /// failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            ReportError::Io { .. } | ReportError::Metrics(_) => 1,
            _ => 2,
        }
    }
}

/// Resolve a strategy choice against a manifest. For the size-aware strategy
/// the threshold is the override when given, otherwise the manifest's pooled
/// script/image mean (1 when the manifest has neither, which leaves the
/// strategy equal to the type-aware one).
pub fn resolve_strategy(
    choice: StrategyChoice,
    manifest: &WebsiteManifest,
    sam_threshold_override: Option<u64>,
) -> Result<DeliveryStrategy, ReportError> {
    Ok(match choice {
        StrategyChoice::Baseline => DeliveryStrategy::Baseline,
        StrategyChoice::Dm => DeliveryStrategy::Mapped(MappingStrategy::Dm),
        StrategyChoice::Rtam => DeliveryStrategy::Mapped(MappingStrategy::Rtam),
        StrategyChoice::Sam => {
            let threshold_bytes = match sam_threshold_override {
                Some(0) => {
                    return Err(ReportError::InvalidConfig(
                        "size threshold must be positive".to_string(),
                    ))
                }
                Some(t) => t,
                None => manifest.default_sam_threshold().unwrap_or(1),
            };
            DeliveryStrategy::Mapped(MappingStrategy::Sam { threshold_bytes })
        }
    })
}

fn sam_threshold_of(strategy: DeliveryStrategy) -> Option<u64> {
    match strategy {
        DeliveryStrategy::Mapped(MappingStrategy::Sam { threshold_bytes }) => Some(threshold_bytes),
        _ => None,
    }
}

/// Quote a CSV field when it contains a separator, quote, or newline.
fn csv_field(s: &str) -> Cow<'_, str> {
    if s.contains([',', '"', '\n', '\r']) {
        Cow::Owned(format!("\"{}\"", s.replace('"', "\"\"")))
    } else {
        Cow::Borrowed(s)
    }
}

fn write_header_line(out: &mut String, key: &str, value: impl std::fmt::Display) {
    out.push_str(&format!("# {key}={value}\n"));
}

fn link_header(out: &mut String, link: &LinkModel, quantum_bytes: u64) {
    write_header_line(out, "bandwidth_bytes_per_sec", link.bandwidth_bytes_per_sec);
    write_header_line(out, "one_way_delay_ms", link.one_way_delay_ms);
    write_header_line(out, "loss_rate", link.loss_rate);
    write_header_line(out, "seed", link.seed);
    write_header_line(out, "quantum_bytes", quantum_bytes);
}

fn write_file(path: &Path, content: &str, created: &mut Vec<PathBuf>) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| ReportError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, content).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    created.push(path.to_path_buf());
    Ok(())
}

/// Per-resource urgency assignment listing (`map` subcommand). Returns the
/// CSV content; also writes it when `out` is given.
pub fn cmd_map(
    manifest_path: &Path,
    choice: StrategyChoice,
    sam_threshold_override: Option<u64>,
    out: Option<&Path>,
) -> Result<String, ReportError> {
    if choice == StrategyChoice::Baseline {
        return Err(ReportError::InvalidConfig(
            "the baseline strategy assigns no urgencies; pick dm, rtam, or sam".to_string(),
        ));
    }
    let manifest = load_manifest(manifest_path)?;
    let strategy = resolve_strategy(choice, &manifest, sam_threshold_override)?;
    let mapping = match strategy {
        DeliveryStrategy::Mapped(m) => m,
        DeliveryStrategy::Baseline => unreachable!("rejected above"),
    };

    let mut csv = String::new();
    write_header_line(&mut csv, "schema_version", REPORT_SCHEMA_VERSION);
    write_header_line(&mut csv, "site", manifest.site_name());
    write_header_line(&mut csv, "manifest", manifest_path.display());
    write_header_line(&mut csv, "strategy", mapping.label());
    if let Some(t) = sam_threshold_of(strategy) {
        write_header_line(&mut csv, "sam_threshold_bytes", t);
    }
    csv.push_str("resource_id,type,chromium_priority,urgency\n");
    for r in manifest.resources() {
        let urgency = mapping.assign(r.chromium_priority, r.rtype, r.size_bytes);
        csv.push_str(&format!(
            "{},{},{},{}\n",
            csv_field(&r.resource_id),
            r.rtype,
            r.chromium_priority,
            urgency
        ));
    }

    if let Some(path) = out {
        write_file(path, &csv, &mut Vec::new())?;
    }
    Ok(csv)
}

/// Both manifest summaries (`summarize` subcommand): returns the aligned text
/// table and writes `priority_summary.csv` / `type_summary.csv` when an
/// output directory is given.
pub fn cmd_summarize(
    manifest_path: &Path,
    out_dir: Option<&Path>,
) -> Result<String, ReportError> {
    let manifest = load_manifest(manifest_path)?;

    let mut header = String::new();
    write_header_line(&mut header, "schema_version", REPORT_SCHEMA_VERSION);
    write_header_line(&mut header, "site", manifest.site_name());
    write_header_line(&mut header, "manifest", manifest_path.display());

    if let Some(dir) = out_dir {
        let mut created = Vec::new();
        write_file(
            &dir.join("priority_summary.csv"),
            &format!("{header}{}", priority_summary_csv(&manifest)),
            &mut created,
        )?;
        write_file(
            &dir.join("type_summary.csv"),
            &format!("{header}{}", type_summary_csv(&manifest)),
            &mut created,
        )?;
    }

    let mut text = format!(
        "site: {}  resources: {}  total_bytes: {}\n\n",
        manifest.site_name(),
        manifest.resources().len(),
        manifest.total_bytes()
    );
    let priority_rows: Vec<[String; 4]> = manifest
        .summarize_by_priority()
        .into_iter()
        .map(|((p, t), c)| {
            [p.to_string(), t.to_string(), c.count.to_string(), c.total_bytes.to_string()]
        })
        .collect();
    text.push_str(&aligned_table(
        &["priority", "type", "count", "total_bytes"],
        &[false, false, true, true],
        &priority_rows,
    ));
    text.push('\n');
    let type_rows: Vec<[String; 3]> = manifest
        .summarize_by_type()
        .into_iter()
        .map(|(t, c)| [t.to_string(), c.count.to_string(), c.total_bytes.to_string()])
        .collect();
    text.push_str(&aligned_table(
        &["type", "count", "total_bytes"],
        &[false, true, true],
        &type_rows,
    ));
    Ok(text)
}

fn aligned_table<const N: usize>(
    headers: &[&str; N],
    right_align: &[bool; N],
    rows: &[[String; N]],
) -> String {
    let mut widths: [usize; N] = [0; N];
    for (w, h) in widths.iter_mut().zip(headers) {
        *w = h.chars().count();
    }
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let render = |out: &mut String, cells: [&str; N]| {
        for (k, cell) in cells.iter().enumerate() {
            if k > 0 {
                out.push_str("  ");
            }
            if right_align[k] {
                out.push_str(&format!("{cell:>w$}", w = widths[k]));
            } else if k == N - 1 {
                out.push_str(cell);
            } else {
                out.push_str(&format!("{cell:<w$}", w = widths[k]));
            }
        }
        out.push('\n');
    };
    render(&mut out, *headers);
    for row in rows {
        let cells: [&str; N] = std::array::from_fn(|k| row[k].as_str());
        render(&mut out, cells);
    }
    out
}

/// Everything recorded for one simulated run; the content of one metrics
/// file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub schema_version: u32,
    pub site: String,
    pub label: String,
    pub strategy: String,
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sam_threshold_bytes: Option<u64>,
    pub link: LinkModel,
    pub quantum_bytes: u64,
    pub repetition: u32,
    pub loss_model: String,
    pub metrics: ProxyMetrics,
}

/// Index of everything a sweep wrote, stored as `index.json` in the output
/// directory. Paths are relative to that directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunIndex {
    pub schema_version: u32,
    pub site: String,
    pub manifest: String,
    pub link: LinkModel,
    pub quantum_bytes: u64,
    pub repetitions: u32,
    pub loss_model: String,
    pub median_metrics: String,
    pub runs: Vec<RunIndexEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunIndexEntry {
    pub label: String,
    pub strategy: String,
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sam_threshold_bytes: Option<u64>,
    pub repetition: u32,
    pub seed: u64,
    pub trace: String,
    pub metrics: String,
}

/// Outcome of a sweep: where the index landed plus the median table for
/// display.
#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub index_path: PathBuf,
    pub medians_csv: String,
    pub run_count: usize,
}

/// Run the full sweep described by `config` (`simulate` subcommand). One
/// trace and one metrics file are written per (strategy, mode, repetition);
/// partial outputs are removed on failure.
pub fn cmd_simulate(config: &ExperimentConfig) -> Result<SimulateOutcome, ReportError> {
    let mut created = Vec::new();
    match run_sweep(config, &mut created) {
        Ok(outcome) => Ok(outcome),
        Err(err) => {
            for path in created.iter().rev() {
                let _ = std::fs::remove_file(path);
            }
            for dir in ["traces", "metrics"] {
                let _ = std::fs::remove_dir(config.output_dir.join(dir));
            }
            let _ = std::fs::remove_dir(&config.output_dir);
            Err(err)
        }
    }
}

fn run_sweep(
    config: &ExperimentConfig,
    created: &mut Vec<PathBuf>,
) -> Result<SimulateOutcome, ReportError> {
    if config.repetitions == 0 {
        return Err(ReportError::InvalidConfig("repetitions must be at least 1".to_string()));
    }
    if config.strategies.is_empty() || config.modes.is_empty() {
        return Err(ReportError::InvalidConfig(
            "at least one strategy and one mode are required".to_string(),
        ));
    }
    config.link.validate()?;
    if config.quantum_bytes == 0 {
        return Err(ReportError::Sim(SimError::InvalidQuantum));
    }

    let manifest = load_manifest(&config.manifest_path)?;

    // baseline emulates the stock sequential server: it only pairs with fifo
    let mut pairs = Vec::new();
    for &choice in &config.strategies {
        let strategy = resolve_strategy(choice, &manifest, config.sam_threshold_override)?;
        let modes: Vec<SchedulerMode> = config
            .modes
            .iter()
            .copied()
            .filter(|&m| {
                !(matches!(strategy, DeliveryStrategy::Baseline)
                    && m != SchedulerMode::SequentialFifo)
            })
            .collect();
        if modes.is_empty() {
            return Err(ReportError::InvalidConfig(format!(
                "strategy {} has no valid scheduler mode in this sweep \
                 (baseline runs with --mode fifo)",
                choice.label()
            )));
        }
        for mode in modes {
            pairs.push((strategy, mode));
        }
    }

    let mut index_runs = Vec::new();
    let mut medians_csv = String::new();
    write_header_line(&mut medians_csv, "schema_version", REPORT_SCHEMA_VERSION);
    write_header_line(&mut medians_csv, "site", manifest.site_name());
    write_header_line(&mut medians_csv, "manifest", config.manifest_path.display());
    link_header(&mut medians_csv, &config.link, config.quantum_bytes);
    write_header_line(&mut medians_csv, "repetitions", config.repetitions);
    write_header_line(&mut medians_csv, "aggregation", "median");
    write_header_line(&mut medians_csv, "loss_model", LOSS_MODEL_NOTE);
    medians_csv.push_str("strategy,mode,fcp_proxy_ms,lcp_proxy_ms,tti_proxy_ms,si_proxy_ms,page_complete_ms\n");

    for (strategy, mode) in pairs {
        let label = format!("{}_{}", strategy.label(), mode.label());
        let mut per_metric: [Vec<f64>; 5] = Default::default();

        for rep in 0..config.repetitions {
            let link = LinkModel {
                seed: config.link.seed + u64::from(rep),
                ..config.link
            };
            let trace = simulate(&manifest, strategy, mode, &link, config.quantum_bytes)?;
            let metrics = compute_metrics(&trace, &manifest)?;
            for (bucket, value) in per_metric.iter_mut().zip(metrics.values()) {
                bucket.push(value);
            }

            let mut trace_csv = String::new();
            write_header_line(&mut trace_csv, "schema_version", REPORT_SCHEMA_VERSION);
            write_header_line(&mut trace_csv, "site", manifest.site_name());
            write_header_line(&mut trace_csv, "manifest", config.manifest_path.display());
            write_header_line(&mut trace_csv, "strategy", strategy.label());
            write_header_line(&mut trace_csv, "mode", mode.label());
            if let Some(t) = sam_threshold_of(strategy) {
                write_header_line(&mut trace_csv, "sam_threshold_bytes", t);
            }
            link_header(&mut trace_csv, &link, config.quantum_bytes);
            write_header_line(&mut trace_csv, "repetition", rep);
            write_header_line(&mut trace_csv, "loss_model", LOSS_MODEL_NOTE);
            trace_csv.push_str("resource_id,request_ms,first_byte_ms,completion_ms\n");
            for (id, t) in &trace.timings {
                trace_csv.push_str(&format!(
                    "{},{},{},{}\n",
                    csv_field(id),
                    t.request_time_ms,
                    t.first_byte_time_ms,
                    t.completion_time_ms
                ));
            }
            let trace_rel = format!("traces/{label}_rep{rep}.csv");
            write_file(&config.output_dir.join(&trace_rel), &trace_csv, created)?;

            let record = MetricsRecord {
                schema_version: REPORT_SCHEMA_VERSION,
                site: manifest.site_name().to_string(),
                label: label.clone(),
                strategy: strategy.label().to_string(),
                mode: mode.label().to_string(),
                sam_threshold_bytes: sam_threshold_of(strategy),
                link,
                quantum_bytes: config.quantum_bytes,
                repetition: rep,
                loss_model: LOSS_MODEL_NOTE.to_string(),
                metrics,
            };
            let metrics_rel = format!("metrics/{label}_rep{rep}.json");
            let mut json = serde_json::to_string_pretty(&record).expect("record serializes");
            json.push('\n');
            write_file(&config.output_dir.join(&metrics_rel), &json, created)?;

            index_runs.push(RunIndexEntry {
                label: label.clone(),
                strategy: strategy.label().to_string(),
                mode: mode.label().to_string(),
                sam_threshold_bytes: sam_threshold_of(strategy),
                repetition: rep,
                seed: link.seed,
                trace: trace_rel,
                metrics: metrics_rel,
            });
        }

        medians_csv.push_str(&format!("{},{}", strategy.label(), mode.label()));
        for bucket in &mut per_metric {
            medians_csv.push_str(&format!(",{}", median(bucket)));
        }
        medians_csv.push('\n');
    }

    write_file(&config.output_dir.join("median_metrics.csv"), &medians_csv, created)?;

    let index = RunIndex {
        schema_version: REPORT_SCHEMA_VERSION,
        site: manifest.site_name().to_string(),
        manifest: config.manifest_path.display().to_string(),
        link: config.link,
        quantum_bytes: config.quantum_bytes,
        repetitions: config.repetitions,
        loss_model: LOSS_MODEL_NOTE.to_string(),
        median_metrics: "median_metrics.csv".to_string(),
        runs: index_runs,
    };
    let index_path = config.output_dir.join("index.json");
    let mut json = serde_json::to_string_pretty(&index).expect("index serializes");
    json.push('\n');
    write_file(&index_path, &json, created)?;

    let run_count = index.runs.len();
    Ok(SimulateOutcome { index_path, medians_csv, run_count })
}

/// Median of a sample, averaging the two middles for even sizes. Reorders the
/// slice.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    let n = values.len();
    let (left, pivot, _) = values.select_nth_unstable_by(n / 2, f64::total_cmp);
    let hi = *pivot;
    if n % 2 == 1 {
        hi
    } else {
        let lo = left.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo + hi) / 2.0
    }
}

/// Outcome of a comparison: the sign matrix for display and the exact
/// relative changes as CSV.
#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub matrix_text: String,
    pub relative_csv: String,
}

/// Compare metrics files against the run labeled `baseline_label`, grouped
/// by site (`compare` subcommand). Writes `sign_matrix.txt` and
/// `relative_changes.csv` when an output directory is given.
pub fn cmd_compare(
    metrics_files: &[PathBuf],
    baseline_label: &str,
    epsilon: f64,
    out_dir: Option<&Path>,
) -> Result<CompareOutcome, ReportError> {
    if metrics_files.len() < 2 {
        return Err(ReportError::Compare(CompareError::TooFewRuns));
    }
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(ReportError::InvalidConfig("epsilon must be non-negative".to_string()));
    }

    let mut by_site: BTreeMap<String, Vec<(String, ProxyMetrics)>> = BTreeMap::new();
    for path in metrics_files {
        let bytes = std::fs::read(path).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        let record: MetricsRecord =
            serde_json::from_slice(&bytes).map_err(|e| ReportError::BadMetricsFile {
                path: path.clone(),
                message: e.to_string(),
            })?;
        if record.schema_version != REPORT_SCHEMA_VERSION {
            return Err(ReportError::BadMetricsFile {
                path: path.clone(),
                message: format!("unsupported schema_version {}", record.schema_version),
            });
        }
        let site_runs = by_site.entry(record.site.clone()).or_default();
        if site_runs.iter().any(|(label, _)| *label == record.label) {
            return Err(ReportError::BadMetricsFile {
                path: path.clone(),
                message: format!(
                    "duplicate run label {:?} for site {:?}; pass one metrics file per label",
                    record.label, record.site
                ),
            });
        }
        site_runs.push((record.label, record.metrics));
    }

    let mut matrix_rows: Vec<[String; 6]> = Vec::new();
    let mut relative_csv = String::new();
    write_header_line(&mut relative_csv, "schema_version", REPORT_SCHEMA_VERSION);
    write_header_line(&mut relative_csv, "baseline", baseline_label);
    write_header_line(&mut relative_csv, "epsilon", epsilon);
    relative_csv.push_str(
        "site,label,metric,baseline_ms,candidate_ms,relative_change,relative_change_pct,sign\n",
    );

    for (site, runs) in &by_site {
        let rows = compare(runs, baseline_label, epsilon)?;
        for row in rows {
            let mut matrix_row: [String; 6] = Default::default();
            matrix_row[0] = format!("{site}/{}", row.label);
            for k in 0..5 {
                matrix_row[k + 1] = row.signs[k].symbol().to_string();
                relative_csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    csv_field(site),
                    csv_field(&row.label),
                    crate::netsim::METRIC_NAMES[k],
                    row.baseline[k],
                    row.candidate[k],
                    row.relative_change[k],
                    row.relative_change[k] * 100.0,
                    row.signs[k].symbol()
                ));
            }
            matrix_rows.push(matrix_row);
        }
    }

    let mut matrix_text = format!(
        "sign matrix vs baseline {baseline_label:?} (+ improvement, - regression, \
         · change within {:.2}%)\n\n",
        epsilon * 100.0
    );
    matrix_text.push_str(&aligned_table(
        &["run", "fcp", "lcp", "tti", "si", "page"],
        &[false, true, true, true, true, true],
        &matrix_rows,
    ));

    if let Some(dir) = out_dir {
        let mut created = Vec::new();
        write_file(&dir.join("sign_matrix.txt"), &matrix_text, &mut created)?;
        write_file(&dir.join("relative_changes.csv"), &relative_csv, &mut created)?;
    }
    Ok(CompareOutcome { matrix_text, relative_csv })
}
