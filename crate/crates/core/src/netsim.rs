//! Deterministic discrete-event simulation of a single multiplexed link
//! delivering one manifest, plus the delivery-order proxy metrics derived
//! from the resulting trace.
//!
//! Model summary: the root document is requested at one one-way delay; every
//! other resource is requested one round trip after its trigger completes
//! (completion notification to the client, new request to the server). The
//! server transmits in quanta at link bandwidth and the scheduler chooses
//! each quantum's stream. A quantum is independently lost with the configured
//! probability; a lost quantum is retransmitted after a timeout of twice the
//! one-way delay, before the next scheduling decision. No congestion control
//! or window dynamics are modeled.

use std::collections::{BTreeMap, BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eps::PriorityParams;
use crate::manifest::WebsiteManifest;
use crate::mapping::{MappingStrategy, ResourceType};
use crate::scheduler::{Scheduler, SchedulerMode};

/// One plain-English line describing the loss simplification; embedded in
/// report headers.
pub const LOSS_MODEL_NOTE: &str =
    "per-quantum loss; lost quantum retransmitted after 2x one-way delay before the next \
     scheduling decision; no congestion control";

/// Default quantum: one typical packet payload.
pub const DEFAULT_QUANTUM_BYTES: u64 = 1200;

/// The simulated network path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub bandwidth_bytes_per_sec: f64,
    pub one_way_delay_ms: f64,
    pub loss_rate: f64,
    pub seed: u64,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self {
            bandwidth_bytes_per_sec: 12_500_000.0, // 100 Mbit/s
            one_way_delay_ms: 10.0,
            loss_rate: 0.0005,
            seed: 0,
        }
    }
}

impl LinkModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !self.bandwidth_bytes_per_sec.is_finite() || self.bandwidth_bytes_per_sec <= 0.0 {
            return Err(SimError::InvalidBandwidth);
        }
        if !self.one_way_delay_ms.is_finite() || self.one_way_delay_ms < 0.0 {
            return Err(SimError::InvalidDelay);
        }
        if !self.loss_rate.is_finite() || !(0.0..1.0).contains(&self.loss_rate) {
            return Err(SimError::InvalidLossRate);
        }
        Ok(())
    }
}

/// How responses are prioritized for a run: the stock sequential server
/// (urgencies ignored) or one of the mapping strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryStrategy {
    Baseline,
    Mapped(MappingStrategy),
}

impl DeliveryStrategy {
    pub fn label(&self) -> &'static str {
        match self {
            DeliveryStrategy::Baseline => "baseline",
            DeliveryStrategy::Mapped(s) => s.label(),
        }
    }
}

/// Per-resource timing record, all on one simulated clock in milliseconds.
/// Request time is when the request departs the client; first byte and
/// completion are client-arrival times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceTiming {
    pub request_time_ms: f64,
    pub first_byte_time_ms: f64,
    pub completion_time_ms: f64,
}

/// One successful quantum delivery, recorded at client-arrival time.
#[derive(Debug, Clone, PartialEq)]
pub struct SendEvent {
    pub time_ms: f64,
    pub resource_id: String,
    pub bytes: u64,
}

/// Full record of one simulated page load.
#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryTrace {
    pub timings: BTreeMap<String, ResourceTiming>,
    pub events: Vec<SendEvent>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("bandwidth must be positive and finite")]
    InvalidBandwidth,
    #[error("one-way delay must be non-negative and finite")]
    InvalidDelay,
    #[error("loss rate must lie in [0, 1)")]
    InvalidLossRate,
    #[error("quantum must be positive")]
    InvalidQuantum,
    #[error("size-aware mapping threshold must be positive")]
    InvalidSamThreshold,
    #[error("baseline delivery runs with the sequential FIFO scheduler only")]
    BaselineRequiresFifo,
}

// request arrival at the server; min-heap by (time, seq)
struct PendingRequest {
    time: f64,
    seq: u64,
    resource: usize,
}

impl PartialEq for PendingRequest {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for PendingRequest {}
impl PartialOrd for PendingRequest {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for PendingRequest {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // reversed: BinaryHeap pops the earliest (time, seq)
        other
            .time
            .total_cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}

/// Run one page load over the link and return its trace.
pub fn simulate(
    manifest: &WebsiteManifest,
    strategy: DeliveryStrategy,
    mode: SchedulerMode,
    link: &LinkModel,
    quantum_bytes: u64,
) -> Result<DeliveryTrace, SimError> {
    link.validate()?;
    if quantum_bytes == 0 {
        return Err(SimError::InvalidQuantum);
    }
    match strategy {
        DeliveryStrategy::Baseline if mode != SchedulerMode::SequentialFifo => {
            return Err(SimError::BaselineRequiresFifo);
        }
        DeliveryStrategy::Mapped(MappingStrategy::Sam { threshold_bytes: 0 }) => {
            return Err(SimError::InvalidSamThreshold);
        }
        _ => {}
    }

    let resources = manifest.resources();
    let owd = link.one_way_delay_ms;
    let bandwidth = link.bandwidth_bytes_per_sec;

    let index: HashMap<&str, usize> = resources
        .iter()
        .enumerate()
        .map(|(i, r)| (r.resource_id.as_str(), i))
        .collect();
    let root_idx = index[manifest.root().resource_id.as_str()];

    // trigger -> dependents, in manifest order; no-trigger resources hang off
    // the root document
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); resources.len()];
    for (i, r) in resources.iter().enumerate() {
        if i == root_idx {
            continue;
        }
        let trigger = match &r.requested_after {
            Some(after) => index[after.as_str()],
            None => root_idx,
        };
        dependents[trigger].push(i);
    }

    let params_for = |i: usize| -> PriorityParams {
        match strategy {
            DeliveryStrategy::Baseline => PriorityParams::default(),
            DeliveryStrategy::Mapped(s) => {
                let r = &resources[i];
                PriorityParams::new(
                    s.assign(r.chromium_priority, r.rtype, r.size_bytes),
                    mode == SchedulerMode::UrgencyIncremental,
                )
            }
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(link.seed);
    let mut scheduler = Scheduler::new(mode);
    let mut heap = BinaryHeap::new();
    let mut next_seq = 0u64;

    let mut request_time = vec![f64::NAN; resources.len()];
    let mut first_byte = vec![f64::NAN; resources.len()];
    let mut completion = vec![f64::NAN; resources.len()];
    let mut delivered = vec![0u64; resources.len()];
    let mut stream_to_resource = BTreeMap::new();
    let mut events = Vec::new();

    request_time[root_idx] = 0.0;
    heap.push(PendingRequest {
        time: owd,
        seq: next_seq,
        resource: root_idx,
    });
    next_seq += 1;

    let mut link_free = 0.0f64;
    loop {
        let decision_time = if scheduler.is_idle() {
            match heap.peek() {
                None => break,
                Some(ev) => link_free.max(ev.time),
            }
        } else {
            link_free
        };

        // admit every request that has reached the server by now
        while heap.peek().is_some_and(|ev| ev.time <= decision_time) {
            let ev = heap.pop().expect("peeked");
            let r = &resources[ev.resource];
            let id = scheduler
                .enqueue(r.size_bytes, params_for(ev.resource))
                .expect("manifest sizes are positive");
            stream_to_resource.insert(id, ev.resource);
        }

        let grant = scheduler.select_next(quantum_bytes).expect("a request was admitted");
        let res_idx = stream_to_resource[&grant.id];
        let tx_ms = grant.granted_bytes as f64 * 1000.0 / bandwidth;

        // A granted quantum is never clawed back: it is retransmitted after
        // the timeout until it gets through, then the next decision happens.
        let mut attempt_start = decision_time;
        let arrival = loop {
            let send_end = attempt_start + tx_ms;
            let lost = link.loss_rate > 0.0 && rng.random::<f64>() < link.loss_rate;
            if lost {
                attempt_start = send_end + 2.0 * owd;
            } else {
                link_free = send_end;
                break send_end + owd;
            }
        };

        events.push(SendEvent {
            time_ms: arrival,
            resource_id: resources[res_idx].resource_id.clone(),
            bytes: grant.granted_bytes,
        });
        delivered[res_idx] += grant.granted_bytes;
        if first_byte[res_idx].is_nan() {
            first_byte[res_idx] = arrival;
        }

        let completed = scheduler
            .on_sent(grant.id, grant.granted_bytes)
            .expect("grant is valid");
        if completed {
            stream_to_resource.remove(&grant.id);
            completion[res_idx] = arrival;
            for &dep in &dependents[res_idx] {
                request_time[dep] = arrival;
                heap.push(PendingRequest {
                    time: arrival + owd,
                    seq: next_seq,
                    resource: dep,
                });
                next_seq += 1;
            }
        }
    }

    let mut timings = BTreeMap::new();
    for (i, r) in resources.iter().enumerate() {
        debug_assert_eq!(delivered[i], r.size_bytes);
        timings.insert(
            r.resource_id.clone(),
            ResourceTiming {
                request_time_ms: request_time[i],
                first_byte_time_ms: first_byte[i],
                completion_time_ms: completion[i],
            },
        );
    }
    Ok(DeliveryTrace { timings, events })
}

/// Delivery-order proxies for the usual page metrics. These are reasoned
/// stand-ins computed from completion times alone; they are not browser
/// measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyMetrics {
    pub fcp_proxy_ms: f64,
    pub lcp_proxy_ms: f64,
    pub tti_proxy_ms: f64,
    pub si_proxy_ms: f64,
    pub page_complete_ms: f64,
}

/// Metric column names, in the order used by every table.
pub const METRIC_NAMES: [&str; 5] = [
    "fcp_proxy_ms",
    "lcp_proxy_ms",
    "tti_proxy_ms",
    "si_proxy_ms",
    "page_complete_ms",
];

impl ProxyMetrics {
    pub fn values(&self) -> [f64; 5] {
        [
            self.fcp_proxy_ms,
            self.lcp_proxy_ms,
            self.tti_proxy_ms,
            self.si_proxy_ms,
            self.page_complete_ms,
        ]
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("trace is missing resource {0:?}")]
    MissingResource(String),
}

/// Derive the proxy metrics from a trace.
///
/// - fcp: last completion among the root document and very-high stylesheets
///   (the render-blocking set)
/// - lcp: completion of the largest image, or fcp when there are none
/// - tti: last completion among all scripts, at least fcp
/// - si: byte-weighted mean completion over all resources
/// - page_complete: last completion overall
pub fn compute_metrics(
    trace: &DeliveryTrace,
    manifest: &WebsiteManifest,
) -> Result<ProxyMetrics, MetricsError> {
    use crate::mapping::ChromiumPriority;

    let completion_of = |id: &str| -> Result<f64, MetricsError> {
        trace
            .timings
            .get(id)
            .map(|t| t.completion_time_ms)
            .ok_or_else(|| MetricsError::MissingResource(id.to_string()))
    };

    let root = manifest.root();
    let mut fcp = completion_of(&root.resource_id)?;
    let mut largest_image: Option<(u64, f64)> = None;
    let mut tti_scripts = f64::NEG_INFINITY;
    let mut page_complete = f64::NEG_INFINITY;
    let mut weighted_sum = 0.0;
    let mut total_bytes = 0u64;

    for r in manifest.resources() {
        let done = completion_of(&r.resource_id)?;
        page_complete = page_complete.max(done);
        weighted_sum += r.size_bytes as f64 * done;
        total_bytes += r.size_bytes;
        match r.rtype {
            ResourceType::StyleSheet if r.chromium_priority == ChromiumPriority::VeryHigh => {
                fcp = fcp.max(done);
            }
            ResourceType::Image => {
                let bigger = largest_image.is_none_or(|(size, _)| r.size_bytes > size);
                if bigger {
                    largest_image = Some((r.size_bytes, done));
                }
            }
            ResourceType::Script => tti_scripts = tti_scripts.max(done),
            _ => {}
        }
    }

    Ok(ProxyMetrics {
        fcp_proxy_ms: fcp,
        lcp_proxy_ms: largest_image.map_or(fcp, |(_, done)| done),
        tti_proxy_ms: tti_scripts.max(fcp),
        si_proxy_ms: weighted_sum / total_bytes as f64,
        page_complete_ms: page_complete,
    })
}

/// Default no-change band for the sign matrix: 0.5 %.
pub const DEFAULT_SIGN_EPSILON: f64 = 0.005;

/// Direction of a metric change relative to the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChangeSign {
    Improvement,
    Regression,
    Unchanged,
}

impl ChangeSign {
    pub fn symbol(self) -> &'static str {
        match self {
            ChangeSign::Improvement => "+",
            ChangeSign::Regression => "-",
            ChangeSign::Unchanged => "·",
        }
    }
}

/// Relative change of each metric for one run against the baseline.
/// `relative_change` is `(baseline - value) / baseline`: positive means the
/// candidate finished sooner.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricComparison {
    pub label: String,
    pub baseline: [f64; 5],
    pub candidate: [f64; 5],
    pub relative_change: [f64; 5],
    pub signs: [ChangeSign; 5],
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CompareError {
    #[error("need at least two runs to compare")]
    TooFewRuns,
    #[error("baseline label {0:?} not found among runs")]
    UnknownBaseline(String),
    #[error("baseline label {0:?} matches more than one run")]
    AmbiguousBaseline(String),
}

/// Compare labeled runs against the run labeled `baseline_label`. Changes
/// with magnitude at most `epsilon` count as unchanged.
pub fn compare(
    runs: &[(String, ProxyMetrics)],
    baseline_label: &str,
    epsilon: f64,
) -> Result<Vec<MetricComparison>, CompareError> {
    if runs.len() < 2 {
        return Err(CompareError::TooFewRuns);
    }
    let mut base = None;
    for (label, metrics) in runs {
        if label == baseline_label {
            if base.is_some() {
                return Err(CompareError::AmbiguousBaseline(baseline_label.to_string()));
            }
            base = Some(metrics.values());
        }
    }
    let base = base.ok_or_else(|| CompareError::UnknownBaseline(baseline_label.to_string()))?;

    let mut rows = Vec::new();
    for (label, metrics) in runs {
        if label == baseline_label {
            continue;
        }
        let candidate = metrics.values();
        let mut relative_change = [0.0; 5];
        let mut signs = [ChangeSign::Unchanged; 5];
        for k in 0..5 {
            let rel = (base[k] - candidate[k]) / base[k];
            relative_change[k] = rel;
            signs[k] = if rel > epsilon {
                ChangeSign::Improvement
            } else if rel < -epsilon {
                ChangeSign::Regression
            } else {
                ChangeSign::Unchanged
            };
        }
        rows.push(MetricComparison {
            label: label.clone(),
            baseline: base,
            candidate,
            relative_change,
            signs,
        });
    }
    Ok(rows)
}
