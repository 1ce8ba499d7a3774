//! Python bindings: priority-field parsing, the mapping strategies, the
//! stream scheduler, manifests, and the link simulator, driven in-process.

use std::collections::{BTreeMap, HashMap};

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use epsim_core::eps;
use epsim_core::manifest;
use epsim_core::mapping;
use epsim_core::netsim;
use epsim_core::scheduler;

fn value_error(err: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn urgency_of(value: u8) -> PyResult<eps::UrgencyLevel> {
    eps::UrgencyLevel::new(value).map_err(value_error)
}

fn priority_of(label: &str) -> PyResult<mapping::ChromiumPriority> {
    mapping::ChromiumPriority::from_label(label).ok_or_else(|| {
        value_error(format!(
            "unknown priority {label:?} (expected very_high, high, medium, low, or very_low)"
        ))
    })
}

fn rtype_of(label: &str) -> PyResult<mapping::ResourceType> {
    mapping::ResourceType::from_label(label).ok_or_else(|| {
        value_error(format!(
            "unknown resource type {label:?} (expected document, style_sheet, script, image, \
             or other)"
        ))
    })
}

fn mode_of(label: &str) -> PyResult<scheduler::SchedulerMode> {
    scheduler::SchedulerMode::from_label(label).ok_or_else(|| {
        value_error(format!(
            "unknown mode {label:?} (expected fifo, urgency, or urgency-incremental)"
        ))
    })
}

/// Parse a Priority field value into `(urgency, incremental)`.
#[pyfunction]
fn parse_priority_field(text: &str) -> PyResult<(u8, bool)> {
    let params = eps::parse_priority_field(text.as_bytes()).map_err(value_error)?;
    Ok((params.urgency.value(), params.incremental))
}

/// Canonical wire form of a priority signal, for example `u=3, i`.
#[pyfunction]
#[pyo3(signature = (urgency, incremental=false))]
fn serialize_priority_field(urgency: u8, incremental: bool) -> PyResult<String> {
    let params = eps::PriorityParams::new(urgency_of(urgency)?, incremental);
    Ok(eps::serialize_priority_field(params))
}

#[pyfunction]
fn dm_map(priority: &str) -> PyResult<u8> {
    Ok(mapping::dm_map(priority_of(priority)?).value())
}

#[pyfunction]
fn rtam_map(priority: &str, rtype: &str) -> PyResult<u8> {
    Ok(mapping::rtam_map(priority_of(priority)?, rtype_of(rtype)?).value())
}

#[pyfunction]
fn sam_map(priority: &str, rtype: &str, size_bytes: u64, threshold_bytes: u64) -> PyResult<u8> {
    if threshold_bytes == 0 {
        return Err(value_error("threshold_bytes must be positive"));
    }
    Ok(mapping::sam_map(priority_of(priority)?, rtype_of(rtype)?, size_bytes, threshold_bytes)
        .value())
}

#[pyfunction]
fn classify_resource(mime_type: &str, url_path: &str) -> String {
    mapping::classify_resource(mime_type, url_path).label().to_string()
}

/// Quantum-by-quantum stream scheduler.
#[pyclass]
struct Scheduler {
    inner: scheduler::Scheduler,
    ids: HashMap<u64, scheduler::StreamId>,
}

#[pymethods]
impl Scheduler {
    /// Modes: "fifo", "urgency", or "urgency-incremental".
    #[new]
    fn new(mode: &str) -> PyResult<Self> {
        Ok(Self { inner: scheduler::Scheduler::new(mode_of(mode)?), ids: HashMap::new() })
    }

    #[pyo3(signature = (size_bytes, urgency=3, incremental=false))]
    fn enqueue(&mut self, size_bytes: u64, urgency: u8, incremental: bool) -> PyResult<u64> {
        let params = eps::PriorityParams::new(urgency_of(urgency)?, incremental);
        let id = self.inner.enqueue(size_bytes, params).map_err(value_error)?;
        self.ids.insert(id.value(), id);
        Ok(id.value())
    }

    /// Returns `(stream_id, granted_bytes)`, or None when idle.
    fn select_next(&mut self, quantum_bytes: u64) -> PyResult<Option<(u64, u64)>> {
        if quantum_bytes == 0 {
            return Err(value_error("quantum must be positive"));
        }
        Ok(self.inner.select_next(quantum_bytes).map(|g| (g.id.value(), g.granted_bytes)))
    }

    /// Report a transmission; returns True when the stream completed.
    fn on_sent(&mut self, stream_id: u64, bytes: u64) -> PyResult<bool> {
        let id = self.stream(stream_id)?;
        let completed = self.inner.on_sent(id, bytes).map_err(value_error)?;
        if completed {
            self.ids.remove(&stream_id);
        }
        Ok(completed)
    }

    #[pyo3(signature = (stream_id, urgency, incremental=false))]
    fn reprioritize(&mut self, stream_id: u64, urgency: u8, incremental: bool) -> PyResult<()> {
        let id = self.stream(stream_id)?;
        let params = eps::PriorityParams::new(urgency_of(urgency)?, incremental);
        self.inner.reprioritize(id, params).map_err(value_error)
    }

    fn active_count(&self) -> usize {
        self.inner.active_len()
    }

    fn __repr__(&self) -> String {
        format!("Scheduler(mode={:?}, active={})", self.inner.mode().label(), self.inner.active_len())
    }
}

impl Scheduler {
    fn stream(&self, stream_id: u64) -> PyResult<scheduler::StreamId> {
        self.ids
            .get(&stream_id)
            .copied()
            .ok_or_else(|| value_error(format!("unknown or completed stream {stream_id}")))
    }
}

/// A validated website resource manifest.
#[pyclass]
struct Manifest {
    inner: manifest::WebsiteManifest,
}

#[pymethods]
impl Manifest {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: manifest::load_manifest(path).map_err(value_error)? })
    }

    #[getter]
    fn site_name(&self) -> String {
        self.inner.site_name().to_string()
    }

    fn total_bytes(&self) -> u64 {
        self.inner.total_bytes()
    }

    fn resource_ids(&self) -> Vec<String> {
        self.inner.resources().iter().map(|r| r.resource_id.clone()).collect()
    }

    fn default_sam_threshold(&self) -> Option<u64> {
        self.inner.default_sam_threshold()
    }

    /// Rows of `(type, count, total_bytes)`.
    fn summarize_by_type(&self) -> Vec<(String, u64, u64)> {
        self.inner
            .summarize_by_type()
            .into_iter()
            .map(|(t, c)| (t.to_string(), c.count, c.total_bytes))
            .collect()
    }

    /// Rows of `(priority, type, count, total_bytes)`.
    fn summarize_by_priority(&self) -> Vec<(String, String, u64, u64)> {
        self.inner
            .summarize_by_priority()
            .into_iter()
            .map(|((p, t), c)| (p.to_string(), t.to_string(), c.count, c.total_bytes))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.resources().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Manifest(site={:?}, resources={}, total_bytes={})",
            self.inner.site_name(),
            self.inner.resources().len(),
            self.inner.total_bytes()
        )
    }
}

/// The timing record of one simulated page load.
#[pyclass]
struct Trace {
    inner: netsim::DeliveryTrace,
}

#[pymethods]
impl Trace {
    /// `{resource_id: (request_ms, first_byte_ms, completion_ms)}`.
    fn timings(&self) -> BTreeMap<String, (f64, f64, f64)> {
        self.inner
            .timings
            .iter()
            .map(|(id, t)| {
                (id.clone(), (t.request_time_ms, t.first_byte_time_ms, t.completion_time_ms))
            })
            .collect()
    }

    /// Delivery events as `(arrival_ms, resource_id, bytes)`.
    fn events(&self) -> Vec<(f64, String, u64)> {
        self.inner
            .events
            .iter()
            .map(|e| (e.time_ms, e.resource_id.clone(), e.bytes))
            .collect()
    }

    fn completion_ms(&self, resource_id: &str) -> PyResult<f64> {
        self.inner
            .timings
            .get(resource_id)
            .map(|t| t.completion_time_ms)
            .ok_or_else(|| value_error(format!("unknown resource {resource_id:?}")))
    }

    fn __repr__(&self) -> String {
        format!("Trace(resources={}, events={})", self.inner.timings.len(), self.inner.events.len())
    }
}

fn strategy_of(
    label: &str,
    manifest: &manifest::WebsiteManifest,
    sam_threshold: Option<u64>,
) -> PyResult<netsim::DeliveryStrategy> {
    Ok(match label {
        "baseline" => netsim::DeliveryStrategy::Baseline,
        "dm" => netsim::DeliveryStrategy::Mapped(mapping::MappingStrategy::Dm),
        "rtam" => netsim::DeliveryStrategy::Mapped(mapping::MappingStrategy::Rtam),
        "sam" => {
            let threshold_bytes = match sam_threshold {
                Some(0) => return Err(value_error("sam_threshold must be positive")),
                Some(t) => t,
                None => manifest.default_sam_threshold().unwrap_or(1),
            };
            netsim::DeliveryStrategy::Mapped(mapping::MappingStrategy::Sam { threshold_bytes })
        }
        other => {
            return Err(value_error(format!(
                "unknown strategy {other:?} (expected baseline, dm, rtam, or sam)"
            )))
        }
    })
}

/// Replay a manifest over a simulated link and return the delivery trace.
#[pyfunction]
#[pyo3(signature = (
    manifest, strategy, mode,
    bandwidth_bytes_per_sec=12_500_000.0, one_way_delay_ms=10.0, loss_rate=0.0005,
    seed=0, quantum_bytes=1200, sam_threshold=None
))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    manifest: &Manifest,
    strategy: &str,
    mode: &str,
    bandwidth_bytes_per_sec: f64,
    one_way_delay_ms: f64,
    loss_rate: f64,
    seed: u64,
    quantum_bytes: u64,
    sam_threshold: Option<u64>,
) -> PyResult<Trace> {
    let link = netsim::LinkModel {
        bandwidth_bytes_per_sec,
        one_way_delay_ms,
        loss_rate,
        seed,
    };
    let strategy = strategy_of(strategy, &manifest.inner, sam_threshold)?;
    let trace = netsim::simulate(&manifest.inner, strategy, mode_of(mode)?, &link, quantum_bytes)
        .map_err(value_error)?;
    Ok(Trace { inner: trace })
}

/// Proxy metrics of a trace as `{name: milliseconds}`.
#[pyfunction]
fn compute_metrics(trace: &Trace, manifest: &Manifest) -> PyResult<BTreeMap<String, f64>> {
    let metrics = netsim::compute_metrics(&trace.inner, &manifest.inner).map_err(value_error)?;
    Ok(netsim::METRIC_NAMES
        .iter()
        .zip(metrics.values())
        .map(|(name, value)| (name.to_string(), value))
        .collect())
}

/// One comparison cell: metric name, relative change, sign symbol.
type CompareCell = (String, f64, String);

/// Compare labeled metric dicts against a baseline label. Returns rows of
/// `(label, [(metric, relative_change, sign)])` where a positive relative
/// change is an improvement.
#[pyfunction]
#[pyo3(signature = (runs, baseline, epsilon=netsim::DEFAULT_SIGN_EPSILON))]
fn compare(
    runs: Vec<(String, BTreeMap<String, f64>)>,
    baseline: &str,
    epsilon: f64,
) -> PyResult<Vec<(String, Vec<CompareCell>)>> {
    let mut typed = Vec::with_capacity(runs.len());
    for (label, values) in &runs {
        let metric = |name: &str| -> PyResult<f64> {
            values
                .get(name)
                .copied()
                .ok_or_else(|| value_error(format!("run {label:?} is missing metric {name:?}")))
        };
        typed.push((
            label.clone(),
            netsim::ProxyMetrics {
                fcp_proxy_ms: metric("fcp_proxy_ms")?,
                lcp_proxy_ms: metric("lcp_proxy_ms")?,
                tti_proxy_ms: metric("tti_proxy_ms")?,
                si_proxy_ms: metric("si_proxy_ms")?,
                page_complete_ms: metric("page_complete_ms")?,
            },
        ));
    }
    let rows = netsim::compare(&typed, baseline, epsilon).map_err(value_error)?;
    Ok(rows
        .into_iter()
        .map(|row| {
            let cells = netsim::METRIC_NAMES
                .iter()
                .enumerate()
                .map(|(k, name)| {
                    (name.to_string(), row.relative_change[k], row.signs[k].symbol().to_string())
                })
                .collect();
            (row.label, cells)
        })
        .collect())
}

#[pymodule]
fn epsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("DEFAULT_QUANTUM_BYTES", netsim::DEFAULT_QUANTUM_BYTES)?;
    m.add("DEFAULT_SIGN_EPSILON", netsim::DEFAULT_SIGN_EPSILON)?;
    m.add_class::<Scheduler>()?;
    m.add_class::<Manifest>()?;
    m.add_class::<Trace>()?;
    m.add_function(wrap_pyfunction!(parse_priority_field, m)?)?;
    m.add_function(wrap_pyfunction!(serialize_priority_field, m)?)?;
    m.add_function(wrap_pyfunction!(dm_map, m)?)?;
    m.add_function(wrap_pyfunction!(rtam_map, m)?)?;
    m.add_function(wrap_pyfunction!(sam_map, m)?)?;
    m.add_function(wrap_pyfunction!(classify_resource, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    Ok(())
}
