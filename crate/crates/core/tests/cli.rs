//! End-to-end checks of the command-line interface: flags, exit codes, and
//! file outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use epsim_core::load_manifest;
use epsim_core::report::MetricsRecord;

fn epsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn manifests_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../manifests")
}

fn wikipedia() -> String {
    manifests_dir().join("wikipedia.json").to_string_lossy().into_owned()
}

fn stdout_of(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}, stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn map_rtam_assigns_three_to_high_images() {
    let out = epsim(&["map", "--manifest", &wikipedia(), "--strategy", "rtam"]);
    let stdout = stdout_of(&out);
    let row = stdout
        .lines()
        .find(|l| l.contains(",image,high,"))
        .expect("a (high, image) resource exists");
    assert!(row.ends_with(",3"), "expected urgency 3, got {row:?}");
}

#[test]
fn map_dm_depends_only_on_priority() {
    let out = epsim(&["map", "--manifest", &wikipedia(), "--strategy", "dm"]);
    let stdout = stdout_of(&out);
    let mut per_priority: BTreeMap<&str, &str> = BTreeMap::new();
    for line in stdout.lines().filter(|l| !l.starts_with('#') && !l.starts_with("resource_id")) {
        let fields: Vec<&str> = line.split(',').collect();
        let (priority, urgency) = (fields[2], fields[3]);
        let prev = per_priority.insert(priority, urgency);
        if let Some(prev) = prev {
            assert_eq!(prev, urgency, "dm urgency varies within priority {priority}");
        }
    }
}

#[test]
fn map_baseline_is_rejected() {
    let out = epsim(&["map", "--manifest", &wikipedia(), "--strategy", "baseline"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_manifest_exits_two_and_names_the_resource() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{
  "schema_version": 1,
  "site_name": "bad",
  "resources": [
    {"resource_id": "doc", "url_path": "/", "rtype": "document",
     "size_bytes": 10, "chromium_priority": "very_high"},
    {"resource_id": "doc", "url_path": "/x", "rtype": "image",
     "size_bytes": 5, "chromium_priority": "high"}
  ]
}"#,
    )
    .unwrap();
    let out = epsim(&["map", "--manifest", path.to_str().unwrap(), "--strategy", "dm"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("doc"), "diagnostic should name the resource: {stderr}");
}

#[test]
fn unparseable_manifest_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("garbage.json");
    std::fs::write(&path, "not json at all").unwrap();
    let out = epsim(&["summarize", "--manifest", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_lossless_run_matches_the_analytic_total() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let out = epsim(&[
        "simulate",
        "--manifest",
        &wikipedia(),
        "--strategy",
        "baseline",
        "--mode",
        "fifo",
        "--bandwidth",
        "2000000",
        "--delay-ms",
        "0",
        "--loss",
        "0",
        "--reps",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    stdout_of(&out);

    let traces: Vec<_> = std::fs::read_dir(out_dir.join("traces")).unwrap().collect();
    assert_eq!(traces.len(), 1);

    let record: MetricsRecord = serde_json::from_slice(
        &std::fs::read(out_dir.join("metrics/baseline_fifo_rep0.json")).unwrap(),
    )
    .unwrap();
    let manifest = load_manifest(wikipedia()).unwrap();
    let expected_ms = manifest.total_bytes() as f64 * 1000.0 / 2_000_000.0;
    let quantum_tx_ms = 1200.0 * 1000.0 / 2_000_000.0;
    assert!(
        (record.metrics.page_complete_ms - expected_ms).abs() <= quantum_tx_ms,
        "page_complete {} vs analytic {}",
        record.metrics.page_complete_ms,
        expected_ms
    );
}

#[test]
fn repetitions_write_ten_traces_and_a_median_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let out = epsim(&[
        "simulate",
        "--manifest",
        &wikipedia(),
        "--strategy",
        "rtam",
        "--mode",
        "urgency",
        "--loss",
        "0.02",
        "--seed",
        "5",
        "--reps",
        "10",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    stdout_of(&out);

    let traces: Vec<_> = std::fs::read_dir(out_dir.join("traces")).unwrap().collect();
    assert_eq!(traces.len(), 10);

    // medians recomputed with an independent sort-based oracle
    let mut fcp = Vec::new();
    for rep in 0..10 {
        let record: MetricsRecord = serde_json::from_slice(
            &std::fs::read(out_dir.join(format!("metrics/rtam_urgency_rep{rep}.json"))).unwrap(),
        )
        .unwrap();
        assert_eq!(record.link.seed, 5 + rep as u64);
        fcp.push(record.metrics.fcp_proxy_ms);
    }
    fcp.sort_by(f64::total_cmp);
    let oracle = (fcp[4] + fcp[5]) / 2.0;

    let medians = std::fs::read_to_string(out_dir.join("median_metrics.csv")).unwrap();
    let row = medians
        .lines()
        .find(|l| l.starts_with("rtam,urgency,"))
        .expect("median row present");
    let reported: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(reported, oracle);
}

#[test]
fn challenging_preset_sets_the_harsher_link() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let out = epsim(&[
        "simulate",
        "--manifest",
        &wikipedia(),
        "--strategy",
        "dm",
        "--mode",
        "urgency",
        "--challenging",
        "--reps",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    stdout_of(&out);
    let record: MetricsRecord = serde_json::from_slice(
        &std::fs::read(out_dir.join("metrics/dm_urgency_rep0.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(record.link.one_way_delay_ms, 20.0);
    assert_eq!(record.link.loss_rate, 0.001);

    // explicit flags win over the preset
    let out_dir2 = tmp.path().join("run2");
    let out = epsim(&[
        "simulate",
        "--manifest",
        &wikipedia(),
        "--strategy",
        "dm",
        "--mode",
        "urgency",
        "--challenging",
        "--loss",
        "0",
        "--reps",
        "1",
        "--out",
        out_dir2.to_str().unwrap(),
    ]);
    stdout_of(&out);
    let record: MetricsRecord = serde_json::from_slice(
        &std::fs::read(out_dir2.join("metrics/dm_urgency_rep0.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(record.link.one_way_delay_ms, 20.0);
    assert_eq!(record.link.loss_rate, 0.0);
}

#[test]
fn baseline_with_urgency_only_modes_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = epsim(&[
        "simulate",
        "--manifest",
        &wikipedia(),
        "--strategy",
        "baseline",
        "--mode",
        "urgency",
        "--reps",
        "1",
        "--out",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

fn write_record(path: &Path, site: &str, label: &str, values: [f64; 5]) {
    let record = MetricsRecord {
        schema_version: 1,
        site: site.to_string(),
        label: label.to_string(),
        strategy: "dm".to_string(),
        mode: "urgency".to_string(),
        sam_threshold_bytes: None,
        link: epsim_core::LinkModel::default(),
        quantum_bytes: 1200,
        repetition: 0,
        loss_model: String::new(),
        metrics: epsim_core::ProxyMetrics {
            fcp_proxy_ms: values[0],
            lcp_proxy_ms: values[1],
            tti_proxy_ms: values[2],
            si_proxy_ms: values[3],
            page_complete_ms: values[4],
        },
    };
    std::fs::write(path, serde_json::to_string(&record).unwrap()).unwrap();
}

#[test]
fn compare_of_identical_runs_is_all_dots() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.json");
    write_record(&a, "site", "base", [100.0, 200.0, 300.0, 150.0, 400.0]);
    write_record(&b, "site", "cand", [100.0, 200.0, 300.0, 150.0, 400.0]);
    let out = epsim(&["compare", "--baseline", "base", a.to_str().unwrap(), b.to_str().unwrap()]);
    let stdout = stdout_of(&out);
    let row = stdout.lines().find(|l| l.contains("site/cand")).unwrap();
    assert_eq!(row.matches('·').count(), 5);
    assert_eq!(row.matches('+').count(), 0);
}

#[test]
fn compare_flags_a_single_improvement_and_matches_recomputation() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.json");
    let base = [100.0, 200.0, 300.0, 150.0, 400.0];
    let cand = [100.0, 170.0, 300.0, 150.0, 400.0]; // only lcp improves
    write_record(&a, "site", "base", base);
    write_record(&b, "site", "cand", cand);
    let cmp_dir = tmp.path().join("cmp");
    let out = epsim(&[
        "compare",
        "--baseline",
        "base",
        "--out",
        cmp_dir.to_str().unwrap(),
        a.to_str().unwrap(),
        b.to_str().unwrap(),
    ]);
    let stdout = stdout_of(&out);
    let row = stdout.lines().find(|l| l.contains("site/cand")).unwrap();
    assert_eq!(row.matches('+').count(), 1);
    assert_eq!(row.matches('·').count(), 4);

    let csv = std::fs::read_to_string(cmp_dir.join("relative_changes.csv")).unwrap();
    for (k, line) in csv.lines().filter(|l| l.starts_with("site,cand,")).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let reported: f64 = fields[5].parse().unwrap();
        let recomputed = (base[k] - cand[k]) / base[k];
        assert!(
            (reported - recomputed).abs() < 1e-9,
            "metric {k}: {reported} vs {recomputed}"
        );
    }
}

#[test]
fn compare_with_unknown_baseline_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.json");
    write_record(&a, "site", "base", [1.0; 5]);
    write_record(&b, "site", "cand", [1.0; 5]);
    let out = epsim(&["compare", "--baseline", "ghost", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn summarize_writes_consistent_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("sum");
    let out = epsim(&[
        "summarize",
        "--manifest",
        &wikipedia(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let stdout = stdout_of(&out);
    let manifest = load_manifest(wikipedia()).unwrap();
    assert!(stdout.contains(&format!("total_bytes: {}", manifest.total_bytes())));

    let priority_csv = std::fs::read_to_string(out_dir.join("priority_summary.csv")).unwrap();
    let mut total = 0u64;
    let mut count = 0u64;
    for line in priority_csv.lines().filter(|l| !l.starts_with('#') && !l.starts_with("priority,")) {
        let fields: Vec<&str> = line.split(',').collect();
        count += fields[2].parse::<u64>().unwrap();
        total += fields[3].parse::<u64>().unwrap();
    }
    assert_eq!(total, manifest.total_bytes());
    assert_eq!(count, manifest.resources().len() as u64);

    let type_csv = std::fs::read_to_string(out_dir.join("type_summary.csv")).unwrap();
    let type_total: u64 = type_csv
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("type,"))
        .map(|l| l.split(',').nth(2).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(type_total, manifest.total_bytes());
}

#[test]
fn map_out_flag_writes_the_listing() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("mapping.csv");
    let out = epsim(&[
        "map",
        "--manifest",
        &wikipedia(),
        "--strategy",
        "sam",
        "--out",
        path.to_str().unwrap(),
    ]);
    let stdout = stdout_of(&out);
    let written = std::fs::read_to_string(&path).unwrap();
    assert_eq!(stdout, written);
    // the resolved threshold is embedded for provenance
    assert!(written.contains("# sam_threshold_bytes="));
}
