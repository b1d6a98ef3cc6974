use sha2::{Digest, Sha256};

use super::*;
use crate::error::Error;
use crate::plant::MoistureLevel;

fn small(study: Study) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(study, vec![3], 11, "unused");
    spec.horizon = Some(10);
    spec.oos_scenarios = 40;
    spec.replications = 2;
    spec.overrides.moisture = Some(vec![MoistureLevel::Low]);
    spec.overrides.reactor_capacities = Some(vec![2.7]);
    spec
}

fn field_of(err: Error) -> String {
    match err {
        Error::Spec { field, .. } => field,
        other => panic!("expected a spec error, got {other}"),
    }
}

#[test]
fn empty_sample_grid_is_rejected() {
    let mut spec = small(Study::BaseCase);
    spec.scenarios.clear();
    assert_eq!(field_of(spec.validate().unwrap_err()), "scenarios");
    assert_eq!(field_of(compute_experiment(&spec).unwrap_err()), "scenarios");
    spec.scenarios = vec![5, 0];
    assert_eq!(field_of(spec.validate().unwrap_err()), "scenarios");
}

#[test]
fn invalid_fields_are_named() {
    let mut spec = small(Study::StorageCapacity);
    spec.overrides.storage_scales = Some(vec![1.25, 1.5]);
    assert_eq!(field_of(spec.validate().unwrap_err()), "overrides.storage_scales");
    let mut spec = small(Study::ParticleSize);
    spec.overrides.median_shifts = Some(vec![]);
    assert_eq!(field_of(spec.validate().unwrap_err()), "overrides.median_shifts");
    let mut spec = small(Study::BaseCase);
    spec.saa_risk = Some(1.5);
    assert_eq!(field_of(spec.validate().unwrap_err()), "saa_risk");
    assert_eq!(field_of(Study::parse("warp_drive").unwrap_err()), "study");
}

#[test]
fn spec_reads_from_json_with_defaults() {
    let spec = ExperimentSpec::from_json(
        r#"{"study": "storage_capacity", "scenarios": [20], "seed": 4, "output": "out",
            "overrides": {"storage_scales": [1.0, 1.5]}}"#,
    )
    .unwrap();
    assert_eq!(spec.study, Study::StorageCapacity);
    assert_eq!(spec.replications, 10);
    assert_eq!(spec.oos_scenarios, 10_000);
    assert!(spec.plant.is_none());
    assert!(ExperimentSpec::from_json(r#"{"study": "base_case", "scenarios": [], "seed": 1, "output": "o"}"#).is_err());
    assert!(ExperimentSpec::from_json(r#"{"study": "base_case", "scenarios": [2], "seed": 1, "output": "o", "typo": 1}"#).is_err());
}

#[test]
fn base_case_row_reports_consistent_utilization() {
    let report = compute_experiment(&small(Study::BaseCase)).unwrap();
    assert!(report.complete());
    let t = report.table("base_case").unwrap();
    assert_eq!(t.rows.len(), 1);
    let flow = t.value(0, "reactor_flow_dt_hr").unwrap();
    let util = t.value(0, "utilization_pct").unwrap();
    assert!((util - 100.0 * flow / 2.7).abs() < 1e-5, "{util} vs {flow}");
    let (e, f, total) = (t.value(0, "energy_cost_usd_dt").unwrap(), t.value(0, "fixed_cost_usd_dt").unwrap(), t.value(0, "total_cost_usd_dt").unwrap());
    assert!((e + f - total).abs() < 1e-5);
    assert_eq!(report.table("base_case_inventory").unwrap().rows.len(), 10);
    assert_eq!(report.manifest.cells, 1);
}

#[test]
fn deltas_are_taken_against_the_study_base() {
    let mut spec = small(Study::StorageCapacity);
    spec.overrides.storage_scales = Some(vec![1.0, 1.5]);
    let report = compute_experiment(&spec).unwrap();
    let t = report.table("storage_capacity").unwrap();
    assert_eq!(t.rows.len(), 2);
    let d = t.column("delta_total_cost_pct").unwrap();
    assert_eq!(t.rows[0][d], "");
    let (base, other) = (t.value(0, "total_cost_usd_dt").unwrap(), t.value(1, "total_cost_usd_dt").unwrap());
    let expected = 100.0 * (other - base) / base;
    assert!((t.value(1, "delta_total_cost_pct").unwrap() - expected).abs() < 1e-3);
}

#[test]
fn sequencing_rows_average_their_replications() {
    let report = compute_experiment(&small(Study::Sequencing)).unwrap();
    let t = report.table("sequencing").unwrap();
    let names: Vec<&str> = t.rows.iter().map(|r| r[t.column("sequence").unwrap()].as_str()).collect();
    assert_eq!(names, ["long", "short", "random"]);
    assert!(t.rows.iter().all(|r| r[t.column("runs").unwrap()] == "2"));
}

#[test]
fn failed_cells_are_recorded_and_the_run_continues() {
    let mut spec = small(Study::ParticleSize);
    spec.overrides.median_shifts = Some(vec![0.0]);
    spec.overrides.spread_shifts = Some(vec![0.0, -50.0]);
    let report = compute_experiment(&spec).unwrap();
    let t = report.table("particle_size").unwrap();
    assert_eq!(t.rows.len(), 2);
    assert_eq!(t.rows[0][t.column("status").unwrap()], "feasible");
    assert!(t.rows[1][t.column("status").unwrap()].starts_with("error: "));
    assert!(!report.complete());
    assert_eq!(report.manifest.failed.len(), 1);
}

#[test]
fn single_replication_stability_has_zero_spread() {
    let mut spec = small(Study::Stability);
    spec.replications = 1;
    let report = compute_experiment(&spec).unwrap();
    let t = report.table("stability").unwrap();
    assert_eq!(t.value(0, "spread_pct"), Some(0.0));
    assert_eq!(report.table("stability_replications").unwrap().rows.len(), 1);
}

#[test]
fn mv_comparison_lists_both_models() {
    let report = compute_experiment(&small(Study::MvComparison)).unwrap();
    let t = report.table("mv_comparison").unwrap();
    let models: Vec<&str> = t.rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(models, ["mean_value", "saa"]);
}

#[test]
fn output_is_reproducible_across_runs_and_thread_counts() {
    let mut spec = small(Study::ShortFailures);
    spec.overrides.moisture = Some(vec![MoistureLevel::Medium]);
    let csvs = |r: &ExperimentReport| r.tables.iter().chain(&r.plots).map(Table::to_csv_string).collect::<Vec<_>>();
    let a = compute_experiment(&spec).unwrap();
    let b = compute_experiment(&spec).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool.install(|| compute_experiment(&spec).unwrap());
    assert_eq!(csvs(&a), csvs(&b));
    assert_eq!(csvs(&a), csvs(&c));
    assert_eq!(a.manifest, c.manifest);
}

#[test]
fn written_files_match_the_manifest_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small(Study::BaseCase);
    spec.output = dir.path().join("run");
    let report = run_experiment(&spec).unwrap();
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(spec.output.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest, report.manifest);
    assert_eq!(manifest.files.len(), 2);
    for (file, hash) in &manifest.files {
        let bytes = std::fs::read(spec.output.join(file)).unwrap();
        assert_eq!(&hex::encode(Sha256::digest(&bytes)), hash, "{file}");
    }
    assert_eq!(manifest.seed, 11);
    assert_eq!(manifest.evaluation_seed, evaluation_seed(11));
}

#[test]
fn config_hash_ignores_the_output_directory() {
    let mut a = small(Study::BaseCase);
    a.scenarios = vec![2];
    let mut b = a.clone();
    b.output = "elsewhere".into();
    let (ra, rb) = (compute_experiment(&a).unwrap(), compute_experiment(&b).unwrap());
    assert_eq!(ra.manifest.config_hash, rb.manifest.config_hash);
    a.seed += 1;
    assert_ne!(compute_experiment(&a).unwrap().manifest.config_hash, ra.manifest.config_hash);
}

#[test]
fn numbers_render_without_negative_zero() {
    assert_eq!(num(-0.0), "0.000000");
    assert_eq!(num(-1e-9), "0.000000");
    assert_eq!(num(f64::NAN), "");
    assert_eq!(pct_change(Some(3.0), Some(2.0)), "50.000000");
    assert_eq!(pct_change(Some(3.0), Some(0.0)), "");
}
