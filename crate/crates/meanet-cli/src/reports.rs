//! CSV / JSONL report emission.
//!
//! Column sets live in `schemas/output_columns.json`, shipped with the
//! repo and checked against these writers in the test suite. Floats are
//! written in shortest round-trip form; absent optional values are
//! written as `NaN`.

use std::fmt::Write as _;
use std::path::Path;

use meanet::arch::MeaNet;
use meanet::complexity::{ClassPartition, ClassStats};
use meanet::cost::CostBreakdown;
use meanet::error::Result;
use meanet::router::{InferenceReport, RoutingRecord, ThresholdRange};
use meanet::trainer::TrainingCurve;

pub const TRAINING_CURVE_COLUMNS: &[&str] = &["epoch", "split", "loss", "accuracy"];

pub const CLASS_STATS_COLUMNS: &[&str] = &[
    "class",
    "precision",
    "fdr",
    "support",
    "predicted_count",
    "is_hard",
];

pub const PARAMS_REPORT_COLUMNS: &[&str] = &["block", "frozen", "params", "macs"];

pub const INFERENCE_REPORT_COLUMNS: &[&str] = &[
    "n",
    "threshold",
    "cloud_mode",
    "beta",
    "attempted_beta",
    "accuracy",
    "hard_class_accuracy",
    "detection_accuracy",
    "main_exit_frac",
    "extension_exit_frac",
    "cloud_exit_frac",
    "err_correct",
    "err_type1",
    "err_type2",
    "err_type3",
    "err_type4",
    "mean_entropy",
    "mean_entropy_correct",
    "mean_entropy_wrong",
    "mu_c",
    "mu_w",
];

pub const COST_REPORT_COLUMNS: &[&str] = &[
    "strategy",
    "threshold",
    "beta",
    "edge_compute_J",
    "cloud_compute_J",
    "comm_J",
    "total_J",
];

pub const SWEEP_COLUMNS: &[&str] = &[
    "threshold",
    "beta",
    "attempted_beta",
    "accuracy",
    "hard_class_accuracy",
    "detection_accuracy",
    "main_exit_frac",
    "extension_exit_frac",
    "edge_compute_J",
    "cloud_compute_J",
    "comm_J",
    "total_J",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NaN".into())
}

fn write_csv(path: &Path, columns: &[&str], rows: &[Vec<String>], preamble: &str) -> Result<()> {
    let mut out = String::new();
    out.push_str(preamble);
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_training_curve(path: &Path, curve: &TrainingCurve) -> Result<()> {
    let rows: Vec<Vec<String>> = curve
        .iter()
        .map(|p| {
            vec![
                p.epoch.to_string(),
                p.split.as_str().to_string(),
                p.loss.to_string(),
                p.accuracy.to_string(),
            ]
        })
        .collect();
    write_csv(path, TRAINING_CURVE_COLUMNS, &rows, "")
}

pub fn write_class_stats(
    path: &Path,
    stats: &ClassStats,
    partition: &ClassPartition,
) -> Result<()> {
    let rows: Vec<Vec<String>> = (0..stats.num_classes)
        .map(|c| {
            vec![
                c.to_string(),
                stats.per_class_precision[c].to_string(),
                stats.per_class_fdr[c].to_string(),
                stats.support(c).to_string(),
                stats.predicted_count(c).to_string(),
                partition.is_hard_class(c).to_string(),
            ]
        })
        .collect();
    write_csv(path, CLASS_STATS_COLUMNS, &rows, "")
}

pub fn write_params_report(path: &Path, net: &MeaNet) -> Result<()> {
    let mut rows = Vec::new();
    for (name, layers) in net.blocks() {
        let params: usize = layers.iter().map(|l| l.param_count()).sum();
        let macs: usize = layers.iter().map(|l| l.mac_count()).sum();
        let frozen = layers.iter().all(|l| l.frozen);
        rows.push(vec![
            name.to_string(),
            frozen.to_string(),
            params.to_string(),
            macs.to_string(),
        ]);
    }
    let (fixed_params, trained_params) = net.count_params();
    let (fixed_macs, trained_macs) = net.count_macs();
    rows.push(vec![
        "total_fixed".into(),
        "true".into(),
        fixed_params.to_string(),
        fixed_macs.to_string(),
    ]);
    rows.push(vec![
        "total_trained".into(),
        "false".into(),
        trained_params.to_string(),
        trained_macs.to_string(),
    ]);
    rows.push(vec![
        "total".into(),
        "all".into(),
        (fixed_params + trained_params).to_string(),
        (fixed_macs + trained_macs).to_string(),
    ]);
    write_csv(path, PARAMS_REPORT_COLUMNS, &rows, "")
}

pub fn write_records(path: &Path, records: &[RoutingRecord]) -> Result<()> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn inference_report_row(
    report: &InferenceReport,
    threshold: f64,
    cloud_mode: &str,
    range: Option<ThresholdRange>,
) -> Vec<String> {
    vec![
        report.n.to_string(),
        threshold.to_string(),
        cloud_mode.to_string(),
        report.beta.to_string(),
        report.attempted_beta.to_string(),
        report.accuracy.to_string(),
        opt(report.hard_class_accuracy),
        report.detection_accuracy.to_string(),
        report.main_exit_fraction.to_string(),
        report.extension_exit_fraction.to_string(),
        report.cloud_exit_fraction.to_string(),
        report.taxonomy.correct.to_string(),
        report.taxonomy.type_i.to_string(),
        report.taxonomy.type_ii.to_string(),
        report.taxonomy.type_iii.to_string(),
        report.taxonomy.type_iv.to_string(),
        report.mean_entropy.to_string(),
        opt(report.mean_entropy_correct_main),
        opt(report.mean_entropy_wrong_main),
        opt(range.map(|r| r.mu_c)),
        opt(range.map(|r| r.mu_w)),
    ]
}

pub fn write_inference_report(
    path: &Path,
    report: &InferenceReport,
    threshold: f64,
    cloud_mode: &str,
    range: Option<ThresholdRange>,
) -> Result<()> {
    let rows = vec![inference_report_row(report, threshold, cloud_mode, range)];
    write_csv(path, INFERENCE_REPORT_COLUMNS, &rows, "")
}

pub struct CostRow {
    pub strategy: String,
    pub threshold: f64,
    pub beta: f64,
    pub breakdown: CostBreakdown,
}

/// Energy columns are in joules; breakdowns arrive in mJ.
pub fn write_cost_report(path: &Path, rows: &[CostRow]) -> Result<()> {
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.strategy.clone(),
                r.threshold.to_string(),
                r.beta.to_string(),
                (r.breakdown.edge_compute / 1000.0).to_string(),
                (r.breakdown.cloud_compute / 1000.0).to_string(),
                (r.breakdown.communication / 1000.0).to_string(),
                (r.breakdown.total() / 1000.0).to_string(),
            ]
        })
        .collect();
    write_csv(path, COST_REPORT_COLUMNS, &table, "")
}

pub struct SweepRow {
    pub threshold: f64,
    pub report: InferenceReport,
    pub breakdown: CostBreakdown,
}

/// The calibrated range rides along as a leading `#` comment line.
pub fn write_sweep(path: &Path, range: ThresholdRange, rows: &[SweepRow]) -> Result<()> {
    let mut preamble = String::new();
    writeln!(preamble, "# mu_c={} mu_w={}", range.mu_c, range.mu_w).expect("string write");
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.threshold.to_string(),
                r.report.beta.to_string(),
                r.report.attempted_beta.to_string(),
                r.report.accuracy.to_string(),
                opt(r.report.hard_class_accuracy),
                r.report.detection_accuracy.to_string(),
                r.report.main_exit_fraction.to_string(),
                r.report.extension_exit_fraction.to_string(),
                (r.breakdown.edge_compute / 1000.0).to_string(),
                (r.breakdown.cloud_compute / 1000.0).to_string(),
                (r.breakdown.communication / 1000.0).to_string(),
                (r.breakdown.total() / 1000.0).to_string(),
            ]
        })
        .collect();
    write_csv(path, SWEEP_COLUMNS, &table, &preamble)
}
