//! Analytic cost and energy model.
//!
//! Closed-form per-strategy cost rows (edge-only, cloud-only, and the
//! two collaboration modes) plus the communication/computation energy
//! arithmetic: a linear WiFi upload-power law, upload times from payload
//! size and throughput, and per-image compute energy. A measured variant
//! prices an actual routing run record by record.
//!
//! Unit conventions are carried in names: powers in mW or W, times in
//! ms, energies in mJ (note `1 W * 1 ms = 1 mJ`). The abstract strategy
//! rows are unit-agnostic: totals come out in whatever unit the
//! per-instance costs are given in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::router::{PayloadKind, RoutingRecord};

/// Slope of the WiFi upload power law, mW per Mbps.
pub const UPLOAD_POWER_SLOPE_MW_PER_MBPS: f64 = 283.17;
/// Intercept of the WiFi upload power law, mW.
pub const UPLOAD_POWER_IDLE_MW: f64 = 132.86;

/// Upload power in mW at a given throughput (Mbps), from the linear
/// WiFi power law.
pub fn upload_power_mw(throughput_mbps: f64) -> Result<f64> {
    if throughput_mbps.is_nan() || throughput_mbps < 0.0 {
        return Err(Error::InvalidInput(format!(
            "throughput must be nonnegative, got {throughput_mbps}"
        )));
    }
    Ok(UPLOAD_POWER_SLOPE_MW_PER_MBPS * throughput_mbps + UPLOAD_POWER_IDLE_MW)
}

/// Time in ms to upload `payload_bytes` at `throughput_mbps`.
pub fn upload_time_ms(payload_bytes: f64, throughput_mbps: f64) -> Result<f64> {
    if payload_bytes.is_nan() || payload_bytes < 0.0 {
        return Err(Error::InvalidInput(format!(
            "payload size must be nonnegative, got {payload_bytes}"
        )));
    }
    if throughput_mbps.is_nan() || throughput_mbps <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "cannot divide by throughput {throughput_mbps}"
        )));
    }
    // 8 * bytes / (mbps * 1e6) seconds, expressed in ms.
    Ok(8.0 * payload_bytes / (throughput_mbps * 1e3))
}

/// Communication energy in mJ from power in W and time in ms.
pub fn comm_energy_mj(power_w: f64, time_ms: f64) -> f64 {
    power_w * time_ms
}

/// Compute energy in mJ from device power in W and per-instance compute
/// time in ms.
pub fn compute_energy_mj(power_w: f64, compute_time_ms: f64) -> f64 {
    power_w * compute_time_ms
}

/// Inference strategy rows of the analytic cost table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    EdgeOnly,
    CloudOnly,
    /// Edge inference with raw-data offload of the `beta` fraction.
    EdgeCloudRaw,
    /// Split network: `q` of the layers run at the edge, features are
    /// offloaded for the `beta` fraction.
    EdgeCloudFeatures,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::EdgeOnly => "edge_only",
            Strategy::CloudOnly => "cloud_only",
            Strategy::EdgeCloudRaw => "edge_cloud_raw",
            Strategy::EdgeCloudFeatures => "edge_cloud_features",
        }
    }

    pub const ALL: [Strategy; 4] = [
        Strategy::EdgeOnly,
        Strategy::CloudOnly,
        Strategy::EdgeCloudRaw,
        Strategy::EdgeCloudFeatures,
    ];
}

/// Parameters of the analytic cost rows. Per-instance costs may be
/// energies or latencies; totals inherit the unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Total number of instances (N).
    pub instances: u64,
    /// Per-instance edge compute cost (x).
    pub edge_cost: f64,
    /// Per-instance cloud compute cost (x_cl).
    pub cloud_cost: f64,
    /// Per-instance raw-data upload cost (x_cu).
    pub raw_upload_cost: f64,
    /// Per-instance feature upload cost (x_cu').
    pub feature_upload_cost: f64,
    /// Fraction of layers executed at the edge in split mode (q);
    /// required only for the feature strategy. Typically in [1/3, 2/3].
    pub edge_layer_fraction: Option<f64>,
    /// Fraction of instances sent to the cloud (beta).
    pub beta: f64,
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("edge_cost", self.edge_cost),
            ("cloud_cost", self.cloud_cost),
            ("raw_upload_cost", self.raw_upload_cost),
            ("feature_upload_cost", self.feature_upload_cost),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidInput(format!(
                "beta must lie in [0,1], got {}",
                self.beta
            )));
        }
        if let Some(q) = self.edge_layer_fraction {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "edge layer fraction q must lie in (0,1), got {q}"
                )));
            }
        }
        Ok(())
    }
}

/// One strategy's cost, broken into the table's three columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub edge_compute: f64,
    pub cloud_compute: f64,
    pub communication: f64,
}

impl CostBreakdown {
    pub const ZERO: CostBreakdown = CostBreakdown {
        edge_compute: 0.0,
        cloud_compute: 0.0,
        communication: 0.0,
    };

    pub fn total(&self) -> f64 {
        self.edge_compute + self.cloud_compute + self.communication
    }
}

/// Evaluates one analytic strategy row.
pub fn strategy_cost(strategy: Strategy, params: &CostParams) -> Result<CostBreakdown> {
    params.validate()?;
    let n = params.instances as f64;
    let beta = params.beta;
    Ok(match strategy {
        Strategy::EdgeOnly => CostBreakdown {
            edge_compute: n * params.edge_cost,
            ..CostBreakdown::ZERO
        },
        Strategy::CloudOnly => CostBreakdown {
            edge_compute: 0.0,
            cloud_compute: n * params.cloud_cost,
            communication: n * params.raw_upload_cost,
        },
        Strategy::EdgeCloudRaw => CostBreakdown {
            edge_compute: n * params.edge_cost,
            cloud_compute: beta * n * params.cloud_cost,
            communication: beta * n * params.raw_upload_cost,
        },
        Strategy::EdgeCloudFeatures => {
            let q = params.edge_layer_fraction.ok_or_else(|| {
                Error::Config(
                    "edge layer fraction q is required for the feature-offload strategy".into(),
                )
            })?;
            CostBreakdown {
                edge_compute: n * (q * params.edge_cost),
                cloud_compute: beta * n * ((1.0 - q) * params.cloud_cost),
                communication: beta * n * params.feature_upload_cost,
            }
        }
    })
}

/// Physical energy parameters of the simulated edge device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub upload_mbps: f64,
    pub gpu_power_w: f64,
    /// Per-instance compute time of the full edge model, ms.
    pub compute_time_ms: f64,
    /// Raw-data payload size per instance, bytes.
    pub image_bytes: f64,
    /// Feature payload size per instance, bytes.
    pub feature_bytes: f64,
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("upload_mbps", self.upload_mbps),
            ("gpu_power_w", self.gpu_power_w),
            ("compute_time_ms", self.compute_time_ms),
            ("image_bytes", self.image_bytes),
            ("feature_bytes", self.feature_bytes),
        ] {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Default feature payload: 8 bytes per feature component.
    pub fn default_feature_bytes(feature_dim: usize) -> f64 {
        (feature_dim * 8) as f64
    }

    /// Upload energy in mJ for one payload of the given kind.
    pub fn upload_energy_mj(&self, kind: PayloadKind) -> Result<f64> {
        let bytes = match kind {
            PayloadKind::RawData => self.image_bytes,
            PayloadKind::Features => self.feature_bytes,
        };
        let power_w = upload_power_mw(self.upload_mbps)? / 1000.0;
        Ok(comm_energy_mj(
            power_w,
            upload_time_ms(bytes, self.upload_mbps)?,
        ))
    }

    /// Full-model per-instance compute energy in mJ.
    pub fn full_compute_energy_mj(&self) -> f64 {
        compute_energy_mj(self.gpu_power_w, self.compute_time_ms)
    }
}

/// Edge-side energy of an actual routing run, priced in mJ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredCost {
    pub breakdown: CostBreakdown,
    /// Completed-offload fraction measured from the records.
    pub beta: f64,
    /// Attempted-offload fraction (failed uploads still spend energy).
    pub attempted_beta: f64,
}

/// Prices a routing run record by record.
///
/// All instances pay the main-path compute share; instances whose
/// extension path ran also pay the extension share. The split uses the
/// MAC partition of the frozen network: the fixed MACs are the main
/// path, the trained MACs the adaptive/extension path. Uploads are
/// priced per attempt (a failed upload spends its energy too); the
/// cloud's own compute is not an edge cost and is reported as zero.
pub fn measured_cost_report(
    records: &[RoutingRecord],
    energy: &EnergyParams,
    fixed_macs: usize,
    trained_macs: usize,
) -> Result<MeasuredCost> {
    energy.validate()?;
    if records.is_empty() {
        return Err(Error::InvalidInput("no records to price".into()));
    }
    let total_macs = fixed_macs + trained_macs;
    if total_macs == 0 {
        return Err(Error::InvalidInput("model reports zero MACs".into()));
    }
    let e_full = energy.full_compute_energy_mj();
    let e_main = e_full * fixed_macs as f64 / total_macs as f64;
    let e_ext = e_full * trained_macs as f64 / total_macs as f64;

    let mut edge = 0.0;
    let mut comm = 0.0;
    let mut completed = 0usize;
    let mut attempted = 0usize;
    for r in records {
        edge += e_main;
        if r.conf_ext.is_some() {
            edge += e_ext;
        }
        if let Some(kind) = r.payload {
            attempted += 1;
            comm += energy.upload_energy_mj(kind)?;
        }
        completed += r.decision.is_cloud() as usize;
    }
    let n = records.len() as f64;
    Ok(MeasuredCost {
        breakdown: CostBreakdown {
            edge_compute: edge,
            cloud_compute: 0.0,
            communication: comm,
        },
        beta: completed as f64 / n,
        attempted_beta: attempted as f64 / n,
    })
}

#[cfg(test)]
// 3.14 below is a per-image energy in mJ (56 W x 0.056 ms), not an
// approximation of pi.
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;
    use crate::router::RoutingDecision;

    fn close_pct(actual: f64, expected: f64, pct: f64) -> bool {
        (actual - expected).abs() <= expected.abs() * pct / 100.0
    }

    #[test]
    fn upload_power_law() {
        // Slope * 18.88 + intercept, about 5.48 W.
        let p = upload_power_mw(18.88).unwrap();
        assert!(close_pct(p, 5480.0, 1.0), "{p} mW");
        assert_eq!(upload_power_mw(0.0).unwrap(), UPLOAD_POWER_IDLE_MW);
        let p1 = upload_power_mw(1.0).unwrap();
        assert!((p1 - 416.03).abs() < 1e-9);
        assert!(upload_power_mw(-1.0).is_err());
    }

    #[test]
    fn upload_times_match_published_payloads() {
        // 32x32x3 bytes at 18.88 Mbps.
        let t_small = upload_time_ms(3072.0, 18.88).unwrap();
        assert!(close_pct(t_small, 1.30, 1.0), "{t_small} ms");
        // 224x224x3 bytes.
        let t_large = upload_time_ms(150_528.0, 18.88).unwrap();
        assert!(close_pct(t_large, 63.7, 1.0), "{t_large} ms");
        assert!(upload_time_ms(100.0, 0.0).is_err());
    }

    #[test]
    fn energies_match_published_cells() {
        let p_w = upload_power_mw(18.88).unwrap() / 1000.0;
        let e_small = comm_energy_mj(p_w, upload_time_ms(3072.0, 18.88).unwrap());
        assert!(close_pct(e_small, 7.12, 1.0), "{e_small} mJ");
        let e_large = comm_energy_mj(p_w, upload_time_ms(150_528.0, 18.88).unwrap());
        assert!(close_pct(e_large, 349.0, 1.0), "{e_large} mJ");

        assert!(close_pct(compute_energy_mj(56.0, 0.056), 3.14, 1.0));
        assert!(close_pct(compute_energy_mj(75.0, 0.203), 15.23, 1.0));
        assert_eq!(compute_energy_mj(56.0, 0.0), 0.0);
    }

    fn params(beta: f64) -> CostParams {
        CostParams {
            instances: 10_000,
            edge_cost: 3.14,
            cloud_cost: 20.0,
            raw_upload_cost: 7.12,
            feature_upload_cost: 2.0,
            edge_layer_fraction: Some(0.5),
            beta,
        }
    }

    #[test]
    fn strategy_rows_and_hand_example() {
        let p = params(0.15);
        let edge = strategy_cost(Strategy::EdgeOnly, &p).unwrap();
        assert_eq!(edge.edge_compute, 10_000.0 * 3.14);
        assert_eq!(edge.cloud_compute, 0.0);

        // Hand arithmetic: beta 0.15, N 10000, x 3.14 mJ, x_cu 7.12 mJ.
        let raw = strategy_cost(Strategy::EdgeCloudRaw, &p).unwrap();
        assert!((raw.edge_compute - 31_400.0).abs() < 1e-9);
        assert!((raw.communication - 10_680.0).abs() < 1e-9);

        let feat = strategy_cost(Strategy::EdgeCloudFeatures, &p).unwrap();
        assert!((feat.edge_compute - 10_000.0 * 0.5 * 3.14).abs() < 1e-9);
        assert!((feat.cloud_compute - 0.15 * 10_000.0 * 0.5 * 20.0).abs() < 1e-9);
    }

    #[test]
    fn collapse_identities() {
        // beta = 0 collapses raw collaboration to edge-only, exactly.
        let p0 = params(0.0);
        assert_eq!(
            strategy_cost(Strategy::EdgeCloudRaw, &p0).unwrap().total(),
            strategy_cost(Strategy::EdgeOnly, &p0).unwrap().total()
        );

        // beta = 1: the cloud and communication terms equal cloud-only's;
        // every instance still pays the edge term.
        let p1 = params(1.0);
        let raw = strategy_cost(Strategy::EdgeCloudRaw, &p1).unwrap();
        let cloud = strategy_cost(Strategy::CloudOnly, &p1).unwrap();
        assert_eq!(raw.cloud_compute, cloud.cloud_compute);
        assert_eq!(raw.communication, cloud.communication);
        assert_eq!(raw.total(), cloud.total() + 10_000.0 * 3.14);
    }

    #[test]
    fn rows_are_linear_in_n_and_beta() {
        // Doubling is exact in binary floating point, so linearity in N
        // and beta can be asserted bit-for-bit.
        for strategy in Strategy::ALL {
            let base = params(0.25);
            let double_n = CostParams {
                instances: base.instances * 2,
                ..base.clone()
            };
            let a = strategy_cost(strategy, &base).unwrap();
            let b = strategy_cost(strategy, &double_n).unwrap();
            assert_eq!(b.edge_compute, 2.0 * a.edge_compute);
            assert_eq!(b.cloud_compute, 2.0 * a.cloud_compute);
            assert_eq!(b.communication, 2.0 * a.communication);

            let double_beta = CostParams {
                beta: 0.5,
                ..base.clone()
            };
            let c = strategy_cost(strategy, &double_beta).unwrap();
            match strategy {
                Strategy::EdgeOnly | Strategy::CloudOnly => {
                    assert_eq!(c.total(), a.total());
                }
                Strategy::EdgeCloudRaw | Strategy::EdgeCloudFeatures => {
                    assert_eq!(c.cloud_compute, 2.0 * a.cloud_compute);
                    assert_eq!(c.communication, 2.0 * a.communication);
                    assert_eq!(c.edge_compute, a.edge_compute);
                }
            }
        }
    }

    #[test]
    fn feature_strategy_requires_q() {
        let p = CostParams {
            edge_layer_fraction: None,
            ..params(0.5)
        };
        assert!(matches!(
            strategy_cost(Strategy::EdgeCloudFeatures, &p),
            Err(Error::Config(_))
        ));
        assert!(strategy_cost(Strategy::EdgeCloudRaw, &p).is_ok());
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(CostParams {
            beta: 1.5,
            ..params(0.0)
        }
        .validate()
        .is_err());
        assert!(CostParams {
            edge_cost: -1.0,
            ..params(0.0)
        }
        .validate()
        .is_err());
        assert!(CostParams {
            edge_layer_fraction: Some(1.0),
            ..params(0.0)
        }
        .validate()
        .is_err());
    }

    fn record(id: usize, ext_ran: bool, payload: Option<PayloadKind>) -> RoutingRecord {
        let cloud = payload.is_some();
        RoutingRecord {
            id,
            entropy_main: 0.5,
            detected_hard: ext_ran,
            conf_main: 0.9,
            conf_ext: ext_ran.then_some(0.8),
            decision: match payload {
                Some(kind) => RoutingDecision::CloudExit { payload: kind },
                None if ext_ran => RoutingDecision::ExtensionExit,
                None => RoutingDecision::MainExit,
            },
            cloud_attempted: cloud,
            cloud_failed: false,
            payload,
            pred_main: 0,
            predicted: 0,
            label: 0,
            correct: true,
        }
    }

    fn toy_energy() -> EnergyParams {
        EnergyParams {
            upload_mbps: 18.88,
            gpu_power_w: 56.0,
            compute_time_ms: 0.056,
            image_bytes: 3072.0,
            feature_bytes: 64.0,
        }
    }

    #[test]
    fn measured_all_main_exits_cost_the_main_path_only() {
        let records: Vec<RoutingRecord> = (0..100).map(|i| record(i, false, None)).collect();
        // 3:1 MAC split between the main and extension paths.
        let out = measured_cost_report(&records, &toy_energy(), 75, 25).unwrap();
        let e_main = toy_energy().full_compute_energy_mj() * 0.75;
        assert!((out.breakdown.edge_compute - 100.0 * e_main).abs() < 1e-9);
        assert_eq!(out.breakdown.communication, 0.0);
        assert_eq!(out.breakdown.cloud_compute, 0.0);
        assert_eq!(out.beta, 0.0);
    }

    #[test]
    fn measured_beta_comes_from_the_records() {
        let mut records = Vec::new();
        for i in 0..60 {
            records.push(record(i, false, None));
        }
        for i in 60..100 {
            records.push(record(i, false, Some(PayloadKind::RawData)));
        }
        let out = measured_cost_report(&records, &toy_energy(), 75, 25).unwrap();
        assert_eq!(out.beta, 0.4);
        assert_eq!(out.attempted_beta, 0.4);
        let per_upload = toy_energy().upload_energy_mj(PayloadKind::RawData).unwrap();
        assert!((out.breakdown.communication - 40.0 * per_upload).abs() < 1e-9);
    }

    #[test]
    fn measured_offload_scales_with_beta_fraction() {
        // Large payloads: comm dominates, and offloading 60% costs about
        // 60% of the all-offload communication energy.
        let energy = EnergyParams {
            image_bytes: 150_528.0,
            gpu_power_w: 75.0,
            compute_time_ms: 0.203,
            ..toy_energy()
        };
        let make = |beta_count: usize| -> Vec<RoutingRecord> {
            (0..100)
                .map(|i| record(i, false, (i < beta_count).then_some(PayloadKind::RawData)))
                .collect()
        };
        let all = measured_cost_report(&make(100), &energy, 75, 25).unwrap();
        let part = measured_cost_report(&make(60), &energy, 75, 25).unwrap();
        assert!((part.breakdown.communication / all.breakdown.communication - 0.6).abs() < 1e-12);
    }
}
