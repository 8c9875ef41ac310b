//! Per-instance inference routing across the three exits.
//!
//! Every instance runs the main block first. If the cloud is reachable
//! and the main exit's prediction entropy exceeds the threshold, the
//! instance is offloaded (raw input or features, depending on the cloud
//! model). Otherwise the hard-class detector decides whether to also run
//! the adaptive and extension blocks; when both exits run, the one with
//! the higher max-softmax confidence wins, ties going to the extension.

use serde::{Deserialize, Serialize};

use crate::arch::{Classifier, MeaNet};
use crate::complexity::{
    classify_error, confidence, detection_accuracy, ClassPartition, ErrorTaxonomy,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{argmax, entropy_slice, softmax_slice};

/// What gets uploaded when an instance is offloaded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    RawData,
    Features,
}

/// Where an instance's final prediction came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "exit", rename_all = "snake_case")]
pub enum RoutingDecision {
    MainExit,
    ExtensionExit,
    CloudExit { payload: PayloadKind },
}

impl RoutingDecision {
    pub fn is_cloud(self) -> bool {
        matches!(self, RoutingDecision::CloudExit { .. })
    }
}

/// The simulated cloud predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CloudModel {
    /// Returns the true label. Test harness only: an upper bound on what
    /// any cloud model could do.
    Oracle,
    /// A larger classifier evaluated on the raw input.
    RawModel(Classifier),
    /// A tail classifier evaluated on the edge features `F`.
    FeatureTail(Classifier),
}

impl CloudModel {
    pub fn payload_kind(&self) -> PayloadKind {
        match self {
            CloudModel::FeatureTail(_) => PayloadKind::Features,
            CloudModel::Oracle | CloudModel::RawModel(_) => PayloadKind::RawData,
        }
    }
}

/// Payload handed to [`cloud_predict`]. `Truth` is the oracle's payload
/// in simulation: the harness forwards the label it already knows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CloudPayload<'a> {
    RawData(&'a [f64]),
    Features(&'a [f64]),
    Truth(usize),
}

/// Evaluates the cloud model on a payload. The payload kind must match
/// the model kind.
pub fn cloud_predict(model: &CloudModel, payload: &CloudPayload) -> Result<usize> {
    match (model, payload) {
        (CloudModel::Oracle, CloudPayload::Truth(label)) => Ok(*label),
        (CloudModel::RawModel(m), CloudPayload::RawData(x)) => m.predict(x),
        (CloudModel::FeatureTail(m), CloudPayload::Features(f)) => m.predict(f),
        _ => Err(Error::ContractViolation(
            "cloud payload kind does not match the cloud model".into(),
        )),
    }
}

/// Cloud model plus a deterministic transport-failure simulation.
/// A failed offload falls back to the edge path; the record keeps the
/// attempt so offload accounting can distinguish attempted from
/// completed uploads.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudSim {
    pub model: CloudModel,
    /// Probability that an individual upload fails.
    pub failure_rate: f64,
    pub failure_seed: u64,
}

impl CloudSim {
    pub fn reliable(model: CloudModel) -> Self {
        Self {
            model,
            failure_rate: 0.0,
            failure_seed: 0,
        }
    }

    /// Per-instance failure draw, independent of evaluation order.
    fn fails(&self, id: usize) -> bool {
        if self.failure_rate <= 0.0 {
            return false;
        }
        let mut rng = crate::derived_rng(self.failure_seed, id as u64);
        rand::Rng::gen::<f64>(&mut rng) < self.failure_rate
    }
}

/// Admissible threshold range measured on a validation set: mean
/// main-exit entropy of correct predictions and of wrong ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRange {
    pub mu_c: f64,
    pub mu_w: f64,
}

impl ThresholdRange {
    /// Default operating point when the user picks no threshold.
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.mu_c + self.mu_w)
    }
}

/// Means of `(entropy, was_correct)` pairs, split by correctness.
/// Either side being empty is a calibration error naming that side.
pub fn threshold_range_from(entropies: &[(f64, bool)]) -> Result<ThresholdRange> {
    let mut correct = (0.0, 0usize);
    let mut wrong = (0.0, 0usize);
    for &(h, was_correct) in entropies {
        if was_correct {
            correct = (correct.0 + h, correct.1 + 1);
        } else {
            wrong = (wrong.0 + h, wrong.1 + 1);
        }
    }
    if correct.1 == 0 {
        return Err(Error::Calibration(
            "no correct predictions on the calibration set".into(),
        ));
    }
    if wrong.1 == 0 {
        return Err(Error::Calibration(
            "no wrong predictions on the calibration set".into(),
        ));
    }
    let range = ThresholdRange {
        mu_c: correct.0 / correct.1 as f64,
        mu_w: wrong.0 / wrong.1 as f64,
    };
    if range.mu_c >= range.mu_w {
        log::warn!(
            "calibration: mean correct entropy {:.4} is not below mean wrong entropy {:.4}; \
             the main block may be no better than chance here",
            range.mu_c,
            range.mu_w
        );
    }
    Ok(range)
}

/// Runs the main exit over a validation set and calibrates the entropy
/// threshold range from it.
pub fn calibrate_threshold(net: &MeaNet, val: &Dataset) -> Result<ThresholdRange> {
    if val.is_empty() {
        return Err(Error::Calibration("empty calibration set".into()));
    }
    let mut entries = Vec::with_capacity(val.len());
    for i in 0..val.len() {
        let (logits, _) = net.forward_main(val.row(i))?;
        let probs = softmax_slice(&logits)?;
        let h = entropy_slice(&probs)?;
        entries.push((h, argmax(&logits) == val.label(i)));
    }
    threshold_range_from(&entries)
}

/// Routing configuration for one inference pass.
#[derive(Debug, Clone)]
pub struct RoutePolicy<'a> {
    /// Entropy threshold; instances strictly above it go to the cloud
    /// when one is attached.
    pub threshold: f64,
    /// `None` simulates an unreachable cloud: pure-edge inference.
    pub cloud: Option<&'a CloudSim>,
    /// Always run the extension path, bypassing the hard-class detector.
    /// Used by the hard-only evaluation protocol where the extension
    /// blocks are always active.
    pub force_extension: bool,
}

impl<'a> RoutePolicy<'a> {
    pub fn edge_only(threshold: f64) -> Self {
        Self {
            threshold,
            cloud: None,
            force_extension: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.threshold.is_nan() || self.threshold < 0.0 {
            return Err(Error::InvalidInput(format!(
                "threshold must be nonnegative, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Per-instance inference trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingRecord {
    pub id: usize,
    /// Entropy of the main exit's softmax, in nats.
    pub entropy_main: f64,
    /// Hard-class detector output (argmax membership), recorded for
    /// every instance regardless of the final route.
    pub detected_hard: bool,
    pub conf_main: f64,
    /// Present iff the extension path ran.
    pub conf_ext: Option<f64>,
    pub decision: RoutingDecision,
    pub cloud_attempted: bool,
    pub cloud_failed: bool,
    /// What was (or would have been) uploaded; present iff an offload
    /// was attempted, even when the transport failed.
    pub payload: Option<PayloadKind>,
    /// The main exit's own argmax over all classes.
    pub pred_main: usize,
    /// Final prediction in original class ids.
    pub predicted: usize,
    pub label: usize,
    pub correct: bool,
}

/// Routes one instance through the system.
pub fn route_instance(
    net: &MeaNet,
    partition: &ClassPartition,
    id: usize,
    x: &[f64],
    label: usize,
    policy: &RoutePolicy,
) -> Result<RoutingRecord> {
    policy.validate()?;
    let (y1, features) = net.forward_main(x)?;
    let probs = softmax_slice(&y1)?;
    let entropy_main = entropy_slice(&probs)?;
    let pred_main = argmax(&y1);
    let conf_main = probs[pred_main];
    let detected_hard = partition.is_hard_class(pred_main);

    let mut cloud_attempted = false;
    let mut cloud_failed = false;
    let mut attempted_payload = None;
    if let Some(cloud) = policy.cloud {
        if entropy_main > policy.threshold {
            cloud_attempted = true;
            attempted_payload = Some(cloud.model.payload_kind());
            if cloud.fails(id) {
                cloud_failed = true;
            } else {
                let payload = match &cloud.model {
                    CloudModel::Oracle => CloudPayload::Truth(label),
                    CloudModel::RawModel(_) => CloudPayload::RawData(x),
                    CloudModel::FeatureTail(_) => CloudPayload::Features(&features),
                };
                let predicted = cloud_predict(&cloud.model, &payload)?;
                return Ok(RoutingRecord {
                    id,
                    entropy_main,
                    detected_hard,
                    conf_main,
                    conf_ext: None,
                    decision: RoutingDecision::CloudExit {
                        payload: cloud.model.payload_kind(),
                    },
                    cloud_attempted,
                    cloud_failed,
                    payload: attempted_payload,
                    pred_main,
                    predicted,
                    label,
                    correct: predicted == label,
                });
            }
        }
    }

    // Edge path (also the fallback after a failed upload).
    let (decision, conf_ext, predicted) = if policy.force_extension || detected_hard {
        let f2 = net.forward_adaptive(x)?;
        let y2 = net.forward_extension(&features, &f2)?;
        let conf_ext = confidence(&y2)?;
        if conf_main > conf_ext {
            (RoutingDecision::MainExit, Some(conf_ext), pred_main)
        } else {
            // Ties go to the extension: the specialist trained for the
            // contested classes.
            let hard_pred = argmax(&y2);
            let original = partition.inverse_dict(hard_pred).ok_or_else(|| {
                Error::ContractViolation(format!(
                    "exit-2 class {hard_pred} has no original class; partition and model disagree"
                ))
            })?;
            (RoutingDecision::ExtensionExit, Some(conf_ext), original)
        }
    } else {
        (RoutingDecision::MainExit, None, pred_main)
    };

    Ok(RoutingRecord {
        id,
        entropy_main,
        detected_hard,
        conf_main,
        conf_ext,
        decision,
        cloud_attempted,
        cloud_failed,
        payload: attempted_payload,
        pred_main,
        predicted,
        label,
        correct: predicted == label,
    })
}

/// Aggregate statistics of one inference pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub n: usize,
    pub accuracy: f64,
    /// Accuracy over instances whose true class is hard; absent when
    /// the evaluation set contains none.
    pub hard_class_accuracy: Option<f64>,
    /// Agreement of the hard detector with true-class hardness.
    pub detection_accuracy: f64,
    pub main_exit_fraction: f64,
    pub extension_exit_fraction: f64,
    /// Fraction of instances whose prediction came from the cloud.
    pub cloud_exit_fraction: f64,
    /// Completed offload fraction (same as `cloud_exit_fraction`).
    pub beta: f64,
    /// Offloads attempted, including failed uploads.
    pub attempted_beta: f64,
    /// Main-block error taxonomy over all instances.
    pub taxonomy: ErrorTaxonomy,
    pub mean_entropy: f64,
    /// Mean main-exit entropy of instances the main block got right.
    pub mean_entropy_correct_main: Option<f64>,
    /// Mean main-exit entropy of instances the main block got wrong.
    pub mean_entropy_wrong_main: Option<f64>,
}

impl InferenceReport {
    pub fn from_records(records: &[RoutingRecord], partition: &ClassPartition) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidInput("no routing records".into()));
        }
        let n = records.len();
        let mut correct = 0;
        let mut hard_hits = 0;
        let mut hard_total = 0;
        let mut exits = [0usize; 3];
        let mut attempted = 0;
        let mut taxonomy = ErrorTaxonomy::default();
        let mut detections = Vec::with_capacity(n);
        let mut entropy_sum = 0.0;
        let mut h_correct = (0.0, 0usize);
        let mut h_wrong = (0.0, 0usize);
        for r in records {
            correct += r.correct as usize;
            let truly_hard = partition.is_hard_class(r.label);
            if truly_hard {
                hard_total += 1;
                hard_hits += r.correct as usize;
            }
            detections.push((r.detected_hard, truly_hard));
            match r.decision {
                RoutingDecision::MainExit => exits[0] += 1,
                RoutingDecision::ExtensionExit => exits[1] += 1,
                RoutingDecision::CloudExit { .. } => exits[2] += 1,
            }
            attempted += r.cloud_attempted as usize;
            taxonomy.record(classify_error(r.pred_main, r.label, partition)?);
            entropy_sum += r.entropy_main;
            if r.pred_main == r.label {
                h_correct = (h_correct.0 + r.entropy_main, h_correct.1 + 1);
            } else {
                h_wrong = (h_wrong.0 + r.entropy_main, h_wrong.1 + 1);
            }
        }
        let frac = |count: usize| count as f64 / n as f64;
        Ok(Self {
            n,
            accuracy: frac(correct),
            hard_class_accuracy: (hard_total > 0).then(|| hard_hits as f64 / hard_total as f64),
            detection_accuracy: detection_accuracy(&detections)?,
            main_exit_fraction: frac(exits[0]),
            extension_exit_fraction: frac(exits[1]),
            cloud_exit_fraction: frac(exits[2]),
            beta: frac(exits[2]),
            attempted_beta: frac(attempted),
            taxonomy,
            mean_entropy: entropy_sum / n as f64,
            mean_entropy_correct_main: (h_correct.1 > 0).then(|| h_correct.0 / h_correct.1 as f64),
            mean_entropy_wrong_main: (h_wrong.1 > 0).then(|| h_wrong.0 / h_wrong.1 as f64),
        })
    }
}

/// Routes every instance of a dataset and aggregates the report.
pub fn run_inference(
    net: &MeaNet,
    partition: &ClassPartition,
    data: &Dataset,
    policy: &RoutePolicy,
) -> Result<(Vec<RoutingRecord>, InferenceReport)> {
    policy.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("inference on an empty dataset".into()));
    }
    if partition.num_classes != net.config.num_classes
        || partition.num_hard() != net.config.num_hard
    {
        return Err(Error::ContractViolation(format!(
            "partition ({} classes, {} hard) does not match the model ({}, {})",
            partition.num_classes,
            partition.num_hard(),
            net.config.num_classes,
            net.config.num_hard
        )));
    }
    if let Some(cloud) = policy.cloud {
        match &cloud.model {
            CloudModel::Oracle => {}
            CloudModel::RawModel(m) => {
                if m.input_dim != net.config.input_dim || m.num_classes != net.config.num_classes {
                    return Err(Error::ContractViolation(
                        "raw cloud model does not match the edge model's input/classes".into(),
                    ));
                }
            }
            CloudModel::FeatureTail(m) => {
                if m.input_dim != net.config.feature_dim || m.num_classes != net.config.num_classes
                {
                    return Err(Error::ContractViolation(
                        "feature-tail model does not match the edge feature width/classes".into(),
                    ));
                }
            }
        }
    }
    let mut records = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        records.push(route_instance(
            net,
            partition,
            i,
            data.row(i),
            data.label(i),
            policy,
        )?);
    }
    let report = InferenceReport::from_records(&records, partition)?;
    Ok((records, report))
}
