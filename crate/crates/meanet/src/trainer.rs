//! The staged training pipeline.
//!
//! Stage 1 trains the main block (and a larger cloud classifier) on the
//! full training split. Validation statistics then rank classes by
//! precision to pick the hard set, the main block is frozen, and the
//! adaptive and extension blocks train on the remapped hard subset only.
//! Gradients exist solely for the non-frozen blocks, so stage-2 training
//! memory scales with the trained parameter count.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::arch::{self, BlockSpec, Classifier, MeaConfig, MeaNet, Merge};
use crate::complexity::{
    build_class_stats, filter_hard_subset, select_hard_classes, ClassPartition, ClassStats,
};
use crate::data::{split_train_val, Dataset};
use crate::error::{Error, Result};
use crate::nn::{
    argmax, cross_entropy_slice, stack_backward, stack_eval, stack_forward, DenseLayer, Gradients,
    Sgd, SgdConfig,
};

/// Optimizer settings plus the epoch/batch schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub sgd: SgdConfig,
    pub epochs: usize,
    pub batch_size: usize,
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

/// One training-curve row: per-epoch loss and accuracy on a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
}

pub type TrainingCurve = Vec<CurvePoint>;

/// Loss, accuracy, and argmax predictions of a classifier chain on a
/// dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
}

/// Evaluates a layer chain ending in logits with cross-entropy.
pub fn eval_chain<'a, I>(layers: I, data: &Dataset) -> Result<EvalStats>
where
    I: IntoIterator<Item = &'a DenseLayer> + Clone,
{
    if data.is_empty() {
        return Err(Error::InvalidInput("evaluation on an empty dataset".into()));
    }
    let mut loss_sum = 0.0;
    let mut correct = 0;
    let mut predictions = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let logits = stack_eval(layers.clone(), data.row(i))?;
        let (loss, _) = cross_entropy_slice(&logits, data.label(i))?;
        loss_sum += loss;
        let pred = argmax(&logits);
        predictions.push(pred);
        if pred == data.label(i) {
            correct += 1;
        }
    }
    Ok(EvalStats {
        loss: loss_sum / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
        predictions,
    })
}

/// Exit-1 evaluation of the edge network.
pub fn evaluate_main(net: &MeaNet, data: &Dataset) -> Result<EvalStats> {
    eval_chain(net.main.iter().chain(std::iter::once(&net.exit1)), data)
}

/// Mini-batch SGD over a full layer chain ending in logits. The curve
/// carries running train loss/accuracy per epoch, plus validation rows
/// when a validation set is supplied.
fn train_chain(
    chain: &mut [DenseLayer],
    train: &Dataset,
    val: Option<&Dataset>,
    params: &TrainParams,
) -> Result<TrainingCurve> {
    params.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("training on an empty dataset".into()));
    }
    let out_dim = chain
        .last()
        .map(|l| l.out_dim)
        .ok_or_else(|| Error::Config("cannot train an empty chain".into()))?;
    if train.num_classes > out_dim {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} classes but the chain emits {out_dim} logits",
            train.num_classes
        )));
    }

    let mut sgd = Sgd::new(params.sgd.clone())?;
    let mut shuffle_rng = crate::seeded_rng(params.sgd.seed);
    let mut indices: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::new();

    for epoch in 0..params.epochs {
        indices.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in indices.chunks(params.batch_size) {
            let mut batch_grads: Option<Gradients> = None;
            for &i in batch {
                let trace = stack_forward(chain.iter(), train.row(i))?;
                let logits = trace.output();
                let (loss, dlogits) = cross_entropy_slice(logits, train.label(i))?;
                loss_sum += loss;
                if argmax(logits) == train.label(i) {
                    correct += 1;
                }
                let (grads, _) = stack_backward(chain.iter(), &trace, &dlogits)?;
                match &mut batch_grads {
                    None => batch_grads = Some(grads),
                    Some(acc) => acc.accumulate(&grads)?,
                }
            }
            let mut grads = batch_grads.expect("chunks are non-empty");
            grads.scale(1.0 / batch.len() as f64);
            let mut layer_refs: Vec<&mut DenseLayer> = chain.iter_mut().collect();
            sgd.step(&mut layer_refs, &grads, epoch)?;
        }
        curve.push(CurvePoint {
            epoch,
            split: Split::Train,
            loss: loss_sum / train.len() as f64,
            accuracy: correct as f64 / train.len() as f64,
        });
        if let Some(val) = val {
            let stats = eval_chain(chain.iter(), val)?;
            curve.push(CurvePoint {
                epoch,
                split: Split::Val,
                loss: stats.loss,
                accuracy: stats.accuracy,
            });
        }
    }
    Ok(curve)
}

/// Stage 1 at the simulated cloud: trains the main block and exit 1 on
/// the full training split with cross-entropy at exit 1.
pub fn train_main(
    net: &mut MeaNet,
    train: &Dataset,
    val: Option<&Dataset>,
    params: &TrainParams,
) -> Result<TrainingCurve> {
    if train.dim != net.config.input_dim || train.num_classes != net.config.num_classes {
        return Err(Error::ShapeMismatch(format!(
            "dataset ({} dims, {} classes) does not fit the model ({}, {})",
            train.dim, train.num_classes, net.config.input_dim, net.config.num_classes
        )));
    }
    if net.main_frozen() {
        return Err(Error::ContractViolation(
            "main block is frozen; stage-1 training is no longer possible".into(),
        ));
    }
    // Train main + exit1 as one chain, then put the pieces back.
    let mut chain: Vec<DenseLayer> = std::mem::take(&mut net.main);
    let placeholder =
        DenseLayer::from_parts(1, 1, vec![0.0], vec![0.0], crate::nn::Activation::Identity)?;
    chain.push(std::mem::replace(&mut net.exit1, placeholder));
    let outcome = train_chain(&mut chain, train, val, params);
    net.exit1 = chain.pop().expect("exit1 was pushed above");
    net.main = chain;
    outcome
}

/// Trains a standalone dense classifier (the cloud model, or a feature
/// tail) with cross-entropy.
pub fn train_classifier(
    model: &mut Classifier,
    train: &Dataset,
    val: Option<&Dataset>,
    params: &TrainParams,
) -> Result<TrainingCurve> {
    if train.dim != model.input_dim || train.num_classes != model.num_classes {
        return Err(Error::ShapeMismatch(format!(
            "dataset ({} dims, {} classes) does not fit the classifier ({}, {})",
            train.dim, train.num_classes, model.input_dim, model.num_classes
        )));
    }
    train_chain(&mut model.layers, train, val, params)
}

/// Fails unless the cloud spec is strictly larger than the edge main
/// path: at least as deep, with more total parameters.
pub fn ensure_cloud_larger(cloud_spec: &BlockSpec, mea: &MeaConfig) -> Result<()> {
    if cloud_spec.depth() < mea.main.depth() {
        return Err(Error::Config(format!(
            "cloud depth {} is shallower than the edge main block ({})",
            cloud_spec.depth(),
            mea.main.depth()
        )));
    }
    let chain_params = |input: usize, widths: &[usize], classes: usize| -> usize {
        let mut total = 0;
        let mut in_dim = input;
        for &w in widths {
            total += in_dim * w + w;
            in_dim = w;
        }
        total + in_dim * classes + classes
    };
    let cloud = chain_params(mea.input_dim, &cloud_spec.layer_widths, mea.num_classes);
    let edge_main = chain_params(mea.input_dim, &mea.main.layer_widths, mea.num_classes);
    if cloud <= edge_main {
        return Err(Error::Config(format!(
            "cloud parameter count {cloud} must exceed the edge main path ({edge_main})"
        )));
    }
    Ok(())
}

/// Trains the deep cloud classifier on raw inputs.
pub fn train_cloud(
    spec: &BlockSpec,
    train: &Dataset,
    val: Option<&Dataset>,
    params: &TrainParams,
    seed: u64,
) -> Result<(Classifier, TrainingCurve)> {
    let mut model = arch::build_classifier(train.dim, spec, train.num_classes, seed)?;
    let curve = train_classifier(&mut model, train, val, params)?;
    Ok((model, curve))
}

/// Trains a cloud-side tail classifier on the edge's features `F`, for
/// the feature-offload collaboration mode.
pub fn train_feature_tail(
    net: &MeaNet,
    spec: &BlockSpec,
    train: &Dataset,
    val: Option<&Dataset>,
    params: &TrainParams,
    seed: u64,
) -> Result<(Classifier, TrainingCurve)> {
    let feature_set = |data: &Dataset| -> Result<Dataset> {
        let mut features = Vec::with_capacity(data.len() * net.config.feature_dim);
        for i in 0..data.len() {
            let (_, f) = net.forward_main(data.row(i))?;
            features.extend(f);
        }
        Dataset::new(
            net.config.feature_dim,
            data.num_classes,
            features,
            data.labels().to_vec(),
            format!("features of ({})", data.provenance),
        )
    };
    let feat_train = feature_set(train)?;
    let feat_val = val.map(feature_set).transpose()?;
    let mut model = arch::build_classifier(net.config.feature_dim, spec, train.num_classes, seed)?;
    let curve = train_classifier(&mut model, &feat_train, feat_val.as_ref(), params)?;
    Ok((model, curve))
}

/// Per-instance loss, hit, and gradients of the extension path
/// (adaptive -> merge -> extension -> exit 2) with the main block fixed.
/// Gradient layout: adaptive layers, extension layers, exit 2.
fn extension_instance_grads(
    net: &MeaNet,
    x: &[f64],
    hard_label: usize,
) -> Result<(f64, bool, Gradients)> {
    let features = stack_eval(&net.main, x)?;
    let adaptive_trace = stack_forward(&net.adaptive, x)?;
    let f2 = adaptive_trace.output().to_vec();
    let merged = net.merge_features(&features, &f2)?;
    let ext_chain = || net.extension.iter().chain(std::iter::once(&net.exit2));
    let ext_trace = stack_forward(ext_chain(), &merged)?;
    let logits = ext_trace.output();
    let (loss, dlogits) = cross_entropy_slice(logits, hard_label)?;
    let hit = argmax(logits) == hard_label;
    let (ext_grads, d_merged) = stack_backward(ext_chain(), &ext_trace, &dlogits)?;
    let d = net.config.feature_dim;
    let d_f2: &[f64] = match net.config.merge {
        Merge::Sum => &d_merged,
        Merge::Concat => &d_merged[d..],
    };
    let (adaptive_grads, _) = stack_backward(&net.adaptive, &adaptive_trace, d_f2)?;
    let mut layers = adaptive_grads.layers;
    layers.extend(ext_grads.layers);
    Ok((loss, hit, Gradients { layers }))
}

/// Stage 2 at the edge: blockwise training of the adaptive and extension
/// blocks on the remapped hard subset. The main block must already be
/// frozen; only adaptive/extension/exit-2 parameters change.
pub fn train_extension_adaptive(
    net: &mut MeaNet,
    hard_train: &Dataset,
    hard_val: Option<&Dataset>,
    params: &TrainParams,
) -> Result<TrainingCurve> {
    params.validate()?;
    if !net.main_frozen() {
        return Err(Error::ContractViolation(
            "main block must be frozen before blockwise training".into(),
        ));
    }
    if hard_train.is_empty() {
        return Err(Error::InvalidInput(
            "hard subset is empty; nothing to train the extension on".into(),
        ));
    }
    if hard_train.num_classes != net.config.num_hard || hard_train.dim != net.config.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "hard subset ({} dims, {} classes) does not fit exit 2 ({}, {})",
            hard_train.dim, hard_train.num_classes, net.config.input_dim, net.config.num_hard
        )));
    }

    let mut sgd = Sgd::new(params.sgd.clone())?;
    let mut shuffle_rng = crate::seeded_rng(params.sgd.seed);
    let mut indices: Vec<usize> = (0..hard_train.len()).collect();
    let mut curve = Vec::new();

    for epoch in 0..params.epochs {
        indices.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in indices.chunks(params.batch_size) {
            let mut batch_grads: Option<Gradients> = None;
            for &i in batch {
                let (loss, hit, grads) =
                    extension_instance_grads(net, hard_train.row(i), hard_train.label(i))?;
                loss_sum += loss;
                correct += hit as usize;
                match &mut batch_grads {
                    None => batch_grads = Some(grads),
                    Some(acc) => acc.accumulate(&grads)?,
                }
            }
            let mut grads = batch_grads.expect("chunks are non-empty");
            grads.scale(1.0 / batch.len() as f64);
            let mut layer_refs: Vec<&mut DenseLayer> = net
                .adaptive
                .iter_mut()
                .chain(net.extension.iter_mut())
                .chain(std::iter::once(&mut net.exit2))
                .collect();
            sgd.step(&mut layer_refs, &grads, epoch)?;
        }
        curve.push(CurvePoint {
            epoch,
            split: Split::Train,
            loss: loss_sum / hard_train.len() as f64,
            accuracy: correct as f64 / hard_train.len() as f64,
        });
        if let Some(val) = hard_val {
            let stats = evaluate_extension(net, val)?;
            curve.push(CurvePoint {
                epoch,
                split: Split::Val,
                loss: stats.loss,
                accuracy: stats.accuracy,
            });
        }
    }
    Ok(curve)
}

/// Exit-2 evaluation on a remapped hard dataset.
pub fn evaluate_extension(net: &MeaNet, hard_data: &Dataset) -> Result<EvalStats> {
    if hard_data.is_empty() {
        return Err(Error::InvalidInput("evaluation on an empty dataset".into()));
    }
    let mut loss_sum = 0.0;
    let mut correct = 0;
    let mut predictions = Vec::with_capacity(hard_data.len());
    for i in 0..hard_data.len() {
        let x = hard_data.row(i);
        let (_, features) = net.forward_main(x)?;
        let f2 = net.forward_adaptive(x)?;
        let logits = net.forward_extension(&features, &f2)?;
        let (loss, _) = cross_entropy_slice(&logits, hard_data.label(i))?;
        loss_sum += loss;
        let pred = argmax(&logits);
        predictions.push(pred);
        if pred == hard_data.label(i) {
            correct += 1;
        }
    }
    Ok(EvalStats {
        loss: loss_sum / hard_data.len() as f64,
        accuracy: correct as f64 / hard_data.len() as f64,
        predictions,
    })
}

/// Everything the full pipeline needs beyond the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub mea: MeaConfig,
    pub cloud_spec: BlockSpec,
    pub main_params: TrainParams,
    pub cloud_params: TrainParams,
    pub extension_params: TrainParams,
    /// Fraction of the training data held out for validation before
    /// stage 1 (used for class ranking and threshold calibration).
    pub val_fraction: f64,
    pub split_seed: u64,
    /// Seeds model initialization; the cloud model derives its own
    /// stream from this.
    pub build_seed: u64,
    /// When set, the selected partition is serialized here — the
    /// explicit edge hand-off between the cloud and edge stages.
    pub partition_path: Option<PathBuf>,
}

/// Outputs and intermediate artifacts of one full pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub net: MeaNet,
    pub partition: ClassPartition,
    pub cloud: Classifier,
    pub class_stats: ClassStats,
    /// Copy of (main, exit1) taken right after stage 1, before
    /// freezing, for byte-identity checks.
    pub main_snapshot: (Vec<DenseLayer>, DenseLayer),
    pub main_curve: TrainingCurve,
    pub cloud_curve: TrainingCurve,
    pub extension_curve: TrainingCurve,
    pub train: Dataset,
    pub val: Dataset,
    pub hard_subset_size: usize,
}

/// Runs the full distributed-training pipeline:
/// split, train main and cloud, rank classes on validation, serialize
/// the partition, filter and remap the hard subset, freeze the main
/// block, and train the adaptive and extension blocks.
pub fn run_algorithm1(dataset: &Dataset, params: &PipelineParams) -> Result<PipelineOutput> {
    let (train, val) = split_train_val(dataset, params.val_fraction, params.split_seed)?;

    let mut net = arch::build(&params.mea, params.build_seed)?;
    let main_curve = train_main(&mut net, &train, Some(&val), &params.main_params)?;

    ensure_cloud_larger(&params.cloud_spec, &params.mea)?;
    let (cloud, cloud_curve) = train_cloud(
        &params.cloud_spec,
        &train,
        Some(&val),
        &params.cloud_params,
        params.build_seed.wrapping_add(1),
    )?;

    let val_eval = evaluate_main(&net, &val)?;
    let class_stats = build_class_stats(&val_eval.predictions, val.labels(), val.num_classes)?;
    let partition = select_hard_classes(&class_stats, params.mea.num_hard)?;

    if let Some(path) = &params.partition_path {
        crate::checkpoint::save_partition(&partition, path)?;
    }

    let (hard_indices, hard_labels) = filter_hard_subset(train.labels(), &partition)?;
    let hard_train = train.select(&hard_indices, Some((&hard_labels, partition.num_hard())))?;
    let (val_hard_indices, val_hard_labels) = filter_hard_subset(val.labels(), &partition)?;
    let hard_val = if val_hard_indices.is_empty() {
        None
    } else {
        Some(val.select(
            &val_hard_indices,
            Some((&val_hard_labels, partition.num_hard())),
        )?)
    };

    let main_snapshot = (net.main.clone(), net.exit1.clone());
    net.freeze_main();
    let extension_curve = train_extension_adaptive(
        &mut net,
        &hard_train,
        hard_val.as_ref(),
        &params.extension_params,
    )?;

    Ok(PipelineOutput {
        net,
        partition,
        cloud,
        class_stats,
        main_snapshot,
        main_curve,
        cloud_curve,
        extension_curve,
        train,
        val,
        hard_subset_size: hard_indices.len(),
    })
}

/// Convenience used by tests and the CLI: hard-class accuracy of a
/// prediction vector against true labels, over instances whose true
/// class is hard.
pub fn hard_class_accuracy(
    predictions: &[usize],
    labels: &[usize],
    partition: &ClassPartition,
) -> Option<f64> {
    let mut hits = 0;
    let mut total = 0;
    for (&p, &y) in predictions.iter().zip(labels) {
        if partition.is_hard_class(y) {
            total += 1;
            if p == y {
                hits += 1;
            }
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}
