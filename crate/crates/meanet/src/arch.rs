//! The tripartite edge network.
//!
//! Three dense blocks: a *main* block producing features `F` and exit-1
//! logits over all classes, a shallow *adaptive* block mapping the raw
//! input to `f2` (same width as `F`), and an *extension* block consuming
//! the merged features with exit-2 logits over the hard classes only.
//! The adaptive block gives the extension a backpropagation path that
//! does not depend on the frozen main block.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{stack_eval, Activation, DenseLayer};

/// How `F` and `f2` are combined before the extension block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Merge {
    /// Element-wise sum; requires the adaptive output width to equal the
    /// feature width.
    Sum,
    /// Concatenation; the extension's first layer sees twice the feature
    /// width.
    Concat,
}

/// Construction style of the edge network.
///
/// Variant A splits one backbone stack: the front becomes the main block
/// (with a freshly created exit), the back becomes the extension block
/// whose classifier is retrained over the hard classes. Variant B keeps
/// the complete backbone as the main block and appends fresh adaptive
/// and extension blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    A,
    B,
}

/// Widths and activations of one dense block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub layer_widths: Vec<usize>,
    /// One activation per layer; same length as `layer_widths`.
    pub activations: Vec<Activation>,
}

impl BlockSpec {
    /// All-relu block over the given widths.
    pub fn relu(layer_widths: Vec<usize>) -> Self {
        let activations = vec![Activation::Relu; layer_widths.len()];
        Self {
            layer_widths,
            activations,
        }
    }

    pub fn depth(&self) -> usize {
        self.layer_widths.len()
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.layer_widths.contains(&0) {
            return Err(Error::Config(format!("{name} block has a zero width")));
        }
        if self.layer_widths.len() != self.activations.len() {
            return Err(Error::Config(format!(
                "{name} block has {} widths but {} activations",
                self.layer_widths.len(),
                self.activations.len()
            )));
        }
        Ok(())
    }

    /// Materializes the block as seeded dense layers chained from
    /// `input_dim`.
    fn build(&self, input_dim: usize, rng: &mut crate::Rng) -> Vec<DenseLayer> {
        let mut layers = Vec::with_capacity(self.layer_widths.len());
        let mut in_dim = input_dim;
        for (&w, &act) in self.layer_widths.iter().zip(&self.activations) {
            layers.push(DenseLayer::new_seeded(in_dim, w, act, rng));
            in_dim = w;
        }
        layers
    }
}

/// Full configuration of the tripartite network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeaConfig {
    pub variant: Variant,
    pub merge: Merge,
    pub input_dim: usize,
    /// Width of the main block's output features `F` (and of `f2`).
    pub feature_dim: usize,
    pub num_classes: usize,
    pub num_hard: usize,
    pub main: BlockSpec,
    pub adaptive: BlockSpec,
    pub extension: BlockSpec,
}

impl MeaConfig {
    /// Variant A: split one backbone's widths at `split_at`; the front
    /// becomes the main block, the back the extension block. The feature
    /// width is the width at the split point.
    pub fn variant_a(
        input_dim: usize,
        backbone_widths: &[usize],
        split_at: usize,
        adaptive: BlockSpec,
        num_classes: usize,
        num_hard: usize,
        merge: Merge,
    ) -> Result<Self> {
        if split_at == 0 || split_at >= backbone_widths.len() {
            return Err(Error::Config(format!(
                "split_at {split_at} must leave both a main and an extension part of a {}-layer stack",
                backbone_widths.len()
            )));
        }
        let cfg = Self {
            variant: Variant::A,
            merge,
            input_dim,
            feature_dim: backbone_widths[split_at - 1],
            num_classes,
            num_hard,
            main: BlockSpec::relu(backbone_widths[..split_at].to_vec()),
            adaptive,
            extension: BlockSpec::relu(backbone_widths[split_at..].to_vec()),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Variant B: the complete backbone is the main block; adaptive and
    /// extension blocks are fresh additions.
    pub fn variant_b(
        input_dim: usize,
        main: BlockSpec,
        adaptive: BlockSpec,
        extension: BlockSpec,
        num_classes: usize,
        num_hard: usize,
        merge: Merge,
    ) -> Result<Self> {
        let feature_dim = *main
            .layer_widths
            .last()
            .ok_or_else(|| Error::Config("main block must have at least one layer".into()))?;
        let cfg = Self {
            variant: Variant::B,
            merge,
            input_dim,
            feature_dim,
            num_classes,
            num_hard,
            main,
            adaptive,
            extension,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Input width of the extension block's first layer.
    pub fn extension_input_dim(&self) -> usize {
        match self.merge {
            Merge::Sum => self.feature_dim,
            Merge::Concat => 2 * self.feature_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.feature_dim == 0 {
            return Err(Error::Config(
                "input_dim and feature_dim must be positive".into(),
            ));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.num_hard == 0 || self.num_hard > self.num_classes {
            return Err(Error::Config(format!(
                "num_hard {} must lie in 1..={}",
                self.num_hard, self.num_classes
            )));
        }
        self.main.validate("main")?;
        self.adaptive.validate("adaptive")?;
        self.extension.validate("extension")?;
        if self.main.depth() == 0 {
            return Err(Error::Config(
                "main block must have at least one layer".into(),
            ));
        }
        if self.main.layer_widths.last() != Some(&self.feature_dim) {
            return Err(Error::Config(format!(
                "main block must end at feature_dim {}, ends at {:?}",
                self.feature_dim,
                self.main.layer_widths.last()
            )));
        }
        // The adaptive block is the lightweight twin of the main block:
        // strictly shallower, same output width.
        if self.adaptive.depth() == 0 || self.adaptive.depth() >= self.main.depth() {
            return Err(Error::Config(format!(
                "adaptive depth {} must be in 1..{} (shallower than the main block)",
                self.adaptive.depth(),
                self.main.depth()
            )));
        }
        if self.adaptive.layer_widths.last() != Some(&self.feature_dim) {
            return Err(Error::Config(format!(
                "adaptive block must end at feature_dim {} so its output merges with F",
                self.feature_dim
            )));
        }
        Ok(())
    }
}

/// The built tripartite network. Exits are identity layers producing
/// logits; exit 1 spans all classes, exit 2 spans the hard classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeaNet {
    pub config: MeaConfig,
    pub main: Vec<DenseLayer>,
    pub exit1: DenseLayer,
    pub adaptive: Vec<DenseLayer>,
    pub extension: Vec<DenseLayer>,
    pub exit2: DenseLayer,
}

/// Builds a network from a validated config with seeded initialization.
pub fn build(config: &MeaConfig, seed: u64) -> Result<MeaNet> {
    config.validate()?;
    let mut rng = crate::seeded_rng(seed);
    let main = config.main.build(config.input_dim, &mut rng);
    let exit1 = DenseLayer::new_seeded(
        config.feature_dim,
        config.num_classes,
        Activation::Identity,
        &mut rng,
    );
    let adaptive = config.adaptive.build(config.input_dim, &mut rng);
    let extension = config
        .extension
        .build(config.extension_input_dim(), &mut rng);
    let exit2_in = config
        .extension
        .layer_widths
        .last()
        .copied()
        .unwrap_or_else(|| config.extension_input_dim());
    let exit2 = DenseLayer::new_seeded(exit2_in, config.num_hard, Activation::Identity, &mut rng);
    Ok(MeaNet {
        config: config.clone(),
        main,
        exit1,
        adaptive,
        extension,
        exit2,
    })
}

impl MeaNet {
    /// Main-block pass: exit-1 logits over all classes and the features
    /// `F` feeding both the exit and the extension path.
    pub fn forward_main(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.config.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "input has {} values, model expects {}",
                x.len(),
                self.config.input_dim
            )));
        }
        let features = stack_eval(&self.main, x)?;
        let logits = stack_eval(std::iter::once(&self.exit1), &features)?;
        Ok((logits, features))
    }

    /// Adaptive-block pass on the raw input.
    pub fn forward_adaptive(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.config.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "input has {} values, model expects {}",
                x.len(),
                self.config.input_dim
            )));
        }
        stack_eval(&self.adaptive, x)
    }

    /// Combines `F` and `f2` according to the configured merge mode.
    pub fn merge_features(&self, features: &[f64], f2: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.config.feature_dim || f2.len() != self.config.feature_dim {
            return Err(Error::ShapeMismatch(format!(
                "merge expects two vectors of {} values, got {} and {}",
                self.config.feature_dim,
                features.len(),
                f2.len()
            )));
        }
        Ok(match self.config.merge {
            Merge::Sum => features.iter().zip(f2).map(|(a, b)| a + b).collect(),
            Merge::Concat => features.iter().chain(f2).copied().collect(),
        })
    }

    /// Extension pass: exit-2 logits over the hard classes from the
    /// merged features.
    pub fn forward_extension(&self, features: &[f64], f2: &[f64]) -> Result<Vec<f64>> {
        let merged = self.merge_features(features, f2)?;
        let hidden = stack_eval(&self.extension, &merged)?;
        stack_eval(std::iter::once(&self.exit2), &hidden)
    }

    /// Freezes the main block and exit 1. There is no unfreeze: once
    /// fixed, those parameters never change again.
    pub fn freeze_main(&mut self) {
        for layer in &mut self.main {
            layer.frozen = true;
        }
        self.exit1.frozen = true;
    }

    pub fn main_frozen(&self) -> bool {
        self.main.iter().all(|l| l.frozen) && self.exit1.frozen
    }

    /// Named blocks in a fixed order, for accounting and reports.
    pub fn blocks(&self) -> [(&'static str, Vec<&DenseLayer>); 5] {
        [
            ("main", self.main.iter().collect()),
            ("exit1", vec![&self.exit1]),
            ("adaptive", self.adaptive.iter().collect()),
            ("extension", self.extension.iter().collect()),
            ("exit2", vec![&self.exit2]),
        ]
    }

    fn all_layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.main
            .iter()
            .chain(std::iter::once(&self.exit1))
            .chain(self.adaptive.iter())
            .chain(self.extension.iter())
            .chain(std::iter::once(&self.exit2))
    }

    /// `(fixed, trained)` parameter counts, partitioned by frozen flag.
    pub fn count_params(&self) -> (usize, usize) {
        let mut fixed = 0;
        let mut trained = 0;
        for layer in self.all_layers() {
            if layer.frozen {
                fixed += layer.param_count();
            } else {
                trained += layer.param_count();
            }
        }
        (fixed, trained)
    }

    /// `(fixed, trained)` multiply-add counts per forward pass,
    /// partitioned by frozen flag.
    pub fn count_macs(&self) -> (usize, usize) {
        let mut fixed = 0;
        let mut trained = 0;
        for layer in self.all_layers() {
            if layer.frozen {
                fixed += layer.mac_count();
            } else {
                trained += layer.mac_count();
            }
        }
        (fixed, trained)
    }
}

/// A plain dense classifier: hidden stack plus an identity exit layer
/// emitting one logit per class. Used for the cloud model and for
/// feature-tail models in the feature-offload mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub input_dim: usize,
    pub num_classes: usize,
    /// Hidden layers followed by the identity exit layer.
    pub layers: Vec<DenseLayer>,
}

/// Builds a seeded classifier from a block spec.
pub fn build_classifier(
    input_dim: usize,
    spec: &BlockSpec,
    num_classes: usize,
    seed: u64,
) -> Result<Classifier> {
    spec.validate("classifier")?;
    if input_dim == 0 || num_classes < 2 {
        return Err(Error::Config(format!(
            "classifier needs positive input_dim and >=2 classes, got {input_dim} and {num_classes}"
        )));
    }
    let mut rng = crate::seeded_rng(seed);
    let mut layers = spec.build(input_dim, &mut rng);
    let exit_in = spec.layer_widths.last().copied().unwrap_or(input_dim);
    layers.push(DenseLayer::new_seeded(
        exit_in,
        num_classes,
        Activation::Identity,
        &mut rng,
    ));
    Ok(Classifier {
        input_dim,
        num_classes,
        layers,
    })
}

impl Classifier {
    /// Logits for one instance.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "input has {} values, classifier expects {}",
                x.len(),
                self.input_dim
            )));
        }
        stack_eval(&self.layers, x)
    }

    /// Argmax prediction for one instance.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(crate::nn::argmax(&self.logits(x)?))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }
}
