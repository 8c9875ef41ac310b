//! Experiment configuration: one TOML file with a section per module.
//!
//! Every hyperparameter of a run lives here; commands take the file plus
//! a handful of flags. A master `--seed` can override every seed in the
//! file at once so reruns and determinism checks need a single knob.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use meanet::arch::{BlockSpec, MeaConfig, Merge, Variant};
use meanet::cost::EnergyParams;
use meanet::data::{gen_synthetic, load_csv, load_idx, Dataset, SyntheticSpec};
use meanet::error::{Error, Result};
use meanet::nn::SgdConfig;
use meanet::trainer::TrainParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Synthetic,
    Csv,
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,

    // Synthetic generator.
    pub classes: Option<usize>,
    pub dim: Option<usize>,
    pub train_samples_per_class: Option<usize>,
    pub test_samples_per_class: Option<usize>,
    pub separation: Option<f64>,
    pub overlap: Option<f64>,
    pub hard_count: Option<usize>,
    #[serde(default)]
    pub data_seed: u64,
    /// Seed of the held-out test generation; defaults to `data_seed + 400`.
    pub test_seed: Option<u64>,

    // File-backed datasets.
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
}

fn default_val_fraction() -> f64 {
    0.10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_variant")]
    pub variant: String,
    #[serde(default = "default_merge")]
    pub merge: String,
    pub input_dim: usize,
    pub num_classes: usize,
    /// Defaults to half the classes.
    pub num_hard: Option<usize>,
    pub main_widths: Vec<usize>,
    pub adaptive_widths: Vec<usize>,
    pub extension_widths: Vec<usize>,
    #[serde(default)]
    pub build_seed: u64,
}

fn default_variant() -> String {
    "B".into()
}

fn default_merge() -> String {
    "sum".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdSection {
    pub lr: f64,
    #[serde(default)]
    pub milestones: Vec<usize>,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_decay() -> f64 {
    0.1
}

fn default_momentum() -> f64 {
    0.9
}

fn default_batch_size() -> usize {
    16
}

impl SgdSection {
    pub fn train_params(&self) -> TrainParams {
        TrainParams {
            sgd: SgdConfig {
                initial_lr: self.lr,
                milestones: self.milestones.clone(),
                decay_factor: self.decay,
                momentum: self.momentum,
                seed: self.seed,
            },
            epochs: self.epochs,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdGroup {
    pub main: SgdSection,
    pub cloud: SgdSection,
    pub extension: SgdSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudSection {
    pub widths: Vec<usize>,
    /// Hidden widths of the feature-tail model (input is the edge
    /// feature width).
    #[serde(default = "default_tail_widths")]
    pub feature_tail_widths: Vec<usize>,
    #[serde(default)]
    pub build_seed: u64,
}

fn default_tail_widths() -> Vec<usize> {
    vec![16]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RouterSection {
    /// Entropy threshold; when absent, the midpoint of the calibrated
    /// range is used.
    pub threshold: Option<f64>,
    #[serde(default)]
    pub failure_rate: f64,
    #[serde(default)]
    pub failure_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    #[serde(default = "default_upload_mbps")]
    pub upload_mbps: f64,
    #[serde(default = "default_gpu_power")]
    pub gpu_power_w: f64,
    #[serde(default = "default_compute_time")]
    pub compute_time_ms: f64,
    /// Raw payload bytes per instance; defaults to 8 bytes per input
    /// feature.
    pub image_bytes: Option<f64>,
    /// Feature payload bytes; defaults to 8 bytes per feature component.
    pub feature_bytes: Option<f64>,
    /// Per-instance cloud compute cost for the analytic table rows (the
    /// edge-side energy accounting prices it at zero).
    #[serde(default)]
    pub cloud_cost_mj: f64,
    /// Fraction of layers at the edge in split mode.
    pub q: Option<f64>,
}

fn default_upload_mbps() -> f64 {
    18.88
}

fn default_gpu_power() -> f64 {
    56.0
}

fn default_compute_time() -> f64 {
    0.056
}

impl Default for CostSection {
    fn default() -> Self {
        Self {
            upload_mbps: default_upload_mbps(),
            gpu_power_w: default_gpu_power(),
            compute_time_ms: default_compute_time(),
            image_bytes: None,
            feature_bytes: None,
            cloud_cost_mj: 0.0,
            q: None,
        }
    }
}

/// The whole experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub sgd: SgdGroup,
    pub cloud: CloudSection,
    #[serde(default)]
    pub router: RouterSection,
    #[serde(default)]
    pub cost: CostSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.fill_defaults();
        config.validate()?;
        Ok(config)
    }

    fn fill_defaults(&mut self) {
        if self.model.num_hard.is_none() {
            // Half of the classes by default.
            self.model.num_hard = Some((self.model.num_classes / 2).max(1));
        }
        if self.dataset.test_seed.is_none() {
            self.dataset.test_seed = Some(self.dataset.data_seed + 400);
        }
    }

    /// Replaces every seed with streams derived from one master seed.
    pub fn override_seeds(&mut self, master: u64) {
        self.dataset.data_seed = master;
        self.dataset.test_seed = Some(master.wrapping_add(400));
        self.dataset.split_seed = master.wrapping_add(1);
        self.model.build_seed = master.wrapping_add(2);
        self.sgd.main.seed = master.wrapping_add(3);
        self.sgd.cloud.seed = master.wrapping_add(4);
        self.sgd.extension.seed = master.wrapping_add(5);
        self.router.failure_seed = master.wrapping_add(6);
        self.cloud.build_seed = master.wrapping_add(7);
    }

    pub fn validate(&self) -> Result<()> {
        self.mea_config()?;
        for section in [&self.sgd.main, &self.sgd.cloud, &self.sgd.extension] {
            section.train_params().validate()?;
        }
        meanet::trainer::ensure_cloud_larger(&self.cloud_spec(), &self.mea_config()?)?;
        if !(self.dataset.val_fraction > 0.0 && self.dataset.val_fraction < 1.0) {
            return Err(Error::Config(format!(
                "val_fraction must lie in (0,1), got {}",
                self.dataset.val_fraction
            )));
        }
        if self.dataset.kind == DatasetKind::Synthetic {
            self.synthetic_spec(SyntheticSplit::Train)?;
        }
        self.energy_params()?.validate()?;
        Ok(())
    }

    pub fn mea_config(&self) -> Result<MeaConfig> {
        let variant = match self.model.variant.as_str() {
            "A" | "a" => Variant::A,
            "B" | "b" => Variant::B,
            other => {
                return Err(Error::Config(format!(
                    "unknown variant {other:?}; expected A or B"
                )))
            }
        };
        let merge = match self.model.merge.as_str() {
            "sum" => Merge::Sum,
            "concat" => Merge::Concat,
            other => {
                return Err(Error::Config(format!(
                    "unknown merge {other:?}; expected sum or concat"
                )))
            }
        };
        let num_hard = self.model.num_hard.unwrap_or(self.model.num_classes / 2);
        let feature_dim = *self
            .model
            .main_widths
            .last()
            .ok_or_else(|| Error::Config("main_widths must not be empty".into()))?;
        let cfg = MeaConfig {
            variant,
            merge,
            input_dim: self.model.input_dim,
            feature_dim,
            num_classes: self.model.num_classes,
            num_hard,
            main: BlockSpec::relu(self.model.main_widths.clone()),
            adaptive: BlockSpec::relu(self.model.adaptive_widths.clone()),
            extension: BlockSpec::relu(self.model.extension_widths.clone()),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn cloud_spec(&self) -> BlockSpec {
        BlockSpec::relu(self.cloud.widths.clone())
    }

    pub fn feature_tail_spec(&self) -> BlockSpec {
        BlockSpec::relu(self.cloud.feature_tail_widths.clone())
    }

    pub fn synthetic_spec(&self, split: SyntheticSplit) -> Result<SyntheticSpec> {
        let d = &self.dataset;
        let need = |name: &str, v: Option<usize>| {
            v.ok_or_else(|| Error::Config(format!("synthetic dataset needs `{name}`")))
        };
        let spec = SyntheticSpec {
            num_classes: need("classes", d.classes)?,
            dim: need("dim", d.dim)?,
            samples_per_class: match split {
                SyntheticSplit::Train => {
                    need("train_samples_per_class", d.train_samples_per_class)?
                }
                SyntheticSplit::Test => need("test_samples_per_class", d.test_samples_per_class)?,
            },
            separation: d
                .separation
                .ok_or_else(|| Error::Config("synthetic dataset needs `separation`".into()))?,
            overlap: d.overlap.unwrap_or(0.0),
            hard_count: d
                .hard_count
                .unwrap_or_else(|| (d.classes.unwrap_or(2) / 2).max(1)),
            seed: match split {
                SyntheticSplit::Train => d.data_seed,
                SyntheticSplit::Test => d.test_seed.unwrap_or(d.data_seed + 400),
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Loads (or generates) the training-side dataset.
    pub fn train_dataset(&self, config_dir: &Path) -> Result<Dataset> {
        self.dataset_for(config_dir, SyntheticSplit::Train)
    }

    /// Loads (or generates) the held-out test dataset.
    pub fn test_dataset(&self, config_dir: &Path) -> Result<Dataset> {
        self.dataset_for(config_dir, SyntheticSplit::Test)
    }

    fn dataset_for(&self, config_dir: &Path, split: SyntheticSplit) -> Result<Dataset> {
        let d = &self.dataset;
        let resolve = |p: &PathBuf| -> PathBuf {
            if p.is_absolute() {
                p.clone()
            } else {
                config_dir.join(p)
            }
        };
        let need = |name: &str, v: &Option<PathBuf>| -> Result<PathBuf> {
            v.as_ref()
                .map(resolve)
                .ok_or_else(|| Error::Config(format!("{:?} dataset needs `{name}`", d.kind)))
        };
        let data = match d.kind {
            DatasetKind::Synthetic => gen_synthetic(&self.synthetic_spec(split)?)?,
            DatasetKind::Csv => {
                let path = match split {
                    SyntheticSplit::Train => need("train", &d.train)?,
                    SyntheticSplit::Test => need("test", &d.test)?,
                };
                load_csv(&path, Some(self.model.num_classes))?
            }
            DatasetKind::Idx => {
                let (images, labels) = match split {
                    SyntheticSplit::Train => (
                        need("train_images", &d.train_images)?,
                        need("train_labels", &d.train_labels)?,
                    ),
                    SyntheticSplit::Test => (
                        need("test_images", &d.test_images)?,
                        need("test_labels", &d.test_labels)?,
                    ),
                };
                load_idx(&images, &labels, Some(self.model.num_classes))?
            }
        };
        if data.dim != self.model.input_dim {
            return Err(Error::Config(format!(
                "dataset dim {} does not match model input_dim {}",
                data.dim, self.model.input_dim
            )));
        }
        Ok(data)
    }

    pub fn energy_params(&self) -> Result<EnergyParams> {
        let feature_dim = *self
            .model
            .main_widths
            .last()
            .ok_or_else(|| Error::Config("main_widths must not be empty".into()))?;
        Ok(EnergyParams {
            upload_mbps: self.cost.upload_mbps,
            gpu_power_w: self.cost.gpu_power_w,
            compute_time_ms: self.cost.compute_time_ms,
            image_bytes: self
                .cost
                .image_bytes
                .unwrap_or((self.model.input_dim * 8) as f64),
            feature_bytes: self
                .cost
                .feature_bytes
                .unwrap_or_else(|| EnergyParams::default_feature_bytes(feature_dim)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticSplit {
    Train,
    Test,
}
