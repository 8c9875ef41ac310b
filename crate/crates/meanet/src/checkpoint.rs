//! Versioned, bit-exact serialization of models and partitions.
//!
//! Checkpoints are JSON with an explicit version field. Floats are
//! written in shortest round-trip decimal form, so a load reproduces
//! every parameter bit-for-bit. Non-finite parameters cannot be
//! represented in JSON and are rejected at save time instead of being
//! silently mangled.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arch::{Classifier, MeaNet};
use crate::complexity::ClassPartition;
use crate::error::{Error, Result};
use crate::nn::DenseLayer;

pub const MEA_CHECKPOINT_VERSION: u32 = 1;
pub const CLASSIFIER_CHECKPOINT_VERSION: u32 = 1;
pub const PARTITION_FILE_VERSION: u32 = 1;

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    serde_json::to_writer(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

fn ensure_finite<'a>(layers: impl IntoIterator<Item = &'a DenseLayer>, what: &str) -> Result<()> {
    for (idx, layer) in layers.into_iter().enumerate() {
        if layer
            .weights
            .iter()
            .chain(&layer.bias)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Checkpoint(format!(
                "{what} layer {idx} contains non-finite parameters; refusing to serialize"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Edge model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeaCheckpoint {
    pub version: u32,
    pub net: MeaNet,
}

pub fn save_mea(net: &MeaNet, path: &Path) -> Result<()> {
    ensure_finite(net.main.iter().chain(std::iter::once(&net.exit1)), "main")?;
    ensure_finite(&net.adaptive, "adaptive")?;
    ensure_finite(
        net.extension.iter().chain(std::iter::once(&net.exit2)),
        "extension",
    )?;
    write_json(
        &MeaCheckpoint {
            version: MEA_CHECKPOINT_VERSION,
            net: net.clone(),
        },
        path,
    )
}

pub fn load_mea(path: &Path) -> Result<MeaNet> {
    let ckpt: MeaCheckpoint = serde_json::from_slice(&fs::read(path)?)?;
    if ckpt.version != MEA_CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported model checkpoint version {} (expected {MEA_CHECKPOINT_VERSION})",
            ckpt.version
        )));
    }
    ckpt.net.config.validate()?;
    Ok(ckpt.net)
}

// ---------------------------------------------------------------------------
// Cloud classifiers
// ---------------------------------------------------------------------------

/// What a standalone classifier checkpoint consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    /// Raw-input cloud model.
    Raw,
    /// Cloud tail that consumes edge features.
    FeatureTail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierCheckpoint {
    pub version: u32,
    pub kind: ClassifierKind,
    pub model: Classifier,
}

pub fn save_classifier(model: &Classifier, kind: ClassifierKind, path: &Path) -> Result<()> {
    ensure_finite(&model.layers, "classifier")?;
    write_json(
        &ClassifierCheckpoint {
            version: CLASSIFIER_CHECKPOINT_VERSION,
            kind,
            model: model.clone(),
        },
        path,
    )
}

pub fn load_classifier(path: &Path) -> Result<(Classifier, ClassifierKind)> {
    let ckpt: ClassifierCheckpoint = serde_json::from_slice(&fs::read(path)?)?;
    if ckpt.version != CLASSIFIER_CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported classifier checkpoint version {} (expected {CLASSIFIER_CHECKPOINT_VERSION})",
            ckpt.version
        )));
    }
    Ok((ckpt.model, ckpt.kind))
}

// ---------------------------------------------------------------------------
// Class partition
// ---------------------------------------------------------------------------

/// On-disk form of a partition: class list, hard set, and the explicit
/// dictionary. This file is the hand-off the edge downloads after the
/// cloud ranks classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub version: u32,
    pub num_classes: usize,
    /// All class ids, `0..num_classes`.
    pub all_classes: Vec<usize>,
    pub hard_classes: Vec<usize>,
    /// `(original_class, hard_label)` pairs in ascending original order.
    pub class_dict: Vec<(usize, usize)>,
}

pub fn save_partition(partition: &ClassPartition, path: &Path) -> Result<()> {
    let class_dict = partition
        .hard_classes
        .iter()
        .enumerate()
        .map(|(hard_label, &original)| (original, hard_label))
        .collect();
    write_json(
        &PartitionFile {
            version: PARTITION_FILE_VERSION,
            num_classes: partition.num_classes,
            all_classes: (0..partition.num_classes).collect(),
            hard_classes: partition.hard_classes.clone(),
            class_dict,
        },
        path,
    )
}

pub fn load_partition(path: &Path) -> Result<ClassPartition> {
    let file: PartitionFile = serde_json::from_slice(&fs::read(path)?)?;
    if file.version != PARTITION_FILE_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported partition file version {} (expected {PARTITION_FILE_VERSION})",
            file.version
        )));
    }
    let partition = ClassPartition::new(file.num_classes, file.hard_classes.clone())?;
    // The class list and dictionary are redundant with num_classes and
    // the hard set; reject a file where they disagree rather than
    // guessing which side wins.
    if file.all_classes != (0..file.num_classes).collect::<Vec<_>>() {
        return Err(Error::Checkpoint(
            "partition file class list does not cover 0..num_classes".into(),
        ));
    }
    let expected: Vec<(usize, usize)> = partition
        .hard_classes
        .iter()
        .enumerate()
        .map(|(hard_label, &original)| (original, hard_label))
        .collect();
    if file.class_dict != expected {
        return Err(Error::Checkpoint(
            "partition file dictionary disagrees with its hard set".into(),
        ));
    }
    Ok(partition)
}
