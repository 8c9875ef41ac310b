//! Class-wise difficulty statistics and the easy/hard machinery.
//!
//! The main block's validation confusion matrix yields per-class
//! precision; the lowest-precision classes form the hard set. A bijective
//! dictionary remaps hard labels onto `0..num_hard` for the extension
//! exit, and the argmax-membership rule detects hard instances at
//! inference time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{argmax, softmax_slice};

/// Confusion counts and derived per-class precision / FDR.
///
/// Rows index the true class, columns the predicted class. Precision of
/// a never-predicted class is defined as 0, which ranks it hardest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub num_classes: usize,
    /// Row-major `num_classes x num_classes`; `confusion[true][pred]`.
    pub confusion: Vec<Vec<usize>>,
    pub per_class_precision: Vec<f64>,
    /// False discovery rate, exactly `1 - precision`.
    pub per_class_fdr: Vec<f64>,
}

impl ClassStats {
    /// Instances whose true class is `c`.
    pub fn support(&self, c: usize) -> usize {
        self.confusion[c].iter().sum()
    }

    /// Instances predicted as `c`.
    pub fn predicted_count(&self, c: usize) -> usize {
        self.confusion.iter().map(|row| row[c]).sum()
    }
}

/// Builds the confusion matrix and per-class precision/FDR from
/// prediction/label pairs.
pub fn build_class_stats(
    predictions: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> Result<ClassStats> {
    if predictions.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (i, (&pred, &label)) in predictions.iter().zip(labels).enumerate() {
        if pred >= num_classes || label >= num_classes {
            return Err(Error::InvalidInput(format!(
                "instance {i}: class out of range (pred {pred}, label {label}, K {num_classes})"
            )));
        }
        confusion[label][pred] += 1;
    }
    let mut per_class_precision = Vec::with_capacity(num_classes);
    let mut per_class_fdr = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        let predicted: usize = confusion.iter().map(|row| row[c]).sum();
        let precision = if predicted == 0 {
            0.0
        } else {
            confusion[c][c] as f64 / predicted as f64
        };
        per_class_precision.push(precision);
        per_class_fdr.push(1.0 - precision);
    }
    Ok(ClassStats {
        num_classes,
        confusion,
        per_class_precision,
        per_class_fdr,
    })
}

/// The hard-class set and its label dictionary.
///
/// `hard_classes` is sorted ascending; the dictionary maps original hard
/// labels onto `0..num_hard` in ascending original-class order, so
/// `inverse(dict(c)) == c` for every hard class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPartition {
    pub num_classes: usize,
    /// Hard class ids in ascending order; position is the remapped label.
    pub hard_classes: Vec<usize>,
}

impl ClassPartition {
    /// Builds a partition from an explicit hard set (deduplicated,
    /// sorted ascending).
    pub fn new(num_classes: usize, mut hard_classes: Vec<usize>) -> Result<Self> {
        hard_classes.sort_unstable();
        hard_classes.dedup();
        if hard_classes.is_empty() || hard_classes.len() > num_classes {
            return Err(Error::InvalidInput(format!(
                "hard set size {} must lie in 1..={num_classes}",
                hard_classes.len()
            )));
        }
        if let Some(&max) = hard_classes.last() {
            if max >= num_classes {
                return Err(Error::InvalidInput(format!(
                    "hard class {max} out of range for {num_classes} classes"
                )));
            }
        }
        Ok(Self {
            num_classes,
            hard_classes,
        })
    }

    pub fn num_hard(&self) -> usize {
        self.hard_classes.len()
    }

    pub fn is_hard_class(&self, c: usize) -> bool {
        self.hard_classes.binary_search(&c).is_ok()
    }

    /// Remapped label of an original hard class.
    pub fn class_dict(&self, original: usize) -> Option<usize> {
        self.hard_classes.binary_search(&original).ok()
    }

    /// Original class of a remapped hard label.
    pub fn inverse_dict(&self, hard_label: usize) -> Option<usize> {
        self.hard_classes.get(hard_label).copied()
    }
}

/// Picks the `num_hard` lowest-precision classes; ties break to the
/// lower class id.
pub fn select_hard_classes(stats: &ClassStats, num_hard: usize) -> Result<ClassPartition> {
    if num_hard == 0 || num_hard > stats.num_classes {
        return Err(Error::InvalidInput(format!(
            "num_hard {num_hard} must lie in 1..={}",
            stats.num_classes
        )));
    }
    let mut order: Vec<usize> = (0..stats.num_classes).collect();
    order.sort_by(|&a, &b| {
        stats.per_class_precision[a]
            .partial_cmp(&stats.per_class_precision[b])
            .expect("precisions are finite")
            .then(a.cmp(&b))
    });
    ClassPartition::new(stats.num_classes, order[..num_hard].to_vec())
}

/// Ablation baseline: `num_hard` classes chosen uniformly at random.
pub fn select_random_classes(
    num_classes: usize,
    num_hard: usize,
    seed: u64,
) -> Result<ClassPartition> {
    if num_hard == 0 || num_hard > num_classes {
        return Err(Error::InvalidInput(format!(
            "num_hard {num_hard} must lie in 1..={num_classes}"
        )));
    }
    let mut rng = crate::seeded_rng(seed);
    let mut ids: Vec<usize> = (0..num_classes).collect();
    use rand::seq::SliceRandom;
    ids.shuffle(&mut rng);
    ClassPartition::new(num_classes, ids[..num_hard].to_vec())
}

/// Keeps exactly the instances whose label is hard, remapping labels
/// through the dictionary. Original order is preserved.
///
/// Returns the kept row indices and the remapped labels.
pub fn filter_hard_subset(
    labels: &[usize],
    partition: &ClassPartition,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut indices = Vec::new();
    let mut remapped = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        if y >= partition.num_classes {
            return Err(Error::InvalidInput(format!(
                "label {y} at row {i} out of range for {} classes",
                partition.num_classes
            )));
        }
        if let Some(new_label) = partition.class_dict(y) {
            indices.push(i);
            remapped.push(new_label);
        }
    }
    Ok((indices, remapped))
}

/// Whether the main exit's prediction lands in the hard set.
///
/// Softmax is strictly monotone, so the argmax over logits equals the
/// argmax over probabilities; ties break to the lowest class index.
pub fn is_hard(exit1_logits: &[f64], partition: &ClassPartition) -> Result<bool> {
    if exit1_logits.len() != partition.num_classes {
        return Err(Error::ShapeMismatch(format!(
            "{} logits for {} classes",
            exit1_logits.len(),
            partition.num_classes
        )));
    }
    Ok(partition.is_hard_class(argmax(exit1_logits)))
}

/// Maximum softmax probability of the predicted class.
pub fn confidence(logits: &[f64]) -> Result<f64> {
    let probs = softmax_slice(logits)?;
    Ok(probs[argmax(&probs)])
}

/// Main-block misclassification taxonomy by easy/hard membership of the
/// true and predicted classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorKind {
    Correct,
    /// True easy, predicted hard.
    TypeI,
    /// True hard, predicted easy.
    TypeII,
    /// True easy, predicted a different easy class.
    TypeIII,
    /// True hard, predicted a different hard class.
    TypeIV,
}

/// Classifies one main-block prediction against the truth.
pub fn classify_error(
    pred_class: usize,
    true_class: usize,
    partition: &ClassPartition,
) -> Result<ErrorKind> {
    if pred_class >= partition.num_classes || true_class >= partition.num_classes {
        return Err(Error::InvalidInput(format!(
            "class out of range (pred {pred_class}, true {true_class}, K {})",
            partition.num_classes
        )));
    }
    if pred_class == true_class {
        return Ok(ErrorKind::Correct);
    }
    Ok(
        match (
            partition.is_hard_class(true_class),
            partition.is_hard_class(pred_class),
        ) {
            (false, true) => ErrorKind::TypeI,
            (true, false) => ErrorKind::TypeII,
            (false, false) => ErrorKind::TypeIII,
            (true, true) => ErrorKind::TypeIV,
        },
    )
}

/// Counts per error kind over an evaluation run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorTaxonomy {
    pub correct: usize,
    pub type_i: usize,
    pub type_ii: usize,
    pub type_iii: usize,
    pub type_iv: usize,
}

impl ErrorTaxonomy {
    pub fn record(&mut self, kind: ErrorKind) {
        match kind {
            ErrorKind::Correct => self.correct += 1,
            ErrorKind::TypeI => self.type_i += 1,
            ErrorKind::TypeII => self.type_ii += 1,
            ErrorKind::TypeIII => self.type_iii += 1,
            ErrorKind::TypeIV => self.type_iv += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.correct + self.errors()
    }

    pub fn errors(&self) -> usize {
        self.type_i + self.type_ii + self.type_iii + self.type_iv
    }
}

/// Fraction of instances whose hard/easy detection matched the true
/// class's membership. Input pairs are `(detected_hard, truly_hard)`.
pub fn detection_accuracy(decisions: &[(bool, bool)]) -> Result<f64> {
    if decisions.is_empty() {
        return Err(Error::InvalidInput(
            "detection accuracy of an empty record set".into(),
        ));
    }
    let matches = decisions.iter().filter(|(d, t)| d == t).count();
    Ok(matches as f64 / decisions.len() as f64)
}
