//! Dataset generation and loading.
//!
//! Provides the synthetic Gaussian-mixture benchmark with designed
//! class-wise difficulty, IDX and CSV loaders, and seeded stratified
//! train/validation splitting. All randomness is seeded; the same spec
//! generates the same bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A labeled feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub num_classes: usize,
    /// Row-major `len x dim`.
    features: Vec<f64>,
    labels: Vec<usize>,
    /// Where the data came from (synthetic spec, file path, ...).
    pub provenance: String,
}

impl Dataset {
    pub fn new(
        dim: usize,
        num_classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        provenance: String,
    ) -> Result<Self> {
        if dim == 0 || num_classes == 0 {
            return Err(Error::InvalidInput(
                "dataset needs positive dim and class count".into(),
            ));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::InvalidInput(format!(
                "{} feature values do not form {} rows of {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            dim,
            num_classes,
            features,
            labels,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// New dataset from the given rows, in the given order, with labels
    /// optionally replaced (used for hard-subset remapping).
    pub fn select(
        &self,
        indices: &[usize],
        new_labels: Option<(&[usize], usize)>,
    ) -> Result<Dataset> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for (pos, &i) in indices.iter().enumerate() {
            if i >= self.len() {
                return Err(Error::InvalidInput(format!(
                    "row index {i} out of range for {} rows",
                    self.len()
                )));
            }
            features.extend_from_slice(self.row(i));
            labels.push(match new_labels {
                Some((remapped, _)) => remapped[pos],
                None => self.labels[i],
            });
        }
        let num_classes = new_labels.map(|(_, k)| k).unwrap_or(self.num_classes);
        Dataset::new(
            self.dim,
            num_classes,
            features,
            labels,
            self.provenance.clone(),
        )
    }

    /// Per-class row indices, classes in ascending order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            by_class[y].push(i);
        }
        by_class
    }
}

/// Companion metadata written next to generated dataset files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub num_classes: usize,
    pub dim: usize,
    pub len: usize,
    pub provenance: String,
}

impl DatasetManifest {
    pub fn of(dataset: &Dataset) -> Self {
        Self {
            num_classes: dataset.num_classes,
            dim: dataset.dim,
            len: dataset.len(),
            provenance: dataset.provenance.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

// ---------------------------------------------------------------------------
// Synthetic benchmark
// ---------------------------------------------------------------------------

/// Gaussian-mixture benchmark with a designed hard group.
///
/// Class means sit on signed coordinate axes at distance `separation`;
/// the last `hard_count` class means are pulled toward their common
/// centroid by `1 / (1 + overlap)`, so a positive overlap makes those
/// classes strictly closer to each other than the easy ones are. Noise
/// is unit Gaussian per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    /// Distance of each class mean from the origin.
    pub separation: f64,
    /// How strongly the designed-hard means collapse together; 0 leaves
    /// them in place.
    pub overlap: f64,
    /// Size of the designed-hard group (the last `hard_count` classes).
    pub hard_count: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.dim == 0 || self.samples_per_class == 0 {
            return Err(Error::Config(
                "synthetic spec needs >=2 classes, positive dim and samples".into(),
            ));
        }
        if self.num_classes > 2 * self.dim {
            return Err(Error::Config(format!(
                "{} classes need dim >= {} to place separated means",
                self.num_classes,
                self.num_classes.div_ceil(2)
            )));
        }
        if self.hard_count == 0 || self.hard_count > self.num_classes {
            return Err(Error::Config(format!(
                "hard_count {} must lie in 1..={}",
                self.hard_count, self.num_classes
            )));
        }
        if self.separation.is_nan() || self.separation <= 0.0 || self.overlap < 0.0 {
            return Err(Error::Config(
                "separation must be positive and overlap nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Class ids designed to be hard: the last `hard_count` classes.
    pub fn designed_hard_classes(&self) -> Vec<usize> {
        (self.num_classes - self.hard_count..self.num_classes).collect()
    }

    /// The designed class means after the hard-group collapse.
    pub fn class_means(&self) -> Vec<Vec<f64>> {
        let mut means = Vec::with_capacity(self.num_classes);
        for c in 0..self.num_classes {
            let mut m = vec![0.0; self.dim];
            let sign = if c < self.dim { 1.0 } else { -1.0 };
            m[c % self.dim] = sign * self.separation;
            means.push(m);
        }
        let hard = self.designed_hard_classes();
        let mut centroid = vec![0.0; self.dim];
        for &c in &hard {
            for (acc, v) in centroid.iter_mut().zip(&means[c]) {
                *acc += v / hard.len() as f64;
            }
        }
        let shrink = 1.0 / (1.0 + self.overlap);
        for &c in &hard {
            for (v, ctr) in means[c].iter_mut().zip(&centroid) {
                *v = ctr + (*v - ctr) * shrink;
            }
        }
        means
    }
}

/// Standard normal via Box-Muller; deterministic given the rng.
fn standard_normal(rng: &mut crate::Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Generates the synthetic dataset for a spec.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let means = spec.class_means();
    let mut rng = crate::seeded_rng(spec.seed);
    let n = spec.num_classes * spec.samples_per_class;
    let mut features = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            for &m in mean {
                features.push(m + standard_normal(&mut rng));
            }
            labels.push(c);
        }
    }
    Dataset::new(
        spec.dim,
        spec.num_classes,
        features,
        labels,
        format!(
            "synthetic k={} d={} n/class={} sep={} overlap={} hard={} seed={}",
            spec.num_classes,
            spec.dim,
            spec.samples_per_class,
            spec.separation,
            spec.overlap,
            spec.hard_count,
            spec.seed
        ),
    )
}

// ---------------------------------------------------------------------------
// IDX loader
// ---------------------------------------------------------------------------

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

struct IdxReader<'a> {
    path: &'a Path,
    bytes: Vec<u8>,
    offset: usize,
}

impl<'a> IdxReader<'a> {
    fn open(path: &'a Path) -> Result<Self> {
        Ok(Self {
            path,
            bytes: fs::read(path)?,
            offset: 0,
        })
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.display().to_string(),
            location: format!("byte {}", self.offset),
            message: message.into(),
        }
    }

    fn read_u32(&mut self) -> Result<u32> {
        let end = self.offset + 4;
        if end > self.bytes.len() {
            return Err(self.fail("truncated header"));
        }
        let v = u32::from_be_bytes(self.bytes[self.offset..end].try_into().unwrap());
        self.offset = end;
        Ok(v)
    }

    fn read_payload(&mut self, len: usize) -> Result<&[u8]> {
        let end = self.offset + len;
        if end > self.bytes.len() {
            return Err(self.fail(format!(
                "payload truncated: need {len} bytes, {} remain",
                self.bytes.len() - self.offset
            )));
        }
        let slice = &self.bytes[self.offset..end];
        self.offset = end;
        Ok(slice)
    }
}

/// Loads an IDX image/label file pair (big-endian, standard magic
/// numbers). Pixels are scaled to `[0, 1]`; images are flattened to
/// `rows * cols` features. The class count is the largest label plus
/// one unless `expected_classes` pins it.
pub fn load_idx(
    images_path: &Path,
    labels_path: &Path,
    expected_classes: Option<usize>,
) -> Result<Dataset> {
    let mut images = IdxReader::open(images_path)?;
    let magic = images.read_u32()?;
    if magic != IDX_IMAGES_MAGIC {
        images.offset = 0;
        return Err(images.fail(format!(
            "bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
        )));
    }
    let count = images.read_u32()? as usize;
    let rows = images.read_u32()? as usize;
    let cols = images.read_u32()? as usize;
    let dim = rows * cols;
    if dim == 0 {
        return Err(images.fail("zero image dimensions"));
    }
    let pixels = images.read_payload(count * dim)?;
    let features: Vec<f64> = pixels.iter().map(|&b| b as f64 / 255.0).collect();

    let mut labels_file = IdxReader::open(labels_path)?;
    let magic = labels_file.read_u32()?;
    if magic != IDX_LABELS_MAGIC {
        labels_file.offset = 0;
        return Err(labels_file.fail(format!(
            "bad label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
        )));
    }
    let label_count = labels_file.read_u32()? as usize;
    if label_count != count {
        return Err(labels_file.fail(format!(
            "label count {label_count} does not match image count {count}"
        )));
    }
    let raw_labels = labels_file.read_payload(count)?;
    let labels: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();

    let num_classes =
        expected_classes.unwrap_or_else(|| labels.iter().max().map(|&m| m + 1).unwrap_or(1));
    if let Some((i, &bad)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
        return Err(Error::Format {
            path: labels_path.display().to_string(),
            location: format!("byte {}", 8 + i),
            message: format!("label {bad} out of range for {num_classes} classes"),
        });
    }
    Dataset::new(
        dim,
        num_classes,
        features,
        labels,
        format!("idx {}", images_path.display()),
    )
}

// ---------------------------------------------------------------------------
// CSV load/save
// ---------------------------------------------------------------------------

/// Loads a label-first CSV (`label,feature,feature,...`). Every row must
/// have the same width; the class count is the largest label plus one
/// unless `expected_classes` pins it.
pub fn load_csv(path: &Path, expected_classes: Option<usize>) -> Result<Dataset> {
    let fail = |line: usize, message: String| Error::Format {
        path: path.display().to_string(),
        location: format!("line {line}"),
        message,
    };
    let text = fs::read_to_string(path)?;
    let mut dim = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label_field = fields.next().unwrap_or("");
        let label: usize = label_field
            .trim()
            .parse()
            .map_err(|_| fail(line_no, format!("bad label {label_field:?}")))?;
        let row: Vec<f64> = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| fail(line_no, format!("bad feature value {f:?}")))
            })
            .collect::<Result<_>>()?;
        if row.is_empty() {
            return Err(fail(line_no, "row has a label but no features".into()));
        }
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(fail(
                    line_no,
                    format!("ragged row: {} features, expected {d}", row.len()),
                ));
            }
            _ => {}
        }
        labels.push(label);
        features.extend(row);
    }
    let Some(dim) = dim else {
        return Err(fail(1, "no data rows".into()));
    };
    let num_classes =
        expected_classes.unwrap_or_else(|| labels.iter().max().map(|&m| m + 1).unwrap_or(1));
    if let Some((i, &bad)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
        return Err(fail(
            i + 1,
            format!("label {bad} out of range for {num_classes} classes"),
        ));
    }
    Dataset::new(
        dim,
        num_classes,
        features,
        labels,
        format!("csv {}", path.display()),
    )
}

/// Writes a dataset as label-first CSV. Floats use the shortest
/// round-trip decimal form, so reloading reproduces them exactly.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..dataset.len() {
        out.push_str(&dataset.label(i).to_string());
        for v in dataset.row(i) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

/// Seeded, stratified, disjoint and exhaustive train/validation split.
///
/// Each class contributes `round(val_fraction * count)` rows to the
/// validation side, at least one and at most `count - 1`. Classes with
/// fewer than two samples cannot be stratified and are an error.
pub fn split_train_val(
    dataset: &Dataset,
    val_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if val_fraction.is_nan() || val_fraction <= 0.0 || val_fraction >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "val_fraction must lie in (0,1), got {val_fraction}"
        )));
    }
    let mut rng = crate::seeded_rng(seed);
    let mut val_indices = Vec::new();
    let mut train_indices = Vec::new();
    for (c, mut class_rows) in dataset.indices_by_class().into_iter().enumerate() {
        if class_rows.is_empty() {
            continue;
        }
        if class_rows.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "class {c} has {} sample(s); need at least 2 to stratify",
                class_rows.len()
            )));
        }
        class_rows.shuffle(&mut rng);
        let want = (val_fraction * class_rows.len() as f64).round() as usize;
        let take = want.clamp(1, class_rows.len() - 1);
        val_indices.extend_from_slice(&class_rows[..take]);
        train_indices.extend_from_slice(&class_rows[take..]);
    }
    val_indices.sort_unstable();
    train_indices.sort_unstable();
    Ok((
        dataset.select(&train_indices, None)?,
        dataset.select(&val_indices, None)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_spec() -> SyntheticSpec {
        SyntheticSpec {
            num_classes: 4,
            dim: 6,
            samples_per_class: 30,
            separation: 4.0,
            overlap: 1.0,
            hard_count: 2,
            seed: 17,
        }
    }

    /// Test-side oracle: classify by the nearest designed mean.
    fn nearest_mean_accuracy(dataset: &Dataset, means: &[Vec<f64>], only: Option<&[usize]>) -> f64 {
        let mut hits = 0;
        let mut total = 0;
        for i in 0..dataset.len() {
            let y = dataset.label(i);
            if let Some(keep) = only {
                if !keep.contains(&y) {
                    continue;
                }
            }
            let x = dataset.row(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, m) in means.iter().enumerate() {
                let d: f64 = x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            total += 1;
            if best == y {
                hits += 1;
            }
        }
        hits as f64 / total as f64
    }

    #[test]
    fn same_seed_generates_identical_data() {
        let a = gen_synthetic(&toy_spec()).unwrap();
        let b = gen_synthetic(&toy_spec()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn separated_classes_are_nearly_perfectly_classifiable() {
        let spec = SyntheticSpec {
            overlap: 0.0,
            ..toy_spec()
        };
        let data = gen_synthetic(&spec).unwrap();
        let acc = nearest_mean_accuracy(&data, &spec.class_means(), None);
        assert!(acc > 0.97, "nearest-mean oracle accuracy {acc}");
    }

    #[test]
    fn hard_means_are_strictly_closer_than_easy_means() {
        let spec = toy_spec();
        let means = spec.class_means();
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let hard = spec.designed_hard_classes();
        let easy: Vec<usize> = (0..spec.num_classes)
            .filter(|c| !hard.contains(c))
            .collect();
        let max_hard = hard
            .iter()
            .flat_map(|&a| hard.iter().map(move |&b| (a, b)))
            .filter(|(a, b)| a < b)
            .map(|(a, b)| dist(&means[a], &means[b]))
            .fold(0.0, f64::max);
        let min_easy = easy
            .iter()
            .flat_map(|&a| easy.iter().map(move |&b| (a, b)))
            .filter(|(a, b)| a < b)
            .map(|(a, b)| dist(&means[a], &means[b]))
            .fold(f64::INFINITY, f64::min);
        assert!(
            max_hard < min_easy,
            "hard pairwise {max_hard} should be below easy pairwise {min_easy}"
        );
    }

    #[test]
    fn overlap_grid_never_improves_hard_class_separability() {
        for seed in 0..5 {
            let mut last = f64::INFINITY;
            for &overlap in &[0.0, 0.5, 1.0, 2.0, 4.0] {
                let spec = SyntheticSpec {
                    overlap,
                    seed,
                    samples_per_class: 100,
                    ..toy_spec()
                };
                let data = gen_synthetic(&spec).unwrap();
                let hard = spec.designed_hard_classes();
                let acc = nearest_mean_accuracy(&data, &spec.class_means(), Some(&hard));
                assert!(
                    acc <= last + 1e-12,
                    "seed {seed}: accuracy rose from {last} to {acc} at overlap {overlap}"
                );
                last = acc;
            }
        }
    }

    #[test]
    fn idx_fixture_loads_exact_floats() {
        let dir = tempfile::tempdir().unwrap();
        let images_path = dir.path().join("imgs.idx3");
        let labels_path = dir.path().join("labels.idx1");

        // Two 2x2 images written by hand.
        let mut images: Vec<u8> = Vec::new();
        images.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&[0, 51, 102, 255, 128, 0, 255, 25]);
        fs::File::create(&images_path)
            .unwrap()
            .write_all(&images)
            .unwrap();

        let mut labels: Vec<u8> = Vec::new();
        labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        labels.extend_from_slice(&2u32.to_be_bytes());
        labels.extend_from_slice(&[1, 0]);
        fs::File::create(&labels_path)
            .unwrap()
            .write_all(&labels)
            .unwrap();

        let data = load_idx(&images_path, &labels_path, Some(2)).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.dim, 4);
        assert_eq!(data.row(0), &[0.0, 51.0 / 255.0, 102.0 / 255.0, 1.0]);
        assert_eq!(data.labels(), &[1, 0]);
    }

    #[test]
    fn idx_errors_carry_byte_offsets() {
        let dir = tempfile::tempdir().unwrap();
        let images_path = dir.path().join("bad.idx3");
        let labels_path = dir.path().join("labels.idx1");

        // Wrong magic.
        fs::write(&images_path, 0xdead_beefu32.to_be_bytes()).unwrap();
        let mut labels: Vec<u8> = Vec::new();
        labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        labels.extend_from_slice(&1u32.to_be_bytes());
        labels.push(0);
        fs::write(&labels_path, &labels).unwrap();
        match load_idx(&images_path, &labels_path, None) {
            Err(Error::Format { location, .. }) => assert_eq!(location, "byte 0"),
            other => panic!("expected format error, got {other:?}"),
        }

        // Count mismatch between image and label files.
        let mut images: Vec<u8> = Vec::new();
        images.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&1u32.to_be_bytes());
        images.extend_from_slice(&1u32.to_be_bytes());
        images.extend_from_slice(&[7, 9]);
        fs::write(&images_path, &images).unwrap();
        assert!(matches!(
            load_idx(&images_path, &labels_path, None),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let data = gen_synthetic(&toy_spec()).unwrap();
        save_csv(&data, &path).unwrap();
        let back = load_csv(&path, Some(data.num_classes)).unwrap();
        assert_eq!(back.labels(), data.labels());
        assert_eq!(back.dim, data.dim);
        for i in 0..data.len() {
            assert_eq!(back.row(i), data.row(i));
        }
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");

        fs::write(&path, "").unwrap();
        assert!(matches!(load_csv(&path, None), Err(Error::Format { .. })));

        fs::write(&path, "0,1.0,2.0\n1,3.0\n").unwrap();
        match load_csv(&path, None) {
            Err(Error::Format { location, .. }) => assert_eq!(location, "line 2"),
            other => panic!("expected format error, got {other:?}"),
        }

        fs::write(&path, "0,1.0\n9,2.0\n").unwrap();
        assert!(matches!(
            load_csv(&path, Some(2)),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn split_is_stratified_disjoint_and_exhaustive() {
        let spec = SyntheticSpec {
            num_classes: 10,
            dim: 8,
            samples_per_class: 100,
            separation: 3.0,
            overlap: 0.5,
            hard_count: 5,
            seed: 3,
        };
        let data = gen_synthetic(&spec).unwrap();
        let (train, val) = split_train_val(&data, 0.10, 99).unwrap();
        assert_eq!(train.len() + val.len(), data.len());

        // 100 balanced samples per class at 10% -> exactly 10 per class.
        let val_by_class = val.indices_by_class();
        for rows in &val_by_class {
            assert_eq!(rows.len(), 10);
        }

        // Same seed reproduces the same split.
        let (train2, val2) = split_train_val(&data, 0.10, 99).unwrap();
        assert_eq!(train, train2);
        assert_eq!(val, val2);
    }

    #[test]
    fn split_rejects_unstratifiable_classes() {
        let data = Dataset::new(
            2,
            2,
            vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0],
            vec![0, 0, 1],
            "tiny".into(),
        )
        .unwrap();
        assert!(matches!(
            split_train_val(&data, 0.5, 0),
            Err(Error::InvalidInput(_))
        ));
    }
}
