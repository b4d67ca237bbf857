//! Datasets: synthetic imbalanced Gaussian blobs, CSV ingestion, stratified
//! splitting and feature standardization.
//!
//! The blob generator uses SplitMix64 seeded with `ImbalanceSpec::seed`.
//! Draw order: all class centers first (uniform in `[-1, 1]^d`, class by
//! class), then the samples of each class in class order (standard normal
//! via `rand_distr::StandardNormal`, scaled by `cluster_spread`), then one
//! Fisher-Yates shuffle of the rows.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `N x d`
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if class_names.is_empty() {
            return Err(Error::Validation("dataset needs at least one class".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_names.len()) {
            return Err(Error::Validation(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order, sharing the class list.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Indices of each class, in row order.
    fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes()];
        for (i, &y) in self.labels.iter().enumerate() {
            by_class[y].push(i);
        }
        by_class
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceSpec {
    pub class_proportions: Vec<f64>,
    pub n_total: usize,
    pub cluster_spread: f64,
    pub dim: usize,
    pub seed: u64,
}

impl ImbalanceSpec {
    pub fn validate(&self) -> Result<()> {
        let p = &self.class_proportions;
        if p.is_empty() {
            return Err(Error::Validation("no class proportions given".into()));
        }
        if p.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
            return Err(Error::Validation("class proportions must be positive".into()));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("class proportions sum to {sum}, expected 1")));
        }
        if let Some(c) = p
            .iter()
            .position(|&x| (x * self.n_total as f64).floor() < 1.0)
        {
            return Err(Error::Validation(format!(
                "class {c} would receive no samples out of {}",
                self.n_total
            )));
        }
        if !(self.cluster_spread.is_finite() && self.cluster_spread > 0.0) {
            return Err(Error::Validation("cluster spread must be positive".into()));
        }
        if self.dim == 0 {
            return Err(Error::Validation("feature dimension must be positive".into()));
        }
        Ok(())
    }

    /// Per-class sample counts: largest-remainder rounding of `p_c * n_total`.
    pub fn class_counts(&self) -> Vec<usize> {
        let n = self.n_total as f64;
        let exact: Vec<f64> = self.class_proportions.iter().map(|p| p * n).collect();
        // Guard against 0.09 * 1000 = 90.00000000000001 style noise before flooring.
        let mut counts: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
        let assigned: usize = counts.iter().sum();
        let mut by_remainder: Vec<usize> = (0..counts.len()).collect();
        by_remainder.sort_by(|&a, &b| {
            let ra = exact[a] - counts[a] as f64;
            let rb = exact[b] - counts[b] as f64;
            rb.total_cmp(&ra)
        });
        for &c in by_remainder.iter().take(self.n_total.saturating_sub(assigned)) {
            counts[c] += 1;
        }
        counts
    }
}

pub fn make_gaussian_blobs(spec: &ImbalanceSpec) -> Result<Dataset> {
    spec.validate()?;
    let classes = spec.class_proportions.len();
    let counts = spec.class_counts();
    let mut rng = SplitMix64::seed_from_u64(spec.seed);
    let centers = Array2::from_shape_simple_fn((classes, spec.dim), || rng.random_range(-1.0..1.0));
    let mut features = Array2::zeros((spec.n_total, spec.dim));
    let mut labels = Vec::with_capacity(spec.n_total);
    let mut row = 0;
    for (c, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            for j in 0..spec.dim {
                let z: f64 = rng.sample(StandardNormal);
                features[[row, j]] = centers[[c, j]] + spec.cluster_spread * z;
            }
            labels.push(c);
            row += 1;
        }
    }
    let mut perm: Vec<usize> = (0..spec.n_total).collect();
    perm.shuffle(&mut rng);
    let names = (0..classes).map(|c| format!("c{c}")).collect();
    let ds = Dataset::new(features, labels, names)?;
    Ok(ds.subset(&perm))
}

fn check_min_per_class(ds: &Dataset, min: usize) -> Result<()> {
    if let Some((c, n)) = ds
        .class_counts()
        .into_iter()
        .enumerate()
        .find(|&(_, n)| n < min)
    {
        return Err(Error::Validation(format!(
            "class `{}` has {n} samples, need at least {min}",
            ds.class_names[c]
        )));
    }
    Ok(())
}

/// Stratified train/test split. Each class sends `round(n_c * train_fraction)`
/// samples (at least one, and leaving at least one) to the training side.
pub fn stratified_split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Validation(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    check_min_per_class(ds, 2)?;
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut idx in ds.indices_by_class() {
        idx.shuffle(&mut rng);
        let n = idx.len();
        let k = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Stratified k-fold: returns `(train, validation)` for each fold.
pub fn stratified_kfold(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    if k < 2 {
        return Err(Error::Validation(format!("k-fold needs k >= 2, got {k}")));
    }
    check_min_per_class(ds, 2)?;
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut fold_of = vec![0; ds.len()];
    let mut next = 0;
    for mut idx in ds.indices_by_class() {
        idx.shuffle(&mut rng);
        for i in idx {
            fold_of[i] = next % k;
            next += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (val, train): (Vec<usize>, Vec<usize>) =
                (0..ds.len()).partition(|&i| fold_of[i] == f);
            (ds.subset(&train), ds.subset(&val))
        })
        .collect())
}

/// Column holding the class label.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelColumn {
    #[default]
    Last,
    Index(usize),
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "last" => LabelColumn::Last,
            _ => match s.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(s.to_string()),
            },
        })
    }
}

pub fn load_csv(path: impl AsRef<Path>, has_header: bool, label: &LabelColumn) -> Result<Dataset> {
    read_csv(std::fs::File::open(path)?, has_header, label)
}

/// Parses comma-separated numeric features with one label column. Labels are
/// indexed in order of first appearance. Row numbers in errors are 1-based
/// file lines.
pub fn read_csv<R: Read>(input: R, has_header: bool, label: &LabelColumn) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_reader(input);
    let mut width = None;
    let mut label_idx = None;
    if has_header {
        let header = reader.headers()?.clone();
        if header.is_empty() {
            return Err(Error::Parse {
                row: 1,
                message: "empty header".into(),
            });
        }
        width = Some(header.len());
        label_idx = Some(match label {
            LabelColumn::Last => header.len() - 1,
            LabelColumn::Index(i) => *i,
            LabelColumn::Name(name) => header.iter().position(|h| h == name).ok_or_else(|| {
                Error::Parse {
                    row: 1,
                    message: format!("label column `{name}` not in header"),
                }
            })?,
        });
    }
    let mut values: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut index_of: HashMap<String, usize> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Parse {
                row,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        let li = match label_idx {
            Some(i) => i,
            None => {
                let i = match label {
                    LabelColumn::Last => w - 1,
                    LabelColumn::Index(i) => *i,
                    LabelColumn::Name(name) => {
                        return Err(Error::Parse {
                            row,
                            message: format!("label column `{name}` given by name but file has no header"),
                        })
                    }
                };
                *label_idx.insert(i)
            }
        };
        if li >= w {
            return Err(Error::Parse {
                row,
                message: format!("label column {li} out of range for {w} fields"),
            });
        }
        for (j, field) in record.iter().enumerate() {
            if j == li {
                let name = field.trim();
                let next = names.len();
                let idx = *index_of.entry(name.to_string()).or_insert_with(|| {
                    names.push(name.to_string());
                    next
                });
                labels.push(idx);
            } else {
                let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    row,
                    message: format!("non-numeric feature `{field}` in column {j}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row,
                        message: format!("non-finite feature `{field}` in column {j}"),
                    });
                }
                values.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            row: 0,
            message: "no data rows".into(),
        });
    }
    let d = width.unwrap_or(1) - 1;
    let features = Array2::from_shape_vec((labels.len(), d), values)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    Dataset::new(features, labels, names)
}

/// Writes `x0..x{d-1},label` with a header row; labels as class names.
pub fn write_csv<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (row, &y) in ds.features.rows().into_iter().zip(&ds.labels) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(ds.class_names[y].clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Column-wise standardization fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation; columns with zero spread keep
    /// scale 1.
    pub fn fit(ds: &Dataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::Validation("cannot standardize an empty dataset".into()));
        }
        let mean = ds.features.mean_axis(Axis(0)).expect("non-empty");
        let std = ds.features.std_axis(Axis(0), 0.0);
        Ok(Self {
            mean: mean.to_vec(),
            scale: std
                .iter()
                .map(|&s| if s > 1e-12 { s } else { 1.0 })
                .collect(),
        })
    }

    pub fn transform(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.dim() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "standardizer fitted on {} features, data has {}",
                self.mean.len(),
                ds.dim()
            )));
        }
        let mean = Array1::from(self.mean.clone());
        let scale = Array1::from(self.scale.clone());
        let features = (&ds.features - &mean) / &scale;
        Dataset::new(features, ds.labels.clone(), ds.class_names.clone())
    }
}
