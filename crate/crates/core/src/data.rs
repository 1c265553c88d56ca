//! In-memory regression datasets, min-max scaling and seeded splits.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub features: Matrix,
    /// Raw target values, never rescaled.
    pub targets: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Matrix, targets: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        if features.rows() != targets.len() {
            return Err(Error::shape("dataset targets", features.rows(), targets.len()));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::shape("dataset feature names", features.cols(), feature_names.len()));
        }
        if let Some(index) = features.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "dataset features",
                index,
            });
        }
        if let Some(index) = targets.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "dataset targets",
                index,
            });
        }
        Ok(Dataset {
            name: name.into(),
            features,
            targets,
            feature_names,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: self.features.select_rows(idx),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Drops every row where any feature or the target equals `sentinel`.
pub fn clean_sentinels(d: &Dataset, sentinel: f64) -> Result<Dataset> {
    if !sentinel.is_finite() {
        return Err(Error::Precondition(format!("sentinel must be finite, got {sentinel}")));
    }
    let keep: Vec<usize> = (0..d.n_samples())
        .filter(|&i| d.targets[i] != sentinel && !d.features.row(i).contains(&sentinel))
        .collect();
    if keep.is_empty() {
        return Err(Error::NoRows);
    }
    Ok(d.select(&keep))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormParams {
    pub fn is_constant(&self, j: usize) -> bool {
        self.max[j] == self.min[j]
    }

    pub fn constant_features(&self) -> Vec<usize> {
        (0..self.min.len()).filter(|&j| self.is_constant(j)).collect()
    }
}

/// Per-feature min and max over all samples.
pub fn fit_minmax(d: &Dataset) -> Result<NormParams> {
    let rows: Vec<usize> = (0..d.n_samples()).collect();
    fit_minmax_rows(d, &rows)
}

/// Per-feature min and max over the listed rows only (train-only fitting).
pub fn fit_minmax_rows(d: &Dataset, rows: &[usize]) -> Result<NormParams> {
    if rows.is_empty() {
        return Err(Error::NoRows);
    }
    let p = d.n_features();
    let mut min = alloc::vec![f64::INFINITY; p];
    let mut max = alloc::vec![f64::NEG_INFINITY; p];
    for &i in rows {
        for (j, &v) in d.features.row(i).iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    Ok(NormParams { min, max })
}

/// `(x − min) / (max − min)` per feature; constant features become 0.
/// Targets are copied unchanged.
pub fn apply_minmax(d: &Dataset, p: &NormParams) -> Result<Dataset> {
    if p.min.len() != d.n_features() || p.max.len() != d.n_features() {
        return Err(Error::shape("normalization feature count", d.n_features(), p.min.len()));
    }
    let mut features = d.features.clone();
    for i in 0..features.rows() {
        for (j, v) in features.row_mut(i).iter_mut().enumerate() {
            *v = if p.is_constant(j) {
                0.0
            } else {
                (*v - p.min[j]) / (p.max[j] - p.min[j])
            };
        }
    }
    Ok(Dataset {
        name: d.name.clone(),
        features,
        targets: d.targets.clone(),
        feature_names: d.feature_names.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentSplit {
    pub seed: u64,
    pub labeled_idx: Vec<usize>,
    pub unlabeled_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// One seeded permutation of `0..n_samples`: the first `n_labeled` indices are
/// labeled, the next `n_unlabeled` unlabeled, the rest test. Growing
/// `n_labeled` under the same seed keeps smaller labeled sets as prefixes.
pub fn split_indices(n_samples: usize, n_labeled: usize, n_unlabeled: usize, seed: u64) -> Result<ExperimentSplit> {
    if n_labeled + n_unlabeled > n_samples {
        return Err(Error::Precondition(format!(
            "labeled ({n_labeled}) + unlabeled ({n_unlabeled}) exceeds the {n_samples} available samples"
        )));
    }
    if n_labeled >= n_unlabeled {
        return Err(Error::Precondition(format!(
            "labeled count ({n_labeled}) must be smaller than unlabeled count ({n_unlabeled})"
        )));
    }
    let mut perm: Vec<usize> = (0..n_samples).collect();
    perm.shuffle(&mut seed::rng(seed));
    let test_idx = perm.split_off(n_labeled + n_unlabeled);
    let unlabeled_idx = perm.split_off(n_labeled);
    Ok(ExperimentSplit {
        seed,
        labeled_idx: perm,
        unlabeled_idx,
        test_idx,
    })
}

pub fn make_split(d: &Dataset, n_labeled: usize, n_unlabeled: usize, seed: u64) -> Result<ExperimentSplit> {
    split_indices(d.n_samples(), n_labeled, n_unlabeled, seed)
}

impl ExperimentSplit {
    /// Checks that the three lists partition `0..n_samples`.
    pub fn validate(&self, n_samples: usize) -> Result<()> {
        let mut seen = alloc::vec![false; n_samples];
        let total = self.labeled_idx.len() + self.unlabeled_idx.len() + self.test_idx.len();
        if total != n_samples {
            return Err(Error::shape("split size", n_samples, total));
        }
        for &i in self.labeled_idx.iter().chain(&self.unlabeled_idx).chain(&self.test_idx) {
            if i >= n_samples || seen[i] {
                return Err(Error::Precondition(format!("split index {i} is out of range or repeated")));
            }
            seen[i] = true;
        }
        Ok(())
    }

    pub fn materialize(&self, d: &Dataset) -> Result<SplitData> {
        self.validate(d.n_samples())?;
        Ok(SplitData {
            labeled: d.select(&self.labeled_idx),
            unlabeled_x: d.features.select_rows(&self.unlabeled_idx),
            test: d.select(&self.test_idx),
        })
    }
}

/// Rows of a dataset gathered per partition. Unlabeled targets are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitData {
    pub labeled: Dataset,
    pub unlabeled_x: Matrix,
    pub test: Dataset,
}

impl SplitData {
    pub fn training(&self) -> crate::trainer::TrainingData<'_> {
        crate::trainer::TrainingData {
            labeled_x: &self.labeled.features,
            labeled_y: &self.labeled.targets,
            unlabeled_x: &self.unlabeled_x,
        }
    }
}
