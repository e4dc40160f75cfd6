//! Datasets: synthetic toys with known explanations, IDX image files, and range normalization.

mod idx;
mod toy;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::TensorF;

pub use idx::{bundled_digits, load_idx, load_idx_split, parse_idx_images, parse_idx_labels, IdxImages};
pub use toy::{toy_generate, GroundTruthMask, ToySpec};

/// Closed interval of valid feature values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub lo: f64,
    pub hi: f64,
}

impl ValueRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Spec(format!("invalid value range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    /// `n` equally spaced points from `lo` to `hi` inclusive.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![self.lo],
            _ => (0..n)
                .map(|i| {
                    if i == n - 1 {
                        self.hi
                    } else {
                        self.lo + self.width() * i as f64 / (n - 1) as f64
                    }
                })
                .collect(),
        }
    }
}

/// Affine map `y = scale * x + offset` recorded by [`LabeledDataset::normalize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub scale: f64,
    pub offset: f64,
}

impl Affine {
    pub fn apply(&self, x: f64) -> f64 {
        self.scale * x + self.offset
    }

    pub fn invert(&self, y: f64) -> f64 {
        (y - self.offset) / self.scale
    }
}

/// Instances stored contiguously, one row of `feature_len()` values each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    feature_shape: Vec<usize>,
    features: Vec<f64>,
    labels: Vec<usize>,
    classes: usize,
    value_range: ValueRange,
    train: Vec<usize>,
    test: Vec<usize>,
    normalization: Option<Affine>,
}

impl LabeledDataset {
    /// Builds a dataset with every instance in the train split.
    pub fn new(
        feature_shape: Vec<usize>,
        features: Vec<f64>,
        labels: Vec<usize>,
        classes: usize,
        value_range: ValueRange,
    ) -> Result<Self> {
        let len: usize = feature_shape.iter().product();
        if len == 0 || features.len() != len * labels.len() {
            return Err(Error::Spec(format!(
                "{} feature values do not fit {} instances of shape {feature_shape:?}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Spec(format!("label {bad} out of range for {classes} classes")));
        }
        if let Some(v) = features.iter().find(|&&v| !value_range.contains(v)) {
            return Err(Error::Spec(format!(
                "feature value {v} outside [{}, {}]",
                value_range.lo, value_range.hi
            )));
        }
        let train = (0..labels.len()).collect();
        Ok(Self {
            feature_shape,
            features,
            labels,
            classes,
            value_range,
            train,
            test: Vec::new(),
            normalization: None,
        })
    }

    /// Replaces the train/test split. The two lists must be disjoint and cover every instance.
    pub fn with_split(mut self, train: Vec<usize>, test: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        for &i in train.iter().chain(&test) {
            if i >= self.len() || seen[i] {
                return Err(Error::Spec(format!("split index {i} is out of range or repeated")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Spec("split does not cover every instance".into()));
        }
        self.train = train;
        self.test = test;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_shape(&self) -> &[usize] {
        &self.feature_shape
    }

    pub fn feature_len(&self) -> usize {
        self.feature_shape.iter().product()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn value_range(&self) -> ValueRange {
        self.value_range
    }

    pub fn normalization(&self) -> Option<Affine> {
        self.normalization
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.feature_len();
        &self.features[i * n..(i + 1) * n]
    }

    pub fn instance(&self, i: usize) -> TensorF {
        TensorF::new(self.feature_shape.clone(), self.row(i).to_vec()).expect("row matches feature shape")
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train
    }

    pub fn test_indices(&self) -> &[usize] {
        &self.test
    }

    pub(crate) fn feature_shape_matches(&self, shape: &[usize]) -> Result<()> {
        if self.feature_shape != shape {
            return Err(Error::shape(shape, &self.feature_shape));
        }
        Ok(())
    }

    /// Maps every feature affinely from the current value range onto `target`.
    ///
    /// The map composes with any earlier normalization, so
    /// [`denormalize`](Self::denormalize) always returns to the source values.
    pub fn normalize(&self, target: ValueRange) -> Result<Self> {
        let src = self.value_range;
        if src.width() == 0.0 {
            return Err(Error::Spec(format!(
                "cannot normalize from a degenerate range [{}, {}]",
                src.lo, src.hi
            )));
        }
        let step = Affine {
            scale: target.width() / src.width(),
            offset: target.lo - src.lo * target.width() / src.width(),
        };
        let mut out = self.clone();
        for v in &mut out.features {
            *v = target.clamp(step.apply(*v));
        }
        out.value_range = target;
        out.normalization = Some(match self.normalization {
            None => step,
            Some(prev) => Affine {
                scale: step.scale * prev.scale,
                offset: step.scale * prev.offset + step.offset,
            },
        });
        Ok(out)
    }

    /// Undoes every recorded normalization.
    pub fn denormalize(&self) -> Result<Self> {
        let Some(a) = self.normalization else {
            return Ok(self.clone());
        };
        let mut out = self.clone();
        for v in &mut out.features {
            *v = a.invert(*v);
        }
        let (x, y) = (a.invert(self.value_range.lo), a.invert(self.value_range.hi));
        out.value_range = ValueRange::new(x.min(y), x.max(y))?;
        out.normalization = None;
        Ok(out)
    }

    /// Header row `x0,...,x{n-1},label`, then one instance per line.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let header: Vec<String> = (0..self.feature_len()).map(|j| format!("x{j}")).collect();
        writeln!(w, "{},label", header.join(","))?;
        for i in 0..self.len() {
            let row: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{}", row.join(","), self.labels[i])?;
        }
        Ok(())
    }

    /// Feature-wise mean over the given instances.
    pub fn mean_of(&self, indices: &[usize]) -> TensorF {
        let n = self.feature_len();
        let mut acc = vec![0.0; n];
        for &i in indices {
            for (a, v) in acc.iter_mut().zip(self.row(i)) {
                *a += v;
            }
        }
        let k = indices.len().max(1) as f64;
        TensorF::new(self.feature_shape.clone(), acc.into_iter().map(|a| a / k).collect())
            .expect("mean matches feature shape")
    }
}
