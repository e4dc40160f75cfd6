use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledDataset, ValueRange};
use crate::error::{Error, Result};

/// Parameters of a tabular toy dataset whose explanation is known.
///
/// The first `relevant` features determine the label jointly; the rest are noise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToySpec {
    pub features: usize,
    pub relevant: usize,
    pub classes: usize,
    /// Each feature takes values in `0..values`.
    pub values: usize,
    pub instances: usize,
    pub seed: u64,
}

impl ToySpec {
    pub fn validate(&self) -> Result<()> {
        if self.relevant < 1 || self.relevant > self.features {
            return Err(Error::Spec(format!(
                "need 1 <= relevant ({}) <= features ({})",
                self.relevant, self.features
            )));
        }
        if self.classes < 2 || self.values < 2 || self.instances < 1 {
            return Err(Error::Spec("need classes >= 2, values >= 2 and instances >= 1".into()));
        }
        let combos = (self.values as u128).checked_pow(self.relevant as u32);
        if combos.is_some_and(|c| (self.classes as u128) > c) {
            return Err(Error::Spec(format!(
                "{} classes cannot be realized by {} relevant features over {} values",
                self.classes, self.relevant, self.values
            )));
        }
        Ok(())
    }

    pub fn value_range(&self) -> ValueRange {
        ValueRange {
            lo: 0.0,
            hi: (self.values - 1) as f64,
        }
    }

    /// Label of one feature vector: the sum of the relevant features modulo `classes`.
    pub fn label_of(&self, x: &[f64]) -> usize {
        let s: usize = x[..self.relevant].iter().map(|&v| v as usize).sum();
        s % self.classes
    }
}

/// Binary relevance mask: 1 on relevant features, 0 elsewhere.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthMask {
    mask: Vec<bool>,
}

impl GroundTruthMask {
    pub fn new(mask: Vec<bool>) -> Self {
        Self { mask }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }

    pub fn values(&self) -> Vec<f64> {
        self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
    }
}

/// Draws `instances` feature vectors uniformly and labels them; 80% go to the train split.
pub fn toy_generate(spec: &ToySpec) -> Result<(LabeledDataset, GroundTruthMask)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut features = Vec::with_capacity(spec.instances * spec.features);
    let mut labels = Vec::with_capacity(spec.instances);
    for _ in 0..spec.instances {
        let start = features.len();
        for _ in 0..spec.features {
            features.push(rng.random_range(0..spec.values) as f64);
        }
        labels.push(spec.label_of(&features[start..]));
    }
    let n_train = (spec.instances * 4).div_ceil(5);
    let train = (0..n_train).collect();
    let test = (n_train..spec.instances).collect();
    let ds = LabeledDataset::new(
        vec![spec.features],
        features,
        labels,
        spec.classes,
        spec.value_range(),
    )?
    .with_split(train, test)?;
    let mask = GroundTruthMask::new((0..spec.features).map(|j| j < spec.relevant).collect());
    Ok((ds, mask))
}
