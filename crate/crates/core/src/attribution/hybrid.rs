use serde::{Deserialize, Serialize};

use super::{AttributionMap, Explainer, Method};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::evaluation::{entropy_ablation, Fraction};
use crate::tensor::TensorF;

/// Non-negative explainer weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridWeights {
    weights: Vec<f64>,
    /// True when every score was non-positive and uniform weights were substituted.
    pub fallback: bool,
    /// How the scores behind the weights were obtained.
    pub scoring: String,
}

impl HybridWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Spec("hybrid weights need at least one entry".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::Spec("hybrid weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Spec("hybrid weights must not all be zero".into()));
        }
        Ok(Self {
            weights: weights.into_iter().map(|w| w / total).collect(),
            fallback: false,
            scoring: "given".into(),
        })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    /// Clips scores at zero and normalizes; falls back to uniform if nothing is positive.
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        let clipped: Vec<f64> = scores.iter().map(|&s| if s > 0.0 { s } else { 0.0 }).collect();
        if clipped.iter().all(|&s| s == 0.0) {
            let mut w = Self::uniform(scores.len())?;
            w.fallback = true;
            return Ok(w);
        }
        Self::new(clipped)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Weighted sum of maps, each first scaled to unit max-absolute value.
pub fn combine_maps(maps: &[AttributionMap], weights: &HybridWeights) -> Result<TensorF> {
    if maps.is_empty() {
        return Err(Error::Spec("the hybrid explainer needs at least one method".into()));
    }
    if maps.len() != weights.len() {
        return Err(Error::Spec(format!(
            "{} maps but {} weights",
            maps.len(),
            weights.len()
        )));
    }
    let mut acc = TensorF::zeros(maps[0].values.shape());
    for (m, &w) in maps.iter().zip(weights.weights()) {
        let peak = m.values.max_abs();
        if peak == 0.0 || w == 0.0 {
            continue;
        }
        acc = acc.zip_with(&m.values, |a, v| a + w * v / peak)?;
    }
    Ok(acc)
}

/// Score-weighted vote over several explainers: an approximate ground truth.
pub fn hybrid_explain(
    explainer: &Explainer<'_, '_>,
    x: &TensorF,
    class: usize,
    methods: &[Method],
    weights: &HybridWeights,
    seed: u64,
) -> Result<AttributionMap> {
    if methods.is_empty() {
        return Err(Error::Spec("the hybrid explainer needs at least one method".into()));
    }
    let maps = methods
        .iter()
        .map(|&m| explainer.explain(m, x, class, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(AttributionMap {
        values: combine_maps(&maps, weights)?,
        class,
        method: "hybrid".into(),
        baseline: None,
    })
}

/// Weights from each method's mean entropy-ablation score over `indices`.
pub fn compute_hybrid_weights(
    explainer: &Explainer<'_, '_>,
    data: &LabeledDataset,
    indices: &[usize],
    methods: &[Method],
    fraction: Fraction,
    seed: u64,
) -> Result<HybridWeights> {
    if methods.is_empty() {
        return Err(Error::Spec("the hybrid explainer needs at least one method".into()));
    }
    let net = explainer.network();
    let substitute = explainer.factory.max_entropy_full()?.best.clone();
    let mut scores = vec![0.0; methods.len()];
    for &i in indices {
        let x = data.instance(i);
        let class = net.predict(&x)?;
        for (s, &m) in scores.iter_mut().zip(methods) {
            let attr = explainer.explain(m, &x, class, seed ^ i as u64)?;
            *s += entropy_ablation(net, &x, &attr, &substitute, fraction)?.score;
        }
    }
    let n = indices.len().max(1) as f64;
    scores.iter_mut().for_each(|s| *s /= n);
    let mut w = HybridWeights::from_scores(&scores)?;
    w.scoring = "mean entropy-ablation score".into();
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{gradient_x_input, vanilla_gradient};
    use crate::nn::{Dense, Layer, Network};

    fn map(v: &[f64]) -> AttributionMap {
        AttributionMap {
            values: TensorF::vector(v.to_vec()),
            class: 0,
            method: "m".into(),
            baseline: None,
        }
    }

    #[test]
    fn single_method_gives_its_normalized_map() {
        let out = combine_maps(&[map(&[2.0, -4.0, 1.0])], &HybridWeights::uniform(1).unwrap()).unwrap();
        assert_eq!(out.data(), &[0.5, -1.0, 0.25]);
    }

    #[test]
    fn identical_maps_are_a_fixed_point() {
        let m = map(&[0.5, -1.0, 0.25]);
        let w = HybridWeights::new(vec![0.3, 0.7]).unwrap();
        let out = combine_maps(&[m.clone(), m.clone()], &w).unwrap();
        assert!(out.max_abs_diff(&m.values).unwrap() < 1e-15);
    }

    #[test]
    fn equal_weights_over_vanilla_and_gradient_x_input() {
        // logit0 = 2 x0 - x1; at x = (0.5, 3): vanilla (2, -1), grad*input (1, -3)
        let net = Network::new(
            vec![Layer::Dense(Dense::new(2, 1, vec![2.0, -1.0], vec![0.0]).unwrap())],
            vec![2],
        )
        .unwrap();
        let x = TensorF::vector(vec![0.5, 3.0]);
        let maps = [
            vanilla_gradient(&net, &x, 0).unwrap(),
            gradient_x_input(&net, &x, 0).unwrap(),
        ];
        let out = combine_maps(&maps, &HybridWeights::uniform(2).unwrap()).unwrap();
        // normalized: (1, -0.5) and (1/3, -1); mean (2/3, -3/4)
        assert!((out.data()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((out.data()[1] + 0.75).abs() < 1e-15);
    }

    #[test]
    fn weight_normalization() {
        let w = HybridWeights::from_scores(&[0.2, 0.3, 0.5]).unwrap();
        for (a, b) in w.weights().iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(!w.fallback);
        let eq = HybridWeights::from_scores(&[0.4, 0.4]).unwrap();
        assert_eq!(eq.weights(), &[0.5, 0.5]);
        let dom = HybridWeights::from_scores(&[5.0, -1.0, 0.0]).unwrap();
        assert_eq!(dom.weights(), &[1.0, 0.0, 0.0]);
        let fb = HybridWeights::from_scores(&[-1.0, 0.0]).unwrap();
        assert!(fb.fallback);
        assert_eq!(fb.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn invalid_weights_and_empty_methods() {
        assert!(HybridWeights::new(vec![]).is_err());
        assert!(HybridWeights::new(vec![-0.1, 1.0]).is_err());
        assert!(combine_maps(&[], &HybridWeights::uniform(1).unwrap()).is_err());
        assert!(combine_maps(&[map(&[1.0])], &HybridWeights::uniform(2).unwrap()).is_err());
    }
}
