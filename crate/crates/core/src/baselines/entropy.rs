use serde::{Deserialize, Serialize};

use crate::data::ValueRange;
use crate::error::{Error, Result};
use crate::nn::{BackwardRule, Network};
use crate::tensor::{softmax, TensorF};

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if p.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Spec("probabilities must be finite and non-negative".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Spec(format!("probabilities sum to {total}, not 1")));
    }
    Ok(p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum())
}

/// Entropy of softmaxed logits, computed through log-softmax so saturated
/// logits do not lose precision.
pub(crate) fn softmax_entropy(logits: &[f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    let h: f64 = logits
        .iter()
        .map(|&z| {
            let logp = z - lse;
            -logp.exp() * logp
        })
        .sum();
    h.max(0.0)
}

/// `H(softmax(f(x)))`.
pub fn logits_entropy(net: &Network, x: &TensorF) -> Result<f64> {
    Ok(softmax_entropy(net.forward(x)?.data()))
}

/// Logits entropy and its gradient with respect to the input.
///
/// With `p = softmax(z)`, `dH/dz_j = -p_j (ln p_j + H)`.
pub fn entropy_gradient(net: &Network, x: &TensorF) -> Result<(f64, TensorF)> {
    let mut h = 0.0;
    let (_, grad) = net.pullback(x, BackwardRule::Plain, |z| {
        h = softmax_entropy(z);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        let p = softmax(z);
        z.iter()
            .zip(&p)
            .map(|(&zj, &pj)| -pj * ((zj - lse) + h))
            .collect()
    })?;
    Ok((h, grad))
}

/// Entropy of the model at constant inputs swept over a value range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyCurve {
    pub range: ValueRange,
    /// `(u, H(softmax(f(u * 1))))`, ordered by `u`.
    pub samples: Vec<(f64, f64)>,
}

impl EntropyCurve {
    /// Sample with the highest entropy; ties go to the smallest `u`.
    pub fn argmax(&self) -> (f64, f64) {
        let mut best = self.samples[0];
        for &s in &self.samples[1..] {
            if s.1 > best.1 {
                best = s;
            }
        }
        best
    }

    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "u,entropy")?;
        for (u, h) in &self.samples {
            writeln!(w, "{u},{h}")?;
        }
        Ok(())
    }
}

pub fn entropy_curve(net: &Network, range: ValueRange, n_samples: usize) -> Result<EntropyCurve> {
    if n_samples < 2 {
        return Err(Error::Spec("an entropy curve needs at least 2 samples".into()));
    }
    let shape = net.input_shape().to_vec();
    let samples = range
        .grid(n_samples)
        .into_iter()
        .map(|u| Ok((u, logits_entropy(net, &TensorF::filled(&shape, u))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EntropyCurve { range, samples })
}
