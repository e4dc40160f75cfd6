use std::io::Write;

use serde::{Deserialize, Serialize};

use super::losses::{kl_to_mask, spearman_between};
use crate::attribution::{ig_path_integral, AttributionMap};
use crate::baselines::entropy_curve;
use crate::data::{GroundTruthMask, ValueRange};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::TensorF;

pub const KL_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Kl,
    Spearman,
}

/// What a sweep compares IG maps against.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Mask(GroundTruthMask),
    Map(AttributionMap),
}

impl Reference {
    fn score(&self, values: &[f64], loss: LossKind) -> Result<f64> {
        match (self, loss) {
            (Reference::Mask(m), LossKind::Kl) => kl_to_mask(values, m, KL_EPS),
            (Reference::Mask(m), LossKind::Spearman) => spearman_between(values, &m.values()),
            (Reference::Map(r), LossKind::Spearman) => spearman_between(values, r.values.data()),
            (Reference::Map(_), LossKind::Kl) => Err(Error::Config(
                "the KL loss needs a ground-truth mask reference".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub values: Vec<f64>,
    pub losses: Vec<f64>,
}

impl SweepCurve {
    /// Smallest loss; ties go to the smallest baseline value.
    pub fn argmin(&self) -> (f64, f64) {
        let mut best = (self.values[0], self.losses[0]);
        for (&u, &l) in self.values.iter().zip(&self.losses) {
            if l < best.1 {
                best = (u, l);
            }
        }
        best
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "baseline,loss")?;
        for (u, l) in self.values.iter().zip(&self.losses) {
            writeln!(w, "{u},{l}")?;
        }
        Ok(())
    }
}

/// Scores IG against `reference` for every constant baseline `u * 1` on a
/// `grid_n`-point grid over `range`.
#[allow(clippy::too_many_arguments)]
pub fn baseline_sweep(
    net: &Network,
    x: &TensorF,
    class: usize,
    reference: &Reference,
    range: ValueRange,
    grid_n: usize,
    loss: LossKind,
    ig_steps: usize,
) -> Result<SweepCurve> {
    if grid_n < 2 {
        return Err(Error::Config("a baseline sweep needs at least two grid points".into()));
    }
    let values = range.grid(grid_n);
    let losses = values
        .iter()
        .map(|&u| {
            let b = TensorF::filled(x.shape(), u);
            let ig = ig_path_integral(net, x, &b, ig_steps, class)?;
            reference.score(ig.data(), loss)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepCurve { values, losses })
}

/// Instance-averaged [`baseline_sweep`]: one curve for a whole sample.
#[allow(clippy::too_many_arguments)]
pub fn mean_baseline_sweep(
    net: &Network,
    instances: &[(TensorF, usize)],
    reference: &Reference,
    range: ValueRange,
    grid_n: usize,
    loss: LossKind,
    ig_steps: usize,
) -> Result<SweepCurve> {
    if instances.is_empty() {
        return Err(Error::Config("a mean sweep needs at least one instance".into()));
    }
    let mut acc = vec![0.0; grid_n];
    for (x, class) in instances {
        let c = baseline_sweep(net, x, *class, reference, range, grid_n, loss, ig_steps)?;
        acc.iter_mut().zip(&c.losses).for_each(|(a, l)| *a += l);
    }
    let n = instances.len() as f64;
    Ok(SweepCurve {
        values: range.grid(grid_n),
        losses: acc.into_iter().map(|a| a / n).collect(),
    })
}

/// Where per-instance sweep minima land, next to the entropy-curve peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgminHistogram {
    pub range: ValueRange,
    pub counts: Vec<usize>,
    pub argmins: Vec<f64>,
    /// Centre of the fullest bin; the lowest such bin on ties.
    pub mode: f64,
    pub entropy_argmax: f64,
}

impl ArgminHistogram {
    pub fn bin_of(range: ValueRange, bins: usize, v: f64) -> usize {
        let t = ((v - range.lo) / range.width() * bins as f64).floor();
        (t.max(0.0) as usize).min(bins - 1)
    }

    pub fn bin_width(&self) -> f64 {
        self.range.width() / self.counts.len() as f64
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "bin_lo,bin_hi,count")?;
        let bw = self.bin_width();
        for (i, c) in self.counts.iter().enumerate() {
            let lo = self.range.lo + i as f64 * bw;
            writeln!(w, "{},{},{c}", lo, lo + bw)?;
        }
        Ok(())
    }
}

/// Runs [`baseline_sweep`] per instance and bins the argmins into `bins`
/// equal cells over `range`. `reference_fn` supplies each instance's reference.
#[allow(clippy::too_many_arguments)]
pub fn min_loss_histogram(
    net: &Network,
    instances: &[(TensorF, usize)],
    mut reference_fn: impl FnMut(&TensorF, usize) -> Result<Reference>,
    range: ValueRange,
    grid_n: usize,
    bins: usize,
    loss: LossKind,
    ig_steps: usize,
) -> Result<ArgminHistogram> {
    if bins == 0 || instances.is_empty() {
        return Err(Error::Config("a histogram needs instances and at least one bin".into()));
    }
    let mut counts = vec![0; bins];
    let mut argmins = Vec::with_capacity(instances.len());
    for (x, class) in instances {
        let reference = reference_fn(x, *class)?;
        let (u, _) = baseline_sweep(net, x, *class, &reference, range, grid_n, loss, ig_steps)?.argmin();
        counts[ArgminHistogram::bin_of(range, bins, u)] += 1;
        argmins.push(u);
    }
    let top = counts.iter().copied().max().unwrap_or(0);
    let mode_bin = counts.iter().position(|&c| c == top).unwrap_or(0);
    let bw = range.width() / bins as f64;
    Ok(ArgminHistogram {
        range,
        counts,
        argmins,
        mode: range.lo + (mode_bin as f64 + 0.5) * bw,
        entropy_argmax: entropy_curve(net, range, grid_n)?.argmax().0,
    })
}
