use serde::{Deserialize, Serialize};

use crate::attribution::ig_path_integral;
use crate::baselines::logits_entropy;
use crate::data::ValueRange;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::{argmax, TensorF};

/// Attribution differences below this count as invariant.
pub const INVARIANCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftShape {
    Uniform,
    /// Middle row(s) and column(s) of every channel; the first half of a flat input.
    Cross,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub shape: ShiftShape,
    pub amplitude: f64,
}

fn middle(n: usize) -> std::ops::Range<usize> {
    if n % 2 == 0 {
        n / 2 - 1..n / 2 + 1
    } else {
        n / 2..n / 2 + 1
    }
}

impl ShiftSpec {
    pub fn tensor(&self, shape: &[usize]) -> Result<TensorF> {
        let probe = TensorF::zeros(shape);
        match self.shape {
            ShiftShape::Uniform => Ok(TensorF::filled(shape, self.amplitude)),
            ShiftShape::Cross => {
                let mut out = probe.clone();
                match probe.image_dims() {
                    Some((c, h, w)) => {
                        let (rows, cols) = (middle(h), middle(w));
                        let data = out.data_mut();
                        for ch in 0..c {
                            for i in 0..h {
                                for j in 0..w {
                                    if rows.contains(&i) || cols.contains(&j) {
                                        data[(ch * h + i) * w + j] = self.amplitude;
                                    }
                                }
                            }
                        }
                    }
                    None if shape.len() == 1 && shape[0] >= 2 => {
                        let half = shape[0] / 2;
                        out.data_mut()[..half].iter_mut().for_each(|v| *v = self.amplitude);
                    }
                    None => return Err(Error::Unsupported(format!("no cross mask for shape {shape:?}"))),
                }
                Ok(out)
            }
        }
    }
}

/// What happens to the IG baseline when inputs move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselinePolicy {
    Hold,
    /// The baseline moves by the scalar amplitude on every coordinate.
    ShiftWithInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub shift: ShiftSpec,
    pub policy: BaselinePolicy,
    pub instances: usize,
    pub max_abs_diff: f64,
    pub max_logit_diff: f64,
    pub invariant: bool,
}

/// Compares IG of `net` at `x` with IG of its shifted twin at `x + s`,
/// explaining the original prediction with `baseline` (moved per `policy`).
pub fn linear_transform_test(
    net: &Network,
    xs: &[TensorF],
    shift: &ShiftSpec,
    policy: BaselinePolicy,
    baseline: &TensorF,
    ig_steps: usize,
) -> Result<InvarianceReport> {
    let s = shift.tensor(net.input_shape())?;
    let twin = net.with_input_shift(&s)?;
    let moved = match policy {
        BaselinePolicy::Hold => baseline.clone(),
        BaselinePolicy::ShiftWithInput => baseline.map(|v| v + shift.amplitude),
    };
    let mut max_abs_diff: f64 = 0.0;
    let mut max_logit_diff: f64 = 0.0;
    for x in xs {
        let xt = x.add(&s)?;
        let logits = net.forward(x)?;
        max_logit_diff = max_logit_diff.max(logits.max_abs_diff(&twin.forward(&xt)?)?);
        let class = argmax(logits.data());
        let a = ig_path_integral(net, x, baseline, ig_steps, class)?;
        let b = ig_path_integral(&twin, &xt, &moved, ig_steps, class)?;
        max_abs_diff = max_abs_diff.max(a.max_abs_diff(&b)?);
    }
    Ok(InvarianceReport {
        shift: *shift,
        policy,
        instances: xs.len(),
        max_abs_diff,
        max_logit_diff,
        invariant: max_abs_diff < INVARIANCE_TOL,
    })
}

/// Largest `|H_twin(u) - H(u - A)|` over `n` points of the domain both
/// models share, the twin seeing inputs uniformly shifted by `amplitude`.
pub fn entropy_phase_gap(net: &Network, amplitude: f64, range: ValueRange, n: usize) -> Result<f64> {
    let shift = ShiftSpec {
        shape: ShiftShape::Uniform,
        amplitude,
    };
    let twin = net.with_input_shift(&shift.tensor(net.input_shape())?)?;
    let overlap = ValueRange::new(range.lo + amplitude.max(0.0), range.hi + amplitude.min(0.0))
        .map_err(|_| Error::Config(format!("shift {amplitude} leaves no overlap with {range:?}")))?;
    let mut gap: f64 = 0.0;
    for u in overlap.grid(n) {
        let h_twin = logits_entropy(&twin, &TensorF::filled(net.input_shape(), u))?;
        let h = logits_entropy(net, &TensorF::filled(net.input_shape(), u - amplitude))?;
        gap = gap.max((h_twin - h).abs());
    }
    Ok(gap)
}
