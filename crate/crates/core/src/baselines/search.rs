use serde::{Deserialize, Serialize};

use super::entropy::{entropy_gradient, logits_entropy};
use crate::data::ValueRange;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::TensorF;

/// Result of the scalar search over constant inputs `u * 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformSearch {
    pub value: f64,
    pub entropy: f64,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizes `H(softmax(f(u * 1)))` over `u` in `range`.
///
/// A dense grid scan picks the best cell (ties to the smallest `u`), then
/// golden-section search refines inside the neighbouring cells. The refined
/// point replaces the grid winner only if it is strictly better.
pub fn max_entropy_uniform(net: &Network, range: ValueRange, grid_n: usize, refine_iters: usize) -> Result<UniformSearch> {
    if grid_n < 3 {
        return Err(Error::Spec("the uniform search grid needs at least 3 points".into()));
    }
    let shape = net.input_shape().to_vec();
    let eval = |u: f64| logits_entropy(net, &TensorF::filled(&shape, u));
    let grid = range.grid(grid_n);
    let mut best_i = 0;
    let mut best_h = eval(grid[0])?;
    for (i, &u) in grid.iter().enumerate().skip(1) {
        let h = eval(u)?;
        if h > best_h {
            best_i = i;
            best_h = h;
        }
    }
    let mut best = UniformSearch {
        value: grid[best_i],
        entropy: best_h,
    };

    let mut a = grid[best_i.saturating_sub(1)];
    let mut b = grid[(best_i + 1).min(grid_n - 1)];
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut hc = eval(c)?;
    let mut hd = eval(d)?;
    for _ in 0..refine_iters {
        if hc >= hd {
            b = d;
            d = c;
            hd = hc;
            c = b - INV_PHI * (b - a);
            hc = eval(c)?;
        } else {
            a = c;
            c = d;
            hc = hd;
            d = a + INV_PHI * (b - a);
            hd = eval(d)?;
        }
    }
    for (u, h) in [(c, hc), (d, hd)] {
        if h > best.entropy {
            best = UniformSearch { value: u, entropy: h };
        }
    }
    Ok(best)
}

/// Outcome of projected entropy ascent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentResult {
    /// Best iterate seen, not necessarily the last.
    pub best: TensorF,
    pub entropy: f64,
    /// Best-so-far entropy after each step, starting with the entropy at `x0`.
    pub trajectory: Vec<f64>,
}

/// Projected gradient ascent on the logits entropy, clipping into `range` after every step.
///
/// Steps are taken along the gradient scaled to unit max-norm, with length
/// `lr` at most. A step that does not improve the best entropy is rejected
/// and the step length halved; an accepted step grows it back towards `lr`.
/// Ascent stops early once the step length falls below `1e-12` of the range.
pub fn max_entropy_full(net: &Network, x0: &TensorF, steps: usize, lr: f64, range: ValueRange) -> Result<AscentResult> {
    if steps < 1 {
        return Err(Error::Spec("entropy ascent needs at least one step".into()));
    }
    if !(lr > 0.0) {
        return Err(Error::Spec(format!("ascent step must be positive, got {lr}")));
    }
    let mut x = x0.clip(range.lo, range.hi);
    let (mut h, mut g) = entropy_gradient(net, &x)?;
    let mut trajectory = Vec::with_capacity(steps + 1);
    trajectory.push(h);
    let mut step = lr;
    let floor = 1e-12 * range.width().max(f64::MIN_POSITIVE);
    for t in 1..=steps {
        if !g.is_finite() {
            return Err(Error::NonFinite {
                what: "entropy gradient",
                step: t,
            });
        }
        let scale = g.max_abs();
        if scale == 0.0 || step < floor {
            break;
        }
        let k = step / scale;
        let cand = x.zip_with(&g, |xi, gi| range.clamp(xi + k * gi))?;
        let (hc, gc) = entropy_gradient(net, &cand)?;
        if hc > h {
            x = cand;
            h = hc;
            g = gc;
            step = (step * 1.2).min(lr);
        } else {
            step *= 0.5;
        }
        trajectory.push(h);
    }
    Ok(AscentResult {
        best: x,
        entropy: h,
        trajectory,
    })
}

/// Checks that no probe carries more entropy than `baseline` (beyond `tol`).
///
/// Every violating probe warm-starts a fresh ascent; the better result
/// replaces `baseline`. Returns how many warm restarts were needed.
pub fn ensure_conservation(
    net: &Network,
    baseline: &mut AscentResult,
    probes: &[TensorF],
    steps: usize,
    lr: f64,
    range: ValueRange,
    tol: f64,
) -> Result<usize> {
    let mut restarts = 0;
    for probe in probes {
        let h = logits_entropy(net, probe)?;
        if h > baseline.entropy + tol {
            restarts += 1;
            let warm = max_entropy_full(net, probe, steps, lr, range)?;
            if warm.entropy > baseline.entropy {
                *baseline = warm;
            }
        }
    }
    Ok(restarts)
}
