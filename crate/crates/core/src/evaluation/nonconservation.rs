use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::baselines::{entropy_gradient, softmax_entropy};
use crate::data::ValueRange;
use crate::error::{Error, Result};
use crate::nn::{BackwardRule, Network};
use crate::tensor::{softmax, TensorF};

/// Quantity driven down by the demonstration descent. `Entropy` descends on
/// the negated entropy, which orders inputs like its inverse does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoTarget {
    Logit,
    Softmax,
    Entropy,
}

impl DemoTarget {
    pub const ALL: [DemoTarget; 3] = [DemoTarget::Logit, DemoTarget::Softmax, DemoTarget::Entropy];

    pub fn tag(self) -> &'static str {
        match self {
            DemoTarget::Logit => "logit",
            DemoTarget::Softmax => "softmax",
            DemoTarget::Entropy => "entropy",
        }
    }

    /// Value and input gradient of the descended quantity.
    pub fn value_and_gradient(self, net: &Network, x: &TensorF, class: usize) -> Result<(f64, TensorF)> {
        match self {
            DemoTarget::Logit => {
                let (logits, g) = net.pullback(x, BackwardRule::Plain, |z| {
                    let mut c = vec![0.0; z.len()];
                    c[class] = 1.0;
                    c
                })?;
                Ok((logits.data()[class], g))
            }
            DemoTarget::Softmax => {
                let (logits, g) = net.pullback(x, BackwardRule::Plain, |z| {
                    let p = softmax(z);
                    p.iter()
                        .enumerate()
                        .map(|(j, &pj)| p[class] * (if j == class { 1.0 } else { 0.0 } - pj))
                        .collect()
                })?;
                Ok((softmax(logits.data())[class], g))
            }
            DemoTarget::Entropy => {
                let (h, g) = entropy_gradient(net, x)?;
                Ok((-h, g.map(|v| -v)))
            }
        }
    }

    pub fn value(self, net: &Network, x: &TensorF, class: usize) -> Result<f64> {
        let logits = net.forward(x)?;
        Ok(match self {
            DemoTarget::Logit => logits.data()[class],
            DemoTarget::Softmax => softmax(logits.data())[class],
            DemoTarget::Entropy => -softmax_entropy(logits.data()),
        })
    }
}

/// A substitute input placed on the descent curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub name: String,
    pub value: f64,
    /// `value - min_found`; positive means the substitute still carries information.
    pub residue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub target: DemoTarget,
    pub class: usize,
    /// Target value at every iterate, starting point included.
    pub trajectory: Vec<f64>,
    pub min_found: f64,
    pub best: TensorF,
    pub markers: Vec<Marker>,
}

impl DemoReport {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "step,value")?;
        for (i, v) in self.trajectory.iter().enumerate() {
            writeln!(w, "{i},{v}")?;
        }
        Ok(())
    }
}

/// Projected gradient descent on `target` from `start`, clipping into `range`.
#[allow(clippy::too_many_arguments)]
pub fn nonconservation_demo(
    net: &Network,
    target: DemoTarget,
    class: usize,
    start: &TensorF,
    steps: usize,
    lr: f64,
    range: ValueRange,
    substitutes: &[(String, TensorF)],
) -> Result<DemoReport> {
    if class >= net.classes() {
        return Err(Error::ClassOutOfRange {
            class,
            classes: net.classes(),
        });
    }
    if !(lr > 0.0) {
        return Err(Error::Config(format!("descent step must be positive, got {lr}")));
    }
    let mut x = start.clip(range.lo, range.hi);
    let mut trajectory = Vec::with_capacity(steps + 1);
    let mut best = x.clone();
    let mut min_found = f64::INFINITY;
    for t in 0..=steps {
        let (v, g) = target.value_and_gradient(net, &x, class)?;
        if !v.is_finite() || !g.is_finite() {
            return Err(Error::NonFinite {
                what: "descent gradient",
                step: t,
            });
        }
        trajectory.push(v);
        if v < min_found {
            min_found = v;
            best = x.clone();
        }
        if t < steps {
            x = x.zip_with(&g, |xi, gi| range.clamp(xi - lr * gi))?;
        }
    }
    let markers = substitutes
        .iter()
        .map(|(name, s)| {
            let value = target.value(net, s, class)?;
            Ok(Marker {
                name: name.clone(),
                value,
                residue: value - min_found,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DemoReport {
        target,
        class,
        trajectory,
        min_found,
        best,
        markers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Layer};

    fn linear() -> Network {
        Network::new(
            vec![Layer::Dense(Dense::new(2, 2, vec![1.0, -2.0, 0.5, 0.5], vec![0.0, 0.0]).unwrap())],
            vec![2],
        )
        .unwrap()
    }

    #[test]
    fn zero_steps_is_the_start_point() {
        let net = linear();
        let r = ValueRange::new(0.0, 1.0).unwrap();
        let x = TensorF::vector(vec![0.5, 0.5]);
        let rep = nonconservation_demo(&net, DemoTarget::Logit, 0, &x, 0, 0.01, r, &[]).unwrap();
        assert_eq!(rep.trajectory, vec![-0.5]);
        assert_eq!(rep.best, x);
    }

    #[test]
    fn logit_descent_reaches_the_corner() {
        let net = linear();
        let r = ValueRange::new(0.0, 1.0).unwrap();
        let x = TensorF::vector(vec![0.5, 0.5]);
        let subs = vec![("zero".to_string(), TensorF::zeros(&[2]))];
        let rep = nonconservation_demo(&net, DemoTarget::Logit, 0, &x, 1000, 0.01, r, &subs).unwrap();
        assert_eq!(rep.best.data(), &[0.0, 1.0]);
        assert_eq!(rep.min_found, -2.0);
        assert_eq!(rep.markers[0].residue, 2.0);
        assert!(rep.trajectory.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let net = Network::fully_connected(&[3], &[5], 3, 8).unwrap();
        let x = TensorF::vector(vec![0.3, -0.4, 0.8]);
        for target in DemoTarget::ALL {
            let (v, g) = target.value_and_gradient(&net, &x, 2).unwrap();
            assert_eq!(v, target.value(&net, &x, 2).unwrap());
            for i in 0..3 {
                let h = 1e-6;
                let mut a = x.clone();
                let mut b = x.clone();
                a.data_mut()[i] += h;
                b.data_mut()[i] -= h;
                let fd = (target.value(&net, &a, 2).unwrap() - target.value(&net, &b, 2).unwrap()) / (2.0 * h);
                assert!((fd - g.data()[i]).abs() < 1e-7, "{target:?} {i}: {fd} vs {}", g.data()[i]);
            }
        }
    }
}
