use serde::{Deserialize, Serialize};

use crate::attribution::AttributionMap;
use crate::baselines::{gaussian_blur, softmax_entropy};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::{argmax, softmax, TensorF};

/// How many positively attributed coordinates get ablated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fraction {
    AllPositive,
    /// `ceil(p * features)` coordinates, capped at the number of positive ones.
    Of(f64),
}

impl Fraction {
    pub fn validate(self) -> Result<()> {
        match self {
            Fraction::AllPositive => Ok(()),
            Fraction::Of(p) if p > 0.0 && p <= 1.0 => Ok(()),
            Fraction::Of(p) => Err(Error::Config(format!("ablation fraction must be in (0, 1], got {p}"))),
        }
    }

    pub fn tag(self) -> String {
        match self {
            Fraction::AllPositive => "all_positive".into(),
            Fraction::Of(p) => format!("p{p}"),
        }
    }
}

/// Quantity watched while features are removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Logit,
    Softmax,
    Entropy,
}

/// Replacement values for the classic test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Substitute {
    Zero,
    InstanceMin,
    SignFlip,
    Blur { sigma: f64, kernel: usize },
    Fixed(TensorF),
}

impl Substitute {
    pub fn materialize(&self, x: &TensorF) -> Result<TensorF> {
        match self {
            Substitute::Zero => Ok(TensorF::zeros(x.shape())),
            Substitute::InstanceMin => Ok(TensorF::filled(x.shape(), x.min())),
            Substitute::SignFlip => Ok(x.map(|v| -v)),
            Substitute::Blur { sigma, kernel } => gaussian_blur(x, *sigma, *kernel),
            Substitute::Fixed(t) => {
                t.check_shape(x.shape())?;
                Ok(t.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub target: Target,
    /// Always `None` for the entropy target, whose substitute is the
    /// model's maximum-entropy input.
    pub substitute: Option<Substitute>,
    pub fraction: Fraction,
}

impl AblationConfig {
    pub fn classic(target: Target, substitute: Substitute, fraction: Fraction) -> Result<Self> {
        let cfg = Self {
            target,
            substitute: Some(substitute),
            fraction,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn entropy(fraction: Fraction) -> Result<Self> {
        let cfg = Self {
            target: Target::Entropy,
            substitute: None,
            fraction,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.fraction.validate()?;
        match (self.target, &self.substitute) {
            (Target::Entropy, Some(_)) => Err(Error::Config(
                "the entropy test fixes its substitute; do not choose one".into(),
            )),
            (Target::Logit | Target::Softmax, None) => {
                Err(Error::Config("the classic test needs a substitute".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub score: f64,
    pub ablated: usize,
    /// Set when the map had no positive entry; the score is then 0.
    pub no_positive: bool,
}

/// Indices to ablate: positive attributions by descending value, ties by index.
pub fn ablation_indices(attr: &[f64], fraction: Fraction) -> Vec<usize> {
    let mut pos: Vec<usize> = (0..attr.len()).filter(|&i| attr[i] > 0.0).collect();
    pos.sort_by(|&a, &b| attr[b].total_cmp(&attr[a]).then(a.cmp(&b)));
    let keep = match fraction {
        Fraction::AllPositive => pos.len(),
        Fraction::Of(p) => ((p * attr.len() as f64).ceil() as usize).min(pos.len()),
    };
    pos.truncate(keep);
    pos
}

fn ablate(x: &TensorF, substitute: &TensorF, idx: &[usize]) -> TensorF {
    let mut out = x.clone();
    let data = out.data_mut();
    for &i in idx {
        data[i] = substitute.data()[i];
    }
    out
}

fn target_value(net: &Network, x: &TensorF, target: Target, class: usize) -> Result<f64> {
    let logits = net.forward(x)?;
    Ok(match target {
        Target::Logit => logits.data()[class],
        Target::Softmax => softmax(logits.data())[class],
        Target::Entropy => softmax_entropy(logits.data()),
    })
}

fn run(net: &Network, x: &TensorF, attr: &AttributionMap, substitute: &TensorF, fraction: Fraction, target: Target) -> Result<AblationOutcome> {
    fraction.validate()?;
    attr.values.check_shape(x.shape())?;
    substitute.check_shape(x.shape())?;
    let idx = ablation_indices(attr.values.data(), fraction);
    if idx.is_empty() {
        return Ok(AblationOutcome {
            score: 0.0,
            ablated: 0,
            no_positive: true,
        });
    }
    let class = argmax(net.forward(x)?.data());
    let before = target_value(net, x, target, class)?;
    let after = target_value(net, &ablate(x, substitute, &idx), target, class)?;
    let score = match target {
        Target::Entropy => after - before,
        Target::Logit | Target::Softmax => before - after,
    };
    if !score.is_finite() {
        return Err(Error::NonFinite {
            what: "ablation score",
            step: 0,
        });
    }
    Ok(AblationOutcome {
        score,
        ablated: idx.len(),
        no_positive: false,
    })
}

/// Drop of the predicted class's logit or probability after ablation.
pub fn classic_ablation(net: &Network, x: &TensorF, attr: &AttributionMap, cfg: &AblationConfig) -> Result<AblationOutcome> {
    cfg.validate()?;
    let sub = match (&cfg.substitute, cfg.target) {
        (Some(s), Target::Logit | Target::Softmax) => s.materialize(x)?,
        _ => return Err(Error::Config("classic ablation needs a logit or softmax target".into())),
    };
    run(net, x, attr, &sub, cfg.fraction, cfg.target)
}

/// Entropy gained by moving the top positive features onto `substitute`,
/// normally the model's maximum-entropy input.
pub fn entropy_ablation(net: &Network, x: &TensorF, attr: &AttributionMap, substitute: &TensorF, fraction: Fraction) -> Result<AblationOutcome> {
    run(net, x, attr, substitute, fraction, Target::Entropy)
}

/// Entropy-ablation scores over several fractions with their trapezoidal area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionSweep {
    pub fractions: Vec<f64>,
    pub scores: Vec<f64>,
    pub auc: f64,
}

pub fn entropy_ablation_sweep(
    net: &Network,
    x: &TensorF,
    attr: &AttributionMap,
    substitute: &TensorF,
    fractions: &[f64],
) -> Result<FractionSweep> {
    if fractions.is_empty() || fractions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("fractions must be non-empty and strictly increasing".into()));
    }
    let scores = fractions
        .iter()
        .map(|&p| entropy_ablation(net, x, attr, substitute, Fraction::Of(p)).map(|o| o.score))
        .collect::<Result<Vec<_>>>()?;
    let auc = if fractions.len() == 1 {
        scores[0]
    } else {
        fractions
            .windows(2)
            .zip(scores.windows(2))
            .map(|(p, s)| (p[1] - p[0]) * (s[0] + s[1]) / 2.0)
            .sum()
    };
    Ok(FractionSweep {
        fractions: fractions.to_vec(),
        scores,
        auc,
    })
}
