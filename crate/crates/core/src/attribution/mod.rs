//! Gradient-based explainers and the weighted hybrid vote.

mod hybrid;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineFactory, BaselineKind, BaselineSpec};
use crate::error::{Error, Result};
use crate::nn::{BackwardRule, Network};
use crate::tensor::TensorF;

pub use hybrid::{compute_hybrid_weights, hybrid_explain, HybridWeights};

/// Signed per-feature attribution for one explained class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    pub values: TensorF,
    pub class: usize,
    pub method: String,
    pub baseline: Option<String>,
}

impl AttributionMap {
    fn new(values: TensorF, class: usize, method: &str) -> Result<Self> {
        if !values.is_finite() {
            return Err(Error::NonFinite {
                what: "attribution",
                step: 0,
            });
        }
        Ok(Self {
            values,
            class,
            method: method.to_string(),
            baseline: None,
        })
    }
}

/// Explainers the toolkit can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Method {
    /// Standard-normal noise; the comparison reference.
    Random,
    Vanilla,
    GradientXInput,
    SmoothGrad,
    GuidedBackprop,
    GuidedBackpropSmoothGrad,
    IntegratedGradients(BaselineKind),
}

impl Method {
    /// The gradient family without IG, in reporting order.
    pub const GRADIENT_FAMILY: [Method; 5] = [
        Method::Vanilla,
        Method::GradientXInput,
        Method::GuidedBackprop,
        Method::GuidedBackpropSmoothGrad,
        Method::SmoothGrad,
    ];

    pub fn tag(&self) -> String {
        match self {
            Method::Random => "random".into(),
            Method::Vanilla => "vanilla".into(),
            Method::GradientXInput => "gradient_x_input".into(),
            Method::SmoothGrad => "smoothgrad".into(),
            Method::GuidedBackprop => "guided_backprop".into(),
            Method::GuidedBackpropSmoothGrad => "guided_backprop_sg".into(),
            Method::IntegratedGradients(b) => format!("ig:{b}"),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "random" => Method::Random,
            "vanilla" => Method::Vanilla,
            "gradient_x_input" => Method::GradientXInput,
            "smoothgrad" => Method::SmoothGrad,
            "guided_backprop" => Method::GuidedBackprop,
            "guided_backprop_sg" => Method::GuidedBackpropSmoothGrad,
            other => match other.strip_prefix("ig:") {
                Some(b) => Method::IntegratedGradients(b.parse()?),
                None => return Err(Error::Config(format!("unknown method `{other}`"))),
            },
        })
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.tag()
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// `(x - x') * mean of the gradients at the midpoints of `steps` equal path segments.
pub fn ig_path_integral(net: &Network, x: &TensorF, baseline: &TensorF, steps: usize, class: usize) -> Result<TensorF> {
    baseline.check_shape(x.shape())?;
    if steps < 1 {
        return Err(Error::Spec("integrated gradients needs at least one step".into()));
    }
    let delta = x.sub(baseline)?;
    let mut total = TensorF::zeros(x.shape());
    for i in 1..=steps {
        let alpha = (i as f64 - 0.5) / steps as f64;
        let point = baseline.zip_with(&delta, |b, d| b + alpha * d)?;
        let g = net.input_gradient(&point, class)?;
        if !g.is_finite() {
            return Err(Error::NonFinite {
                what: "gradient",
                step: i,
            });
        }
        total.data_mut().iter_mut().zip(g.data()).for_each(|(t, v)| *t += v);
    }
    delta.zip_with(&total, |d, t| d * t / steps as f64)
}

pub fn integrated_gradients(
    net: &Network,
    x: &TensorF,
    baseline: &BaselineSpec,
    steps: usize,
    class: usize,
) -> Result<AttributionMap> {
    let values = ig_path_integral(net, x, &baseline.values, steps, class)?;
    let mut map = AttributionMap::new(values, class, &Method::IntegratedGradients(baseline.kind).tag())?;
    map.baseline = Some(baseline.kind.tag().to_string());
    Ok(map)
}

pub fn vanilla_gradient(net: &Network, x: &TensorF, class: usize) -> Result<AttributionMap> {
    AttributionMap::new(net.input_gradient(x, class)?, class, "vanilla")
}

pub fn gradient_x_input(net: &Network, x: &TensorF, class: usize) -> Result<AttributionMap> {
    AttributionMap::new(x.mul(&net.input_gradient(x, class)?)?, class, "gradient_x_input")
}

pub fn guided_backprop(net: &Network, x: &TensorF, class: usize) -> Result<AttributionMap> {
    AttributionMap::new(net.guided_input_gradient(x, class)?, class, "guided_backprop")
}

/// SmoothGrad settings. Noise std is `noise_fraction * (hi - lo)` of the value range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothGradConfig {
    pub samples: usize,
    pub noise_fraction: f64,
}

impl Default for SmoothGradConfig {
    fn default() -> Self {
        Self {
            samples: 50,
            noise_fraction: 0.15,
        }
    }
}

fn smoothed(
    net: &Network,
    x: &TensorF,
    class: usize,
    samples: usize,
    noise_std: f64,
    seed: u64,
    rule: BackwardRule,
) -> Result<TensorF> {
    if samples < 1 {
        return Err(Error::Spec("smoothgrad needs at least one sample".into()));
    }
    let grad = |p: &TensorF| match rule {
        BackwardRule::Plain => net.input_gradient(p, class),
        BackwardRule::Guided => net.guided_input_gradient(p, class),
    };
    if noise_std == 0.0 {
        return grad(x);
    }
    let normal = Normal::new(0.0, noise_std).map_err(|e| Error::Config(format!("bad smoothgrad noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = TensorF::zeros(x.shape());
    for _ in 0..samples {
        let mut noisy = x.clone();
        noisy.data_mut().iter_mut().for_each(|v| *v += normal.sample(&mut rng));
        let g = grad(&noisy)?;
        total.data_mut().iter_mut().zip(g.data()).for_each(|(t, v)| *t += v);
    }
    Ok(total.scale(1.0 / samples as f64))
}

/// Mean vanilla gradient over `samples` Gaussian perturbations of `x` with absolute std `noise_std`.
pub fn smoothgrad(net: &Network, x: &TensorF, class: usize, samples: usize, noise_std: f64, seed: u64) -> Result<AttributionMap> {
    let v = smoothed(net, x, class, samples, noise_std, seed, BackwardRule::Plain)?;
    AttributionMap::new(v, class, "smoothgrad")
}

pub fn guided_backprop_sg(
    net: &Network,
    x: &TensorF,
    class: usize,
    samples: usize,
    noise_std: f64,
    seed: u64,
) -> Result<AttributionMap> {
    let v = smoothed(net, x, class, samples, noise_std, seed, BackwardRule::Guided)?;
    AttributionMap::new(v, class, "guided_backprop_sg")
}

pub fn random_saliency(shape: &[usize], class: usize, seed: u64) -> AttributionMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    AttributionMap {
        values: TensorF::new(shape.to_vec(), data).expect("shape product"),
        class,
        method: "random".into(),
        baseline: None,
    }
}

/// Settings shared by every explainer run through [`Explainer`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainerConfig {
    pub ig_steps: usize,
    pub smoothgrad: SmoothGradConfig,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            ig_steps: 100,
            smoothgrad: SmoothGradConfig::default(),
        }
    }
}

/// Runs any [`Method`] against one model, drawing IG baselines from a factory.
pub struct Explainer<'f, 'a> {
    pub factory: &'f BaselineFactory<'a>,
    pub config: ExplainerConfig,
}

impl<'f, 'a> Explainer<'f, 'a> {
    pub fn new(factory: &'f BaselineFactory<'a>, config: ExplainerConfig) -> Self {
        Self { factory, config }
    }

    pub fn network(&self) -> &Network {
        self.factory.network()
    }

    /// `seed` drives every stochastic piece (noise baselines, SmoothGrad, random maps).
    pub fn explain(&self, method: Method, x: &TensorF, class: usize, seed: u64) -> Result<AttributionMap> {
        let net = self.network();
        let noise = self.config.smoothgrad.noise_fraction * self.factory.range().width();
        let samples = self.config.smoothgrad.samples;
        match method {
            Method::Random => Ok(random_saliency(x.shape(), class, seed)),
            Method::Vanilla => vanilla_gradient(net, x, class),
            Method::GradientXInput => gradient_x_input(net, x, class),
            Method::SmoothGrad => smoothgrad(net, x, class, samples, noise, seed),
            Method::GuidedBackprop => guided_backprop(net, x, class),
            Method::GuidedBackpropSmoothGrad => guided_backprop_sg(net, x, class, samples, noise, seed),
            Method::IntegratedGradients(kind) => {
                let b = self.factory.build(kind, x, seed)?;
                integrated_gradients(net, x, &b, self.config.ig_steps, class)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::BaselineParams;
    use crate::data::ValueRange;
    use crate::nn::{Dense, Layer};

    fn linear() -> Network {
        Network::new(
            vec![Layer::Dense(
                Dense::new(3, 2, vec![0.5, -1.5, 2.0, 1.0, 0.25, -0.75], vec![0.1, -0.2]).unwrap(),
            )],
            vec![3],
        )
        .unwrap()
    }

    fn spec(values: TensorF) -> BaselineSpec {
        BaselineSpec {
            kind: BaselineKind::Zero,
            values,
            seed: 0,
            entropy: 0.0,
        }
    }

    #[test]
    fn ig_of_baseline_itself_is_zero() {
        let net = Network::fully_connected(&[3], &[5], 2, 1).unwrap();
        let x = TensorF::vector(vec![0.3, -0.2, 0.8]);
        let m = integrated_gradients(&net, &x, &spec(x.clone()), 100, 1).unwrap();
        assert!(m.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ig_on_linear_model_is_exact_at_any_step_count() {
        let net = linear();
        let x = TensorF::vector(vec![0.9, -0.4, 0.3]);
        let b = TensorF::vector(vec![0.1, 0.2, -0.5]);
        let w = [0.5, -1.5, 2.0];
        for steps in [1, 3, 100] {
            let m = integrated_gradients(&net, &x, &spec(b.clone()), steps, 0).unwrap();
            for j in 0..3 {
                let exact = w[j] * (x.data()[j] - b.data()[j]);
                assert!((m.values.data()[j] - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ig_rejects_mismatched_baseline_and_zero_steps() {
        let net = linear();
        let x = TensorF::vector(vec![0.0; 3]);
        assert!(integrated_gradients(&net, &x, &spec(TensorF::vector(vec![0.0; 2])), 10, 0).is_err());
        assert!(integrated_gradients(&net, &x, &spec(x.clone()), 0, 0).is_err());
    }

    #[test]
    fn gradient_x_input_closed_forms() {
        let net = linear();
        let zero = gradient_x_input(&net, &TensorF::zeros(&[3]), 1).unwrap();
        assert!(zero.values.data().iter().all(|&v| v == 0.0));
        let x = TensorF::vector(vec![2.0, -1.0, 0.5]);
        let m = gradient_x_input(&net, &x, 1).unwrap();
        assert_eq!(m.values.data(), &[2.0, -0.25, -0.375]);
        let ig = integrated_gradients(&net, &x, &spec(TensorF::zeros(&[3])), 7, 1).unwrap();
        assert!(m.values.max_abs_diff(&ig.values).unwrap() < 1e-12);
    }

    #[test]
    fn vanilla_is_weight_row_and_zero_for_zero_net() {
        let m = vanilla_gradient(&linear(), &TensorF::vector(vec![1.0, 2.0, 3.0]), 0).unwrap();
        assert_eq!(m.values.data(), &[0.5, -1.5, 2.0]);
        let zero = Network::new(vec![Layer::Dense(Dense::new(3, 2, vec![0.0; 6], vec![0.0; 2]).unwrap())], vec![3]).unwrap();
        let z = vanilla_gradient(&zero, &TensorF::vector(vec![1.0, 2.0, 3.0]), 1).unwrap();
        assert!(z.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn smoothgrad_without_noise_is_vanilla() {
        let net = Network::fully_connected(&[4], &[6], 3, 2).unwrap();
        let x = TensorF::vector(vec![0.1, 0.2, -0.3, 0.4]);
        let v = vanilla_gradient(&net, &x, 2).unwrap();
        assert_eq!(smoothgrad(&net, &x, 2, 50, 0.0, 9).unwrap().values, v.values);
        let g = guided_backprop(&net, &x, 2).unwrap();
        assert_eq!(guided_backprop_sg(&net, &x, 2, 50, 0.0, 9).unwrap().values, g.values);
        assert!(smoothgrad(&net, &x, 2, 0, 0.1, 9).is_err());
    }

    #[test]
    fn smoothgrad_two_samples_by_hand() {
        let net = Network::fully_connected(&[3], &[5], 2, 6).unwrap();
        let x = TensorF::vector(vec![0.4, -0.1, 0.7]);
        let std = 0.3;
        let normal = Normal::new(0.0, std).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut manual = TensorF::zeros(&[3]);
        for _ in 0..2 {
            let mut noisy = x.clone();
        noisy.data_mut().iter_mut().for_each(|v| *v += normal.sample(&mut rng));
            manual = manual.add(&net.input_gradient(&noisy, 1).unwrap()).unwrap();
        }
        let manual = manual.scale(0.5);
        let sg = smoothgrad(&net, &x, 1, 2, std, 77).unwrap();
        assert!(sg.values.max_abs_diff(&manual).unwrap() < 1e-15);
        assert_eq!(sg, smoothgrad(&net, &x, 1, 2, std, 77).unwrap());
    }

    #[test]
    fn method_tags_round_trip() {
        let mut all: Vec<Method> = vec![Method::Random];
        all.extend(Method::GRADIENT_FAMILY);
        all.extend(BaselineKind::ALL.map(Method::IntegratedGradients));
        for m in all {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!("ig:nope".parse::<Method>().is_err());
    }

    #[test]
    fn explainer_dispatches_ig_with_baseline_tag() {
        let net = linear();
        let f = BaselineFactory::new(&net, ValueRange::new(-1.0, 1.0).unwrap(), BaselineParams::default(), 0);
        let e = Explainer::new(&f, ExplainerConfig::default());
        let m = e
            .explain(Method::IntegratedGradients(BaselineKind::Zero), &TensorF::vector(vec![0.5, 0.5, 0.5]), 0, 0)
            .unwrap();
        assert_eq!(m.method, "ig:zero");
        assert_eq!(m.baseline.as_deref(), Some("zero"));
    }
}
