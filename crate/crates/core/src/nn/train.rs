use std::ops::Deref;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{BackwardRule, Layer, ParamGrad};
use super::network::Network;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::{softmax, TensorF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// A network whose weights are frozen. Dereferences to [`Network`] for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNetwork(Network);

impl TrainedNetwork {
    pub fn freeze(net: Network) -> Self {
        Self(net)
    }

    pub fn network(&self) -> &Network {
        &self.0
    }

    pub fn into_inner(self) -> Network {
        self.0
    }
}

impl Deref for TrainedNetwork {
    type Target = Network;

    fn deref(&self) -> &Network {
        &self.0
    }
}

/// Fraction of `indices` that `net` classifies correctly.
pub fn accuracy(net: &Network, data: &LabeledDataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for &i in indices {
        if net.predict(&data.instance(i))? == data.label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / indices.len() as f64)
}

struct AdamState {
    m: Vec<ParamGrad>,
    v: Vec<ParamGrad>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Mini-batch training on softmax cross-entropy over the dataset's train split.
///
/// Deterministic for a fixed `cfg.seed`: batches are drawn from a seeded
/// shuffle and gradients are summed in index order.
pub fn train(mut net: Network, data: &LabeledDataset, cfg: &TrainConfig) -> Result<(TrainedNetwork, TrainReport)> {
    cfg.validate()?;
    if net.layers().iter().any(|l| matches!(l, Layer::Softmax)) {
        return Err(Error::Spec("softmax layers are evaluation-only and cannot be trained".into()));
    }
    if data.is_empty() || data.train_indices().is_empty() {
        return Err(Error::Spec("training needs a non-empty train split".into()));
    }
    if data.classes() > net.classes() {
        return Err(Error::Spec(format!(
            "dataset has {} classes but the network only {}",
            data.classes(),
            net.classes()
        )));
    }
    data.feature_shape_matches(net.input_shape())?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = data.train_indices().to_vec();
    let mut adam = AdamState {
        m: net.layers().iter().map(Layer::zero_grad).collect(),
        v: net.layers().iter().map(Layer::zero_grad).collect(),
        t: 0,
    };
    let mut final_loss = f64::NAN;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads: Vec<ParamGrad> = net.layers().iter().map(Layer::zero_grad).collect();
            for &i in batch {
                epoch_loss += accumulate_example(&net, &data.instance(i), data.label(i), &mut grads)?;
            }
            for g in &mut grads {
                g.scale(1.0 / batch.len() as f64);
            }
            match cfg.optimizer {
                Optimizer::Sgd => sgd_step(&mut net, &grads, cfg.learning_rate),
                Optimizer::Adam => adam_step(&mut net, &grads, &mut adam, cfg.learning_rate),
            }
        }
        epoch_loss /= order.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: epoch_loss,
            });
        }
        final_loss = epoch_loss;
    }

    let report = TrainReport {
        epochs: cfg.epochs,
        final_loss,
        train_accuracy: accuracy(&net, data, data.train_indices())?,
        test_accuracy: accuracy(&net, data, data.test_indices())?,
    };
    Ok((TrainedNetwork(net), report))
}

/// Adds one example's cross-entropy gradient into `grads` and returns its loss.
fn accumulate_example(net: &Network, x: &TensorF, label: usize, grads: &mut [ParamGrad]) -> Result<f64> {
    let (traces, logits) = net.forward_traced(x)?;
    let p = softmax(logits.data());
    let loss = if p[label].is_nan() {
        f64::NAN
    } else {
        -p[label].max(f64::MIN_POSITIVE).ln()
    };
    let mut g = p;
    g[label] -= 1.0;
    let mut g = TensorF::vector(g);
    for ((layer, trace), pg) in net.layers().iter().zip(&traces).zip(grads.iter_mut()).rev() {
        layer.accumulate_params(trace, &g, pg);
        g = layer.backward(trace, &g, BackwardRule::Plain);
    }
    Ok(loss)
}

fn sgd_step(net: &mut Network, grads: &[ParamGrad], lr: f64) {
    for (layer, g) in net.layers_mut().iter_mut().zip(grads) {
        if let Some((w, b)) = layer.params_mut() {
            w.iter_mut().zip(&g.weights).for_each(|(p, d)| *p -= lr * d);
            b.iter_mut().zip(&g.bias).for_each(|(p, d)| *p -= lr * d);
        }
    }
}

fn adam_step(net: &mut Network, grads: &[ParamGrad], state: &mut AdamState, lr: f64) {
    state.t += 1;
    let c1 = 1.0 - BETA1.powi(state.t);
    let c2 = 1.0 - BETA2.powi(state.t);
    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..p.len() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            p[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
        }
    };
    for (((layer, g), m), v) in net
        .layers_mut()
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        if let Some((w, b)) = layer.params_mut() {
            update(w, &g.weights, &mut m.weights, &mut v.weights);
            update(b, &g.bias, &mut m.bias, &mut v.bias);
        }
    }
}
