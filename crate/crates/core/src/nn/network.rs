use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{BackwardRule, Conv2D, Dense, Layer, Trace};
use crate::error::{Error, Result};
use crate::tensor::TensorF;

/// An ordered stack of layers mapping an input of `input_shape` to `classes` logits.
///
/// All inference and gradient methods take `&self`; a network is never
/// mutated after construction except by [`crate::nn::train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    classes: usize,
}

impl Network {
    pub fn new(layers: Vec<Layer>, input_shape: Vec<usize>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Spec("a network needs at least one layer".into()));
        }
        if let Some(pos) = layers.iter().position(|l| matches!(l, Layer::Softmax)) {
            if pos + 1 != layers.len() {
                return Err(Error::Spec(
                    "softmax may only appear as the final, evaluation-only layer".into(),
                ));
            }
        }
        let mut shape = input_shape.clone();
        for layer in &layers {
            shape = layer.output_shape(&shape)?;
        }
        if shape.len() != 1 {
            return Err(Error::Spec(format!(
                "network output must be a vector of logits, got shape {shape:?}"
            )));
        }
        Ok(Self {
            layers,
            input_shape,
            classes: shape[0],
        })
    }

    /// Dense ReLU stack; image-shaped inputs are flattened first.
    pub fn fully_connected(input_shape: &[usize], hidden: &[usize], classes: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        if input_shape.len() != 1 {
            layers.push(Layer::Flatten);
        }
        let mut width: usize = input_shape.iter().product();
        for &h in hidden {
            layers.push(Layer::Dense(Dense::init(width, h, &mut rng)));
            layers.push(Layer::Relu);
            width = h;
        }
        layers.push(Layer::Dense(Dense::init(width, classes, &mut rng)));
        Self::new(layers, input_shape.to_vec())
    }

    /// `conv(k) -> relu -> maxpool -> flatten -> [dense -> relu]* -> dense`.
    pub fn small_cnn(
        input_shape: &[usize],
        channels: usize,
        kernel_size: usize,
        hidden: &[usize],
        classes: usize,
        seed: u64,
    ) -> Result<Self> {
        let in_channels = match *input_shape {
            [c, _, _] => c,
            _ => {
                return Err(Error::Unsupported(format!(
                    "convolutional networks need a [c, h, w] input, got {input_shape:?}"
                )))
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv = Conv2D::init(in_channels, channels, kernel_size, &mut rng);
        let mut layers = vec![Layer::Conv2D(conv), Layer::Relu, Layer::MaxPool2x2, Layer::Flatten];
        let mut shape = input_shape.to_vec();
        for l in &layers {
            shape = l.output_shape(&shape)?;
        }
        let mut width = shape[0];
        for &h in hidden {
            layers.push(Layer::Dense(Dense::init(width, h, &mut rng)));
            layers.push(Layer::Relu);
            width = h;
        }
        layers.push(Layer::Dense(Dense::init(width, classes, &mut rng)));
        Self::new(layers, input_shape.to_vec())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    pub fn has_softmax(&self) -> bool {
        matches!(self.layers.last(), Some(Layer::Softmax))
    }

    /// Layers that produce the logits, i.e. everything but a trailing softmax head.
    fn logit_layers(&self) -> &[Layer] {
        if self.has_softmax() {
            &self.layers[..self.layers.len() - 1]
        } else {
            &self.layers
        }
    }

    /// Raw logits for input `x`.
    pub fn forward(&self, x: &TensorF) -> Result<TensorF> {
        x.check_shape(&self.input_shape)?;
        let mut cur = x.clone();
        for layer in self.logit_layers() {
            cur = layer.forward(&cur).0;
        }
        Ok(cur)
    }

    /// Softmax of the logits.
    pub fn probabilities(&self, x: &TensorF) -> Result<Vec<f64>> {
        Ok(crate::tensor::softmax(self.forward(x)?.data()))
    }

    pub fn predict(&self, x: &TensorF) -> Result<usize> {
        Ok(crate::tensor::argmax(self.forward(x)?.data()))
    }

    pub(crate) fn forward_traced(&self, x: &TensorF) -> Result<(Vec<Trace>, TensorF)> {
        x.check_shape(&self.input_shape)?;
        let layers = self.logit_layers();
        let mut traces = Vec::with_capacity(layers.len());
        let mut cur = x.clone();
        for layer in layers {
            let (out, winners) = layer.forward(&cur);
            traces.push(Trace { input: cur, winners });
            cur = out;
        }
        Ok((traces, cur))
    }

    pub(crate) fn backward_traced(&self, traces: &[Trace], cotangent: TensorF, rule: BackwardRule) -> TensorF {
        let mut g = cotangent;
        for (layer, trace) in self.logit_layers().iter().zip(traces).rev() {
            g = layer.backward(trace, &g, rule);
        }
        g
    }

    /// Vector-Jacobian product: pulls a cotangent chosen from the logits back to the input.
    ///
    /// `cotangent` receives the logits and returns `dL/dlogits`. Returns `(logits, dL/dx)`.
    pub fn pullback(
        &self,
        x: &TensorF,
        rule: BackwardRule,
        cotangent: impl FnOnce(&[f64]) -> Vec<f64>,
    ) -> Result<(TensorF, TensorF)> {
        let (traces, logits) = self.forward_traced(x)?;
        let seed = cotangent(logits.data());
        if seed.len() != self.classes {
            return Err(Error::shape(&[self.classes], &[seed.len()]));
        }
        let grad = self.backward_traced(&traces, TensorF::vector(seed), rule);
        Ok((logits, grad))
    }

    fn class_gradient(&self, x: &TensorF, class: usize, rule: BackwardRule) -> Result<TensorF> {
        if class >= self.classes {
            return Err(Error::ClassOutOfRange {
                class,
                classes: self.classes,
            });
        }
        let classes = self.classes;
        let (_, g) = self.pullback(x, rule, |_| {
            let mut e = vec![0.0; classes];
            e[class] = 1.0;
            e
        })?;
        Ok(g)
    }

    /// `d logits[class] / d x`.
    pub fn input_gradient(&self, x: &TensorF, class: usize) -> Result<TensorF> {
        self.class_gradient(x, class, BackwardRule::Plain)
    }

    /// Guided-backpropagation signal for `logits[class]`.
    pub fn guided_input_gradient(&self, x: &TensorF, class: usize) -> Result<TensorF> {
        self.class_gradient(x, class, BackwardRule::Guided)
    }

    /// Builds the reparameterized twin that sees inputs shifted by `shift`:
    /// `twin.forward(x + shift) == self.forward(x)`.
    ///
    /// The compensation lands in the bias of the first parametric layer. A
    /// convolution can only absorb shifts that are constant per channel.
    pub fn with_input_shift(&self, shift: &TensorF) -> Result<Network> {
        shift.check_shape(&self.input_shape)?;
        if self
            .layers
            .iter()
            .take_while(|l| !matches!(l, Layer::Dense(_) | Layer::Conv2D(_)))
            .any(|l| !matches!(l, Layer::Flatten))
        {
            return Err(Error::Unsupported(
                "only a flatten may precede the first parametric layer".into(),
            ));
        }
        let mut twin = self.clone();
        let first = twin
            .layers
            .iter_mut()
            .find(|l| matches!(l, Layer::Dense(_) | Layer::Conv2D(_)));
        match first {
            Some(Layer::Dense(d)) => {
                let s = shift.data();
                for o in 0..d.outputs {
                    let ws: f64 = d.row(o).iter().zip(s).map(|(w, v)| w * v).sum();
                    d.bias[o] -= ws;
                }
            }
            Some(Layer::Conv2D(c)) => {
                let (ch, h, w) = shift.image_dims().ok_or_else(|| {
                    Error::Unsupported("convolution input shift must be image-shaped".into())
                })?;
                let s = shift.data();
                let mut per_channel = Vec::with_capacity(ch);
                for cc in 0..ch {
                    let plane = &s[cc * h * w..(cc + 1) * h * w];
                    if plane.iter().any(|&v| v != plane[0]) {
                        return Err(Error::Unsupported(
                            "a convolution bias can only absorb a per-channel constant shift".into(),
                        ));
                    }
                    per_channel.push(plane[0]);
                }
                let k2 = c.kernel_size * c.kernel_size;
                for o in 0..c.out_channels {
                    let mut acc = 0.0;
                    for (cc, &sv) in per_channel.iter().enumerate() {
                        let start = (o * c.in_channels + cc) * k2;
                        acc += c.kernels[start..start + k2].iter().sum::<f64>() * sv;
                    }
                    c.bias[o] -= acc;
                }
            }
            _ => {
                return Err(Error::Unsupported(
                    "input shift needs a dense or convolutional first layer".into(),
                ))
            }
        }
        Ok(twin)
    }
}
