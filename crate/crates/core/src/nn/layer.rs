use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::TensorF;

/// Fully connected layer, `y = W x + b` with `W` stored row-major as `[outputs, inputs]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::Spec(format!(
                "dense layer {inputs}->{outputs} needs {} weights and {outputs} biases, got {} and {}",
                inputs * outputs,
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    pub fn init(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        let bias = (0..outputs).map(|_| rng.random_range(-bound..=bound)).collect();
        Self {
            inputs,
            outputs,
            weights,
            bias,
        }
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                self.row(o)
                    .iter()
                    .zip(x)
                    .fold(self.bias[o], |acc, (w, v)| acc + w * v)
            })
            .collect()
    }

    fn backward_input(&self, grad_out: &[f64]) -> Vec<f64> {
        let mut gx = vec![0.0; self.inputs];
        for (o, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (gi, w) in gx.iter_mut().zip(self.row(o)) {
                *gi += w * g;
            }
        }
        gx
    }

    fn accumulate(&self, x: &[f64], grad_out: &[f64], gw: &mut [f64], gb: &mut [f64]) {
        for (o, &g) in grad_out.iter().enumerate() {
            gb[o] += g;
            let row = &mut gw[o * self.inputs..(o + 1) * self.inputs];
            for (r, v) in row.iter_mut().zip(x) {
                *r += g * v;
            }
        }
    }
}

/// Square-kernel convolution, stride 1, valid padding.
///
/// Kernels are stored as `[out_channels, in_channels, k, k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2D {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub kernels: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2D {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        kernels: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        let expected = out_channels * in_channels * kernel_size * kernel_size;
        if kernels.len() != expected || bias.len() != out_channels || kernel_size == 0 {
            return Err(Error::Spec(format!(
                "conv layer needs {expected} kernel weights and {out_channels} biases, got {} and {}",
                kernels.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel_size,
            kernels,
            bias,
        })
    }

    pub fn init(in_channels: usize, out_channels: usize, kernel_size: usize, rng: &mut impl Rng) -> Self {
        let fan_in = in_channels * kernel_size * kernel_size;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let kernels = (0..out_channels * fan_in)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        let bias = (0..out_channels)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self {
            in_channels,
            out_channels,
            kernel_size,
            kernels,
            bias,
        }
    }

    fn kidx(&self, o: usize, c: usize, u: usize, v: usize) -> usize {
        ((o * self.in_channels + c) * self.kernel_size + u) * self.kernel_size + v
    }

    fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (h + 1 - self.kernel_size, w + 1 - self.kernel_size)
    }

    fn forward(&self, x: &[f64], h: usize, w: usize) -> Vec<f64> {
        let (oh, ow) = self.out_dims(h, w);
        let k = self.kernel_size;
        let mut out = vec![0.0; self.out_channels * oh * ow];
        for o in 0..self.out_channels {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = self.bias[o];
                    for c in 0..self.in_channels {
                        for u in 0..k {
                            let xrow = &x[(c * h + i + u) * w + j..(c * h + i + u) * w + j + k];
                            let krow = &self.kernels[self.kidx(o, c, u, 0)..self.kidx(o, c, u, 0) + k];
                            for (a, b) in krow.iter().zip(xrow) {
                                acc += a * b;
                            }
                        }
                    }
                    out[(o * oh + i) * ow + j] = acc;
                }
            }
        }
        out
    }

    fn backward_input(&self, grad_out: &[f64], h: usize, w: usize) -> Vec<f64> {
        let (oh, ow) = self.out_dims(h, w);
        let k = self.kernel_size;
        let mut gx = vec![0.0; self.in_channels * h * w];
        for o in 0..self.out_channels {
            for i in 0..oh {
                for j in 0..ow {
                    let g = grad_out[(o * oh + i) * ow + j];
                    if g == 0.0 {
                        continue;
                    }
                    for c in 0..self.in_channels {
                        for u in 0..k {
                            for v in 0..k {
                                gx[(c * h + i + u) * w + j + v] += self.kernels[self.kidx(o, c, u, v)] * g;
                            }
                        }
                    }
                }
            }
        }
        gx
    }

    fn accumulate(&self, x: &[f64], h: usize, w: usize, grad_out: &[f64], gk: &mut [f64], gb: &mut [f64]) {
        let (oh, ow) = self.out_dims(h, w);
        let k = self.kernel_size;
        for o in 0..self.out_channels {
            for i in 0..oh {
                for j in 0..ow {
                    let g = grad_out[(o * oh + i) * ow + j];
                    gb[o] += g;
                    if g == 0.0 {
                        continue;
                    }
                    for c in 0..self.in_channels {
                        for u in 0..k {
                            for v in 0..k {
                                gk[self.kidx(o, c, u, v)] += g * x[(c * h + i + u) * w + j + v];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Dense(Dense),
    Conv2D(Conv2D),
    Relu,
    MaxPool2x2,
    Flatten,
    /// Evaluation-only probability head. Never part of a trainable stack.
    Softmax,
}

/// How ReLU layers treat the backward signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackwardRule {
    /// Ordinary chain rule, ReLU'(0) = 0.
    Plain,
    /// Guided backpropagation: ReLU additionally drops negative incoming signal.
    Guided,
}

/// Per-layer record kept by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    pub input: TensorF,
    /// For max pooling, the flat input index that won each output cell.
    pub winners: Vec<usize>,
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2D(_) => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool2x2 => "maxpool2x2",
            Layer::Flatten => "flatten",
            Layer::Softmax => "softmax",
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.weights.len() + d.bias.len(),
            Layer::Conv2D(c) => c.kernels.len() + c.bias.len(),
            _ => 0,
        }
    }

    /// Output shape for a given input shape, or an error if the layer cannot accept it.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense(d) => {
                if input != [d.inputs] {
                    return Err(Error::shape(&[d.inputs], input));
                }
                Ok(vec![d.outputs])
            }
            Layer::Conv2D(c) => match *input {
                [ch, h, w] if ch == c.in_channels && h >= c.kernel_size && w >= c.kernel_size => {
                    let (oh, ow) = c.out_dims(h, w);
                    Ok(vec![c.out_channels, oh, ow])
                }
                _ => Err(Error::shape(&[c.in_channels, c.kernel_size, c.kernel_size], input)),
            },
            Layer::MaxPool2x2 => match *input {
                [ch, h, w] if h >= 2 && w >= 2 => Ok(vec![ch, h / 2, w / 2]),
                _ => Err(Error::Unsupported(format!(
                    "max pooling needs a [c, h, w] input of at least 2x2, got {input:?}"
                ))),
            },
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Relu | Layer::Softmax => Ok(input.to_vec()),
        }
    }

    pub(crate) fn forward(&self, x: &TensorF) -> (TensorF, Vec<usize>) {
        let shape = self
            .output_shape(x.shape())
            .expect("network construction validated every layer shape");
        match self {
            Layer::Dense(d) => (TensorF::vector(d.forward(x.data())), Vec::new()),
            Layer::Conv2D(c) => {
                let (h, w) = (x.shape()[1], x.shape()[2]);
                let out = c.forward(x.data(), h, w);
                (TensorF::new(shape, out).expect("conv output shape"), Vec::new())
            }
            Layer::Relu => (x.map(|v| v.max(0.0)), Vec::new()),
            Layer::MaxPool2x2 => {
                let (ch, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let (oh, ow) = (h / 2, w / 2);
                let src = x.data();
                let mut out = Vec::with_capacity(ch * oh * ow);
                let mut winners = Vec::with_capacity(ch * oh * ow);
                for c in 0..ch {
                    for i in 0..oh {
                        for j in 0..ow {
                            let mut best = (c * h + 2 * i) * w + 2 * j;
                            for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                                let idx = (c * h + 2 * i + di) * w + 2 * j + dj;
                                if src[idx] > src[best] {
                                    best = idx;
                                }
                            }
                            out.push(src[best]);
                            winners.push(best);
                        }
                    }
                }
                (TensorF::new(shape, out).expect("pool output shape"), winners)
            }
            Layer::Flatten => (x.clone().reshaped(shape).expect("flatten"), Vec::new()),
            Layer::Softmax => (
                TensorF::vector(crate::tensor::softmax(x.data()))
                    .reshaped(shape)
                    .expect("softmax"),
                Vec::new(),
            ),
        }
    }

    /// Pulls `grad_out` back through this layer.
    pub(crate) fn backward(&self, trace: &Trace, grad_out: &TensorF, rule: BackwardRule) -> TensorF {
        let x = &trace.input;
        match self {
            Layer::Dense(d) => TensorF::vector(d.backward_input(grad_out.data())),
            Layer::Conv2D(c) => {
                let (h, w) = (x.shape()[1], x.shape()[2]);
                TensorF::new(x.shape().to_vec(), c.backward_input(grad_out.data(), h, w))
                    .expect("conv grad shape")
            }
            Layer::Relu => {
                let data = x
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&xi, &g)| {
                        let open = xi > 0.0 && (rule == BackwardRule::Plain || g > 0.0);
                        if open {
                            g
                        } else {
                            0.0
                        }
                    })
                    .collect();
                TensorF::new(x.shape().to_vec(), data).expect("relu grad shape")
            }
            Layer::MaxPool2x2 => {
                let mut gx = TensorF::zeros(x.shape());
                let buf = gx.data_mut();
                for (&idx, &g) in trace.winners.iter().zip(grad_out.data()) {
                    buf[idx] += g;
                }
                gx
            }
            Layer::Flatten => grad_out
                .clone()
                .reshaped(x.shape().to_vec())
                .expect("flatten grad shape"),
            Layer::Softmax => {
                let p = crate::tensor::softmax(x.data());
                let dot: f64 = p.iter().zip(grad_out.data()).map(|(a, b)| a * b).sum();
                let data = p
                    .iter()
                    .zip(grad_out.data())
                    .map(|(pi, gi)| pi * (gi - dot))
                    .collect();
                TensorF::new(x.shape().to_vec(), data).expect("softmax grad shape")
            }
        }
    }

    /// Adds this layer's parameter gradients into `grads` (weights, bias).
    pub(crate) fn accumulate_params(&self, trace: &Trace, grad_out: &TensorF, grads: &mut ParamGrad) {
        match self {
            Layer::Dense(d) => d.accumulate(trace.input.data(), grad_out.data(), &mut grads.weights, &mut grads.bias),
            Layer::Conv2D(c) => {
                let (h, w) = (trace.input.shape()[1], trace.input.shape()[2]);
                c.accumulate(
                    trace.input.data(),
                    h,
                    w,
                    grad_out.data(),
                    &mut grads.weights,
                    &mut grads.bias,
                )
            }
            _ => {}
        }
    }

    pub(crate) fn zero_grad(&self) -> ParamGrad {
        match self {
            Layer::Dense(d) => ParamGrad {
                weights: vec![0.0; d.weights.len()],
                bias: vec![0.0; d.bias.len()],
            },
            Layer::Conv2D(c) => ParamGrad {
                weights: vec![0.0; c.kernels.len()],
                bias: vec![0.0; c.bias.len()],
            },
            _ => ParamGrad::default(),
        }
    }

    pub(crate) fn params_mut(&mut self) -> Option<(&mut [f64], &mut [f64])> {
        match self {
            Layer::Dense(d) => Some((&mut d.weights, &mut d.bias)),
            Layer::Conv2D(c) => Some((&mut c.kernels, &mut c.bias)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct ParamGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ParamGrad {
    pub fn scale(&mut self, k: f64) {
        self.weights.iter_mut().chain(self.bias.iter_mut()).for_each(|g| *g *= k);
    }
}
