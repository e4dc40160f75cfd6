use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::entropy::logits_entropy;
use super::search::{max_entropy_full, max_entropy_uniform, AscentResult, UniformSearch};
use crate::data::{LabeledDataset, ValueRange};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::TensorF;

/// The baseline catalogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Zero,
    /// Constant at the instance minimum.
    Black,
    /// Constant at the instance maximum.
    White,
    /// Constant at the instance mean.
    AvgInstance,
    /// Farthest in-range value per coordinate.
    Xdist,
    /// Mean of a seeded sample of training instances.
    TrainAvg,
    /// Gaussian blur of the instance; image-shaped inputs only.
    Blur,
    UniformNoise,
    GaussianNoise,
    /// Constant input with the highest logits entropy.
    MaxEntropyUniform,
    /// Unconstrained (per-coordinate) input with the highest logits entropy.
    MaxEntropyFull,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 11] = [
        BaselineKind::Zero,
        BaselineKind::Black,
        BaselineKind::White,
        BaselineKind::AvgInstance,
        BaselineKind::MaxEntropyUniform,
        BaselineKind::Xdist,
        BaselineKind::TrainAvg,
        BaselineKind::Blur,
        BaselineKind::UniformNoise,
        BaselineKind::GaussianNoise,
        BaselineKind::MaxEntropyFull,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            BaselineKind::Zero => "zero",
            BaselineKind::Black => "black",
            BaselineKind::White => "white",
            BaselineKind::AvgInstance => "avg_instance",
            BaselineKind::Xdist => "xdist",
            BaselineKind::TrainAvg => "train_avg",
            BaselineKind::Blur => "blur",
            BaselineKind::UniformNoise => "uniform_noise",
            BaselineKind::GaussianNoise => "gaussian_noise",
            BaselineKind::MaxEntropyUniform => "max_entropy_uniform",
            BaselineKind::MaxEntropyFull => "max_entropy_full",
        }
    }

    /// Whether construction looks at the explained instance.
    pub fn reads_input(self) -> bool {
        matches!(
            self,
            BaselineKind::Black
                | BaselineKind::White
                | BaselineKind::AvgInstance
                | BaselineKind::Xdist
                | BaselineKind::Blur
        )
    }

    /// Whether the baseline has the same value at every coordinate.
    pub fn is_constant(self) -> bool {
        matches!(
            self,
            BaselineKind::Zero
                | BaselineKind::Black
                | BaselineKind::White
                | BaselineKind::AvgInstance
                | BaselineKind::MaxEntropyUniform
        )
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown baseline kind `{s}`")))
    }
}

/// Tunables for baseline construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineParams {
    pub blur_sigma: f64,
    pub blur_kernel: usize,
    /// Defaults to the range midpoint.
    pub noise_mean: Option<f64>,
    /// Defaults to a quarter of the range width.
    pub noise_std: Option<f64>,
    pub train_samples: usize,
    pub uniform_grid: usize,
    pub uniform_refine_iters: usize,
    pub ascent_steps: usize,
    /// Ascent step as a fraction of the range width.
    pub ascent_lr_fraction: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            blur_sigma: 2.0,
            blur_kernel: 5,
            noise_mean: None,
            noise_std: None,
            train_samples: 100,
            uniform_grid: 201,
            uniform_refine_iters: 40,
            ascent_steps: 1000,
            ascent_lr_fraction: 0.05,
        }
    }
}

/// A materialized baseline together with how it was made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    pub values: TensorF,
    pub seed: u64,
    /// Logits entropy the model assigns to `values`.
    pub entropy: f64,
}

/// Builds baselines for one model, caching the input-independent ones.
pub struct BaselineFactory<'a> {
    net: &'a Network,
    range: ValueRange,
    train: Option<&'a LabeledDataset>,
    params: BaselineParams,
    seed: u64,
    uniform: OnceLock<UniformSearch>,
    full: OnceLock<AscentResult>,
    train_avg: OnceLock<TensorF>,
}

impl<'a> BaselineFactory<'a> {
    pub fn new(net: &'a Network, range: ValueRange, params: BaselineParams, seed: u64) -> Self {
        Self {
            net,
            range,
            train: None,
            params,
            seed,
            uniform: OnceLock::new(),
            full: OnceLock::new(),
            train_avg: OnceLock::new(),
        }
    }

    pub fn with_training_data(mut self, data: &'a LabeledDataset) -> Self {
        self.train = Some(data);
        self
    }

    /// Installs an already computed maximum-entropy input, e.g. one repaired by
    /// [`ensure_conservation`](super::ensure_conservation).
    pub fn with_max_entropy(self, full: AscentResult) -> Self {
        let _ = self.full.set(full);
        self
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    pub fn params(&self) -> &BaselineParams {
        &self.params
    }

    pub fn network(&self) -> &Network {
        self.net
    }

    pub fn max_entropy_uniform(&self) -> Result<UniformSearch> {
        if let Some(u) = self.uniform.get() {
            return Ok(*u);
        }
        let u = max_entropy_uniform(
            self.net,
            self.range,
            self.params.uniform_grid,
            self.params.uniform_refine_iters,
        )?;
        Ok(*self.uniform.get_or_init(|| u))
    }

    pub fn max_entropy_full(&self) -> Result<&AscentResult> {
        if let Some(r) = self.full.get() {
            return Ok(r);
        }
        let x0 = TensorF::filled(self.net.input_shape(), self.range.mid());
        let r = max_entropy_full(
            self.net,
            &x0,
            self.params.ascent_steps,
            self.params.ascent_lr_fraction * self.range.width(),
            self.range,
        )?;
        Ok(self.full.get_or_init(|| r))
    }

    fn train_average(&self) -> Result<&TensorF> {
        if let Some(t) = self.train_avg.get() {
            return Ok(t);
        }
        let data = self
            .train
            .ok_or_else(|| Error::Config("the train_avg baseline needs training data".into()))?;
        let pool = data.train_indices();
        let chosen: Vec<usize> = if self.params.train_samples >= pool.len() {
            pool.to_vec()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rand::seq::index::sample(&mut rng, pool.len(), self.params.train_samples)
                .into_iter()
                .map(|i| pool[i])
                .collect()
        };
        let avg = data.mean_of(&chosen);
        Ok(self.train_avg.get_or_init(|| avg))
    }

    /// Materializes `kind` for instance `x`. `seed` varies the noise baselines per call.
    pub fn build(&self, kind: BaselineKind, x: &TensorF, seed: u64) -> Result<BaselineSpec> {
        x.check_shape(self.net.input_shape())?;
        let shape = x.shape();
        let r = self.range;
        let values = match kind {
            BaselineKind::Zero => TensorF::zeros(shape),
            BaselineKind::Black => TensorF::filled(shape, x.min()),
            BaselineKind::White => TensorF::filled(shape, x.max()),
            BaselineKind::AvgInstance => TensorF::filled(shape, x.mean()),
            BaselineKind::Xdist => x.map(|v| if v > r.mid() { r.lo } else { r.hi }),
            BaselineKind::TrainAvg => self.train_average()?.clone(),
            BaselineKind::Blur => gaussian_blur(x, self.params.blur_sigma, self.params.blur_kernel)?,
            BaselineKind::UniformNoise => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, seed));
                let data = (0..x.len()).map(|_| rng.random_range(r.lo..=r.hi)).collect();
                TensorF::new(shape.to_vec(), data)?
            }
            BaselineKind::GaussianNoise => {
                let mean = self.params.noise_mean.unwrap_or(r.mid());
                let std = self.params.noise_std.unwrap_or(r.width() / 4.0);
                let normal = Normal::new(mean, std)
                    .map_err(|e| Error::Config(format!("bad gaussian noise parameters: {e}")))?;
                let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, seed));
                let data = (0..x.len()).map(|_| normal.sample(&mut rng)).collect();
                TensorF::new(shape.to_vec(), data)?
            }
            BaselineKind::MaxEntropyUniform => TensorF::filled(shape, self.max_entropy_uniform()?.value),
            BaselineKind::MaxEntropyFull => self.max_entropy_full()?.best.clone(),
        };
        let values = values.clip(r.lo, r.hi);
        let entropy = logits_entropy(self.net, &values)?;
        Ok(BaselineSpec {
            kind,
            values,
            seed,
            entropy,
        })
    }
}

fn mix(a: u64, b: u64) -> u64 {
    a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.rotate_left(17)
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Separable Gaussian blur of each channel with a `kernel x kernel` window
/// and half-sample reflective borders.
pub fn gaussian_blur(x: &TensorF, sigma: f64, kernel: usize) -> Result<TensorF> {
    let (c, h, w) = x
        .image_dims()
        .ok_or_else(|| Error::Unsupported(format!("blur needs an image-shaped input, got {:?}", x.shape())))?;
    if kernel == 0 || kernel % 2 == 0 || !(sigma > 0.0) {
        return Err(Error::Config(format!(
            "blur needs an odd kernel size and positive sigma, got {kernel} and {sigma}"
        )));
    }
    let half = (kernel / 2) as isize;
    let mut weights: Vec<f64> = (-half..=half)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|v| *v /= total);

    let src = x.data();
    let mut tmp = vec![0.0; src.len()];
    let mut out = vec![0.0; src.len()];
    for ch in 0..c {
        let base = ch * h * w;
        for i in 0..h {
            for j in 0..w {
                tmp[base + i * w + j] = weights
                    .iter()
                    .enumerate()
                    .map(|(t, k)| k * src[base + i * w + reflect(j as isize + t as isize - half, w)])
                    .sum();
            }
        }
        for i in 0..h {
            for j in 0..w {
                out[base + i * w + j] = weights
                    .iter()
                    .enumerate()
                    .map(|(t, k)| k * tmp[base + reflect(i as isize + t as isize - half, h) * w + j])
                    .sum();
            }
        }
    }
    TensorF::new(x.shape().to_vec(), out)
}
