//! Stochastic neural networks with Gaussian weights.
//!
//! Every weight is `w = a + |rho| * eps` with trainable mean `a`, trainable
//! scale parameter `rho` and a fresh standard-normal `eps` per forward call
//! and per input. Biases are deterministic. Hidden layers may carry identity
//! skip connections (the input and output projections never do).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{elu, gelu, Tape, Var};
use crate::error::{Error, Result};
use crate::metric::{clamp_round, MixedMetricConfig, MixedSample};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Gelu,
    Relu,
    Elu { alpha: f64 },
    LeakyRelu { slope: f64 },
}

impl Activation {
    pub fn apply<T: Scalar>(&self, x: T) -> T {
        match *self {
            Activation::Gelu => gelu(x),
            Activation::Relu => x.max(T::zero()),
            Activation::Elu { alpha } => elu(x, T::of(alpha)),
            Activation::LeakyRelu { slope } => {
                if x > T::zero() {
                    x
                } else {
                    T::of(slope) * x
                }
            }
        }
    }

    pub fn apply_var<'t, T: Scalar>(&self, x: Var<'t, T>) -> Var<'t, T> {
        match *self {
            Activation::Gelu => x.gelu(),
            Activation::Relu => x.relu(),
            Activation::Elu { alpha } => x.elu(T::of(alpha)),
            Activation::LeakyRelu { slope } => x.leaky_relu(T::of(slope)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnnArchitecture {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: Activation,
    pub residual: bool,
}

impl SnnArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.width == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "architecture needs nonzero dims, got {self:?}"
            )));
        }
        Ok(())
    }

    /// `(rows, cols)` of each weight matrix, input projection first.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let mut s = vec![(self.width, self.input_dim)];
        for _ in 1..self.hidden_layers {
            s.push((self.width, self.width));
        }
        s.push((self.output_dim, self.width));
        s
    }

    fn skip(&self, layer: usize) -> bool {
        self.residual && layer >= 1 && layer < self.hidden_layers
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnnLayer<T> {
    pub rows: usize,
    pub cols: usize,
    pub mean: Vec<T>,
    pub scale: Vec<T>,
    pub bias: Vec<T>,
}

/// Trainable state of a stochastic network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnnParams<T> {
    pub arch: SnnArchitecture,
    pub layers: Vec<SnnLayer<T>>,
}

/// One realization of the weight noise, one matrix per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDraw<T> {
    pub noise: Vec<Vec<T>>,
}

/// Parameters of an [`SnnParams`] registered on a tape.
#[derive(Debug, Clone)]
pub struct BoundSnn<'t, T> {
    layers: Vec<(Var<'t, T>, Var<'t, T>, Var<'t, T>)>,
}

/// Anything that produces one random output per call.
pub trait StochasticModel<T: Scalar>: Sync {
    fn output_dim(&self) -> usize;
    fn sample<R: Rng + ?Sized>(&self, x: &[T], rng: &mut R) -> Vec<T>;
}

fn normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::of(z)
}

impl<T: Scalar> SnnParams<T> {
    /// Means, scales and biases all i.i.d. `N(0, init_std^2)`.
    pub fn init<R: Rng + ?Sized>(arch: SnnArchitecture, rng: &mut R, init_std: T) -> Result<Self> {
        arch.validate()?;
        if init_std < T::zero() {
            return Err(Error::InvalidArgument("init_std must be nonnegative".into()));
        }
        let mut draw = |n: usize| -> Vec<T> { (0..n).map(|_| normal::<T, R>(rng) * init_std).collect() };
        let layers = arch
            .shapes()
            .into_iter()
            .map(|(rows, cols)| SnnLayer {
                rows,
                cols,
                mean: draw(rows * cols),
                scale: draw(rows * cols),
                bias: draw(rows),
            })
            .collect();
        Ok(SnnParams { arch, layers })
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| 2 * l.mean.len() + l.bias.len())
            .sum()
    }

    pub fn sample_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> WeightDraw<T> {
        WeightDraw {
            noise: self
                .layers
                .iter()
                .map(|l| (0..l.rows * l.cols).map(|_| normal::<T, R>(rng)).collect())
                .collect(),
        }
    }

    /// Registers every block as a tape parameter.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> BoundSnn<'t, T> {
        BoundSnn {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    (
                        tape.param(l.mean.clone()),
                        tape.param(l.scale.clone()),
                        tape.param(l.bias.clone()),
                    )
                })
                .collect(),
        }
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.arch.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim,
                got: len,
            });
        }
        Ok(())
    }

    /// Differentiable forward pass with a fixed weight draw.
    pub fn forward_with_draw<'t>(
        &self,
        bound: &BoundSnn<'t, T>,
        x: Var<'t, T>,
        draw: &WeightDraw<T>,
    ) -> Result<Var<'t, T>> {
        self.check_input(x.len())?;
        let tape = x.tape();
        let last = self.layers.len() - 1;
        let mut h = x;
        for (k, (mean, scale, bias)) in bound.layers.iter().enumerate() {
            let z = tape.stochastic_linear(*mean, *scale, *bias, h, draw.noise[k].clone())?;
            h = if k == last {
                z
            } else {
                let a = self.arch.activation.apply_var(z);
                if self.arch.skip(k) {
                    h + a
                } else {
                    a
                }
            };
        }
        Ok(h)
    }

    /// Differentiable forward pass with a fresh weight draw.
    pub fn forward<'t, R: Rng + ?Sized>(
        &self,
        bound: &BoundSnn<'t, T>,
        x: &[T],
        rng: &mut R,
    ) -> Result<Var<'t, T>> {
        let tape = bound.layers[0].0.tape();
        let draw = self.sample_draw(rng);
        self.forward_with_draw(bound, tape.constant(x.to_vec()), &draw)
    }

    /// Independent draws per input, in input order.
    pub fn forward_batch<'t, R: Rng + ?Sized>(
        &self,
        bound: &BoundSnn<'t, T>,
        xs: &[Vec<T>],
        rng: &mut R,
    ) -> Result<Vec<Var<'t, T>>> {
        xs.iter().map(|x| self.forward(bound, x, rng)).collect()
    }

    /// Plain forward pass with a fixed draw.
    pub fn predict_with_draw(&self, x: &[T], draw: &WeightDraw<T>) -> Vec<T> {
        self.run(x, |k, idx| draw.noise[k][idx])
    }

    /// Deterministic pass through the weight means.
    pub fn predict_mean(&self, x: &[T]) -> Vec<T> {
        self.run(x, |_, _| T::zero())
    }

    fn run(&self, x: &[T], mut noise: impl FnMut(usize, usize) -> T) -> Vec<T> {
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = l.bias.clone();
            for r in 0..l.rows {
                let base = r * l.cols;
                let mut acc = z[r];
                for c in 0..l.cols {
                    let i = base + c;
                    let w = l.mean[i] + l.scale[i].abs() * noise(k, i);
                    acc = acc + w * h[c];
                }
                z[r] = acc;
            }
            h = if k == last {
                z
            } else if self.arch.skip(k) {
                h.iter().zip(z).map(|(&hi, zi)| hi + self.arch.activation.apply(zi)).collect()
            } else {
                z.into_iter().map(|zi| self.arch.activation.apply(zi)).collect()
            };
        }
        h
    }

    /// Flat parameter blocks in `(mean, scale, bias)` order per layer.
    pub fn blocks(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [&l.mean[..], &l.scale[..], &l.bias[..]])
            .collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.mean[..], &mut l.scale[..], &mut l.bias[..]])
            .collect()
    }

    pub fn block_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|k| [format!("layer{k}.mean"), format!("layer{k}.scale"), format!("layer{k}.bias")])
            .collect()
    }

    /// Continuous slots averaged over `repeats` draws; categorical slots by
    /// majority vote of the rounded draws (ties go to the earliest class seen).
    pub fn predict_categorical<R: Rng + ?Sized>(
        &self,
        x: &[T],
        cfg: &MixedMetricConfig<T>,
        repeats: usize,
        rng: &mut R,
    ) -> Result<MixedSample<T>> {
        self.check_input(x.len())?;
        let draws: Vec<Vec<T>> = (0..repeats.max(1)).map(|_| self.sample(x, rng)).collect();
        Ok(aggregate_draws(&draws, cfg))
    }
}

impl<'t, T: Scalar> BoundSnn<'t, T> {
    /// Gradients of every block, in [`SnnParams::blocks`] order.
    pub fn grads(&self, g: &crate::autodiff::Gradients<T>) -> Vec<Vec<T>> {
        self.layers
            .iter()
            .flat_map(|(m, s, b)| [g.wrt(*m), g.wrt(*s), g.wrt(*b)])
            .collect()
    }
}

impl<T: Scalar> StochasticModel<T> for SnnParams<T> {
    fn output_dim(&self) -> usize {
        self.arch.output_dim
    }

    /// Equivalent to `predict_with_draw(x, &sample_draw(rng))`.
    fn sample<R: Rng + ?Sized>(&self, x: &[T], rng: &mut R) -> Vec<T> {
        self.run(x, |_, _| normal::<T, R>(rng))
    }
}

/// Mean of continuous slots, per-slot majority vote of rounded categorical slots.
pub fn aggregate_draws<T: Scalar>(draws: &[Vec<T>], cfg: &MixedMetricConfig<T>) -> MixedSample<T> {
    let n = T::from_usize(draws.len()).unwrap();
    let cont = (0..cfg.d1)
        .map(|i| draws.iter().map(|d| d[i]).sum::<T>() / n)
        .collect();
    let cat = (cfg.d1..cfg.d)
        .map(|i| {
            let votes: Vec<i64> = draws
                .iter()
                .map(|d| clamp_round(d[i], cfg.lower, cfg.upper))
                .collect();
            majority_vote(&votes)
        })
        .collect();
    MixedSample::new(cont, cat)
}

/// Most frequent value; among ties, the one that occurs first in `votes`.
pub fn majority_vote(votes: &[i64]) -> i64 {
    let mut tally: Vec<(i64, usize)> = Vec::new();
    for &v in votes {
        match tally.iter_mut().find(|(k, _)| *k == v) {
            Some((_, c)) => *c += 1,
            None => tally.push((v, 1)),
        }
    }
    // tally is in first-appearance order; max_by_key keeps the last max, so scan manually
    let mut best = tally[0];
    for &(k, c) in &tally[1..] {
        if c > best.1 {
            best = (k, c);
        }
    }
    best.0
}

/// Deterministic fully connected network (no weight noise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet<T> {
    pub dims: Vec<usize>,
    pub activation: Activation,
    /// Per layer: row-major weights then bias.
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

#[derive(Debug, Clone)]
pub struct BoundDense<'t, T> {
    layers: Vec<(Var<'t, T>, Var<'t, T>)>,
}

impl<T: Scalar> DenseNet<T> {
    /// `dims = [input, hidden..., output]`; weights and biases `N(0, init_std^2)`.
    pub fn init<R: Rng + ?Sized>(dims: Vec<usize>, activation: Activation, rng: &mut R, init_std: T) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!("bad dense dims {dims:?}")));
        }
        let mut draw = |n: usize| -> Vec<T> { (0..n).map(|_| normal::<T, R>(rng) * init_std).collect() };
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            weights.push(draw(w[0] * w[1]));
            biases.push(draw(w[1]));
        }
        Ok(DenseNet {
            dims,
            activation,
            weights,
            biases,
        })
    }

    /// Zeroes every weight and bias.
    pub fn zeroed(mut self) -> Self {
        self.weights.iter_mut().flatten().for_each(|w| *w = T::zero());
        self.biases.iter_mut().flatten().for_each(|b| *b = T::zero());
        self
    }

    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> BoundDense<'t, T> {
        BoundDense {
            layers: self
                .weights
                .iter()
                .zip(&self.biases)
                .map(|(w, b)| (tape.param(w.clone()), tape.param(b.clone())))
                .collect(),
        }
    }

    pub fn forward_var<'t>(&self, bound: &BoundDense<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let tape = x.tape();
        let last = self.weights.len() - 1;
        let mut h = x;
        for (k, (w, b)) in bound.layers.iter().enumerate() {
            let z = tape.matvec(*w, self.dims[k + 1], self.dims[k], h)? + *b;
            h = if k == last { z } else { self.activation.apply_var(z) };
        }
        Ok(h)
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let last = self.weights.len() - 1;
        let mut h = x.to_vec();
        for k in 0..self.weights.len() {
            let (rows, cols) = (self.dims[k + 1], self.dims[k]);
            let z: Vec<T> = (0..rows)
                .map(|r| {
                    (0..cols).fold(T::zero(), |acc, c| acc + self.weights[k][r * cols + c] * h[c])
                        + self.biases[k][r]
                })
                .collect();
            h = if k == last {
                z
            } else {
                z.into_iter().map(|v| self.activation.apply(v)).collect()
            };
        }
        h
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [&mut w[..], &mut b[..]])
            .collect()
    }

    pub fn block_names(&self) -> Vec<String> {
        (0..self.weights.len())
            .flat_map(|k| [format!("dense{k}.weight"), format!("dense{k}.bias")])
            .collect()
    }
}

impl<'t, T: Scalar> BoundDense<'t, T> {
    pub fn grads(&self, g: &crate::autodiff::Gradients<T>) -> Vec<Vec<T>> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [g.wrt(*w), g.wrt(*b)])
            .collect()
    }
}
