//! Ground cost for mixed continuous/categorical samples.
//!
//! A sample `y = (y_1..y_d1, y_{d1+1}..y_d)` has `d1` continuous slots and
//! `d - d1` integer category slots. The hard cost
//!
//! ```text
//! |y|^2 = lambda * sum_{i<=d1} y_i^2 + sum_{j>d1} delta_c(y_j),
//! delta_c(u) = c u^2 if |u| <= 1/2, else 1
//! ```
//!
//! is what gets reported. Training uses a surrogate whose categorical term
//! stays differentiable in the prediction through a straight-through round.

use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::scalar::{round_half_away, Scalar};

/// One observation: continuous reals followed by integer categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedSample<T> {
    pub cont: Vec<T>,
    pub cat: Vec<i64>,
}

impl<T: Scalar> MixedSample<T> {
    pub fn new(cont: Vec<T>, cat: Vec<i64>) -> Self {
        MixedSample { cont, cat }
    }

    pub fn dim(&self) -> usize {
        self.cont.len() + self.cat.len()
    }

    /// Flat real vector, categories cast to reals.
    pub fn to_vec(&self) -> Vec<T> {
        self.cont
            .iter()
            .copied()
            .chain(self.cat.iter().map(|&k| T::from_i64(k).unwrap()))
            .collect()
    }

    /// Splits a flat vector, rounding the categorical tail with [`clamp_round`].
    pub fn from_prediction(v: &[T], cfg: &MixedMetricConfig<T>) -> Self {
        MixedSample {
            cont: v[..cfg.d1].to_vec(),
            cat: v[cfg.d1..]
                .iter()
                .map(|&x| clamp_round(x, cfg.lower, cfg.upper))
                .collect(),
        }
    }
}

/// Weights and bounds of the mixed cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedMetricConfig<T> {
    /// Number of continuous slots.
    pub d1: usize,
    /// Total number of slots.
    pub d: usize,
    /// Weight of the continuous block.
    pub lambda: T,
    /// Quadratic coefficient of the categorical penalty; 4 makes it continuous.
    pub c: T,
    /// Smallest admissible category.
    pub lower: i64,
    /// Largest admissible category.
    pub upper: i64,
}

impl<T: Scalar> MixedMetricConfig<T> {
    pub fn new(d1: usize, d: usize, lambda: T, lower: i64, upper: i64) -> Result<Self> {
        let cfg = MixedMetricConfig {
            d1,
            d,
            lambda,
            c: T::of(4.0),
            lower,
            upper,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_c(mut self, c: T) -> Result<Self> {
        self.c = c;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d1 > self.d {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= d1 <= d and d >= 1 (d1={}, d={})",
                self.d1, self.d
            )));
        }
        if !(self.lambda > T::zero()) || !(self.c > T::zero()) {
            return Err(Error::InvalidArgument("lambda and c must be positive".into()));
        }
        if self.lower > self.upper {
            return Err(Error::InvalidArgument(format!(
                "category bounds [{}, {}] are empty",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    pub fn n_cat(&self) -> usize {
        self.d - self.d1
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.d {
            Err(Error::DimensionMismatch {
                expected: self.d,
                got,
            })
        } else {
            Ok(())
        }
    }
}

/// `c u^2` inside `|u| <= 1/2`, otherwise 1.
pub fn hard_delta<T: Scalar>(u: T, c: T) -> T {
    if u.abs() <= T::of(0.5) {
        c * u * u
    } else {
        T::one()
    }
}

/// Hard squared mixed norm of a difference vector.
pub fn mixed_norm_sq<T: Scalar>(y: &[T], cfg: &MixedMetricConfig<T>) -> Result<T> {
    cfg.check_dim(y.len())?;
    let cont: T = y[..cfg.d1].iter().map(|&v| v * v).sum();
    let cat: T = y[cfg.d1..].iter().map(|&v| hard_delta(v, cfg.c)).sum();
    Ok(cfg.lambda * cont + cat)
}

/// Hard cost between two samples.
pub fn sample_cost<T: Scalar>(
    a: &MixedSample<T>,
    b: &MixedSample<T>,
    cfg: &MixedMetricConfig<T>,
) -> Result<T> {
    cfg.check_dim(a.dim())?;
    cfg.check_dim(b.dim())?;
    let cont: T = a
        .cont
        .iter()
        .zip(&b.cont)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    let cat: T = a
        .cat
        .iter()
        .zip(&b.cat)
        .map(|(&x, &y)| hard_delta(T::from_i64(x - y).unwrap(), cfg.c))
        .sum();
    Ok(cfg.lambda * cont + cat)
}

/// Round to nearest (ties away from zero), then clip into `[lower, upper]`.
pub fn clamp_round<T: Scalar>(v: T, lower: i64, upper: i64) -> i64 {
    let r = round_half_away(v);
    if r.is_nan() {
        return lower;
    }
    let r = r.to_i64().unwrap_or(if r > T::zero() { upper } else { lower });
    r.clamp(lower, upper)
}

/// Value of the categorical surrogate for a real prediction.
pub fn surrogate_delta_value<T: Scalar>(y: i64, yhat: T, c: T) -> T {
    let yv = T::from_i64(y).unwrap();
    let diff = yv - yhat;
    if diff.abs() <= T::of(0.5) {
        c * diff * diff
    } else {
        let k = (yv - round_half_away(yhat)).abs();
        let arg = T::FRAC_PI_2() + T::TAU() * k;
        T::one() - arg.cos() / T::TAU()
    }
}

/// Differentiable categorical surrogate.
///
/// Quadratic `c (y - yhat)^2` inside the half-unit window, and outside
/// `1 - cos(pi/2 + 2 pi |y - round_st(yhat)|) / (2 pi)` where `round_st` is
/// the straight-through round. On integer predictions it equals [`hard_delta`];
/// its gradient outside the window is `sign(round(yhat) - y)`.
pub fn surrogate_delta<'t, T: Scalar>(y: i64, yhat: Var<'t, T>, c: T) -> Var<'t, T> {
    let yv = T::from_i64(y).unwrap();
    let diff = yhat.item() - yv;
    if diff.abs() <= T::of(0.5) {
        (yhat - yv).square() * c
    } else {
        let rounded = yhat.straight_through_round();
        let dist = (rounded - yv).abs();
        let arg = dist * T::TAU() + T::FRAC_PI_2();
        arg.cos() * (-T::one() / T::TAU()) + T::one()
    }
}

/// Surrogate squared cost between an observation and a prediction node of length `d`.
pub fn surrogate_cost_sq<'t, T: Scalar>(
    y: &MixedSample<T>,
    yhat: Var<'t, T>,
    cfg: &MixedMetricConfig<T>,
) -> Result<Var<'t, T>> {
    cfg.check_dim(y.dim())?;
    cfg.check_dim(yhat.len())?;
    let tape = yhat.tape();
    let mut terms = Vec::with_capacity(1 + cfg.n_cat());
    if cfg.d1 > 0 {
        let target: Vec<T> = y.cont.clone();
        let head = if cfg.d1 == cfg.d {
            yhat
        } else {
            let parts: Vec<_> = (0..cfg.d1).map(|i| yhat.index(i)).collect();
            tape.concat(&parts)
        };
        terms.push((head - tape.constant(target)).square().sum() * cfg.lambda);
    }
    for (j, &yc) in y.cat.iter().enumerate() {
        terms.push(surrogate_delta(yc, yhat.index(cfg.d1 + j), cfg.c));
    }
    Ok(tape.concat(&terms).sum())
}

/// Plain-value surrogate cost; matches [`surrogate_cost_sq`] without a tape.
pub fn surrogate_cost_value<T: Scalar>(
    y: &MixedSample<T>,
    yhat: &[T],
    cfg: &MixedMetricConfig<T>,
) -> T {
    let cont: T = y
        .cont
        .iter()
        .zip(yhat)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let cat: T = y
        .cat
        .iter()
        .zip(&yhat[cfg.d1..])
        .map(|(&k, &p)| surrogate_delta_value(k, p, cfg.c))
        .sum();
    cfg.lambda * cont + cat
}

/// Sum of unbiased variances of the continuous slots, floored at `1e-12`.
///
/// Returns 1 when there are no continuous slots.
pub fn default_lambda<T: Scalar>(ys: &[MixedSample<T>]) -> Result<T> {
    let d1 = match ys.first() {
        Some(s) => s.cont.len(),
        None => return Err(Error::Empty("samples")),
    };
    if d1 == 0 {
        return Ok(T::one());
    }
    if ys.len() < 2 {
        return Err(Error::InvalidArgument(
            "default lambda needs at least two samples".into(),
        ));
    }
    let n = T::from_usize(ys.len()).unwrap();
    let mut total = T::zero();
    for i in 0..d1 {
        let mean = ys.iter().map(|s| s.cont[i]).sum::<T>() / n;
        let ss: T = ys.iter().map(|s| (s.cont[i] - mean).powi(2)).sum();
        total = total + ss / (n - T::one());
    }
    Ok(total.max(T::of(1e-12)))
}
