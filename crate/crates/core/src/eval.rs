//! Evaluation: permutation chi-square tests, rejection rates, R^2, scaled
//! predicted variance, classification accuracy, and the rate function h(N, d).

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metric::{clamp_round, MixedMetricConfig};
use crate::rng::indexed;
use crate::scalar::Scalar;
use crate::snn::{aggregate_draws, StochasticModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
}

/// Pearson chi-square of the 2 x K table of group counts (`codes` in `0..k`,
/// first `n_a` belong to group A). Columns with zero total are skipped.
fn chi_square(codes: &[usize], n_a: usize, k: usize, scratch: &mut [[usize; 2]]) -> f64 {
    scratch.iter_mut().for_each(|c| *c = [0, 0]);
    for (i, &c) in codes.iter().enumerate() {
        scratch[c][usize::from(i >= n_a)] += 1;
    }
    let n = codes.len() as f64;
    let rows = [n_a as f64, (codes.len() - n_a) as f64];
    let mut stat = 0.0;
    for col in &scratch[..k] {
        let tot = (col[0] + col[1]) as f64;
        if tot == 0.0 {
            continue;
        }
        for g in 0..2 {
            let e = rows[g] * tot / n;
            if e > 0.0 {
                let d = col[g] as f64 - e;
                stat += d * d / e;
            }
        }
    }
    stat
}

/// Two-sample permutation test on categorical labels with the chi-square
/// statistic over the union of observed categories; `p = (1 + #{T* >= T}) / (1 + B)`.
pub fn perm_chisq_test<R: Rng + ?Sized>(a: &[i64], b: &[i64], permutations: usize, rng: &mut R) -> Result<PermTestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("permutation test sample"));
    }
    if permutations < 99 {
        return Err(Error::InvalidArgument(format!(
            "need at least 99 permutations, got {permutations}"
        )));
    }
    let mut cats: Vec<i64> = a.iter().chain(b).copied().collect();
    cats.sort_unstable();
    cats.dedup();
    let mut codes: Vec<usize> = a
        .iter()
        .chain(b)
        .map(|v| cats.binary_search(v).unwrap())
        .collect();
    let k = cats.len();
    let mut scratch = vec![[0usize; 2]; k];
    let observed = chi_square(&codes, a.len(), k, &mut scratch);
    let tol = 1e-9 * observed.max(1.0);
    let mut exceed = 0usize;
    for _ in 0..permutations {
        codes.shuffle(rng);
        if chi_square(&codes, a.len(), k, &mut scratch) >= observed - tol {
            exceed += 1;
        }
    }
    Ok(PermTestResult {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
        permutations,
    })
}

/// `x_i = 0.01 i - 0.1` for `i = 0..120`.
pub fn example1_grid() -> Vec<f64> {
    (0..120).map(|i| 0.01 * i as f64 - 0.1).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub rate: f64,
    pub p_values: Vec<f64>,
}

/// Fraction of grid inputs where `draws` model outputs (rounded, categorical
/// slot `slot`) and `draws` truth samples differ at level 0.05.
///
/// Grid point `i` uses its own stream derived from `seed`.
#[allow(clippy::too_many_arguments)]
pub fn rejection_rate<T: Scalar, M: StochasticModel<T>>(
    model: &M,
    grid: &[Vec<T>],
    truth: impl Fn(usize, &mut crate::rng::Rng) -> i64 + Sync,
    cfg: &MixedMetricConfig<T>,
    slot: usize,
    draws: usize,
    permutations: usize,
    seed: u64,
) -> Result<RejectionReport> {
    if grid.is_empty() {
        return Err(Error::Empty("evaluation grid"));
    }
    if slot >= cfg.n_cat() {
        return Err(Error::InvalidArgument(format!("no categorical slot {slot}")));
    }
    let p_values = grid
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = indexed(seed, "rejection", i as u64);
            let t: Vec<i64> = (0..draws).map(|_| truth(i, &mut rng)).collect();
            let p: Vec<i64> = (0..draws)
                .map(|_| clamp_round(model.sample(x, &mut rng)[cfg.d1 + slot], cfg.lower, cfg.upper))
                .collect();
            perm_chisq_test(&t, &p, permutations, &mut rng).map(|r| r.p_value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let rejected = p_values.iter().filter(|&&p| p < 0.05).count();
    Ok(RejectionReport {
        rate: rejected as f64 / grid.len() as f64,
        p_values,
    })
}

/// Per-input mean and unbiased variance of continuous slot `slot` over `draws` outputs.
pub fn continuous_draw_stats<T: Scalar, M: StochasticModel<T>>(
    model: &M,
    xs: &[Vec<T>],
    slot: usize,
    draws: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if draws < 2 {
        return Err(Error::InvalidArgument("variance needs at least two draws".into()));
    }
    if slot >= model.output_dim() {
        return Err(Error::InvalidArgument(format!("no output slot {slot}")));
    }
    Ok(xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = indexed(seed, "continuous", i as u64);
            let v: Vec<f64> = (0..draws).map(|_| model.sample(x, &mut rng)[slot].as_f64()).collect();
            let m = v.iter().sum::<f64>() / draws as f64;
            let var = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (draws - 1) as f64;
            (m, var)
        })
        .collect())
}

fn target_spread<T: Scalar>(ds: &Dataset<T>, slot: usize) -> Result<(Vec<f64>, f64)> {
    if slot >= ds.d1() {
        return Err(Error::InvalidArgument(format!("no continuous target {slot}")));
    }
    let y: Vec<f64> = ds.y.iter().map(|s| s.cont[slot].as_f64()).collect();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss == 0.0 {
        return Err(Error::InvalidArgument("constant targets: R^2 undefined".into()));
    }
    Ok((y, ss))
}

/// `1 - sum (y - E[yhat])^2 / sum (y - mean y)^2` with `E[yhat]` the mean of `draws` outputs.
pub fn r_squared<T: Scalar, M: StochasticModel<T>>(model: &M, test: &Dataset<T>, draws: usize, seed: u64) -> Result<f64> {
    let (y, ss) = target_spread(test, 0)?;
    let stats = continuous_draw_stats(model, &test.x, 0, draws, seed)?;
    let res: f64 = y.iter().zip(&stats).map(|(v, s)| (v - s.0).powi(2)).sum();
    Ok(1.0 - res / ss)
}

/// Mean predictive variance divided by the target variance `sum (y - mean y)^2 / N`.
pub fn scaled_pred_variance<T: Scalar, M: StochasticModel<T>>(
    model: &M,
    test: &Dataset<T>,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let (y, ss) = target_spread(test, 0)?;
    let stats = continuous_draw_stats(model, &test.x, 0, draws, seed)?;
    let mean_var = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
    Ok(mean_var / (ss / y.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// Fraction correct per categorical slot.
    pub per_slot: Vec<f64>,
    /// Fraction with every categorical slot correct.
    pub joint: f64,
}

/// Majority vote over `repeats` draws per input against the observed categories.
pub fn classification_accuracy<T: Scalar, M: StochasticModel<T>>(
    model: &M,
    test: &Dataset<T>,
    cfg: &MixedMetricConfig<T>,
    repeats: usize,
    seed: u64,
) -> Result<AccuracyReport> {
    let k = cfg.n_cat();
    if k == 0 {
        return Err(Error::InvalidArgument("no categorical targets".into()));
    }
    let preds: Vec<Vec<i64>> = test
        .x
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = indexed(seed, "accuracy", i as u64);
            let draws: Vec<Vec<T>> = (0..repeats.max(1)).map(|_| model.sample(x, &mut rng)).collect();
            aggregate_draws(&draws, cfg).cat
        })
        .collect();
    let n = test.len() as f64;
    let per_slot = (0..k)
        .map(|s| preds.iter().zip(&test.y).filter(|(p, y)| p[s] == y.cat[s]).count() as f64 / n)
        .collect();
    let joint = preds.iter().zip(&test.y).filter(|(p, y)| **p == y.cat).count() as f64 / n;
    Ok(AccuracyReport { per_slot, joint })
}

/// `2 N^(-1/4) sqrt(ln(1 + N))` for `d <= 4`, else `2 N^(-1/d)`.
pub fn h_bound(n: usize, d: usize) -> Result<f64> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("h(N, d) needs N >= 1 and d >= 1".into()));
    }
    let nf = n as f64;
    Ok(if d <= 4 {
        2.0 * nf.powf(-0.25) * (1.0 + nf).ln().sqrt()
    } else {
        2.0 * nf.powf(-1.0 / d as f64)
    })
}
