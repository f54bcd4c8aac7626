//! Squared generalized Wasserstein-2 distance between equal-weight empirical
//! measures of mixed samples.
//!
//! With equal weights and equal sizes the optimal coupling is a permutation
//! (Birkhoff), so the exact value is a linear assignment problem.

pub mod assignment;
mod sinkhorn;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{sample_cost, MixedMetricConfig, MixedSample};
use crate::scalar::Scalar;

pub use assignment::Assignment;
pub use sinkhorn::{sinkhorn_cost, SinkhornConfig};

/// Equal-weight finite collection of mixed samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure<T> {
    samples: Vec<MixedSample<T>>,
}

impl<T: Scalar> EmpiricalMeasure<T> {
    pub fn new(samples: Vec<MixedSample<T>>) -> Result<Self> {
        let first = samples.first().ok_or(Error::Empty("empirical measure"))?;
        let (d1, d) = (first.cont.len(), first.dim());
        for s in &samples {
            if s.cont.len() != d1 || s.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: s.dim(),
                });
            }
        }
        Ok(EmpiricalMeasure { samples })
    }

    pub fn samples(&self) -> &[MixedSample<T>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Uniform subsample without replacement, order preserved.
    pub fn subsample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Self {
        let mut idx = sample(rng, self.len(), n.min(self.len())).into_vec();
        idx.sort_unstable();
        EmpiricalMeasure {
            samples: idx.into_iter().map(|i| self.samples[i].clone()).collect(),
        }
    }
}

/// Which ground cost filled a [`CostMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostKind {
    Hard,
    Surrogate,
}

/// Dense row-major `n x n` pairwise costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T> {
    pub n: usize,
    pub data: Vec<T>,
    pub kind: CostKind,
}

impl<T: Scalar> CostMatrix<T> {
    pub fn from_fn(n: usize, kind: CostKind, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let c = f(i, j);
                if !c.is_finite() {
                    return Err(Error::NonFinite(format!("cost[{i}][{j}]")));
                }
                data.push(c);
            }
        }
        Ok(CostMatrix { n, data, kind })
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }
}

/// How to treat measures of different sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizePolicy {
    /// Sizes must match.
    Strict,
    /// Subsample the larger measure down to the smaller with this seed.
    Subsample(u64),
}

/// Exact transport value and one optimal matching.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling<T> {
    /// `(1/n) sum_i cost(a_i, b_perm[i])`.
    pub value: T,
    /// `perm[i]` is the index in `B` matched to `A[i]`.
    pub perm: Vec<usize>,
}

/// Minimum over permutations of the mean pairwise cost.
///
/// Ties are broken toward the lexicographically smallest permutation.
pub fn exact_coupling_cost<T: Scalar>(
    a: &EmpiricalMeasure<T>,
    b: &EmpiricalMeasure<T>,
    cost: impl Fn(&MixedSample<T>, &MixedSample<T>) -> Result<T>,
) -> Result<Coupling<T>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let n = a.len();
    let mut err = None;
    let m = CostMatrix::from_fn(n, CostKind::Hard, |i, j| {
        cost(&a.samples[i], &b.samples[j]).unwrap_or_else(|e| {
            err.get_or_insert(e);
            T::zero()
        })
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let sol = assignment::solve_lexicographic(&m.data, n);
    Ok(Coupling {
        value: sol.total(&m.data) / T::from_usize(n).unwrap(),
        perm: sol.perm,
    })
}

/// Squared generalized W2 under the hard mixed cost.
pub fn generalized_w2_sq<T: Scalar>(
    a: &EmpiricalMeasure<T>,
    b: &EmpiricalMeasure<T>,
    cfg: &MixedMetricConfig<T>,
    policy: SizePolicy,
) -> Result<Coupling<T>> {
    let cost = |x: &MixedSample<T>, y: &MixedSample<T>| sample_cost(x, y, cfg);
    match policy {
        SizePolicy::Strict => exact_coupling_cost(a, b, cost),
        SizePolicy::Subsample(seed) => {
            let mut rng = crate::rng::substream(seed, "subsample");
            let n = a.len().min(b.len());
            let a2 = if a.len() > n { a.subsample(n, &mut rng) } else { a.clone() };
            let b2 = if b.len() > n { b.subsample(n, &mut rng) } else { b.clone() };
            exact_coupling_cost(&a2, &b2, cost)
        }
    }
}

/// `lambda * (1/n) sum (a_(i) - b_(i))^2` over sorted order.
pub fn sorted_1d_w2_sq<T: Scalar>(a: &[T], b: &[T], lambda: T) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("1d samples"));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).expect("finite samples"));
    sb.sort_by(|x, y| x.partial_cmp(y).expect("finite samples"));
    let ss: T = sa.iter().zip(&sb).map(|(&x, &y)| (x - y) * (x - y)).sum();
    Ok(lambda * ss / T::from_usize(a.len()).unwrap())
}

/// `1 - sum_k min(pA_k, pB_k)`: total-variation distance between two pmfs.
pub fn categorical_min_overlap<T: Scalar>(pa: &[T], pb: &[T]) -> Result<T> {
    if pa.len() != pb.len() {
        return Err(Error::DimensionMismatch {
            expected: pa.len(),
            got: pb.len(),
        });
    }
    for p in [pa, pb] {
        let s: T = p.iter().copied().sum();
        if (s - T::one()).abs() > T::of(1e-9) || p.iter().any(|&x| x < T::zero()) {
            return Err(Error::Simplex { sum: s.as_f64() });
        }
    }
    let overlap: T = pa.iter().zip(pb).map(|(&x, &y)| x.min(y)).sum();
    Ok(T::one() - overlap)
}

/// Empirical pmfs of categorical slot `slot` of two measures over their joint support.
fn slot_pmfs<T: Scalar>(a: &[MixedSample<T>], b: &[MixedSample<T>], slot: usize) -> (Vec<T>, Vec<T>) {
    let mut cats: Vec<i64> = a.iter().chain(b).map(|s| s.cat[slot]).collect();
    cats.sort_unstable();
    cats.dedup();
    let pmf = |xs: &[MixedSample<T>]| {
        let n = T::from_usize(xs.len()).unwrap();
        cats.iter()
            .map(|&k| T::from_usize(xs.iter().filter(|s| s.cat[slot] == k).count()).unwrap() / n)
            .collect::<Vec<T>>()
    };
    (pmf(a), pmf(b))
}

/// Slack in the lower bound
/// `W^2 >= lambda * W2^2(continuous marginals) + sum_j TV_j(categorical marginals)`.
///
/// Never below zero beyond round-off.
pub fn lower_bound_gap<T: Scalar>(
    a: &EmpiricalMeasure<T>,
    b: &EmpiricalMeasure<T>,
    cfg: &MixedMetricConfig<T>,
) -> Result<T> {
    let full = generalized_w2_sq(a, b, cfg, SizePolicy::Strict)?.value;
    let cont = if cfg.d1 > 0 {
        let to_cont = |m: &EmpiricalMeasure<T>| {
            EmpiricalMeasure::new(
                m.samples
                    .iter()
                    .map(|s| MixedSample::new(s.cont.clone(), vec![]))
                    .collect(),
            )
        };
        let l2 = |x: &MixedSample<T>, y: &MixedSample<T>| -> Result<T> {
            Ok(x.cont.iter().zip(&y.cont).map(|(&p, &q)| (p - q) * (p - q)).sum())
        };
        cfg.lambda * exact_coupling_cost(&to_cont(a)?, &to_cont(b)?, l2)?.value
    } else {
        T::zero()
    };
    let mut cat = T::zero();
    for slot in 0..cfg.n_cat() {
        let (pa, pb) = slot_pmfs(&a.samples, &b.samples, slot);
        cat = cat + categorical_min_overlap(&pa, &pb)?;
    }
    Ok(full - (cont + cat))
}
