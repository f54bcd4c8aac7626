//! Entropic approximation of the transport cost (log-domain Sinkhorn).
//!
//! Approximation only; training and reporting use the exact solver.

use super::CostMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct SinkhornConfig<T> {
    pub eps: T,
    pub max_iters: usize,
    /// L1 tolerance on the row-marginal residual.
    pub tol: T,
}

impl<T: Scalar> SinkhornConfig<T> {
    pub fn new(eps: T) -> Self {
        SinkhornConfig {
            eps,
            max_iters: 100_000,
            tol: T::of(1e-6),
        }
    }
}

/// `<P, C>` for the entropic plan `P` between two uniform measures.
///
/// The regularization is annealed geometrically from the cost scale down to
/// `cfg.eps`, warm-starting the potentials at each level.
pub fn sinkhorn_cost<T: Scalar>(cost: &CostMatrix<T>, cfg: &SinkhornConfig<T>) -> Result<T> {
    if !(cfg.eps > T::zero()) {
        return Err(Error::InvalidArgument("sinkhorn eps must be positive".into()));
    }
    let n = cost.n;
    if n == 0 {
        return Err(Error::Empty("cost matrix"));
    }
    let log_w = -T::from_usize(n).unwrap().ln();
    let mut f = vec![T::zero(); n];
    let mut g = vec![T::zero(); n];
    let c_max = cost.data.iter().fold(T::zero(), |m, &c| m.max(c));
    let mut eps = c_max.max(cfg.eps);
    let mut iters = 0;
    let mut residual = T::infinity();
    loop {
        let last_level = eps <= cfg.eps;
        let level_tol = if last_level { cfg.tol } else { T::of(1e-3) };
        loop {
            if iters >= cfg.max_iters {
                return Err(Error::SinkhornNotConverged {
                    iters,
                    residual: residual.as_f64(),
                });
            }
            for i in 0..n {
                let lse = log_sum_exp((0..n).map(|j| (g[j] - cost.get(i, j)) / eps));
                f[i] = eps * (log_w - lse);
            }
            for j in 0..n {
                let lse = log_sum_exp((0..n).map(|i| (f[i] - cost.get(i, j)) / eps));
                g[j] = eps * (log_w - lse);
            }
            iters += 1;
            residual = (0..n)
                .map(|i| {
                    let row: T = (0..n)
                        .map(|j| ((f[i] + g[j] - cost.get(i, j)) / eps).exp())
                        .sum();
                    (row - log_w.exp()).abs()
                })
                .sum();
            if residual <= level_tol {
                break;
            }
        }
        if last_level {
            break;
        }
        eps = (eps * T::of(0.5)).max(cfg.eps);
    }
    debug_assert!(residual <= cfg.tol);
    let mut total = T::zero();
    for i in 0..n {
        for j in 0..n {
            let c = cost.get(i, j);
            total = total + ((f[i] + g[j] - c) / eps).exp() * c;
        }
    }
    Ok(total)
}

fn log_sum_exp<T: Scalar>(xs: impl Iterator<Item = T> + Clone) -> T {
    let m = xs.clone().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<T>().ln()
}
