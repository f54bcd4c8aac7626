//! Radius neighborhoods by brute-force scan.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `sets[i]` lists, in increasing order, every `j` with `|x_j - x_i| <= delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborIndex {
    pub delta: f64,
    pub sets: Vec<Vec<usize>>,
}

impl NeighborIndex {
    pub fn get(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

pub fn build_neighborhoods<T: Scalar>(x: &[Vec<T>], delta: f64) -> Result<NeighborIndex> {
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::OutOfRange {
            value: delta,
            what: "neighborhood radius",
        });
    }
    let r2 = delta * delta;
    let sets = x
        .par_iter()
        .map(|xi| {
            x.iter()
                .enumerate()
                .filter(|(_, xj)| {
                    let d2: f64 = xi
                        .iter()
                        .zip(xj.iter())
                        .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
                        .sum();
                    d2 <= r2
                })
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    Ok(NeighborIndex { delta, sets })
}
