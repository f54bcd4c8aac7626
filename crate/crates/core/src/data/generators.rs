//! Synthetic data: the piecewise classification field and a multilabel set.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};

use super::{CsvSchema, Dataset, LabelMap};
use crate::error::{Error, Result};
use crate::metric::MixedSample;
use crate::scalar::Scalar;

/// Labels of the five interior bins, left to right.
pub const EXAMPLE1_MAP: [i64; 5] = [3, 4, 1, 2, 0];

/// Category for input `x` and noise `xi`: bin `k = floor(4x + xi)`, mapped
/// through [`EXAMPLE1_MAP`] when `0 <= k < 5`, else 5.
pub fn example1_label(x: f64, xi: f64) -> i64 {
    let k = (4.0 * x + xi).floor();
    if (0.0..5.0).contains(&k) {
        EXAMPLE1_MAP[k as usize]
    } else {
        5
    }
}

/// One draw of the field at a fixed `x`.
pub fn example1_sample<R: Rng + ?Sized>(x: f64, sigma: f64, rng: &mut R) -> i64 {
    let z: f64 = StandardNormal.sample(rng);
    example1_label(x, sigma * z)
}

/// `x ~ U(-0.1, 1.1)`, one label per `x`. Categories span `0..=5`.
pub fn generate_example1<T: Scalar, R: Rng + ?Sized>(n: usize, sigma: f64, rng: &mut R) -> Result<Dataset<T>> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::OutOfRange {
            value: sigma,
            what: "noise std",
        });
    }
    let ux = Uniform::new(-0.1, 1.1).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = ux.sample(rng);
        let label = example1_sample(xi, sigma, rng);
        x.push(vec![T::of(xi)]);
        y.push(MixedSample::new(vec![], vec![label]));
    }
    Dataset::new(
        CsvSchema::new(&["x"], &[], &["y"]),
        x,
        y,
        vec![LabelMap::Integer],
        0,
        5,
    )
}

/// Features with their raw 0/1 label vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilabelData {
    pub x: Vec<Vec<f64>>,
    pub labels: Vec<Vec<u8>>,
    /// Logit offset shared by all labels after calibration.
    pub bias: f64,
}

const CLUSTERS: usize = 4;
const PILOT: usize = 4000;

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Gaussian-mixture features (four clusters, centers `N(0, 4 I)`, unit
/// spread). Label `k` is Bernoulli with logit `w_k . x + b`, `w_k ~ N(0, I)`;
/// the shared offset `b` is bisected on a pilot sample so the mean number of
/// active labels is `avg_active`.
pub fn generate_multilabel<R: Rng + ?Sized>(
    n: usize,
    in_dim: usize,
    out_dim: usize,
    avg_active: f64,
    rng: &mut R,
) -> Result<MultilabelData> {
    if out_dim == 0 || in_dim == 0 {
        return Err(Error::InvalidArgument("multilabel dims must be positive".into()));
    }
    if !(avg_active > 0.0 && avg_active <= out_dim as f64) {
        return Err(Error::OutOfRange {
            value: avg_active,
            what: "average active labels in (0, out_dim]",
        });
    }
    let wide = Normal::new(0.0, 2.0).unwrap();
    let centers: Vec<Vec<f64>> = (0..CLUSTERS)
        .map(|_| (0..in_dim).map(|_| wide.sample(rng)).collect())
        .collect();
    let weights: Vec<Vec<f64>> = (0..out_dim)
        .map(|_| (0..in_dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    let feature = |rng: &mut R| -> Vec<f64> {
        let c = &centers[rng.random_range(0..CLUSTERS)];
        c.iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + z
            })
            .collect()
    };
    let scores = |x: &[f64]| -> Vec<f64> {
        weights
            .iter()
            .map(|w| w.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    };

    let pilot: Vec<Vec<f64>> = (0..PILOT).map(|_| scores(&feature(rng))).collect();
    let active = |b: f64| -> f64 {
        pilot
            .iter()
            .map(|s| s.iter().map(|v| sigmoid(v + b)).sum::<f64>())
            .sum::<f64>()
            / PILOT as f64
    };
    let bias = if avg_active >= out_dim as f64 {
        50.0
    } else {
        let (mut lo, mut hi) = (-100.0, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if active(mid) < avg_active {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };

    let mut x = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = feature(rng);
        let lab = scores(&xi)
            .into_iter()
            .map(|s| u8::from(rng.random::<f64>() < sigmoid(s + bias)))
            .collect();
        x.push(xi);
        labels.push(lab);
    }
    Ok(MultilabelData { x, labels, bias })
}

impl MultilabelData {
    fn feature_names(&self) -> Vec<String> {
        (0..self.x.first().map_or(0, Vec::len))
            .map(|k| format!("x{k}"))
            .collect()
    }

    /// One categorical slot holding the binary code of the label vector.
    pub fn encoded<T: Scalar>(&self) -> Result<Dataset<T>> {
        let d = self.labels.first().map_or(0, Vec::len);
        let names = self.feature_names();
        let schema = CsvSchema {
            features: names,
            continuous: vec![],
            categorical: vec!["label".into()],
        };
        let y = self
            .labels
            .iter()
            .map(|l| Ok(MixedSample::new(vec![], vec![binary_encode(l)?])))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(schema, self.cast_x(), y, vec![LabelMap::Integer], 0, (1i64 << d) - 1)
    }

    /// One binary categorical slot per label.
    pub fn multidim<T: Scalar>(&self) -> Result<Dataset<T>> {
        let d = self.labels.first().map_or(0, Vec::len);
        let schema = CsvSchema {
            features: self.feature_names(),
            continuous: vec![],
            categorical: (0..d).map(|k| format!("y{k}")).collect(),
        };
        let y = self
            .labels
            .iter()
            .map(|l| MixedSample::new(vec![], l.iter().map(|&b| b as i64).collect()))
            .collect();
        Dataset::new(schema, self.cast_x(), y, vec![LabelMap::Integer; d], 0, 1)
    }

    fn cast_x<T: Scalar>(&self) -> Vec<Vec<T>> {
        self.x.iter().map(|r| r.iter().map(|&v| T::of(v)).collect()).collect()
    }
}

/// `sum_i 2^(i-1) y_i` with `y_1` the least significant bit.
pub fn binary_encode(y: &[u8]) -> Result<i64> {
    if y.len() > 62 {
        return Err(Error::OutOfRange {
            value: y.len() as f64,
            what: "label vector length",
        });
    }
    y.iter().enumerate().try_fold(0i64, |acc, (i, &b)| match b {
        0 => Ok(acc),
        1 => Ok(acc | (1 << i)),
        _ => Err(Error::OutOfRange {
            value: b as f64,
            what: "binary label",
        }),
    })
}

pub fn binary_decode(v: i64, d: usize) -> Result<Vec<u8>> {
    if d > 62 || v < 0 || v >= (1i64 << d) {
        return Err(Error::OutOfRange {
            value: v as f64,
            what: "binary code",
        });
    }
    Ok((0..d).map(|i| ((v >> i) & 1) as u8).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn example1_hand_values() {
        assert_eq!(example1_label(0.3, 0.0), 4);
        assert_eq!(example1_label(-0.05, 0.0), 5);
        assert_eq!(example1_label(1.05, 0.0), 0);
        assert_eq!(example1_label(0.0, 0.0), 3);
        assert_eq!(example1_label(1.1, 0.0), 0);
        assert_eq!(example1_label(1.0, 0.0), 0);
        assert_eq!(example1_label(1.0, 1.0), 5);
        assert_eq!(example1_label(0.3, -0.25), 3);
    }

    #[test]
    fn example1_dataset_shape() {
        let ds: Dataset<f64> = generate_example1(200, 0.4, &mut substream(1, "gen")).unwrap();
        assert_eq!(ds.len(), 200);
        assert_eq!((ds.d1(), ds.d()), (0, 1));
        assert!(ds.y.iter().all(|y| (0..=5).contains(&y.cat[0])));
        assert!(ds.x.iter().all(|x| (-0.1..1.1).contains(&x[0])));
        assert!(generate_example1::<f64, _>(1, -1.0, &mut substream(1, "gen")).is_err());
    }

    #[test]
    fn encode_examples() {
        assert_eq!(binary_encode(&[0, 0, 0]).unwrap(), 0);
        assert_eq!(binary_encode(&[1, 0, 1]).unwrap(), 5);
        assert_eq!(binary_decode(5, 3).unwrap(), vec![1, 0, 1]);
        assert!(binary_decode(8, 3).is_err());
        assert!(binary_decode(-1, 3).is_err());
        assert!(binary_encode(&[2]).is_err());
    }

    #[test]
    fn multilabel_calibration_and_saturation() {
        let data = generate_multilabel(4000, 8, 5, 2.0, &mut substream(2, "ml")).unwrap();
        let mean = data.labels.iter().map(|l| l.iter().map(|&b| b as f64).sum::<f64>()).sum::<f64>() / 4000.0;
        assert!((mean - 2.0).abs() < 0.3, "{mean}");
        let full = generate_multilabel(500, 8, 3, 3.0, &mut substream(2, "ml")).unwrap();
        let ones = full.labels.iter().flatten().filter(|&&b| b == 1).count();
        assert!(ones as f64 > 0.97 * 1500.0);
        let again = generate_multilabel(4000, 8, 5, 2.0, &mut substream(2, "ml")).unwrap();
        assert_eq!(data, again);
    }
}
