//! Datasets, CSV ingestion, normalization and minibatching.

mod generators;
mod neighbors;

pub use generators::{
    binary_decode, binary_encode, example1_label, example1_sample, generate_example1,
    generate_multilabel, MultilabelData, EXAMPLE1_MAP,
};
pub use neighbors::{build_neighborhoods, NeighborIndex};

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{MixedMetricConfig, MixedSample};
use crate::scalar::Scalar;

/// Column roles, by header name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub features: Vec<String>,
    #[serde(default)]
    pub continuous: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
}

impl CsvSchema {
    pub fn new(features: &[&str], continuous: &[&str], categorical: &[&str]) -> Self {
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        CsvSchema {
            features: own(features),
            continuous: own(continuous),
            categorical: own(categorical),
        }
    }

    /// Abalone layout: seven measurements in, rings and sex out.
    pub fn abalone() -> Self {
        Self::new(
            &[
                "length",
                "diameter",
                "height",
                "whole_weight",
                "shucked_weight",
                "viscera_weight",
                "shell_weight",
            ],
            &["rings"],
            &["sex"],
        )
    }

    pub fn d1(&self) -> usize {
        self.continuous.len()
    }

    pub fn d(&self) -> usize {
        self.continuous.len() + self.categorical.len()
    }
}

/// How raw labels of one categorical column become integers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "labels", rename_all = "snake_case")]
pub enum LabelMap {
    /// Labels are integers already and are used as-is.
    Integer,
    /// Label `k` of the list maps to category `k`.
    Named(Vec<String>),
}

impl LabelMap {
    fn encode(&self, raw: &str, column: &str, line: u64) -> Result<i64> {
        match self {
            LabelMap::Integer => raw.parse::<i64>().map_err(|_| Error::Csv {
                line,
                msg: format!("column {column}: expected integer category, got {raw:?}"),
            }),
            LabelMap::Named(labels) => labels
                .iter()
                .position(|l| l == raw)
                .map(|k| k as i64)
                .ok_or_else(|| Error::UnknownCategory {
                    column: column.to_string(),
                    label: raw.to_string(),
                }),
        }
    }

    fn decode(&self, v: i64) -> String {
        match self {
            LabelMap::Integer => v.to_string(),
            LabelMap::Named(labels) => labels
                .get(v as usize)
                .cloned()
                .unwrap_or_else(|| v.to_string()),
        }
    }

    fn infer<'a>(raw: impl Iterator<Item = &'a str> + Clone) -> LabelMap {
        if raw.clone().all(|s| s.parse::<i64>().is_ok()) {
            LabelMap::Integer
        } else {
            let mut labels: Vec<String> = raw.map(str::to_string).collect();
            labels.sort();
            labels.dedup();
            LabelMap::Named(labels)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub schema: CsvSchema,
    pub x: Vec<Vec<T>>,
    pub y: Vec<MixedSample<T>>,
    pub labels: Vec<LabelMap>,
    /// Category bounds shared by every categorical slot.
    pub lower: i64,
    pub upper: i64,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        schema: CsvSchema,
        x: Vec<Vec<T>>,
        y: Vec<MixedSample<T>>,
        labels: Vec<LabelMap>,
        lower: i64,
        upper: i64,
    ) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if x.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let ds = Dataset {
            schema,
            x,
            y,
            labels,
            lower,
            upper,
        };
        for (xi, yi) in ds.x.iter().zip(&ds.y) {
            if xi.len() != ds.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: ds.input_dim(),
                    got: xi.len(),
                });
            }
            if yi.cont.len() != ds.d1() || yi.cat.len() != ds.d() - ds.d1() {
                return Err(Error::DimensionMismatch {
                    expected: ds.d(),
                    got: yi.dim(),
                });
            }
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.schema.features.len()
    }

    pub fn d1(&self) -> usize {
        self.schema.d1()
    }

    pub fn d(&self) -> usize {
        self.schema.d()
    }

    /// Metric config for this dataset with the given continuous weight.
    pub fn metric(&self, lambda: T) -> Result<MixedMetricConfig<T>> {
        MixedMetricConfig::new(self.d1(), self.d(), lambda, self.lower, self.upper)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Dataset {
            schema: self.schema.clone(),
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i].clone()).collect(),
            labels: self.labels.clone(),
            lower: self.lower,
            upper: self.upper,
        }
    }

    /// Writes a header row then one row per observation, columns in schema order.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        self.write_to(&mut w)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        self.write_to(&mut w)?;
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    fn write_to<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        let s = &self.schema;
        let header: Vec<&str> = s
            .features
            .iter()
            .chain(&s.continuous)
            .chain(&s.categorical)
            .map(String::as_str)
            .collect();
        w.write_record(&header).map_err(csv_err)?;
        for (x, y) in self.x.iter().zip(&self.y) {
            let mut row: Vec<String> = x.iter().map(|v| v.as_f64().to_string()).collect();
            row.extend(y.cont.iter().map(|v| v.as_f64().to_string()));
            row.extend(
                y.cat
                    .iter()
                    .zip(&self.labels)
                    .map(|(&c, m)| m.decode(c)),
            );
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Csv {
        line,
        msg: e.to_string(),
    }
}

/// Reads a headed CSV. Label maps are inferred from the file unless given,
/// in which case labels outside them are rejected.
pub fn load_csv<T: Scalar>(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
    labels: Option<&[LabelMap]>,
) -> Result<Dataset<T>> {
    let rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    read_csv(rdr, schema, labels)
}

pub fn load_csv_str<T: Scalar>(
    text: &str,
    schema: &CsvSchema,
    labels: Option<&[LabelMap]>,
) -> Result<Dataset<T>> {
    let rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    read_csv(rdr, schema, labels)
}

fn read_csv<T: Scalar, R: std::io::Read>(
    mut rdr: csv::Reader<R>,
    schema: &CsvSchema,
    labels: Option<&[LabelMap]>,
) -> Result<Dataset<T>> {
    let header = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &String| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv {
                line: 1,
                msg: format!("missing column {name:?}"),
            })
    };
    let fcols = schema.features.iter().map(col).collect::<Result<Vec<_>>>()?;
    let ccols = schema.continuous.iter().map(col).collect::<Result<Vec<_>>>()?;
    let kcols = schema.categorical.iter().map(col).collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, rec));
    }
    if rows.is_empty() {
        return Err(Error::Empty("csv rows"));
    }
    let num = |rec: &csv::StringRecord, line: u64, c: usize| -> Result<T> {
        let raw = rec.get(c).unwrap_or("");
        let v: f64 = raw.parse().map_err(|_| Error::Csv {
            line,
            msg: format!("column {:?}: not a number: {raw:?}", &header[c]),
        })?;
        if !v.is_finite() {
            return Err(Error::Csv {
                line,
                msg: format!("column {:?}: non-finite value", &header[c]),
            });
        }
        Ok(T::of(v))
    };

    let maps: Vec<LabelMap> = match labels {
        Some(m) => {
            if m.len() != kcols.len() {
                return Err(Error::DimensionMismatch {
                    expected: kcols.len(),
                    got: m.len(),
                });
            }
            m.to_vec()
        }
        None => kcols
            .iter()
            .map(|&c| LabelMap::infer(rows.iter().map(move |(_, r)| r.get(c).unwrap_or(""))))
            .collect(),
    };

    let mut x = Vec::with_capacity(rows.len());
    let mut y = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        x.push(fcols.iter().map(|&c| num(rec, *line, c)).collect::<Result<Vec<T>>>()?);
        let cont = ccols.iter().map(|&c| num(rec, *line, c)).collect::<Result<Vec<T>>>()?;
        let cat = kcols
            .iter()
            .zip(&maps)
            .map(|(&c, m)| m.encode(rec.get(c).unwrap_or(""), &header[c], *line))
            .collect::<Result<Vec<i64>>>()?;
        y.push(MixedSample::new(cont, cat));
    }

    let (mut lower, mut upper) = (i64::MAX, i64::MIN);
    for (k, m) in maps.iter().enumerate() {
        let (lo, hi) = match m {
            LabelMap::Named(l) => (0, l.len() as i64 - 1),
            LabelMap::Integer => y.iter().fold((i64::MAX, i64::MIN), |(lo, hi), s| {
                (lo.min(s.cat[k]), hi.max(s.cat[k]))
            }),
        };
        lower = lower.min(lo);
        upper = upper.max(hi);
    }
    if maps.is_empty() {
        lower = 0;
        upper = 0;
    }
    Dataset::new(schema.clone(), x, y, maps, lower, upper)
}

/// Per-feature affine map fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Population mean and standard deviation per feature, std floored at 1e-12.
    pub fn fit<T: Scalar>(x: &[Vec<T>]) -> Result<Self> {
        let n = x.len();
        if n == 0 {
            return Err(Error::Empty("normalization input"));
        }
        let dim = x[0].len();
        let mut mean = vec![0.0; dim];
        let mut std = vec![0.0; dim];
        for k in 0..dim {
            let m = x.iter().map(|r| r[k].as_f64()).sum::<f64>() / n as f64;
            let v = x.iter().map(|r| (r[k].as_f64() - m).powi(2)).sum::<f64>() / n as f64;
            mean[k] = m;
            std[k] = v.sqrt().max(1e-12);
        }
        Ok(NormStats { mean, std })
    }

    pub fn apply<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .enumerate()
            .map(|(k, &v)| T::of((v.as_f64() - self.mean[k]) / self.std[k]))
            .collect()
    }
}

/// Normalizes both splits with statistics of `train` only.
pub fn normalize_features<T: Scalar>(
    train: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<(Dataset<T>, Dataset<T>, NormStats)> {
    let stats = NormStats::fit(&train.x)?;
    let map = |ds: &Dataset<T>| {
        let mut out = ds.clone();
        out.x = ds.x.iter().map(|r| stats.apply(r)).collect();
        out
    };
    Ok((map(train), map(test), stats))
}

/// Seeded shuffle; the first `ceil(frac * N)` rows train.
pub fn train_test_split<T: Scalar, R: Rng + ?Sized>(
    ds: &Dataset<T>,
    frac: f64,
    rng: &mut R,
) -> Result<(Dataset<T>, Dataset<T>)> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::OutOfRange {
            value: frac,
            what: "train fraction in (0, 1)",
        });
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    rand::seq::SliceRandom::shuffle(&mut idx[..], rng);
    let cut = ((frac * ds.len() as f64).ceil() as usize).min(ds.len());
    if cut == 0 || cut == ds.len() {
        return Err(Error::InvalidArgument(format!(
            "split of {} rows at {frac} leaves an empty side",
            ds.len()
        )));
    }
    Ok((ds.subset(&idx[..cut]), ds.subset(&idx[cut..])))
}

/// `n` distinct indices from `0..N`, sorted.
pub fn sample_minibatch<R: Rng + ?Sized>(total: usize, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n == 0 || n > total {
        return Err(Error::InvalidArgument(format!(
            "minibatch size {n} not in 1..={total}"
        )));
    }
    let mut idx = rand::seq::index::sample(rng, total, n).into_vec();
    idx.sort_unstable();
    Ok(idx)
}
