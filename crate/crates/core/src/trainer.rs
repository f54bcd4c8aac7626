//! Minibatched minimization of the local squared W2 loss.
//!
//! Each step solves one assignment per neighborhood on detached prediction
//! values and then differentiates the matched surrogate cost with that
//! matching held fixed.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::{build_neighborhoods, sample_minibatch, Dataset, NeighborIndex};
use crate::dynamics::{ToggleModel, TrajectoryBundle};
use crate::error::{Error, Result};
use crate::metric::{default_lambda, surrogate_cost_sq, surrogate_cost_value, MixedMetricConfig, MixedSample};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{indexed, substream};
use crate::scalar::Scalar;
use crate::snn::{SnnArchitecture, SnnParams};
use crate::transport::assignment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub delta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Minibatch refresh period in epochs.
    pub epoch_update: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Continuous weight; `None` derives it from the targets.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    pub seed: u64,
}

fn default_c() -> f64 {
    4.0
}

fn default_init_std() -> f64 {
    0.05
}

impl TrainingConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.delta.is_nan() || self.delta < 0.0 {
            return Err(Error::OutOfRange {
                value: self.delta,
                what: "delta >= 0",
            });
        }
        if self.batch_size == 0 || self.batch_size > n {
            return Err(Error::InvalidArgument(format!(
                "batch size {} not in 1..={n}",
                self.batch_size
            )));
        }
        if self.epoch_update == 0 {
            return Err(Error::InvalidArgument("epoch_update must be at least 1".into()));
        }
        if !(self.lr > 0.0) || self.weight_decay < 0.0 || !(self.c > 0.0) || self.init_std < 0.0 {
            return Err(Error::InvalidArgument(format!("bad optimizer settings in {self:?}")));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0) {
                return Err(Error::OutOfRange {
                    value: l,
                    what: "lambda > 0",
                });
            }
        }
        Ok(())
    }

    /// Metric for `ds`, with lambda from the config or the data.
    pub fn metric<T: Scalar>(&self, ds: &Dataset<T>) -> Result<MixedMetricConfig<T>> {
        let lambda = match self.lambda {
            Some(l) => T::of(l),
            None => default_lambda(&ds.y)?,
        };
        ds.metric(lambda)?.with_c(T::of(self.c))
    }
}

/// Distinct groups in first-appearance order with their multiplicities.
pub fn dedup_groups<'a>(groups: impl IntoIterator<Item = &'a [usize]>) -> Vec<(Vec<usize>, usize)> {
    let mut seen: HashMap<&'a [usize], usize> = HashMap::new();
    let mut out: Vec<(Vec<usize>, usize)> = Vec::new();
    for g in groups {
        match seen.get(g) {
            Some(&k) => out[k].1 += 1,
            None => {
                seen.insert(g, out.len());
                out.push((g.to_vec(), 1));
            }
        }
    }
    out
}

/// Optimal matching within each group: `perm[i]` pairs truth `group[i]` with
/// prediction `group[perm[i]]`. Groups are solved in parallel.
pub fn solve_matchings<T: Scalar>(
    truth: &[MixedSample<T>],
    pred_values: &[Option<Vec<T>>],
    groups: &[Vec<usize>],
    cfg: &MixedMetricConfig<T>,
) -> Result<Vec<Vec<usize>>> {
    groups
        .par_iter()
        .map(|g| {
            let n = g.len();
            let mut cost = Vec::with_capacity(n * n);
            for &i in g {
                for &j in g {
                    let p = pred_values[j]
                        .as_ref()
                        .ok_or_else(|| Error::InvalidArgument(format!("no prediction for index {j}")))?;
                    cost.push(surrogate_cost_value(&truth[i], p, cfg));
                }
            }
            if cost.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite("matching cost".into()));
            }
            Ok(assignment::solve(&cost, n).perm)
        })
        .collect()
}

/// `sum_g w_g (1/|g|) sum_i cost(truth[g_i], pred[g_perm(i)]) / sum_g w_g`.
pub fn assemble_loss<'t, T: Scalar>(
    tape: &'t Tape<T>,
    truth: &[MixedSample<T>],
    preds: &[Option<Var<'t, T>>],
    groups: &[(Vec<usize>, usize)],
    matchings: &[Vec<usize>],
    cfg: &MixedMetricConfig<T>,
) -> Result<Var<'t, T>> {
    let total: usize = groups.iter().map(|g| g.1).sum();
    if total == 0 {
        return Err(Error::Empty("loss groups"));
    }
    let mut terms = Vec::with_capacity(groups.len());
    for ((g, w), perm) in groups.iter().zip(matchings) {
        let mut pair_terms = Vec::with_capacity(g.len());
        for (i, &k) in perm.iter().enumerate() {
            let p = preds[g[k]].ok_or_else(|| Error::InvalidArgument(format!("no prediction for index {}", g[k])))?;
            pair_terms.push(surrogate_cost_sq(&truth[g[i]], p, cfg)?);
        }
        let weight = T::from_usize(*w).unwrap() / T::from_usize(g.len()).unwrap();
        terms.push(tape.concat(&pair_terms).sum() * weight);
    }
    Ok(tape.concat(&terms).sum() * (T::one() / T::from_usize(total).unwrap()))
}

/// Matched surrogate loss for given predictions; returns the matchings used.
pub fn matched_loss<'t, T: Scalar>(
    tape: &'t Tape<T>,
    truth: &[MixedSample<T>],
    preds: &[Option<Var<'t, T>>],
    groups: &[(Vec<usize>, usize)],
    cfg: &MixedMetricConfig<T>,
) -> Result<(Var<'t, T>, Vec<Vec<usize>>)> {
    let values: Vec<Option<Vec<T>>> = preds.iter().map(|p| p.map(|v| v.value())).collect();
    let plain: Vec<Vec<usize>> = groups.iter().map(|g| g.0.clone()).collect();
    let matchings = solve_matchings(truth, &values, &plain, cfg)?;
    let loss = assemble_loss(tape, truth, preds, groups, &matchings, cfg)?;
    Ok((loss, matchings))
}

/// Sorted union of the neighborhoods of `batch`.
pub fn neighborhood_union(index: &NeighborIndex, batch: &[usize]) -> Vec<usize> {
    let mut need: Vec<usize> = batch.iter().flat_map(|&b| index.get(b).iter().copied()).collect();
    need.sort_unstable();
    need.dedup();
    need
}

/// Loss over the minibatch `batch`: one independent draw per needed input,
/// one matching per neighborhood, averaged over the minibatch.
pub fn local_w2_loss<'t, T: Scalar, R: Rng + ?Sized>(
    params: &SnnParams<T>,
    bound: &crate::snn::BoundSnn<'t, T>,
    tape: &'t Tape<T>,
    ds: &Dataset<T>,
    index: &NeighborIndex,
    batch: &[usize],
    cfg: &MixedMetricConfig<T>,
    rng: &mut R,
) -> Result<Var<'t, T>> {
    let mut preds: Vec<Option<Var<'t, T>>> = vec![None; ds.len()];
    for j in neighborhood_union(index, batch) {
        preds[j] = Some(params.forward(bound, &ds.x[j], rng)?);
    }
    let groups = dedup_groups(batch.iter().map(|&b| index.get(b)));
    let (loss, _) = matched_loss(tape, &ds.y, &preds, &groups, cfg)?;
    let v = loss.item();
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("loss {}", v.as_f64())));
    }
    Ok(loss)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    pub params: M,
    /// Loss at each completed epoch, before that epoch's update.
    pub history: Vec<f64>,
    /// Set when training stopped early on a numeric failure.
    pub aborted: Option<Error>,
}

/// Fresh parameters from `cfg.seed`, then [`train_from`].
pub fn train<T: Scalar>(
    ds: &Dataset<T>,
    arch: SnnArchitecture,
    cfg: &TrainingConfig,
    on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome<SnnParams<T>>> {
    let params = SnnParams::init(arch, &mut substream(cfg.seed, "init"), T::of(cfg.init_std))?;
    train_from(params, ds, cfg, on_epoch)
}

pub fn train_from<T: Scalar>(
    mut params: SnnParams<T>,
    ds: &Dataset<T>,
    cfg: &TrainingConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome<SnnParams<T>>> {
    cfg.validate(ds.len())?;
    if params.arch.input_dim != ds.input_dim() || params.arch.output_dim != ds.d() {
        return Err(Error::DimensionMismatch {
            expected: ds.input_dim() + ds.d(),
            got: params.arch.input_dim + params.arch.output_dim,
        });
    }
    let metric = cfg.metric(ds)?;
    let index = build_neighborhoods(&ds.x, cfg.delta)?;
    let mut batch_rng = substream(cfg.seed, "minibatch");
    let mut opt = Adam::new(AdamConfig::new(cfg.lr, cfg.weight_decay));
    let names = params.block_names();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::new();
    for epoch in 0..cfg.epochs {
        if epoch % cfg.epoch_update == 0 {
            batch = sample_minibatch(ds.len(), cfg.batch_size, &mut batch_rng)?;
        }
        let step = (|| -> Result<(f64, Vec<Vec<T>>)> {
            let tape = Tape::new();
            let bound = params.bind(&tape);
            let mut rng = indexed(cfg.seed, "draws", epoch as u64);
            let loss = local_w2_loss(&params, &bound, &tape, ds, &index, &batch, &metric, &mut rng)?;
            let grads = tape.backward(loss)?;
            Ok((loss.item().as_f64(), bound.grads(&grads)))
        })();
        let (value, grads) = match step {
            Ok(s) => s,
            Err(e) if e.is_numeric() => {
                return Ok(TrainOutcome {
                    params,
                    history,
                    aborted: Some(e),
                })
            }
            Err(e) => return Err(e),
        };
        if let Err(e) = opt.step(params.blocks_mut(), &grads, &names) {
            return Ok(TrainOutcome {
                params,
                history,
                aborted: Some(e),
            });
        }
        history.push(value);
        on_epoch(epoch, value);
    }
    Ok(TrainOutcome {
        params,
        history,
        aborted: None,
    })
}

/// Observed trajectories as mixed samples: `truth[j][i]` is trajectory `i` at
/// `t_{j+1}` with six continuous levels and two gene categories.
pub fn bundle_targets<T: Scalar>(bundle: &TrajectoryBundle) -> Vec<Vec<MixedSample<T>>> {
    (1..=bundle.steps())
        .map(|j| {
            bundle
                .trajectories
                .iter()
                .map(|t| {
                    let s = &t[j];
                    MixedSample::new(
                        s.levels.iter().map(|&v| T::of(v)).collect(),
                        s.genes.iter().map(|&g| g as i64).collect(),
                    )
                })
                .collect()
        })
        .collect()
}

/// Metric for trajectories: six continuous levels, two binary genes,
/// lambda from the across-trajectory level variance unless given.
pub fn temporal_metric<T: Scalar>(bundle: &TrajectoryBundle, lambda: Option<f64>, c: f64) -> Result<MixedMetricConfig<T>> {
    let lambda = match lambda {
        Some(l) => l,
        None => bundle.level_variance()?,
    };
    MixedMetricConfig::new(6, 8, T::of(lambda), 0, 1)?.with_c(T::of(c))
}

/// Time-averaged local loss. Neighborhoods live in initial-level space and
/// predicted trajectories start from the observed initial states, so the
/// same index groups apply at every grid time.
pub fn temporal_local_w2_loss<'t, T: Scalar>(
    tape: &'t Tape<T>,
    truth: &[Vec<MixedSample<T>>],
    preds: &[Vec<Var<'t, T>>],
    groups: &[(Vec<usize>, usize)],
    cfg: &MixedMetricConfig<T>,
) -> Result<Var<'t, T>> {
    let steps = truth.len();
    if steps == 0 {
        return Err(Error::Empty("time grid"));
    }
    if preds.iter().any(|p| p.len() != steps) {
        return Err(Error::InvalidArgument("predicted and observed grids differ".into()));
    }
    let plain: Vec<Vec<usize>> = groups.iter().map(|g| g.0.clone()).collect();
    let nodes: Vec<Vec<Option<Var<'t, T>>>> = (0..steps)
        .map(|j| preds.iter().map(|traj| Some(traj[j])).collect())
        .collect();
    let values: Vec<Vec<Option<Vec<T>>>> = nodes
        .iter()
        .map(|p| p.iter().map(|x| x.map(|n| n.value())).collect())
        .collect();
    let matchings: Vec<Vec<Vec<usize>>> = values
        .par_iter()
        .zip(truth.par_iter())
        .map(|(v, t)| solve_matchings(t, v, &plain, cfg))
        .collect::<Result<_>>()?;
    let mut terms = Vec::with_capacity(steps);
    for j in 0..steps {
        terms.push(assemble_loss(tape, &truth[j], &nodes[j], groups, &matchings[j], cfg)?);
    }
    Ok(tape.concat(&terms).mean())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalConfig {
    pub delta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default = "one")]
    pub epoch_update: usize,
    pub lr: f64,
    pub weight_decay: f64,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    pub seed: u64,
}

fn one() -> usize {
    1
}

/// Trains the toggle reconstruction on `bundle` with the time-averaged loss.
pub fn train_temporal<T: Scalar>(
    mut model: ToggleModel<T>,
    bundle: &TrajectoryBundle,
    cfg: &TemporalConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome<ToggleModel<T>>> {
    if bundle.len() < 2 || bundle.steps() == 0 {
        return Err(Error::InvalidArgument("need at least two trajectories with one step".into()));
    }
    if cfg.batch_size == 0 || cfg.batch_size > bundle.len() || cfg.epoch_update == 0 {
        return Err(Error::InvalidArgument(format!("bad batch settings in {cfg:?}")));
    }
    let metric = temporal_metric::<T>(bundle, cfg.lambda, cfg.c)?;
    let truth = bundle_targets::<T>(bundle);
    let index = build_neighborhoods(&bundle.initial_levels(), cfg.delta)?;
    let dt = T::of(bundle.dt);
    let steps = bundle.steps();
    let mut batch_rng = substream(cfg.seed, "minibatch");
    let mut opt = Adam::new(AdamConfig::new(cfg.lr, cfg.weight_decay));
    let names = model.block_names();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::new();
    for epoch in 0..cfg.epochs {
        if epoch % cfg.epoch_update == 0 {
            batch = sample_minibatch(bundle.len(), cfg.batch_size, &mut batch_rng)?;
        }
        let step = (|| -> Result<(f64, Vec<Vec<T>>)> {
            let tape = Tape::new();
            let bound = model.bind(&tape);
            let need = neighborhood_union(&index, &batch);
            let mut preds: Vec<Vec<Var<'_, T>>> = Vec::with_capacity(bundle.len());
            let mut rng = indexed(cfg.seed, "draws", epoch as u64);
            let mut member = vec![false; bundle.len()];
            need.iter().for_each(|&j| member[j] = true);
            for (i, traj) in bundle.trajectories.iter().enumerate() {
                if member[i] {
                    preds.push(model.rollout_var(&bound, &tape, &traj[0], steps, dt, &mut rng)?);
                } else {
                    // never read: groups only reference members
                    preds.push(vec![tape.scalar(T::zero()); steps]);
                }
            }
            let groups = dedup_groups(batch.iter().map(|&b| index.get(b)));
            let loss = temporal_local_w2_loss(&tape, &truth, &preds, &groups, &metric)?;
            let v = loss.item();
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("loss {}", v.as_f64())));
            }
            let grads = tape.backward(loss)?;
            Ok((v.as_f64(), bound.grads(&grads)))
        })();
        let (value, grads) = match step {
            Ok(s) => s,
            Err(e) if e.is_numeric() => {
                return Ok(TrainOutcome {
                    params: model,
                    history,
                    aborted: Some(e),
                })
            }
            Err(e) => return Err(e),
        };
        if let Err(e) = opt.step(model.blocks_mut(), &grads, &names) {
            return Ok(TrainOutcome {
                params: model,
                history,
                aborted: Some(e),
            });
        }
        history.push(value);
        on_epoch(epoch, value);
    }
    Ok(TrainOutcome {
        params: model,
        history,
        aborted: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CsvSchema, LabelMap};
    use crate::snn::Activation;

    fn tiny() -> Dataset<f64> {
        let x = vec![vec![0.0], vec![0.01], vec![0.5], vec![0.52]];
        let y = vec![
            MixedSample::new(vec![1.0], vec![0]),
            MixedSample::new(vec![2.0], vec![1]),
            MixedSample::new(vec![0.5], vec![2]),
            MixedSample::new(vec![0.0], vec![2]),
        ];
        Dataset::new(CsvSchema::new(&["x"], &["c"], &["k"]), x, y, vec![LabelMap::Integer], 0, 2).unwrap()
    }

    #[test]
    fn perfect_predictions_give_zero() {
        let ds = tiny();
        let cfg = ds.metric(1.0).unwrap();
        let tape = Tape::new();
        let preds: Vec<_> = ds.y.iter().map(|y| Some(tape.constant(y.to_vec()))).collect();
        let idx = build_neighborhoods(&ds.x, 0.05).unwrap();
        let groups = dedup_groups((0..4).map(|b| idx.get(b)));
        let (loss, _) = matched_loss(&tape, &ds.y, &preds, &groups, &cfg).unwrap();
        assert_eq!(loss.item(), 0.0);
    }

    #[test]
    fn singleton_neighborhoods_are_mean_cost() {
        let ds = tiny();
        let cfg = ds.metric(1.0).unwrap();
        let tape = Tape::new();
        let vals = [vec![1.5, 0.2], vec![2.0, 3.0], vec![0.0, 2.0], vec![0.1, 1.6]];
        let preds: Vec<_> = vals.iter().map(|v| Some(tape.constant(v.clone()))).collect();
        let idx = build_neighborhoods(&ds.x, 0.0).unwrap();
        let groups = dedup_groups((0..4).map(|b| idx.get(b)));
        let (loss, _) = matched_loss(&tape, &ds.y, &preds, &groups, &cfg).unwrap();
        let expect: f64 = (0..4).map(|i| surrogate_cost_value(&ds.y[i], &vals[i], &cfg)).sum::<f64>() / 4.0;
        assert!((loss.item() - expect).abs() < 1e-12);
    }

    #[test]
    fn dedup_counts() {
        let a = [0usize, 1];
        let b = [2usize];
        let g = dedup_groups([&a[..], &b[..], &a[..]]);
        assert_eq!(g, vec![(vec![0, 1], 2), (vec![2], 1)]);
    }

    #[test]
    fn zero_epochs_returns_initial() {
        let ds = tiny();
        let arch = SnnArchitecture {
            input_dim: 1,
            output_dim: 2,
            hidden_layers: 2,
            width: 4,
            activation: Activation::Gelu,
            residual: true,
        };
        let cfg = TrainingConfig {
            delta: 0.05,
            batch_size: 2,
            epochs: 0,
            epoch_update: 1,
            lr: 0.01,
            weight_decay: 0.0,
            lambda: Some(1.0),
            c: 4.0,
            init_std: 0.05,
            seed: 3,
        };
        let out = train(&ds, arch, &cfg, |_, _| {}).unwrap();
        let init = SnnParams::<f64>::init(arch, &mut substream(3, "init"), 0.05).unwrap();
        assert_eq!(out.params, init);
        assert!(out.history.is_empty());
    }
}
