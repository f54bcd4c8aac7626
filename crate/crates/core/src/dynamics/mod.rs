//! Two-gene toggle: scaled mRNA, protein and dimer levels driven by an ODE,
//! gene on/off states driven by a discrete-time Markov jump process.

mod reconstruction;

pub use reconstruction::{BoundToggle, ToggleModel, ToggleModelSpec};

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::indexed;

/// Rates `k1..k9` (stored per second), per-gene multipliers, and the factor
/// converting seconds to the simulation time unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToggleParams {
    pub k: [f64; 9],
    #[serde(default = "ones")]
    pub sigma: [f64; 2],
    #[serde(default = "ones")]
    pub theta: [f64; 2],
    /// Seconds per simulation time unit; 60 runs the model in minutes.
    #[serde(default = "minutes")]
    pub time_scale: f64,
}

fn ones() -> [f64; 2] {
    [1.0, 1.0]
}

fn minutes() -> f64 {
    60.0
}

impl Default for ToggleParams {
    fn default() -> Self {
        ToggleParams {
            k: [0.003, 0.015, 0.02, 0.0006, 0.01, 1e-4, 0.01, 0.005, 5e-4],
            sigma: ones(),
            theta: ones(),
            time_scale: minutes(),
        }
    }
}

impl ToggleParams {
    /// `k_i` (1-based) in simulation time units.
    pub fn rate(&self, i: usize) -> f64 {
        self.k[i - 1] * self.time_scale
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.k.iter().chain(&self.sigma).chain(&self.theta);
        if all.clone().any(|v| !v.is_finite() || *v < 0.0) || !(self.time_scale > 0.0) {
            return Err(Error::InvalidArgument(format!("bad toggle parameters {self:?}")));
        }
        Ok(())
    }

    /// `(M0, P0, D0) = (k3/k8, k3 k5/(k8 k9), k6 (k3 k5)^2 / (k7 (k8 k9)^2))`.
    pub fn derived_scales(&self) -> Result<(f64, f64, f64)> {
        let k = |i: usize| self.k[i - 1];
        let den = [k(8), k(8) * k(9), k(7)];
        if den.iter().any(|&d| d == 0.0) {
            return Err(Error::InvalidArgument("zero rate in a derived-scale denominator".into()));
        }
        let m0 = k(3) / k(8);
        let p0 = k(3) * k(5) / (k(8) * k(9));
        let d0 = k(6) * (k(3) * k(5)).powi(2) / (k(7) * (k(8) * k(9)).powi(2));
        Ok((m0, p0, d0))
    }
}

/// Levels `(m1, p1, d1, m2, p2, d2)` and gene states `(g1, g2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToggleState {
    pub levels: [f64; 6],
    pub genes: [u8; 2],
}

impl ToggleState {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.levels.to_vec();
        v.extend(self.genes.iter().map(|&g| g as f64));
        v
    }
}

/// Right-hand side of the level ODE with gene states held fixed.
pub fn toggle_rhs(levels: &[f64; 6], genes: [u8; 2], p: &ToggleParams) -> Result<[f64; 6]> {
    let (m0, p0, _) = p.derived_scales()?;
    let (k4, k6, k7, k8, k9) = (p.rate(4), p.rate(6), p.rate(7), p.rate(8), p.rate(9));
    let mut out = [0.0; 6];
    for i in 0..2 {
        let g = genes[i] as f64;
        let (m, pr, d) = (levels[3 * i], levels[3 * i + 1], levels[3 * i + 2]);
        let th = p.theta[i];
        out[3 * i] = k8 * g + k4 / m0 * (1.0 - g) - k8 * m;
        out[3 * i + 1] = 2.0 * th * k6 * p0 * (d - pr * pr) + k9 * (m - pr);
        out[3 * i + 2] = th * k7 * (pr * pr - d);
    }
    Ok(out)
}

/// Classical RK4 over `duration` in `substeps` equal steps, genes frozen.
pub fn integrate(
    levels: &[f64; 6],
    genes: [u8; 2],
    p: &ToggleParams,
    duration: f64,
    substeps: usize,
) -> Result<[f64; 6]> {
    if substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be at least 1".into()));
    }
    let h = duration / substeps as f64;
    let axpy = |y: &[f64; 6], k: &[f64; 6], a: f64| -> [f64; 6] {
        std::array::from_fn(|i| y[i] + a * k[i])
    };
    let mut y = *levels;
    for _ in 0..substeps {
        let k1 = toggle_rhs(&y, genes, p)?;
        let k2 = toggle_rhs(&axpy(&y, &k1, h / 2.0), genes, p)?;
        let k3 = toggle_rhs(&axpy(&y, &k2, h / 2.0), genes, p)?;
        let k4 = toggle_rhs(&axpy(&y, &k3, h), genes, p)?;
        y = std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("toggle levels".into()));
    }
    Ok(y)
}

/// Switching probabilities `[P(0->1), P(1->0)]` per gene over one step.
///
/// Gene `i` is repressed by the dimer of the other gene.
pub fn jump_probabilities(state: &ToggleState, dt: f64, p: &ToggleParams) -> Result<[[f64; 2]; 2]> {
    let (_, _, d0) = p.derived_scales()?;
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        let dj = state.levels[3 * (1 - i) + 2];
        let on = p.sigma[i] * p.rate(1) * dt;
        let off = p.sigma[i] * p.rate(2) * d0 * dj * dt;
        for prob in [on, off] {
            if !(0.0..=1.0).contains(&prob) {
                return Err(Error::JumpProbability { prob });
            }
        }
        out[i] = [on, off];
    }
    Ok(out)
}

/// Independent Bernoulli switch of each gene over one step of length `dt`.
pub fn jump_step<R: Rng + ?Sized>(
    state: &ToggleState,
    dt: f64,
    p: &ToggleParams,
    rng: &mut R,
) -> Result<[u8; 2]> {
    let probs = jump_probabilities(state, dt, p)?;
    let mut genes = state.genes;
    for i in 0..2 {
        let u: f64 = rng.random();
        let flip = if genes[i] == 0 { probs[i][0] } else { probs[i][1] };
        if u < flip {
            genes[i] = 1 - genes[i];
        }
    }
    Ok(genes)
}

/// Levels `0.15 (1 + xi)` for m and p, `0.022 (1 + xi)` for d with
/// `xi ~ U(0, 0.05)` each; genes fair coin flips.
pub fn sample_initial<R: Rng + ?Sized>(rng: &mut R) -> ToggleState {
    let mut levels = [0.0; 6];
    for i in 0..2 {
        for (k, base) in [0.15, 0.15, 0.022].into_iter().enumerate() {
            let xi: f64 = rng.random_range(0.0..0.05);
            levels[3 * i + k] = base * (1.0 + xi);
        }
    }
    let genes = [rng.random_range(0..2u8), rng.random_range(0..2u8)];
    ToggleState { levels, genes }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_traj: usize,
    /// Jump interval and recording step.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Number of recorded steps after the initial state.
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// RK4 substeps per jump interval.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_dt() -> f64 {
    0.1
}
fn default_steps() -> usize {
    10
}
fn default_substeps() -> usize {
    10
}

impl SimConfig {
    pub fn new(n_traj: usize) -> Self {
        SimConfig {
            n_traj,
            dt: default_dt(),
            steps: default_steps(),
            substeps: default_substeps(),
        }
    }
}

/// Trajectories recorded on the shared grid `t_j = j dt`, `j = 0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle {
    pub dt: f64,
    pub trajectories: Vec<Vec<ToggleState>>,
}

impl TrajectoryBundle {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.trajectories.first().map_or(0, |t| t.len().saturating_sub(1))
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps()).map(|j| j as f64 * self.dt).collect()
    }

    pub fn initial_levels(&self) -> Vec<Vec<f64>> {
        self.trajectories.iter().map(|t| t[0].levels.to_vec()).collect()
    }

    /// Fraction of trajectories with each gene on, per grid time.
    pub fn activated_fraction(&self) -> Vec<[f64; 2]> {
        let n = self.len() as f64;
        (0..=self.steps())
            .map(|j| {
                let mut on = [0.0; 2];
                for t in &self.trajectories {
                    for (i, o) in on.iter_mut().enumerate() {
                        *o += t[j].genes[i] as f64;
                    }
                }
                on.map(|v| v / n)
            })
            .collect()
    }

    /// Mean over grid times of the summed across-trajectory variances of the
    /// six levels (unbiased).
    pub fn level_variance(&self) -> Result<f64> {
        if self.len() < 2 {
            return Err(Error::InvalidArgument("need at least two trajectories".into()));
        }
        let n = self.len() as f64;
        let steps = self.steps();
        let mut total = 0.0;
        for j in 0..=steps {
            for k in 0..6 {
                let mean = self.trajectories.iter().map(|t| t[j].levels[k]).sum::<f64>() / n;
                let ss: f64 = self
                    .trajectories
                    .iter()
                    .map(|t| (t[j].levels[k] - mean).powi(2))
                    .sum();
                total += ss / (n - 1.0);
            }
        }
        Ok((total / (steps + 1) as f64).max(1e-12))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    /// Columns `traj_id,t,m1,p1,d1,m2,p2,d2,g1,g2`.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("traj_id,t,m1,p1,d1,m2,p2,d2,g1,g2\n");
        for (id, traj) in self.trajectories.iter().enumerate() {
            for (j, st) in traj.iter().enumerate() {
                s.push_str(&format!("{id},{}", j as f64 * self.dt));
                for v in st.levels {
                    s.push_str(&format!(",{v}"));
                }
                s.push_str(&format!(",{},{}\n", st.genes[0], st.genes[1]));
            }
        }
        s
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut rows: Vec<(usize, f64, ToggleState)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Csv {
                line: e.position().map_or(0, |p| p.line()),
                msg: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |msg: String| Error::Csv { line, msg };
            if rec.len() != 10 {
                return Err(bad(format!("expected 10 columns, got {}", rec.len())));
            }
            let f = |k: usize| -> Result<f64> {
                rec[k].parse::<f64>().map_err(|_| bad(format!("not a number: {:?}", &rec[k])))
            };
            let id: usize = rec[0].parse().map_err(|_| bad(format!("bad traj_id {:?}", &rec[0])))?;
            let g = |k: usize| -> Result<u8> {
                match &rec[k] {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(bad(format!("gene state must be 0 or 1, got {other:?}"))),
                }
            };
            let levels = [f(2)?, f(3)?, f(4)?, f(5)?, f(6)?, f(7)?];
            rows.push((id, f(1)?, ToggleState { levels, genes: [g(8)?, g(9)?] }));
        }
        if rows.is_empty() {
            return Err(Error::Empty("trajectory rows"));
        }
        let n = rows.iter().map(|r| r.0).max().unwrap() + 1;
        let mut trajectories: Vec<Vec<(f64, ToggleState)>> = vec![Vec::new(); n];
        for (id, t, st) in rows {
            trajectories[id].push((t, st));
        }
        let grid: Vec<f64> = trajectories[0].iter().map(|r| r.0).collect();
        if grid.len() < 2 {
            return Err(Error::InvalidArgument("trajectories need at least two grid points".into()));
        }
        let dt = grid[1] - grid[0];
        for traj in &trajectories {
            let ok = traj.len() == grid.len()
                && traj.iter().zip(&grid).all(|(r, g)| (r.0 - g).abs() <= 1e-9 * (1.0 + g.abs()));
            if !ok {
                return Err(Error::InvalidArgument("trajectories are not on a shared grid".into()));
            }
        }
        Ok(TrajectoryBundle {
            dt,
            trajectories: trajectories
                .into_iter()
                .map(|t| t.into_iter().map(|r| r.1).collect())
                .collect(),
        })
    }
}

/// Simulates one trajectory: on each interval, switch genes using the
/// state at its start, integrate levels with the old genes frozen.
pub fn simulate_one<R: Rng + ?Sized>(
    start: ToggleState,
    p: &ToggleParams,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<Vec<ToggleState>> {
    let mut out = Vec::with_capacity(cfg.steps + 1);
    let mut st = start;
    out.push(st);
    for _ in 0..cfg.steps {
        let genes = jump_step(&st, cfg.dt, p, rng)?;
        let levels = integrate(&st.levels, st.genes, p, cfg.dt, cfg.substeps)?;
        st = ToggleState { levels, genes };
        out.push(st);
    }
    Ok(out)
}

/// Independent trajectories, each on its own stream derived from `seed`.
pub fn simulate(p: &ToggleParams, cfg: &SimConfig, seed: u64) -> Result<TrajectoryBundle> {
    p.validate()?;
    if !(cfg.dt > 0.0) || cfg.substeps == 0 {
        return Err(Error::InvalidArgument("dt must be positive and substeps at least 1".into()));
    }
    let trajectories = (0..cfg.n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = indexed(seed, "trajectory", i as u64);
            let start = sample_initial(&mut rng);
            simulate_one(start, p, cfg, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryBundle { dt: cfg.dt, trajectories })
}

/// Empirical `P(g(t_{j+1}) = b | g(t_j) = a)` for one gene and interval;
/// `None` when no trajectory starts the interval in state `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionEstimate {
    pub interval: usize,
    pub gene: usize,
    /// Indexed `[a][b]`.
    pub prob: [[Option<f64>; 2]; 2],
}

pub fn transition_probabilities(bundle: &TrajectoryBundle) -> Result<Vec<TransitionEstimate>> {
    if bundle.is_empty() {
        return Err(Error::Empty("trajectory bundle"));
    }
    let mut out = Vec::new();
    for j in 0..bundle.steps() {
        for gene in 0..2 {
            let mut counts = [[0usize; 2]; 2];
            for t in &bundle.trajectories {
                counts[t[j].genes[gene] as usize][t[j + 1].genes[gene] as usize] += 1;
            }
            let prob = counts.map(|row| {
                let tot = row[0] + row[1];
                row.map(|c| (tot > 0).then(|| c as f64 / tot as f64))
            });
            out.push(TransitionEstimate { interval: j, gene, prob });
        }
    }
    Ok(out)
}
