//! Learned toggle dynamics: a deterministic network for the level ODE and a
//! stochastic network for gene switching.
//!
//! One step of length `dt` integrates `y' = NN1(y, g)` by a single RK4 step
//! with `g` frozen, then sets `g <- clamp_round(g + SNN2(y, g, dt), 0, 1)`
//! with a straight-through gradient.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ToggleState, TrajectoryBundle};
use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::metric::clamp_round;
use crate::rng::indexed;
use crate::scalar::Scalar;
use crate::snn::{Activation, BoundDense, BoundSnn, DenseNet, SnnArchitecture, SnnParams, StochasticModel, WeightDraw};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToggleModelSpec {
    #[serde(default = "nn1_hidden")]
    pub nn1_hidden: Vec<usize>,
    #[serde(default = "snn2_arch")]
    pub snn2: SnnArchitecture,
}

fn nn1_hidden() -> Vec<usize> {
    vec![32, 32, 32]
}

fn snn2_arch() -> SnnArchitecture {
    SnnArchitecture {
        input_dim: 9,
        output_dim: 2,
        hidden_layers: 5,
        width: 16,
        activation: Activation::Gelu,
        residual: true,
    }
}

impl Default for ToggleModelSpec {
    fn default() -> Self {
        ToggleModelSpec {
            nn1_hidden: nn1_hidden(),
            snn2: snn2_arch(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToggleModel<T> {
    pub nn1: DenseNet<T>,
    pub snn2: SnnParams<T>,
}

#[derive(Debug, Clone)]
pub struct BoundToggle<'t, T> {
    pub nn1: BoundDense<'t, T>,
    pub snn2: BoundSnn<'t, T>,
}

impl<'t, T: Scalar> BoundToggle<'t, T> {
    /// Gradients in [`ToggleModel::blocks_mut`] order.
    pub fn grads(&self, g: &Gradients<T>) -> Vec<Vec<T>> {
        let mut out = self.nn1.grads(g);
        out.extend(self.snn2.grads(g));
        out
    }
}

impl<T: Scalar> ToggleModel<T> {
    pub fn init<R: Rng + ?Sized>(spec: &ToggleModelSpec, rng: &mut R, init_std: T) -> Result<Self> {
        if spec.snn2.input_dim != 9 || spec.snn2.output_dim != 2 {
            return Err(Error::InvalidArgument(
                "gene network must map 9 inputs to 2 outputs".into(),
            ));
        }
        let mut dims = vec![8];
        dims.extend(&spec.nn1_hidden);
        dims.push(6);
        let nn1 = DenseNet::init(dims, Activation::Relu, rng, init_std)?;
        let snn2 = SnnParams::init(spec.snn2, rng, init_std)?;
        Ok(ToggleModel { nn1, snn2 })
    }

    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> BoundToggle<'t, T> {
        BoundToggle {
            nn1: self.nn1.bind(tape),
            snn2: self.snn2.bind(tape),
        }
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        let mut b = self.nn1.blocks_mut();
        b.extend(self.snn2.blocks_mut());
        b
    }

    pub fn block_names(&self) -> Vec<String> {
        let mut n = self.nn1.block_names();
        n.extend(self.snn2.block_names().into_iter().map(|s| format!("gene.{s}")));
        n
    }

    /// One differentiable step from levels `y` (length 6) and genes `g` (length 2).
    pub fn step_var<'t>(
        &self,
        bound: &BoundToggle<'t, T>,
        y: Var<'t, T>,
        g: Var<'t, T>,
        dt: T,
        draw: &WeightDraw<T>,
    ) -> Result<(Var<'t, T>, Var<'t, T>)> {
        let tape = y.tape();
        let f = |v: Var<'t, T>| self.nn1.forward_var(&bound.nn1, tape.concat(&[v, g]));
        let half = dt * T::of(0.5);
        let k1 = f(y)?;
        let k2 = f(y + k1 * half)?;
        let k3 = f(y + k2 * half)?;
        let k4 = f(y + k3 * dt)?;
        let two = T::of(2.0);
        let y_next = y + (k1 + k2 * two + k3 * two + k4) * (dt / T::of(6.0));
        let input = tape.concat(&[y, g, tape.scalar(dt)]);
        let inc = self.snn2.forward_with_draw(&bound.snn2, input, draw)?;
        let g_next = (g + inc).straight_through_clamp_round(0, 1);
        Ok((y_next, g_next))
    }

    /// States at `t_1..t_steps` as length-8 nodes (levels then genes).
    pub fn rollout_var<'t, R: Rng + ?Sized>(
        &self,
        bound: &BoundToggle<'t, T>,
        tape: &'t Tape<T>,
        start: &ToggleState,
        steps: usize,
        dt: T,
        rng: &mut R,
    ) -> Result<Vec<Var<'t, T>>> {
        let draws: Vec<_> = (0..steps).map(|_| self.snn2.sample_draw(rng)).collect();
        self.rollout_var_with_draws(bound, tape, start, dt, &draws)
    }

    pub fn rollout_var_with_draws<'t>(
        &self,
        bound: &BoundToggle<'t, T>,
        tape: &'t Tape<T>,
        start: &ToggleState,
        dt: T,
        draws: &[WeightDraw<T>],
    ) -> Result<Vec<Var<'t, T>>> {
        let mut y = tape.constant(start.levels.iter().map(|&v| T::of(v)).collect());
        let mut g = tape.constant(start.genes.iter().map(|&v| T::of(v as f64)).collect());
        let mut out = Vec::with_capacity(draws.len());
        for draw in draws {
            let (y2, g2) = self.step_var(bound, y, g, dt, draw)?;
            y = y2;
            g = g2;
            out.push(tape.concat(&[y, g]));
        }
        Ok(out)
    }

    /// Plain one-step update.
    pub fn step<R: Rng + ?Sized>(&self, st: &ToggleState, dt: T, rng: &mut R) -> Result<ToggleState> {
        let y: Vec<T> = st.levels.iter().map(|&v| T::of(v)).collect();
        let g: Vec<T> = st.genes.iter().map(|&v| T::of(v as f64)).collect();
        let f = |v: &[T]| {
            let mut inp = v.to_vec();
            inp.extend(&g);
            self.nn1.forward(&inp)
        };
        let axpy = |a: &[T], k: &[T], s: T| -> Vec<T> { a.iter().zip(k).map(|(&x, &d)| x + s * d).collect() };
        let half = dt * T::of(0.5);
        let k1 = f(&y);
        let k2 = f(&axpy(&y, &k1, half));
        let k3 = f(&axpy(&y, &k2, half));
        let k4 = f(&axpy(&y, &k3, dt));
        let two = T::of(2.0);
        let six = T::of(6.0);
        let mut levels = [0.0; 6];
        for i in 0..6 {
            let v = y[i] + dt / six * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
            if !v.is_finite() {
                return Err(Error::NonFinite("reconstructed levels".into()));
            }
            levels[i] = v.as_f64();
        }
        let mut inp = y.clone();
        inp.extend(&g);
        inp.push(dt);
        let inc = self.snn2.sample(&inp, rng);
        let genes = [0, 1].map(|i| clamp_round(g[i] + inc[i], 0, 1) as u8);
        Ok(ToggleState { levels, genes })
    }

    /// Plain trajectory including the start state.
    pub fn rollout<R: Rng + ?Sized>(
        &self,
        start: &ToggleState,
        steps: usize,
        dt: T,
        rng: &mut R,
    ) -> Result<Vec<ToggleState>> {
        let mut out = Vec::with_capacity(steps + 1);
        let mut st = *start;
        out.push(st);
        for _ in 0..steps {
            st = self.step(&st, dt, rng)?;
            out.push(st);
        }
        Ok(out)
    }

    /// Rolls out from every initial state of `reference`, one stream per trajectory.
    pub fn simulate_from(&self, reference: &TrajectoryBundle, seed: u64) -> Result<TrajectoryBundle> {
        let steps = reference.steps();
        let dt = T::of(reference.dt);
        let trajectories = reference
            .trajectories
            .par_iter()
            .enumerate()
            .map(|(i, t)| self.rollout(&t[0], steps, dt, &mut indexed(seed, "rollout", i as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrajectoryBundle {
            dt: reference.dt,
            trajectories,
        })
    }
}
