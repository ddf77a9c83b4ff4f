//! Fixed-step RK4 integration of the delayed closed loop.
//!
//! Delays are realized as integer numbers of steps. Stage values between two
//! stored states are linearly interpolated; before `t = 0` the history is the
//! constant initial state.

use std::borrow::Cow;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ffnn::Ffnn;
use crate::lure::{DelayedLureSystem, PlantSample};
use crate::matrix::{Matrix, Vector};

pub const DEFAULT_STEP: f64 = 1e-3;

/// Relative tolerance for `τ / h` being an integer.
pub const DELAY_GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub step: f64,
    pub horizon: f64,
    /// Constant history on `[-τ_max, 0]`.
    pub history: Vector,
    pub plant: PlantSample,
}

impl SimConfig {
    pub fn new(plant: PlantSample, history: Vector, horizon: f64) -> Self {
        Self {
            step: DEFAULT_STEP,
            horizon,
            history,
            plant,
        }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<Vector> {
        self.states.last().map(|s| Vector::from_column_slice(s))
    }
}

/// Number of steps `d` with `d·h = τ`, or a configuration error.
pub fn delay_steps(tau: f64, step: f64) -> Result<usize> {
    let ratio = tau / step;
    let d = ratio.round();
    if (ratio - d).abs() > DELAY_GRID_TOL * ratio.abs().max(1.0) {
        return Err(Error::Config(format!(
            "delay {tau} is not an integer multiple of the step {step}"
        )));
    }
    Ok(d as usize)
}

/// Number of steps to cover `horizon`.
pub fn horizon_steps(horizon: f64, step: f64) -> usize {
    let ratio = horizon / step;
    let n = ratio.round();
    if (ratio - n).abs() <= DELAY_GRID_TOL * ratio.max(1.0) {
        n as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Right-hand side of the closed loop for one concrete plant.
struct ClosedLoop<'a> {
    a0: &'a Matrix,
    a: &'a [Matrix],
    b: Vec<&'a Matrix>,
    c: &'a Matrix,
    net: &'a Ffnn,
    delays: Vec<usize>,
}

impl ClosedLoop<'_> {
    /// State `frac` steps after stored index `k - d`.
    fn delayed<'s>(&self, states: &'s [Vector], history: &'s Vector, k: usize, d: usize, frac: f64) -> Cow<'s, Vector> {
        let at = |j: isize| -> &'s Vector {
            if j < 0 {
                history
            } else {
                &states[j as usize]
            }
        };
        let j = k as isize - d as isize;
        if frac == 0.0 {
            Cow::Borrowed(at(j))
        } else if frac == 1.0 {
            Cow::Borrowed(at(j + 1))
        } else {
            Cow::Owned(at(j) * (1.0 - frac) + at(j + 1) * frac)
        }
    }

    /// `Aᵢ xd + Bᵢ Φ(C xd)` for one term.
    fn term(&self, i: usize, xd: &Vector) -> Vector {
        let u = self.net.eval(&(self.c * xd));
        let mut out = &self.a[i] * xd;
        out.gemv(1.0, self.b[i], &u, 1.0);
        out
    }

    /// Sum of the contributions of terms with a positive delay, which depend
    /// only on the stored history.
    fn delayed_part(&self, states: &[Vector], history: &Vector, k: usize, frac: f64) -> Vector {
        let mut out = Vector::zeros(history.len());
        for (i, &d) in self.delays.iter().enumerate() {
            if d > 0 {
                out += self.term(i, &self.delayed(states, history, k, d, frac));
            }
        }
        out
    }

    fn rhs(&self, x: &Vector, delayed: &Vector) -> Vector {
        let mut dx = self.a0 * x + delayed;
        for (i, &d) in self.delays.iter().enumerate() {
            if d == 0 {
                dx += self.term(i, x);
            }
        }
        dx
    }
}

fn validate(sys: &DelayedLureSystem, net: &Ffnn, cfg: &SimConfig) -> Result<Vec<usize>> {
    let n = sys.state_dim();
    if !(cfg.step.is_finite() && cfg.step > 0.0) {
        return Err(Error::Config(format!("step must be positive, got {}", cfg.step)));
    }
    if !(cfg.horizon.is_finite() && cfg.horizon >= 0.0) {
        return Err(Error::Config(format!("horizon must be nonnegative, got {}", cfg.horizon)));
    }
    if cfg.history.len() != n {
        return Err(Error::shape(format!("history has dimension {}, state has {n}", cfg.history.len())));
    }
    if net.input_dim() != sys.output_dim() {
        return Err(Error::shape(format!(
            "network takes {} inputs, plant has {} outputs",
            net.input_dim(),
            sys.output_dim()
        )));
    }
    if !sys.terms().is_empty() && net.output_dim() != sys.input_dim() {
        return Err(Error::shape(format!(
            "network produces {} outputs, plant takes {} inputs",
            net.output_dim(),
            sys.input_dim()
        )));
    }
    if !sys.contains_plant(&cfg.plant)? {
        return Err(Error::Domain("plant sample lies outside the system intervals".into()));
    }
    sys.terms().iter().map(|t| delay_steps(t.tau, cfg.step)).collect()
}

/// Integrates the loop and returns the states at every step, `x(0)` first.
/// Horizon zero yields no states.
pub fn integrate_states(sys: &DelayedLureSystem, net: &Ffnn, cfg: &SimConfig) -> Result<Vec<Vector>> {
    let delays = validate(sys, net, cfg)?;
    if cfg.horizon == 0.0 {
        return Ok(Vec::new());
    }
    let steps = horizon_steps(cfg.horizon, cfg.step);
    let model = ClosedLoop {
        a0: &cfg.plant.a0,
        a: &cfg.plant.a,
        b: sys.terms().iter().map(|t| &t.b).collect(),
        c: sys.c(),
        net,
        delays,
    };
    let h = cfg.step;
    let hist = &cfg.history;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(hist.clone());
    let mut start = model.delayed_part(&states, hist, 0, 0.0);
    for k in 0..steps {
        let mid = model.delayed_part(&states, hist, k, 0.5);
        let end = model.delayed_part(&states, hist, k, 1.0);
        let x = &states[k];
        let k1 = model.rhs(x, &start);
        let k2 = model.rhs(&(x + &k1 * (h / 2.0)), &mid);
        let k3 = model.rhs(&(x + &k2 * (h / 2.0)), &mid);
        let k4 = model.rhs(&(x + &k3 * h), &end);
        let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        states.push(next);
        start = end;
    }
    Ok(states)
}

pub fn simulate(sys: &DelayedLureSystem, net: &Ffnn, cfg: &SimConfig) -> Result<Trajectory> {
    let states = integrate_states(sys, net, cfg)?;
    let mut traj = Trajectory::default();
    for (k, x) in states.iter().enumerate() {
        let y = sys.c() * x;
        let u = net.eval(&y);
        traj.times.push(k as f64 * cfg.step);
        traj.states.push(x.iter().copied().collect());
        traj.outputs.push(y.iter().copied().collect());
        traj.controls.push(u.iter().copied().collect());
    }
    Ok(traj)
}
