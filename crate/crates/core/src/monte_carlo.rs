//! Seeded Monte Carlo convergence study over plants, delays and histories.
//!
//! All random draws happen up front on one ChaCha stream, so a seed fixes the
//! whole study. The simulations then run in parallel and are merged by index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ffnn::Ffnn;
use crate::lure::{DelayedLureSystem, PlantSample};
use crate::matrix::Vector;
use crate::sim::{self, SimConfig};

/// Relative convergence threshold on `‖x(T)‖₂`.
pub const CONVERGENCE_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum HistorySampler {
    /// Each component uniform in `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// `x₀ = t·d` with `d` uniform in `(0, 1]ⁿ` and `t` uniform over the
    /// scalings that put `C x₀` inside `[lo, hi]`.
    OutputBox { lo: Vector, hi: Vector },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantChoice {
    Sampled,
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DelayPlan {
    /// Keep the delays written in the system.
    AsGiven,
    /// Every plant is simulated at every listed delay.
    Grid(Vec<f64>),
    /// Each plant gets one delay drawn uniformly from `[lo, hi]`, rounded to
    /// the step grid.
    PerPlant { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    pub n_plants: usize,
    pub n_histories: usize,
    pub delays: DelayPlan,
    pub plants: PlantChoice,
    pub sampler: HistorySampler,
    pub step: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Points in the median norm trace.
    pub trace_points: usize,
}

impl MonteCarloConfig {
    pub fn new(sampler: HistorySampler, horizon: f64, seed: u64) -> Self {
        Self {
            n_plants: 1,
            n_histories: 100,
            delays: DelayPlan::AsGiven,
            plants: PlantChoice::Sampled,
            sampler,
            step: sim::DEFAULT_STEP,
            horizon,
            seed,
            trace_points: 101,
        }
    }
}

/// One (plant, delay) cell of the study with its sampled histories.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub plant_index: usize,
    pub plant: PlantSample,
    pub tau: Option<f64>,
    pub histories: Vec<Vector>,
}

impl Tile {
    pub fn system(&self, sys: &DelayedLureSystem) -> Result<DelayedLureSystem> {
        match self.tau {
            Some(t) => sys.with_delay(t),
            None => Ok(sys.clone()),
        }
    }

    pub fn sim_config(&self, history: usize, cfg: &MonteCarloConfig) -> SimConfig {
        SimConfig::new(self.plant.clone(), self.histories[history].clone(), cfg.horizon).with_step(cfg.step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TileReport {
    pub plant_index: usize,
    pub tau: Option<f64>,
    pub n_histories: usize,
    pub n_converged: usize,
    /// `None` when there is nothing to judge (no histories or zero horizon).
    pub proportion: Option<f64>,
    pub median_final_norm: Option<f64>,
    /// History whose final norm is the median, for trace export.
    pub median_history: Option<usize>,
    /// Largest `‖y(T)‖_∞` over the histories.
    pub max_final_output: Option<f64>,
    /// Smallest state component seen over every trajectory.
    pub min_state: Option<f64>,
    /// Histories with at least one negative component.
    pub negative_histories: usize,
    /// `(t, median ‖x(t)‖₂)` pairs.
    pub median_norm_trace: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub seed: u64,
    pub step: f64,
    pub horizon: f64,
    pub convergence_rule: String,
    pub tiles: Vec<TileReport>,
}

impl ConvergenceReport {
    pub fn min_proportion(&self) -> Option<f64> {
        self.tiles.iter().filter_map(|t| t.proportion).reduce(f64::min)
    }
}

fn sample_history<R: Rng>(sys: &DelayedLureSystem, sampler: &HistorySampler, rng: &mut R) -> Result<Vector> {
    let n = sys.state_dim();
    match sampler {
        HistorySampler::Uniform { lo, hi } => Ok(Vector::from_fn(n, |_, _| {
            if lo == hi {
                *lo
            } else {
                rng.random_range(*lo..=*hi)
            }
        })),
        HistorySampler::OutputBox { lo, hi } => {
            if lo.len() != sys.output_dim() || hi.len() != sys.output_dim() {
                return Err(Error::shape("output box does not match the plant outputs"));
            }
            for _ in 0..1000 {
                let d = Vector::from_fn(n, |_, _| 1.0 - rng.random::<f64>());
                let cd = sys.c() * &d;
                let mut t_lo: f64 = 0.0;
                let mut t_hi = f64::INFINITY;
                for k in 0..cd.len() {
                    if cd[k] > 0.0 {
                        t_lo = t_lo.max(lo[k] / cd[k]);
                        t_hi = t_hi.min(hi[k] / cd[k]);
                    } else if lo[k] > 0.0 || hi[k] < 0.0 {
                        t_hi = -1.0;
                    }
                }
                if t_hi.is_finite() && t_lo <= t_hi {
                    let t = if t_lo == t_hi { t_lo } else { rng.random_range(t_lo..=t_hi) };
                    return Ok(d * t);
                }
            }
            Err(Error::Config("could not place C x0 inside the output box".into()))
        }
    }
}

fn grid_round(tau: f64, step: f64) -> f64 {
    (tau / step).round() * step
}

/// Draws plants, delays and histories in a fixed order from the seed.
pub fn plan_tiles(sys: &DelayedLureSystem, cfg: &MonteCarloConfig) -> Result<Vec<Tile>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tiles = Vec::new();
    for p in 0..cfg.n_plants {
        let plant = match cfg.plants {
            PlantChoice::Sampled => sys.sample_plant(&mut rng),
            PlantChoice::Lower => sys.lower_plant(),
            PlantChoice::Upper => sys.upper_plant(),
        };
        let taus: Vec<Option<f64>> = match &cfg.delays {
            DelayPlan::AsGiven => vec![None],
            DelayPlan::Grid(taus) => taus.iter().map(|t| Some(*t)).collect(),
            DelayPlan::PerPlant { lo, hi } => {
                if !(lo <= hi && *lo >= 0.0) {
                    return Err(Error::Config(format!("invalid delay range [{lo}, {hi}]")));
                }
                let tau = if lo == hi { *lo } else { rng.random_range(*lo..=*hi) };
                vec![Some(grid_round(tau, cfg.step))]
            }
        };
        for tau in taus {
            let histories = (0..cfg.n_histories)
                .map(|_| sample_history(sys, &cfg.sampler, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            tiles.push(Tile {
                plant_index: p,
                plant: plant.clone(),
                tau,
                histories,
            });
        }
    }
    Ok(tiles)
}

struct RunSummary {
    final_norm: f64,
    converged: bool,
    final_output: f64,
    min_state: f64,
    trace: Vec<f64>,
}

fn trace_indices(steps: usize, points: usize) -> Vec<usize> {
    if points <= 1 || steps == 0 {
        return vec![steps];
    }
    let mut idx: Vec<usize> = (0..points)
        .map(|i| ((i as f64) * steps as f64 / (points - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Runs every tile of the study.
pub fn monte_carlo(sys: &DelayedLureSystem, net: &Ffnn, cfg: &MonteCarloConfig) -> Result<ConvergenceReport> {
    let tiles = plan_tiles(sys, cfg)?;
    let systems = tiles.iter().map(|t| t.system(sys)).collect::<Result<Vec<_>>>()?;
    let steps = if cfg.horizon == 0.0 { 0 } else { sim::horizon_steps(cfg.horizon, cfg.step) };
    let indices = trace_indices(steps, cfg.trace_points);

    let jobs: Vec<(usize, usize)> = tiles
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| (0..t.histories.len()).map(move |h| (ti, h)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(ti, h)| -> Result<Option<RunSummary>> {
            let tile = &tiles[ti];
            let states = sim::integrate_states(&systems[ti], net, &tile.sim_config(h, cfg))?;
            let Some(last) = states.last() else {
                return Ok(None);
            };
            let x0 = &tile.histories[h];
            let final_norm = last.norm();
            let y = systems[ti].c() * last;
            Ok(Some(RunSummary {
                final_norm,
                converged: final_norm < CONVERGENCE_TOL * x0.norm().max(1.0),
                final_output: y.amax(),
                min_state: states.iter().map(|x| x.min()).fold(f64::INFINITY, f64::min),
                trace: indices.iter().map(|&k| states[k].norm()).collect(),
            }))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::with_capacity(tiles.len());
    let mut cursor = 0;
    for tile in &tiles {
        let count = tile.histories.len();
        let slice = &runs[cursor..cursor + count];
        cursor += count;
        let done: Vec<&RunSummary> = slice.iter().flatten().collect();
        let negative_histories = tile.histories.iter().filter(|x| x.iter().any(|&v| v < 0.0)).count();
        let mut report = TileReport {
            plant_index: tile.plant_index,
            tau: tile.tau,
            n_histories: count,
            n_converged: done.iter().filter(|r| r.converged).count(),
            proportion: None,
            median_final_norm: None,
            median_history: None,
            max_final_output: None,
            min_state: None,
            negative_histories,
            median_norm_trace: Vec::new(),
        };
        if !done.is_empty() {
            report.proportion = Some(report.n_converged as f64 / done.len() as f64);
            let mut finals: Vec<f64> = done.iter().map(|r| r.final_norm).collect();
            let med = median(&mut finals);
            report.median_final_norm = Some(med);
            report.median_history = slice
                .iter()
                .enumerate()
                .filter_map(|(i, r)| r.as_ref().map(|r| (i, (r.final_norm - med).abs())))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i);
            report.max_final_output = Some(done.iter().map(|r| r.final_output).fold(0.0, f64::max));
            report.min_state = Some(done.iter().map(|r| r.min_state).fold(f64::INFINITY, f64::min));
            report.median_norm_trace = indices
                .iter()
                .enumerate()
                .map(|(j, &k)| {
                    let mut col: Vec<f64> = done.iter().map(|r| r.trace[j]).collect();
                    [k as f64 * cfg.step, median(&mut col)]
                })
                .collect();
        }
        reports.push(report);
    }

    Ok(ConvergenceReport {
        seed: cfg.seed,
        step: cfg.step,
        horizon: cfg.horizon,
        convergence_rule: format!("||x(T)||_2 < {CONVERGENCE_TOL:e} * max(1, ||x0||_2)"),
        tiles: reports,
    })
}
