#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::Complex;
use poscert::ffnn::{Activation, Ffnn, Layer};
use poscert::lure::{DelayedLureSystem, DelayedTerm};
use poscert::matrix::{IntervalMatrix, Matrix, Vector};
use poscert::sector::{network_sector, InputBox, SectorBound};
use rand::Rng;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

pub fn load_system(name: &str) -> DelayedLureSystem {
    DelayedLureSystem::from_json(&std::fs::read_to_string(scenario_path(name)).unwrap()).unwrap()
}

pub fn surrogate() -> Ffnn {
    Ffnn::from_json(&std::fs::read_to_string(scenario_path("surrogate_controller.json")).unwrap()).unwrap()
}

pub fn output_box() -> InputBox {
    InputBox::uniform(1, 0.0, 4.5).unwrap()
}

pub fn surrogate_sector() -> SectorBound {
    network_sector(&surrogate(), &output_box()).unwrap()
}

pub fn scalar_sector(g1: f64, g2: f64) -> SectorBound {
    SectorBound::scalar(g1, g2, output_box())
}

/// Largest real part over the full complex spectrum (Schur based).
pub fn eig_abscissa(m: &Matrix) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z: &Complex<f64>| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Metzler matrix with sparse nonnegative off-diagonal part and negative
/// diagonal.
pub fn random_metzler<R: Rng>(rng: &mut R, n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| {
        if i == j {
            rng.random_range(-6.0..1.0)
        } else if rng.random_bool(0.3) {
            0.0
        } else {
            rng.random_range(0.0..2.0)
        }
    })
}

pub fn random_net<R: Rng>(
    rng: &mut R,
    input: usize,
    output: usize,
    max_hidden: usize,
    max_width: usize,
    activation: Activation,
    bias: bool,
) -> Ffnn {
    let hidden = rng.random_range(0..=max_hidden);
    let mut widths = vec![input];
    for _ in 0..hidden {
        widths.push(rng.random_range(1..=max_width));
    }
    widths.push(output);
    let layers = widths
        .windows(2)
        .map(|w| {
            let scale = 1.5 / (w[0] as f64).sqrt();
            Layer {
                weight: Matrix::from_fn(w[1], w[0], |_, _| rng.random_range(-scale..scale)),
                bias: Vector::from_fn(w[1], |_, _| if bias { rng.random_range(-0.5..0.5) } else { 0.0 }),
            }
        })
        .collect();
    Ffnn::new(layers, activation).unwrap()
}

/// Uniform point in the box.
pub fn sample_box<R: Rng>(rng: &mut R, b: &InputBox) -> Vector {
    Vector::from_fn(b.dim(), |k, _| {
        let (l, u) = (b.lower()[k], b.upper()[k]);
        if l == u {
            l
        } else {
            rng.random_range(l..=u)
        }
    })
}

/// Random single-channel delay-free loop with interval plant matrices.
pub fn random_c1_system<R: Rng>(rng: &mut R, n: usize) -> DelayedLureSystem {
    let a0_lo = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            rng.random_range(-10.0..-2.0)
        } else {
            rng.random_range(0.0..2.0)
        }
    });
    let a1_lo = Matrix::from_fn(n, n, |_, _| rng.random_range(0.0..1.5));
    let widen = |m: &Matrix, rng: &mut R| m + Matrix::from_fn(n, n, |_, _| rng.random_range(0.0..0.6));
    let a0_hi = widen(&a0_lo, rng);
    let a1_hi = widen(&a1_lo, rng);
    let b = Matrix::from_fn(n, 1, |_, _| rng.random_range(0.0..1.0));
    let c = Matrix::from_fn(1, n, |_, _| rng.random_range(0.0..1.0));
    DelayedLureSystem::new(
        IntervalMatrix::new(a0_lo, a0_hi).unwrap(),
        vec![DelayedTerm {
            a: IntervalMatrix::new(a1_lo, a1_hi).unwrap(),
            b,
            tau: 0.0,
        }],
        c,
    )
    .unwrap()
}

/// Exact solution of `ẋ(t) = -x(t - tau)` with `x ≡ 1` on `[-tau, 0]`,
/// built piece by piece as polynomials in the local time on each delay
/// interval.
pub struct MethodOfSteps {
    tau: f64,
    pieces: Vec<Vec<f64>>,
}

impl MethodOfSteps {
    pub fn new(tau: f64, horizon: f64) -> Self {
        let count = (horizon / tau).ceil() as usize + 1;
        let mut pieces = vec![vec![1.0]];
        for _ in 0..count {
            let prev = pieces.last().unwrap();
            let start = eval_poly(prev, tau);
            let mut next = vec![start];
            for (k, c) in prev.iter().enumerate() {
                next.push(-c / (k as f64 + 1.0));
            }
            pieces.push(next);
        }
        Self { tau, pieces }
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        let k = ((t / self.tau).floor() as usize).min(self.pieces.len() - 2);
        eval_poly(&self.pieces[k + 1], t - k as f64 * self.tau)
    }
}

fn eval_poly(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * s + v)
}

pub struct InputBoxSector;

impl InputBoxSector {
    /// Sector `[-10, -10]` on `[0, 1]` for a one-output plant.
    pub fn wide() -> SectorBound {
        SectorBound::scalar(-10.0, -10.0, InputBox::uniform(1, 0.0, 1.0).unwrap())
    }
}
