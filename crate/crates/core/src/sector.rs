//! Interval boxes and network-level local sector bounds.
//!
//! Pre-activation boxes come from plain interval arithmetic in center/radius
//! form. The sector bound is built by carrying a pair of shape matrices
//! `(ℓ, u)` with `ℓ y <= ω <= u y` through the network: weights are split into
//! positive and negative parts, biases are charged against the input box, and
//! each activation is relaxed to a pair of slopes chosen from the neuron's
//! pre-activation box. The final affine layer turns `(ℓ, u)` into
//! `γ₁ y <= Φ(y) <= γ₂ y` for every `y` in the box.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ffnn::{Activation, Ffnn};
use crate::matrix::{Matrix, Vector};

/// Input region `{y : lower <= y <= upper}` with `0 <= lower`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBox {
    lower: Vector,
    upper: Vector,
}

impl InputBox {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::shape("input box bounds must be non-empty and equal length"));
        }
        for k in 0..lower.len() {
            let (l, u) = (lower[k], upper[k]);
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::validation(format!("box[{k}]"), "bounds must be finite"));
            }
            if l < 0.0 {
                return Err(Error::validation(
                    format!("box[{k}]"),
                    "lower bound must be nonnegative",
                ));
            }
            if l > u {
                return Err(Error::validation(format!("box[{k}]"), "lower bound exceeds upper"));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Same interval on every coordinate.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(Vector::from_element(dim, lo), Vector::from_element(dim, hi))
    }

    pub fn lower(&self) -> &Vector {
        &self.lower
    }

    pub fn upper(&self) -> &Vector {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// `a₁ = min_k lower_k`.
    pub fn a1(&self) -> f64 {
        self.lower.min()
    }

    /// `a₂ = max_k upper_k`.
    pub fn a2(&self) -> f64 {
        self.upper.max()
    }

    pub fn contains(&self, y: &Vector) -> bool {
        y.len() == self.dim() && (0..self.dim()).all(|k| y[k] >= self.lower[k] && y[k] <= self.upper[k])
    }

    /// All `2^dim` corners (degenerate coordinates are not deduplicated).
    pub fn vertices(&self) -> Vec<Vector> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                Vector::from_fn(d, |k, _| {
                    if mask >> k & 1 == 1 {
                        self.upper[k]
                    } else {
                        self.lower[k]
                    }
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerBox {
    pub preact_lower: Vector,
    pub preact_upper: Vector,
    pub postact_lower: Vector,
    pub postact_upper: Vector,
}

/// Per-layer boxes; the last entry is the affine output layer, whose
/// post-activation box equals its pre-activation box.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBoxes {
    pub layers: Vec<LayerBox>,
}

fn affine_box(w: &Matrix, b: &Vector, lo: &Vector, hi: &Vector) -> (Vector, Vector) {
    let c = (hi + lo) * 0.5;
    let r = (hi - lo) * 0.5;
    let mid = w * c + b;
    let spread = w.abs() * r;
    (&mid - &spread, &mid + &spread)
}

/// Propagates the input box through the network by interval arithmetic.
pub fn propagate_boxes(net: &Ffnn, input: &InputBox) -> Result<LayerBoxes> {
    if input.dim() != net.input_dim() {
        return Err(Error::shape(format!(
            "box has dimension {} but the network takes {} inputs",
            input.dim(),
            net.input_dim()
        )));
    }
    let act = net.activation();
    let mut lo = input.lower.clone();
    let mut hi = input.upper.clone();
    let mut layers = Vec::with_capacity(net.layers().len());
    for layer in net.hidden_layers() {
        let (pl, pu) = affine_box(&layer.weight, &layer.bias, &lo, &hi);
        lo = pl.map(|v| act.apply(v));
        hi = pu.map(|v| act.apply(v));
        layers.push(LayerBox {
            preact_lower: pl,
            preact_upper: pu,
            postact_lower: lo.clone(),
            postact_upper: hi.clone(),
        });
    }
    let out = net.output_layer();
    let (pl, pu) = affine_box(&out.weight, &out.bias, &lo, &hi);
    layers.push(LayerBox {
        preact_lower: pl.clone(),
        preact_upper: pu.clone(),
        postact_lower: pl,
        postact_upper: pu,
    });
    Ok(LayerBoxes { layers })
}

/// Which slope relaxation applies to a neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SectorCase {
    /// Pre-activation box inside `[0, ∞)`.
    Nonnegative,
    /// Pre-activation box inside `(-∞, 0]`.
    Nonpositive,
    /// Pre-activation box straddles zero.
    SignCrossing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopePair {
    pub alpha: f64,
    pub beta: f64,
    pub case: SectorCase,
}

/// Slopes with `β ν <= φ(ν) <= α ν` on `[lo, hi]`, or, for a box straddling
/// zero, `α = β = sup |φ(ν)|/|ν|` to be used with the absolute-value rows.
pub fn activation_sector(kind: Activation, lo: f64, hi: f64) -> Result<SlopePair> {
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(Error::Domain(format!("invalid pre-activation interval [{lo}, {hi}]")));
    }
    let pair = if lo >= 0.0 {
        SlopePair {
            beta: kind.secant_slope(hi, true),
            alpha: kind.secant_slope(lo, true),
            case: SectorCase::Nonnegative,
        }
    } else if hi <= 0.0 {
        SlopePair {
            beta: kind.secant_slope(hi, false),
            alpha: kind.secant_slope(lo, false),
            case: SectorCase::Nonpositive,
        }
    } else {
        let s = kind.max_gain();
        SlopePair {
            alpha: s,
            beta: s,
            case: SectorCase::SignCrossing,
        }
    };
    Ok(pair)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSector {
    /// Pre-activation shape matrices: `L y <= ν <= U y`.
    pub l: Matrix,
    pub u: Matrix,
    /// `diag(β)`.
    pub d_lower: Matrix,
    /// `diag(α)`.
    pub d_upper: Matrix,
    pub l_hat: Matrix,
    pub u_hat: Matrix,
    pub cases: Vec<SectorCase>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSectors {
    pub layers: Vec<LayerSector>,
    /// Post-activation shape matrices of the last hidden layer (identity when
    /// the network has no hidden layer).
    pub final_lower: Matrix,
    pub final_upper: Matrix,
}

/// Carries `ℓ y <= ω <= u y` through one affine map `ν = W ω + b`.
///
/// Each bias is charged against the input box: for `y` in the box,
/// `a₁ <= mean(y) <= a₂`, so `b_j·mean(y)/a₂ <= b_j <= b_j·mean(y)/a₁` for
/// `b_j >= 0` and reversed for `b_j < 0`. The mean spreads the share evenly
/// over the input coordinates; with one input it is exactly `b_j y / a`.
fn weight_and_bias_step(
    w: &Matrix,
    b: &Vector,
    lower: &Matrix,
    upper: &Matrix,
    input: &InputBox,
) -> Result<(Matrix, Matrix)> {
    let w_pos = w.map(|v| v.max(0.0));
    let w_neg = w.map(|v| v.min(0.0));
    let mut l = &w_pos * lower + &w_neg * upper;
    let mut u = &w_pos * upper + &w_neg * lower;
    if b.iter().any(|&v| v != 0.0) {
        let (a1, a2) = (input.a1(), input.a2());
        if a1 <= 0.0 {
            return Err(Error::Precondition(
                "nonzero biases require a strictly positive input box (a1 = min lower > 0)".into(),
            ));
        }
        let n0 = input.dim() as f64;
        for j in 0..b.len() {
            let bj = b[j];
            if bj == 0.0 {
                continue;
            }
            let (lo_share, hi_share) = if bj >= 0.0 {
                (bj / a2, bj / a1)
            } else {
                (bj / a1, bj / a2)
            };
            for k in 0..input.dim() {
                l[(j, k)] += lo_share / n0;
                u[(j, k)] += hi_share / n0;
            }
        }
    }
    Ok((l, u))
}

/// Runs the layer-by-layer shape recursion over the hidden layers.
pub fn propagate_sectors(net: &Ffnn, input: &InputBox, boxes: &LayerBoxes) -> Result<LayerSectors> {
    if boxes.layers.len() != net.layers().len() {
        return Err(Error::shape("boxes were computed for a different network"));
    }
    let p = net.input_dim();
    let act = net.activation();
    let mut lower = Matrix::identity(p, p);
    let mut upper = Matrix::identity(p, p);
    let mut layers = Vec::with_capacity(net.hidden_layers().len());
    for (layer, bx) in net.hidden_layers().iter().zip(&boxes.layers) {
        let (l, u) = weight_and_bias_step(&layer.weight, &layer.bias, &lower, &upper, input)?;
        let n = l.nrows();
        let mut d_lower = Matrix::zeros(n, n);
        let mut d_upper = Matrix::zeros(n, n);
        let mut l_hat = l.clone();
        let mut u_hat = u.clone();
        let mut cases = Vec::with_capacity(n);
        for j in 0..n {
            let s = activation_sector(act, bx.preact_lower[j], bx.preact_upper[j])?;
            d_lower[(j, j)] = s.beta;
            d_upper[(j, j)] = s.alpha;
            if s.case == SectorCase::SignCrossing {
                for k in 0..p {
                    l_hat[(j, k)] = -l[(j, k)].abs();
                    u_hat[(j, k)] = u[(j, k)].abs();
                }
            }
            cases.push(s.case);
        }
        lower = &d_lower * &l_hat;
        upper = &d_upper * &u_hat;
        layers.push(LayerSector {
            l,
            u,
            d_lower,
            d_upper,
            l_hat,
            u_hat,
            cases,
        });
    }
    Ok(LayerSectors {
        layers,
        final_lower: lower,
        final_upper: upper,
    })
}

/// `γ₁ y <= Φ(y) <= γ₂ y` on `input`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorBound {
    pub gamma1: Matrix,
    pub gamma2: Matrix,
    pub input: InputBox,
}

impl SectorBound {
    /// Scalar sector for single-input single-output loops.
    pub fn scalar(gamma1: f64, gamma2: f64, input: InputBox) -> Self {
        Self {
            gamma1: Matrix::from_element(1, 1, gamma1),
            gamma2: Matrix::from_element(1, 1, gamma2),
            input,
        }
    }

    /// Checks `γ₁ y <= γ₂ y` on every box vertex, which by linearity covers
    /// the whole box.
    pub fn is_ordered_on_box(&self, tol: f64) -> bool {
        self.input.vertices().iter().all(|y| {
            let lo = &self.gamma1 * y;
            let hi = &self.gamma2 * y;
            lo.iter().zip(hi.iter()).all(|(a, b)| *a <= b + tol)
        })
    }

    /// Largest violation of `γ₁ y <= out <= γ₂ y` (zero when satisfied).
    pub fn violation(&self, y: &Vector, out: &Vector) -> f64 {
        let lo = &self.gamma1 * y;
        let hi = &self.gamma2 * y;
        (0..out.len())
            .map(|i| (lo[i] - out[i]).max(out[i] - hi[i]).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Full sector computation, keeping the intermediate boxes and shapes.
#[derive(Debug, Clone)]
pub struct SectorAnalysis {
    pub bound: SectorBound,
    pub boxes: LayerBoxes,
    pub sectors: LayerSectors,
}

pub fn analyze_sector(net: &Ffnn, input: &InputBox) -> Result<SectorAnalysis> {
    let boxes = propagate_boxes(net, input)?;
    let sectors = propagate_sectors(net, input, &boxes)?;
    let out = net.output_layer();
    let (gamma1, gamma2) = weight_and_bias_step(
        &out.weight,
        &out.bias,
        &sectors.final_lower,
        &sectors.final_upper,
        input,
    )?;
    Ok(SectorAnalysis {
        bound: SectorBound {
            gamma1,
            gamma2,
            input: input.clone(),
        },
        boxes,
        sectors,
    })
}

/// Network-level local sector `[γ₁, γ₂]` valid on `input`.
pub fn network_sector(net: &Ffnn, input: &InputBox) -> Result<SectorBound> {
    Ok(analyze_sector(net, input)?.bound)
}
