//! Dense real matrices, elementwise interval matrices and positivity predicates.
//!
//! Matrices are plain `nalgebra` dynamic matrices. On top of them this module
//! provides the Metzler / nonnegativity predicates used by every certificate
//! and a spectral-abscissa oracle that exploits the Perron–Frobenius structure
//! of Metzler matrices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default absolute tolerance for the Metzler and nonnegativity predicates.
pub const POSITIVITY_TOL: f64 = 1e-12;

/// Relative tolerance used by [`metzler_spectral_abscissa`] callers by default.
pub const ABSCISSA_TOL: f64 = 1e-10;

/// Iteration cap for the shifted power iteration.
pub const MAX_POWER_ITERATIONS: usize = 100_000;

/// Builds a matrix from nested rows, checking that the rows are rectangular
/// and every entry is finite. `path` names the field for error messages.
pub fn from_rows(path: &str, rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::validation(path, "matrix has no rows"));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(Error::validation(path, "matrix has no columns"));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::validation(
                format!("{path}[{i}]"),
                format!("row has {} entries, expected {ncols}", row.len()),
            ));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!("{path}[{i}][{j}]"), "entry is not finite"));
        }
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Serializes a matrix as nested row arrays.
pub fn serialize_rows<S: serde::Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::Serialize;
    to_rows(m).serialize(s)
}

/// Serializes a vector as a flat array.
pub fn serialize_vector<S: serde::Serializer>(v: &Vector, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

pub fn vector_from_slice(path: &str, values: &[f64]) -> Result<Vector> {
    if let Some(j) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::validation(format!("{path}[{j}]"), "entry is not finite"));
    }
    Ok(Vector::from_column_slice(values))
}

fn require_square(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::shape(format!(
            "{what} requires a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// True iff every off-diagonal entry of `m` is at least `-tol`.
pub fn is_metzler(m: &Matrix, tol: f64) -> Result<bool> {
    require_square(m, "is_metzler")?;
    Ok(metzler_violations(m, tol).is_empty())
}

/// Off-diagonal entries of a square matrix that fall below `-tol`.
pub fn metzler_violations(m: &Matrix, tol: f64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)] < -tol {
                out.push((i, j, m[(i, j)]));
            }
        }
    }
    out
}

/// True iff every entry of `m` is at least `-tol`.
pub fn is_nonnegative(m: &Matrix, tol: f64) -> bool {
    m.iter().all(|&v| v >= -tol)
}

pub fn negative_entries(m: &Matrix, tol: f64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if m[(i, j)] < -tol {
                out.push((i, j, m[(i, j)]));
            }
        }
    }
    out
}

/// Spectral abscissa (largest real part of the spectrum) of a Metzler matrix.
///
/// For Metzler `m` the shifted matrix `m + cI` with `c = 1 + max |m_ii|` is
/// nonnegative with a positive diagonal, so its spectral radius is a real
/// eigenvalue (the Perron root) and equals the abscissa of `m` plus `c`. The
/// root is bracketed by the Collatz–Wielandt quotients of the iterates, which
/// gives a convergence test that does not depend on the eigenvalue gap. For
/// reducible matrices the bracket may never close; the upper quotient still
/// decreases monotonically to the root, and iteration stops once an Aitken
/// estimate of the remaining distance falls below `tol`.
pub fn metzler_spectral_abscissa(m: &Matrix, tol: f64) -> Result<f64> {
    require_square(m, "metzler_spectral_abscissa")?;
    if m.nrows() == 0 {
        return Err(Error::shape("empty matrix"));
    }
    if !is_metzler(m, POSITIVITY_TOL)? {
        return Err(Error::Domain(
            "spectral abscissa oracle requires a Metzler matrix".into(),
        ));
    }
    let n = m.nrows();
    let shift = 1.0 + (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    let mut p = m.clone();
    for i in 0..n {
        p[(i, i)] += shift;
    }
    // Roundoff-sized negative off-diagonals would break the nonnegative iteration.
    p.iter_mut().for_each(|v| *v = v.max(0.0));

    let mut x = Vector::from_element(n, 1.0);
    let mut y = Vector::zeros(n);
    let mut prev_hi = f64::INFINITY;
    let mut prev_step: Option<f64> = None;
    let mut residual = f64::INFINITY;

    for _ in 0..MAX_POWER_ITERATIONS {
        p.mul_to(&x, &mut y);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            if x[i] > f64::MIN_POSITIVE {
                let q = y[i] / x[i];
                lo = lo.min(q);
                hi = hi.max(q);
            }
        }
        residual = hi - lo;
        if residual <= tol * hi {
            return Ok(0.5 * (hi + lo) - shift);
        }
        if prev_hi.is_finite() {
            let step = (prev_hi - hi).max(0.0);
            if step == 0.0 {
                return Ok(hi - shift);
            }
            if let Some(prev) = prev_step {
                let ratio = step / prev;
                if ratio < 1.0 && step * ratio / (1.0 - ratio) <= tol * hi {
                    return Ok(hi - shift);
                }
            }
            prev_step = Some(step);
        }
        prev_hi = hi;
        let norm = y.amax();
        x.copy_from(&y);
        x /= norm;
    }
    Err(Error::Convergence {
        iterations: MAX_POWER_ITERATIONS,
        residual,
    })
}

/// Elementwise matrix interval `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMatrix {
    lower: Matrix,
    upper: Matrix,
}

impl IntervalMatrix {
    pub fn new(lower: Matrix, upper: Matrix) -> Result<Self> {
        if lower.shape() != upper.shape() {
            return Err(Error::shape(format!(
                "interval bounds differ in shape: {:?} vs {:?}",
                lower.shape(),
                upper.shape()
            )));
        }
        if let Some((k, _)) = lower
            .iter()
            .zip(upper.iter())
            .enumerate()
            .find(|(_, (l, u))| l > u)
        {
            let (i, j) = (k % lower.nrows(), k / lower.nrows());
            return Err(Error::Domain(format!(
                "interval lower bound exceeds upper bound at ({i},{j})"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// Interval with `lower == upper == m`.
    pub fn degenerate(m: Matrix) -> Self {
        Self {
            lower: m.clone(),
            upper: m,
        }
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn upper(&self) -> &Matrix {
        &self.upper
    }

    pub fn shape(&self) -> (usize, usize) {
        self.lower.shape()
    }

    pub fn is_degenerate(&self) -> bool {
        self.lower == self.upper
    }

    pub fn center(&self) -> Matrix {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn radius(&self) -> Matrix {
        (&self.upper - &self.lower) * 0.5
    }

    /// True iff `lower <= m <= upper` elementwise.
    pub fn contains(&self, m: &Matrix) -> Result<bool> {
        self.contains_with_tol(m, 0.0)
    }

    pub fn contains_with_tol(&self, m: &Matrix, tol: f64) -> Result<bool> {
        if m.shape() != self.shape() {
            return Err(Error::shape(format!(
                "matrix {:?} does not match interval {:?}",
                m.shape(),
                self.shape()
            )));
        }
        Ok(self
            .lower
            .iter()
            .zip(self.upper.iter())
            .zip(m.iter())
            .all(|((l, u), v)| *v >= l - tol && *v <= u + tol))
    }

    /// Draws a matrix uniformly (elementwise) from the interval.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix {
        Matrix::from_fn(self.lower.nrows(), self.lower.ncols(), |i, j| {
            let (l, u) = (self.lower[(i, j)], self.upper[(i, j)]);
            if l == u {
                l
            } else {
                rng.random_range(l..=u)
            }
        })
    }
}

/// Free function form of [`IntervalMatrix::contains`].
pub fn interval_contains(im: &IntervalMatrix, m: &Matrix) -> Result<bool> {
    im.contains(m)
}
