//! Small dense linear programs and Perron witnesses for Metzler matrices.
//!
//! The solver is a two-phase tableau simplex with Bland's rule. It is meant for
//! the handful-of-variables problems that certificates produce, not for large
//! or sparse models.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix, Vector, POSITIVITY_TOL};

/// Pivot and feasibility tolerance of the simplex.
pub const LP_TOL: f64 = 1e-9;

/// Upper bound on witness entries in the Perron LP.
pub const WITNESS_MAX: f64 = 1e6;

/// Smallest margin accepted as a strict Hurwitz certificate.
pub const MIN_MARGIN: f64 = 1e-8;

const MAX_PIVOTS: usize = 50_000;

/// `maximize objective·z` subject to `constraint_matrix·z <= constraint_rhs`
/// and `variable_lower_bounds <= z <= variable_upper_bounds`. Bounds may be
/// infinite.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub objective: Vector,
    pub constraint_matrix: Matrix,
    pub constraint_rhs: Vector,
    pub variable_lower_bounds: Vector,
    pub variable_upper_bounds: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub variables: Vector,
    pub objective_value: f64,
}

impl LpProblem {
    fn validate(&self) -> Result<()> {
        let nv = self.objective.len();
        let (rows, cols) = self.constraint_matrix.shape();
        if cols != nv && rows > 0 {
            return Err(Error::shape(format!(
                "constraint matrix has {cols} columns for {nv} variables"
            )));
        }
        if self.constraint_rhs.len() != rows {
            return Err(Error::shape(format!(
                "{} right-hand sides for {rows} constraints",
                self.constraint_rhs.len()
            )));
        }
        if self.variable_lower_bounds.len() != nv || self.variable_upper_bounds.len() != nv {
            return Err(Error::shape("variable bound vectors must match the objective length"));
        }
        for j in 0..nv {
            let (l, u) = (self.variable_lower_bounds[j], self.variable_upper_bounds[j]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::Domain(format!("invalid bounds [{l}, {u}] on variable {j}")));
            }
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.constraint_matrix.iter().all(|v| v.is_finite())
            && self.constraint_rhs.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain("LP data must be finite".into()));
        }
        Ok(())
    }
}

/// How an original variable is expressed through nonnegative tableau columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// z = offset + col
    Shifted { col: usize, offset: f64 },
    /// z = offset - col
    Reflected { col: usize, offset: f64 },
    /// z = pos - neg
    Free { pos: usize, neg: usize },
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize, cost: &mut [f64]) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        let f = cost[c];
        if f != 0.0 {
            for (v, pv) in cost.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
        self.basis[r] = c;
    }

    /// Runs Bland-rule pivots on the reduced-cost row `cost` (maximization).
    /// Returns false when the objective is unbounded.
    fn optimize(&mut self, cost: &mut [f64], allowed: usize) -> bool {
        for _ in 0..MAX_PIVOTS {
            let Some(enter) = (0..allowed).find(|&j| cost[j] > LP_TOL) else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][enter];
                if a > LP_TOL {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - LP_TOL
                                || (ratio <= best + LP_TOL && self.basis[i] < self.basis[k])
                            {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, enter, cost),
                None => return false,
            }
        }
        log::warn!("simplex hit the pivot cap of {MAX_PIVOTS}");
        true
    }
}

/// Solves the LP with a deterministic two-phase simplex (Bland's rule).
pub fn solve(p: &LpProblem) -> Result<LpSolution> {
    p.validate()?;
    let nv = p.objective.len();
    let nrows = p.constraint_rhs.len();

    // Map every variable onto nonnegative columns.
    let mut maps = Vec::with_capacity(nv);
    let mut ncols = 0usize;
    let mut extra_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..nv {
        let (l, u) = (p.variable_lower_bounds[j], p.variable_upper_bounds[j]);
        if l.is_finite() {
            maps.push(VarMap::Shifted { col: ncols, offset: l });
            if u.is_finite() {
                extra_rows.push((ncols, u - l));
            }
            ncols += 1;
        } else if u.is_finite() {
            maps.push(VarMap::Reflected { col: ncols, offset: u });
            ncols += 1;
        } else {
            maps.push(VarMap::Free { pos: ncols, neg: ncols + 1 });
            ncols += 2;
        }
    }

    // Constraint rows over the structural columns: a·col <= b.
    let total_rows = nrows + extra_rows.len();
    let mut a_rows = vec![vec![0.0; ncols]; total_rows];
    let mut b = vec![0.0; total_rows];
    for i in 0..nrows {
        let mut rhs = p.constraint_rhs[i];
        for (j, map) in maps.iter().enumerate() {
            let aij = p.constraint_matrix[(i, j)];
            if aij == 0.0 {
                continue;
            }
            match *map {
                VarMap::Shifted { col, offset } => {
                    a_rows[i][col] += aij;
                    rhs -= aij * offset;
                }
                VarMap::Reflected { col, offset } => {
                    a_rows[i][col] -= aij;
                    rhs -= aij * offset;
                }
                VarMap::Free { pos, neg } => {
                    a_rows[i][pos] += aij;
                    a_rows[i][neg] -= aij;
                }
            }
        }
        b[i] = rhs;
    }
    for (k, &(col, width)) in extra_rows.iter().enumerate() {
        a_rows[nrows + k][col] = 1.0;
        b[nrows + k] = width;
    }

    let mut cost_struct = vec![0.0; ncols];
    for (j, map) in maps.iter().enumerate() {
        let c = p.objective[j];
        match *map {
            VarMap::Shifted { col, .. } => cost_struct[col] += c,
            VarMap::Reflected { col, .. } => cost_struct[col] -= c,
            VarMap::Free { pos, neg } => {
                cost_struct[pos] += c;
                cost_struct[neg] -= c;
            }
        }
    }

    // Columns: structural | slacks | artificials | rhs.
    let negative: Vec<usize> = (0..total_rows).filter(|&i| b[i] < 0.0).collect();
    let n_slack = total_rows;
    let n_art = negative.len();
    let width = ncols + n_slack + n_art;
    let art_start = ncols + n_slack;
    let mut rows = vec![vec![0.0; width + 1]; total_rows];
    let mut basis = vec![0; total_rows];
    let mut art_of_row = vec![None; total_rows];
    for (k, &i) in negative.iter().enumerate() {
        art_of_row[i] = Some(art_start + k);
    }
    for i in 0..total_rows {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..ncols {
            rows[i][j] = sign * a_rows[i][j];
        }
        rows[i][ncols + i] = sign;
        rows[i][width] = sign * b[i];
        match art_of_row[i] {
            Some(a) => {
                rows[i][a] = 1.0;
                basis[i] = a;
            }
            None => basis[i] = ncols + i,
        }
    }
    let mut tab = Tableau { rows, basis, width };

    if n_art > 0 {
        let mut cost = vec![0.0; width + 1];
        for i in 0..total_rows {
            if art_of_row[i].is_some() {
                for j in 0..art_start {
                    cost[j] += tab.rows[i][j];
                }
                cost[width] += tab.rows[i][width];
            }
        }
        tab.optimize(&mut cost, art_start);
        let infeasibility = cost[width];
        let scale = 1.0 + b.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if infeasibility > LP_TOL * scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                variables: Vector::zeros(nv),
                objective_value: f64::NAN,
            });
        }
        // Drive zero-valued artificials out of the basis where possible.
        for i in 0..total_rows {
            if tab.basis[i] >= art_start {
                if let Some(j) = (0..art_start).find(|&j| tab.rows[i][j].abs() > LP_TOL) {
                    let mut scratch = vec![0.0; width + 1];
                    tab.pivot(i, j, &mut scratch);
                }
            }
        }
    }

    let col_cost = |j: usize| if j < ncols { cost_struct[j] } else { 0.0 };
    let mut cost = vec![0.0; width + 1];
    for j in 0..art_start {
        cost[j] = col_cost(j);
    }
    for i in 0..total_rows {
        let cb = col_cost(tab.basis[i]);
        if cb != 0.0 {
            for j in 0..=width {
                cost[j] -= cb * tab.rows[i][j];
            }
        }
    }
    if !tab.optimize(&mut cost, art_start) {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            variables: Vector::zeros(nv),
            objective_value: f64::INFINITY,
        });
    }

    let mut cols = vec![0.0; width];
    for (i, &bj) in tab.basis.iter().enumerate() {
        cols[bj] = tab.rhs(i);
    }
    let variables = Vector::from_iterator(
        nv,
        maps.iter().map(|map| match *map {
            VarMap::Shifted { col, offset } => offset + cols[col],
            VarMap::Reflected { col, offset } => offset - cols[col],
            VarMap::Free { pos, neg } => cols[pos] - cols[neg],
        }),
    );
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: p.objective.dot(&variables),
        variables,
    })
}

/// A positive vector certifying that a Metzler matrix is Hurwitz.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerronWitness {
    /// Normalized so that its smallest entry is 1.
    #[serde(serialize_with = "crate::matrix::serialize_vector")]
    pub v: Vector,
    /// Margin with `mᵀv <= -epsilon·v` elementwise.
    pub epsilon: f64,
    /// Optimal value of the bounded LP `max t s.t. mᵀv + t·1 <= 0`.
    pub lp_value: f64,
}

/// Largest `e` with `mᵀv <= -e·v`, i.e. `min_j -(mᵀv)_j / v_j`.
pub fn witness_margin(m: &Matrix, v: &Vector) -> f64 {
    let mtv = m.tr_mul(v);
    (0..v.len())
        .map(|j| -mtv[j] / v[j])
        .fold(f64::INFINITY, f64::min)
}

/// Searches for `v >= 1` with `mᵀv <= -ε v`, `ε > 0`, via
/// `maximize t s.t. mᵀv + t·1 <= 0, 1 <= v <= WITNESS_MAX`.
///
/// Returns `Ok(None)` when the matrix is not strictly Hurwitz (the certified
/// margin would not exceed [`MIN_MARGIN`]).
pub fn perron_witness(m: &Matrix) -> Result<Option<PerronWitness>> {
    if !matrix::is_metzler(m, POSITIVITY_TOL)? {
        return Err(Error::Domain("Perron witness requires a Metzler matrix".into()));
    }
    let n = m.nrows();
    let mut a = Matrix::zeros(n, n + 1);
    for j in 0..n {
        for i in 0..n {
            a[(j, i)] = m[(i, j)];
        }
        a[(j, n)] = 1.0;
    }
    let mut objective = Vector::zeros(n + 1);
    objective[n] = 1.0;
    let mut lower = Vector::from_element(n + 1, 1.0);
    lower[n] = f64::NEG_INFINITY;
    let mut upper = Vector::from_element(n + 1, WITNESS_MAX);
    upper[n] = f64::INFINITY;
    let sol = solve(&LpProblem {
        objective,
        constraint_matrix: a,
        constraint_rhs: Vector::zeros(n),
        variable_lower_bounds: lower,
        variable_upper_bounds: upper,
    })?;
    if sol.status != LpStatus::Optimal {
        // v = 1 with t = min_j -(mᵀ1)_j is always feasible and t is bounded
        // above by the box, so anything else is a numerical failure.
        return Err(Error::Domain(format!("Perron LP returned {:?}", sol.status)));
    }
    let t = sol.variables[n];
    if t <= 0.0 {
        return Ok(None);
    }
    let raw = sol.variables.rows(0, n).into_owned();
    let min = raw.min();
    let v = raw / min;
    let epsilon = witness_margin(m, &v);
    if epsilon <= MIN_MARGIN {
        return Ok(None);
    }
    Ok(Some(PerronWitness {
        v,
        epsilon,
        lp_value: t,
    }))
}
