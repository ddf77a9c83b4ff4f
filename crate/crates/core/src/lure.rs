//! Delayed Lur'e plants with interval uncertainty and their positivity checks.
//!
//! The closed loop is
//! `ẋ = A₀ x(t) + Σᵢ Aᵢ x(t-τᵢ) + Bᵢ u(t-τᵢ)`, `y = C x`, `u = Φ(y)`, with
//! `A₀` and every `Aᵢ` known only up to an elementwise interval. `Bᵢ` and `C`
//! are exact.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{self, IntervalMatrix, Matrix};
use crate::sector::SectorBound;

#[derive(Debug, Clone, PartialEq)]
pub struct DelayedTerm {
    pub a: IntervalMatrix,
    pub b: Matrix,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayedLureSystem {
    a0: IntervalMatrix,
    terms: Vec<DelayedTerm>,
    c: Matrix,
}

/// One concrete plant drawn from the system's intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantSample {
    pub a0: Matrix,
    pub a: Vec<Matrix>,
}

impl DelayedLureSystem {
    pub fn new(a0: IntervalMatrix, terms: Vec<DelayedTerm>, c: Matrix) -> Result<Self> {
        let (n, n2) = a0.shape();
        if n != n2 {
            return Err(Error::validation("A0", format!("must be square, got {n}x{n2}")));
        }
        if c.ncols() != n {
            return Err(Error::validation(
                "C",
                format!("has {} columns but the state dimension is {n}", c.ncols()),
            ));
        }
        let m = terms.first().map(|t| t.b.ncols());
        for (i, t) in terms.iter().enumerate() {
            if t.a.shape() != (n, n) {
                return Err(Error::validation(
                    format!("terms[{i}].A"),
                    format!("expected {n}x{n}, got {:?}", t.a.shape()),
                ));
            }
            if t.b.nrows() != n || Some(t.b.ncols()) != m {
                return Err(Error::validation(
                    format!("terms[{i}].B"),
                    format!(
                        "expected {n}x{}, got {}x{}",
                        m.unwrap_or(0),
                        t.b.nrows(),
                        t.b.ncols()
                    ),
                ));
            }
            if !(t.tau.is_finite() && t.tau >= 0.0) {
                return Err(Error::validation(
                    format!("terms[{i}].tau"),
                    "delay must be finite and nonnegative",
                ));
            }
        }
        Ok(Self { a0, terms, c })
    }

    pub fn a0(&self) -> &IntervalMatrix {
        &self.a0
    }

    pub fn terms(&self) -> &[DelayedTerm] {
        &self.terms
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn state_dim(&self) -> usize {
        self.a0.shape().0
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// Input dimension `m`; zero when there are no input channels.
    pub fn input_dim(&self) -> usize {
        self.terms.first().map_or(0, |t| t.b.ncols())
    }

    pub fn taus(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.tau).collect()
    }

    pub fn max_tau(&self) -> f64 {
        self.terms.iter().map(|t| t.tau).fold(0.0, f64::max)
    }

    pub fn is_delay_free(&self) -> bool {
        self.terms.iter().all(|t| t.tau == 0.0)
    }

    pub fn is_degenerate(&self) -> bool {
        self.a0.is_degenerate() && self.terms.iter().all(|t| t.a.is_degenerate())
    }

    /// `B = Σ Bᵢ` (an `n x m` zero matrix when there are no terms).
    pub fn total_input(&self, m: usize) -> Matrix {
        self.terms
            .iter()
            .fold(Matrix::zeros(self.state_dim(), m), |acc, t| acc + &t.b)
    }

    /// Copy of the system with every delay replaced by `tau`.
    pub fn with_delay(&self, tau: f64) -> Result<Self> {
        let mut terms = self.terms.clone();
        for t in &mut terms {
            t.tau = tau;
        }
        Self::new(self.a0.clone(), terms, self.c.clone())
    }

    pub fn lower_plant(&self) -> PlantSample {
        PlantSample {
            a0: self.a0.lower().clone(),
            a: self.terms.iter().map(|t| t.a.lower().clone()).collect(),
        }
    }

    pub fn upper_plant(&self) -> PlantSample {
        PlantSample {
            a0: self.a0.upper().clone(),
            a: self.terms.iter().map(|t| t.a.upper().clone()).collect(),
        }
    }

    /// Draws `A₀` then each `Aᵢ` uniformly elementwise from their intervals.
    pub fn sample_plant<R: Rng + ?Sized>(&self, rng: &mut R) -> PlantSample {
        PlantSample {
            a0: self.a0.sample(rng),
            a: self.terms.iter().map(|t| t.a.sample(rng)).collect(),
        }
    }

    pub fn contains_plant(&self, plant: &PlantSample) -> Result<bool> {
        if plant.a.len() != self.terms.len() {
            return Err(Error::shape(format!(
                "plant has {} delayed matrices, system has {} terms",
                plant.a.len(),
                self.terms.len()
            )));
        }
        if !self.a0.contains_with_tol(&plant.a0, 1e-12)? {
            return Ok(false);
        }
        for (t, a) in self.terms.iter().zip(&plant.a) {
            if !t.a.contains_with_tol(a, 1e-12)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SystemDocument = serde_json::from_str(text)?;
        doc.into_system()
    }

    pub fn to_document(&self) -> SystemDocument {
        SystemDocument {
            a0: IntervalDocument::from_interval(&self.a0),
            terms: self
                .terms
                .iter()
                .map(|t| TermDocument {
                    a: IntervalDocument::from_interval(&t.a),
                    b: matrix::to_rows(&t.b),
                    tau: t.tau,
                })
                .collect(),
            c: matrix::to_rows(&self.c),
        }
    }
}

/// Serialized system: `{"A0": {"lower","upper"}, "terms": [{"A","B","tau"}], "C"}`.
/// An interval may also be given as a plain matrix, meaning it is exact.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDocument {
    #[serde(rename = "A0")]
    pub a0: IntervalDocument,
    #[serde(default)]
    pub terms: Vec<TermDocument>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDocument {
    #[serde(rename = "A")]
    pub a: IntervalDocument,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub tau: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntervalDocument {
    Bounds {
        lower: Vec<Vec<f64>>,
        upper: Vec<Vec<f64>>,
    },
    Exact(Vec<Vec<f64>>),
}

impl IntervalDocument {
    fn from_interval(im: &IntervalMatrix) -> Self {
        IntervalDocument::Bounds {
            lower: matrix::to_rows(im.lower()),
            upper: matrix::to_rows(im.upper()),
        }
    }

    fn into_interval(&self, path: &str) -> Result<IntervalMatrix> {
        match self {
            IntervalDocument::Bounds { lower, upper } => {
                let lo = matrix::from_rows(&format!("{path}.lower"), lower)?;
                let hi = matrix::from_rows(&format!("{path}.upper"), upper)?;
                if lo.shape() != hi.shape() {
                    return Err(Error::validation(path, "lower and upper shapes differ"));
                }
                for i in 0..lo.nrows() {
                    for j in 0..lo.ncols() {
                        if lo[(i, j)] > hi[(i, j)] {
                            return Err(Error::validation(
                                format!("{path}.lower[{i}][{j}]"),
                                "lower bound exceeds upper bound",
                            ));
                        }
                    }
                }
                IntervalMatrix::new(lo, hi)
            }
            IntervalDocument::Exact(rows) => Ok(IntervalMatrix::degenerate(matrix::from_rows(path, rows)?)),
        }
    }
}

impl SystemDocument {
    pub fn into_system(self) -> Result<DelayedLureSystem> {
        let a0 = self.a0.into_interval("A0")?;
        let terms = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| {
                Ok(DelayedTerm {
                    a: t.a.into_interval(&format!("terms[{i}].A"))?,
                    b: matrix::from_rows(&format!("terms[{i}].B"), &t.b)?,
                    tau: t.tau,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let c = matrix::from_rows("C", &self.c)?;
        DelayedLureSystem::new(a0, terms, c)
    }
}

/// A matrix entry that breaks a sign condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryViolation {
    pub matrix: String,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

fn collect(name: &str, entries: Vec<(usize, usize, f64)>, out: &mut Vec<EntryViolation>) {
    out.extend(entries.into_iter().map(|(row, col, value)| EntryViolation {
        matrix: name.to_string(),
        row,
        col,
        value,
    }));
}

/// Entries violating: lower `A₀` Metzler, every `Bᵢ >= 0`, `C >= 0`.
pub fn assumption1_violations(sys: &DelayedLureSystem, tol: f64) -> Vec<EntryViolation> {
    let mut out = Vec::new();
    collect("A0.lower", matrix::metzler_violations(sys.a0.lower(), tol), &mut out);
    for (i, t) in sys.terms.iter().enumerate() {
        collect(&format!("terms[{i}].B"), matrix::negative_entries(&t.b, tol), &mut out);
    }
    collect("C", matrix::negative_entries(&sys.c, tol), &mut out);
    out
}

pub fn check_assumption1(sys: &DelayedLureSystem, tol: f64) -> (bool, Vec<EntryViolation>) {
    let v = assumption1_violations(sys, tol);
    (v.is_empty(), v)
}

/// Checks that `γ` is `m x p` for this system.
pub fn check_sector_shape(sys: &DelayedLureSystem, sector: &SectorBound) -> Result<()> {
    let p = sys.output_dim();
    let m = if sys.terms.is_empty() {
        sector.gamma1.nrows()
    } else {
        sys.input_dim()
    };
    for (name, g) in [("gamma1", &sector.gamma1), ("gamma2", &sector.gamma2)] {
        if g.shape() != (m, p) {
            return Err(Error::shape(format!(
                "{name} is {}x{} but the loop needs {m}x{p}",
                g.nrows(),
                g.ncols()
            )));
        }
    }
    if sector.input.dim() != p {
        return Err(Error::shape(format!(
            "sector box has dimension {} but the plant has {p} outputs",
            sector.input.dim()
        )));
    }
    Ok(())
}

/// Entries with `A̲ᵢ + Bᵢ γ₁ C < -tol`, one matrix per delayed term.
pub fn lure_positivity_violations(
    sys: &DelayedLureSystem,
    sector: &SectorBound,
    tol: f64,
) -> Result<Vec<EntryViolation>> {
    check_sector_shape(sys, sector)?;
    let mut out = Vec::new();
    for (i, t) in sys.terms.iter().enumerate() {
        let m = t.a.lower() + &t.b * &sector.gamma1 * &sys.c;
        collect(&format!("terms[{i}].A.lower + B γ₁ C"), matrix::negative_entries(&m, tol), &mut out);
    }
    Ok(out)
}

/// Internal positivity of the closed loop on the sector box: Assumption 1
/// plus `A̲ᵢ + Bᵢ γ₁ C >= 0` for every delayed term.
pub fn check_lure_positivity(sys: &DelayedLureSystem, sector: &SectorBound, tol: f64) -> Result<bool> {
    let terms_ok = lure_positivity_violations(sys, sector, tol)?.is_empty();
    Ok(terms_ok && assumption1_violations(sys, tol).is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sector::InputBox;

    fn c1_json() -> &'static str {
        r#"{
            "A0": {"lower": [[-8,2,1],[3,-10,2],[1,2,-8]], "upper": [[-7.5,2.5,1.5],[3.5,-9.5,2.5],[1.5,2.5,-7.5]]},
            "terms": [{"A": {"lower": [[3,3,3],[3,3,3],[3,3,3]], "upper": [[3.5,3.5,3.5],[3.5,3.5,3.5],[3.5,3.5,3.5]]},
                       "B": [[1],[1],[1]], "tau": 0}],
            "C": [[1,1,1]]
        }"#
    }

    fn c2() -> DelayedLureSystem {
        DelayedLureSystem::from_json(
            r#"{"A0": [[-8,2,1],[3,-10,2],[1,2,-8]],
                "terms": [{"A": [[3,3,3],[3,3,3],[3,3,3]], "B": [[1],[1],[1]], "tau": 2}],
                "C": [[1,1,1]]}"#,
        )
        .unwrap()
    }

    fn sector(g1: f64, g2: f64) -> SectorBound {
        SectorBound::scalar(g1, g2, InputBox::uniform(1, 0.0, 4.5).unwrap())
    }

    #[test]
    fn parses_interval_and_exact_forms() {
        let s = DelayedLureSystem::from_json(c1_json()).unwrap();
        assert_eq!((s.state_dim(), s.input_dim(), s.output_dim()), (3, 1, 1));
        assert!(!s.is_degenerate());
        assert!(c2().is_degenerate());
    }

    #[test]
    fn rejects_inverted_interval_with_path() {
        let err = DelayedLureSystem::from_json(
            r#"{"A0": {"lower": [[0,1],[0,0]], "upper": [[0,0],[0,0]]}, "C": [[1,0]]}"#,
        )
        .unwrap_err();
        match err {
            Error::Validation { path, .. } => assert_eq!(path, "A0.lower[0][1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn assumption1_examples() {
        let s = DelayedLureSystem::from_json(c1_json()).unwrap();
        assert!(check_assumption1(&s, 0.0).0);
        let bad = DelayedLureSystem::from_json(
            r#"{"A0": [[-1,0],[0,-1]], "terms": [{"A": [[0,0],[0,0]], "B": [[1],[-1]], "tau": 0}], "C": [[1,1]]}"#,
        )
        .unwrap();
        let (ok, v) = check_assumption1(&bad, 0.0);
        assert!(!ok);
        assert_eq!((v[0].matrix.as_str(), v[0].row, v[0].col), ("terms[0].B", 1, 0));
        let zero = DelayedLureSystem::new(
            IntervalMatrix::degenerate(Matrix::zeros(2, 2)),
            vec![],
            Matrix::zeros(1, 2),
        )
        .unwrap();
        assert!(check_assumption1(&zero, 0.0).0);
    }

    #[test]
    fn lure_positivity_examples() {
        let s = c2();
        assert!(check_lure_positivity(&s, &sector(-3.0, -2.44), 0.0).unwrap());
        assert!(!check_lure_positivity(&s, &sector(-3.1, -2.44), 1e-12).unwrap());
        let v = lure_positivity_violations(&s, &sector(-3.1, -2.44), 1e-12).unwrap();
        assert_eq!(v.len(), 9);
        assert!((v[0].value + 0.1).abs() < 1e-12);
        let free = DelayedLureSystem::new(
            IntervalMatrix::degenerate(Matrix::from_element(1, 1, -1.0)),
            vec![],
            Matrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        assert!(check_lure_positivity(&free, &sector(-3.0, 0.0), 0.0).unwrap());
    }

    #[test]
    fn sector_shape_mismatch_is_an_error() {
        let s = c2();
        let wide = SectorBound {
            gamma1: Matrix::zeros(1, 2),
            gamma2: Matrix::zeros(1, 2),
            input: InputBox::uniform(2, 0.0, 1.0).unwrap(),
        };
        assert!(matches!(check_lure_positivity(&s, &wide, 0.0), Err(Error::Shape(_))));
    }

    #[test]
    fn document_roundtrip_and_delay_override() {
        let s = DelayedLureSystem::from_json(c1_json()).unwrap();
        let text = serde_json::to_string(&s.to_document()).unwrap();
        assert_eq!(DelayedLureSystem::from_json(&text).unwrap(), s);
        assert_eq!(s.with_delay(1.5).unwrap().taus(), vec![1.5]);
        assert!(s.with_delay(-1.0).is_err());
    }
}
