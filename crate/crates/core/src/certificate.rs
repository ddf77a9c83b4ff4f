//! Metzler/Hurwitz stability certificates for the three loop configurations.
//!
//! * `C1`: no delays. Sums every plant matrix and checks that the lower
//!   closed loop is Metzler and the upper closed loop is Hurwitz.
//! * `C2`: exact plant matrices with delays.
//! * `C3`: interval plant matrices with delays.
//!
//! The delayed configurations check the positivity conditions on the lower
//! endpoints and the Hurwitz condition on the delay-free upper matrix, so the
//! verdict never depends on the delay values. Delays only enter the reported
//! decay rate `ε / (1 + β τ)`.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{self, PerronWitness};
use crate::lure::{self, DelayedLureSystem, EntryViolation};
use crate::matrix::{self, Matrix, Vector, POSITIVITY_TOL};
use crate::sector::SectorBound;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Configuration {
    C1,
    C2,
    C3,
}

impl Configuration {
    pub fn parse(name: &str) -> Option<Option<Self>> {
        match name.to_ascii_lowercase().as_str() {
            "c1" => Some(Some(Configuration::C1)),
            "c2" => Some(Some(Configuration::C2)),
            "c3" => Some(Some(Configuration::C3)),
            "auto" => Some(None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    NotCertified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Lower `A₀` Metzler, `Bᵢ >= 0`, `C >= 0`.
    Assumption,
    /// `A̲ᵢ + Bᵢ γ₁ C >= 0`.
    Positivity,
    /// Lower closed-loop matrix Metzler.
    Metzler,
    /// Upper delay-free closed-loop matrix Hurwitz.
    Hurwitz,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub condition: Condition,
    pub detail: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub entries: Vec<EntryViolation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRate {
    pub tau: f64,
    pub rate: f64,
}

/// Interpretation notes carried in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateMetadata {
    /// Sector endpoint used in the per-channel positivity condition.
    pub positivity_sector: &'static str,
    /// Scope of the stability claim.
    pub stability: &'static str,
    pub tolerance: f64,
}

impl Default for CertificateMetadata {
    fn default() -> Self {
        Self {
            positivity_sector: "gamma1",
            stability: "local exponential stability on the sector box",
            tolerance: POSITIVITY_TOL,
        }
    }
}

fn serialize_opt_vector<S: serde::Serializer>(v: &Option<Vector>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => matrix::serialize_vector(v, s),
        None => s.serialize_none(),
    }
}

fn serialize_opt_rows<S: serde::Serializer>(m: &Option<Matrix>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match m {
        Some(m) => matrix::serialize_rows(m, s),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub verdict: Verdict,
    pub configuration: Configuration,
    /// Lower-endpoint closed-loop matrix.
    #[serde(serialize_with = "matrix::serialize_rows")]
    pub metzler_matrix: Matrix,
    /// Upper-endpoint delay-free closed-loop matrix `H`.
    #[serde(serialize_with = "matrix::serialize_rows")]
    pub hurwitz_matrix: Matrix,
    /// `M = Σ (Āᵢ + Bᵢ γ₂ C)` for the delayed configurations.
    #[serde(serialize_with = "serialize_opt_rows")]
    pub delay_matrix: Option<Matrix>,
    #[serde(serialize_with = "serialize_opt_vector")]
    pub perron_vector: Option<Vector>,
    pub margin: Option<f64>,
    pub beta: Option<f64>,
    /// Rate at the largest delay (or `ε` without delays).
    pub decay_rate: Option<f64>,
    pub decay_rates: Vec<DecayRate>,
    #[serde(serialize_with = "matrix::serialize_rows")]
    pub gamma1: Matrix,
    #[serde(serialize_with = "matrix::serialize_rows")]
    pub gamma2: Matrix,
    pub failure_reasons: Vec<Failure>,
    pub wall_time_seconds: f64,
    pub metadata: CertificateMetadata,
}

impl Certificate {
    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }

    pub fn failed(&self, condition: Condition) -> bool {
        self.failure_reasons.iter().any(|f| f.condition == condition)
    }
}

/// Picks the cheapest configuration whose preconditions the system meets.
pub fn select_configuration(sys: &DelayedLureSystem) -> Configuration {
    if sys.is_delay_free() {
        Configuration::C1
    } else if sys.is_degenerate() {
        Configuration::C2
    } else {
        Configuration::C3
    }
}

pub fn certify(
    sys: &DelayedLureSystem,
    sector: &SectorBound,
    configuration: Option<Configuration>,
) -> Result<Certificate> {
    match configuration.unwrap_or_else(|| select_configuration(sys)) {
        Configuration::C1 => certify_c1(sys, sector),
        Configuration::C2 => certify_c2(sys, sector),
        Configuration::C3 => certify_c3(sys, sector),
    }
}

fn metzler_failure(m: &Matrix) -> Option<Failure> {
    let entries = matrix::metzler_violations(m, POSITIVITY_TOL);
    (!entries.is_empty()).then(|| Failure {
        condition: Condition::Metzler,
        detail: format!("{} negative off-diagonal entries in the lower closed-loop matrix", entries.len()),
        entries: entries
            .into_iter()
            .map(|(row, col, value)| EntryViolation {
                matrix: "metzler_matrix".into(),
                row,
                col,
                value,
            })
            .collect(),
    })
}

/// Hurwitz check of `h` through the Perron LP.
fn hurwitz_check(h: &Matrix) -> Result<(Option<PerronWitness>, Option<Failure>)> {
    let off = matrix::metzler_violations(h, POSITIVITY_TOL);
    if !off.is_empty() {
        return Ok((
            None,
            Some(Failure {
                condition: Condition::Hurwitz,
                detail: "upper closed-loop matrix is not Metzler, so no linear Perron witness applies".into(),
                entries: off
                    .into_iter()
                    .map(|(row, col, value)| EntryViolation {
                        matrix: "hurwitz_matrix".into(),
                        row,
                        col,
                        value,
                    })
                    .collect(),
            }),
        ));
    }
    match lp::perron_witness(h)? {
        Some(w) => Ok((Some(w), None)),
        None => Ok((
            None,
            Some(Failure {
                condition: Condition::Hurwitz,
                detail: "Perron LP found no positive v with Hᵀv < 0".into(),
                entries: vec![],
            }),
        )),
    }
}

fn assumption_failure(sys: &DelayedLureSystem, include_a0: bool) -> Option<Failure> {
    let mut entries = lure::assumption1_violations(sys, POSITIVITY_TOL);
    if !include_a0 {
        entries.retain(|e| e.matrix != "A0.lower");
    }
    (!entries.is_empty()).then(|| Failure {
        condition: Condition::Assumption,
        detail: if include_a0 {
            "lower A0 must be Metzler and B, C nonnegative".into()
        } else {
            "B and C must be nonnegative".into()
        },
        entries,
    })
}

fn distinct_taus(sys: &DelayedLureSystem) -> Vec<f64> {
    let set: BTreeSet<u64> = sys.taus().iter().map(|t| t.to_bits()).collect();
    let mut taus: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
    taus.sort_by(f64::total_cmp);
    taus
}

/// `(A̲₀ + Σ A̲ᵢ, Ā₀ + Σ Āᵢ)`.
fn plant_sums(sys: &DelayedLureSystem) -> (Matrix, Matrix) {
    let lower = sys.terms().iter().fold(sys.a0().lower().clone(), |acc, t| acc + t.a.lower());
    let upper = sys.terms().iter().fold(sys.a0().upper().clone(), |acc, t| acc + t.a.upper());
    (lower, upper)
}

/// Delay-free certificate.
pub fn certify_c1(sys: &DelayedLureSystem, sector: &SectorBound) -> Result<Certificate> {
    if !sys.is_delay_free() {
        return Err(Error::Config(
            "C1 requires every delay to be zero; use C3 for delayed systems".into(),
        ));
    }
    lure::check_sector_shape(sys, sector)?;
    let start = Instant::now();
    let m = sector.gamma1.nrows();
    let b = sys.total_input(m);
    let c = sys.c();
    let (lower_sum, upper_sum) = plant_sums(sys);
    let metzler_matrix = lower_sum + &b * &sector.gamma1 * c;
    let hurwitz_matrix = upper_sum + &b * &sector.gamma2 * c;

    let mut failures = Vec::new();
    failures.extend(assumption_failure(sys, false));
    failures.extend(metzler_failure(&metzler_matrix));
    let (witness, hurwitz) = hurwitz_check(&hurwitz_matrix)?;
    failures.extend(hurwitz);
    let wall = start.elapsed().as_secs_f64();

    let certified = failures.is_empty() && witness.is_some();
    let (v, eps) = witness.map(|w| (Some(w.v), Some(w.epsilon))).unwrap_or((None, None));
    Ok(Certificate {
        verdict: if certified { Verdict::Certified } else { Verdict::NotCertified },
        configuration: Configuration::C1,
        metzler_matrix,
        hurwitz_matrix,
        delay_matrix: None,
        perron_vector: v,
        margin: eps,
        beta: eps.map(|_| 0.0),
        decay_rate: eps,
        decay_rates: eps.map(|e| vec![DecayRate { tau: 0.0, rate: e }]).unwrap_or_default(),
        gamma1: sector.gamma1.clone(),
        gamma2: sector.gamma2.clone(),
        failure_reasons: failures,
        wall_time_seconds: wall,
        metadata: CertificateMetadata::default(),
    })
}

/// Delayed certificate on exact plant matrices.
pub fn certify_c2(sys: &DelayedLureSystem, sector: &SectorBound) -> Result<Certificate> {
    if !sys.is_degenerate() {
        return Err(Error::Config(
            "C2 requires exact (degenerate) plant intervals; use C3 for interval uncertainty".into(),
        ));
    }
    delayed_certificate(sys, sector, Configuration::C2)
}

/// Delayed certificate with interval plant matrices.
pub fn certify_c3(sys: &DelayedLureSystem, sector: &SectorBound) -> Result<Certificate> {
    delayed_certificate(sys, sector, Configuration::C3)
}

fn delayed_certificate(
    sys: &DelayedLureSystem,
    sector: &SectorBound,
    configuration: Configuration,
) -> Result<Certificate> {
    lure::check_sector_shape(sys, sector)?;
    let start = Instant::now();
    let n = sys.state_dim();
    let m = sector.gamma1.nrows();
    let c = sys.c();
    let b = sys.total_input(m);

    let mut failures = Vec::new();
    failures.extend(assumption_failure(sys, true));
    let positivity = lure::lure_positivity_violations(sys, sector, POSITIVITY_TOL)?;
    if !positivity.is_empty() {
        failures.push(Failure {
            condition: Condition::Positivity,
            detail: "lower delayed matrices plus B γ₁ C must be nonnegative".into(),
            entries: positivity,
        });
    }

    let (lower_sum, upper_sum) = plant_sums(sys);
    let metzler_matrix = lower_sum + &b * &sector.gamma1 * c;
    let hurwitz_matrix = upper_sum + &b * &sector.gamma2 * c;
    let mut delay_matrix = Matrix::zeros(n, n);
    for t in sys.terms() {
        delay_matrix += t.a.upper() + &t.b * &sector.gamma2 * c;
    }
    let (witness, hurwitz) = hurwitz_check(&hurwitz_matrix)?;
    failures.extend(hurwitz);

    let mut beta = None;
    let mut decay_rates = Vec::new();
    let mut decay_rate = None;
    if let Some(w) = &witness {
        let mv = delay_matrix.transpose() * &w.v;
        let b_const = (0..n).map(|j| mv[j] / w.v[j]).fold(0.0, f64::max);
        beta = Some(b_const);
        decay_rates = distinct_taus(sys)
            .into_iter()
            .map(|tau| DecayRate { tau, rate: w.epsilon / (1.0 + b_const * tau) })
            .collect();
        decay_rate = Some(w.epsilon / (1.0 + b_const * sys.max_tau()));
    }
    let wall = start.elapsed().as_secs_f64();

    let certified = failures.is_empty() && witness.is_some();
    let (v, eps) = witness.map(|w| (Some(w.v), Some(w.epsilon))).unwrap_or((None, None));
    Ok(Certificate {
        verdict: if certified { Verdict::Certified } else { Verdict::NotCertified },
        configuration,
        metzler_matrix,
        hurwitz_matrix,
        delay_matrix: Some(delay_matrix),
        perron_vector: v,
        margin: eps,
        beta,
        decay_rate,
        decay_rates,
        gamma1: sector.gamma1.clone(),
        gamma2: sector.gamma2.clone(),
        failure_reasons: failures,
        wall_time_seconds: wall,
        metadata: CertificateMetadata::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sector::InputBox;
    use approx::assert_abs_diff_eq;

    const C1: &str = r#"{
        "A0": {"lower": [[-8,2,1],[3,-10,2],[1,2,-8]], "upper": [[-7.5,2.5,1.5],[3.5,-9.5,2.5],[1.5,2.5,-7.5]]},
        "terms": [{"A": {"lower": [[3,3,3],[3,3,3],[3,3,3]], "upper": [[3.5,3.5,3.5],[3.5,3.5,3.5],[3.5,3.5,3.5]]},
                   "B": [[1],[1],[1]], "tau": 0}],
        "C": [[1,1,1]]
    }"#;

    const C2: &str = r#"{"A0": [[-8,2,1],[3,-10,2],[1,2,-8]],
        "terms": [{"A": [[3,3,3],[3,3,3],[3,3,3]], "B": [[1],[1],[1]], "tau": 16}],
        "C": [[1,1,1]]}"#;

    fn sector(g1: f64, g2: f64) -> SectorBound {
        SectorBound::scalar(g1, g2, InputBox::uniform(1, 0.0, 4.5).unwrap())
    }

    fn rows(m: &Matrix) -> Vec<Vec<f64>> {
        matrix::to_rows(m)
    }

    #[test]
    fn c1_reference_instance() {
        let sys = DelayedLureSystem::from_json(C1).unwrap();
        let cert = certify_c1(&sys, &sector(-3.0, -2.44)).unwrap();
        assert!(cert.is_certified());
        assert_eq!(rows(&cert.metzler_matrix), vec![vec![-8., 2., 1.], vec![3., -10., 2.], vec![1., 2., -8.]]);
        let h = [[-6.44, 3.56, 2.56], [4.56, -8.44, 3.56], [2.56, 3.56, -6.44]];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(cert.hurwitz_matrix[(i, j)], h[i][j], epsilon = 1e-12);
            }
        }
        assert_eq!(cert.beta, Some(0.0));
        assert_eq!(cert.decay_rate, cert.margin);
    }

    #[test]
    fn c1_zero_feedback_fails_hurwitz() {
        let sys = DelayedLureSystem::from_json(C1).unwrap();
        let cert = certify_c1(&sys, &sector(-3.0, 0.0)).unwrap();
        assert!(!cert.is_certified());
        assert!(cert.failed(Condition::Hurwitz));
        assert_eq!(rows(&cert.hurwitz_matrix), vec![vec![-4., 6., 5.], vec![7., -6., 6.], vec![5., 6., -4.]]);
    }

    #[test]
    fn c1_reports_conditions_not_sector_soundness() {
        let sys = DelayedLureSystem::from_json(C1).unwrap();
        let cert = certify_c1(&sys, &sector(-4.0, -2.44)).unwrap();
        assert_eq!(rows(&cert.metzler_matrix), vec![vec![-9., 1., 0.], vec![2., -11., 1.], vec![0., 1., -9.]]);
        assert!(!cert.failed(Condition::Metzler));
    }

    #[test]
    fn c1_rejects_delays() {
        let sys = DelayedLureSystem::from_json(C2).unwrap();
        assert!(matches!(certify_c1(&sys, &sector(-3.0, -2.44)), Err(Error::Config(_))));
    }

    #[test]
    fn c2_reference_instance() {
        let sys = DelayedLureSystem::from_json(C2).unwrap();
        let cert = certify_c2(&sys, &sector(-3.0, -2.44)).unwrap();
        assert!(cert.is_certified());
        let h = [[-7.44, 2.56, 1.56], [3.56, -9.44, 2.56], [1.56, 2.56, -7.44]];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(cert.hurwitz_matrix[(i, j)], h[i][j], epsilon = 1e-12);
            }
        }
        let mm = cert.delay_matrix.as_ref().unwrap();
        assert!(mm.iter().all(|v| (v - 0.56).abs() < 1e-12));
        let v = cert.perron_vector.as_ref().unwrap();
        let eps = cert.margin.unwrap();
        let beta = cert.beta.unwrap();
        let mv = mm.transpose() * v;
        let expect_beta = (0..3).map(|j| mv[j] / v[j]).fold(f64::MIN, f64::max);
        assert_abs_diff_eq!(beta, expect_beta, epsilon = 1e-12);
        assert_abs_diff_eq!(cert.decay_rate.unwrap(), eps / (1.0 + beta * 16.0), epsilon = 1e-15);
        let hv = cert.hurwitz_matrix.transpose() * v;
        assert!((0..3).all(|j| hv[j] <= -eps * v[j] + 1e-9));
    }

    #[test]
    fn c2_ones_witness_gives_beta_1_68() {
        let m = Matrix::from_element(3, 3, 0.56);
        let ones = Vector::from_element(3, 1.0);
        let mv = m.transpose() * &ones;
        assert_abs_diff_eq!(mv.max(), 1.68, epsilon = 1e-12);
    }

    #[test]
    fn c2_positivity_violation() {
        let sys = DelayedLureSystem::from_json(
            r#"{"A0": [[-8,2,1],[3,-10,2],[1,2,-8]],
                "terms": [{"A": [[3,-3.5,3],[3,3,3],[3,3,3]], "B": [[1],[1],[1]], "tau": 1}],
                "C": [[1,1,1]]}"#,
        )
        .unwrap();
        let cert = certify_c2(&sys, &sector(-3.0, -2.44)).unwrap();
        assert!(!cert.is_certified());
        let f = cert.failure_reasons.iter().find(|f| f.condition == Condition::Positivity).unwrap();
        assert_eq!(f.entries.len(), 1);
        assert_abs_diff_eq!(f.entries[0].value, -6.5);
    }

    #[test]
    fn c2_rejects_intervals() {
        let sys = DelayedLureSystem::from_json(C1).unwrap();
        assert!(matches!(certify_c2(&sys, &sector(-3.0, -2.44)), Err(Error::Config(_))));
    }

    #[test]
    fn c3_reduces_to_c2_on_exact_plants() {
        let sys = DelayedLureSystem::from_json(C2).unwrap();
        let mut a = certify_c2(&sys, &sector(-3.0, -2.44)).unwrap();
        let mut b = certify_c3(&sys, &sector(-3.0, -2.44)).unwrap();
        a.wall_time_seconds = 0.0;
        b.wall_time_seconds = 0.0;
        b.configuration = Configuration::C2;
        assert_eq!(a, b);
    }

    #[test]
    fn c3_widened_upper_fails() {
        let sys = DelayedLureSystem::from_json(C1).unwrap().with_delay(1.0).unwrap();
        assert!(certify_c3(&sys, &sector(-3.0, -2.44)).unwrap().is_certified());
        let wide = DelayedLureSystem::new(
            crate::matrix::IntervalMatrix::new(
                sys.a0().lower().clone(),
                sys.a0().upper().add_scalar(5.0),
            )
            .unwrap(),
            sys.terms().to_vec(),
            sys.c().clone(),
        )
        .unwrap();
        let cert = certify_c3(&wide, &sector(-3.0, -2.44)).unwrap();
        assert!(cert.failed(Condition::Hurwitz));
    }

    #[test]
    fn auto_selection() {
        let c1 = DelayedLureSystem::from_json(C1).unwrap();
        let c2 = DelayedLureSystem::from_json(C2).unwrap();
        assert_eq!(select_configuration(&c1), Configuration::C1);
        assert_eq!(select_configuration(&c2), Configuration::C2);
        assert_eq!(select_configuration(&c1.with_delay(0.5).unwrap()), Configuration::C3);
    }

    #[test]
    fn report_serializes_rows() {
        let sys = DelayedLureSystem::from_json(C1).unwrap();
        let cert = certify_c1(&sys, &sector(-3.0, -2.44)).unwrap();
        let json = serde_json::to_value(&cert).unwrap();
        assert_eq!(json["verdict"], "certified");
        assert_eq!(json["configuration"], "C1");
        assert_eq!(json["metzler_matrix"][1][1], -10.0);
        assert_eq!(json["metadata"]["positivity_sector"], "gamma1");
    }
}
