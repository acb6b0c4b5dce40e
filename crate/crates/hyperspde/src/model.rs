//! Operator pair, parameter checks and per-mode symbols.
//!
//! Coefficients follow `A = sum theta_i (-Lap)^alpha_i`, `B = sum eta_j (-Lap)^beta_j`
//! on the interval `(0, L)` with Dirichlet conditions. The restated plate examples
//! `dv = (-theta Lap^2 u + eta Lap v) dt` with positive constants map to negative
//! canonical coefficients here.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of modes scanned when the sufficient positivity condition fails.
pub const DEFAULT_K_SCAN: usize = 10_000;

/// One term `coeff * (-Lap)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub exponent: f64,
    pub coeff: f64,
}

impl Term {
    pub fn new(exponent: f64, coeff: f64) -> Self {
        Term { exponent, coeff }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub domain_length: f64,
    /// Ordered by strictly decreasing exponent.
    pub elastic: Vec<Term>,
    /// Ordered by strictly decreasing exponent; empty means no damping.
    pub damping: Vec<Term>,
    pub horizon: f64,
    /// Sine coefficients of `u(0)`.
    #[serde(default)]
    pub initial_u: Vec<f64>,
    /// Sine coefficients of `v(0)`.
    #[serde(default)]
    pub initial_v: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    WaveWeak,
    PlateWeak,
    PlateStructural,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::WaveWeak, Preset::PlateWeak, Preset::PlateStructural];

    pub fn name(self) -> &'static str {
        match self {
            Preset::WaveWeak => "wave_weak",
            Preset::PlateWeak => "plate_weak",
            Preset::PlateStructural => "plate_structural",
        }
    }

    pub fn from_name(name: &str) -> Result<Preset> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown preset '{name}'")))
    }

    pub fn spec(self) -> ModelSpec {
        let (alpha, beta) = match self {
            Preset::WaveWeak => (1.0, 0.0),
            Preset::PlateWeak => (2.0, 0.0),
            Preset::PlateStructural => (2.0, 1.0),
        };
        ModelSpec {
            domain_length: 1.0,
            elastic: vec![Term::new(alpha, -0.3)],
            damping: vec![Term::new(beta, -0.3)],
            horizon: 1.0,
            initial_u: Vec::new(),
            initial_v: Vec::new(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Scalar symbols of mode `k`: the mode ODE is `du = v dt`, `dv = (a u + b v) dt + dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSymbol {
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub ell: f64,
}

impl ModeSymbol {
    /// Symbol from raw drift coefficients.
    pub fn from_ab(a: f64, b: f64) -> Self {
        ModeSymbol {
            lambda: f64::NAN,
            a,
            b,
            ell: -a - b * b / 4.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.ell.is_finite()
    }
}

impl ModelSpec {
    pub fn p(&self) -> usize {
        self.elastic.len()
    }

    pub fn q(&self) -> usize {
        self.damping.len()
    }

    pub fn alpha1(&self) -> f64 {
        self.elastic[0].exponent
    }

    pub fn theta1(&self) -> f64 {
        self.elastic[0].coeff
    }

    /// Leading damping exponent; 0 when there is no damping.
    pub fn beta1(&self) -> f64 {
        self.damping.first().map_or(0.0, |t| t.exponent)
    }

    /// Leading damping coefficient; 0 when there is no damping.
    pub fn eta1(&self) -> f64 {
        self.damping.first().map_or(0.0, |t| t.coeff)
    }

    /// `(theta, eta)` stacked.
    pub fn parameters(&self) -> Vec<f64> {
        self.elastic
            .iter()
            .chain(&self.damping)
            .map(|t| t.coeff)
            .collect()
    }

    /// Copy with the coefficients replaced by `params` (stacked `(theta, eta)`).
    pub fn with_parameters(&self, params: &[f64]) -> Result<ModelSpec> {
        if params.len() != self.p() + self.q() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.p() + self.q(),
                params.len()
            )));
        }
        let mut out = self.clone();
        for (t, &c) in out.elastic.iter_mut().chain(out.damping.iter_mut()).zip(params) {
            t.coeff = c;
        }
        Ok(out)
    }

    pub fn has_zero_initial(&self) -> bool {
        self.initial_u.iter().chain(&self.initial_v).all(|&c| c == 0.0)
    }

    /// Structural checks: finite values, positive lengths, strictly decreasing exponents.
    pub fn check_structure(&self) -> Result<()> {
        if !(self.domain_length > 0.0 && self.domain_length.is_finite()) {
            return Err(Error::InvalidModel("domain length must be positive".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidModel("horizon must be positive".into()));
        }
        if self.elastic.is_empty() {
            return Err(Error::InvalidModel("elastic term list is empty".into()));
        }
        for (name, terms) in [("elastic", &self.elastic), ("damping", &self.damping)] {
            for t in terms.iter() {
                if !(t.exponent >= 0.0 && t.exponent.is_finite() && t.coeff.is_finite()) {
                    return Err(Error::InvalidModel(format!(
                        "{name} term ({}, {}) must have a finite exponent >= 0 and a finite coefficient",
                        t.exponent, t.coeff
                    )));
                }
            }
            if terms.windows(2).any(|w| w[1].exponent >= w[0].exponent) {
                return Err(Error::InvalidModel(format!(
                    "{name} exponents must be strictly decreasing"
                )));
            }
        }
        if self.alpha1() <= 0.0 {
            return Err(Error::InvalidModel("leading elastic exponent must be > 0".into()));
        }
        if self
            .initial_u
            .iter()
            .chain(&self.initial_v)
            .any(|c| !c.is_finite())
        {
            return Err(Error::InvalidModel("initial coefficients must be finite".into()));
        }
        Ok(())
    }

    /// Eigenvalue of `-Lap` for mode `k >= 1`.
    pub fn lambda(&self, k: usize) -> f64 {
        let w = k as f64 * PI / self.domain_length;
        w * w
    }

    pub fn mode_symbol(&self, k: usize) -> ModeSymbol {
        assert!(k >= 1, "modes are numbered from 1");
        let lambda = self.lambda(k);
        let a: f64 = self
            .elastic
            .iter()
            .map(|t| t.coeff * lambda.powf(t.exponent))
            .sum();
        let b: f64 = self
            .damping
            .iter()
            .map(|t| t.coeff * lambda.powf(t.exponent))
            .sum();
        ModeSymbol {
            lambda,
            a,
            b,
            ell: -a - b * b / 4.0,
        }
    }

    /// `e_k(x) = sqrt(2/L) sin(k pi x / L)`.
    pub fn eigenfunction(&self, k: usize, x: f64) -> f64 {
        let l = self.domain_length;
        (2.0 / l).sqrt() * (k as f64 * PI * x / l).sin()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityScan {
    pub k_scan: usize,
    pub min_ell: f64,
    pub argmin_k: usize,
    pub nonpositive: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Positivity {
    /// The sufficient condition holds.
    Guaranteed,
    /// Sufficient condition failed but no scanned mode has `ell <= 0`.
    ScannedPositive,
    /// Some scanned modes have `ell <= 0`; only the real sinh branch is available for them.
    OutsideGuaranteedRegime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub clauses: Vec<Clause>,
    pub sufficient_condition: bool,
    pub scan: Option<PositivityScan>,
    pub positivity: Positivity,
}

impl ValidationReport {
    pub fn assumptions_hold(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.clauses {
            let mark = if c.passed { "pass" } else { "FAIL" };
            writeln!(f, "{:<10} {mark}  {}", c.name, c.detail)?;
        }
        writeln!(f, "positivity_sufficient {}", self.sufficient_condition)?;
        if let Some(s) = &self.scan {
            writeln!(
                f,
                "scan k<={} min_ell={:e} at k={} nonpositive={}",
                s.k_scan, s.min_ell, s.argmin_k, s.nonpositive
            )?;
        }
        writeln!(f, "verdict {:?}", self.positivity)
    }
}

/// Checks the parameter assumptions clause by clause plus the positivity condition.
pub fn validate_parameters(spec: &ModelSpec, k_scan: usize) -> Result<ValidationReport> {
    spec.check_structure()?;
    let (a1, t1) = (spec.alpha1(), spec.theta1());
    let (b1, e1) = (spec.beta1(), spec.eta1());
    if a1 < 2.0 * b1 {
        return Err(Error::OutOfScope(format!(
            "alpha1 = {a1} < 2 beta1 = {}",
            2.0 * b1
        )));
    }

    let mut clauses = vec![Clause {
        name: "(i)",
        passed: t1 < 0.0,
        detail: format!("theta1 = {t1} < 0"),
    }];
    clauses.push(if b1 > 0.0 {
        Clause {
            name: "(ii)",
            passed: e1 < 0.0,
            detail: format!("beta1 = {b1} > 0 requires eta1 = {e1} < 0"),
        }
    } else {
        Clause {
            name: "(ii)",
            passed: true,
            detail: "vacuous (beta1 = 0)".into(),
        }
    });
    clauses.push(if a1 == 2.0 * b1 {
        let s = t1 + e1 * e1 / 4.0;
        Clause {
            name: "(iii)",
            passed: s < 0.0,
            detail: format!("alpha1 = 2 beta1 requires theta1 + eta1^2/4 = {s} < 0"),
        }
    } else {
        Clause {
            name: "(iii)",
            passed: true,
            detail: format!("alpha1 = {a1} > 2 beta1"),
        }
    });

    let c = spec.lambda(1);
    let lower: f64 = spec.elastic[1..]
        .iter()
        .map(|t| t.coeff.abs() * if c >= 1.0 { 1.0 } else { c.powf(t.exponent - a1) })
        .sum();
    let mut damp = 0.0;
    for dk in &spec.damping {
        for dl in &spec.damping {
            let w = if c >= 1.0 {
                1.0
            } else {
                c.powf(dk.exponent + dl.exponent - a1)
            };
            damp += (dk.coeff * dl.coeff).abs() * w;
        }
    }
    let assumptions = clauses.iter().all(|c| c.passed);
    let sufficient = assumptions && t1.abs() > lower + damp / 4.0;

    let (scan, positivity) = if sufficient {
        (None, Positivity::Guaranteed)
    } else {
        let s = scan_ell(spec, k_scan);
        let v = if s.nonpositive == 0 {
            Positivity::ScannedPositive
        } else {
            Positivity::OutsideGuaranteedRegime
        };
        (Some(s), v)
    };
    Ok(ValidationReport {
        clauses,
        sufficient_condition: sufficient,
        scan,
        positivity,
    })
}

/// Direct scan of `ell_k` for `k <= k_scan`.
pub fn scan_ell(spec: &ModelSpec, k_scan: usize) -> PositivityScan {
    let mut out = PositivityScan {
        k_scan,
        min_ell: f64::INFINITY,
        argmin_k: 0,
        nonpositive: 0,
    };
    for k in 1..=k_scan {
        let ell = spec.mode_symbol(k).ell;
        if ell <= 0.0 {
            out.nonpositive += 1;
        }
        if ell < out.min_ell {
            out.min_ell = ell;
            out.argmin_k = k;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plate_structural_symbols() {
        let s = Preset::PlateStructural.spec().mode_symbol(1);
        assert!((s.lambda - 9.869604401089358).abs() < 1e-12);
        assert!((s.a - -29.222727310200725).abs() < 1e-10);
        assert!((s.b - -2.9608813203268074).abs() < 1e-12);
        assert!((s.ell - 27.031022761935674).abs() < 1e-10);
    }

    #[test]
    fn undamped_wave_mode_two() {
        let spec = ModelSpec {
            elastic: vec![Term::new(1.0, -1.0)],
            damping: vec![],
            ..Preset::WaveWeak.spec()
        };
        let s = spec.mode_symbol(2);
        let four_pi2 = 4.0 * PI * PI;
        assert!((s.a + four_pi2).abs() < 1e-12);
        assert_eq!(s.b, 0.0);
        assert!((s.ell - four_pi2).abs() < 1e-12);
    }

    #[test]
    fn ell_identity_within_ulps() {
        for preset in Preset::ALL {
            let spec = preset.spec();
            for k in [1, 2, 7, 100, 5000] {
                let s = spec.mode_symbol(k);
                let scale = s.a.abs().max(s.b * s.b / 4.0);
                assert!((s.ell + s.a + s.b * s.b / 4.0).abs() <= 4.0 * f64::EPSILON * scale);
            }
        }
    }

    #[test]
    fn eigenfunctions_normalised() {
        let spec = Preset::PlateStructural.spec();
        for k in [1, 5, 50] {
            let n = crate::quad::integrate(|x| spec.eigenfunction(k, x).powi(2), 0.0, 1.0, 1e-13);
            assert!((n - 1.0).abs() < 1e-10, "k={k}: {n}");
        }
    }

    #[test]
    fn plate_structural_passes() {
        let r = validate_parameters(&Preset::PlateStructural.spec(), DEFAULT_K_SCAN).unwrap();
        assert!(r.assumptions_hold());
        assert!(r.sufficient_condition);
        assert_eq!(r.positivity, Positivity::Guaranteed);
        // ell_k = 0.2775 lambda_k^2 on the whole scan range
        let spec = Preset::PlateStructural.spec();
        for k in 1..=DEFAULT_K_SCAN {
            let s = spec.mode_symbol(k);
            assert!(s.ell > 0.0);
            assert!((s.ell / (s.lambda * s.lambda) - 0.2775).abs() < 1e-12);
        }
    }

    #[test]
    fn wave_weak_passes_with_vacuous_clause() {
        let r = validate_parameters(&Preset::WaveWeak.spec(), DEFAULT_K_SCAN).unwrap();
        assert!(r.assumptions_hold());
        assert!(r.clauses[1].detail.contains("vacuous"));
    }

    #[test]
    fn positive_theta_fails_clause_one() {
        let mut spec = Preset::PlateStructural.spec();
        spec.elastic[0].coeff = 0.3;
        let r = validate_parameters(&spec, 100).unwrap();
        assert!(!r.clauses[0].passed);
        assert!(r.clauses[1].passed);
        assert!(!r.sufficient_condition);
        assert_eq!(r.positivity, Positivity::OutsideGuaranteedRegime);
        assert_eq!(r.scan.unwrap().nonpositive, 100);
    }

    #[test]
    fn structural_errors() {
        let mut spec = Preset::PlateStructural.spec();
        spec.elastic.clear();
        assert!(matches!(validate_parameters(&spec, 10), Err(Error::InvalidModel(_))));

        let mut spec = Preset::PlateStructural.spec();
        spec.elastic[0].exponent = 0.0;
        assert!(matches!(validate_parameters(&spec, 10), Err(Error::InvalidModel(_))));

        let mut spec = Preset::PlateStructural.spec();
        spec.damping[0].exponent = 1.5;
        assert!(matches!(validate_parameters(&spec, 10), Err(Error::OutOfScope(_))));

        let mut spec = Preset::PlateStructural.spec();
        spec.elastic.push(Term::new(2.0, 1.0));
        assert!(matches!(validate_parameters(&spec, 10), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn equal_exponent_clause() {
        let mut spec = Preset::PlateStructural.spec();
        spec.elastic[0].coeff = -0.01;
        spec.damping[0].coeff = -1.0;
        let r = validate_parameters(&spec, 100).unwrap();
        assert!(!r.clauses[2].passed);
    }

    #[test]
    fn lower_order_terms_trigger_scan() {
        let mut spec = Preset::PlateStructural.spec();
        spec.elastic.push(Term::new(0.0, 5.0));
        let r = validate_parameters(&spec, 1000).unwrap();
        assert!(r.assumptions_hold());
        assert!(!r.sufficient_condition);
        // a_1 = -0.3 pi^4 + 5 < 0 still, and ell_1 > 0
        assert_eq!(r.positivity, Positivity::ScannedPositive);
        spec.elastic[1].coeff = 40.0;
        let r = validate_parameters(&spec, 1000).unwrap();
        let scan = r.scan.unwrap();
        assert_eq!(r.positivity, Positivity::OutsideGuaranteedRegime);
        assert_eq!(scan.argmin_k, 1);
        assert_eq!(scan.nonpositive, 1);
    }

    #[test]
    fn with_parameters_roundtrip() {
        let spec = Preset::PlateStructural.spec();
        let s2 = spec.with_parameters(&[-1.0, -2.0]).unwrap();
        assert_eq!(s2.parameters(), vec![-1.0, -2.0]);
        assert!(spec.with_parameters(&[1.0]).is_err());
    }
}
