//! Augmented maximum-likelihood estimator and its asymptotic theory.
//!
//! With observation vectors `Y_k` and driving paths `v_k` at `N` locations,
//! `I = sum_k int Y_k Y_k^T dt` and `(theta, eta)^ = I^{-1} sum_k int Y_k dv_k`.
//! Both integrals use strict left-endpoint sums.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{sobolev_norm, KernelProfile};
use crate::measurements::MeasurementSet;
use crate::model::ModelSpec;
use crate::spectral_sim::TimeGrid;

/// Largest accepted condition number of the preconditioned Fisher matrix.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub matrix: DMatrix<f64>,
    pub delta: f64,
    pub n_loc: usize,
    pub grid: TimeGrid,
}

/// Running left-endpoint sums for the Fisher matrix and the score.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulator {
    dim: usize,
    h: f64,
    fisher: Vec<f64>,
    score: Vec<f64>,
    noise: Vec<f64>,
}

impl Accumulator {
    pub fn new(dim: usize, h: f64) -> Accumulator {
        Accumulator {
            dim,
            h,
            fisher: vec![0.0; dim * dim],
            score: vec![0.0; dim],
            noise: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adds one step: `Y(t_n)`, `v(t_{n+1}) - v(t_n)` and the kernel-weighted noise increment.
    #[inline]
    pub fn push(&mut self, y: &[f64], dv: f64, db: f64) {
        let d = self.dim;
        for i in 0..d {
            let yi = y[i];
            self.score[i] += yi * dv;
            self.noise[i] += yi * db;
            for j in i..d {
                self.fisher[i * d + j] += yi * y[j];
            }
        }
    }

    pub fn merge(&mut self, other: &Accumulator) {
        for (a, b) in self.fisher.iter_mut().zip(&other.fisher) {
            *a += b;
        }
        for (a, b) in self.score.iter_mut().zip(&other.score) {
            *a += b;
        }
        for (a, b) in self.noise.iter_mut().zip(&other.noise) {
            *a += b;
        }
    }

    pub fn fisher(&self) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(d, d, |i, j| {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            self.h * self.fisher[a * d + b]
        })
    }

    /// `sum_n Y(t_n) (v(t_{n+1}) - v(t_n))`.
    pub fn score(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.score)
    }

    /// `sum_n Y(t_n) dB_n`, the discrete martingale part of the score.
    pub fn noise_score(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.noise)
    }
}

fn check_common(ms: &[MeasurementSet]) -> Result<()> {
    let first = ms
        .first()
        .ok_or_else(|| Error::InvalidInput("no measurement locations".into()))?;
    for m in ms {
        if m.grid != first.grid || m.p != first.p || m.q != first.q {
            return Err(Error::Dimension("measurement sets differ in grid or shape".into()));
        }
        if m.y.len() != m.dim() || m.y.iter().chain([&m.v]).any(|r| r.len() != m.grid.n_steps + 1) {
            return Err(Error::Dimension(format!(
                "measurement rows at x = {} do not match the grid",
                m.x
            )));
        }
    }
    Ok(())
}

fn accumulate(ms: &[MeasurementSet]) -> Result<Accumulator> {
    check_common(ms)?;
    let (dim, grid) = (ms[0].dim(), ms[0].grid);
    let mut acc = Accumulator::new(dim, grid.h());
    let mut y = vec![0.0; dim];
    // fixed order by location makes the sums independent of the input order
    let mut order: Vec<&MeasurementSet> = ms.iter().collect();
    order.sort_by(|a, b| a.x.total_cmp(&b.x));
    for m in order {
        let noise = m.noise.as_deref();
        for n in 0..grid.n_steps {
            for (r, row) in m.y.iter().enumerate() {
                y[r] = row[n];
            }
            let db = noise.map_or(0.0, |b| b[n]);
            acc.push(&y, m.v[n + 1] - m.v[n], db);
        }
    }
    Ok(acc)
}

/// `sum_k sum_n h Y_k(t_n) Y_k(t_n)^T`, symmetric by construction.
pub fn fisher_matrix(ms: &[MeasurementSet]) -> Result<FisherMatrix> {
    let acc = accumulate(ms)?;
    Ok(FisherMatrix {
        matrix: acc.fisher(),
        delta: ms[0].delta,
        n_loc: ms.len(),
        grid: ms[0].grid,
    })
}

/// Diagonal of the scaling matrix `rho_delta`.
pub fn scaling_matrix(spec: &ModelSpec, delta: f64, n: usize) -> Vec<f64> {
    let (a1, b1) = (spec.alpha1(), spec.beta1());
    let s = (n as f64).powf(-0.5);
    spec.elastic
        .iter()
        .map(|t| s * delta.powf(2.0 * t.exponent - a1 - b1))
        .chain(spec.damping.iter().map(|t| s * delta.powf(2.0 * t.exponent - b1)))
        .collect()
}

/// `(e^{T eta} - T eta - 1) / (2 eta^2)`, continuous at `eta = 0`.
pub fn c_constant(eta1: f64, horizon: f64) -> f64 {
    let t = horizon;
    if eta1 == 0.0 {
        t * t / 4.0
    } else if eta1.abs() < 1e-4 {
        t * t / 4.0 + t.powi(3) * eta1 / 12.0 + t.powi(4) * eta1 * eta1 / 48.0
    } else {
        ((t * eta1).exp_m1() - t * eta1) / (2.0 * eta1 * eta1)
    }
}

/// Solution of the preconditioned normal equations.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub estimate: Vec<f64>,
    pub condition: f64,
    /// `theta + I^{-1} sum Y dB`, when the truth is supplied.
    pub decomposition: Option<Vec<f64>>,
}

/// Solves `I x = s` on `rho I rho` by SVD; `truth` enables the decomposition estimate.
pub fn solve(acc: &Accumulator, rho: &[f64], truth: Option<&[f64]>) -> Result<Solution> {
    let d = acc.dim();
    if rho.len() != d {
        return Err(Error::Dimension(format!("rho has {} entries for {d} parameters", rho.len())));
    }
    let r = DVector::from_column_slice(rho);
    let fisher = acc.fisher();
    let pre = DMatrix::from_fn(d, d, |i, j| r[i] * fisher[(i, j)] * r[j]);
    if pre.iter().any(|x| !x.is_finite()) {
        return Err(Error::IllConditioned { condition: f64::INFINITY });
    }
    let svd = pre.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let apply = |rhs: DVector<f64>| -> Result<Vec<f64>> {
        let z = svd
            .solve(&rhs.component_mul(&r), 0.0)
            .map_err(|e| Error::Range(e.to_string()))?;
        Ok(z.component_mul(&r).iter().copied().collect())
    };
    let estimate = apply(acc.score())?;
    let decomposition = match truth {
        Some(t) => {
            let err = apply(acc.noise_score())?;
            Some(t.iter().zip(err).map(|(a, b)| a + b).collect())
        }
        None => None,
    };
    Ok(Solution {
        estimate,
        condition,
        decomposition,
    })
}

/// Limit matrix `Sigma` together with the CLT covariance `|K|^2 Sigma^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticSigma {
    pub sigma: DMatrix<f64>,
    pub clt_covariance: DMatrix<f64>,
    pub kernel_norm_sq: f64,
}

pub fn asymptotic_sigma(spec: &ModelSpec, profile: &KernelProfile, horizon: f64) -> Result<AsymptoticSigma> {
    spec.check_structure()?;
    let (p, q) = (spec.p(), spec.q());
    let (a1, th1, b1, et1) = (spec.alpha1(), spec.theta1(), spec.beta1(), spec.eta1());
    let damped = q > 0 && b1 > 0.0;
    let c = c_constant(et1, horizon);
    let norm = |gamma: f64| sobolev_norm(profile, gamma).map(|n| n.value);
    let mut sigma = DMatrix::zeros(p + q, p + q);
    for i in 0..p {
        for j in i..p {
            let (ai, aj) = (spec.elastic[i].exponent, spec.elastic[j].exponent);
            let v = if damped {
                horizon / (2.0 * th1 * et1) * norm((ai + aj - a1 - b1) / 2.0)?
            } else {
                -c / th1 * norm((ai + aj - a1) / 2.0)?
            };
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    for k in 0..q {
        for l in k..q {
            let (bk, bl) = (spec.damping[k].exponent, spec.damping[l].exponent);
            let v = if damped {
                -horizon / (2.0 * et1) * norm((bk + bl - b1) / 2.0)?
            } else {
                c * norm((bk + bl) / 2.0)?
            };
            sigma[(p + k, p + l)] = v;
            sigma[(p + l, p + k)] = v;
        }
    }
    for i in 0..p + q {
        if !(sigma[(i, i)] > 0.0) || !sigma[(i, i)].is_finite() {
            return Err(Error::SingularSigma(format!(
                "diagonal entry {i} is {} (theta_1 = {th1}, eta_1 = {et1})",
                sigma[(i, i)]
            )));
        }
    }
    let kernel_norm_sq = profile.norm_sq();
    let inv = invert_sigma(&sigma)?;
    Ok(AsymptoticSigma {
        sigma,
        clt_covariance: inv * kernel_norm_sq,
        kernel_norm_sq,
    })
}

fn invert_sigma(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = sigma.nrows();
    // unit-diagonal scaling exposes near-dependencies independent of magnitude
    let s = DVector::from_fn(d, |i, _| sigma[(i, i)].sqrt().recip());
    let corr = DMatrix::from_fn(d, d, |i, j| s[i] * sigma[(i, j)] * s[j]);
    let eig = corr.clone().symmetric_eigen();
    let (imin, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    if lmin < 1e-12 * d as f64 {
        let v = eig.eigenvectors.column(imin);
        let combo: Vec<String> = v
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() > 1e-3)
            .map(|(i, c)| format!("{c:+.3}*row{i}"))
            .collect();
        return Err(Error::SingularSigma(format!(
            "near-dependency {} (eigenvalue {lmin:e})",
            combo.join(" ")
        )));
    }
    let inv_corr = corr.try_inverse().ok_or_else(|| Error::SingularSigma("inversion failed".into()))?;
    Ok(DMatrix::from_fn(d, d, |i, j| s[i] * inv_corr[(i, j)] * s[j]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub theta_hat: Vec<f64>,
    pub eta_hat: Vec<f64>,
    pub fisher: FisherMatrix,
    pub rho: Vec<f64>,
    pub sigma_theory: DMatrix<f64>,
    pub clt_covariance: DMatrix<f64>,
    pub condition: f64,
    /// `rho^{-1} (estimate - truth)`.
    pub standardized: Vec<f64>,
    /// Decomposition estimate `theta + I^{-1} sum Y dB` (needs recorded noise).
    pub decomposition: Option<Vec<f64>>,
    pub truth: Vec<f64>,
}

impl EstimateReport {
    pub fn estimate(&self) -> Vec<f64> {
        self.theta_hat.iter().chain(&self.eta_hat).copied().collect()
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["delta".to_string(), "n_loc".to_string(), "condition".to_string()];
        for i in 1..=self.theta_hat.len() {
            cols.push(format!("theta_{i}"));
        }
        for j in 1..=self.eta_hat.len() {
            cols.push(format!("eta_{j}"));
        }
        for i in 0..self.standardized.len() {
            cols.push(format!("z_{}", i + 1));
        }
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut vals = vec![
            format!("{}", self.fisher.delta),
            format!("{}", self.fisher.n_loc),
            format!("{:e}", self.condition),
        ];
        vals.extend(self.estimate().iter().map(|x| format!("{x:e}")));
        vals.extend(self.standardized.iter().map(|x| format!("{x:e}")));
        vals.join(",")
    }
}

impl fmt::Display for EstimateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(" ");
        let d = self.rho.len();
        let mut rir = Vec::new();
        for i in 0..d {
            for j in 0..d {
                rir.push(self.rho[i] * self.fisher.matrix[(i, j)] * self.rho[j]);
            }
        }
        let sig: Vec<f64> = self.sigma_theory.transpose().iter().copied().collect();
        writeln!(f, "delta = {}", self.fisher.delta)?;
        writeln!(f, "locations = {}", self.fisher.n_loc)?;
        writeln!(f, "n_steps = {}", self.fisher.grid.n_steps)?;
        writeln!(f, "horizon = {}", self.fisher.grid.horizon)?;
        writeln!(f, "theta_hat = {}", list(&self.theta_hat))?;
        writeln!(f, "eta_hat = {}", list(&self.eta_hat))?;
        writeln!(f, "truth = {}", list(&self.truth))?;
        if let Some(d) = &self.decomposition {
            writeln!(f, "decomposition = {}", list(d))?;
        }
        writeln!(f, "condition = {:.3e}", self.condition)?;
        writeln!(f, "rho = {}", list(&self.rho))?;
        writeln!(f, "rho_I_rho = {}", list(&rir))?;
        writeln!(f, "sigma_theory = {}", list(&sig))?;
        writeln!(f, "standardized = {}", list(&self.standardized))
    }
}

/// Augmented MLE from measurement sets; `spec` supplies the exponents and the truth.
pub fn mle(ms: &[MeasurementSet], spec: &ModelSpec, profile: &KernelProfile) -> Result<EstimateReport> {
    let acc = accumulate(ms)?;
    if acc.dim() != spec.p() + spec.q() {
        return Err(Error::Dimension(format!(
            "measurements have {} components, model has {} parameters",
            acc.dim(),
            spec.p() + spec.q()
        )));
    }
    let grid = ms[0].grid;
    let delta = ms[0].delta;
    let rho = scaling_matrix(spec, delta, ms.len());
    let truth = spec.parameters();
    let with_noise = ms.iter().all(|m| m.noise.is_some());
    let sol = solve(&acc, &rho, with_noise.then_some(truth.as_slice()))?;
    let sig = asymptotic_sigma(spec, profile, grid.horizon)?;
    let standardized = sol
        .estimate
        .iter()
        .zip(&truth)
        .zip(&rho)
        .map(|((e, t), r)| (e - t) / r)
        .collect();
    let p = spec.p();
    Ok(EstimateReport {
        theta_hat: sol.estimate[..p].to_vec(),
        eta_hat: sol.estimate[p..].to_vec(),
        fisher: FisherMatrix {
            matrix: acc.fisher(),
            delta,
            n_loc: ms.len(),
            grid,
        },
        rho,
        sigma_theory: sig.sigma,
        clt_covariance: sig.clt_covariance,
        condition: sol.condition,
        standardized,
        decomposition: sol.decomposition,
        truth,
    })
}
