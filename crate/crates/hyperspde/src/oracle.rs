//! Exact covariances of local measurements and their small-`delta` limits.
//!
//! Everything here is a mode sum over the sine coefficients of the kernel,
//! with per-mode second moments from the closed-form transition law.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimator::{asymptotic_sigma, scaling_matrix};
use crate::kernels::{sobolev_norm, KernelProfile, KernelTable, SineCoeffs};
use crate::model::{ModeSymbol, ModelSpec};
use crate::spectral_sim::{mn_scalar, product_integral, transition, Fundamental, TimeGrid, Window};

/// Frequency `k pi delta / L` up to which oracle mode sums run.
pub const ORACLE_XI_MAX: f64 = 130.0;

/// Mode cutoff used by the oracle at resolution `delta`.
pub fn oracle_k_max(delta: f64, domain_length: f64) -> usize {
    ((ORACLE_XI_MAX * domain_length / (PI * delta)).ceil() as usize).max(64)
}

/// One entry of the observation vector, or the driving path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    /// `u^{D_i}`, zero-based elastic index.
    U(usize),
    /// `v^{D_j}`, zero-based damping index.
    V(usize),
    /// `v_{delta,x}`.
    Drive,
}

impl Component {
    /// (exponent of `lambda`, state index 0 = u / 1 = v).
    fn weight(self, spec: &ModelSpec) -> Result<(f64, usize)> {
        match self {
            Component::U(i) => spec
                .elastic
                .get(i)
                .map(|t| (t.exponent, 0))
                .ok_or_else(|| Error::Dimension(format!("no elastic term {i}"))),
            Component::V(j) => spec
                .damping
                .get(j)
                .map(|t| (t.exponent, 1))
                .ok_or_else(|| Error::Dimension(format!("no damping term {j}"))),
            Component::Drive => Ok((0.0, 1)),
        }
    }

    fn label(self) -> String {
        match self {
            Component::U(i) => format!("u{}", i + 1),
            Component::V(j) => format!("v{}", j + 1),
            Component::Drive => "v".into(),
        }
    }
}

/// `Cov(a(t), b(s))` at the location and resolution of the coefficient table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovRequest {
    pub a: Component,
    pub b: Component,
    pub t: f64,
    pub s: f64,
}

/// `Cov(X_t[i], X_s[j])` for one mode started at zero.
fn mode_cov(sym: &ModeSymbol, i: usize, j: usize, t: f64, s: f64) -> Result<f64> {
    if t <= 0.0 || s <= 0.0 {
        return Ok(0.0);
    }
    // Cov(X(t), X(s)) = Phi(t - s) Q(s) for t >= s
    let (late, early, i, j) = if t >= s { (t, s, i, j) } else { (s, t, j, i) };
    let q = transition(early, sym)?.q;
    let c = if late > early {
        let phi = transition(late - early, sym)?.phi;
        phi[i][0] * q[0][j] + phi[i][1] * q[1][j]
    } else {
        q[i][j]
    };
    Ok(c)
}

fn check_zero_start(spec: &ModelSpec) -> Result<()> {
    if spec.has_zero_initial() {
        Ok(())
    } else {
        Err(Error::NonzeroInitialCondition)
    }
}

pub fn analytic_covariance(spec: &ModelSpec, coeffs: &SineCoeffs, req: CovRequest) -> Result<f64> {
    check_zero_start(spec)?;
    if !(req.t >= 0.0 && req.s >= 0.0 && req.t <= spec.horizon && req.s <= spec.horizon) {
        return Err(Error::Range(format!(
            "times ({}, {}) outside [0, {}]",
            req.t, req.s, spec.horizon
        )));
    }
    let (ea, ia) = req.a.weight(spec)?;
    let (eb, ib) = req.b.weight(spec)?;
    let mut sum = 0.0;
    for (k0, &c) in coeffs.c.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let k = k0 + 1;
        let sym = spec.mode_symbol(k);
        let w = c * c * spec.lambda(k).powf(ea + eb);
        sum += w * mode_cov(&sym, ia, ib, req.t, req.s)?;
    }
    Ok(sum)
}

fn fundamental(state: usize) -> Fundamental {
    if state == 0 {
        Fundamental::N
    } else {
        Fundamental::NPrime
    }
}

/// `int_0^T Cov(a(t), b(t)) dt`.
pub fn integrated_covariance(
    spec: &ModelSpec,
    coeffs: &SineCoeffs,
    a: Component,
    b: Component,
    horizon: f64,
) -> Result<f64> {
    check_zero_start(spec)?;
    let (ea, ia) = a.weight(spec)?;
    let (eb, ib) = b.weight(spec)?;
    let mut sum = 0.0;
    for (k0, &c) in coeffs.c.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let k = k0 + 1;
        let sym = spec.mode_symbol(k);
        let w = c * c * spec.lambda(k).powf(ea + eb);
        let v = product_integral(&sym, fundamental(ia), Some(fundamental(ib)), Window::Ramp(horizon))?;
        sum += w * v.value;
    }
    Ok(sum)
}

/// `E sum_n (v_{delta,x}(t_{n+1}) - v_{delta,x}(t_n))^2` on `grid`, by the exact per-mode recursion.
pub fn expected_quadratic_variation(spec: &ModelSpec, coeffs: &SineCoeffs, grid: TimeGrid) -> Result<f64> {
    check_zero_start(spec)?;
    let mut sum = 0.0;
    for (k0, &c) in coeffs.c.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let tr = transition(grid.h(), &spec.mode_symbol(k0 + 1))?;
        let (phi, qh) = (tr.phi, tr.q);
        let mut q = [[0.0; 2]; 2];
        let mut acc = 0.0;
        for _ in 0..grid.n_steps {
            // (Phi Q)_{vv} and Phi Q Phi^T + Q_h
            let pq = [
                [phi[0][0] * q[0][0] + phi[0][1] * q[1][0], phi[0][0] * q[0][1] + phi[0][1] * q[1][1]],
                [phi[1][0] * q[0][0] + phi[1][1] * q[1][0], phi[1][0] * q[0][1] + phi[1][1] * q[1][1]],
            ];
            let mut next = qh;
            for i in 0..2 {
                for j in 0..2 {
                    next[i][j] += pq[i][0] * phi[j][0] + pq[i][1] * phi[j][1];
                }
            }
            acc += next[1][1] + q[1][1] - 2.0 * pq[1][1];
            q = next;
        }
        sum += c * c * acc;
    }
    Ok(sum)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub delta: f64,
    pub value: f64,
    pub limit: f64,
    pub rel_error: f64,
}

/// Rescaled values against a limit along a decreasing `delta` sequence.
///
/// For a vanishing limit `scale` is the reference magnitude the error is
/// measured against; otherwise it equals `|limit|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub name: String,
    pub scale: f64,
    pub vanishing: bool,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    fn new(name: String, limit: f64, scale: f64) -> ConvergenceTable {
        ConvergenceTable {
            name,
            scale,
            vanishing: limit == 0.0,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, delta: f64, value: f64, limit: f64) {
        self.rows.push(ConvergenceRow {
            delta,
            value,
            limit,
            rel_error: (value - limit).abs() / self.scale,
        });
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].rel_error < w[0].rel_error)
    }

    pub fn final_error(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.rel_error)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,value,limit,rel_error\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:e},{:e},{:e}\n", r.delta, r.value, r.limit, r.rel_error));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() || deltas.iter().any(|d| !(*d > 0.0)) || deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput(format!(
            "delta list must be positive and strictly decreasing, got {deltas:?}"
        )));
    }
    Ok(())
}

fn centered_coeffs(spec: &ModelSpec, profile: &KernelProfile, delta: f64) -> Result<SineCoeffs> {
    let l = spec.domain_length;
    KernelTable::new(profile, delta, oracle_k_max(delta, l), l)?.coeffs(0.5 * l)
}

/// Rescaled `int_0^T Cov` of every pair of observation components against the
/// corresponding entry of the limit matrix; cross u-v entries have limit 0.
pub fn fisher_limit_check(
    spec: &ModelSpec,
    profile: &KernelProfile,
    deltas: &[f64],
) -> Result<Vec<ConvergenceTable>> {
    check_deltas(deltas)?;
    spec.check_structure()?;
    let t = spec.horizon;
    let sigma = asymptotic_sigma(spec, profile, t)?.sigma;
    let (p, q) = (spec.p(), spec.q());
    let comps: Vec<Component> = (0..p).map(Component::U).chain((0..q).map(Component::V)).collect();
    let mut tables = Vec::new();
    for i in 0..p + q {
        for j in i..p + q {
            let cross = (i < p) != (j < p);
            let limit = if cross { 0.0 } else { sigma[(i, j)] };
            let scale = if cross || i != j {
                (sigma[(i, i)] * sigma[(j, j)]).sqrt()
            } else {
                limit.abs()
            };
            let name = format!("fisher_{}_{}", comps[i].label(), comps[j].label());
            tables.push(ConvergenceTable::new(name, limit, scale));
        }
    }
    for &delta in deltas {
        let coeffs = centered_coeffs(spec, profile, delta)?;
        // N^{1/2} rho with N = 1
        let s = scaling_matrix(spec, delta, 1);
        let mut idx = 0;
        for i in 0..p + q {
            for j in i..p + q {
                let v = integrated_covariance(spec, &coeffs, comps[i], comps[j], t)?;
                let cross = (i < p) != (j < p);
                let limit = if cross { 0.0 } else { sigma[(i, j)] };
                tables[idx].push(delta, s[i] * s[j] * v, limit);
                idx += 1;
            }
        }
    }
    Ok(tables)
}

/// Limits of weighted mode sums of products of `m`, `n`, `n'` for a test
/// function given by `profile` (centred, resolution `delta`), at time `t`.
///
/// Damped models (`beta_1 > 0`) use the time-integrated squares on `[0, t]`;
/// `beta_1 = 0` uses the pointwise products at `t`.
pub fn scaling_limit_check(
    spec: &ModelSpec,
    profile: &KernelProfile,
    deltas: &[f64],
    t: f64,
) -> Result<Vec<ConvergenceTable>> {
    check_deltas(deltas)?;
    spec.check_structure()?;
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("time must be positive, got {t}")));
    }
    let (a1, th1, b1, et1) = (spec.alpha1(), spec.theta1(), spec.beta1(), spec.eta1());
    let damped = spec.q() > 0 && b1 > 0.0;
    let z2 = profile.norm_sq();
    // (name, scaling exponent of delta, product, limit)
    type Product = fn(&ModeSymbol, f64) -> Result<f64>;
    let cases: Vec<(&str, f64, Product, f64)> = if damped {
        let l_nn = sobolev_norm(profile, -(a1 + b1) / 2.0)?.value / (2.0 * th1 * et1);
        let l_pp = -sobolev_norm(profile, -b1 / 2.0)?.value / (2.0 * et1);
        vec![
            ("int_nn", -2.0 * a1 - 2.0 * b1, |s, t| window(s, Fundamental::N, Fundamental::N, t), l_nn),
            ("int_npnp", -2.0 * b1, |s, t| window(s, Fundamental::NPrime, Fundamental::NPrime, t), l_pp),
            ("int_nnp", -2.0 * b1 - a1, |s, t| window(s, Fundamental::N, Fundamental::NPrime, t), 0.0),
        ]
    } else {
        let e = (et1 * t).exp();
        let l_nn = -e / (2.0 * th1) * sobolev_norm(profile, -a1 / 2.0)?.value;
        let l_mm = e / 2.0 * z2;
        vec![
            ("nn", -2.0 * a1, |s, t| Ok(mn_scalar(t, s)?.n.powi(2)), l_nn),
            ("mm", 0.0, |s, t| Ok(mn_scalar(t, s)?.m.powi(2)), l_mm),
            ("nm", -a1, |s, t| {
                let v = mn_scalar(t, s)?;
                Ok(v.n * v.m)
            }, 0.0),
        ]
    };
    let cross_scale = (cases[0].3 * cases[1].3).abs().sqrt();
    let mut tables: Vec<ConvergenceTable> = cases
        .iter()
        .map(|(name, _, _, limit)| {
            let scale = if *limit == 0.0 { cross_scale } else { limit.abs() };
            ConvergenceTable::new(name.to_string(), *limit, scale)
        })
        .collect();
    for &delta in deltas {
        let coeffs = centered_coeffs(spec, profile, delta)?;
        for (table, (_, expo, f, limit)) in tables.iter_mut().zip(&cases) {
            let mut sum = 0.0;
            for (k0, &c) in coeffs.c.iter().enumerate() {
                if c != 0.0 {
                    sum += c * c * f(&spec.mode_symbol(k0 + 1), t)?;
                }
            }
            table.push(delta, delta.powf(*expo) * sum, *limit);
        }
    }
    Ok(tables)
}

fn window(sym: &ModeSymbol, f: Fundamental, g: Fundamental, t: f64) -> Result<f64> {
    Ok(product_integral(sym, f, Some(g), Window::Plain(t))?.value)
}
