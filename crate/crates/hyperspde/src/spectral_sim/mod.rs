//! Mode-by-mode simulation in the Dirichlet sine basis.
//!
//! Each mode follows `du = v dt`, `dv = (a u + b v) dt + dW`. The exact stepper
//! samples the Gaussian transition; the Euler stepper is semi-implicit in the
//! drift with explicit noise.

pub mod io;
mod mn;

pub use mn::{
    ell_epsilon, euler_cov, joint_noise_cov, mn_scalar, product_integral, transition,
    Fundamental, Integral, MNValues, NoiseFactor, Transition, Window,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Default truncation level.
pub const DEFAULT_K_MAX: usize = 512;
/// Default number of time steps on `[0, T]`.
pub const DEFAULT_N_STEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<TimeGrid> {
        if !(horizon > 0.0 && horizon.is_finite()) || n_steps == 0 {
            return Err(Error::InvalidInput(format!(
                "time grid needs T > 0 and n_steps >= 1 (got {horizon}, {n_steps})"
            )));
        }
        Ok(TimeGrid { horizon, n_steps })
    }

    pub fn h(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// `t_n`, with `t_{n_steps} = T` exactly.
    pub fn t(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.horizon
        } else {
            self.horizon * n as f64 / self.n_steps as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Exact,
    Euler,
}

impl std::str::FromStr for Integrator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Integrator::Exact),
            "euler" => Ok(Integrator::Euler),
            _ => Err(Error::Config(format!("unknown integrator '{s}'"))),
        }
    }
}

impl std::fmt::Display for Integrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Integrator::Exact => "exact",
            Integrator::Euler => "euler",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRecord {
    pub master: u64,
    pub replicate: u64,
    pub integrator: Integrator,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Multiplies every noise increment; 0 gives the deterministic flow.
    pub noise_scale: f64,
    /// Keep the per-mode Brownian increments `dW_k` of each step.
    pub record_increments: bool,
    pub replicate: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            noise_scale: 1.0,
            record_increments: false,
            replicate: 0,
        }
    }
}

/// Independent stream for `(replicate, mode, lane)`.
pub fn mode_rng(master: u64, replicate: u64, mode: usize, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((replicate << 32) | ((mode as u64) << 2) | lane);
    rng
}

enum Scheme {
    Exact {
        phi: Vec<[f64; 4]>,
        factor: Vec<[f64; 6]>,
    },
    Euler {
        h: f64,
        sqrt_h: f64,
        a: Vec<f64>,
        inv_det: Vec<f64>,
    },
}

/// Stepwise simulator holding the current state of modes `1..=k_max`.
pub struct Simulator {
    scheme: Scheme,
    rng: Vec<ChaCha8Rng>,
    rng_inc: Vec<ChaCha8Rng>,
    noise_scale: f64,
    record: bool,
    u: Vec<f64>,
    v: Vec<f64>,
    dw: Vec<f64>,
    grid: TimeGrid,
    step: usize,
    seed: SeedRecord,
    fallbacks: usize,
}

impl Simulator {
    pub fn new(
        spec: &ModelSpec,
        k_max: usize,
        grid: TimeGrid,
        integrator: Integrator,
        seed: u64,
        opts: SimOptions,
    ) -> Result<Simulator> {
        spec.check_structure()?;
        if k_max == 0 {
            return Err(Error::InvalidInput("K_max must be >= 1".into()));
        }
        for (name, init) in [("initial_u", &spec.initial_u), ("initial_v", &spec.initial_v)] {
            if init.iter().skip(k_max).any(|&c| c != 0.0) {
                return Err(Error::Dimension(format!(
                    "{name} has nonzero coefficients beyond K_max = {k_max}"
                )));
            }
        }
        let h = grid.h();
        let mut fallbacks = 0;
        let scheme = match integrator {
            Integrator::Exact => {
                let mut phi = Vec::with_capacity(k_max);
                let mut factor = Vec::with_capacity(k_max);
                for k in 1..=k_max {
                    let sym = spec.mode_symbol(k);
                    let (cov, fb) = joint_noise_cov(h, &sym)?;
                    let tr = transition(h, &sym)?;
                    fallbacks += fb as usize;
                    let l = NoiseFactor::from_cov(&cov)?.l;
                    phi.push([tr.phi[0][0], tr.phi[0][1], tr.phi[1][0], tr.phi[1][1]]);
                    factor.push([l[0][0], l[1][0], l[1][1], l[2][0], l[2][1], l[2][2]]);
                }
                Scheme::Exact { phi, factor }
            }
            Integrator::Euler => {
                let mut a = Vec::with_capacity(k_max);
                let mut inv_det = Vec::with_capacity(k_max);
                for k in 1..=k_max {
                    let sym = spec.mode_symbol(k);
                    let det = 1.0 - h * sym.b - h * h * sym.a;
                    if det.abs() < 1e-12 * (1.0 + (h * sym.b).abs() + (h * h * sym.a).abs()) {
                        return Err(Error::SingularUpdate {
                            mode: k,
                            det,
                            h_max: euler_step_bound(sym.a, sym.b),
                        });
                    }
                    a.push(sym.a);
                    inv_det.push(1.0 / det);
                }
                Scheme::Euler {
                    h,
                    sqrt_h: h.sqrt(),
                    a,
                    inv_det,
                }
            }
        };
        let rng = (1..=k_max)
            .map(|k| mode_rng(seed, opts.replicate, k, 0))
            .collect();
        let rng_inc = if opts.record_increments && integrator == Integrator::Exact {
            (1..=k_max)
                .map(|k| mode_rng(seed, opts.replicate, k, 1))
                .collect()
        } else {
            Vec::new()
        };
        let pad = |c: &Vec<f64>| (0..k_max).map(|i| c.get(i).copied().unwrap_or(0.0)).collect();
        Ok(Simulator {
            scheme,
            rng,
            rng_inc,
            noise_scale: opts.noise_scale,
            record: opts.record_increments,
            u: pad(&spec.initial_u),
            v: pad(&spec.initial_v),
            dw: vec![0.0; if opts.record_increments { k_max } else { 0 }],
            grid,
            step: 0,
            seed: SeedRecord {
                master: seed,
                replicate: opts.replicate,
                integrator,
            },
            fallbacks,
        })
    }

    pub fn k_max(&self) -> usize {
        self.u.len()
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// Index of the current time point.
    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// Brownian increments of the last step (empty unless recording).
    pub fn increments(&self) -> &[f64] {
        &self.dw
    }

    pub fn seed(&self) -> SeedRecord {
        self.seed
    }

    /// Modes whose transition integrals fell back to quadrature.
    pub fn quadrature_fallbacks(&self) -> usize {
        self.fallbacks
    }

    /// Advances every mode by one step.
    pub fn advance(&mut self) {
        let s = self.noise_scale;
        let noisy = s != 0.0;
        match &self.scheme {
            Scheme::Exact { phi, factor } => {
                for k in 0..self.u.len() {
                    let p = &phi[k];
                    let (u, v) = (self.u[k], self.v[k]);
                    let mut nu = p[0] * u + p[1] * v;
                    let mut nv = p[2] * u + p[3] * v;
                    if noisy {
                        let f = &factor[k];
                        let rng = &mut self.rng[k];
                        let z1: f64 = rng.sample(StandardNormal);
                        let z2: f64 = rng.sample(StandardNormal);
                        nu += s * f[0] * z1;
                        nv += s * (f[1] * z1 + f[2] * z2);
                        if self.record {
                            let z3: f64 = self.rng_inc[k].sample(StandardNormal);
                            self.dw[k] = s * (f[3] * z1 + f[4] * z2 + f[5] * z3);
                        }
                    }
                    self.u[k] = nu;
                    self.v[k] = nv;
                }
            }
            Scheme::Euler {
                h,
                sqrt_h,
                a,
                inv_det,
            } => {
                for k in 0..self.u.len() {
                    let dw = if noisy {
                        let z: f64 = self.rng[k].sample(StandardNormal);
                        s * sqrt_h * z
                    } else {
                        0.0
                    };
                    let nv = (self.v[k] + h * a[k] * self.u[k] + dw) * inv_det[k];
                    self.u[k] += h * nv;
                    self.v[k] = nv;
                    if self.record {
                        self.dw[k] = dw;
                    }
                }
            }
        }
        self.step += 1;
    }
}

/// Largest step keeping `1 - h b - h^2 a` away from zero.
fn euler_step_bound(a: f64, b: f64) -> f64 {
    // positive root of a h^2 + b h - 1 = 0, if any
    if a == 0.0 {
        return if b > 0.0 { 0.5 / b } else { f64::INFINITY };
    }
    let disc = b * b + 4.0 * a;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let roots = [(-b + disc.sqrt()) / (2.0 * a), (-b - disc.sqrt()) / (2.0 * a)];
    0.5 * roots
        .into_iter()
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// Truncated sine-basis trajectories on a uniform grid, stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePaths {
    pub k_max: usize,
    pub grid: TimeGrid,
    /// `u[n * k_max + (k - 1)] = u_k(t_n)`.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `dw[n * k_max + (k - 1)]` is the increment of `W_k` on `[t_n, t_{n+1}]`.
    pub increments: Option<Vec<f64>>,
    pub seed: SeedRecord,
}

impl ModePaths {
    pub fn u_at(&self, n: usize) -> &[f64] {
        &self.u[n * self.k_max..(n + 1) * self.k_max]
    }

    pub fn v_at(&self, n: usize) -> &[f64] {
        &self.v[n * self.k_max..(n + 1) * self.k_max]
    }

    pub fn u_mode(&self, k: usize, n: usize) -> f64 {
        self.u[n * self.k_max + k - 1]
    }

    pub fn v_mode(&self, k: usize, n: usize) -> f64 {
        self.v[n * self.k_max + k - 1]
    }

    pub fn increments_at(&self, n: usize) -> Option<&[f64]> {
        self.increments
            .as_ref()
            .map(|d| &d[n * self.k_max..(n + 1) * self.k_max])
    }

    /// Multiplies every stored value by `factor`.
    pub fn scaled(&self, factor: f64) -> ModePaths {
        let mut out = self.clone();
        out.u.iter_mut().chain(out.v.iter_mut()).for_each(|x| *x *= factor);
        if let Some(d) = out.increments.as_mut() {
            d.iter_mut().for_each(|x| *x *= factor);
        }
        out
    }
}

/// Runs a simulator over the whole grid and stores every time point.
pub fn simulate(
    spec: &ModelSpec,
    k_max: usize,
    grid: TimeGrid,
    integrator: Integrator,
    seed: u64,
    opts: SimOptions,
) -> Result<ModePaths> {
    let mut sim = Simulator::new(spec, k_max, grid, integrator, seed, opts)?;
    let n = grid.n_steps;
    let mut u = Vec::with_capacity((n + 1) * k_max);
    let mut v = Vec::with_capacity((n + 1) * k_max);
    let mut dw = opts.record_increments.then(|| Vec::with_capacity(n * k_max));
    u.extend_from_slice(sim.u());
    v.extend_from_slice(sim.v());
    for _ in 0..n {
        sim.advance();
        u.extend_from_slice(sim.u());
        v.extend_from_slice(sim.v());
        if let Some(d) = dw.as_mut() {
            d.extend_from_slice(sim.increments());
        }
    }
    let paths = ModePaths {
        k_max,
        grid,
        u,
        v,
        increments: dw,
        seed: sim.seed(),
    };
    if paths.u.iter().chain(&paths.v).any(|x| !x.is_finite()) {
        return Err(Error::Range("simulated path is not finite".into()));
    }
    Ok(paths)
}

/// Exact Gaussian transitions per mode.
pub fn simulate_exact(spec: &ModelSpec, k_max: usize, grid: TimeGrid, seed: u64) -> Result<ModePaths> {
    simulate(spec, k_max, grid, Integrator::Exact, seed, SimOptions::default())
}

/// Semi-implicit Euler-Maruyama per mode.
pub fn simulate_euler(spec: &ModelSpec, k_max: usize, grid: TimeGrid, seed: u64) -> Result<ModePaths> {
    simulate(spec, k_max, grid, Integrator::Euler, seed, SimOptions::default())
}
