//! Monte-Carlo studies of the estimator over a sequence of resolutions.

mod config;
mod report;

pub use config::StudyFile;
pub use report::{emit_report, fit_rate, svg_plot, RateFit, ReportFiles};

use nalgebra::{DMatrix, DMatrixView};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{asymptotic_sigma, scaling_matrix, solve, Accumulator};
use crate::kernels::KernelProfile;
use crate::measurements::{make_placement, Placement, Projector};
use crate::model::ModelSpec;
use crate::spectral_sim::{Integrator, SimOptions, Simulator, TimeGrid, DEFAULT_K_MAX, DEFAULT_N_STEPS};

/// Default proportionality constant in `N = ceil(c / delta)`.
pub const DEFAULT_N_CONSTANT: f64 = 0.35;
/// Failure share above which a cell aborts the study.
pub const MAX_FAILURE_SHARE: f64 = 0.05;

/// Number of measurement locations at a given resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NRule {
    Fixed(usize),
    /// `N = ceil(c / delta)`.
    Proportional(f64),
}

impl NRule {
    pub fn count(self, delta: f64) -> usize {
        match self {
            NRule::Fixed(n) => n,
            NRule::Proportional(c) => (c / delta - 1e-9).ceil().max(1.0) as usize,
        }
    }

    /// Power of `delta` in `N` (`N ~ delta^{-1}` contributes `1/2` to the RMSE slope).
    fn slope_shift(self) -> f64 {
        match self {
            NRule::Fixed(_) => 0.0,
            NRule::Proportional(_) => 0.5,
        }
    }
}

/// Which estimate a study records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorPath {
    /// `I^{-1} sum Y dv` from the observed paths.
    Observed,
    /// `theta + I^{-1} sum Y dB` from the recorded noise (discrete martingale part only).
    Decomposition,
}

impl std::str::FromStr for EstimatorPath {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "observed" => Ok(EstimatorPath::Observed),
            "decomposition" => Ok(EstimatorPath::Decomposition),
            _ => Err(Error::Config(format!("unknown estimator path '{s}'"))),
        }
    }
}

impl std::fmt::Display for EstimatorPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorPath::Observed => "observed",
            EstimatorPath::Decomposition => "decomposition",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub name: String,
    pub spec: ModelSpec,
    pub profile: KernelProfile,
    pub deltas: Vec<f64>,
    pub n_rule: NRule,
    pub replicates: usize,
    pub n_steps: usize,
    /// `None` picks `max(DEFAULT_K_MAX, 8 ceil(1 / delta_min))`.
    pub k_max: Option<usize>,
    /// Margin of the location set as a fraction of `L`.
    pub margin: f64,
    pub seed: u64,
    pub integrator: Integrator,
    pub estimator: EstimatorPath,
}

impl StudyConfig {
    pub fn new(name: &str, spec: ModelSpec, deltas: Vec<f64>) -> StudyConfig {
        StudyConfig {
            name: name.to_string(),
            spec,
            profile: KernelProfile::bump(),
            deltas,
            n_rule: NRule::Proportional(DEFAULT_N_CONSTANT),
            replicates: 100,
            n_steps: DEFAULT_N_STEPS,
            k_max: None,
            margin: crate::measurements::DEFAULT_MARGIN_FRACTION,
            seed: 0,
            integrator: Integrator::Exact,
            estimator: EstimatorPath::Observed,
        }
    }

    pub fn k_max(&self) -> usize {
        self.k_max.unwrap_or_else(|| {
            let dmin = self.deltas.iter().copied().fold(f64::INFINITY, f64::min);
            DEFAULT_K_MAX.max(8 * (self.spec.domain_length / dmin).ceil() as usize)
        })
    }

    pub fn placement(&self, delta: f64) -> Result<Placement> {
        let l = self.spec.domain_length;
        make_placement(self.n_rule.count(delta), delta, l, self.margin * l)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.check_structure()?;
        if self.replicates < 2 {
            return Err(Error::Config("a study needs at least 2 replicates".into()));
        }
        if self.deltas.is_empty() {
            return Err(Error::Config("empty delta list".into()));
        }
        if self.deltas.windows(2).any(|w| w[1] >= w[0]) || self.deltas.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Config(format!("delta list must be positive and decreasing: {:?}", self.deltas)));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be positive".into()));
        }
        for &d in &self.deltas {
            self.placement(d)?;
        }
        Ok(())
    }

    /// Theoretical RMSE slope in `delta` per parameter.
    pub fn theoretical_slopes(&self) -> Vec<f64> {
        let (a1, b1) = (self.spec.alpha1(), self.spec.beta1());
        let shift = self.n_rule.slope_shift();
        self.spec
            .elastic
            .iter()
            .map(|t| 2.0 * t.exponent - a1 - b1 + shift)
            .chain(self.spec.damping.iter().map(|t| 2.0 * t.exponent - b1 + shift))
            .collect()
    }

    pub fn parameter_names(&self) -> Vec<String> {
        (1..=self.spec.p())
            .map(|i| format!("theta_{i}"))
            .chain((1..=self.spec.q()).map(|j| format!("eta_{j}")))
            .collect()
    }
}

/// One successful replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub replicate: u64,
    pub estimate: Vec<f64>,
    /// `rho^{-1} (estimate - truth)`.
    pub standardized: Vec<f64>,
    /// `rho I rho`, row-major.
    pub rho_fisher_rho: Vec<f64>,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub replicate: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub delta: f64,
    pub n_loc: usize,
    pub rho: Vec<f64>,
    pub outcomes: Vec<ReplicateOutcome>,
    pub failures: Vec<Failure>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

impl Cell {
    pub fn count(&self) -> usize {
        self.outcomes.len()
    }

    pub fn rmse(&self, i: usize, truth: &[f64]) -> f64 {
        mean(self.outcomes.iter().map(|o| (o.estimate[i] - truth[i]).powi(2))).sqrt()
    }

    pub fn bias(&self, i: usize, truth: &[f64]) -> f64 {
        mean(self.outcomes.iter().map(|o| o.estimate[i] - truth[i]))
    }

    /// Delta-method standard error of the RMSE.
    pub fn rmse_se(&self, i: usize, truth: &[f64]) -> f64 {
        let sq: Vec<f64> = self.outcomes.iter().map(|o| (o.estimate[i] - truth[i]).powi(2)).collect();
        let m = mean(sq.iter().copied());
        let n = sq.len() as f64;
        let var = sq.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt() / (2.0 * m.sqrt())
    }

    pub fn z_mean(&self, i: usize) -> f64 {
        mean(self.outcomes.iter().map(|o| o.standardized[i]))
    }

    /// Unbiased sample covariance of the standardized errors.
    pub fn z_cov(&self, i: usize, j: usize) -> f64 {
        let (mi, mj) = (self.z_mean(i), self.z_mean(j));
        let n = self.count() as f64;
        self.outcomes
            .iter()
            .map(|o| (o.standardized[i] - mi) * (o.standardized[j] - mj))
            .sum::<f64>()
            / (n - 1.0)
    }

    /// Monte-Carlo mean of `rho I rho`.
    pub fn mean_rho_fisher_rho(&self) -> DMatrix<f64> {
        let d = self.rho.len();
        DMatrix::from_fn(d, d, |i, j| mean(self.outcomes.iter().map(|o| o.rho_fisher_rho[i * d + j])))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub k_max: usize,
    pub truth: Vec<f64>,
    pub sigma: DMatrix<f64>,
    pub clt_covariance: DMatrix<f64>,
    pub cells: Vec<Cell>,
}

impl StudyResult {
    pub fn rmse_series(&self, i: usize) -> Vec<f64> {
        self.cells.iter().map(|c| c.rmse(i, &self.truth)).collect()
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.delta).collect()
    }

    /// Fitted log-log RMSE slope per parameter (needs >= 3 cells).
    pub fn slopes(&self) -> Result<Vec<RateFit>> {
        (0..self.truth.len())
            .map(|i| fit_rate(&self.deltas(), &self.rmse_series(i)))
            .collect()
    }
}

struct CellContext<'a> {
    config: &'a StudyConfig,
    grid: TimeGrid,
    k_max: usize,
    proj: Projector,
    rho: Vec<f64>,
    truth: &'a [f64],
}

/// Steps simulated between projections.
const BLOCK: usize = 256;

fn run_replicate(ctx: &CellContext<'_>, replicate: u64) -> Result<ReplicateOutcome> {
    let cfg = ctx.config;
    let record = cfg.estimator == EstimatorPath::Decomposition;
    let opts = SimOptions {
        noise_scale: 1.0,
        record_increments: record,
        replicate,
    };
    let mut sim = Simulator::new(&cfg.spec, ctx.k_max, ctx.grid, cfg.integrator, cfg.seed, opts)?;
    let k = ctx.k_max;
    let (p, q, n_loc) = (ctx.proj.p, ctx.proj.q, ctx.proj.n_loc);
    let dim = p + q;
    let mut acc = Accumulator::new(dim, ctx.grid.h());
    let mut ubuf = vec![0.0; k * (BLOCK + 1)];
    let mut vbuf = vec![0.0; k * (BLOCK + 1)];
    let mut dwbuf = vec![0.0; if record { k * BLOCK } else { 0 }];
    let mut y = vec![0.0; dim];
    let mut done = 0;
    while done < ctx.grid.n_steps {
        let b = BLOCK.min(ctx.grid.n_steps - done);
        ubuf[..k].copy_from_slice(sim.u());
        vbuf[..k].copy_from_slice(sim.v());
        for s in 0..b {
            sim.advance();
            ubuf[(s + 1) * k..(s + 2) * k].copy_from_slice(sim.u());
            vbuf[(s + 1) * k..(s + 2) * k].copy_from_slice(sim.v());
            if record {
                dwbuf[s * k..(s + 1) * k].copy_from_slice(sim.increments());
            }
        }
        let yu = &ctx.proj.wu * DMatrixView::from_slice(&ubuf[..k * (b + 1)], k, b + 1);
        let yv = &ctx.proj.wv * DMatrixView::from_slice(&vbuf[..k * (b + 1)], k, b + 1);
        let db = record.then(|| &ctx.proj.wc * DMatrixView::from_slice(&dwbuf[..k * b], k, b));
        for l in 0..n_loc {
            let vrow = l * (q + 1) + q;
            for s in 0..b {
                for i in 0..p {
                    y[i] = yu[(l * p + i, s)];
                }
                for j in 0..q {
                    y[p + j] = yv[(l * (q + 1) + j, s)];
                }
                let dv = yv[(vrow, s + 1)] - yv[(vrow, s)];
                let dbv = db.as_ref().map_or(0.0, |m| m[(l, s)]);
                acc.push(&y, dv, dbv);
            }
        }
        done += b;
    }
    if sim.u().iter().chain(sim.v()).any(|x| !x.is_finite()) {
        return Err(Error::Range("simulated path is not finite".into()));
    }
    let sol = solve(&acc, &ctx.rho, record.then_some(ctx.truth))?;
    let estimate = match cfg.estimator {
        EstimatorPath::Observed => sol.estimate,
        EstimatorPath::Decomposition => sol.decomposition.expect("recorded noise"),
    };
    let standardized = estimate
        .iter()
        .zip(ctx.truth)
        .zip(&ctx.rho)
        .map(|((e, t), r)| (e - t) / r)
        .collect();
    let fisher = acc.fisher();
    let mut rir = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            rir.push(ctx.rho[i] * fisher[(i, j)] * ctx.rho[j]);
        }
    }
    Ok(ReplicateOutcome {
        replicate,
        estimate,
        standardized,
        rho_fisher_rho: rir,
        condition: sol.condition,
    })
}

/// Runs every `(delta, replicate)` pair; output is independent of the thread count.
pub fn run_mc_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let spec = &config.spec;
    let grid = TimeGrid::new(spec.horizon, config.n_steps)?;
    let k_max = config.k_max();
    let truth = spec.parameters();
    let asym = asymptotic_sigma(spec, &config.profile, spec.horizon)?;
    let mut cells = Vec::with_capacity(config.deltas.len());
    for &delta in &config.deltas {
        let placement = config.placement(delta)?;
        let proj = Projector::new(spec, &config.profile, &placement, k_max)?;
        let rho = scaling_matrix(spec, delta, placement.n());
        let ctx = CellContext {
            config,
            grid,
            k_max,
            proj,
            rho: rho.clone(),
            truth: &truth,
        };
        let results: Vec<(u64, Result<ReplicateOutcome>)> = (0..config.replicates as u64)
            .into_par_iter()
            .map(|r| (r, run_replicate(&ctx, r)))
            .collect();
        let mut outcomes = Vec::new();
        let mut failures = Vec::new();
        for (r, res) in results {
            match res {
                Ok(o) => outcomes.push(o),
                Err(e @ (Error::IllConditioned { .. } | Error::Range(_))) => failures.push(Failure {
                    replicate: r,
                    message: e.to_string(),
                }),
                Err(e) => return Err(e),
            }
        }
        if failures.len() as f64 > MAX_FAILURE_SHARE * config.replicates as f64 || outcomes.len() < 2 {
            return Err(Error::TooManyFailures {
                delta,
                failed: failures.len(),
                total: config.replicates,
            });
        }
        cells.push(Cell {
            delta,
            n_loc: placement.n(),
            rho,
            outcomes,
            failures,
        });
    }
    Ok(StudyResult {
        config: config.clone(),
        k_max,
        truth,
        sigma: asym.sigma,
        clt_covariance: asym.clt_covariance,
        cells,
    })
}
