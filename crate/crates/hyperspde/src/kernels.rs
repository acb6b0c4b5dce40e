//! Point-spread kernels on `(-1, 1)`, their sine coefficients after rescaling
//! to `K_{delta,x}(y) = delta^{-1/2} K((y - x)/delta)`, and whole-space norms.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Largest truncation deficit accepted by [`rescale_coeffs`], relative to `|K|^2`.
pub const MAX_TAIL_DEFICIT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// `exp(-5 / (1 - y^2))` on `|y| < 1`.
    Bump,
    /// `d^{2r}/dy^{2r}` of the bump.
    LaplacianBump { order: u32 },
}

/// `d^j/dy^j exp(-5/(1-y^2)) = exp(-5/(1-y^2)) P_j(y) / (1-y^2)^{2j}`.
fn bump_derivative_polys(max_order: usize) -> Vec<Vec<f64>> {
    let mut polys = vec![vec![1.0]];
    for j in 0..max_order {
        let p = &polys[j];
        // P_{j+1} = -10 y P + (1 - y^2)^2 P' + 4 j y (1 - y^2) P
        let mut next = vec![0.0; p.len() + 3];
        for (i, &c) in p.iter().enumerate() {
            next[i + 1] += -10.0 * c;
            next[i + 1] += 4.0 * j as f64 * c;
            next[i + 3] -= 4.0 * j as f64 * c;
            if i > 0 {
                let d = c * i as f64;
                next[i - 1] += d;
                next[i + 1] -= 2.0 * d;
                next[i + 3] += d;
            }
        }
        while next.len() > 1 && *next.last().unwrap() == 0.0 {
            next.pop();
        }
        polys.push(next);
    }
    polys
}

fn horner(p: &[f64], y: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * y + c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelProfile {
    pub kind: KernelKind,
    polys: Vec<Vec<f64>>,
    norm_sq: f64,
}

impl KernelProfile {
    pub fn new(kind: KernelKind) -> KernelProfile {
        let base = match kind {
            KernelKind::Bump => 0,
            KernelKind::LaplacianBump { order } => 2 * order as usize,
        };
        let mut k = KernelProfile {
            kind,
            polys: bump_derivative_polys(base + 2),
            norm_sq: 0.0,
        };
        k.norm_sq = quad::integrate(|y| k.eval(y).powi(2), -1.0, 1.0, 1e-14);
        k
    }

    pub fn bump() -> KernelProfile {
        KernelProfile::new(KernelKind::Bump)
    }

    pub fn laplacian_bump(order: u32) -> KernelProfile {
        KernelProfile::new(KernelKind::LaplacianBump { order })
    }

    /// Order `r` of the Laplacian applied to the bump (0 for the plain bump).
    pub fn order(&self) -> u32 {
        match self.kind {
            KernelKind::Bump => 0,
            KernelKind::LaplacianBump { order } => order,
        }
    }

    pub fn support_radius(&self) -> f64 {
        1.0
    }

    /// `j`-th derivative of the bump itself.
    fn bump_derivative(&self, j: usize, y: f64) -> f64 {
        let s = 1.0 - y * y;
        if s <= 0.0 {
            return 0.0;
        }
        let log_scale = -5.0 / s - 2.0 * j as f64 * s.ln();
        horner(&self.polys[j], y) * log_scale.exp()
    }

    /// `K(y)`.
    pub fn eval(&self, y: f64) -> f64 {
        self.bump_derivative(2 * self.order() as usize, y)
    }

    /// `K^{(n)}(y)` for `n <= 2`.
    pub fn derivative(&self, n: usize, y: f64) -> f64 {
        assert!(n <= 2, "only up to second derivatives are tabulated");
        self.bump_derivative(2 * self.order() as usize + n, y)
    }

    /// `|K|^2` in `L^2(R)`.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// `K_hat(xi) = int K(y) cos(xi y) dy` (the kernel is even), with
    /// `max(64, 8 ceil(xi/pi))` Gauss-Legendre nodes.
    pub fn fourier(&self, xi: f64) -> f64 {
        let nodes = 64usize.max(8 * (xi.abs() / PI).ceil() as usize);
        let base = quad::gl_integrate(|y| self.bump_derivative(0, y) * (xi * y).cos(), -1.0, 1.0, nodes);
        let r = self.order() as i32;
        let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
        sign * xi.powi(2 * r) * base
    }
}

/// Sine coefficients `c_k = <e_k, K_{delta,x}>`, `k = 1..=K_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct SineCoeffs {
    pub delta: f64,
    pub x: f64,
    pub domain_length: f64,
    pub c: Vec<f64>,
    /// `|K|^2` of the profile.
    pub norm_sq: f64,
    /// Fractional power already applied.
    pub gamma: f64,
}

impl SineCoeffs {
    pub fn k_max(&self) -> usize {
        self.c.len()
    }

    /// `|K|^2 - sum c_k^2` (meaningful for `gamma = 0`).
    pub fn tail_deficit(&self) -> f64 {
        self.norm_sq - self.c.iter().map(|c| c * c).sum::<f64>()
    }

    pub fn lambda(&self, k: usize) -> f64 {
        let w = k as f64 * PI / self.domain_length;
        w * w
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut out = format!("# delta={} x={} gamma={}\nk,c_k\n", self.delta, self.x, self.gamma);
        for (i, c) in self.c.iter().enumerate() {
            out.push_str(&format!("{},{:e}\n", i + 1, c));
        }
        w.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Fourier table of one profile at the wavenumbers `k pi delta / L`, shared by all locations.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    pub delta: f64,
    pub domain_length: f64,
    pub norm_sq: f64,
    hat: Vec<f64>,
}

impl KernelTable {
    pub fn new(profile: &KernelProfile, delta: f64, k_max: usize, domain_length: f64) -> Result<KernelTable> {
        if !(delta > 0.0) || !(domain_length > 0.0) || k_max == 0 {
            return Err(Error::InvalidInput(format!(
                "kernel table needs delta > 0, L > 0, K_max >= 1 (got {delta}, {domain_length}, {k_max})"
            )));
        }
        let hat = (1..=k_max)
            .map(|k| profile.fourier(k as f64 * PI * delta / domain_length))
            .collect();
        Ok(KernelTable {
            delta,
            domain_length,
            norm_sq: profile.norm_sq(),
            hat,
        })
    }

    pub fn k_max(&self) -> usize {
        self.hat.len()
    }

    /// Coefficients at `x`, without the truncation check.
    pub fn coeffs_unchecked(&self, x: f64) -> Result<SineCoeffs> {
        let l = self.domain_length;
        let (lo, hi) = (x - self.delta, x + self.delta);
        if !(lo >= -1e-12 * l && hi <= l * (1.0 + 1e-12)) {
            return Err(Error::Placement { lo, hi, length: l });
        }
        let scale = (2.0 / l).sqrt() * self.delta.sqrt();
        let c = self
            .hat
            .iter()
            .enumerate()
            .map(|(i, h)| scale * ((i + 1) as f64 * PI * x / l).sin() * h)
            .collect();
        Ok(SineCoeffs {
            delta: self.delta,
            x,
            domain_length: l,
            c,
            norm_sq: self.norm_sq,
            gamma: 0.0,
        })
    }

    /// Coefficients at `x`; rejects truncations that lose more than
    /// [`MAX_TAIL_DEFICIT`] of `|K|^2`.
    pub fn coeffs(&self, x: f64) -> Result<SineCoeffs> {
        let c = self.coeffs_unchecked(x)?;
        let deficit = c.tail_deficit();
        if deficit > MAX_TAIL_DEFICIT * c.norm_sq {
            return Err(Error::KmaxTooSmall {
                k_max: c.k_max(),
                deficit: deficit / c.norm_sq,
            });
        }
        Ok(c)
    }
}

pub fn rescale_coeffs(
    profile: &KernelProfile,
    delta: f64,
    x: f64,
    k_max: usize,
    domain_length: f64,
) -> Result<SineCoeffs> {
    KernelTable::new(profile, delta, k_max, domain_length)?.coeffs(x)
}

/// Spectral `(-Lap)^gamma`: `c_k -> lambda_k^gamma c_k`.
pub fn fractional_apply(coeffs: &SineCoeffs, gamma: f64) -> SineCoeffs {
    let mut out = coeffs.clone();
    if gamma != 0.0 {
        for (i, c) in out.c.iter_mut().enumerate() {
            *c *= coeffs.lambda(i + 1).powf(gamma);
        }
    }
    out.gamma += gamma;
    out
}

/// Converged value of a whole-space norm and its last refinement change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub rel_change: f64,
    pub cutoff: f64,
}

/// `(1/pi) int_0^cutoff xi^p |K_hat(xi)|^2 dxi` on graded panels near 0 and
/// `panels_per_unit` panels per unit length beyond 1.
fn weighted_fourier_integral(
    profile: &KernelProfile,
    power: f64,
    low_power: f64,
    cutoff: f64,
    panels_per_unit: f64,
) -> f64 {
    let f = |xi: f64| {
        if xi == 0.0 {
            return 0.0;
        }
        let h = profile.fourier(xi);
        xi.powf(power) * h * h
    };
    // below eps the integrand is the pure power xi^low_power
    let eps = 0.5f64.powi(60);
    let mut total = f(eps) * eps / (low_power + 1.0);
    // geometric panels [2^{-j-1}, 2^{-j}] resolve a power-law endpoint
    for j in 0..60 {
        let (a, b) = (0.5f64.powi(j + 1), 0.5f64.powi(j));
        total += quad::gl_integrate(f, a, b, 16);
    }
    let n_panels = ((cutoff - 1.0) * panels_per_unit).ceil().max(1.0) as usize;
    let w = (cutoff - 1.0) / n_panels as f64;
    for i in 0..n_panels {
        let a = 1.0 + i as f64 * w;
        total += quad::gl_integrate(f, a, a + w, 16);
    }
    total / PI
}

/// `|(-Lap_0)^gamma K|^2_{L^2(R)} = (1/2pi) int |xi|^{4 gamma} |K_hat(xi)|^2 dxi`.
///
/// The frequency cutoff and panel density are doubled together until the
/// value changes by less than `1e-4` relative.
pub fn sobolev_norm(profile: &KernelProfile, gamma: f64) -> Result<NormEstimate> {
    // K_hat(xi) ~ xi^{2r} near zero with a nonzero constant
    let low_power = 4.0 * gamma + 4.0 * profile.order() as f64;
    if low_power <= -1.0 {
        return Err(Error::NormDivergence(format!(
            "exponent gamma = {gamma} needs K = Lap^r K~ with r > {}; the kernel has r = {}",
            -(4.0 * gamma + 1.0) / 4.0,
            profile.order()
        )));
    }
    let power = 4.0 * gamma;
    let mut cutoff = 64.0;
    let mut density = 1.0;
    let mut prev = weighted_fourier_integral(profile, power, low_power, cutoff, density);
    for _ in 0..6 {
        cutoff *= 2.0;
        density *= 2.0;
        let next = weighted_fourier_integral(profile, power, low_power, cutoff, density);
        let rel_change = ((next - prev) / next).abs();
        if rel_change < 1e-4 {
            return Ok(NormEstimate {
                value: next,
                rel_change,
                cutoff,
            });
        }
        prev = next;
    }
    Err(Error::NormDivergence(format!(
        "Fourier integral for gamma = {gamma} did not converge"
    )))
}
