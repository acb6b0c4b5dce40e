//! Scalar M,N-functions of one mode and the exact Gaussian transition.
//!
//! With `c± = b/2 ± i sqrt(ell)` the fundamental pair is a two-exponential sum,
//! `n(r) = (e^{c+ r} - e^{c- r}) / (c+ - c-)`, so products of `m, n, m', n'`
//! integrate in closed form. When the closed form cancels too many digits the
//! integral is recomputed by adaptive quadrature.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::ModeSymbol;
use crate::quad;

/// `(m, n, m', n')` at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MNValues {
    pub m: f64,
    pub n: f64,
    pub m_prime: f64,
    pub n_prime: f64,
}

impl MNValues {
    pub fn get(&self, f: Fundamental) -> f64 {
        match f {
            Fundamental::M => self.m,
            Fundamental::N => self.n,
            Fundamental::MPrime => self.m_prime,
            Fundamental::NPrime => self.n_prime,
        }
    }
}

/// Branch threshold on `|ell|`.
pub fn ell_epsilon(b: f64) -> f64 {
    1e-8 * (b * b).max(1.0)
}

/// Evaluates `m, n, m' = a n, n' = m + b n` at `t >= 0`.
pub fn mn_scalar(t: f64, sym: &ModeSymbol) -> Result<MNValues> {
    if !(t >= 0.0) || !t.is_finite() || !sym.is_finite() {
        return Err(Error::InvalidInput(format!("mn_scalar at t = {t} with {sym:?}")));
    }
    let (a, b, ell) = (sym.a, sym.b, sym.ell);
    let half_bt = 0.5 * b * t;
    if half_bt > 700.0 {
        return Err(Error::Range(format!("b t / 2 = {half_bt} overflows exp")));
    }
    let (cs, sn) = if ell.abs() <= ell_epsilon(b) {
        let x = ell * t * t;
        (
            1.0 - x / 2.0 + x * x / 24.0 - x * x * x / 720.0,
            t * (1.0 - x / 6.0 + x * x / 120.0 - x * x * x / 5040.0),
        )
    } else if ell > 0.0 {
        let w = ell.sqrt();
        ((w * t).cos(), (w * t).sin() / w)
    } else {
        let w = (-ell).sqrt();
        if half_bt + w * t > 700.0 {
            return Err(Error::Range(format!(
                "hyperbolic growth exponent {} overflows exp",
                half_bt + w * t
            )));
        }
        ((w * t).cosh(), (w * t).sinh() / w)
    };
    let e = half_bt.exp();
    let n = e * sn;
    Ok(MNValues {
        m: e * (cs - 0.5 * b * sn),
        n,
        m_prime: a * n,
        n_prime: e * (cs + 0.5 * b * sn),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fundamental {
    M,
    N,
    MPrime,
    NPrime,
}

/// Integration weight on `[0, H]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    /// `int_0^H f`.
    Plain(f64),
    /// `int_0^H (H - r) f(r) dr`, i.e. `int_0^H int_0^t f(r) dr dt`.
    Ramp(f64),
}

impl Window {
    fn length(self) -> f64 {
        match self {
            Window::Plain(h) | Window::Ramp(h) => h,
        }
    }

    fn weight(self, r: f64) -> f64 {
        match self {
            Window::Plain(_) => 1.0,
            Window::Ramp(h) => h - r,
        }
    }

    /// Window applied to `e^{c r}`.
    fn exp_integral(self, c: Complex64) -> Complex64 {
        let h = self.length();
        let z = c * h;
        match self {
            Window::Plain(_) => phi_series(z, 1) * h,
            Window::Ramp(_) => phi_series(z, 2) * (h * h),
        }
    }
}

/// `phi_1(z) = (e^z - 1)/z`, `phi_2(z) = (e^z - 1 - z)/z^2`.
fn phi_series(z: Complex64, order: u32) -> Complex64 {
    if z.norm() < 0.5 {
        // sum_j z^j / (j + order)!
        let mut fact = if order == 1 { 1.0 } else { 2.0 };
        let mut term = Complex64::new(1.0 / fact, 0.0);
        let mut sum = term;
        for j in 1..30 {
            fact = (j + order) as f64;
            term = term * z / fact;
            sum += term;
            if term.norm() < 1e-18 * sum.norm() {
                break;
            }
        }
        sum
    } else {
        let ez = z.exp();
        if order == 1 {
            (ez - 1.0) / z
        } else {
            (ez - 1.0 - z) / (z * z)
        }
    }
}

/// Rates and weights of the exponential-sum form of each fundamental function.
struct ExpForm {
    c: [Complex64; 2],
    n: [Complex64; 2],
    np: [Complex64; 2],
    m: [Complex64; 2],
    mp: [Complex64; 2],
}

impl ExpForm {
    fn new(sym: &ModeSymbol) -> Option<ExpForm> {
        if sym.ell == 0.0 {
            return None;
        }
        let omega = Complex64::new(sym.ell, 0.0).sqrt();
        let half_b = Complex64::new(0.5 * sym.b, 0.0);
        let i = Complex64::i();
        let cp = half_b + i * omega;
        let cm = half_b - i * omega;
        let d = cp - cm;
        let n = [1.0 / d, -1.0 / d];
        let np = [cp / d, -cm / d];
        let m = [np[0] - sym.b * n[0], np[1] - sym.b * n[1]];
        let mp = [sym.a * n[0], sym.a * n[1]];
        Some(ExpForm {
            c: [cp, cm],
            n,
            np,
            m,
            mp,
        })
    }

    fn weights(&self, f: Fundamental) -> [Complex64; 2] {
        match f {
            Fundamental::M => self.m,
            Fundamental::N => self.n,
            Fundamental::MPrime => self.mp,
            Fundamental::NPrime => self.np,
        }
    }
}

/// Digits the closed form may lose before quadrature takes over.
const MAX_DIGIT_LOSS: f64 = 1e6;

/// An integral value together with whether quadrature replaced the closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub fallback: bool,
}

fn closed_form(sym: &ModeSymbol, f: Fundamental, g: Option<Fundamental>, w: Window) -> Option<f64> {
    let form = ExpForm::new(sym)?;
    let wf = form.weights(f);
    let mut total = Complex64::new(0.0, 0.0);
    let mut magnitude = 0.0;
    match g {
        None => {
            for s in 0..2 {
                let t = wf[s] * w.exp_integral(form.c[s]);
                total += t;
                magnitude += t.norm();
            }
        }
        Some(g) => {
            let wg = form.weights(g);
            for s in 0..2 {
                for r in 0..2 {
                    let t = wf[s] * wg[r] * w.exp_integral(form.c[s] + form.c[r]);
                    total += t;
                    magnitude += t.norm();
                }
            }
        }
    }
    let value = total.re;
    let ok = value.is_finite()
        && magnitude.is_finite()
        && (magnitude == 0.0 || value.abs() * MAX_DIGIT_LOSS >= magnitude);
    ok.then_some(value)
}

fn quadrature(sym: &ModeSymbol, f: Fundamental, g: Option<Fundamental>, w: Window) -> Result<f64> {
    let mut err = None;
    let h = w.length();
    let value = quad::adaptive(
        |r| match mn_scalar(r, sym) {
            Ok(v) => w.weight(r) * v.get(f) * g.map_or(1.0, |g| v.get(g)),
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        0.0,
        h,
        1e-300,
        1e-13,
        20_000,
    )
    .value;
    match err {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// `f f'` integrates by parts without the cancellation of the exponential form:
/// `int_0^H f f' = (f(H)^2 - f(0)^2)/2` and
/// `int_0^H (H - r) f f' = -H f(0)^2/2 + (1/2) int_0^H f^2`.
fn derivative_pair(sym: &ModeSymbol, f: Fundamental, g: Fundamental, w: Window) -> Result<Option<f64>> {
    use Fundamental::*;
    let base = match (f, g) {
        (N, NPrime) | (NPrime, N) => N,
        (M, MPrime) | (MPrime, M) => M,
        _ => return Ok(None),
    };
    let f0 = if base == M { 1.0 } else { 0.0 };
    let value = match w {
        Window::Plain(h) => 0.5 * (mn_scalar(h, sym)?.get(base).powi(2) - f0 * f0),
        Window::Ramp(h) => {
            let sq = product_integral(sym, base, Some(base), Window::Plain(h))?.value;
            -0.5 * h * f0 * f0 + 0.5 * sq
        }
    };
    Ok(Some(value))
}

/// `int w(r) f(r) g(r) dr` (or `int w f` when `g` is `None`) over the window.
pub fn product_integral(
    sym: &ModeSymbol,
    f: Fundamental,
    g: Option<Fundamental>,
    w: Window,
) -> Result<Integral> {
    if !(w.length() >= 0.0) {
        return Err(Error::InvalidInput("negative window".into()));
    }
    if w.length() == 0.0 {
        return Ok(Integral {
            value: 0.0,
            fallback: false,
        });
    }
    if let Some(g) = g {
        if let Some(value) = derivative_pair(sym, f, g, w)? {
            return Ok(Integral {
                value,
                fallback: false,
            });
        }
    }
    match closed_form(sym, f, g, w) {
        Some(value) => Ok(Integral {
            value,
            fallback: false,
        }),
        None => {
            let value = quadrature(sym, f, g, w)?;
            if !value.is_finite() {
                return Err(Error::Range(format!("integral over {w:?} is not finite")));
            }
            Ok(Integral {
                value,
                fallback: true,
            })
        }
    }
}

/// Exact one-step law: `X(t + h) = phi X(t) + xi`, `xi ~ N(0, q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub phi: [[f64; 2]; 2],
    pub q: [[f64; 2]; 2],
    /// Quadrature replaced a cancelling closed form.
    pub fallback: bool,
}

pub fn transition(h: f64, sym: &ModeSymbol) -> Result<Transition> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("step must be positive, got {h}")));
    }
    let v = mn_scalar(h, sym)?;
    let q11 = product_integral(sym, Fundamental::N, Some(Fundamental::N), Window::Plain(h))?;
    let q22 = product_integral(sym, Fundamental::NPrime, Some(Fundamental::NPrime), Window::Plain(h))?;
    let q12 = 0.5 * v.n * v.n;
    Ok(Transition {
        phi: [[v.m, v.n], [v.m_prime, v.n_prime]],
        q: [[q11.value, q12], [q12, q22.value]],
        fallback: q11.fallback || q22.fallback,
    })
}

/// Joint covariance of `(xi_u, xi_v, dW)` over one step of length `h`.
pub fn joint_noise_cov(h: f64, sym: &ModeSymbol) -> Result<([[f64; 3]; 3], bool)> {
    let tr = transition(h, sym)?;
    let n_int = product_integral(sym, Fundamental::N, None, Window::Plain(h))?;
    let n_h = tr.phi[0][1];
    let q = tr.q;
    Ok((
        [
            [q[0][0], q[0][1], n_int.value],
            [q[1][0], q[1][1], n_h],
            [n_int.value, n_h, h],
        ],
        tr.fallback || n_int.fallback,
    ))
}

/// Lower-triangular factor of the joint noise law, clipped where rounding
/// leaves a tiny negative pivot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseFactor {
    pub l: [[f64; 3]; 3],
}

impl NoiseFactor {
    pub fn from_cov(s: &[[f64; 3]; 3]) -> Result<NoiseFactor> {
        let trace = s[0][0] + s[1][1] + s[2][2];
        let pivot = |d: f64| -> Result<f64> {
            if d >= 0.0 {
                Ok(d.sqrt())
            } else if -d < 1e-12 * trace {
                Ok(0.0)
            } else {
                Err(Error::Indefinite { eigenvalue: d, trace })
            }
        };
        let div = |x: f64, d: f64| if d > 0.0 { x / d } else { 0.0 };
        let l11 = pivot(s[0][0])?;
        let l21 = div(s[1][0], l11);
        let l22 = pivot(s[1][1] - l21 * l21)?;
        let l31 = div(s[2][0], l11);
        let l32 = div(s[2][1] - l31 * l21, l22);
        let l33 = pivot(s[2][2] - l31 * l31 - l32 * l32)?;
        Ok(NoiseFactor {
            l: [[l11, 0.0, 0.0], [l21, l22, 0.0], [l31, l32, l33]],
        })
    }
}


/// Exact covariance of the semi-implicit Euler chain after `n_steps` from zero.
pub fn euler_cov(h: f64, n_steps: usize, sym: &ModeSymbol) -> Result<[[f64; 2]; 2]> {
    let d = 1.0 - h * sym.b - h * h * sym.a;
    if d.abs() < 1e-12 {
        return Err(Error::SingularUpdate {
            mode: 0,
            det: d,
            h_max: h / 2.0,
        });
    }
    let m = [
        [1.0 + h * h * sym.a / d, h / d],
        [h * sym.a / d, 1.0 / d],
    ];
    let g = [h.sqrt() * h / d, h.sqrt() / d];
    let mut p = [[0.0; 2]; 2];
    for _ in 0..n_steps {
        let mut np = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = g[i] * g[j];
                for k in 0..2 {
                    for l in 0..2 {
                        acc += m[i][k] * p[k][l] * m[j][l];
                    }
                }
                np[i][j] = acc;
            }
        }
        p = np;
    }
    Ok(p)
}
