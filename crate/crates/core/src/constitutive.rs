//! Scalar constitutive functions of the fast diffusion model.
//!
//! The nonlinearity is the power law `alpha(s) = |s|^(q-2) s` with `q > 2`.
//! Together with a relaxation weight `mu > 0` it induces
//!
//! * `eta(s)  = s - mu * alpha(s)`
//! * `zeta(s) = alpha^{-1}(s) - mu * s`
//!
//! Both are increasing only while `mu * alpha'(s) < 1`, i.e. for
//! `|s| < s_max(mu)` in the `eta` variable. Inverses are taken on that
//! monotone branch.

use crate::error::{Error, Result};

/// Absolute tolerance of the scalar root finder.
pub const ROOT_TOL: f64 = 1e-13;
/// Relative tolerance of the adaptive quadrature.
pub const QUAD_TOL: f64 = 1e-10;

const ROOT_MAX_ITER: usize = 200;
const QUAD_MAX_DEPTH: u32 = 48;

/// `|s|^p` with the `s = 0` branch returning 0 explicitly.
#[inline]
fn abs_pow(s: f64, p: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        (p * s.abs().ln()).exp()
    }
}

/// The power-law constitutive function `alpha(s) = |s|^(q-2) s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLaw {
    q: f64,
}

impl PowerLaw {
    pub fn new(q: f64) -> Result<Self> {
        if !(q.is_finite() && q > 2.0) {
            return Err(Error::Config(format!(
                "exponent q must be finite and > 2, got {q}"
            )));
        }
        Ok(Self { q })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Exponent of the separable decay profile, `1/(q-2)`.
    pub fn decay_exponent(&self) -> f64 {
        1.0 / (self.q - 2.0)
    }

    pub fn alpha(&self, s: f64) -> f64 {
        abs_pow(s, self.q - 2.0) * s
    }

    pub fn alpha_prime(&self, s: f64) -> f64 {
        (self.q - 1.0) * abs_pow(s, self.q - 2.0)
    }

    pub fn alpha_inverse(&self, r: f64) -> f64 {
        r.signum() * abs_pow(r, 1.0 / (self.q - 1.0))
    }

    /// Primitive of `alpha^{-1}`: `((q-1)/q) |s|^(q/(q-1))`.
    pub fn phi_alpha_inverse(&self, s: f64) -> f64 {
        (self.q - 1.0) / self.q * abs_pow(s, self.q / (self.q - 1.0))
    }

    /// Exact Lipschitz constant of `alpha` on `[-bound, bound]`.
    pub fn lipschitz_on(&self, bound: f64) -> f64 {
        debug_assert!(bound >= 0.0);
        (self.q - 1.0) * abs_pow(bound, self.q - 2.0)
    }

    pub fn eta(&self, s: f64, mu: f64) -> f64 {
        s - mu * self.alpha(s)
    }

    /// Largest `s` with `mu * alpha'(s) <= 1`; `eta` is increasing on `[-s_max, s_max]`.
    pub fn eta_branch_end(&self, mu: f64) -> f64 {
        (1.0 / (mu * (self.q - 1.0))).powf(1.0 / (self.q - 2.0))
    }

    /// Inverse of `eta` on its monotone branch.
    pub fn eta_inverse(&self, r: f64, mu: f64) -> Result<f64> {
        if r == 0.0 {
            return Ok(0.0);
        }
        let s_max = self.eta_branch_end(mu);
        let r_max = self.eta(s_max, mu);
        let target = r.abs();
        if !(target <= r_max) {
            return Err(Error::RootFinding {
                input: r,
                lo: 0.0,
                hi: s_max,
                iterations: 0,
            });
        }
        let s = solve_increasing(
            |s| (self.eta(s, mu) - target, 1.0 - mu * self.alpha_prime(s)),
            0.0,
            s_max,
            r,
        )?;
        Ok(r.signum() * s)
    }

    /// `zeta^{-1}(v)`: the unique `u` on the monotone branch with `alpha(mu u + v) = u`.
    ///
    /// With `z = mu u + v` the fixed point reads `eta(z) = v`, so the root is
    /// found in the `z` variable where `eta` has unit slope at the origin.
    pub fn zeta_inverse(&self, v: f64, mu: f64) -> Result<f64> {
        Ok(self.alpha(self.eta_inverse(v, mu)?))
    }

    /// Primitive of `eta^{-1}`, `int_0^s eta^{-1}(r) dr`, by adaptive Simpson quadrature.
    pub fn phi_eta_inverse(&self, s: f64, mu: f64) -> Result<f64> {
        if s == 0.0 {
            return Ok(0.0);
        }
        // eta^{-1} is odd, so its primitive is even.
        let upper = s.abs();
        let mut err = None;
        let mut f = |r: f64| match self.eta_inverse(r, mu) {
            Ok(x) => x,
            Err(e) => {
                err.get_or_insert(e);
                f64::NAN
            }
        };
        let result = adaptive_simpson(&mut f, 0.0, upper, QUAD_TOL);
        if let Some(e) = err {
            return Err(e);
        }
        result
    }
}

/// Safeguarded Newton iteration for an increasing function on `[lo, hi]`
/// with `f(lo) <= 0 <= f(hi)`. Newton steps that leave the current bracket
/// are replaced by bisection.
fn solve_increasing(
    f: impl Fn(f64) -> (f64, f64),
    lo: f64,
    hi: f64,
    input: f64,
) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (fa, _) = f(a);
    let (fb, _) = f(b);
    if fa > 0.0 || fb < 0.0 {
        return Err(Error::RootFinding {
            input,
            lo: a,
            hi: b,
            iterations: 0,
        });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let mut x = 0.5 * (a + b);
    for _ in 0..ROOT_MAX_ITER {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx > 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - x).abs() <= ROOT_TOL || b - a <= ROOT_TOL {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::RootFinding {
        input,
        lo: a,
        hi: b,
        iterations: ROOT_MAX_ITER,
    })
}

fn adaptive_simpson(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = rel_tol * whole.abs().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    let value = simpson_step(f, a, b, fa, fm, fb, whole, tol, QUAD_MAX_DEPTH, &mut worst);
    if !value.is_finite() || worst > tol {
        return Err(Error::Quadrature {
            upper: b,
            estimate: value,
            error: worst,
        });
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    worst: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        if depth == 0 {
            *worst = worst.max(delta.abs() / 15.0);
        }
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, worst)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, worst)
}
