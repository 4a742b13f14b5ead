//! Separable initial data for the fast diffusion equation.
//!
//! The normalized positive solution `z0` of the Lane-Emden-Fowler problem
//! `-Delta z = c alpha(z)`, `||z||_q = 1`, generates the exact solution
//! `z*(x, t) = (1 - t/T*)_+^{1/(q-2)} z0(x)` with `T* = (q-1) / ((q-2) c)`.

use log::debug;

use crate::constitutive::PowerLaw;
use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid};
use crate::linalg::{gmres, BandMatrix, DirichletPoisson};

/// Maximum number of step halvings in the damped Newton iteration.
const MAX_HALVINGS: usize = 30;
const KRYLOV_TOL: f64 = 1e-10;
const KRYLOV_RESTART: usize = 60;
const KRYLOV_MAX_ITER: usize = 1200;

/// Normalized discrete Lane-Emden-Fowler solution.
#[derive(Clone, Debug)]
pub struct StationaryProfile {
    pub grid: Grid,
    pub law: PowerLaw,
    pub z0: Field,
    /// Energy `c = ||grad z0||^2`.
    pub c: f64,
    pub iterations: usize,
    /// `||-Delta_h z0 - c alpha(z0)||_inf / (c ||alpha(z0)||_inf)`.
    pub relative_residual: f64,
    /// Sup-norm of each Newton increment.
    pub increments: Vec<f64>,
}

impl StationaryProfile {
    pub fn t_star(&self) -> f64 {
        extinction_time(self.c, &self.law).expect("solved profile has c > 0")
    }

    /// Restrict to a run grid whose mesh size is a multiple of the profile's.
    pub fn exact_solution(&self, run_grid: &Grid) -> Result<ExactSolution> {
        Ok(ExactSolution {
            grid: *run_grid,
            law: self.law,
            z0: grid::restrict(&self.z0, &self.grid, run_grid)?,
            t_star: self.t_star(),
        })
    }
}

/// Separable exact solution sampled on a run grid.
#[derive(Clone, Debug)]
pub struct ExactSolution {
    pub grid: Grid,
    pub law: PowerLaw,
    pub z0: Field,
    pub t_star: f64,
}

impl ExactSolution {
    /// Temporal factor `(1 - t/T*)_+^{1/(q-2)}`.
    pub fn decay_factor(&self, t: f64) -> f64 {
        let s = (1.0 - t / self.t_star).max(0.0);
        if s == 0.0 {
            0.0
        } else {
            s.powf(self.law.decay_exponent())
        }
    }
}

/// `T* = (q-1) / ((q-2) c)`.
pub fn extinction_time(c: f64, law: &PowerLaw) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::Contract(format!("energy c must be positive, got {c}")));
    }
    Ok((law.q() - 1.0) / ((law.q() - 2.0) * c))
}

pub fn exact_solution_at(sol: &ExactSolution, t: f64) -> Field {
    let factor = sol.decay_factor(t);
    sol.z0.scaled(factor)
}

/// Compatible initial pair `u0 = alpha(z0)`, `v0 = z0 - mu alpha(z0)`.
pub fn initial_uv(z0: &Field, mu: f64, law: &PowerLaw) -> Result<(Field, Field)> {
    let lip = law.lipschitz_on(z0.sup_norm());
    if !(mu > 0.0) || mu * lip >= 1.0 {
        let max_mu = if lip > 0.0 { 1.0 / lip } else { f64::INFINITY };
        return Err(Error::Config(format!(
            "mu = {mu} violates mu < 1/||alpha'(z0)||_inf; maximal admissible mu is {max_mu}"
        )));
    }
    let u0 = z0.map(|z| law.alpha(z));
    let v0 = z0.map(|z| z - mu * law.alpha(z));
    Ok((u0, v0))
}

fn residual(g: &Grid, law: &PowerLaw, z: &[f64], c: f64, out: &mut [f64]) -> f64 {
    g.laplacian_into(z, out);
    for (r, &zi) in out.iter_mut().zip(z) {
        *r = -*r - c * law.alpha(zi);
    }
    let q = law.q();
    z.iter().map(|x| x.abs().powf(q)).sum::<f64>() * g.cell_volume() - 1.0
}

fn merit(g: &Grid, f1: &[f64], f2: f64) -> f64 {
    (f1.iter().map(|x| x * x).sum::<f64>() * g.cell_volume() + f2 * f2).sqrt()
}

enum Linearization<'a> {
    Band(crate::linalg::BandLu),
    Krylov {
        poisson: &'a DirichletPoisson,
        shift: Vec<f64>,
    },
}

impl Linearization<'_> {
    /// Solve `(-Delta_h - diag(shift)) x = rhs`.
    fn solve(&self, g: &Grid, rhs: &[f64]) -> Result<Vec<f64>> {
        match self {
            Linearization::Band(lu) => {
                let mut x = rhs.to_vec();
                lu.solve_in_place(&mut x);
                Ok(x)
            }
            Linearization::Krylov { poisson, shift } => {
                let mut x = vec![0.0; rhs.len()];
                let mut apply = |v: &[f64], out: &mut [f64]| {
                    g.laplacian_into(v, out);
                    for i in 0..v.len() {
                        out[i] = -out[i] - shift[i] * v[i];
                    }
                };
                let mut precond = |v: &[f64], out: &mut [f64]| poisson.solve(v, out);
                let outcome = gmres(
                    &mut apply,
                    &mut precond,
                    rhs,
                    &mut x,
                    KRYLOV_TOL,
                    KRYLOV_RESTART,
                    KRYLOV_MAX_ITER,
                );
                debug!(
                    "lane-emden krylov: {} iterations, residual {:e}",
                    outcome.iterations, outcome.rel_residual
                );
                if !outcome.converged {
                    return Err(Error::Linear(format!(
                        "GMRES stalled at relative residual {:e} after {} iterations",
                        outcome.rel_residual, outcome.iterations
                    )));
                }
                Ok(x)
            }
        }
    }
}

/// Solve the discrete normalized Lane-Emden-Fowler problem by damped Newton
/// on the augmented unknowns `(z, c)`.
pub fn solve_lane_emden(
    g: &Grid,
    law: &PowerLaw,
    tol: f64,
    max_iter: usize,
) -> Result<StationaryProfile> {
    let n = g.len();
    let q = law.q();
    let vol = g.cell_volume();
    let length = g.length();

    let sine = g.field_from_fn(|x| {
        (0..g.dim())
            .map(|k| (std::f64::consts::PI * x[k] / length).sin())
            .product()
    });
    let mut z = sine.scaled(1.0 / grid::lq_norm(&sine, g, q)?).into_vec();
    let mut c = grid::h1_seminorm_sq(&Field::from_vec(z.clone()), g)?;

    let poisson = (g.dim() == 2).then(|| DirichletPoisson::new(g));
    let mut f1 = vec![0.0; n];
    let mut f2 = residual(g, law, &z, c, &mut f1);
    let mut trace = Vec::new();

    for iter in 1..=max_iter {
        let shift: Vec<f64> = z.iter().map(|&x| c * law.alpha_prime(x)).collect();
        let lin = match &poisson {
            None => {
                let mut band = BandMatrix::zeros(n, 1, 1);
                let inv_h2 = 1.0 / (g.h() * g.h());
                for i in 0..n {
                    band.add(i, i, 2.0 * inv_h2 - shift[i]);
                    if i > 0 {
                        band.add(i, i - 1, -inv_h2);
                    }
                    if i + 1 < n {
                        band.add(i, i + 1, -inv_h2);
                    }
                }
                Linearization::Band(band.factor()?)
            }
            Some(poisson) => Linearization::Krylov { poisson, shift },
        };
        let neg_f1: Vec<f64> = f1.iter().map(|x| -x).collect();
        let alpha_z: Vec<f64> = z.iter().map(|&x| law.alpha(x)).collect();
        let a = lin.solve(g, &neg_f1)?;
        let b = lin.solve(g, &alpha_z)?;
        // gradient of the normalization constraint: q h^d alpha(z)
        let ga: f64 = alpha_z.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>() * q * vol;
        let gb: f64 = alpha_z.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() * q * vol;
        let dc = (-f2 - ga) / gb;
        let dz: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + dc * y).collect();
        let inc = dz.iter().fold(dc.abs(), |m, x| m.max(x.abs()));
        if !inc.is_finite() {
            return Err(Error::Stationary {
                iterations: iter,
                reason: "non-finite Newton increment".into(),
                trace,
            });
        }
        trace.push(inc);

        let m0 = merit(g, &f1, f2);
        let mut lambda = 1.0;
        let mut accepted = false;
        let mut trial = vec![0.0; n];
        let mut trial_f1 = vec![0.0; n];
        for _ in 0..=MAX_HALVINGS {
            for i in 0..n {
                trial[i] = z[i] + lambda * dz[i];
            }
            let trial_c = c + lambda * dc;
            let positive = trial.iter().all(|&x| x > 0.0) && trial_c > 0.0;
            if positive {
                let trial_f2 = residual(g, law, &trial, trial_c, &mut trial_f1);
                if inc <= tol || merit(g, &trial_f1, trial_f2) < m0 {
                    std::mem::swap(&mut z, &mut trial);
                    std::mem::swap(&mut f1, &mut trial_f1);
                    c = trial_c;
                    f2 = trial_f2;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        debug!("lane-emden iter {iter}: increment {inc:e}, step {lambda}, c = {c}");
        if !accepted {
            return Err(Error::Stationary {
                iterations: iter,
                reason: "line search failed to keep z positive and reduce the residual".into(),
                trace,
            });
        }
        if inc <= tol && lambda == 1.0 {
            let z0 = Field::from_vec(z);
            let alpha_sup = z0.map(|x| law.alpha(x)).sup_norm();
            let res_sup = f1.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            return Ok(StationaryProfile {
                grid: *g,
                law: *law,
                z0,
                c,
                iterations: iter,
                relative_residual: res_sup / (c * alpha_sup),
                increments: trace,
            });
        }
    }
    Err(Error::Stationary {
        iterations: max_iter,
        reason: format!("increment did not fall below {tol:e}"),
        trace,
    })
}
