//! Fully implicit scheme for the relaxation system
//!
//! ```text
//! (u+ - u) / (mu dt) = Delta_h u+ - (u+ - alpha(mu u+ + v+)) / eps
//! xi (v+ - v) / dt   = Delta_h v+ + mu (u+ - alpha(mu u+ + v+)) / eps
//! ```
//!
//! solved per step by Newton's method with the exact block Jacobian, plus the
//! implicit fast-diffusion scheme `(alpha(z+) - alpha(z)) / dt = Delta_h z+`
//! that the relaxation scheme reduces to as `eps, xi -> 0`.
//!
//! Unknowns are interleaved node by node (`u_0, v_0, u_1, v_1, ...`). In 1D
//! the Jacobian is a band matrix and is factored directly. In 2D the Newton
//! correction is computed by GMRES on the exact Jacobian, preconditioned by a
//! sparse LU factorization that is refreshed only when GMRES slows down.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::MatMut;
use log::{debug, warn};

use crate::constitutive::PowerLaw;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, TimeGrid};
use crate::linalg::{gmres, BandMatrix};

/// GMRES iteration count above which the 2D preconditioner is refactored.
const REFRESH_AFTER: usize = 12;
const KRYLOV_RESTART: usize = 40;
const KRYLOV_MAX_ITER: usize = 400;
/// Increments below this are at roundoff level and exempt from the
/// superlinear-convergence diagnostic.
pub const SUPERLINEAR_FLOOR: f64 = 1e-13;
/// [`run_extended`] renormalizes the state once its sup-norm drops below this.
const RESCALE_BELOW: f64 = 3.872591914849318e-121; // 2^-400

/// Parameters of one run of the relaxation scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunParameters {
    pub law: PowerLaw,
    pub mu: f64,
    pub eps: f64,
    pub xi: f64,
    pub time: TimeGrid,
    pub grid: Grid,
}

impl RunParameters {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::Config(format!("xi must be non-negative, got {}", self.xi)));
        }
        Ok(())
    }
}

/// Time level `n` of the relaxation scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub u: Field,
    pub v: Field,
    pub n: usize,
}

impl State {
    pub fn new(u: Field, v: Field) -> Self {
        Self { u, v, n: 0 }
    }

    /// Superposition `z = mu u + v`.
    pub fn z(&self, mu: f64) -> Field {
        self.u.axpby(mu, &self.v, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonSettings {
    /// Sup-norm of the Newton increment at convergence.
    pub tol_increment: f64,
    pub max_iter: usize,
    /// Relative residual of the inner Krylov solve (2D only).
    pub linear_tol: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tol_increment: 1e-10,
            max_iter: 50,
            linear_tol: 1e-12,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_increment > 0.0) || self.max_iter == 0 || !(self.linear_tol > 0.0) {
            return Err(Error::Config(format!("invalid Newton settings {self:?}")));
        }
        Ok(())
    }
}

/// Convergence record of one Newton solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    pub iterations: usize,
    /// Sup-norm of each increment.
    pub increments: Vec<f64>,
    /// Euclidean norm of the residual before each increment.
    pub residuals: Vec<f64>,
}

impl StepReport {
    /// Whether the last increment obeys `last <= prev^1.5` (or is at roundoff level).
    pub fn is_superlinear(&self) -> bool {
        match self.increments.as_slice() {
            [.., prev, last] => *last <= prev.powf(1.5).max(SUPERLINEAR_FLOOR),
            _ => true,
        }
    }
}

/// `u - alpha(mu u + v)` nodewise.
pub fn reaction_residual(s: &State, p: &RunParameters) -> Result<Field> {
    p.grid.check(&s.u)?;
    p.grid.check(&s.v)?;
    Ok(Field::from_vec(
        s.u.as_slice()
            .iter()
            .zip(s.v.as_slice())
            .map(|(&u, &v)| u - p.law.alpha(p.mu * u + v))
            .collect(),
    ))
}

/// A-priori sup-norm bounds for `u` and `v` from the initial data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinfBounds {
    pub u: f64,
    pub v: f64,
}

impl LinfBounds {
    /// For `xi > 0`: `|u| <= |u0| + |zeta^{-1}(v0)|`, `|v| <= |zeta_0(u0)| + |v0|`.
    /// For `xi = 0`: `|u| <= |u0|`, `|v| <= |alpha^{-1}(u0)| + mu |u0|`.
    pub fn from_initial_data(u0: &Field, v0: &Field, mu: f64, xi: f64, law: &PowerLaw) -> Result<Self> {
        let u0_sup = u0.sup_norm();
        let v0_sup = v0.sup_norm();
        if xi > 0.0 {
            let mut zeta_inv_sup = 0.0f64;
            for &v in v0.as_slice() {
                zeta_inv_sup = zeta_inv_sup.max(law.zeta_inverse(v, mu)?.abs());
            }
            let zeta0_sup = u0
                .as_slice()
                .iter()
                .fold(0.0f64, |m, &u| m.max((law.alpha_inverse(u) - mu * u).abs()));
            Ok(Self {
                u: u0_sup + zeta_inv_sup,
                v: zeta0_sup + v0_sup,
            })
        } else {
            let alpha_inv_sup = u0
                .as_slice()
                .iter()
                .fold(0.0f64, |m, &u| m.max(law.alpha_inverse(u).abs()));
            Ok(Self {
                u: u0_sup,
                v: alpha_inv_sup + mu * u0_sup,
            })
        }
    }
}

/// Sparse LU kept as a preconditioner across Newton iterations and steps.
struct StaleLu {
    symbolic: Option<SymbolicLu<usize>>,
    lu: Option<Lu<usize, f64>>,
    last_iterations: usize,
    refactorizations: usize,
}

impl StaleLu {
    fn new() -> Self {
        Self {
            symbolic: None,
            lu: None,
            last_iterations: 0,
            refactorizations: 0,
        }
    }

    fn refactor(&mut self, mat: &SparseColMat<usize, f64>) -> Result<()> {
        let symbolic = match &self.symbolic {
            Some(s) => s.clone(),
            None => {
                let s = SymbolicLu::try_new(mat.symbolic())
                    .map_err(|e| Error::Linear(format!("symbolic LU failed: {e:?}")))?;
                self.symbolic = Some(s.clone());
                s
            }
        };
        let lu = Lu::try_new_with_symbolic(symbolic, mat.as_ref())
            .map_err(|e| Error::Linear(format!("sparse LU failed: {e:?}")))?;
        self.lu = Some(lu);
        self.refactorizations += 1;
        Ok(())
    }

    fn apply(&self, rhs: &[f64], out: &mut [f64]) {
        out.copy_from_slice(rhs);
        let lu = self.lu.as_ref().expect("factored before use");
        let n = out.len();
        lu.solve_in_place(MatMut::from_column_major_slice_mut(out, n, 1));
    }
}

/// Solves `J delta = rhs` for the coupled Jacobian at the current iterate.
enum CoupledSolver {
    Band,
    Krylov(Box<StaleLu>),
}

/// Coefficients of the coupled Jacobian at one Newton iterate.
struct Jacobian<'a> {
    grid: &'a Grid,
    /// `alpha'(mu u + v)` nodewise.
    d: &'a [f64],
    mu: f64,
    eps: f64,
    /// `1 / (mu dt)`
    mass_u: f64,
    /// `xi / dt`
    mass_v: f64,
}

impl Jacobian<'_> {
    /// Matrix-free product with an interleaved vector.
    fn apply(&self, x: &[f64], out: &mut [f64], lap: &mut [f64], tmp: &mut [f64]) {
        let n = self.grid.len();
        for i in 0..n {
            tmp[i] = x[2 * i];
        }
        self.grid.laplacian_into(tmp, lap);
        for i in 0..n {
            let (xu, xv) = (x[2 * i], x[2 * i + 1]);
            let react = (xu - self.d[i] * (self.mu * xu + xv)) / self.eps;
            out[2 * i] = self.mass_u * xu - lap[i] + react;
            out[2 * i + 1] = -self.mu * react;
        }
        for i in 0..n {
            tmp[i] = x[2 * i + 1];
        }
        self.grid.laplacian_into(tmp, lap);
        for i in 0..n {
            out[2 * i + 1] += self.mass_v * x[2 * i + 1] - lap[i];
        }
    }

    /// Entries of row pair `i`: `(row, col, value)` with interleaved indices.
    fn entries(&self, mut push: impl FnMut(usize, usize, f64)) {
        let g = self.grid;
        let inv_h2 = 1.0 / (g.h() * g.h());
        let neg_lap_diag = -g.laplacian_diagonal();
        for i in 0..g.len() {
            let d = self.d[i];
            let (ru, rv) = (2 * i, 2 * i + 1);
            push(ru, ru, self.mass_u + neg_lap_diag + (1.0 - self.mu * d) / self.eps);
            push(ru, rv, -d / self.eps);
            push(rv, ru, -self.mu * (1.0 - self.mu * d) / self.eps);
            push(rv, rv, self.mass_v + neg_lap_diag + self.mu * d / self.eps);
            for nb in g.neighbours(i) {
                push(ru, 2 * nb, -inv_h2);
                push(rv, 2 * nb + 1, -inv_h2);
            }
        }
    }
}

/// Time stepper for the relaxation scheme; owns its linear-solver state.
pub struct Stepper {
    params: RunParameters,
    settings: NewtonSettings,
    solver: CoupledSolver,
    /// Factor `s^{q-2}` on `alpha` when the state is stored divided by `s`.
    alpha_gain: f64,
}

impl Stepper {
    pub fn new(params: RunParameters, settings: NewtonSettings) -> Result<Self> {
        params.validate()?;
        settings.validate()?;
        let solver = if params.grid.dim() == 1 {
            CoupledSolver::Band
        } else {
            CoupledSolver::Krylov(Box::new(StaleLu::new()))
        };
        Ok(Self {
            params,
            settings,
            solver,
            alpha_gain: 1.0,
        })
    }

    pub fn params(&self) -> &RunParameters {
        &self.params
    }

    /// Treat the state as the physical state divided by `2^exponent`.
    /// Exact because `alpha` is positively homogeneous of degree `q - 1`.
    pub fn set_scale_exponent(&mut self, exponent: i32) {
        self.alpha_gain = (f64::from(exponent) * (self.params.law.q() - 2.0)).exp2();
    }

    /// Number of sparse LU factorizations performed so far (2D only).
    pub fn refactorizations(&self) -> usize {
        match &self.solver {
            CoupledSolver::Band => 0,
            CoupledSolver::Krylov(lu) => lu.refactorizations,
        }
    }

    fn residual(&self, prev: &State, x: &[f64], out: &mut [f64], lap: &mut [f64], tmp: &mut [f64]) {
        let p = &self.params;
        let g = &p.grid;
        let n = g.len();
        let dt = p.time.dt();
        let (u_prev, v_prev) = (prev.u.as_slice(), prev.v.as_slice());
        for i in 0..n {
            tmp[i] = x[2 * i];
        }
        g.laplacian_into(tmp, lap);
        for i in 0..n {
            let (u, v) = (x[2 * i], x[2 * i + 1]);
            let react = (u - self.alpha_gain * p.law.alpha(p.mu * u + v)) / p.eps;
            out[2 * i] = (u - u_prev[i]) / (p.mu * dt) - lap[i] + react;
            out[2 * i + 1] = -p.mu * react;
        }
        for i in 0..n {
            tmp[i] = x[2 * i + 1];
        }
        g.laplacian_into(tmp, lap);
        for i in 0..n {
            out[2 * i + 1] += p.xi * (x[2 * i + 1] - v_prev[i]) / dt - lap[i];
        }
    }

    fn solve_linear(&mut self, jac: &Jacobian<'_>, rhs: &[f64], out: &mut [f64]) -> Result<()> {
        match &mut self.solver {
            CoupledSolver::Band => {
                let mut band = BandMatrix::zeros(rhs.len(), 2, 2);
                jac.entries(|r, c, v| band.add(r, c, v));
                out.copy_from_slice(rhs);
                band.factor()?.solve_in_place(out);
                Ok(())
            }
            CoupledSolver::Krylov(stale) => {
                let n = jac.grid.len();
                let mut lap = vec![0.0; n];
                let mut tmp = vec![0.0; n];
                let assemble = || {
                    let mut trip = Vec::with_capacity(n * (4 + 4 * jac.grid.dim()));
                    jac.entries(|r, c, v| trip.push(Triplet::new(r, c, v)));
                    SparseColMat::try_new_from_triplets(2 * n, 2 * n, &trip)
                        .map_err(|e| Error::Linear(format!("jacobian assembly failed: {e:?}")))
                };
                if stale.lu.is_none() || stale.last_iterations > REFRESH_AFTER {
                    stale.refactor(&assemble()?)?;
                }
                let tol = self.settings.linear_tol;
                for attempt in 0..2 {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    let outcome = {
                        let stale_ref: &StaleLu = stale;
                        let mut apply = |x: &[f64], y: &mut [f64]| jac.apply(x, y, &mut lap, &mut tmp);
                        let mut precond = |x: &[f64], y: &mut [f64]| stale_ref.apply(x, y);
                        gmres(&mut apply, &mut precond, rhs, out, tol, KRYLOV_RESTART, KRYLOV_MAX_ITER)
                    };
                    stale.last_iterations = outcome.iterations;
                    if outcome.converged {
                        return Ok(());
                    }
                    debug!(
                        "GMRES stalled ({} its, residual {:e}); refactoring",
                        outcome.iterations, outcome.rel_residual
                    );
                    if attempt == 0 {
                        stale.refactor(&assemble()?)?;
                    }
                }
                Err(Error::Linear(format!(
                    "GMRES did not reach relative residual {tol:e} with a fresh preconditioner"
                )))
            }
        }
    }

    /// Advance one time step from `s`.
    pub fn step(&mut self, s: &State) -> Result<(State, StepReport)> {
        let p = self.params;
        let g = p.grid;
        g.check(&s.u)?;
        g.check(&s.v)?;
        let n = g.len();
        let step_index = s.n + 1;

        let mut x = vec![0.0; 2 * n];
        for i in 0..n {
            x[2 * i] = s.u.as_slice()[i];
            x[2 * i + 1] = s.v.as_slice()[i];
        }
        let mut f = vec![0.0; 2 * n];
        let mut delta = vec![0.0; 2 * n];
        let mut d = vec![0.0; n];
        let mut lap = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let mut report = StepReport::default();

        for iter in 1..=self.settings.max_iter {
            self.residual(s, &x, &mut f, &mut lap, &mut tmp);
            report
                .residuals
                .push(f.iter().map(|v| v * v).sum::<f64>().sqrt());
            for v in f.iter_mut() {
                *v = -*v;
            }
            for i in 0..n {
                d[i] = self.alpha_gain * p.law.alpha_prime(p.mu * x[2 * i] + x[2 * i + 1]);
            }
            let jac = Jacobian {
                grid: &g,
                d: &d,
                mu: p.mu,
                eps: p.eps,
                mass_u: 1.0 / (p.mu * p.time.dt()),
                mass_v: p.xi / p.time.dt(),
            };
            self.solve_linear(&jac, &f, &mut delta).map_err(|e| Error::Step {
                step: step_index,
                iterations: iter,
                reason: e.to_string(),
                residuals: report.residuals.clone(),
            })?;
            let mut inc = 0.0f64;
            for (xi, di) in x.iter_mut().zip(&delta) {
                *xi += di;
                inc = inc.max(di.abs());
            }
            report.iterations = iter;
            report.increments.push(inc);
            if !inc.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    step: step_index,
                    iterations: iter,
                });
            }
            if inc <= self.settings.tol_increment {
                let u = Field::from_vec(x.iter().step_by(2).copied().collect());
                let v = Field::from_vec(x.iter().skip(1).step_by(2).copied().collect());
                return Ok((State { u, v, n: step_index }, report));
            }
        }
        Err(Error::Step {
            step: step_index,
            iterations: self.settings.max_iter,
            reason: format!(
                "increment {:e} above tolerance {:e}",
                report.increments.last().copied().unwrap_or(f64::NAN),
                self.settings.tol_increment
            ),
            residuals: report.residuals,
        })
    }
}

/// One step of the relaxation scheme with a freshly built stepper.
pub fn step(s: &State, p: &RunParameters, ns: &NewtonSettings) -> Result<State> {
    Ok(Stepper::new(*p, *ns)?.step(s)?.0)
}

/// One observation handed to [`run`] observers.
pub struct Observation<'a> {
    pub n: usize,
    pub t: f64,
    pub state: &'a State,
    /// The physical state is `2^exponent * state`; always 0 for [`run`].
    pub exponent: i32,
    /// Newton record of the step that produced `state` (`None` at `n = 0`).
    pub report: Option<&'a StepReport>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub final_state: State,
    pub newton_iterations: usize,
    pub max_newton_iterations: usize,
    /// Steps whose last Newton increment exceeded `prev^1.5`.
    pub superlinear_violations: usize,
    pub refactorizations: usize,
    /// The physical final state is `2^final_exponent * final_state`.
    pub final_exponent: i32,
}

/// Warn when `mu * L_alpha >= 1` on the range allowed by the a-priori bounds.
/// Returns the product, or `None` when the bounds are undefined for this data.
pub fn check_monotonicity_hypothesis(p: &RunParameters, u0: &Field, v0: &Field) -> Option<f64> {
    let bounds = match LinfBounds::from_initial_data(u0, v0, p.mu, p.xi, &p.law) {
        Ok(b) => b,
        Err(e) => {
            warn!("no a-priori bound for this initial data ({e}); mu * L_alpha < 1 unchecked");
            return None;
        }
    };
    let z_bound = p.mu * bounds.u + bounds.v;
    let product = p.mu * p.law.lipschitz_on(z_bound);
    if product >= 1.0 {
        warn!(
            "mu * L_alpha = {product:.4} >= 1 on |z| <= {z_bound:.4}; \
             the monotone structure is not guaranteed for this data"
        );
    }
    Some(product)
}

/// Drive the scheme over the whole time grid. The observer sees every time
/// level, `n = 0` included.
pub fn run(
    p: &RunParameters,
    u0: Field,
    v0: Field,
    ns: &NewtonSettings,
    observer: impl FnMut(&Observation<'_>) -> Result<()>,
) -> Result<RunSummary> {
    drive(p, u0, v0, ns, false, observer)
}

/// As [`run`], but the state is renormalized by powers of two whenever it
/// becomes tiny, so long decays stay representable below the f64 range.
pub fn run_extended(
    p: &RunParameters,
    u0: Field,
    v0: Field,
    ns: &NewtonSettings,
    observer: impl FnMut(&Observation<'_>) -> Result<()>,
) -> Result<RunSummary> {
    drive(p, u0, v0, ns, true, observer)
}

fn drive(
    p: &RunParameters,
    u0: Field,
    v0: Field,
    ns: &NewtonSettings,
    rescale: bool,
    mut observer: impl FnMut(&Observation<'_>) -> Result<()>,
) -> Result<RunSummary> {
    p.grid.check(&u0)?;
    p.grid.check(&v0)?;
    check_monotonicity_hypothesis(p, &u0, &v0);
    let mut stepper = Stepper::new(*p, *ns)?;
    let mut state = State::new(u0, v0);
    let mut exponent = 0i32;
    observer(&Observation {
        n: 0,
        t: 0.0,
        state: &state,
        exponent,
        report: None,
    })?;
    let mut total = 0;
    let mut worst = 0;
    let mut violations = 0;
    for n in 0..p.time.n_steps() {
        let (mut next, report) = stepper.step(&state)?;
        total += report.iterations;
        worst = worst.max(report.iterations);
        if !report.is_superlinear() {
            violations += 1;
        }
        if rescale {
            let m = next.u.sup_norm().max(next.v.sup_norm());
            if m > 0.0 && m < RESCALE_BELOW {
                let k = -(m.log2().floor() as i32);
                let factor = f64::from(k).exp2();
                next.u = next.u.scaled(factor);
                next.v = next.v.scaled(factor);
                exponent -= k;
                stepper.set_scale_exponent(exponent);
            }
        }
        state = next;
        observer(&Observation {
            n: n + 1,
            t: p.time.time(n + 1),
            state: &state,
            exponent,
            report: Some(&report),
        })?;
    }
    Ok(RunSummary {
        final_state: state,
        newton_iterations: total,
        max_newton_iterations: worst,
        superlinear_violations: violations,
        refactorizations: stepper.refactorizations(),
        final_exponent: exponent,
    })
}

/// One step of the implicit fast-diffusion scheme
/// `(alpha(z+) - alpha(z)) / dt = Delta_h z+`, Newton from `z`.
pub fn step_fde(z: &Field, alpha_z_prev: &Field, p: &RunParameters, ns: &NewtonSettings) -> Result<Field> {
    let g = p.grid;
    g.check(z)?;
    g.check(alpha_z_prev)?;
    let n = g.len();
    let dt = p.time.dt();
    let inv_h2 = 1.0 / (g.h() * g.h());
    let mut x = z.as_slice().to_vec();
    let mut f = vec![0.0; n];
    let mut residuals = Vec::new();
    for iter in 1..=ns.max_iter {
        g.laplacian_into(&x, &mut f);
        for i in 0..n {
            f[i] = -((p.law.alpha(x[i]) - alpha_z_prev.as_slice()[i]) / dt - f[i]);
        }
        residuals.push(f.iter().map(|v| v * v).sum::<f64>().sqrt());
        let diag: Vec<f64> = x
            .iter()
            .map(|&xi| p.law.alpha_prime(xi) / dt - g.laplacian_diagonal())
            .collect();
        let delta = if g.dim() == 1 {
            let mut band = BandMatrix::zeros(n, 1, 1);
            for i in 0..n {
                band.add(i, i, diag[i]);
                for nb in g.neighbours(i) {
                    band.add(i, nb, -inv_h2);
                }
            }
            let mut out = f.clone();
            band.factor()?.solve_in_place(&mut out);
            out
        } else {
            let mut trip = Vec::with_capacity(5 * n);
            for i in 0..n {
                trip.push(Triplet::new(i, i, diag[i]));
                for nb in g.neighbours(i) {
                    trip.push(Triplet::new(i, nb, -inv_h2));
                }
            }
            let mat = SparseColMat::try_new_from_triplets(n, n, &trip)
                .map_err(|e| Error::Linear(format!("assembly failed: {e:?}")))?;
            let lu = mat
                .sp_lu()
                .map_err(|e| Error::Linear(format!("sparse LU failed: {e:?}")))?;
            let mut out = f.clone();
            lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut out, n, 1));
            out
        };
        let mut inc = 0.0f64;
        for (xi, di) in x.iter_mut().zip(&delta) {
            *xi += di;
            inc = inc.max(di.abs());
        }
        if !inc.is_finite() {
            return Err(Error::Divergence {
                step: 0,
                iterations: iter,
            });
        }
        if inc <= ns.tol_increment {
            return Ok(Field::from_vec(x));
        }
    }
    Err(Error::Step {
        step: 0,
        iterations: ns.max_iter,
        reason: "implicit fast-diffusion step did not converge".into(),
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(dim: usize, h: f64, dt: f64, eps: f64, xi: f64) -> RunParameters {
        RunParameters {
            law: PowerLaw::new(2.5).unwrap(),
            mu: 0.5,
            eps,
            xi,
            time: TimeGrid::with_steps(dt, 1),
            grid: Grid::new(dim, 1.0, h).unwrap(),
        }
    }

    fn random_state(g: &Grid, rng: &mut impl Rng) -> State {
        let u = Field::from_vec((0..g.len()).map(|_| rng.gen_range(0.0..1.0)).collect());
        let v = Field::from_vec((0..g.len()).map(|_| rng.gen_range(0.0..0.5)).collect());
        State::new(u, v)
    }

    #[test]
    fn zero_is_a_fixed_point() {
        for dim in [1, 2] {
            let p = params(dim, 0.1, 1e-3, 0.1, 0.1);
            let zero = State::new(p.grid.zeros(), p.grid.zeros());
            let next = step(&zero, &p, &NewtonSettings::default()).unwrap();
            assert_eq!(next.u, p.grid.zeros());
            assert_eq!(next.v, p.grid.zeros());
            let z = step_fde(&p.grid.zeros(), &p.grid.zeros(), &p, &NewtonSettings::default()).unwrap();
            assert_eq!(z, p.grid.zeros());
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut p = params(1, 0.1, 1e-3, 0.1, 0.1);
        p.eps = 0.0;
        assert!(matches!(p.validate(), Err(Error::Config(_))));
        p.eps = 0.1;
        p.xi = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn combined_equation_is_conservative() {
        // (u+ - u)/dt + xi (v+ - v)/dt = mu Delta u+ + Delta v+
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for dim in [1, 2] {
            for xi in [0.0, 0.05] {
                let p = params(dim, 0.1, 1e-3, 0.01, xi);
                let s = random_state(&p.grid, &mut rng);
                let next = step(&s, &p, &NewtonSettings::default()).unwrap();
                let lu = crate::grid::apply_laplacian(&next.u, &p.grid).unwrap();
                let lv = crate::grid::apply_laplacian(&next.v, &p.grid).unwrap();
                let dt = p.time.dt();
                for i in 0..p.grid.len() {
                    let lhs = (next.u.as_slice()[i] - s.u.as_slice()[i]) / dt
                        + xi * (next.v.as_slice()[i] - s.v.as_slice()[i]) / dt;
                    let rhs = p.mu * lu.as_slice()[i] + lv.as_slice()[i];
                    assert!((lhs - rhs).abs() < 1e-6 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
                }
            }
        }
    }

    #[test]
    fn reaction_residual_cases() {
        let p = params(1, 0.1, 1e-3, 0.1, 0.1);
        let zero = State::new(p.grid.zeros(), p.grid.zeros());
        assert_eq!(reaction_residual(&zero, &p).unwrap(), p.grid.zeros());
        let z0 = p.grid.field_from_fn(|x| (std::f64::consts::PI * x[0]).sin());
        let (u0, v0) = crate::stationary::initial_uv(&z0, p.mu, &p.law).unwrap();
        let r = reaction_residual(&State::new(u0, v0), &p).unwrap();
        assert!(r.sup_norm() < 1e-15);
    }

    #[test]
    fn superlinear_diagnostic() {
        let mut r = StepReport {
            iterations: 3,
            increments: vec![1e-2, 1e-4, 1e-7],
            residuals: vec![],
        };
        assert!(r.is_superlinear());
        r.increments = vec![1e-2, 5e-3];
        assert!(!r.is_superlinear());
        r.increments = vec![1e-9, 5e-14];
        assert!(r.is_superlinear());
    }
}
