//! Convergence, residual, extinction and asymptotic-preserving studies, and
//! the CSV artifacts they produce.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constitutive::PowerLaw;
use crate::error::{Error, Result};
use crate::grid::{self, fmt17, Field, Grid};
use crate::stationary::{self, exact_solution_at, ExactSolution, StationaryProfile};
use crate::stepper::{self, LinfBounds, NewtonSettings, RunParameters, State};

/// Ratio between the run mesh and the mesh of the stationary profile.
pub const PROFILE_REFINEMENT: usize = 10;
/// Smallest eps used by [`fit_order`] callers for the asymptotic slope.
pub const FIT_MIN_EPS: f64 = 1e-3;
pub const EXTINCTION_FIT_WINDOW: (f64, f64) = (0.4, 0.6);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XiMode {
    Zero,
    EqualEps,
}

impl XiMode {
    pub fn xi(self, eps: f64) -> f64 {
        match self {
            XiMode::Zero => 0.0,
            XiMode::EqualEps => eps,
        }
    }

    /// Stem of the error CSV, e.g. `L2_error_xi_eps_2d`.
    pub fn csv_stem(self, dim: usize) -> String {
        let mode = match self {
            XiMode::Zero => "0",
            XiMode::EqualEps => "eps",
        };
        if dim == 1 {
            format!("L2_error_xi_{mode}")
        } else {
            format!("L2_error_xi_{mode}_{dim}d")
        }
    }
}

pub fn default_eps_ladder(dim: usize) -> Vec<f64> {
    if dim == 1 {
        vec![1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3, 5e-4]
    } else {
        vec![1e-1, 5e-2, 1e-2, 5e-3, 1e-3]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub eps_values: Vec<f64>,
    pub xi_mode: XiMode,
    /// Template; its `eps` and `xi` are replaced per run.
    pub base: RunParameters,
    pub newton: NewtonSettings,
}

impl SweepConfig {
    pub fn dim(&self) -> usize {
        self.base.grid.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_values.is_empty() {
            return Err(Error::Config("eps_values is empty".into()));
        }
        if self.eps_values.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::Config("eps_values must be positive".into()));
        }
        if self.eps_values.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Config("eps_values must be strictly descending".into()));
        }
        self.newton.validate()?;
        let mut probe = self.base;
        probe.eps = self.eps_values[0];
        probe.xi = self.xi_mode.xi(probe.eps);
        probe.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorRecord {
    pub eps: f64,
    pub xi: f64,
    pub l2_error: f64,
}

/// Everything measured along one run of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct RunDiagnostics {
    pub eps: f64,
    pub xi: f64,
    /// Space-time `l2` distance to the exact solution.
    pub l2_error: f64,
    pub max_u: f64,
    pub max_v: f64,
    pub max_z: f64,
    pub bounds: LinfBounds,
    /// Squared space-time `l2` norm of `u - alpha(z)`.
    pub residual_sq: f64,
    /// `sum Phi_{alpha^-1}(u0) h^d + xi sum Phi_{eta^-1}(v0) h^d`.
    pub energy_constant: f64,
    pub max_newton_iterations: usize,
    pub superlinear_violations: usize,
}

impl RunDiagnostics {
    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            eps: self.eps,
            xi: self.xi,
            l2_error: self.l2_error,
        }
    }
}

/// Stationary profile on the refined mesh of `run_grid`.
pub fn fine_profile(run_grid: &Grid, law: &PowerLaw) -> Result<StationaryProfile> {
    let fine = Grid::with_intervals(
        run_grid.dim(),
        run_grid.length(),
        run_grid.intervals() * PROFILE_REFINEMENT,
    )?;
    stationary::solve_lane_emden(&fine, law, 1e-10, 50)
}

/// `sum Phi_{alpha^-1}(u0) h^d + xi sum Phi_{eta^-1}(v0) h^d`.
pub fn energy_constant(u0: &Field, v0: &Field, p: &RunParameters) -> Result<f64> {
    let vol = p.grid.cell_volume();
    let mut acc: f64 = u0
        .as_slice()
        .iter()
        .map(|&u| p.law.phi_alpha_inverse(u))
        .sum();
    if p.xi > 0.0 {
        let mut phi = 0.0;
        for &v in v0.as_slice() {
            phi += p.law.phi_eta_inverse(v, p.mu)?;
        }
        acc += p.xi * phi;
    }
    Ok(acc * vol)
}

/// Run the coupled scheme from the compatible data of `exact` and measure
/// the error, sup-norms and reaction residual.
pub fn measured_run(
    exact: &ExactSolution,
    p: &RunParameters,
    ns: &NewtonSettings,
) -> Result<RunDiagnostics> {
    let g = &p.grid;
    if exact.grid != *g {
        return Err(Error::Contract("exact solution lives on a different grid".into()));
    }
    let (u0, v0) = stationary::initial_uv(&exact.z0, p.mu, &p.law)?;
    let bounds = LinfBounds::from_initial_data(&u0, &v0, p.mu, p.xi, &p.law)?;
    let energy = energy_constant(&u0, &v0, p)?;
    let weight = g.cell_volume() * p.time.dt();
    let mut err_sq = 0.0;
    let mut res_sq = 0.0;
    let (mut max_u, mut max_v, mut max_z) = (0.0f64, 0.0f64, 0.0f64);
    let summary = stepper::run(p, u0, v0, ns, |obs| {
        let s = obs.state;
        let exact_z = exact_solution_at(exact, obs.t);
        let mut e = 0.0;
        let mut r = 0.0;
        for i in 0..g.len() {
            let (u, v) = (s.u.as_slice()[i], s.v.as_slice()[i]);
            let z = p.mu * u + v;
            e += (z - exact_z.as_slice()[i]).powi(2);
            r += (u - p.law.alpha(z)).powi(2);
            max_u = max_u.max(u.abs());
            max_v = max_v.max(v.abs());
            max_z = max_z.max(z.abs());
        }
        err_sq += e * weight;
        res_sq += r * weight;
        Ok(())
    })?;
    Ok(RunDiagnostics {
        eps: p.eps,
        xi: p.xi,
        l2_error: err_sq.sqrt(),
        max_u,
        max_v,
        max_z,
        bounds,
        residual_sq: res_sq,
        energy_constant: energy,
        max_newton_iterations: summary.max_newton_iterations,
        superlinear_violations: summary.superlinear_violations,
    })
}

/// Run every eps of the sweep (in parallel) and return the diagnostics in
/// descending eps order.
pub fn convergence_sweep(cfg: &SweepConfig, exact: &ExactSolution) -> Result<Vec<RunDiagnostics>> {
    cfg.validate()?;
    cfg.eps_values
        .par_iter()
        .map(|&eps| {
            let xi = cfg.xi_mode.xi(eps);
            let p = RunParameters { eps, xi, ..cfg.base };
            log::info!("sweep run eps = {eps:e}, xi = {xi:e}");
            measured_run(exact, &p, &cfg.newton).map_err(|e| Error::Sweep {
                eps,
                xi,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Least-squares slope of `log(l2_error)` against `log(eps)`.
pub fn fit_order(records: &[ErrorRecord]) -> Result<f64> {
    if records.len() < 3 {
        return Err(Error::Contract(format!(
            "fit_order needs at least 3 records, got {}",
            records.len()
        )));
    }
    let mut eps: Vec<f64> = records.iter().map(|r| r.eps).collect();
    eps.sort_by(f64::total_cmp);
    if eps.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Contract("fit_order needs distinct eps values".into()));
    }
    if records.iter().any(|r| !(r.eps > 0.0 && r.l2_error > 0.0)) {
        return Err(Error::Contract("fit_order needs positive eps and errors".into()));
    }
    let pts: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.eps.ln(), r.l2_error.ln()))
        .collect();
    Ok(linear_fit(&pts).slope)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares through `(x, y)` points.
pub fn linear_fit(pts: &[(f64, f64)]) -> LinearFit {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormSample {
    pub t: f64,
    /// May underflow to 0; `ln_lq_norm_discrete` keeps the full range.
    pub lq_norm_discrete: f64,
    pub ln_lq_norm_discrete: f64,
    pub lq_norm_exact: f64,
}

/// `l^q` norms of the discrete and exact solutions at every time level. The
/// run tracks the state's binary exponent, so the discrete norm is resolved
/// far below the smallest positive f64.
pub fn extinction_study(
    exact: &ExactSolution,
    p: &RunParameters,
    ns: &NewtonSettings,
) -> Result<Vec<NormSample>> {
    let (u0, v0) = stationary::initial_uv(&exact.z0, p.mu, &p.law)?;
    let q = p.law.q();
    let mut samples = Vec::with_capacity(p.time.n_steps() + 1);
    stepper::run_extended(p, u0, v0, ns, |obs| {
        let z = obs.state.z(p.mu);
        let shift = f64::from(obs.exponent) * std::f64::consts::LN_2;
        let ln_norm = grid::ln_lq_norm(&z, &p.grid, q)? + shift;
        let lq_norm_discrete = if obs.exponent == 0 {
            grid::lq_norm(&z, &p.grid, q)?
        } else {
            ln_norm.exp()
        };
        samples.push(NormSample {
            t: obs.t,
            lq_norm_discrete,
            ln_lq_norm_discrete: ln_norm,
            lq_norm_exact: grid::lq_norm(&exact_solution_at(exact, obs.t), &p.grid, q)?,
        });
        Ok(())
    })?;
    Ok(samples)
}

/// Fit `log(norm) = a + b t` over samples with `t` in `[t0, t1]`.
pub fn log_linear_fit(samples: &[NormSample], window: (f64, f64)) -> Result<LinearFit> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.t >= window.0 - 1e-12 && s.t <= window.1 + 1e-12)
        .map(|s| (s.t, s.ln_lq_norm_discrete))
        .collect();
    if pts.len() < 3 || pts.iter().any(|p| !p.1.is_finite()) {
        return Err(Error::Contract(format!(
            "log-linear fit needs at least 3 positive samples in [{}, {}]",
            window.0, window.1
        )));
    }
    Ok(linear_fit(&pts))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualRecord {
    pub eps: f64,
    pub xi: f64,
    pub residual_sq: f64,
    /// `residual_sq / eps`.
    pub ratio: f64,
    pub energy_constant: f64,
}

impl From<&RunDiagnostics> for ResidualRecord {
    fn from(d: &RunDiagnostics) -> Self {
        Self {
            eps: d.eps,
            xi: d.xi,
            residual_sq: d.residual_sq,
            ratio: d.residual_sq / d.eps,
            energy_constant: d.energy_constant,
        }
    }
}

/// Space-time norm of the reaction residual along a sweep.
pub fn residual_study(cfg: &SweepConfig, exact: &ExactSolution) -> Result<Vec<ResidualRecord>> {
    Ok(convergence_sweep(cfg, exact)?
        .iter()
        .map(ResidualRecord::from)
        .collect())
}

/// Largest sup-norm gap between `z = mu u + v` of the coupled scheme and the
/// implicit fast-diffusion scheme started from the same `z0`.
pub fn ap_check(z0: &Field, p: &RunParameters, ns: &NewtonSettings) -> Result<f64> {
    let (u0, v0) = stationary::initial_uv(z0, p.mu, &p.law)?;
    let mut z_fde = z0.clone();
    let mut worst = 0.0f64;
    stepper::run(p, u0, v0, ns, |obs| {
        if obs.n > 0 {
            let alpha_prev = z_fde.map(|z| p.law.alpha(z));
            z_fde = stepper::step_fde(&z_fde, &alpha_prev, p, ns)?;
        }
        let z = obs.state.z(p.mu);
        let gap = z
            .as_slice()
            .iter()
            .zip(z_fde.as_slice())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(gap);
        Ok(())
    })?;
    Ok(worst)
}

/// Compatible initial state for `z0`.
pub fn initial_state(z0: &Field, p: &RunParameters) -> Result<State> {
    let (u0, v0) = stationary::initial_uv(z0, p.mu, &p.law)?;
    Ok(State::new(u0, v0))
}

pub fn write_error_csv<W: Write>(mut w: W, records: &[ErrorRecord]) -> Result<()> {
    let mut out = String::from("eps,L2_error\n");
    for r in records {
        out.push_str(&format!("{},{}\n", fmt17(r.eps), fmt17(r.l2_error)));
    }
    w.write_all(out.as_bytes())
        .map_err(|e| Error::io("<error csv>", e))
}

pub fn read_error_csv<R: BufRead>(r: R, xi_mode: XiMode) -> Result<Vec<ErrorRecord>> {
    read_pairs(r, "eps,L2_error")?
        .into_iter()
        .map(|(eps, l2_error)| {
            Ok(ErrorRecord {
                eps,
                xi: xi_mode.xi(eps),
                l2_error,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormColumn {
    Discrete,
    Exact,
}

pub fn write_norm_csv<W: Write>(mut w: W, samples: &[NormSample], column: NormColumn) -> Result<()> {
    let mut out = String::from("t,Lq_norm\n");
    for s in samples {
        let v = match column {
            NormColumn::Discrete if s.lq_norm_discrete < f64::MIN_POSITIVE => {
                fmt_from_ln(s.ln_lq_norm_discrete)
            }
            NormColumn::Discrete => fmt17(s.lq_norm_discrete),
            NormColumn::Exact => fmt17(s.lq_norm_exact),
        };
        out.push_str(&format!("{},{v}\n", fmt17(s.t)));
    }
    w.write_all(out.as_bytes())
        .map_err(|e| Error::io("<norm csv>", e))
}

/// `exp(ln)` in the 17-digit scientific format, also outside the f64 range.
pub fn fmt_from_ln(ln: f64) -> String {
    if ln == f64::NEG_INFINITY {
        return fmt17(0.0);
    }
    let mut e10 = (ln / std::f64::consts::LN_10).floor();
    let mut mantissa = (ln - e10 * std::f64::consts::LN_10).exp();
    if mantissa >= 10.0 {
        mantissa /= 10.0;
        e10 += 1.0;
    }
    format!("{mantissa:.16}e{e10}")
}

/// `(t, Lq_norm)` rows. Values below the f64 range parse as 0.
pub fn read_norm_csv<R: BufRead>(r: R) -> Result<Vec<(f64, f64)>> {
    read_pairs(r, "t,Lq_norm")
}

fn read_pairs<R: BufRead>(r: R, header: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == header => {}
        other => {
            return Err(Error::Contract(format!(
                "expected CSV header `{header}`, found {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io("<csv>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |s: Option<&str>| -> Result<f64> {
            s.and_then(|x| x.trim().parse().ok())
                .ok_or_else(|| Error::Contract(format!("malformed CSV row {}: `{line}`", k + 2)))
        };
        let mut cols = line.split(',');
        let a = parse(cols.next())?;
        let b = parse(cols.next())?;
        rows.push((a, b));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use proptest::prelude::*;

    fn synthetic(f: impl Fn(f64) -> f64) -> Vec<ErrorRecord> {
        default_eps_ladder(1)
            .into_iter()
            .map(|eps| ErrorRecord {
                eps,
                xi: 0.0,
                l2_error: f(eps),
            })
            .collect()
    }

    #[test]
    fn fit_order_examples() {
        assert!((fit_order(&synthetic(|e| e)).unwrap() - 1.0).abs() < 1e-12);
        assert!((fit_order(&synthetic(|e| 10.0 * e)).unwrap() - 1.0).abs() < 1e-12);
        assert!((fit_order(&synthetic(f64::sqrt)).unwrap() - 0.5).abs() < 1e-12);
        let short = &synthetic(|e| e)[..2];
        assert!(matches!(fit_order(short), Err(Error::Contract(_))));
        let mut dup = synthetic(|e| e);
        dup[1].eps = dup[0].eps;
        assert!(fit_order(&dup).is_err());
    }

    #[test]
    fn linear_fit_reports_r_squared() {
        let fit = linear_fit(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]);
        assert!((fit.slope - 2.0).abs() < 1e-15);
        assert!((fit.intercept - 1.0).abs() < 1e-15);
        assert!((fit.r_squared - 1.0).abs() < 1e-15);
        let noisy = linear_fit(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]);
        assert!(noisy.r_squared < 0.5);
    }

    #[test]
    fn csv_names() {
        assert_eq!(XiMode::Zero.csv_stem(1), "L2_error_xi_0");
        assert_eq!(XiMode::EqualEps.csv_stem(1), "L2_error_xi_eps");
        assert_eq!(XiMode::EqualEps.csv_stem(2), "L2_error_xi_eps_2d");
    }

    #[test]
    fn sweep_config_validation() {
        let base = RunParameters {
            law: PowerLaw::new(2.5).unwrap(),
            mu: 0.5,
            eps: 1.0,
            xi: 0.0,
            time: TimeGrid::with_steps(1e-3, 1),
            grid: Grid::new(1, 1.0, 0.1).unwrap(),
        };
        let mut cfg = SweepConfig {
            eps_values: vec![0.1, 0.01],
            xi_mode: XiMode::Zero,
            base,
            newton: NewtonSettings::default(),
        };
        assert!(cfg.validate().is_ok());
        cfg.eps_values = vec![0.01, 0.1];
        assert!(cfg.validate().is_err());
        cfg.eps_values = vec![0.1, -0.01];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn tiny_norms_are_written_from_their_logarithm() {
        let ln = -1000.0 * std::f64::consts::LN_10 + 2.5f64.ln();
        let text = fmt_from_ln(ln);
        let (mantissa, exp) = text.split_once('e').unwrap();
        assert_eq!(exp, "-1000");
        // ln carries ~1e-13 absolute error at this magnitude
        assert!((mantissa.parse::<f64>().unwrap() - 2.5).abs() < 1e-11, "{text}");
        assert_eq!(fmt_from_ln(f64::NEG_INFINITY), fmt17(0.0));
        let s = NormSample {
            t: 0.5,
            lq_norm_discrete: 0.0,
            ln_lq_norm_discrete: ln,
            lq_norm_exact: 0.0,
        };
        let mut buf = Vec::new();
        write_norm_csv(&mut buf, &[s], NormColumn::Discrete).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,Lq_norm\n") && text.trim_end().ends_with("e-1000"), "{text}");
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(read_norm_csv("t,wrong\n".as_bytes()).is_err());
        assert!(read_norm_csv("t,Lq_norm\n1.0,abc\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn error_csv_round_trip(vals in proptest::collection::vec((1e-12f64..1e3, 0.0f64..1e3), 0..20)) {
            let records: Vec<ErrorRecord> = vals
                .iter()
                .map(|&(eps, l2_error)| ErrorRecord { eps, xi: eps, l2_error })
                .collect();
            let mut buf = Vec::new();
            write_error_csv(&mut buf, &records).unwrap();
            let back = read_error_csv(buf.as_slice(), XiMode::EqualEps).unwrap();
            prop_assert_eq!(back, records);
        }

        #[test]
        fn norm_csv_round_trip(vals in proptest::collection::vec((0.0f64..1.0, 0.0f64..10.0), 0..20)) {
            let samples: Vec<NormSample> = vals
                .iter()
                .map(|&(t, n)| NormSample { t, lq_norm_discrete: n, ln_lq_norm_discrete: n.ln(), lq_norm_exact: 0.5 * n })
                .collect();
            let mut buf = Vec::new();
            write_norm_csv(&mut buf, &samples, NormColumn::Exact).unwrap();
            let back = read_norm_csv(buf.as_slice()).unwrap();
            for (s, (t, n)) in samples.iter().zip(back) {
                prop_assert_eq!(s.t.to_bits(), t.to_bits());
                prop_assert_eq!(s.lq_norm_exact.to_bits(), n.to_bits());
            }
        }
    }
}
