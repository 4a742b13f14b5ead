//! Command implementations behind the `fde-relax` binary.
//!
//! Each command writes into `<out_dir>/<command>/`: a `config.toml` echo of
//! the resolved configuration plus its artifacts. File names depend only on
//! the command, so reruns overwrite the same files with identical bytes.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use crate::config::{Command, Config, InitialData};
use crate::error::{Error, Result};
use crate::experiments::{self, NormColumn, EXTINCTION_FIT_WINDOW, FIT_MIN_EPS, PROFILE_REFINEMENT};
use crate::grid::{self, fmt17, Field, Grid};
use crate::stationary::{self, ExactSolution, StationaryProfile};
use crate::stepper;

/// Files written and lines to report.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
}

impl Outcome {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }
}

pub fn execute(cmd: Command, cfg: &Config) -> Result<Outcome> {
    cfg.validate()?;
    let dir = cfg.out_dir.join(cmd.name());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut out = Outcome {
        dir,
        ..Outcome::default()
    };
    out.write("config.toml", cfg.to_toml().as_bytes())?;
    match cmd {
        Command::Stationary => cmd_stationary(cfg, &mut out)?,
        Command::Run => cmd_run(cfg, &mut out)?,
        Command::Sweep => cmd_sweep(cfg, &mut out)?,
        Command::Extinction => cmd_extinction(cfg, &mut out)?,
        Command::ApCheck => cmd_apcheck(cfg, &mut out)?,
    }
    Ok(out)
}

fn profile(cfg: &Config) -> Result<StationaryProfile> {
    let run_grid = cfg.grid()?;
    let fine = Grid::with_intervals(
        cfg.dim,
        cfg.length,
        run_grid.intervals() * PROFILE_REFINEMENT,
    )?;
    stationary::solve_lane_emden(&fine, &cfg.law(), cfg.stationary_tol, cfg.stationary_max_iter)
}

fn exact(cfg: &Config) -> Result<ExactSolution> {
    profile(cfg)?.exact_solution(&cfg.grid()?)
}

fn field_csv(g: &Grid, f: &Field, name: &str) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    grid::write_field_csv(&mut buf, g, f, name).map_err(|e| Error::io("<field csv>", e))?;
    Ok(buf)
}

fn cmd_stationary(cfg: &Config, out: &mut Outcome) -> Result<()> {
    let p = profile(cfg)?;
    out.write("profile.csv", &field_csv(&p.grid, &p.z0, "z0")?)?;
    let meta = format!(
        "dim = {}\nq = {}\nh = {}\nc = {}\nt_star = {}\nrelative_residual = {}\niterations = {}\n",
        p.grid.dim(),
        p.law.q(),
        p.grid.h(),
        fmt17(p.c),
        fmt17(p.t_star()),
        fmt17(p.relative_residual),
        p.iterations
    );
    out.write("profile_meta.toml", meta.as_bytes())?;
    out.lines.push(format!("T* = {:.6}", p.t_star()));
    out.lines.push(format!("c = {:.6}", p.c));
    out.lines.push(format!("relative residual = {:.3e}", p.relative_residual));
    out.lines.push(format!("Newton iterations = {}", p.iterations));
    Ok(())
}

fn cmd_run(cfg: &Config, out: &mut Outcome) -> Result<()> {
    let p = cfg.run_parameters()?;
    let g = p.grid;
    let (u0, v0) = match cfg.initial {
        InitialData::Profile => stationary::initial_uv(&exact(cfg)?.z0, p.mu, &p.law)?,
        InitialData::Zero => (g.zeros(), g.zeros()),
    };
    let snapshot_steps: Vec<usize> = cfg
        .snapshot_times
        .iter()
        .map(|t| (t / p.time.dt()).round() as usize)
        .collect();
    let mut norms = String::from("t,Lq_norm\n");
    let mut snapshots = Vec::new();
    let summary = stepper::run(&p, u0, v0, &cfg.newton(), |obs| {
        let z = obs.state.z(p.mu);
        let norm = grid::lq_norm(&z, &g, p.law.q())?;
        norms.push_str(&format!("{},{}\n", fmt17(obs.t), fmt17(norm)));
        if snapshot_steps.contains(&obs.n) {
            snapshots.push((obs.n, field_csv(&g, &z, "value")?));
        }
        Ok(())
    })?;
    out.write("Lq_norm.csv", norms.as_bytes())?;
    for (n, bytes) in snapshots {
        out.write(&format!("snapshot_n{n:07}.csv"), &bytes)?;
    }
    let final_norm = grid::lq_norm(&summary.final_state.z(p.mu), &g, p.law.q())?;
    let text = format!(
        "steps = {}\nnewton_iterations = {}\nmax_newton_iterations = {}\nsuperlinear_violations = {}\nfinal_lq_norm = {}\n",
        p.time.n_steps(),
        summary.newton_iterations,
        summary.max_newton_iterations,
        summary.superlinear_violations,
        fmt17(final_norm)
    );
    out.write("summary.toml", text.as_bytes())?;
    out.lines.push(format!("steps = {}", p.time.n_steps()));
    out.lines.push(format!("final l^q norm = {final_norm:.6e}"));
    out.lines.push(format!(
        "Newton iterations: total {}, max per step {}",
        summary.newton_iterations, summary.max_newton_iterations
    ));
    Ok(())
}

fn cmd_sweep(cfg: &Config, out: &mut Outcome) -> Result<()> {
    let exact = exact(cfg)?;
    for mode in cfg.xi_mode.modes() {
        let sweep = cfg.sweep_config(mode)?;
        let diags = experiments::convergence_sweep(&sweep, &exact)?;
        let records: Vec<_> = diags.iter().map(|d| d.record()).collect();
        let stem = mode.csv_stem(cfg.dim);
        let mut buf = Vec::new();
        experiments::write_error_csv(&mut buf, &records)?;
        out.write(&format!("{stem}.csv"), &buf)?;
        out.write(&format!("diagnostics_{stem}.csv"), diagnostics_csv(&diags).as_bytes())?;
        let window: Vec<_> = records.iter().copied().filter(|r| r.eps >= FIT_MIN_EPS).collect();
        let slope = match experiments::fit_order(&window) {
            Ok(s) => format!("{s:.4}"),
            Err(_) => "n/a (fewer than 3 eps >= 1e-3)".into(),
        };
        out.lines.push(format!("{stem}: fitted order = {slope}"));
    }
    Ok(())
}

fn diagnostics_csv(diags: &[experiments::RunDiagnostics]) -> String {
    let mut s = String::from(
        "eps,xi,L2_error,max_u,max_v,bound_u,bound_v,residual_sq,energy_constant,max_newton_iterations\n",
    );
    for d in diags {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            fmt17(d.eps),
            fmt17(d.xi),
            fmt17(d.l2_error),
            fmt17(d.max_u),
            fmt17(d.max_v),
            fmt17(d.bounds.u),
            fmt17(d.bounds.v),
            fmt17(d.residual_sq),
            fmt17(d.energy_constant),
            d.max_newton_iterations
        ));
    }
    s
}

fn cmd_extinction(cfg: &Config, out: &mut Outcome) -> Result<()> {
    let exact = exact(cfg)?;
    let p = cfg.run_parameters()?;
    let samples = experiments::extinction_study(&exact, &p, &cfg.newton())?;
    for (name, column) in [("Lq_norm.csv", NormColumn::Discrete), ("Lq_norm_true.csv", NormColumn::Exact)] {
        let mut buf = Vec::new();
        experiments::write_norm_csv(&mut buf, &samples, column)?;
        out.write(name, &buf)?;
    }
    let min_ln = samples
        .iter()
        .map(|s| s.ln_lq_norm_discrete)
        .fold(f64::INFINITY, f64::min);
    out.lines.push(format!("T* = {:.6}", exact.t_star));
    out.lines.push(format!(
        "min discrete l^q norm = {}",
        experiments::fmt_from_ln(min_ln)
    ));
    match experiments::log_linear_fit(&samples, EXTINCTION_FIT_WINDOW) {
        Ok(fit) => out.lines.push(format!(
            "log-norm slope on [{}, {}] = {:.4}, R^2 = {:.6}",
            EXTINCTION_FIT_WINDOW.0, EXTINCTION_FIT_WINDOW.1, fit.slope, fit.r_squared
        )),
        Err(e) => out.lines.push(format!("no log-linear fit: {e}")),
    }
    Ok(())
}

fn cmd_apcheck(cfg: &Config, out: &mut Outcome) -> Result<()> {
    let p = cfg.run_parameters()?;
    let z0 = match cfg.initial {
        InitialData::Profile => exact(cfg)?.z0,
        InitialData::Zero => p.grid.zeros(),
    };
    let gap = experiments::ap_check(&z0, &p, &cfg.newton())?;
    out.write("apcheck.toml", format!("discrepancy = {}\n", fmt17(gap)).as_bytes())?;
    out.lines.push(format!("max sup-norm discrepancy = {gap:.3e}"));
    Ok(())
}

/// Print the outcome lines followed by the output directory.
pub fn report(out: &Outcome, mut w: impl Write) -> std::io::Result<()> {
    for line in &out.lines {
        writeln!(w, "{line}")?;
    }
    writeln!(w, "wrote {} files to {}", out.files.len(), out.dir.display())
}
