//! Flat TOML configuration shared by all commands.
//!
//! Every key is optional; missing keys take command- and dimension-dependent
//! defaults. `key=value` overrides are applied on top of the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constitutive::PowerLaw;
use crate::error::{Error, Result};
use crate::experiments::{self, SweepConfig, XiMode};
use crate::grid::{Grid, TimeGrid};
use crate::stepper::{NewtonSettings, RunParameters};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Stationary,
    Run,
    Sweep,
    Extinction,
    ApCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Stationary => "stationary",
            Command::Run => "run",
            Command::Sweep => "sweep",
            Command::Extinction => "extinction",
            Command::ApCheck => "apcheck",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepModes {
    Zero,
    EqualEps,
    Both,
}

impl SweepModes {
    pub fn modes(self) -> Vec<XiMode> {
        match self {
            SweepModes::Zero => vec![XiMode::Zero],
            SweepModes::EqualEps => vec![XiMode::EqualEps],
            SweepModes::Both => vec![XiMode::Zero, XiMode::EqualEps],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialData {
    /// Compatible data built from the stationary profile.
    Profile,
    Zero,
}

/// Configuration file as written by the user.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    dim: Option<usize>,
    length: Option<f64>,
    q: Option<f64>,
    mu: Option<f64>,
    eps: Option<f64>,
    xi: Option<f64>,
    h: Option<f64>,
    dt: Option<f64>,
    t_final: Option<f64>,
    eps_values: Option<Vec<f64>>,
    xi_mode: Option<SweepModes>,
    newton_tol: Option<f64>,
    newton_max_iter: Option<usize>,
    linear_tol: Option<f64>,
    stationary_tol: Option<f64>,
    stationary_max_iter: Option<usize>,
    initial: Option<InitialData>,
    snapshot_times: Option<Vec<f64>>,
    out_dir: Option<PathBuf>,
}

/// Fully resolved configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Config {
    pub dim: usize,
    pub length: f64,
    pub q: f64,
    pub mu: f64,
    pub eps: f64,
    pub xi: f64,
    pub h: f64,
    pub dt: f64,
    pub t_final: f64,
    pub eps_values: Vec<f64>,
    pub xi_mode: SweepModes,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub linear_tol: f64,
    pub stationary_tol: f64,
    pub stationary_max_iter: usize,
    pub initial: InitialData,
    pub snapshot_times: Vec<f64>,
    pub out_dir: PathBuf,
}

fn parse_override(item: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not of the form key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}

impl Config {
    /// Read `path` (if any), apply overrides, fill defaults for `cmd`, validate.
    pub fn load(path: Option<&Path>, overrides: &[String], cmd: Command) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            let (key, value) = parse_override(item)?;
            table.insert(key, value);
        }
        Self::from_table(table, cmd)
    }

    pub fn from_table(table: toml::Table, cmd: Command) -> Result<Self> {
        let file: ConfigFile = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let dim = file.dim.unwrap_or(1);
        let two_d = dim == 2;
        let (eps, h, dt, t_final) = match cmd {
            Command::ApCheck => (1e-8, 0.05, 1e-3, 0.1),
            _ => (1e-4, 1e-2, 1e-4, if two_d { 0.18 } else { 0.6 }),
        };
        let cfg = Config {
            dim,
            length: file.length.unwrap_or(1.0),
            q: file.q.unwrap_or(2.5),
            mu: file.mu.unwrap_or(if two_d { 0.4 } else { 0.5 }),
            eps: file.eps.unwrap_or(eps),
            xi: file.xi.unwrap_or(eps),
            h: file.h.unwrap_or(h),
            dt: file.dt.unwrap_or(dt),
            t_final: file.t_final.unwrap_or(t_final),
            eps_values: file
                .eps_values
                .unwrap_or_else(|| experiments::default_eps_ladder(dim)),
            xi_mode: file.xi_mode.unwrap_or(SweepModes::Both),
            newton_tol: file.newton_tol.unwrap_or(NewtonSettings::default().tol_increment),
            newton_max_iter: file.newton_max_iter.unwrap_or(NewtonSettings::default().max_iter),
            linear_tol: file.linear_tol.unwrap_or(NewtonSettings::default().linear_tol),
            stationary_tol: file.stationary_tol.unwrap_or(1e-10),
            stationary_max_iter: file.stationary_max_iter.unwrap_or(50),
            initial: file.initial.unwrap_or(InitialData::Profile),
            snapshot_times: file.snapshot_times.unwrap_or_default(),
            out_dir: file.out_dir.unwrap_or_else(|| PathBuf::from("out")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dim == 1 || self.dim == 2) {
            return Err(Error::Config(format!("dim must be 1 or 2, got {}", self.dim)));
        }
        PowerLaw::new(self.q).map_err(|e| Error::Config(format!("q: {e}")))?;
        self.grid()?;
        self.time_grid()?;
        self.run_parameters()?.validate()?;
        self.newton().validate()?;
        if !(self.stationary_tol > 0.0) || self.stationary_max_iter == 0 {
            return Err(Error::Config("stationary_tol and stationary_max_iter must be positive".into()));
        }
        if let Some(t) = self
            .snapshot_times
            .iter()
            .find(|t| !(**t >= 0.0 && **t <= self.t_final))
        {
            return Err(Error::Config(format!("snapshot time {t} outside [0, t_final]")));
        }
        Ok(())
    }

    pub fn law(&self) -> PowerLaw {
        PowerLaw::new(self.q).expect("validated")
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.length, self.h).map_err(|e| Error::Config(format!("length/h: {e}")))
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.dt, self.t_final).map_err(|e| Error::Config(format!("t_final/dt: {e}")))
    }

    pub fn run_parameters(&self) -> Result<RunParameters> {
        Ok(RunParameters {
            law: PowerLaw::new(self.q).map_err(|e| Error::Config(format!("q: {e}")))?,
            mu: self.mu,
            eps: self.eps,
            xi: self.xi,
            time: self.time_grid()?,
            grid: self.grid()?,
        })
    }

    pub fn newton(&self) -> NewtonSettings {
        NewtonSettings {
            tol_increment: self.newton_tol,
            max_iter: self.newton_max_iter,
            linear_tol: self.linear_tol,
        }
    }

    pub fn sweep_config(&self, mode: XiMode) -> Result<SweepConfig> {
        let cfg = SweepConfig {
            eps_values: self.eps_values.clone(),
            xi_mode: mode,
            base: self.run_parameters()?,
            newton: self.newton(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
