//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use dqs_core::lattice::{DEFAULT_COUPLING, DEFAULT_SPACING_NM};
use dqs_core::meanfield::Control;
use dqs_core::operators::NV_GYROMAGNETIC;
use dqs_core::{LatticeSpec, ModelParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::table::fmt;

pub const EXACT_LIMIT: usize = 10;
pub const NULLSPACE_LIMIT: usize = 6;
pub const TRAJECTORY_LIMIT: usize = 24;

/// Every accepted key, in the order used when a config is written back.
pub const KEYS: &[&str] = &[
    "solver",
    "nx",
    "ny",
    "nz",
    "spacing_nm",
    "V_radMHz",
    "delta_radMHz",
    "omega_radMHz",
    "gamma_radMHz",
    "t2_inv_radMHz",
    "gradient_Tm",
    "gyromagnetic_radMHz_per_T",
    "n_traj",
    "seed",
    "dt",
    "t_burn_in",
    "t_average",
    "control",
    "start",
    "stop",
    "points",
    "output",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Exact,
    Nullspace,
    Trajectory,
    Meanfield,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Nullspace => "nullspace",
            Self::Trajectory => "trajectory",
            Self::Meanfield => "meanfield",
        }
    }

    fn site_limit(self) -> Option<usize> {
        match self {
            Self::Exact => Some(EXACT_LIMIT),
            Self::Nullspace => Some(NULLSPACE_LIMIT),
            Self::Trajectory => Some(TRAJECTORY_LIMIT),
            Self::Meanfield => None,
        }
    }
}

impl FromStr for Solver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(Self::Exact),
            "nullspace" => Ok(Self::Nullspace),
            "trajectory" => Ok(Self::Trajectory),
            "meanfield" => Ok(Self::Meanfield),
            _ => Err(format!(
                "unknown solver `{s}` (exact, nullspace, trajectory, meanfield)"
            )),
        }
    }
}

pub fn control_name(c: Control) -> &'static str {
    match c {
        Control::Omega => "omega",
        Control::Field => "field",
    }
}

fn parse_control(s: &str) -> Result<Option<Control>, String> {
    match s {
        "none" => Ok(None),
        "omega" => Ok(Some(Control::Omega)),
        "field" => Ok(Some(Control::Field)),
        _ => Err(format!("unknown control `{s}` (none, omega, field)")),
    }
}

/// A run configuration. `dt`, `t_burn_in` and `t_average` may be left
/// unset and are then derived from the rates by [`RunConfig::resolve`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub solver: Option<Solver>,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub spacing_nm: f64,
    pub coupling: f64,
    pub delta: f64,
    pub omega: f64,
    pub gamma: f64,
    pub t2_inverse: f64,
    pub gradient_tm: f64,
    pub gyromagnetic: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub dt: Option<f64>,
    pub t_burn_in: Option<f64>,
    pub t_average: Option<f64>,
    pub control: Option<Control>,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            solver: None,
            nx: 1,
            ny: 1,
            nz: 1,
            spacing_nm: DEFAULT_SPACING_NM,
            coupling: DEFAULT_COUPLING,
            delta: 0.0,
            omega: 0.0,
            gamma: 1.0,
            t2_inverse: 0.0,
            gradient_tm: 0.0,
            gyromagnetic: NV_GYROMAGNETIC,
            n_traj: 1000,
            seed: 0,
            dt: None,
            t_burn_in: None,
            t_average: None,
            control: None,
            start: 0.0,
            stop: 0.0,
            points: 1,
            output: PathBuf::from("sweep.csv"),
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse `{value}` for `{key}`"))
}

fn auto(key: &str, value: &str) -> Result<Option<f64>, String> {
    if value == "auto" {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| CliError::Config(format!("line {}: {msg}", i + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(at(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value).map_err(at)?;
            seen.push(key);
        }
        Ok(cfg)
    }

    /// Applies a `key=value` override from the command line.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), CliError> {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{kv}` is not key=value")))?;
        self.set(key.trim(), value.trim())
            .map_err(|e| CliError::Config(format!("override `{kv}`: {e}")))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "solver" => self.solver = Some(value.parse()?),
            "nx" => self.nx = num(key, value)?,
            "ny" => self.ny = num(key, value)?,
            "nz" => self.nz = num(key, value)?,
            "spacing_nm" => self.spacing_nm = num(key, value)?,
            "V_radMHz" => self.coupling = num(key, value)?,
            "delta_radMHz" => self.delta = num(key, value)?,
            "omega_radMHz" => self.omega = num(key, value)?,
            "gamma_radMHz" => self.gamma = num(key, value)?,
            "t2_inv_radMHz" => self.t2_inverse = num(key, value)?,
            "gradient_Tm" => self.gradient_tm = num(key, value)?,
            "gyromagnetic_radMHz_per_T" => self.gyromagnetic = num(key, value)?,
            "n_traj" => self.n_traj = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "dt" => self.dt = auto(key, value)?,
            "t_burn_in" => self.t_burn_in = auto(key, value)?,
            "t_average" => self.t_average = auto(key, value)?,
            "control" => self.control = parse_control(value)?,
            "start" => self.start = num(key, value)?,
            "stop" => self.stop = num(key, value)?,
            "points" => self.points = num(key, value)?,
            "output" => {
                if value.is_empty() {
                    return Err("empty output path".into());
                }
                self.output = PathBuf::from(value)
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn lattice_spec(&self) -> LatticeSpec {
        if self.nz == 1 {
            LatticeSpec {
                spacing_nm: self.spacing_nm,
                ..LatticeSpec::planar(self.nx, self.ny)
            }
        } else {
            LatticeSpec {
                spacing_nm: self.spacing_nm,
                ..LatticeSpec::slab(self.nx, self.ny, self.nz)
            }
        }
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            delta: self.delta,
            omega: self.omega,
            gamma: self.gamma,
            coupling: self.coupling,
            t2_inverse: self.t2_inverse,
            gradient_tm: self.gradient_tm,
            gyromagnetic: self.gyromagnetic,
        }
    }

    pub fn solver(&self) -> Result<Solver, CliError> {
        self.solver.ok_or_else(|| CliError::Config("no solver given".into()))
    }

    /// Control values of the sweep; a single point at the configured
    /// parameters when no control is set.
    pub fn grid(&self) -> Vec<f64> {
        match self.control {
            None => vec![self.omega],
            Some(_) if self.points == 1 => vec![self.start],
            Some(_) => (0..self.points)
                .map(|i| {
                    let n = (self.points - 1) as f64;
                    (self.start * (n - i as f64) + self.stop * i as f64) / n
                })
                .collect(),
        }
    }

    /// Checks ranges and solver size limits, and fills in the derived
    /// trajectory settings.
    pub fn resolve(&self) -> Result<Self, CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let solver = self.solver()?;
        let spec = self.lattice_spec();
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.params().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(limit) = solver.site_limit() {
            if spec.n_sites() > limit {
                return bad(format!(
                    "{} solver handles at most {limit} spins, lattice has {}",
                    solver.name(),
                    spec.n_sites()
                ));
            }
        }
        if self.control.is_some() {
            if !self.start.is_finite() || !self.stop.is_finite() {
                return bad("sweep range must be finite".into());
            }
            if self.points == 0 {
                return bad("points must be at least 1".into());
            }
            if self.points > 1 && self.stop <= self.start {
                return bad("sweep needs start < stop".into());
            }
            if self.control == Some(Control::Omega) && self.start < 0.0 {
                return bad("omega sweep must start at a nonnegative value".into());
            }
        }
        let mut out = self.clone();
        if solver == Solver::Trajectory {
            if self.n_traj < 2 {
                return bad("n_traj must be at least 2".into());
            }
            let coordination = dqs_core::Lattice::build(&spec, self.coupling)
                .map_err(|e| CliError::Config(e.to_string()))?
                .max_coordination();
            let rate = self
                .grid()
                .iter()
                .map(|&v| self.point_params(v).rate_scale(coordination))
                .fold(0.0, f64::max);
            out.dt = Some(self.dt.unwrap_or(dqs_core::TrajectoryConfig::default_dt(rate)));
            out.t_burn_in = Some(self.t_burn_in.unwrap_or(10.0 / self.gamma));
            out.t_average = Some(self.t_average.unwrap_or(100.0 / self.gamma));
            for (key, v) in [
                ("dt", out.dt),
                ("t_burn_in", out.t_burn_in),
                ("t_average", out.t_average),
            ] {
                let v = v.unwrap_or(0.0);
                if !(v.is_finite() && v >= 0.0) || (key != "t_burn_in" && v == 0.0) {
                    return bad(format!("`{key}` must be positive, got {v}"));
                }
            }
        }
        Ok(out)
    }

    /// Physical parameters at one control value.
    pub fn point_params(&self, value: f64) -> ModelParams {
        match self.control {
            Some(c) => c.apply(&self.params(), value),
            None => self.params(),
        }
    }

    /// Canonical text form. Parsing it gives back an identical config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or("auto".to_string(), fmt);
        for key in KEYS {
            let value = match *key {
                "solver" => self.solver.map_or("none", Solver::name).to_string(),
                "nx" => self.nx.to_string(),
                "ny" => self.ny.to_string(),
                "nz" => self.nz.to_string(),
                "spacing_nm" => fmt(self.spacing_nm),
                "V_radMHz" => fmt(self.coupling),
                "delta_radMHz" => fmt(self.delta),
                "omega_radMHz" => fmt(self.omega),
                "gamma_radMHz" => fmt(self.gamma),
                "t2_inv_radMHz" => fmt(self.t2_inverse),
                "gradient_Tm" => fmt(self.gradient_tm),
                "gyromagnetic_radMHz_per_T" => fmt(self.gyromagnetic),
                "n_traj" => self.n_traj.to_string(),
                "seed" => self.seed.to_string(),
                "dt" => opt(self.dt),
                "t_burn_in" => opt(self.t_burn_in),
                "t_average" => opt(self.t_average),
                "control" => self.control.map_or("none", control_name).to_string(),
                "start" => fmt(self.start),
                "stop" => fmt(self.stop),
                "points" => self.points.to_string(),
                "output" => self.output.display().to_string(),
                _ => unreachable!(),
            };
            if *key == "solver" && self.solver.is_none() {
                continue;
            }
            let _ = writeln!(s, "{key} = {value}");
        }
        s
    }
}
