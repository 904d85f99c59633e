//! Solver dispatch and result persistence for `dqs run`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dqs_core::lindblad::{evolve_to_steady_state, steady_state_nullspace, SteadyStateOptions};
use dqs_core::meanfield::{variational_sweep, ClassCouplings, Control, Direction};
use dqs_core::operators::{build_hamiltonian, build_jump_operators};
use dqs_core::trajectories::{run_ensemble_from, TrajectorySystem};
use dqs_core::{DensityMatrix, Lattice, PureState, TrajectoryConfig};
use serde::{Deserialize, Serialize};

use crate::config::{control_name, RunConfig, Solver};
use crate::error::CliError;
use crate::table::{fmt, Table};

pub const SWEEP_SCHEMA: &str = "dqs-sweep/1";
pub const TRAJECTORY_SCHEMA: &str = "dqs-trajectories/1";
pub const SIDECAR_SCHEMA: &str = "dqs-run/1";

/// Metadata written next to every sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema: String,
    pub version: String,
    pub solver: Solver,
    pub seed: u64,
    pub threads: usize,
    /// Fully resolved configuration in config-file syntax.
    pub config: String,
    pub csv: String,
    pub wall_time_s: f64,
    pub point_wall_time_s: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub csv: PathBuf,
    pub sidecar: PathBuf,
    pub table: Table,
    pub meta: Sidecar,
}

/// `out.csv` → `out.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

pub fn dump_path(csv: &Path) -> PathBuf {
    csv.with_extension("trajectories.csv")
}

/// Loads a config file, or the config stored in a run sidecar.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if text.trim_start().starts_with('{') {
        let meta: Sidecar = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: not a run sidecar: {e}", path.display())))?;
        if meta.schema != SIDECAR_SCHEMA {
            return Err(CliError::Config(format!(
                "{}: unsupported sidecar schema {}",
                path.display(),
                meta.schema
            )));
        }
        return RunConfig::parse(&meta.config);
    }
    RunConfig::parse(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn write_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Solver(format!("cannot write {}: {e}", path.display()))
}

/// Runs the configured sweep and writes the CSV and its sidecar.
pub fn run(cfg: &RunConfig, dump_trajectories: bool) -> Result<RunReport, CliError> {
    let cfg = cfg.resolve()?;
    let solver = cfg.solver()?;
    let started = Instant::now();
    let mut times = Vec::new();
    let mut dump = None;
    let table = match solver {
        Solver::Exact | Solver::Nullspace => sweep_density_matrix(&cfg, solver, &mut times)?,
        Solver::Trajectory => {
            let (t, d) = sweep_trajectories(&cfg, dump_trajectories, &mut times)?;
            dump = d;
            t
        }
        Solver::Meanfield => sweep_meanfield(&cfg, &mut times)?,
    };
    let csv = cfg.output.clone();
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| write_err(dir, e))?;
    }
    table.write(&csv).map_err(|e| write_err(&csv, e))?;
    if let Some(d) = dump {
        let p = dump_path(&csv);
        d.write(&p).map_err(|e| write_err(&p, e))?;
    }
    let meta = Sidecar {
        schema: SIDECAR_SCHEMA.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        solver,
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        config: cfg.to_text(),
        csv: csv
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        wall_time_s: started.elapsed().as_secs_f64(),
        point_wall_time_s: times,
    };
    let sidecar = sidecar_path(&csv);
    let json = serde_json::to_string_pretty(&meta).expect("sidecar serializes");
    fs::write(&sidecar, json + "\n").map_err(|e| write_err(&sidecar, e))?;
    Ok(RunReport {
        csv,
        sidecar,
        table,
        meta,
    })
}

fn base_table(cfg: &RunConfig, solver: Solver, extra: &[String]) -> Table {
    let mut columns: Vec<String> = ["value", "omega_radMHz", "delta_radMHz", "m", "stderr"]
        .into_iter()
        .map(String::from)
        .collect();
    columns.extend_from_slice(extra);
    let mut t = Table::new(SWEEP_SCHEMA, columns);
    let meta = [
        ("solver", solver.name().to_string()),
        ("control", cfg.control.map_or("none", control_name).to_string()),
        ("nx", cfg.nx.to_string()),
        ("ny", cfg.ny.to_string()),
        ("nz", cfg.nz.to_string()),
        ("gamma", fmt(cfg.gamma)),
        ("seed", cfg.seed.to_string()),
    ];
    for (k, v) in meta {
        t.meta.insert(k.into(), v);
    }
    t
}

fn sweep_density_matrix(cfg: &RunConfig, solver: Solver, times: &mut Vec<f64>) -> Result<Table, CliError> {
    let spec = cfg.lattice_spec();
    let lattice = Lattice::build(&spec, cfg.coupling)?;
    let n = lattice.n_sites();
    let mut table = base_table(cfg, solver, &["residual".into()]);
    let mut rho = DensityMatrix::ground(n);
    for value in cfg.grid() {
        let t0 = Instant::now();
        let p = cfg.point_params(value);
        let h = build_hamiltonian(&lattice, &p)?;
        let c = build_jump_operators(&lattice, &p)?;
        let residual = if solver == Solver::Exact {
            let opts = SteadyStateOptions::for_rate_scale(p.rate_scale(lattice.max_coordination()));
            let ss = evolve_to_steady_state(&rho, &h, &c, &opts)?;
            rho = ss.rho;
            ss.residual
        } else {
            rho = steady_state_nullspace(&h, &c)?;
            dqs_core::lindblad::lindblad_rhs(&rho, &h, &c)?.trace_norm()
        };
        table.push(vec![
            fmt(value),
            fmt(p.omega),
            fmt(p.delta),
            fmt(rho.magnetization(n)),
            fmt(0.0),
            fmt(residual),
        ]);
        times.push(t0.elapsed().as_secs_f64());
    }
    Ok(table)
}

fn sweep_trajectories(cfg: &RunConfig, dump: bool, times: &mut Vec<f64>) -> Result<(Table, Option<Table>), CliError> {
    let spec = cfg.lattice_spec();
    let lattice = Lattice::build(&spec, cfg.coupling)?;
    let n = lattice.n_sites();
    let mut table = base_table(cfg, Solver::Trajectory, &["n_jumps_mean".into()]);
    let mut raw = dump.then(|| {
        let mut t = Table::new(
            TRAJECTORY_SCHEMA,
            ["value", "trajectory", "m", "n_jumps"]
                .into_iter()
                .map(String::from)
                .collect(),
        );
        t.meta = table.meta.clone();
        t
    });
    let tc = TrajectoryConfig {
        n_trajectories: cfg.n_traj,
        t_burn_in: cfg.t_burn_in.expect("resolved"),
        t_average: cfg.t_average.expect("resolved"),
        dt: cfg.dt.expect("resolved"),
        seed: cfg.seed,
    };
    for value in cfg.grid() {
        let t0 = Instant::now();
        let p = cfg.point_params(value);
        let h = build_hamiltonian(&lattice, &p)?;
        let c = build_jump_operators(&lattice, &p)?;
        let sys = TrajectorySystem::new(&h, &c)?;
        let ens = run_ensemble_from(&sys, &PureState::ground(n), &tc)?;
        table.push(vec![
            fmt(value),
            fmt(p.omega),
            fmt(p.delta),
            fmt(ens.magnetization),
            fmt(ens.stderr),
            fmt(ens.n_jumps_mean),
        ]);
        if let Some(raw) = raw.as_mut() {
            for r in &ens.records {
                raw.push(vec![
                    fmt(value),
                    r.index.to_string(),
                    fmt(r.magnetization),
                    r.n_jumps.to_string(),
                ]);
            }
        }
        times.push(t0.elapsed().as_secs_f64());
    }
    Ok((table, raw))
}

fn sweep_meanfield(cfg: &RunConfig, times: &mut Vec<f64>) -> Result<Table, CliError> {
    let couplings = if cfg.nz == 1 {
        ClassCouplings::uniform_2d(cfg.coupling)
    } else {
        ClassCouplings::layered(&cfg.lattice_spec(), cfg.coupling)?
    };
    let k = couplings.n_classes();
    let central = couplings.central_class();
    let mut extra = Vec::new();
    for branch in ["up", "down", "sel"] {
        for c in 0..k {
            extra.push(format!("m_{branch}_c{c}"));
        }
    }
    extra.extend(
        [
            "cost_up",
            "cost_down",
            "selected",
            "mf_m_up",
            "mf_m_down",
            "residual_up",
            "residual_down",
            "stable_up",
            "stable_down",
        ]
        .into_iter()
        .map(String::from),
    );
    let mut table = base_table(cfg, Solver::Meanfield, &extra);
    table.meta.insert("classes".into(), k.to_string());
    table.meta.insert("central".into(), central.to_string());
    let t0 = Instant::now();
    let (control, grid) = match cfg.control {
        Some(c) => (c, cfg.grid()),
        None => (Control::Omega, vec![cfg.omega]),
    };
    let base = cfg.params();
    let sweep = variational_sweep(&base, &couplings, control, &grid)?;
    let per_point = t0.elapsed().as_secs_f64() / grid.len() as f64;
    for sp in &sweep.points {
        let p = control.apply(&base, sp.control);
        let sel = sp.selected_state();
        let mut row = vec![
            fmt(sp.control),
            fmt(p.omega),
            fmt(p.delta),
            fmt(sel.magnetization(central)),
            fmt(0.0),
        ];
        for state in [&sp.up.variational.state, &sp.down.variational.state, sel] {
            row.extend((0..k).map(|c| fmt(state.magnetization(c))));
        }
        row.extend([
            fmt(sp.up.variational.cost),
            fmt(sp.down.variational.cost),
            match sp.selected {
                Direction::Up => "up".into(),
                Direction::Down => "down".into(),
            },
            fmt(sp.up.fixed_point.state.magnetization(central)),
            fmt(sp.down.fixed_point.state.magnetization(central)),
            fmt(sp.up.fixed_point.residual),
            fmt(sp.down.fixed_point.residual),
            u8::from(sp.up.fixed_point.stable).to_string(),
            u8::from(sp.down.fixed_point.stable).to_string(),
        ]);
        table.push(row);
        times.push(per_point);
    }
    Ok(table)
}
