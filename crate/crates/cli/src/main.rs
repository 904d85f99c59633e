use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dqs_cli::{analyze, config::Solver, run, CliError};

/// Steady states of driven dissipative dipolar spin lattices.
#[derive(Parser)]
#[command(name = "dqs", version)]
struct Cli {
    /// Worker threads for the solvers (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep from a config file or a run sidecar.
    Run(RunArgs),
    /// Post-process sweep results.
    #[command(subcommand)]
    Analyze(Analyze),
}

#[derive(Args)]
struct RunArgs {
    /// Config file (same as --config).
    path: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    solver: Option<Solver>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override one config key, e.g. `--set nx=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Also write per-trajectory records next to the CSV.
    #[arg(long)]
    dump_trajectories: bool,
}

#[derive(Subcommand)]
enum Analyze {
    /// Susceptibility dm/d(control) of a sweep CSV.
    Chi {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weibull fit of a χ CSV.
    Weibull {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-size scaling from a peaks CSV or several χ CSVs.
    Fss {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "fss.json")]
        out: PathBuf,
    },
    /// Field sensitivity from the χ of a field sweep.
    Sensitivity {
        input: PathBuf,
        /// Spins in the reference cluster (default: lattice of the input).
        #[arg(long)]
        n_ref: Option<usize>,
        /// Sensor sizes to extrapolate to. Repeatable.
        #[arg(long = "n-target", default_values_t = [1e3, 1e11])]
        n_target: Vec<f64>,
        /// Pump rate in rad·MHz (default: from the input header).
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn do_run(args: RunArgs) -> Result<(), CliError> {
    let path = match (args.path, args.config) {
        (Some(_), Some(_)) => return Err(CliError::Config("config given twice".into())),
        (Some(p), None) | (None, Some(p)) => p,
        (None, None) => return Err(CliError::Config("no config file given".into())),
    };
    let mut cfg = run::load_config(&path)?;
    for kv in &args.set {
        cfg.apply_override(kv)?;
    }
    if let Some(s) = args.solver {
        cfg.solver = Some(s);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = args.out {
        cfg.output = o;
    }
    let report = run::run(&cfg, args.dump_trajectories)?;
    println!(
        "{} points -> {} ({:.2} s)",
        report.table.rows.len(),
        report.csv.display(),
        report.meta.wall_time_s
    );
    Ok(())
}

fn do_analyze(a: Analyze) -> Result<(), CliError> {
    match a {
        Analyze::Chi { input, out } => {
            let out = analyze::chi(&input, out.as_deref())?;
            println!("chi -> {}", out.display());
        }
        Analyze::Weibull { input, out } => {
            let (out, r) = analyze::weibull(&input, out.as_deref())?;
            let f = &r.fit;
            println!(
                "k {:.4} scale {:.4} A {:.4} r2 {:.4} peak {:.5} +- {:.5} at {:.4} -> {}",
                f.k,
                f.scale,
                f.amplitude,
                f.r_squared,
                f.peak_height,
                f.peak_height_err,
                f.peak_location,
                out.display()
            );
        }
        Analyze::Fss { inputs, out } => {
            let r = analyze::fss(&inputs, &out)?;
            println!(
                "alpha {:.4} +- {:.4} d {:.4} c {:.4} ({} points) -> {}",
                r.fit.alpha,
                r.alpha_err,
                r.fit.d,
                r.fit.c,
                r.points.len(),
                out.display()
            );
        }
        Analyze::Sensitivity {
            input,
            n_ref,
            n_target,
            gamma,
            out,
        } => {
            let (out, r) = analyze::sensitivity(&input, n_ref, &n_target, gamma, out.as_deref())?;
            for s in &r.estimates {
                println!("N {:e}: eta {:.3e} T/sqrt(Hz)", s.n_target, s.eta);
            }
            println!("chi_DC {:.4e} 1/T -> {}", r.chi_dc_peak, out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Run(args) => do_run(args),
        Command::Analyze(a) => do_analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
