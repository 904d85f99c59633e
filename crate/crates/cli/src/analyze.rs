//! `dqs analyze` subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use dqs_core::analysis::{
    finite_size_scaling, sensitivity_estimate, susceptibility, weibull_fit, Provenance, ScalingFit, ScalingPoint,
    Sensitivity, Susceptibility, SweepResult, WeibullFit,
};
use dqs_core::meanfield::Control;
use dqs_core::ModelParams;
use serde::Serialize;

use crate::config::control_name;
use crate::error::CliError;
use crate::run::SWEEP_SCHEMA;
use crate::table::{fmt, Table};

pub const CHI_SCHEMA: &str = "dqs-chi/1";
pub const PEAKS_SCHEMA: &str = "dqs-peaks/1";
pub const COLLAPSE_SCHEMA: &str = "dqs-collapse/1";

fn fail(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Analysis(format!("{}: {msg}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| fail(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value).expect("report serializes");
    write(path, (json + "\n").as_bytes())
}

fn parse_control(t: &Table, path: &Path) -> Result<Control, CliError> {
    match t.meta.get("control").map(String::as_str) {
        Some("omega") => Ok(Control::Omega),
        Some("field") => Ok(Control::Field),
        other => Err(fail(path, format!("sweep control {other:?} is not omega or field"))),
    }
}

fn sibling(input: &Path, suffix: &str) -> PathBuf {
    input.with_extension(suffix)
}

/// Reads a sweep CSV into the analysis representation.
pub fn read_sweep(path: &Path) -> Result<(Table, SweepResult), CliError> {
    let t = Table::read(path, &[SWEEP_SCHEMA])?;
    let control = parse_control(&t, path)?;
    let col = |name: &str| t.column(name).map_err(|e| fail(path, e));
    let prov = Provenance {
        solver: t.meta.get("solver").cloned().unwrap_or_default(),
        params: ModelParams {
            gamma: t.meta_num("gamma").unwrap_or(1.0),
            ..ModelParams::default()
        },
        seed: t.meta_num("seed"),
    };
    let sweep = SweepResult::new(control, col("value")?, col("m")?, col("stderr")?, prov).map_err(|e| fail(path, e))?;
    Ok((t, sweep))
}

pub fn chi_table(source: &Table, chi: &Susceptibility) -> Table {
    let mut t = Table::new(CHI_SCHEMA, vec!["value".into(), "chi".into(), "chi_err".into()]);
    t.meta = source.meta.clone();
    t.meta.insert("control".into(), control_name(chi.control).into());
    for i in 0..chi.grid.len() {
        t.push(vec![fmt(chi.grid[i]), fmt(chi.chi[i]), fmt(chi.chi_err[i])]);
    }
    t
}

/// `sweep.csv` → `sweep.chi.csv` (or `out`).
pub fn chi(input: &Path, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let (t, sweep) = read_sweep(input)?;
    let chi = susceptibility(&sweep).map_err(|e| fail(input, e))?;
    let out = out.map_or_else(|| sibling(input, "chi.csv"), Path::to_path_buf);
    write(&out, &chi_table(&t, &chi).to_bytes())?;
    Ok(out)
}

pub fn read_chi(path: &Path) -> Result<(Table, Vec<f64>, Vec<f64>, Vec<f64>), CliError> {
    let t = Table::read(path, &[CHI_SCHEMA])?;
    let col = |name: &str| t.column(name).map_err(|e| fail(path, e));
    let (x, y, e) = (col("value")?, col("chi")?, col("chi_err")?);
    Ok((t, x, y, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct WeibullReport {
    pub schema: &'static str,
    pub input: String,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub nz: Option<usize>,
    /// Points with a positive control value that entered the fit.
    pub n_points: usize,
    pub fit: WeibullFit,
}

/// Fits the positive-control part of a χ curve.
pub fn fit_chi(path: &Path) -> Result<WeibullReport, CliError> {
    let (t, x, y, _) = read_chi(path)?;
    let (x, y): (Vec<f64>, Vec<f64>) = x.into_iter().zip(y).filter(|&(x, _)| x > 0.0).unzip();
    let fit = weibull_fit(&x, &y).map_err(|e| fail(path, e))?;
    Ok(WeibullReport {
        schema: "dqs-weibull/1",
        input: path.display().to_string(),
        nx: t.meta_num("nx"),
        ny: t.meta_num("ny"),
        nz: t.meta_num("nz"),
        n_points: x.len(),
        fit,
    })
}

/// `chi.csv` → `chi.weibull.json` (or `out`).
pub fn weibull(input: &Path, out: Option<&Path>) -> Result<(PathBuf, WeibullReport), CliError> {
    let report = fit_chi(input)?;
    let out = out.map_or_else(|| sibling(input, "weibull.json"), Path::to_path_buf);
    write_json(&out, &report)?;
    Ok((out, report))
}

#[derive(Debug, Clone, Serialize)]
pub struct FssReport {
    pub schema: &'static str,
    pub points: Vec<ScalingPoint>,
    pub fit: ScalingFit,
    pub alpha_err: f64,
}

fn peaks_table(points: &[ScalingPoint]) -> Table {
    let cols = ["n_sites", "anisotropy", "chi_peak", "chi_err"];
    let mut t = Table::new(PEAKS_SCHEMA, cols.into_iter().map(String::from).collect());
    for p in points {
        t.push(vec![
            p.n_sites.to_string(),
            fmt(p.anisotropy),
            fmt(p.chi_peak),
            fmt(p.chi_err),
        ]);
    }
    t
}

fn read_peaks(path: &Path, t: &Table) -> Result<Vec<ScalingPoint>, CliError> {
    let col = |name: &str| t.column(name).map_err(|e| fail(path, e));
    let (n, a, c, e) = (col("n_sites")?, col("anisotropy")?, col("chi_peak")?, col("chi_err")?);
    (0..n.len())
        .map(|i| {
            if n[i] < 1.0 || n[i].fract() != 0.0 {
                return Err(fail(path, format!("row {}: n_sites must be a positive integer", i + 1)));
            }
            Ok(ScalingPoint {
                n_sites: n[i] as usize,
                anisotropy: a[i],
                chi_peak: c[i],
                chi_err: e[i],
            })
        })
        .collect()
}

/// Peak χ of one curve from its Weibull mode, with `a = nx/ny`.
pub fn scaling_point(report: &WeibullReport, path: &Path) -> Result<ScalingPoint, CliError> {
    let (nx, ny) = match (report.nx, report.ny) {
        (Some(nx), Some(ny)) if nx > 0 && ny > 0 => (nx, ny),
        _ => return Err(fail(path, "χ file lacks nx/ny")),
    };
    Ok(ScalingPoint {
        n_sites: nx * ny * report.nz.unwrap_or(1),
        anisotropy: nx as f64 / ny as f64,
        chi_peak: report.fit.peak_height,
        chi_err: report.fit.peak_height_err,
    })
}

/// Fits the scaling form to a peaks CSV, or to the Weibull peaks of
/// several χ curves. Writes `out` (JSON), `out.collapse.csv`, and, when
/// the peaks were derived here, `out.peaks.csv`.
pub fn fss(inputs: &[PathBuf], out: &Path) -> Result<FssReport, CliError> {
    let points = match inputs {
        [] => return Err(CliError::Analysis("fss needs input files".into())),
        [single] if Table::read(single, &[PEAKS_SCHEMA]).is_ok() => {
            read_peaks(single, &Table::read(single, &[PEAKS_SCHEMA])?)?
        }
        _ => {
            let pts = inputs
                .iter()
                .map(|p| scaling_point(&fit_chi(p)?, p))
                .collect::<Result<Vec<_>, _>>()?;
            write(&out.with_extension("peaks.csv"), &peaks_table(&pts).to_bytes())?;
            pts
        }
    };
    let fit = finite_size_scaling(&points).map_err(|e| fail(out, e))?;
    let mut collapse = Table::new(
        COLLAPSE_SCHEMA,
        ["n_sites", "ln_n", "ln_reduced_chi"]
            .into_iter()
            .map(String::from)
            .collect(),
    );
    for (p, &(ln_n, ln_chi)) in points.iter().zip(&fit.collapse) {
        collapse.push(vec![p.n_sites.to_string(), fmt(ln_n), fmt(ln_chi)]);
    }
    write(&out.with_extension("collapse.csv"), &collapse.to_bytes())?;
    let report = FssReport {
        schema: "dqs-fss/1",
        points,
        alpha_err: fit.alpha_err(),
        fit,
    };
    write_json(out, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityReport {
    pub schema: &'static str,
    pub input: String,
    /// Largest |∂m/∂B| on the grid, 1/T.
    pub chi_dc_peak: f64,
    pub peak_field_t: f64,
    pub gamma: f64,
    pub estimates: Vec<Sensitivity>,
}

/// Sensitivity from the χ curve of a field sweep.
pub fn sensitivity(
    input: &Path,
    n_ref: Option<usize>,
    n_targets: &[f64],
    gamma: Option<f64>,
    out: Option<&Path>,
) -> Result<(PathBuf, SensitivityReport), CliError> {
    let (t, x, y, _) = read_chi(input)?;
    if t.meta.get("control").map(String::as_str) != Some("field") {
        return Err(fail(input, "sensitivity needs the χ of a field sweep"));
    }
    let (i, peak) = y
        .iter()
        .map(|v| v.abs())
        .enumerate()
        .fold((0, 0.0), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let n_ref = match n_ref {
        Some(n) => n,
        None => match (
            t.meta_num::<usize>("nx"),
            t.meta_num::<usize>("ny"),
            t.meta_num::<usize>("nz"),
        ) {
            (Some(a), Some(b), c) => a * b * c.unwrap_or(1),
            _ => return Err(fail(input, "no N_ref given and the χ file lacks nx/ny")),
        },
    };
    let gamma = gamma.or_else(|| t.meta_num("gamma")).unwrap_or(1.0);
    let estimates = n_targets
        .iter()
        .map(|&n| sensitivity_estimate(peak, n_ref, n, gamma).map_err(|e| fail(input, e)))
        .collect::<Result<Vec<_>, _>>()?;
    let report = SensitivityReport {
        schema: "dqs-sensitivity/1",
        input: input.display().to_string(),
        chi_dc_peak: peak,
        peak_field_t: x.get(i).copied().unwrap_or(f64::NAN),
        gamma,
        estimates,
    };
    let out = out.map_or_else(|| sibling(input, "sensitivity.json"), Path::to_path_buf);
    write_json(&out, &report)?;
    Ok((out, report))
}
