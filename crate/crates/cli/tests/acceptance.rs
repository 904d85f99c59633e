//! Acceptance suite. Runs every criterion through the same code paths as
//! the `dqs` binary, prints one PASS/FAIL line per criterion and writes
//! the lines plus the run data to `target/tmp/acceptance/`.
//!
//! The process fails when the set of failing criteria differs from
//! `EXPECTED_FAIL`, so regressions and unexpected passes both show up.
//! Set `DQS_ACCEPTANCE_4X5=1` to add the 4x5 lattice to the scaling set,
//! `DQS_ACCEPTANCE_TRAJ_SCALE` to enlarge its ensembles, and
//! `DQS_ACCEPTANCE_ONLY=1,4,...` to run a subset.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Stdio};
use std::time::Instant;

use dqs_cli::analyze::{self, WeibullReport};
use dqs_cli::run::{load_config, run};
use dqs_cli::table::Table;
use dqs_cli::RunConfig;
use dqs_core::analysis::{finite_size_scaling, sensitivity_estimate, susceptibility, Provenance, SweepResult};
use dqs_core::lindblad::{evolve_to_steady_state, steady_state_nullspace, SteadyStateOptions};
use dqs_core::meanfield::{Control, BRANCH_TIE_DISTANCE};
use dqs_core::operators::{build_hamiltonian, build_jump_operators};
use dqs_core::{DensityMatrix, Lattice, LatticeSpec, ModelParams};

/// Criteria whose failure is analysed in the project notes.
const EXPECTED_FAIL: &[usize] = &[5, 7, 8, 9];

const V: f64 = dqs_core::lattice::DEFAULT_COUPLING;
/// Jump threshold for "discontinuous" mean-field curves on a 0.05 grid.
const JUMP: f64 = 0.1;

// Trajectory protocol of the scaling set (criteria 3, 5, 6).
// Ω 0.5..5 in 19 points from fig4.cfg; trajectories per point below,
// multiplied by DQS_ACCEPTANCE_TRAJ_SCALE when set.
const SCALING_GEOMETRIES: &[(usize, usize, usize)] = &[(2, 3, 400), (2, 4, 200), (3, 3, 200), (3, 4, 24), (4, 4, 4)];
const SCALING_4X5: (usize, usize, usize) = (4, 5, 2);

struct Suite {
    dir: PathBuf,
    configs: PathBuf,
}

impl Suite {
    fn config(&self, name: &str) -> RunConfig {
        load_config(&self.configs.join(name)).unwrap()
    }

    /// Runs `cfg` with overrides and returns the sweep table.
    fn run(&self, mut cfg: RunConfig, sets: &[String], out: &str) -> Table {
        for kv in sets {
            cfg.apply_override(kv).unwrap();
        }
        cfg.output = self.dir.join(out);
        run(&cfg, false).unwrap_or_else(|e| panic!("{out}: {e}")).table
    }

    fn text(&self, text: &str, sets: &[String], out: &str) -> Table {
        self.run(RunConfig::parse(text).unwrap(), sets, out)
    }
}

fn col(t: &Table, name: &str) -> Vec<f64> {
    t.column(name).unwrap()
}

fn sets(kv: &[(&str, String)]) -> Vec<String> {
    kv.iter().map(|(k, v)| format!("{k}={v}")).collect()
}

/// Index and size of the largest step between neighbouring points.
fn max_step(m: &[f64]) -> (usize, f64) {
    m.windows(2)
        .enumerate()
        .map(|(i, w)| (i, (w[1] - w[0]).abs()))
        .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a })
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn optical_bloch(omega: f64, delta: f64, gamma: f64) -> f64 {
    0.25 * omega * omega / (delta * delta + 0.25 * gamma * gamma + 0.5 * omega * omega)
}

fn criterion_1(s: &Suite) -> Verdict {
    let want = optical_bloch(1.0, 0.0, 1.0);
    let base = "solver = exact\nomega_radMHz = 1\ndelta_radMHz = 0\ngamma_radMHz = 1\nn_traj = 1000\nseed = 1\n";
    let m = |solver: &str| {
        let t = s.text(base, &sets(&[("solver", solver.into())]), &format!("c1_{solver}.csv"));
        (col(&t, "m")[0], col(&t, "stderr")[0])
    };
    let (exact, _) = m("exact");
    let (null, _) = m("nullspace");
    let (traj, se) = m("trajectory");
    let pass = (exact - want).abs() < 1e-6 && (null - want).abs() < 1e-6 && (traj - want).abs() < 3.0 * se;
    verdict(
        pass,
        format!(
            "oracle {want:.7}, exact {exact:.7}, nullspace {null:.7}, trajectory {traj:.4} ± {se:.4} ({:.1} se)",
            (traj - want).abs() / se
        ),
    )
}

const C2_OMEGAS: [f64; 5] = [2.0, 3.0, 4.0, 5.0, 6.0];

fn criterion_2(s: &Suite) -> Verdict {
    let mut hits = 0;
    let mut total = 0;
    let mut worst_td: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    for (nx, ny) in [(2, 2), (2, 3)] {
        let sweep = sets(&[
            ("nx", nx.to_string()),
            ("ny", ny.to_string()),
            ("control", "omega".into()),
            ("start", C2_OMEGAS[0].to_string()),
            ("stop", C2_OMEGAS[4].to_string()),
            ("points", "5".into()),
        ]);
        let exact = col(
            &s.text("solver = exact\n", &sweep, &format!("c2_exact_{nx}x{ny}.csv")),
            "m",
        );
        for &omega in &C2_OMEGAS {
            let p = ModelParams {
                omega,
                ..ModelParams::default()
            };
            let l = Lattice::build(&LatticeSpec::planar(nx, ny), p.coupling).unwrap();
            let h = build_hamiltonian(&l, &p).unwrap();
            let c = build_jump_operators(&l, &p).unwrap();
            let opts = SteadyStateOptions::for_rate_scale(p.rate_scale(l.max_coordination()));
            let rk4 = evolve_to_steady_state(&DensityMatrix::ground(nx * ny), &h, &c, &opts).unwrap();
            let null = steady_state_nullspace(&h, &c).unwrap();
            worst_td = worst_td.max(rk4.rho.trace_distance(&null));
        }
        for seed in 1..=30u64 {
            let mut kv = sweep.clone();
            kv.extend(sets(&[("seed", seed.to_string())]));
            let t = s.text(
                "solver = trajectory\nn_traj = 100\nt_burn_in = 10\nt_average = 30\n",
                &kv,
                &format!("c2_traj_{nx}x{ny}_{seed}.csv"),
            );
            for ((m, se), e) in col(&t, "m").into_iter().zip(col(&t, "stderr")).zip(&exact) {
                let z = (m - e).abs() / se;
                worst_z = worst_z.max(z);
                hits += usize::from(z < 3.0);
                total += 1;
            }
        }
    }
    let rate = hits as f64 / total as f64;
    verdict(
        rate >= 0.99 && worst_td < 1e-6,
        format!(
            "{hits}/{total} trajectory points within 3 se ({:.1}%, worst {worst_z:.2} se); nullspace vs RK4 trace distance ≤ {worst_td:.1e}",
            100.0 * rate
        ),
    )
}

fn criterion_3(s: &Suite, steepest: f64) -> Verdict {
    let base = "solver = trajectory\nnx = 3\nny = 3\nn_traj = 200\nseed = 3\nt_burn_in = 10\nt_average = 60\n";
    let kv = sets(&[("omega_radMHz", steepest.to_string())]);
    let dt = RunConfig::parse(base).unwrap();
    let dt = {
        let mut c = dt;
        c.apply_override(&kv[0]).unwrap();
        c.resolve().unwrap().dt.unwrap()
    };
    let coarse = s.text(base, &kv, "c3_dt.csv");
    let mut half = kv.clone();
    half.push(format!("dt={}", dt / 2.0));
    let fine = s.text(base, &half, "c3_dt_half.csv");
    let (m1, e1) = (col(&coarse, "m")[0], col(&coarse, "stderr")[0]);
    let (m2, e2) = (col(&fine, "m")[0], col(&fine, "stderr")[0]);
    let combined = e1.hypot(e2);
    verdict(
        (m1 - m2).abs() < combined,
        format!(
            "3x3 at omega {steepest:.2}: dt {dt:.4} m {m1:.4}, dt/2 m {m2:.4}, |diff| {:.4} vs combined se {combined:.4}",
            (m1 - m2).abs()
        ),
    )
}

fn criterion_4(s: &Suite) -> (Verdict, Table) {
    let t = s.run(s.config("fig2.cfg"), &[], "c4_fig2.csv");
    let (x, m) = (col(&t, "value"), col(&t, "m"));
    let (up, down) = (col(&t, "m_up_c0"), col(&t, "m_down_c0"));
    let (cu, cd) = (col(&t, "cost_up"), col(&t, "cost_down"));
    let window: Vec<usize> = (0..x.len())
        .filter(|&i| (up[i] - down[i]).abs() > BRANCH_TIE_DISTANCE)
        .collect();
    let crossings: Vec<usize> = window
        .windows(2)
        .filter(|w| w[1] == w[0] + 1 && (cu[w[0]] - cd[w[0]]).signum() != (cu[w[1]] - cd[w[1]]).signum())
        .map(|w| w[0])
        .collect();
    let (j, dm) = max_step(&m);
    let b = s.run(s.config("fig2_inset.cfg"), &[], "c4_fig2_inset.csv");
    let (bx, bm) = (col(&b, "value"), col(&b, "m"));
    let (bj, bdm) = max_step(&bm);
    let pass = !window.is_empty() && !crossings.is_empty() && dm > JUMP && bdm > JUMP;
    let (lo, hi) = window
        .first()
        .zip(window.last())
        .map_or((f64::NAN, f64::NAN), |(&a, &b)| (x[a], x[b]));
    let v = verdict(
        pass,
        format!(
            "bistable omega {lo:.2}..{hi:.2}, cost crossing at omega {:?}, jump {dm:.3} at omega {:.2}; field sweep jump {bdm:.3} at B {:.2} µT",
            crossings.iter().map(|&i| (x[i] * 100.0).round() / 100.0).collect::<Vec<_>>(),
            x[j],
            bx[bj] * 1e6
        ),
    );
    (v, b)
}

struct Scaling {
    fits: Vec<((usize, usize), WeibullReport)>,
    steepest_3x3: f64,
}

fn scaling_sweeps(s: &Suite) -> Scaling {
    let geoms = geometries();
    let scale: f64 = std::env::var("DQS_ACCEPTANCE_TRAJ_SCALE")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1.0);
    let mut fits = Vec::new();
    let mut steepest_3x3 = f64::NAN;
    for (nx, ny, n_traj) in geoms {
        let n_traj = ((n_traj as f64 * scale).round() as usize).max(2);
        let t0 = Instant::now();
        let name = format!("fss_{nx}x{ny}.csv");
        s.run(
            s.config("fig4.cfg"),
            &sets(&[
                ("nx", nx.to_string()),
                ("ny", ny.to_string()),
                ("n_traj", n_traj.to_string()),
            ]),
            &name,
        );
        let chi = analyze::chi(&s.dir.join(&name), None).unwrap();
        let report = analyze::fit_chi(&chi).unwrap_or_else(|e| panic!("{nx}x{ny}: {e}"));
        if (nx, ny) == (3, 3) {
            let (_, x, y, _) = analyze::read_chi(&chi).unwrap();
            let i = (0..y.len()).fold(0, |a, i| if y[i] > y[a] { i } else { a });
            steepest_3x3 = x[i];
        }
        eprintln!(
            "  {nx}x{ny} ({n_traj} trajectories): r2 {:.4}, peak {:.4} ± {:.4} at omega {:.2} ({:.0} s)",
            report.fit.r_squared,
            report.fit.peak_height,
            report.fit.peak_height_err,
            report.fit.peak_location,
            t0.elapsed().as_secs_f64()
        );
        fits.push(((nx, ny), report));
    }
    Scaling { fits, steepest_3x3 }
}

fn criterion_5(sc: &Scaling) -> Verdict {
    let get = |g: (usize, usize)| &sc.fits.iter().find(|(k, _)| *k == g).unwrap().1.fit;
    let (a, b) = (get((3, 3)), get((4, 4)));
    let margin = a.peak_height_err.hypot(b.peak_height_err);
    let pass = a.r_squared > 0.95 && b.r_squared > 0.95 && b.peak_height - a.peak_height > margin;
    verdict(
        pass,
        format!(
            "r2 3x3 {:.4}, 4x4 {:.4}; peak 3x3 {:.4} ± {:.4}, 4x4 {:.4} ± {:.4}, difference {:.4} vs combined {margin:.4}",
            a.r_squared,
            b.r_squared,
            a.peak_height,
            a.peak_height_err,
            b.peak_height,
            b.peak_height_err,
            b.peak_height - a.peak_height
        ),
    )
}

fn criterion_6(s: &Suite, sc: &Scaling) -> Verdict {
    let points: Vec<_> = sc
        .fits
        .iter()
        .map(|((nx, ny), r)| analyze::scaling_point(r, &s.dir.join(format!("fss_{nx}x{ny}.chi.csv"))).unwrap())
        .collect();
    let n_ref = points.iter().map(|p| p.n_sites).max().unwrap();
    let window = if n_ref >= 20 { (0.4, 0.65) } else { (0.3, 0.8) };
    match finite_size_scaling(&points) {
        Ok(fit) => verdict(
            fit.alpha > 0.0 && (window.0..=window.1).contains(&fit.alpha),
            format!(
                "alpha {:.3} ± {:.3} (window {:?}), d {:.3}, over N = {:?}",
                fit.alpha,
                fit.alpha_err(),
                window,
                fit.d,
                points.iter().map(|p| p.n_sites).collect::<Vec<_>>()
            ),
        ),
        Err(e) => verdict(false, format!("scaling fit failed: {e}")),
    }
}

fn criterion_7(s: &Suite) -> Verdict {
    let zero = |points: usize| {
        let t = s.run(
            s.config("fig5.cfg"),
            &sets(&[
                ("gradient_Tm", "0".into()),
                ("start", "0.1".into()),
                ("points", points.to_string()),
            ]),
            &format!("c7_uniform_{points}.csv"),
        );
        max_step(&col(&t, "m")).1
    };
    let (coarse, fine) = (zero(80), zero(159));
    let t = s.run(s.config("fig5.cfg"), &[], "c7_gradient.csv");
    let central: usize = t.meta_num("central").unwrap();
    let classes: usize = t.meta_num("classes").unwrap();
    let (j, dm) = max_step(&col(&t, "m"));
    let outer: Vec<f64> = (0..classes)
        .filter(|&c| c != central)
        .map(|c| col(&t, &format!("m_sel_c{c}"))[j + 1])
        .collect();
    // A finite slope halves the largest step when the grid is halved; a
    // jump keeps it. 0.75 separates the two with room for curvature.
    let continuous = fine < 0.75 * coarse;
    let restored = dm > 0.05 && outer.iter().all(|&m| m < 0.05);
    verdict(
        continuous && restored,
        format!(
            "gradient 0: max step {coarse:.3} (80 points) -> {fine:.3} (159 points); 10^3 T/m: jump {dm:.3} at omega {:.2}, outer layers after jump {:?}",
            col(&t, "value")[j],
            outer.iter().map(|m| (m * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    )
}

const C8_T2: [f64; 9] = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 10.0];

fn criterion_8(s: &Suite) -> Verdict {
    let mut rows = Vec::new();
    for &k in &C8_T2 {
        let t = s.run(
            s.config("fig6.cfg"),
            &sets(&[("t2_inv_radMHz", (k * V).to_string())]),
            &format!("c8_t2_{k}V.csv"),
        );
        let (x, m) = (col(&t, "value"), col(&t, "m"));
        let (j, dm) = max_step(&m);
        rows.push((k, dm, 0.5 * (x[j] + x[j + 1])));
    }
    let retains = rows.iter().filter(|r| r.0 <= 2.0).all(|r| r.1 > JUMP);
    // Only discontinuous curves have a transition point.
    let points: Vec<f64> = rows.iter().filter(|r| r.1 > JUMP).map(|r| r.2).collect();
    let monotone =
        points.len() >= 2 && (points.windows(2).all(|w| w[1] <= w[0]) || points.windows(2).all(|w| w[1] >= w[0]));
    let vanishes = rows.last().is_some_and(|r| r.1 <= JUMP);
    verdict(
        retains && monotone && vanishes,
        format!(
            "1/T2 [xV]: max step @ omega {}; jump up to 2V {retains}, monotone {monotone}, vanishes {vanishes}",
            rows.iter()
                .map(|(k, dm, x)| format!("{k}: {dm:.3}@{x:.2}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn criterion_9(t: &Table, n_ref: usize) -> Verdict {
    let prov = Provenance {
        solver: "meanfield".into(),
        params: ModelParams::default(),
        seed: None,
    };
    let sweep = SweepResult::new(Control::Field, col(t, "value"), col(t, "m"), col(t, "stderr"), prov).unwrap();
    let chi = susceptibility(&sweep).unwrap();
    let peak = chi.chi.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let small = sensitivity_estimate(peak, n_ref, 1e3, 1.0).unwrap();
    let large = sensitivity_estimate(peak, n_ref, 1e11, 1.0).unwrap();
    let ratio = large.eta / small.eta;
    let target_eta = 3e-9;
    let within = (target_eta / 10.0..=target_eta * 10.0).contains(&small.eta);
    verdict(
        (ratio / 1e-4 - 1.0).abs() < 1e-12 && within,
        format!(
            "chi_DC {peak:.3e} 1/T, N_ref {n_ref}: eta(1e3) {:.3e} T/sqrt(Hz) (target 3e-9 within x10: {within}), eta(1e11)/eta(1e3) {ratio:.6e}",
            small.eta
        ),
    )
}

fn criterion_10(s: &Suite) -> Verdict {
    let cfg = s.dir.join("c10.cfg");
    fs::write(
        &cfg,
        "solver = trajectory\nnx = 2\nny = 3\ncontrol = omega\nstart = 1.5\nstop = 3.5\npoints = 3\n\
         n_traj = 40\nseed = 10\nt_burn_in = 5\nt_average = 20\n",
    )
    .unwrap();
    let mut tables = Vec::new();
    for threads in [1, 2, 4] {
        let out = s.dir.join(format!("c10_threads{threads}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_dqs"))
            .args(["--threads", &threads.to_string(), "run"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .stdout(Stdio::null())
            .status()
            .unwrap();
        assert!(status.success());
        tables.push(Table::parse(&fs::read_to_string(&out).unwrap()).unwrap());
    }
    let mut worst: f64 = 0.0;
    for t in &tables[1..] {
        for name in ["m", "stderr", "n_jumps_mean"] {
            for (a, b) in col(t, name).iter().zip(col(&tables[0], name)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    verdict(
        worst <= 1e-12,
        format!("threads 1/2/4: largest difference in m, stderr, n_jumps_mean {worst:e}"),
    )
}

fn geometries() -> Vec<(usize, usize, usize)> {
    let mut g = SCALING_GEOMETRIES.to_vec();
    if std::env::var("DQS_ACCEPTANCE_4X5").is_ok_and(|v| v == "1") {
        g.push(SCALING_4X5);
    }
    g
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let only: Option<BTreeSet<usize>> = std::env::var("DQS_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|n| n.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    fs::create_dir_all(&dir).unwrap();
    let s = Suite {
        dir: dir.clone(),
        configs: Path::new(env!("CARGO_MANIFEST_DIR")).join("configs"),
    };
    let started = Instant::now();
    let mut results: Vec<(usize, Verdict)> = Vec::new();
    let mut step = |n: usize, f: &mut dyn FnMut() -> Verdict| {
        if !wanted(n) {
            return;
        }
        let t0 = Instant::now();
        eprintln!("criterion {n} ...");
        let v = f();
        eprintln!(
            "criterion {n} {} ({:.0} s)",
            if v.pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
        results.push((n, v));
    };
    step(1, &mut || criterion_1(&s));
    step(2, &mut || criterion_2(&s));
    let mut field_sweep = None;
    if wanted(4) || wanted(9) {
        let (v, b) = criterion_4(&s);
        field_sweep = Some(b);
        step(4, &mut || verdict(v.pass, v.detail.clone()));
    }
    step(7, &mut || criterion_7(&s));
    step(8, &mut || criterion_8(&s));
    step(10, &mut || criterion_10(&s));
    if [3, 5, 6].into_iter().any(&wanted) {
        eprintln!("scaling sweeps ...");
        let sc = scaling_sweeps(&s);
        step(3, &mut || criterion_3(&s, sc.steepest_3x3));
        step(5, &mut || criterion_5(&sc));
        step(6, &mut || criterion_6(&s, &sc));
    }
    let n_ref = geometries().iter().map(|g| g.0 * g.1).max().unwrap();
    step(9, &mut || criterion_9(field_sweep.as_ref().unwrap(), n_ref));

    results.sort_by_key(|r| r.0);
    let lines: Vec<String> = results
        .iter()
        .map(|(n, v)| {
            format!(
                "criterion {n:>2} {}  {}",
                if v.pass { "PASS" } else { "FAIL" },
                v.detail
            )
        })
        .collect();
    println!("\nacceptance summary ({:.0} s)", started.elapsed().as_secs_f64());
    for l in &lines {
        println!("{l}");
    }
    fs::write(dir.join("acceptance_report.txt"), lines.join("\n") + "\n").unwrap();

    let failed: BTreeSet<usize> = results.iter().filter(|(_, v)| !v.pass).map(|(n, _)| *n).collect();
    let expected: BTreeSet<usize> = EXPECTED_FAIL.iter().copied().filter(|&n| wanted(n)).collect();
    if failed == expected {
        println!("failing criteria {failed:?} match the documented expectation");
        ExitCode::SUCCESS
    } else {
        println!("failing criteria {failed:?}, documented expectation {expected:?}");
        ExitCode::FAILURE
    }
}
