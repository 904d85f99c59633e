//! Derivative-free simplex minimisation and damped Gauss-Newton least
//! squares. Both are deterministic given their inputs.

use crate::linalg::solve_small;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Edge length of the initial simplex.
    pub initial_step: f64,
    pub xatol: f64,
    pub fatol: f64,
    pub max_evals: usize,
    /// Fresh simplices built around the best point after convergence.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.05,
            xatol: 1e-10,
            fatol: 1e-13,
            max_evals: 40_000,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Nelder-Mead with standard coefficients (1, 2, ½, ½). After each
/// convergence the simplex is rebuilt around the best vertex and the search
/// resumed, until a restart brings no improvement.
pub fn nelder_mead(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut best_x = x0.to_vec();
    let mut best_f = eval(x0, &mut evals);
    let mut converged = false;
    for round in 0..=opts.restarts {
        let (x, fx, ok) = simplex_run(&mut eval, &best_x, opts, &mut evals);
        let improved = fx < best_f - opts.fatol;
        if fx <= best_f {
            best_x = x;
            best_f = fx;
        }
        converged = ok;
        if !ok || evals >= opts.max_evals || (round > 0 && !improved) {
            break;
        }
    }
    Minimum {
        x: best_x,
        f: best_f,
        evals,
        converged,
    }
}

fn simplex_run(
    eval: &mut impl FnMut(&[f64], &mut usize) -> f64,
    x0: &[f64],
    opts: &NelderMeadOptions,
    evals: &mut usize,
) -> (Vec<f64>, f64, bool) {
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for j in 0..n {
        let mut p = x0.to_vec();
        p[j] += if p[j] == 0.0 {
            opts.initial_step
        } else {
            opts.initial_step * p[j].abs().max(1.0)
        };
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p, evals)).collect();
    let mut order: Vec<usize> = (0..=n).collect();
    loop {
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let (lo, hi) = (order[0], order[n]);
        let spread = vals[hi] - vals[lo];
        let size = pts
            .iter()
            .map(|p| p.iter().zip(&pts[lo]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= opts.fatol && size <= opts.xatol {
            return (pts[lo].clone(), vals[lo], true);
        }
        if *evals >= opts.max_evals {
            return (pts[lo].clone(), vals[lo], false);
        }
        let second = order[n - 1];
        let mut centroid = vec![0.0; n];
        for &k in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&pts[k]) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[hi]).map(|(c, h)| c + t * (c - h)).collect() };
        let xr = along(1.0);
        let fr = eval(&xr, evals);
        if fr < vals[lo] {
            let xe = along(2.0);
            let fe = eval(&xe, evals);
            if fe < fr {
                pts[hi] = xe;
                vals[hi] = fe;
            } else {
                pts[hi] = xr;
                vals[hi] = fr;
            }
            continue;
        }
        if fr < vals[second] {
            pts[hi] = xr;
            vals[hi] = fr;
            continue;
        }
        // outside contraction if the reflection helped at all, else inside
        let xc = along(if fr < vals[hi] { 0.5 } else { -0.5 });
        let fc = eval(&xc, evals);
        if fc < vals[hi].min(fr) {
            pts[hi] = xc;
            vals[hi] = fc;
            continue;
        }
        let best = pts[lo].clone();
        for &k in &order[1..] {
            for (p, b) in pts[k].iter_mut().zip(&best) {
                *p = b + 0.5 * (*p - b);
            }
            vals[k] = eval(&pts[k], evals);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Relative cost change for convergence.
    pub ftol: f64,
    /// Relative step size for convergence.
    pub xtol: f64,
    /// Infinity norm of the gradient for convergence.
    pub gtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            ftol: 1e-15,
            xtol: 1e-14,
            gtol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmResult {
    pub x: Vec<f64>,
    /// Residual sum of squares.
    pub rss: f64,
    pub residuals: Vec<f64>,
    /// `JᵀJ` at the solution, row-major.
    pub jtj: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Levenberg-Marquardt with Marquardt's diagonal scaling.
///
/// `model` returns the residual vector and the row-major Jacobian
/// (`m × n`); a non-finite residual rejects the trial point.
pub fn levenberg_marquardt(
    mut model: impl FnMut(&[f64]) -> (Vec<f64>, Vec<f64>),
    x0: &[f64],
    opts: &LmOptions,
) -> LmResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut r, mut jac) = model(&x);
    let mut rss: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    if !rss.is_finite() {
        return LmResult {
            jtj: normal_matrix(&jac, r.len(), n),
            x,
            rss,
            residuals: r,
            iterations,
            converged,
        };
    }
    while iterations < opts.max_iter {
        iterations += 1;
        let m = r.len();
        let a = normal_matrix(&jac, m, n);
        let mut g = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                g[j] += jac[i * n + j] * r[i];
            }
        }
        let gnorm = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if gnorm <= opts.gtol * (1.0 + rss) {
            converged = true;
            break;
        }
        let dmax = (0..n).map(|j| a[j * n + j]).fold(0.0, f64::max);
        let mut accepted = false;
        while lambda < 1e20 {
            let mut damped = a.clone();
            for j in 0..n {
                damped[j * n + j] += lambda * a[j * n + j].max(1e-12 * dmax).max(f64::MIN_POSITIVE);
            }
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            let Some(step) = solve_small(&damped, n, &neg_g) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            let (rt, jt) = model(&trial);
            let rss_t: f64 = rt.iter().map(|v| v * v).sum();
            if rss_t.is_finite() && rss_t <= rss {
                let small_step = step
                    .iter()
                    .zip(&x)
                    .all(|(s, v)| s.abs() <= opts.xtol * (v.abs() + opts.xtol));
                let small_gain = rss - rss_t <= opts.ftol * rss;
                x = trial;
                r = rt;
                jac = jt;
                rss = rss_t;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if small_step || small_gain {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left at machine precision
            converged = gnorm.is_finite();
            break;
        }
        if converged {
            break;
        }
    }
    if converged {
        polish(&mut model, &mut x, &mut r, &mut jac, &mut rss);
    }
    LmResult {
        jtj: normal_matrix(&jac, r.len(), n),
        x,
        rss,
        residuals: r,
        iterations,
        converged,
    }
}

/// Undamped Gauss-Newton steps judged by the gradient norm. Near the
/// minimum the cost changes by less than its own rounding error, while
/// `Jᵀr` still resolves the optimum to working precision.
fn polish(
    model: &mut impl FnMut(&[f64]) -> (Vec<f64>, Vec<f64>),
    x: &mut Vec<f64>,
    r: &mut Vec<f64>,
    jac: &mut Vec<f64>,
    rss: &mut f64,
) {
    let n = x.len();
    let gradient = |jac: &[f64], r: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|j| r.iter().enumerate().map(|(i, ri)| jac[i * n + j] * ri).sum())
            .collect()
    };
    let inf_norm = |g: &[f64]| g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut g = gradient(jac, r);
    for _ in 0..5 {
        let a = normal_matrix(jac, r.len(), n);
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let Some(step) = solve_small(&a, n, &neg_g) else { return };
        let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        let (rt, jt) = model(&trial);
        let rss_t: f64 = rt.iter().map(|v| v * v).sum();
        let gt = gradient(&jt, &rt);
        if !(rss_t <= *rss * (1.0 + 1e-12)) || inf_norm(&gt) >= inf_norm(&g) {
            return;
        }
        *x = trial;
        *r = rt;
        *jac = jt;
        *rss = rss_t;
        g = gt;
    }
}

fn normal_matrix(jac: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for i in 0..m {
        let row = &jac[i * n..(i + 1) * n];
        for j in 0..n {
            for k in 0..n {
                a[j * n + k] += row[j] * row[k];
            }
        }
    }
    a
}

/// Central-difference Jacobian of `f: Rⁿ → Rᵐ`, row-major.
pub fn numerical_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    let mut jac = vec![0.0; m * n];
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1e-3);
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        for i in 0..m {
            jac[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}
