//! From sweeps to headline numbers: susceptibility, Weibull peak fits,
//! finite-size scaling of the peak and the field sensitivity.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::linalg::invert_small;
use crate::meanfield::Control;
use crate::operators::ModelParams;
use crate::optimize::{levenberg_marquardt, LmOptions, LmResult};

/// Who produced a sweep and with what.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub solver: String,
    pub params: ModelParams,
    pub seed: Option<u64>,
}

/// Magnetization along a control axis. The grid is Ω in rad·MHz or B in T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub control: Control,
    pub grid: Vec<f64>,
    pub m: Vec<f64>,
    /// Standard errors, zero for deterministic solvers.
    pub m_err: Vec<f64>,
    pub provenance: Provenance,
}

impl SweepResult {
    pub fn new(control: Control, grid: Vec<f64>, m: Vec<f64>, m_err: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if m.len() != grid.len() || m_err.len() != grid.len() {
            return Err(Error::InvalidCurve(format!(
                "grid has {} points, m {} and m_err {}",
                grid.len(),
                m.len(),
                m_err.len()
            )));
        }
        check_monotone(&grid)?;
        if m.iter().chain(&m_err).any(|v| !v.is_finite()) || m_err.iter().any(|&e| e < 0.0) {
            return Err(Error::InvalidCurve("non-finite value or negative error".into()));
        }
        Ok(Self {
            control,
            grid,
            m,
            m_err,
            provenance,
        })
    }
}

fn check_monotone(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidCurve("non-finite grid value".into()));
    }
    let up = grid.windows(2).all(|w| w[1] > w[0]);
    let down = grid.windows(2).all(|w| w[1] < w[0]);
    if up || down {
        Ok(())
    } else {
        Err(Error::InvalidCurve("grid is not strictly monotone".into()))
    }
}

/// `∂m/∂Ω` or `∂m/∂B` (1/T) on the sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Susceptibility {
    pub control: Control,
    pub grid: Vec<f64>,
    pub chi: Vec<f64>,
    pub chi_err: Vec<f64>,
}

impl Susceptibility {
    /// Index and value of the largest χ.
    pub fn peak(&self) -> (usize, f64) {
        self.chi.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |best, (i, v)| if v > best.1 { (i, v) } else { best },
        )
    }
}

/// Central differences inside, one-sided at the ends; errors assume
/// independent points.
pub fn susceptibility(sweep: &SweepResult) -> Result<Susceptibility> {
    let n = sweep.grid.len();
    if n < 3 {
        return Err(Error::InvalidCurve(format!("need at least 3 points, got {n}")));
    }
    let (x, m, e) = (&sweep.grid, &sweep.m, &sweep.m_err);
    let mut chi = Vec::with_capacity(n);
    let mut err = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = match i {
            0 => (0, 1),
            _ if i == n - 1 => (n - 2, n - 1),
            _ => (i - 1, i + 1),
        };
        let h = x[b] - x[a];
        chi.push((m[b] - m[a]) / h);
        err.push(e[a].hypot(e[b]) / h.abs());
    }
    Ok(Susceptibility {
        control: sweep.control,
        grid: x.clone(),
        chi,
        chi_err: err,
    })
}

/// `A (x/scale)^(k−1) exp[−(x/scale)^k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullFit {
    pub k: f64,
    pub scale: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    /// Mode of the fitted curve; `0` when `k ≤ 1`.
    pub peak_location: f64,
    pub peak_height: f64,
    /// Covariance of `(k, scale, amplitude)`.
    pub covariance: [[f64; 3]; 3],
    pub peak_location_err: f64,
    pub peak_height_err: f64,
}

pub fn weibull(x: f64, k: f64, scale: f64, amplitude: f64) -> f64 {
    let u = x / scale;
    amplitude * u.powf(k - 1.0) * (-u.powf(k)).exp()
}

/// Mode and height of the Weibull shape. For `k ≤ 1` the curve is largest
/// at the origin, where it diverges for `k < 1`.
pub fn weibull_peak(k: f64, scale: f64, amplitude: f64) -> (f64, f64) {
    if k > 1.0 {
        let q = (k - 1.0) / k;
        (scale * q.powf(1.0 / k), amplitude * q.powf(q) * (-q).exp())
    } else if k == 1.0 {
        (0.0, amplitude)
    } else {
        (0.0, f64::INFINITY)
    }
}

/// Least-squares Weibull fit from a method-of-moments start and three
/// fixed perturbations of it. Deterministic.
pub fn weibull_fit(x: &[f64], y: &[f64]) -> Result<WeibullFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidCurve(format!(
            "{} abscissae for {} values",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 6 {
        return Err(Error::InvalidCurve(format!("need at least 6 points, got {}", x.len())));
    }
    check_monotone(x)?;
    if x.iter().any(|&v| v <= 0.0) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidCurve(
            "abscissae must be positive and values finite".into(),
        ));
    }
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    if ymax <= 0.0 {
        return Err(Error::InvalidCurve("no positive value".into()));
    }
    if ymax - ymin <= 1e-12 * ymax.abs() {
        return Err(Error::InvalidCurve("flat curve".into()));
    }

    let (k0, s0) = moment_start(x, y);
    let starts = [(k0, s0), (1.5 * k0, s0), (k0 / 1.5, 1.2 * s0), (k0, 0.8 * s0)];
    let mut best: Option<LmResult> = None;
    for (k, s) in starts {
        let a = linear_amplitude(x, y, k, s);
        if !(a.is_finite() && a > 0.0) {
            continue;
        }
        let fit = levenberg_marquardt(
            |p| weibull_residuals(x, y, p),
            &[k.ln(), s.ln(), a],
            &LmOptions::default(),
        );
        if fit.converged && fit.rss.is_finite() && best.as_ref().is_none_or(|b| fit.rss < b.rss) {
            best = Some(fit);
        }
    }
    let fit = best.ok_or_else(|| Error::FitFailed("no Weibull start converged".into()))?;
    let (k, scale, amplitude) = (fit.x[0].exp(), fit.x[1].exp(), fit.x[2]);

    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = 1.0 - fit.rss / tss;

    // covariance in (k, scale, A): rescale the log-parameter columns
    let dof = (x.len() - 3) as f64;
    let jac_scale = [k, scale, 1.0];
    let mut jtj = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            jtj[i * 3 + j] = fit.jtj[i * 3 + j] / (jac_scale[i] * jac_scale[j]);
        }
    }
    let inv = invert_small(&jtj, 3).ok_or_else(|| Error::RankDeficient("singular Weibull normal matrix".into()))?;
    let sigma2 = fit.rss / dof;
    let mut covariance = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            covariance[i][j] = sigma2 * inv[i * 3 + j];
        }
    }

    let (peak_location, peak_height) = weibull_peak(k, scale, amplitude);
    let p = [k, scale, amplitude];
    let grad = |f: &dyn Fn(&[f64; 3]) -> f64| -> [f64; 3] {
        let mut g = [0.0; 3];
        for i in 0..3 {
            let h = 1e-6 * p[i].abs().max(1e-12);
            let mut hi = p;
            let mut lo = p;
            hi[i] += h;
            lo[i] -= h;
            g[i] = (f(&hi) - f(&lo)) / (2.0 * h);
        }
        g
    };
    let propagate = |g: [f64; 3]| -> f64 {
        let mut v = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                v += g[i] * covariance[i][j] * g[j];
            }
        }
        v.max(0.0).sqrt()
    };
    let (peak_location_err, peak_height_err) = if k > 1.0 {
        (
            propagate(grad(&|q| weibull_peak(q[0], q[1], q[2]).0)),
            propagate(grad(&|q| weibull_peak(q[0], q[1], q[2]).1)),
        )
    } else {
        (f64::NAN, f64::NAN)
    };

    Ok(WeibullFit {
        k,
        scale,
        amplitude,
        r_squared,
        peak_location,
        peak_height,
        covariance,
        peak_location_err,
        peak_height_err,
    })
}

/// Parameters `(ln k, ln scale, A)`.
fn weibull_residuals(x: &[f64], y: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (k, s, a) = (p[0].exp(), p[1].exp(), p[2]);
    let mut r = Vec::with_capacity(x.len());
    let mut jac = Vec::with_capacity(3 * x.len());
    for (&xi, &yi) in x.iter().zip(y) {
        let u = xi / s;
        let uk = u.powf(k);
        let shape = u.powf(k - 1.0) * (-uk).exp();
        let f = a * shape;
        r.push(f - yi);
        jac.push(k * f * u.ln() * (1.0 - uk));
        jac.push(f * (k * uk - k + 1.0));
        jac.push(shape);
    }
    (r, jac)
}

/// Treats the clipped curve as an unnormalised density and matches its
/// mean and coefficient of variation.
fn moment_start(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 0..n {
        let left = if i > 0 { x[i] - x[i - 1] } else { 0.0 };
        let right = if i + 1 < n { x[i + 1] - x[i] } else { 0.0 };
        w[i] = y[i].max(0.0) * 0.5 * (left + right).abs();
    }
    let total: f64 = w.iter().sum();
    let mean = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / total;
    let var = x.iter().zip(&w).map(|(a, b)| (a - mean).powi(2) * b).sum::<f64>() / total;
    let cv = var.sqrt() / mean;
    let weibull_cv = |k: f64| {
        let g1 = gamma(1.0 + 1.0 / k);
        (gamma(1.0 + 2.0 / k) / (g1 * g1) - 1.0).sqrt()
    };
    // cv decreases monotonically in k
    let (mut lo, mut hi) = (0.3f64, 50.0f64);
    if cv >= weibull_cv(lo) {
        hi = lo;
    } else if cv <= weibull_cv(hi) {
        lo = hi;
    } else {
        for _ in 0..100 {
            let mid = (lo * hi).sqrt();
            if weibull_cv(mid) > cv {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let k = 0.5 * (lo + hi);
    (k, mean / gamma(1.0 + 1.0 / k))
}

fn linear_amplitude(x: &[f64], y: &[f64], k: f64, s: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let g = weibull(xi, k, s, 1.0);
        num += g * yi;
        den += g * g;
    }
    num / den
}

/// One susceptibility peak for the scaling fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n_sites: usize,
    /// Aspect ratio `Nx/Ny`.
    pub anisotropy: f64,
    pub chi_peak: f64,
    /// Standard error of `chi_peak`; zero for unweighted fits.
    pub chi_err: f64,
}

/// `χ_peak = c N^α (1 + d (ln a)²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub c: f64,
    pub alpha: f64,
    pub d: f64,
    /// Covariance of `(c, alpha, d)`.
    pub covariance: [[f64; 3]; 3],
    /// `(ln N, ln(χ_peak / χ̃(a)))` per input point.
    pub collapse: Vec<(f64, f64)>,
    pub residuals: Vec<f64>,
}

impl ScalingFit {
    pub fn alpha_err(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }
}

/// Anisotropy correction `χ̃(a) = 1 + d (ln a)²`.
pub fn anisotropy_factor(a: f64, d: f64) -> f64 {
    1.0 + d * a.ln().powi(2)
}

/// Nonlinear least squares on `ln χ_peak`. Weighted by the relative peak
/// errors when every point has one.
pub fn finite_size_scaling(points: &[ScalingPoint]) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::InvalidCurve(format!(
            "need at least 4 peaks, got {}",
            points.len()
        )));
    }
    for p in points {
        if p.n_sites == 0 || !(p.chi_peak > 0.0) || !(p.anisotropy > 0.0) || !p.chi_err.is_finite() {
            return Err(Error::InvalidCurve(format!("invalid scaling point {p:?}")));
        }
        if p.anisotropy.ln().abs() > 4f64.ln() + 1e-12 {
            return Err(Error::InvalidCurve(format!(
                "anisotropy {} outside [1/4, 4]",
                p.anisotropy
            )));
        }
    }
    if points.iter().all(|p| p.n_sites == points[0].n_sites) {
        return Err(Error::RankDeficient("all peaks share one lattice size".into()));
    }
    let weighted = points.iter().all(|p| p.chi_err > 0.0);
    let w: Vec<f64> = points
        .iter()
        .map(|p| if weighted { p.chi_peak / p.chi_err } else { 1.0 })
        .collect();
    let ln_n: Vec<f64> = points.iter().map(|p| (p.n_sites as f64).ln()).collect();
    let l2: Vec<f64> = points.iter().map(|p| p.anisotropy.ln().powi(2)).collect();
    let ln_chi: Vec<f64> = points.iter().map(|p| p.chi_peak.ln()).collect();

    let model = |q: &[f64]| {
        let mut r = Vec::with_capacity(points.len());
        let mut jac = Vec::with_capacity(3 * points.len());
        for i in 0..points.len() {
            let t = 1.0 + q[2] * l2[i];
            r.push(w[i] * (q[0] + q[1] * ln_n[i] + t.ln() - ln_chi[i]));
            jac.extend([w[i], w[i] * ln_n[i], w[i] * l2[i] / t]);
        }
        (r, jac)
    };
    let (c0, a0) = weighted_line(&ln_n, &ln_chi, &w);
    let fit = levenberg_marquardt(model, &[c0, a0, 0.0], &LmOptions::default());
    if !fit.converged || !fit.rss.is_finite() {
        return Err(Error::FitFailed("scaling fit did not converge".into()));
    }
    let inv = invert_small(&fit.jtj, 3)
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::RankDeficient("scaling normal matrix is singular".into()))?;
    let dof = points.len() as f64 - 3.0;
    let sigma2 = if dof > 0.0 { fit.rss / dof } else { 1.0 };
    let c = fit.x[0].exp();
    let to_natural = [c, 1.0, 1.0];
    let mut covariance = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            covariance[i][j] = sigma2 * inv[i * 3 + j] * to_natural[i] * to_natural[j];
        }
    }
    let d = fit.x[2];
    let collapse = points
        .iter()
        .zip(&ln_n)
        .map(|(p, &x)| (x, (p.chi_peak / anisotropy_factor(p.anisotropy, d)).ln()))
        .collect();
    let residuals = fit.residuals.iter().zip(&w).map(|(r, w)| r / w).collect();
    Ok(ScalingFit {
        c,
        alpha: fit.x[1],
        d,
        covariance,
        collapse,
        residuals,
    })
}

fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64) {
    let sw: f64 = w.iter().map(|v| v * v).sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b * b).sum::<f64>() / sw;
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, b), c)| (a - mx) * (b - my) * c * c)
        .sum();
    let sxx: f64 = x.iter().zip(w).map(|(a, c)| (a - mx).powi(2) * c * c).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    /// η of one `n_ref`-spin cluster in T·Hz^(−1/2).
    pub eta_ref: f64,
    /// η extrapolated to `n_target` spins.
    pub eta: f64,
    pub n_ref: usize,
    pub n_target: f64,
    pub formula: String,
}

/// Projection-noise-limited sensitivity of a critical cluster,
/// `η_ref = σ_m √τ_c / χ_DC` with `σ_m = 1/(2√N_ref)` and `τ_c = 1/γ`,
/// tiled to `N_target` spins as `η = η_ref √(N_ref/N_target)`.
///
/// `chi_dc_peak` is `∂m/∂B` in 1/T and `gamma` the pump rate in rad·MHz.
pub fn sensitivity_estimate(chi_dc_peak: f64, n_ref: usize, n_target: f64, gamma: f64) -> Result<Sensitivity> {
    if !(chi_dc_peak > 0.0) || !chi_dc_peak.is_finite() {
        return Err(Error::InvalidParams(format!(
            "susceptibility must be positive, got {chi_dc_peak}"
        )));
    }
    if n_ref == 0 || !(n_target > 0.0) || !(gamma > 0.0) {
        return Err(Error::InvalidParams("sizes and pump rate must be positive".into()));
    }
    let sigma_m = 0.5 / (n_ref as f64).sqrt();
    let tau_c = 1e-6 / gamma;
    let eta_ref = sigma_m * tau_c.sqrt() / chi_dc_peak;
    Ok(Sensitivity {
        eta_ref,
        eta: eta_ref * (n_ref as f64 / n_target).sqrt(),
        n_ref,
        n_target,
        formula: "eta = (1/(2 sqrt(N_ref))) * sqrt(1/gamma) / chi_DC * sqrt(N_ref/N_target)".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prov() -> Provenance {
        Provenance {
            solver: "test".into(),
            params: ModelParams::default(),
            seed: None,
        }
    }

    fn sweep(grid: Vec<f64>, m: Vec<f64>) -> SweepResult {
        let e = vec![0.0; grid.len()];
        SweepResult::new(Control::Omega, grid, m, e, prov()).unwrap()
    }

    #[test]
    fn constant_magnetization_has_zero_susceptibility() {
        let s = susceptibility(&sweep(vec![1.0, 2.0, 3.5, 4.0], vec![0.2; 4])).unwrap();
        assert!(s.chi.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn linear_magnetization_is_differentiated_exactly() {
        let grid: Vec<f64> = (0..9).map(|i| 0.5 + 0.25 * i as f64).collect();
        let m: Vec<f64> = grid.iter().map(|x| 0.3 * x - 0.1).collect();
        let s = susceptibility(&sweep(grid, m)).unwrap();
        for c in &s.chi {
            assert!((c - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn susceptibility_of_cumulative_weibull() {
        let (k, l) = (3.0, 2.0);
        let h = 0.02;
        let grid: Vec<f64> = (1..300).map(|i| i as f64 * h).collect();
        let m: Vec<f64> = grid.iter().map(|x| 1.0 - (-(x / l).powf(k)).exp()).collect();
        let s = susceptibility(&sweep(grid.clone(), m)).unwrap();
        // density k/l (x/l)^(k-1) e^{-(x/l)^k}; third derivative bounded by ~3
        for i in 1..grid.len() - 1 {
            let exact = weibull(grid[i], k, l, k / l);
            assert!((s.chi[i] - exact).abs() < 3.0 * h * h, "{i}");
        }
    }

    #[test]
    fn susceptibility_errors_propagate() {
        let s = SweepResult::new(
            Control::Omega,
            vec![0.0, 1.0, 2.0],
            vec![0.0, 0.1, 0.3],
            vec![0.03, 0.01, 0.04],
            prov(),
        )
        .unwrap();
        let chi = susceptibility(&s).unwrap();
        assert!((chi.chi_err[1] - 0.05 / 2.0).abs() < 1e-15);
        assert!((chi.chi_err[0] - 0.03f64.hypot(0.01)).abs() < 1e-15);
    }

    #[test]
    fn sweep_validation() {
        assert!(SweepResult::new(Control::Omega, vec![1.0, 1.0, 2.0], vec![0.0; 3], vec![0.0; 3], prov()).is_err());
        assert!(SweepResult::new(Control::Omega, vec![1.0, 2.0], vec![0.0; 3], vec![0.0; 2], prov()).is_err());
        assert!(susceptibility(&sweep(vec![1.0, 2.0], vec![0.0, 0.1])).is_err());
    }

    fn synthetic(n: usize) -> Vec<f64> {
        (0..n).map(|i| 0.1 + 5.9 * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn weibull_recovers_exact_parameters() {
        let x = synthetic(50);
        let y: Vec<f64> = x.iter().map(|&v| weibull(v, 3.0, 2.0, 1.0)).collect();
        let f = weibull_fit(&x, &y).unwrap();
        assert!((f.k / 3.0 - 1.0).abs() < 1e-6, "{f:?}");
        assert!((f.scale / 2.0 - 1.0).abs() < 1e-6);
        assert!((f.amplitude - 1.0).abs() < 1e-6);
        assert!(f.r_squared > 1.0 - 1e-12);
        let mode = 2.0 * (2.0f64 / 3.0).powf(1.0 / 3.0);
        assert!((f.peak_location - mode).abs() < 1e-6);
    }

    #[test]
    fn weibull_recovers_noisy_parameters() {
        let x = synthetic(50);
        let clean: Vec<f64> = x.iter().map(|&v| weibull(v, 3.0, 2.0, 1.0)).collect();
        let peak = clean.iter().copied().fold(0.0, f64::max);
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = clean
                .iter()
                .map(|v| {
                    // approximately normal, unit variance
                    let z: f64 = (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0;
                    v + 0.01 * peak * z
                })
                .collect();
            let f = weibull_fit(&x, &y).unwrap();
            assert!((f.k / 3.0 - 1.0).abs() < 0.05, "seed {seed}: {f:?}");
            assert!((f.scale / 2.0 - 1.0).abs() < 0.05);
            assert!((f.amplitude - 1.0).abs() < 0.05);
            assert!(f.r_squared > 0.99);
        }
    }

    #[test]
    fn weibull_rejects_bad_curves() {
        let x = synthetic(10);
        assert!(matches!(weibull_fit(&x, &[0.5; 10]), Err(Error::InvalidCurve(_))));
        assert!(matches!(weibull_fit(&x, &[-1.0; 10]), Err(Error::InvalidCurve(_))));
        assert!(weibull_fit(&x[..5], &[1.0, 2.0, 3.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn weibull_peak_errors_are_consistent() {
        let x = synthetic(40);
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| weibull(v, 2.5, 1.5, 2.0) * (1.0 + 0.02 * ((i * 7 % 5) as f64 - 2.0)))
            .collect();
        let f = weibull_fit(&x, &y).unwrap();
        assert!(f.peak_height_err > 0.0 && f.peak_height_err < 0.1 * f.peak_height);
        assert!(f.peak_location_err > 0.0 && f.peak_location_err < 0.1 * f.peak_location);
    }

    fn geometries() -> Vec<(usize, usize)> {
        vec![(2, 3), (2, 4), (3, 3), (3, 4), (4, 4), (4, 5)]
    }

    #[test]
    fn scaling_recovers_exact_parameters() {
        let pts: Vec<ScalingPoint> = geometries()
            .into_iter()
            .map(|(a, b)| {
                let n = a * b;
                let an = b as f64 / a as f64;
                ScalingPoint {
                    n_sites: n,
                    anisotropy: an,
                    chi_peak: (n as f64).powf(0.5) * anisotropy_factor(an, 0.2),
                    chi_err: 0.0,
                }
            })
            .collect();
        let f = finite_size_scaling(&pts).unwrap();
        assert!(
            (f.c - 1.0).abs() < 1e-8 && (f.alpha - 0.5).abs() < 1e-8 && (f.d - 0.2).abs() < 1e-8,
            "{f:?}"
        );
        for (x, y) in &f.collapse {
            assert!((y - 0.5 * x).abs() < 1e-8);
        }
    }

    #[test]
    fn anisotropy_factor_is_symmetric() {
        assert_eq!(anisotropy_factor(1.0, 0.7), 1.0);
        for a in [1.5, 2.0, 3.7] {
            assert!((anisotropy_factor(a, 0.3) - anisotropy_factor(1.0 / a, 0.3)).abs() < 1e-15);
        }
    }

    #[test]
    fn scaling_rejects_single_size() {
        let p = ScalingPoint {
            n_sites: 12,
            anisotropy: 1.0,
            chi_peak: 1.0,
            chi_err: 0.0,
        };
        let pts = vec![
            p,
            ScalingPoint { anisotropy: 1.5, ..p },
            ScalingPoint { anisotropy: 2.0, ..p },
            ScalingPoint { anisotropy: 3.0, ..p },
        ];
        assert!(matches!(finite_size_scaling(&pts), Err(Error::RankDeficient(_))));
        assert!(finite_size_scaling(&pts[..3]).is_err());
        let wide = vec![
            ScalingPoint {
                anisotropy: 5.0,
                n_sites: 5,
                ..p
            };
            4
        ];
        assert!(matches!(finite_size_scaling(&wide), Err(Error::InvalidCurve(_))));
    }

    #[test]
    fn sensitivity_tiling() {
        let s = sensitivity_estimate(5e3, 16, 16.0, 1.0).unwrap();
        assert_eq!(s.eta, s.eta_ref);
        // σ_m = 1/8, √τ_c = 1e-3 s^½
        assert!((s.eta_ref - 0.125e-3 / 5e3).abs() < 1e-20);
        let small = sensitivity_estimate(5e3, 16, 1e3, 1.0).unwrap();
        let large = sensitivity_estimate(5e3, 16, 1e11, 1.0).unwrap();
        assert!((large.eta / small.eta - 1e-4).abs() < 1e-16);
        assert!(sensitivity_estimate(0.0, 16, 1e3, 1.0).is_err());
        assert!(sensitivity_estimate(-2.0, 16, 1e3, 1.0).is_err());
    }
}
