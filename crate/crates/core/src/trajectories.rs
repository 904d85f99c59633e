//! Quantum-jump (Monte Carlo wavefunction) unravelling of the master
//! equation.
//!
//! Each trajectory integrates `dψ/dt = -i H_eff ψ` with RK4 and keeps ψ
//! unnormalised. A jump fires when `‖ψ‖²` falls to a uniform variate `r`;
//! the crossing time is located by linear interpolation of the norm over
//! the step. Observables are time averaged with the trapezoidal rule.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::EffectiveGenerator;
use crate::lattice::MAX_STATE_VECTOR_SITES;
use crate::observables::magnetization;
use crate::operators::{effective_hamiltonian, SparseOperator, C0, C1};

/// Pure state on `n` spins.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amps: Vec<Complex64>,
}

impl PureState {
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        if !amps.len().is_power_of_two() {
            return Err(Error::ShapeMismatch {
                expected: amps.len().next_power_of_two(),
                actual: amps.len(),
            });
        }
        Ok(Self { amps })
    }

    /// All spins in `|g>`.
    pub fn ground(n_sites: usize) -> Self {
        let dim = 1usize << n_sites;
        let mut amps = vec![C0; dim];
        amps[dim - 1] = C1;
        Self { amps }
    }

    /// All spins in `|e>`.
    pub fn all_excited(n_sites: usize) -> Self {
        let mut amps = vec![C0; 1usize << n_sites];
        amps[0] = C1;
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn n_sites(&self) -> usize {
        self.amps.len().trailing_zeros() as usize
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amps)
    }
}

/// Parameters of a trajectory ensemble. Times in µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub n_trajectories: usize,
    pub t_burn_in: f64,
    pub t_average: f64,
    pub dt: f64,
    pub seed: u64,
}

impl TrajectoryConfig {
    /// Default step `0.2 / rate_scale`: inside the RK4 stability region
    /// for planar lattices and converged to well below one standard error
    /// under halving.
    pub fn default_dt(rate_scale: f64) -> f64 {
        0.2 / rate_scale
    }

    /// Production defaults: 1000 trajectories, `10/γ` burn-in, `100/γ`
    /// averaging window.
    pub fn for_rates(gamma: f64, dt: f64, seed: u64) -> Self {
        Self {
            n_trajectories: 1000,
            t_burn_in: 10.0 / gamma,
            t_average: 100.0 / gamma,
            dt,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if self.n_trajectories == 0 {
            return bad("n_trajectories must be positive");
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.t_burn_in.is_finite() && self.t_burn_in >= 0.0) {
            return bad("t_burn_in must be non-negative");
        }
        if !(self.t_average.is_finite() && self.t_average > 0.0) {
            return bad("t_average must be positive");
        }
        Ok(())
    }
}

/// Time-averaged outcome of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub index: usize,
    pub site_sz: Vec<f64>,
    pub magnetization: f64,
    pub n_jumps: usize,
}

/// Ensemble statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub magnetization: f64,
    /// Standard error of the mean across trajectories.
    pub stderr: f64,
    pub site_sz: Vec<f64>,
    pub n_jumps_mean: f64,
    pub records: Vec<TrajectoryRecord>,
}

/// Precomputed generator and jump channels shared by all trajectories.
#[derive(Debug, Clone)]
pub struct TrajectorySystem {
    generator: EffectiveGenerator,
    jumps: Vec<SparseOperator>,
    n_sites: usize,
    /// Gershgorin bound on the spectral radius of `H_eff`.
    spectral_bound: f64,
}

impl TrajectorySystem {
    pub fn new(h: &SparseOperator, jumps: &[SparseOperator]) -> Result<Self> {
        let heff = Self::checked_heff(h, jumps)?;
        Ok(Self::from_heff(&heff, jumps, EffectiveGenerator::new(&heff)))
    }

    /// Same system forced onto the CSR kernel.
    pub fn new_csr(h: &SparseOperator, jumps: &[SparseOperator]) -> Result<Self> {
        let heff = Self::checked_heff(h, jumps)?;
        Ok(Self::from_heff(&heff, jumps, EffectiveGenerator::csr(&heff)))
    }

    fn checked_heff(h: &SparseOperator, jumps: &[SparseOperator]) -> Result<SparseOperator> {
        let dim = h.dim();
        let n_sites = dim.trailing_zeros() as usize;
        if !dim.is_power_of_two() {
            return Err(Error::ShapeMismatch {
                expected: dim.next_power_of_two(),
                actual: dim,
            });
        }
        if n_sites > MAX_STATE_VECTOR_SITES {
            return Err(Error::TooManySites {
                sites: n_sites,
                limit: MAX_STATE_VECTOR_SITES,
                backend: "quantum trajectories",
            });
        }
        if let Some(c) = jumps.iter().find(|c| c.dim() != dim) {
            return Err(Error::ShapeMismatch {
                expected: dim,
                actual: c.dim(),
            });
        }
        Ok(effective_hamiltonian(h, jumps))
    }

    fn from_heff(heff: &SparseOperator, jumps: &[SparseOperator], generator: EffectiveGenerator) -> Self {
        let spectral_bound = (0..heff.dim())
            .map(|r| heff.row(r).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        Self {
            generator,
            jumps: jumps.to_vec(),
            n_sites: heff.dim().trailing_zeros() as usize,
            spectral_bound,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn is_structured(&self) -> bool {
        self.generator.is_structured()
    }

    /// Largest step inside the RK4 stability region for the spectrum bound,
    /// with a safety factor.
    pub fn stable_dt(&self) -> f64 {
        if self.spectral_bound == 0.0 {
            f64::INFINITY
        } else {
            2.0 / self.spectral_bound
        }
    }

    /// `y = -i H_eff x`.
    pub fn derivative(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.generator.apply(x, y);
    }
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum()
}

/// Fused RK4 workspace: `stage`, `k` and the accumulated result.
struct Rk4 {
    stage: Vec<Complex64>,
    k: Vec<Complex64>,
}

impl Rk4 {
    fn new(dim: usize) -> Self {
        Self {
            stage: vec![C0; dim],
            k: vec![C0; dim],
        }
    }

    /// Writes `psi(t + dt)` into `out`.
    fn step(&mut self, sys: &TrajectorySystem, psi: &[Complex64], out: &mut [Complex64], dt: f64) {
        sys.derivative(psi, &mut self.k);
        for i in 0..psi.len() {
            out[i] = psi[i] + self.k[i] * (dt / 6.0);
            self.stage[i] = psi[i] + self.k[i] * (0.5 * dt);
        }
        sys.derivative(&self.stage, &mut self.k);
        for i in 0..psi.len() {
            out[i] += self.k[i] * (dt / 3.0);
            self.stage[i] = psi[i] + self.k[i] * (0.5 * dt);
        }
        sys.derivative(&self.stage, &mut self.k);
        for i in 0..psi.len() {
            out[i] += self.k[i] * (dt / 3.0);
            self.stage[i] = psi[i] + self.k[i] * dt;
        }
        sys.derivative(&self.stage, &mut self.k);
        for i in 0..psi.len() {
            out[i] += self.k[i] * (dt / 6.0);
        }
    }
}

/// Per-site `<σz>` of an unnormalised state with known squared norm.
fn site_sz(psi: &[Complex64], norm: f64, n_sites: usize, weights: &mut Vec<f64>) -> Vec<f64> {
    weights.clear();
    weights.extend(psi.iter().map(|a| a.norm_sqr()));
    (0..n_sites)
        .map(|site| {
            let block = 1usize << (n_sites - 1 - site);
            // bit set means |g>
            let mut ground = 0.0;
            for chunk in weights.chunks_exact(2 * block) {
                ground += chunk[block..].iter().sum::<f64>();
            }
            (norm - 2.0 * ground) / norm
        })
        .collect()
}

/// Trapezoidal average of a piecewise-linear signal over `[w0, w1]`.
struct WindowAverage {
    w0: f64,
    w1: f64,
    acc: Vec<f64>,
}

impl WindowAverage {
    fn new(w0: f64, w1: f64, n: usize) -> Self {
        Self {
            w0,
            w1,
            acc: vec![0.0; n],
        }
    }

    fn add(&mut self, a: f64, b: f64, fa: &[f64], fb: &[f64]) {
        let lo = a.max(self.w0);
        let hi = b.min(self.w1);
        if hi <= lo || b <= a {
            return;
        }
        let sa = (lo - a) / (b - a);
        let sb = (hi - a) / (b - a);
        for ((acc, &x), &y) in self.acc.iter_mut().zip(fa).zip(fb) {
            let xa = x + (y - x) * sa;
            let xb = x + (y - x) * sb;
            *acc += 0.5 * (xa + xb) * (hi - lo);
        }
    }

    fn finish(self) -> Vec<f64> {
        let span = self.w1 - self.w0;
        self.acc.into_iter().map(|v| v / span).collect()
    }
}

fn uniform_open(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Random stream for trajectory `index`: the run seed selects the key and
/// the index the ChaCha stream, so trajectories are independent of
/// scheduling.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Runs one trajectory over `[0, t_burn_in + t_average]`.
pub fn run_trajectory(
    sys: &TrajectorySystem,
    psi0: &PureState,
    cfg: &TrajectoryConfig,
    index: usize,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    if psi0.dim() != sys.dim() {
        return Err(Error::ShapeMismatch {
            expected: sys.dim(),
            actual: psi0.dim(),
        });
    }
    let n = sys.n_sites();
    let dim = sys.dim();
    let mut rng = trajectory_rng(cfg.seed, index);
    let t_end = cfg.t_burn_in + cfg.t_average;
    let mut window = WindowAverage::new(cfg.t_burn_in, t_end, n);
    let mut rk4 = Rk4::new(dim);
    let mut weights = Vec::with_capacity(dim);

    let mut psi = psi0.amplitudes().to_vec();
    let p0 = norm_sqr(&psi);
    if !(p0 > 0.0 && p0.is_finite()) {
        return Err(Error::InvalidParams("initial state has zero norm".into()));
    }
    let inv = 1.0 / p0.sqrt();
    psi.iter_mut().for_each(|a| *a *= inv);
    let mut next = vec![C0; dim];
    let mut p = 1.0;
    let mut r = uniform_open(&mut rng);
    let mut t = 0.0;
    let mut n_jumps = 0usize;
    let mut sz_now: Option<Vec<f64>> = None;
    let suggested = 0.5 * cfg.dt.min(sys.stable_dt());

    while t < t_end {
        let h = cfg.dt.min(t_end - t);
        rk4.step(sys, &psi, &mut next, h);
        let p_new = norm_sqr(&next);
        // RK4 is non-expansive inside its stability region, so growth means
        // the step is too large; losing most of the norm in one step makes
        // the interpolated jump time meaningless.
        if !p_new.is_finite() || p_new > p * (1.0 + 1e-9) || p_new < 0.5 * p {
            return Err(Error::NormUnderflow {
                dt: cfg.dt,
                suggested_dt: suggested,
            });
        }
        let in_window = t + h > cfg.t_burn_in;
        if p_new > r {
            if in_window {
                let a = sz_now.take().unwrap_or_else(|| site_sz(&psi, p, n, &mut weights));
                let b = site_sz(&next, p_new, n, &mut weights);
                window.add(t, t + h, &a, &b);
                sz_now = Some(b);
            }
            std::mem::swap(&mut psi, &mut next);
            p = p_new;
            t += h;
            continue;
        }

        let f = ((p - r) / (p - p_new)).clamp(0.0, 1.0);
        let t_jump = t + f * h;
        let counted = t_jump > cfg.t_burn_in;
        let start = if counted {
            Some(sz_now.take().unwrap_or_else(|| site_sz(&psi, p, n, &mut weights)))
        } else {
            None
        };
        for (b, a) in next.iter_mut().zip(&psi) {
            *b = *a * (1.0 - f) + *b * f;
        }
        if let Some(start) = start {
            let end = site_sz(&next, norm_sqr(&next), n, &mut weights);
            window.add(t, t_jump, &start, &end);
        }
        apply_jump(sys, &next, &mut psi, &mut rng);
        p = 1.0;
        t = t_jump;
        sz_now = None;
        n_jumps += 1;
        r = uniform_open(&mut rng);
    }
    let site_sz = window.finish();
    Ok(TrajectoryRecord {
        index,
        magnetization: magnetization(&site_sz),
        site_sz,
        n_jumps,
    })
}

/// Applies a jump channel chosen with probability `∝ ‖c_k ψ‖²` and
/// normalises the result into `out`.
fn apply_jump(sys: &TrajectorySystem, psi: &[Complex64], out: &mut [Complex64], rng: &mut ChaCha8Rng) {
    let mut weights = Vec::with_capacity(sys.jumps.len());
    for c in &sys.jumps {
        c.matvec(psi, out);
        weights.push(norm_sqr(out));
    }
    let total: f64 = weights.iter().sum();
    let target = uniform_open(rng) * total;
    let mut cum = 0.0;
    let mut chosen = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    for (k, w) in weights.iter().enumerate() {
        cum += w;
        if *w > 0.0 && cum >= target {
            chosen = k;
            break;
        }
    }
    sys.jumps[chosen].matvec(psi, out);
    let inv = 1.0 / weights[chosen].sqrt();
    out.iter_mut().for_each(|a| *a *= inv);
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Runs `cfg.n_trajectories` trajectories from `psi0` in parallel.
///
/// Every trajectory draws from its own stream and results are reduced in
/// index order, so the output is identical for any thread count.
pub fn run_ensemble_from(sys: &TrajectorySystem, psi0: &PureState, cfg: &TrajectoryConfig) -> Result<EnsembleResult> {
    cfg.validate()?;
    let records = (0..cfg.n_trajectories)
        .into_par_iter()
        .map(|i| run_trajectory(sys, psi0, cfg, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(records, sys.n_sites()))
}

/// Ensemble from the all-ground initial state.
pub fn run_ensemble(h: &SparseOperator, jumps: &[SparseOperator], cfg: &TrajectoryConfig) -> Result<EnsembleResult> {
    let sys = TrajectorySystem::new(h, jumps)?;
    run_ensemble_from(&sys, &PureState::ground(sys.n_sites()), cfg)
}

/// Mean, standard error and per-site averages over trajectory records.
pub fn summarize(records: Vec<TrajectoryRecord>, n_sites: usize) -> EnsembleResult {
    let count = records.len() as f64;
    let mut m = CompensatedSum::default();
    let mut jumps = CompensatedSum::default();
    let mut sites = vec![CompensatedSum::default(); n_sites];
    for rec in &records {
        m.add(rec.magnetization);
        jumps.add(rec.n_jumps as f64);
        for (s, v) in sites.iter_mut().zip(&rec.site_sz) {
            s.add(*v);
        }
    }
    let mean = m.value() / count;
    let stderr = if records.len() > 1 {
        let mut ss = CompensatedSum::default();
        for rec in &records {
            ss.add((rec.magnetization - mean).powi(2));
        }
        (ss.value() / (count - 1.0) / count).sqrt()
    } else {
        0.0
    };
    EnsembleResult {
        magnetization: mean,
        stderr,
        site_sz: sites.iter().map(|s| s.value() / count).collect(),
        n_jumps_mean: jumps.value() / count,
        records,
    }
}
