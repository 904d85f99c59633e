//! Exact density-matrix evolution of the master equation
//! `dρ/dt = -i[H, ρ] + Σ_k (c ρ c† - ½{c†c, ρ})`.
//!
//! Intended for small lattices; the density matrix is stored dense and the
//! operators are applied as sparse-dense products.

use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::observables;
use crate::operators::{effective_hamiltonian, SparseOperator, C0, C1, CI};

/// Largest lattice for RK4 evolution (ρ of dimension 1024).
pub const MAX_EVOLVE_SITES: usize = 10;
/// Largest lattice for the explicit Liouvillian (4096 × 4096).
pub const MAX_NULLSPACE_SITES: usize = 6;

/// Dense row-major density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl DensityMatrix {
    /// Wraps row-major `data` of a `dim × dim` matrix.
    pub fn from_data(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::ShapeMismatch {
                expected: dim * dim,
                actual: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![C0; dim * dim],
        }
    }

    pub fn from_pure(psi: &[Complex64]) -> Self {
        let dim = psi.len();
        let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
        let mut rho = Self::zeros(dim);
        for r in 0..dim {
            for c in 0..dim {
                rho.data[r * dim + c] = psi[r] * psi[c].conj() / norm;
            }
        }
        rho
    }

    /// `|b><b|` for a computational basis state.
    pub fn basis_state(dim: usize, b: usize) -> Self {
        let mut rho = Self::zeros(dim);
        rho.data[b * dim + b] = C1;
        rho
    }

    /// All spins in the pump target state.
    pub fn ground(n_sites: usize) -> Self {
        let dim = 1usize << n_sites;
        Self::basis_state(dim, dim - 1)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let mut rho = Self::zeros(dim);
        for i in 0..dim {
            rho.data[i * dim + i] = C1 / dim as f64;
        }
        rho
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.dim + c]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// `max |ρ - ρ†|` over entries.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.dim {
            for c in r..self.dim {
                worst = worst.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::hermitian_eigenvalues(&self.data, self.dim)[0]
    }

    /// Σ|λ| for a Hermitian matrix.
    pub fn trace_norm(&self) -> f64 {
        linalg::hermitian_trace_norm(&self.data, self.dim)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        let mut diff = self.clone();
        for (d, o) in diff.data.iter_mut().zip(&other.data) {
            *d -= o;
        }
        0.5 * diff.trace_norm()
    }

    pub fn site_sz(&self, n_sites: usize) -> Vec<f64> {
        observables::site_sz_from_weights((0..self.dim).map(|i| self.get(i, i).re), n_sites)
    }

    pub fn magnetization(&self, n_sites: usize) -> f64 {
        observables::magnetization(&self.site_sz(n_sites))
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        for (d, v) in self.data.iter_mut().zip(&x.data) {
            *d += v * a;
        }
    }
}

/// Precomputed generator for repeated right-hand-side evaluations.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    heff: SparseOperator,
    jumps: Vec<SparseOperator>,
    dim: usize,
}

impl Liouvillian {
    pub fn new(h: &SparseOperator, jumps: &[SparseOperator]) -> Result<Self> {
        let dim = h.dim();
        for c in jumps {
            if c.dim() != dim {
                return Err(Error::ShapeMismatch {
                    expected: dim,
                    actual: c.dim(),
                });
            }
        }
        Ok(Self {
            heff: effective_hamiltonian(h, jumps),
            jumps: jumps.to_vec(),
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes `L(ρ)` into `out`, using `-iH_eff ρ + h.c. + Σ c ρ c†`.
    pub fn apply_into(&self, rho: &DensityMatrix, out: &mut DensityMatrix, scratch: &mut Vec<Complex64>) {
        let d = self.dim;
        let minus_i = -CI;
        // B = -i H_eff ρ
        let b = &mut out.data;
        b.iter_mut().for_each(|v| *v = C0);
        for r in 0..d {
            let row_out = &mut b[r * d..(r + 1) * d];
            for (k, v) in self.heff.row(r) {
                let coef = minus_i * v;
                let row_in = &rho.data[k * d..(k + 1) * d];
                for (o, x) in row_out.iter_mut().zip(row_in) {
                    *o += coef * x;
                }
            }
        }
        // B + B†
        for r in 0..d {
            for c in r..d {
                let upper = b[r * d + c];
                let lower = b[c * d + r];
                let s = upper + lower.conj();
                b[r * d + c] = s;
                b[c * d + r] = s.conj();
            }
        }
        // Σ c ρ c†
        scratch.resize(d * d, C0);
        for c_op in &self.jumps {
            // T = c ρ
            scratch.iter_mut().for_each(|v| *v = C0);
            for r in 0..d {
                for (k, v) in c_op.row(r) {
                    let row_in = &rho.data[k * d..(k + 1) * d];
                    let row_t = &mut scratch[r * d..(r + 1) * d];
                    for (o, x) in row_t.iter_mut().zip(row_in) {
                        *o += v * x;
                    }
                }
            }
            // out[a, b] += Σ_j T[a, j] conj(c[b, j])
            for bcol in 0..d {
                for (j, v) in c_op.row(bcol) {
                    let vc = v.conj();
                    for a in 0..d {
                        b[a * d + bcol] += scratch[a * d + j] * vc;
                    }
                }
            }
        }
    }

    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        let mut out = DensityMatrix::zeros(self.dim);
        let mut scratch = Vec::new();
        self.apply_into(rho, &mut out, &mut scratch);
        out
    }
}

/// Right-hand side of the master equation at `rho`.
pub fn lindblad_rhs(rho: &DensityMatrix, h: &SparseOperator, jumps: &[SparseOperator]) -> Result<DensityMatrix> {
    if rho.dim() != h.dim() {
        return Err(Error::ShapeMismatch {
            expected: h.dim(),
            actual: rho.dim(),
        });
    }
    Ok(Liouvillian::new(h, jumps)?.apply(rho))
}

#[derive(Debug, Clone)]
pub struct SteadyStateOptions {
    pub dt: f64,
    /// Convergence threshold on the trace norm of dρ/dt.
    pub tol: f64,
    pub max_time: f64,
    /// Residual is checked every this many steps.
    pub check_every: usize,
}

impl SteadyStateOptions {
    /// `dt = 0.01 / rate_scale`, `tol = 1e-8`.
    pub fn for_rate_scale(rate_scale: f64) -> Self {
        Self {
            dt: 0.01 / rate_scale,
            tol: 1e-8,
            max_time: 2.0e3,
            check_every: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    pub residual: f64,
    pub time: f64,
    pub steps: usize,
}

/// Trace-norm of a Hermitian derivative, using the Frobenius bounds
/// `‖A‖_F ≤ ‖A‖_tr ≤ √d ‖A‖_F` to skip the eigen-solve when decisive.
fn residual_below(deriv: &DensityMatrix, tol: f64) -> (bool, f64) {
    let f = deriv.frobenius_norm();
    if f >= tol {
        return (false, f);
    }
    if f * (deriv.dim() as f64).sqrt() < tol {
        return (true, f);
    }
    let tn = deriv.trace_norm();
    (tn < tol, tn)
}

/// Reusable RK4 workspace for the master equation.
#[derive(Debug)]
pub struct Rk4Stepper {
    k: [DensityMatrix; 4],
    stage: DensityMatrix,
    scratch: Vec<Complex64>,
}

impl Rk4Stepper {
    pub fn new(dim: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| DensityMatrix::zeros(dim)),
            stage: DensityMatrix::zeros(dim),
            scratch: Vec::new(),
        }
    }

    /// Derivative `L(ρ)` at the start of the most recent step.
    pub fn start_derivative(&self) -> &DensityMatrix {
        &self.k[0]
    }

    /// Evaluates `L(ρ)` into the first stage without stepping.
    pub fn derivative(&mut self, liou: &Liouvillian, rho: &DensityMatrix) -> &DensityMatrix {
        liou.apply_into(rho, &mut self.k[0], &mut self.scratch);
        &self.k[0]
    }

    /// Advances `rho` by `dt`, reusing a derivative already stored by
    /// [`Rk4Stepper::derivative`] when `have_k1` is set.
    pub fn step(&mut self, liou: &Liouvillian, rho: &mut DensityMatrix, dt: f64, have_k1: bool) {
        if !have_k1 {
            liou.apply_into(rho, &mut self.k[0], &mut self.scratch);
        }
        for s in 1..4 {
            let h = if s == 3 { dt } else { 0.5 * dt };
            self.stage.data.copy_from_slice(&rho.data);
            self.stage.axpy(h, &self.k[s - 1]);
            let (_, rest) = self.k.split_at_mut(s);
            liou.apply_into(&self.stage, &mut rest[0], &mut self.scratch);
        }
        let [k1, k2, k3, k4] = &self.k;
        for (i, r) in rho.data.iter_mut().enumerate() {
            *r += (k1.data[i] + (k2.data[i] + k3.data[i]) * 2.0 + k4.data[i]) * (dt / 6.0);
        }
    }
}

/// Classical RK4 until `‖dρ/dt‖_tr < tol`.
pub fn evolve_to_steady_state(
    rho0: &DensityMatrix,
    h: &SparseOperator,
    jumps: &[SparseOperator],
    opts: &SteadyStateOptions,
) -> Result<SteadyState> {
    let n_sites = h.dim().trailing_zeros() as usize;
    if n_sites > MAX_EVOLVE_SITES {
        return Err(Error::TooManySites {
            sites: n_sites,
            limit: MAX_EVOLVE_SITES,
            backend: "density-matrix RK4",
        });
    }
    if rho0.dim() != h.dim() {
        return Err(Error::ShapeMismatch {
            expected: h.dim(),
            actual: rho0.dim(),
        });
    }
    let liou = Liouvillian::new(h, jumps)?;
    let mut stepper = Rk4Stepper::new(liou.dim());
    let mut rho = rho0.clone();
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut residual;
    loop {
        let check = steps % opts.check_every.max(1) == 0;
        if check {
            let (done, r) = residual_below(stepper.derivative(&liou, &rho), opts.tol);
            residual = r;
            if done {
                return Ok(SteadyState {
                    rho,
                    residual,
                    time: t,
                    steps,
                });
            }
            if t >= opts.max_time {
                return Err(Error::NotConverged {
                    time: t,
                    residual,
                    tol: opts.tol,
                });
            }
        }
        stepper.step(&liou, &mut rho, opts.dt, check);
        t += opts.dt;
        steps += 1;
    }
}

/// Index of the real coordinate for the Hermitian parametrisation:
/// `ρ_ii` on the diagonal, `Re ρ_ij` at `(i, j)` and `Im ρ_ij` at `(j, i)`
/// for `i < j`.
fn hermitian_to_real(rho: &DensityMatrix) -> Vec<f64> {
    let d = rho.dim();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = rho.get(i, i).re;
        for j in i + 1..d {
            let z = rho.get(i, j);
            v[i * d + j] = z.re;
            v[j * d + i] = z.im;
        }
    }
    v
}

fn real_to_hermitian(v: &[f64], d: usize) -> DensityMatrix {
    let mut rho = DensityMatrix::zeros(d);
    for i in 0..d {
        rho.data[i * d + i] = C1 * v[i * d + i];
        for j in i + 1..d {
            let z = Complex64::new(v[i * d + j], v[j * d + i]);
            rho.data[i * d + j] = z;
            rho.data[j * d + i] = z.conj();
        }
    }
    rho
}

/// Steady state from the kernel of the explicit Liouvillian.
///
/// The generator maps Hermitian matrices to Hermitian matrices, so it is
/// assembled as a real `d² × d²` matrix. One (redundant) diagonal equation
/// is replaced by the trace condition and the bordered system is solved by
/// LU decomposition.
pub fn steady_state_nullspace(h: &SparseOperator, jumps: &[SparseOperator]) -> Result<DensityMatrix> {
    let d = h.dim();
    let n_sites = d.trailing_zeros() as usize;
    if n_sites > MAX_NULLSPACE_SITES {
        return Err(Error::TooManySites {
            sites: n_sites,
            limit: MAX_NULLSPACE_SITES,
            backend: "explicit Liouvillian",
        });
    }
    let liou = Liouvillian::new(h, jumps)?;
    let n = d * d;
    let mut m = Mat::<f64>::zeros(n, n);
    let mut out = DensityMatrix::zeros(d);
    let mut scratch = Vec::new();
    let mut unit = vec![0.0; n];
    for k in 0..n {
        unit[k] = 1.0;
        let basis = real_to_hermitian(&unit, d);
        unit[k] = 0.0;
        liou.apply_into(&basis, &mut out, &mut scratch);
        for (r, v) in hermitian_to_real(&out).into_iter().enumerate() {
            m[(r, k)] = v;
        }
    }
    let mut scale: f64 = 1.0;
    for k in 0..n {
        for r in 0..n {
            scale = scale.max(m[(r, k)].abs());
        }
    }
    // the ρ_00 equation is redundant given trace preservation
    for k in 0..n {
        m[(0, k)] = 0.0;
    }
    for i in 0..d {
        m[(0, i * d + i)] = scale;
    }
    let mut rhs = vec![0.0; n];
    rhs[0] = scale;

    let check = m.clone();
    let sol = linalg::lu_solve(m, &rhs);
    if !(sol.pivot_ratio > 1e-12) || sol.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateKernel);
    }
    let mut residual: f64 = 0.0;
    for r in 0..n {
        let row: f64 = (0..n).map(|k| check[(r, k)] * sol.x[k]).sum();
        residual = residual.max((row - rhs[r]).abs());
    }
    if residual > 1e-8 * scale {
        return Err(Error::DegenerateKernel);
    }
    let v = sol.x;
    Ok(real_to_hermitian(&v, d))
}
