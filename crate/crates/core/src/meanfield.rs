//! Product-state steady states for the infinite lattice.
//!
//! Sites related by in-plane translation share one Bloch vector, so a
//! planar lattice has a single class and an `nz`-layer slab one class per
//! layer. Branches are traced by continuation in Ω or B and the physical
//! branch is selected by the variational cost: the summed trace norm of the
//! two-site Lindblad derivative of `ρ_a ⊗ ρ_b` over inequivalent bonds.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{dipolar_prefactor, LatticeSpec};
use crate::linalg::{real_eigenvalues, small_hermitian_eigenvalues, solve_small};
use crate::operators::{ModelParams, C0};
use crate::optimize::{nelder_mead, NelderMeadOptions};

/// Tolerance on the Bloch-derivative norm for converged fixed points.
pub const FIXED_POINT_TOL: f64 = 1e-10;
/// Bloch distance below which two fixed points are the same.
pub const DEDUP_DISTANCE: f64 = 1e-6;
/// Bloch distance below which the two branch optima count as one state.
/// The cost is not smooth, so the simplex search resolves minima only to
/// about this precision.
pub const BRANCH_TIE_DISTANCE: f64 = 1e-2;
const MAX_NEWTON_ITER: usize = 10_000;
const NEWTON_DAMPING: f64 = 0.5;

/// One Bloch vector `(sx, sy, sz)` per site class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductState {
    pub bloch: Vec<[f64; 3]>,
}

impl ProductState {
    pub fn new(bloch: Vec<[f64; 3]>) -> Result<Self> {
        let s = Self { bloch };
        if let Some(v) = s
            .bloch
            .iter()
            .find(|v| norm3(v) > 1.0 + 1e-9 || v.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::InvalidParams(format!(
                "Bloch vector {v:?} outside the unit ball"
            )));
        }
        Ok(s)
    }

    /// Every class in `|g>`.
    pub fn all_down(n_classes: usize) -> Self {
        Self {
            bloch: vec![[0.0, 0.0, -1.0]; n_classes],
        }
    }

    pub fn uniform(n_classes: usize, v: [f64; 3]) -> Self {
        Self {
            bloch: vec![v; n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.bloch.len()
    }

    /// Excited fraction `(1 + sz)/2` of class `k`.
    pub fn magnetization(&self, k: usize) -> f64 {
        0.5 * (1.0 + self.bloch[k][2])
    }

    pub fn magnetizations(&self) -> Vec<f64> {
        (0..self.n_classes()).map(|k| self.magnetization(k)).collect()
    }

    /// Largest Euclidean distance between corresponding Bloch vectors.
    pub fn distance(&self, other: &Self) -> f64 {
        self.bloch
            .iter()
            .zip(&other.bloch)
            .map(|(a, b)| norm3(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]]))
            .fold(0.0, f64::max)
    }

    fn flat(&self) -> Vec<f64> {
        self.bloch.iter().flatten().copied().collect()
    }

    fn from_flat(v: &[f64]) -> Self {
        Self {
            bloch: v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        }
    }

    /// Unconstrained coordinates: `s = tanh|p| · p/|p|` per class.
    fn to_unbounded(&self) -> Vec<f64> {
        self.bloch
            .iter()
            .flat_map(|v| {
                let n = norm3(v);
                let f = if n == 0.0 { 0.0 } else { n.min(0.999_999).atanh() / n };
                [v[0] * f, v[1] * f, v[2] * f]
            })
            .collect()
    }

    fn from_unbounded(p: &[f64]) -> Self {
        Self {
            bloch: p
                .chunks_exact(3)
                .map(|q| {
                    let n = norm3(&[q[0], q[1], q[2]]);
                    let f = if n == 0.0 { 0.0 } else { n.tanh() / n };
                    [q[0] * f, q[1] * f, q[2] * f]
                })
                .collect(),
        }
    }

    fn project_into_ball(&mut self) {
        for v in &mut self.bloch {
            let n = norm3(v);
            if n > 1.0 {
                v.iter_mut().for_each(|x| *x /= n);
            }
        }
    }
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// `count` neighbours of class `class` coupled with `strength`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbour {
    pub class: usize,
    pub strength: f64,
    pub count: usize,
}

/// Inequivalent bond with its multiplicity per in-plane unit cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassBond {
    pub a: usize,
    pub b: usize,
    pub strength: f64,
    pub weight: f64,
}

/// Couplings between site classes of a laterally infinite lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCouplings {
    neighbours: Vec<Vec<Neighbour>>,
    bonds: Vec<ClassBond>,
    layer_offsets_m: Vec<f64>,
}

impl ClassCouplings {
    /// Single class with four in-plane neighbours.
    pub fn uniform_2d(coupling: f64) -> Self {
        Self::layered(&LatticeSpec::planar(1, 1), coupling).expect("planar spec is valid")
    }

    /// One class per layer of `spec` (its `nx`, `ny` are ignored: the
    /// layers are infinite). In-plane and axial strengths follow the
    /// dipolar angular factor relative to `spec.dipole_axis`.
    pub fn layered(spec: &LatticeSpec, coupling: f64) -> Result<Self> {
        let nz = spec.nz;
        if nz == 0 {
            return Err(Error::InvalidLattice("at least one layer required".into()));
        }
        let axis = spec.dipole_axis;
        let norm = norm3(&axis);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidLattice("dipole axis must be non-zero".into()));
        }
        let along = |d: [f64; 3]| {
            coupling
                * dipolar_prefactor(
                    (d.iter().zip(&axis).map(|(a, b)| a * b).sum::<f64>() / norm)
                        .clamp(-1.0, 1.0)
                        .acos(),
                )
        };
        let jx = along([1.0, 0.0, 0.0]);
        let jy = along([0.0, 1.0, 0.0]);
        let jz = along([0.0, 0.0, 1.0]);
        let mut neighbours = vec![Vec::new(); nz];
        let mut bonds = Vec::new();
        for k in 0..nz {
            if jx == jy {
                neighbours[k].push(Neighbour {
                    class: k,
                    strength: jx,
                    count: 4,
                });
                bonds.push(ClassBond {
                    a: k,
                    b: k,
                    strength: jx,
                    weight: 2.0,
                });
            } else {
                neighbours[k].push(Neighbour {
                    class: k,
                    strength: jx,
                    count: 2,
                });
                neighbours[k].push(Neighbour {
                    class: k,
                    strength: jy,
                    count: 2,
                });
                bonds.push(ClassBond {
                    a: k,
                    b: k,
                    strength: jx,
                    weight: 1.0,
                });
                bonds.push(ClassBond {
                    a: k,
                    b: k,
                    strength: jy,
                    weight: 1.0,
                });
            }
            if k > 0 {
                neighbours[k].push(Neighbour {
                    class: k - 1,
                    strength: jz,
                    count: 1,
                });
            }
            if k + 1 < nz {
                neighbours[k].push(Neighbour {
                    class: k + 1,
                    strength: jz,
                    count: 1,
                });
                bonds.push(ClassBond {
                    a: k,
                    b: k + 1,
                    strength: jz,
                    weight: 1.0,
                });
            }
        }
        let spacing = spec.spacing_nm * 1e-9;
        let layer_offsets_m = (0..nz)
            .map(|k| (k as f64 - 0.5 * (nz as f64 - 1.0)) * spacing)
            .collect();
        Ok(Self {
            neighbours,
            bonds,
            layer_offsets_m,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.neighbours.len()
    }

    /// Middle layer (the lower middle for an even count).
    pub fn central_class(&self) -> usize {
        (self.n_classes() - 1) / 2
    }

    pub fn neighbours(&self, class: usize) -> &[Neighbour] {
        &self.neighbours[class]
    }

    pub fn bonds(&self) -> &[ClassBond] {
        &self.bonds
    }

    /// Per-class detuning including the gradient shift.
    pub fn detunings(&self, params: &ModelParams) -> Vec<f64> {
        self.layer_offsets_m
            .iter()
            .map(|z| params.delta + params.gyromagnetic * params.gradient_tm * z)
            .collect()
    }

    /// Mean-field vector `B` acting on `class`, optionally leaving out one
    /// neighbour of class `skip.0` with strength `skip.1`.
    fn field(
        &self,
        class: usize,
        state: &ProductState,
        params: &ModelParams,
        detuning: f64,
        skip: Option<(usize, f64)>,
    ) -> [f64; 3] {
        let mut b = [params.omega, 0.0, detuning];
        for nb in &self.neighbours[class] {
            let mut count = nb.count as f64;
            if skip == Some((nb.class, nb.strength)) {
                count -= 1.0;
            }
            let [x, y, z] = state.bloch[nb.class];
            let j = nb.strength * count;
            b[0] -= j * x;
            b[1] -= j * y;
            b[2] += j * 0.5 * (1.0 + z);
        }
        b
    }
}

/// Bloch equations `ds/dt = B × s` plus pumping toward `sz = -1` and
/// dephasing, per class.
pub fn meanfield_rhs(state: &ProductState, params: &ModelParams, couplings: &ClassCouplings) -> Vec<[f64; 3]> {
    let detunings = couplings.detunings(params);
    let transverse = 0.5 * params.gamma + 2.0 * params.t2_inverse;
    (0..couplings.n_classes())
        .map(|k| {
            let b = couplings.field(k, state, params, detunings[k], None);
            let [x, y, z] = state.bloch[k];
            [
                b[1] * z - b[2] * y - transverse * x,
                b[2] * x - b[0] * z - transverse * y,
                b[0] * y - b[1] * x - params.gamma * (1.0 + z),
            ]
        })
        .collect()
}

fn rhs_flat(v: &[f64], params: &ModelParams, couplings: &ClassCouplings) -> Vec<f64> {
    meanfield_rhs(&ProductState::from_flat(v), params, couplings)
        .into_iter()
        .flatten()
        .collect()
}

fn rhs_norm(v: &[f64], params: &ModelParams, couplings: &ClassCouplings) -> f64 {
    rhs_flat(v, params, couplings).iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Jacobian of the flattened right-hand side (row-major, `3K × 3K`). The
/// equations are quadratic, so central differences are exact up to
/// rounding.
pub fn meanfield_jacobian(state: &ProductState, params: &ModelParams, couplings: &ClassCouplings) -> Vec<f64> {
    let x = state.flat();
    let n = x.len();
    let mut jac = vec![0.0; n * n];
    let mut xp = x.clone();
    for j in 0..n {
        let h = 1e-5;
        xp[j] = x[j] + h;
        let fp = rhs_flat(&xp, params, couplings);
        xp[j] = x[j] - h;
        let fm = rhs_flat(&xp, params, couplings);
        xp[j] = x[j];
        for i in 0..n {
            jac[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Linear stability: every Jacobian eigenvalue has negative real part.
pub fn is_stable(state: &ProductState, params: &ModelParams, couplings: &ClassCouplings) -> bool {
    let n = 3 * state.n_classes();
    real_eigenvalues(&meanfield_jacobian(state, params, couplings), n)
        .iter()
        .all(|l| l.re < -1e-9)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub state: ProductState,
    /// Norm of the Bloch derivative.
    pub residual: f64,
    pub variational_cost: f64,
    pub stable: bool,
}

/// Damped Newton iteration from `start`. Steps are halved until the
/// residual decreases and iterates are kept inside the unit ball.
/// Returns the final state and residual whether or not it converged.
pub fn newton_fixed_point(
    start: &ProductState,
    params: &ModelParams,
    couplings: &ClassCouplings,
) -> (ProductState, f64) {
    let n = 3 * start.n_classes();
    let mut s = start.clone();
    s.project_into_ball();
    let mut x = s.flat();
    let mut res = rhs_norm(&x, params, couplings);
    for _ in 0..MAX_NEWTON_ITER {
        if res < FIXED_POINT_TOL {
            break;
        }
        let f = rhs_flat(&x, params, couplings);
        let jac = meanfield_jacobian(&ProductState::from_flat(&x), params, couplings);
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let Some(step) = solve_small(&jac, n, &neg) else {
            break;
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let mut trial = ProductState::from_flat(&x.iter().zip(&step).map(|(a, b)| a + t * b).collect::<Vec<_>>());
            trial.project_into_ball();
            let tx = trial.flat();
            let tr = rhs_norm(&tx, params, couplings);
            if tr < res {
                x = tx;
                res = tr;
                moved = true;
                break;
            }
            t *= NEWTON_DAMPING;
        }
        if !moved {
            break;
        }
    }
    (ProductState::from_flat(&x), res)
}

fn annotate(state: ProductState, residual: f64, params: &ModelParams, couplings: &ClassCouplings) -> FixedPointResult {
    FixedPointResult {
        stable: is_stable(&state, params, couplings),
        variational_cost: variational_cost(&state, params, couplings),
        state,
        residual,
    }
}

/// Deterministic seed set: all-down, the mixed state, a state polarised
/// along x, then points spiralling through the ball.
fn seeds(n_classes: usize, n_seeds: usize) -> Vec<ProductState> {
    let mut out = vec![
        ProductState::all_down(n_classes),
        ProductState::uniform(n_classes, [0.0, 0.0, 0.0]),
        ProductState::uniform(n_classes, [0.99, 0.0, 0.0]),
    ];
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let extra = n_seeds.saturating_sub(out.len());
    for i in 0..extra {
        let u = (i as f64 + 0.5) / extra as f64;
        let z = 1.0 - 2.0 * u;
        let rho = (1.0 - z * z).sqrt();
        let phi = golden * i as f64;
        let r = 0.3 + 0.65 * ((i * 7 % extra) as f64 + 0.5) / extra as f64;
        out.push(ProductState::uniform(
            n_classes,
            [r * rho * phi.cos(), r * rho * phi.sin(), r * z],
        ));
    }
    out.truncate(n_seeds.max(2));
    out
}

/// All distinct fixed points reached from `n_seeds` seeds, sorted by the
/// mean excited fraction.
pub fn find_fixed_points(
    params: &ModelParams,
    couplings: &ClassCouplings,
    n_seeds: usize,
) -> Result<Vec<FixedPointResult>> {
    if n_seeds < 2 {
        return Err(Error::InvalidParams("at least two seeds required".into()));
    }
    params.validate()?;
    let mut found: Vec<(ProductState, f64)> = Vec::new();
    let mut best = f64::INFINITY;
    for seed in seeds(couplings.n_classes(), n_seeds) {
        let (s, res) = newton_fixed_point(&seed, params, couplings);
        best = best.min(res);
        if res < FIXED_POINT_TOL && !found.iter().any(|(f, _)| f.distance(&s) < DEDUP_DISTANCE) {
            found.push((s, res));
        }
    }
    if found.is_empty() {
        return Err(Error::NoFixedPoint { best_residual: best });
    }
    let mean_m = |s: &ProductState| s.magnetizations().iter().sum::<f64>();
    found.sort_by(|a, b| mean_m(&a.0).total_cmp(&mean_m(&b.0)));
    Ok(found
        .into_iter()
        .map(|(s, r)| annotate(s, r, params, couplings))
        .collect())
}

type Mat4 = [[Complex64; 4]; 4];

fn density(v: [f64; 3]) -> [[Complex64; 2]; 2] {
    let [x, y, z] = v;
    [
        [Complex64::new(0.5 * (1.0 + z), 0.0), Complex64::new(0.5 * x, -0.5 * y)],
        [Complex64::new(0.5 * x, 0.5 * y), Complex64::new(0.5 * (1.0 - z), 0.0)],
    ]
}

/// `½ B·σ`.
fn field_hamiltonian(b: [f64; 3]) -> [[Complex64; 2]; 2] {
    let [x, y, z] = b;
    [
        [Complex64::new(0.5 * z, 0.0), Complex64::new(0.5 * x, -0.5 * y)],
        [Complex64::new(0.5 * x, 0.5 * y), Complex64::new(-0.5 * z, 0.0)],
    ]
}

fn kron(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> Mat4 {
    let mut out = [[C0; 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[2 * i + k][2 * j + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn matmul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[C0; 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            let aik = a[i][k];
            if aik == C0 {
                continue;
            }
            for j in 0..4 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// Trace norm of the two-site Lindblad derivative of `ρ_a ⊗ ρ_b` with each
/// site feeling the mean field of its other neighbours.
fn bond_cost(
    bond: &ClassBond,
    state: &ProductState,
    params: &ModelParams,
    couplings: &ClassCouplings,
    detunings: &[f64],
) -> f64 {
    let ba = couplings.field(bond.a, state, params, detunings[bond.a], Some((bond.b, bond.strength)));
    let bb = couplings.field(bond.b, state, params, detunings[bond.b], Some((bond.a, bond.strength)));
    let id = [[Complex64::new(1.0, 0.0), C0], [C0, Complex64::new(1.0, 0.0)]];
    let mut h = kron(&field_hamiltonian(ba), &id);
    let hb = kron(&id, &field_hamiltonian(bb));
    for (row, add) in h.iter_mut().zip(&hb) {
        for (x, y) in row.iter_mut().zip(add) {
            *x += y;
        }
    }
    let j = bond.strength;
    h[0][0] += j;
    h[1][2] -= j;
    h[2][1] -= j;

    let rho = kron(&density(state.bloch[bond.a]), &density(state.bloch[bond.b]));
    let hr = matmul(&h, &rho);
    let mut d = [[C0; 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            // -i(Hρ - ρH) with (ρH) = (Hρ)†
            let comm = hr[i][k] - hr[k][i].conj();
            d[i][k] = Complex64::new(comm.im, -comm.re);
        }
    }
    // pump σ- on each site: c ρ c† moves (e,·) weight to (g,·)
    let g = params.gamma;
    let kappa = params.t2_inverse;
    let excited = |idx: usize, site: usize| (idx >> (1 - site)) & 1 == 0;
    for i in 0..4 {
        for k in 0..4 {
            for site in 0..2 {
                let bit = 1usize << (1 - site);
                let ei = excited(i, site);
                let ek = excited(k, site);
                // -½{c†c, ρ}: c†c = γ n on this site
                let n = (ei as u8 + ek as u8) as f64;
                d[i][k] -= rho[i][k] * (0.5 * g * n);
                if !ei && !ek {
                    d[i][k] += rho[i ^ bit][k ^ bit] * g;
                }
                if kappa > 0.0 && ei != ek {
                    // σz ρ σz - ρ flips the sign of coherences across this site
                    d[i][k] -= rho[i][k] * (2.0 * kappa);
                }
            }
        }
    }
    small_hermitian_eigenvalues(d).iter().map(|l| l.abs()).sum()
}

/// Summed two-site trace norm over inequivalent bonds, weighted by their
/// multiplicity.
pub fn variational_cost(state: &ProductState, params: &ModelParams, couplings: &ClassCouplings) -> f64 {
    let detunings = couplings.detunings(params);
    couplings
        .bonds()
        .iter()
        .map(|b| b.weight * bond_cost(b, state, params, couplings, &detunings))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalMinimum {
    pub state: ProductState,
    pub cost: f64,
    pub converged: bool,
}

/// Local minimum of the variational cost reached from `start`.
pub fn minimize_cost(start: &ProductState, params: &ModelParams, couplings: &ClassCouplings) -> VariationalMinimum {
    let opts = NelderMeadOptions::default();
    let m = nelder_mead(
        |p| variational_cost(&ProductState::from_unbounded(p), params, couplings),
        &start.to_unbounded(),
        &opts,
    );
    VariationalMinimum {
        state: ProductState::from_unbounded(&m.x),
        cost: m.f,
        converged: m.converged,
    }
}

/// Control parameter of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Control {
    /// Rabi frequency Ω in rad·MHz.
    Omega,
    /// External field B in T, entering as `Δ = Δ₀ + gyromagnetic·B`.
    Field,
}

impl Control {
    pub fn apply(self, base: &ModelParams, value: f64) -> ModelParams {
        let mut p = base.clone();
        match self {
            Self::Omega => p.omega = value,
            Self::Field => p.delta = base.delta + base.gyromagnetic * value,
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub control: f64,
    /// Mean-field fixed point continued from the previous grid point.
    pub fixed_point: FixedPointResult,
    /// The warm start failed or became unstable and a fresh seed search
    /// supplied the nearest stable fixed point.
    pub reseeded: bool,
    /// Local minimum of the variational cost continued along the branch.
    pub variational: VariationalMinimum,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams(
            "sweep grid must be finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Traces one hysteresis branch. The up branch starts from the least
/// excited stable fixed point at the low end of the grid, the down branch
/// from the most excited one at the high end. Points are returned in grid
/// order.
pub fn sweep_branch(
    base: &ModelParams,
    couplings: &ClassCouplings,
    control: Control,
    grid: &[f64],
    direction: Direction,
) -> Result<Vec<BranchPoint>> {
    check_grid(grid)?;
    let order: Vec<usize> = match direction {
        Direction::Up => (0..grid.len()).collect(),
        Direction::Down => (0..grid.len()).rev().collect(),
    };
    let mut points: Vec<Option<BranchPoint>> = vec![None; grid.len()];
    let mut prev: Option<(ProductState, ProductState)> = None;
    for &i in &order {
        let params = control.apply(base, grid[i]);
        let (fixed, reseeded, var_start) = match &prev {
            None => {
                let fps = find_fixed_points(&params, couplings, 12)?;
                let stable: Vec<_> = fps.iter().filter(|f| f.stable).collect();
                let pick = match direction {
                    Direction::Up => stable.first(),
                    Direction::Down => stable.last(),
                }
                .copied()
                .or(fps.first())
                .cloned()
                .expect("non-empty fixed point list");
                let start = pick.state.clone();
                (pick, false, start)
            }
            Some((mf, var)) => {
                let (s, res) = newton_fixed_point(mf, &params, couplings);
                let fp = annotate(s, res, &params, couplings);
                if fp.residual < FIXED_POINT_TOL && fp.stable {
                    (fp, false, var.clone())
                } else {
                    let fps = find_fixed_points(&params, couplings, 12)?;
                    let pick = fps
                        .iter()
                        .filter(|f| f.stable)
                        .min_by(|a, b| a.state.distance(mf).total_cmp(&b.state.distance(mf)))
                        .or(fps.first())
                        .cloned()
                        .expect("non-empty fixed point list");
                    (pick, true, var.clone())
                }
            }
        };
        let variational = minimize_cost(&var_start, &params, couplings);
        prev = Some((fixed.state.clone(), variational.state.clone()));
        points[i] = Some(BranchPoint {
            control: grid[i],
            fixed_point: fixed,
            reseeded,
            variational,
        });
    }
    Ok(points
        .into_iter()
        .map(|p| p.expect("every grid point visited"))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub control: f64,
    pub up: BranchPoint,
    pub down: BranchPoint,
    /// Branch with the lower variational cost. When both branches hold the
    /// same state the previous selection is kept, starting from up.
    pub selected: Direction,
}

impl SweepPoint {
    pub fn selected_point(&self) -> &BranchPoint {
        match self.selected {
            Direction::Up => &self.up,
            Direction::Down => &self.down,
        }
    }

    pub fn selected_state(&self) -> &ProductState {
        &self.selected_point().variational.state
    }
}

/// Both branches over a grid and the variationally selected curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalSweep {
    pub control: Control,
    pub points: Vec<SweepPoint>,
}

impl VariationalSweep {
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.control).collect()
    }

    /// Selected excited fraction of `class` along the grid.
    pub fn selected_magnetization(&self, class: usize) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| p.selected_state().magnetization(class))
            .collect()
    }

    /// Largest change of the selected `class` magnetization between
    /// neighbouring grid points, with the index of the left point.
    pub fn max_step(&self, class: usize) -> (usize, f64) {
        let m = self.selected_magnetization(class);
        m.windows(2)
            .enumerate()
            .map(|(i, w)| (i, (w[1] - w[0]).abs()))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc })
    }

    /// Grid indices where the branches are distinct in `class`.
    pub fn bistable_points(&self, class: usize) -> Vec<usize> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                (p.up.variational.state.magnetization(class) - p.down.variational.state.magnetization(class)).abs()
                    > BRANCH_TIE_DISTANCE
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices where the selected branch changes.
    pub fn switches(&self) -> Vec<usize> {
        self.points
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0].selected != w[1].selected)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Runs the up and down branches concurrently and selects the lower cost.
pub fn variational_sweep(
    base: &ModelParams,
    couplings: &ClassCouplings,
    control: Control,
    grid: &[f64],
) -> Result<VariationalSweep> {
    let (up, down) = rayon::join(
        || sweep_branch(base, couplings, control, grid, Direction::Up),
        || sweep_branch(base, couplings, control, grid, Direction::Down),
    );
    let (up, down) = (up?, down?);
    let mut previous = Direction::Up;
    let points = up
        .into_iter()
        .zip(down)
        .map(|(u, d)| {
            let selected = if u.variational.state.distance(&d.variational.state) < BRANCH_TIE_DISTANCE {
                previous
            } else if d.variational.cost < u.variational.cost {
                Direction::Down
            } else {
                Direction::Up
            };
            previous = selected;
            SweepPoint {
                control: u.control,
                up: u,
                down: d,
                selected,
            }
        })
        .collect();
    Ok(VariationalSweep { control, points })
}
