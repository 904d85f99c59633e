//! Sparse many-body operators on the 2^N spin Hilbert space.
//!
//! Basis convention: site 0 is the most significant bit of the basis
//! index. A cleared bit is the driven state `|e>` (σz = +1), a set bit is
//! the pump target `|g>` (σz = -1). The all-ground state is therefore the
//! last basis vector.

use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, DEFAULT_COUPLING, MAX_STATE_VECTOR_SITES};

pub const C0: Complex64 = Complex64::new(0.0, 0.0);
pub const C1: Complex64 = Complex64::new(1.0, 0.0);
pub const CI: Complex64 = Complex64::new(0.0, 1.0);

/// NV electron gyromagnetic ratio, 2π · 28 GHz/T, in rad·MHz per tesla.
pub const NV_GYROMAGNETIC: f64 = 2.0 * std::f64::consts::PI * 28.0e3;

/// Physical rates and fields, all in angular-frequency units (rad·MHz,
/// i.e. rad/µs) except the gradient (T/m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub delta: f64,
    pub omega: f64,
    pub gamma: f64,
    pub coupling: f64,
    pub t2_inverse: f64,
    pub gradient_tm: f64,
    pub gyromagnetic: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            delta: 0.0,
            omega: 0.0,
            gamma: 1.0,
            coupling: DEFAULT_COUPLING,
            t2_inverse: 0.0,
            gradient_tm: 0.0,
            gyromagnetic: NV_GYROMAGNETIC,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.delta,
            self.omega,
            self.gamma,
            self.coupling,
            self.t2_inverse,
            self.gradient_tm,
            self.gyromagnetic,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if self.gamma <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "pump rate gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.omega < 0.0 {
            return Err(Error::InvalidParams(format!(
                "Rabi frequency must be non-negative, got {}",
                self.omega
            )));
        }
        if self.t2_inverse < 0.0 {
            return Err(Error::InvalidParams(format!(
                "dephasing rate must be non-negative, got {}",
                self.t2_inverse
            )));
        }
        Ok(())
    }

    /// Detuning of every site including the gradient shift
    /// `gyromagnetic · gradient · z_i`.
    pub fn site_detunings(&self, lattice: &Lattice) -> Vec<f64> {
        lattice
            .axial_offsets_m()
            .into_iter()
            .map(|z| self.delta + self.gyromagnetic * self.gradient_tm * z)
            .collect()
    }

    /// Rate scale used to pick a default RK4 step.
    pub fn rate_scale(&self, coordination: usize) -> f64 {
        [
            self.gamma,
            self.omega,
            self.delta.abs(),
            self.coupling.abs() * coordination as f64,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Complex sparse matrix in compressed-row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<Complex64>,
    hermitian: bool,
}

impl SparseOperator {
    /// Assembles from `(row, col, value)` triplets. Duplicates are summed
    /// and entries that end up exactly zero are dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, Complex64)>, hermitian: bool) -> Self {
        assert!(dim <= u32::MAX as usize + 1);
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            debug_assert!(r < dim && c < dim);
            if rows.last() == Some(&r) && col_idx.last() == Some(&(c as u32)) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                col_idx.push(c as u32);
                values.push(v);
            }
        }
        let mut keep_cols = Vec::with_capacity(col_idx.len());
        let mut keep_vals = Vec::with_capacity(values.len());
        for ((r, c), v) in rows.into_iter().zip(col_idx).zip(values) {
            if v != C0 {
                row_ptr[r + 1] += 1;
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            dim,
            row_ptr,
            col_idx: keep_cols,
            values: keep_vals,
            hermitian,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_triplets(dim, Vec::new(), true)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(dim, (0..dim).map(|i| (i, i, C1)).collect(), true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Entries of one row as `(column, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(C0, |(_, v)| v)
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for (r, out) in y.iter_mut().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            let mut acc = C0;
            for (&c, &v) in self.col_idx[span.clone()].iter().zip(&self.values[span]) {
                acc += v * x[c as usize];
            }
            *out = acc;
        }
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![C0; self.dim];
        self.matvec(x, &mut y);
        y
    }

    /// `<x|A|x>`.
    pub fn expectation(&self, x: &[Complex64]) -> Complex64 {
        let ax = self.apply(x);
        x.iter().zip(&ax).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn adjoint(&self) -> Self {
        let t = self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect();
        Self::from_triplets(self.dim, t, self.hermitian)
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        let hermitian = self.hermitian && factor.im == 0.0;
        let t = self.triplets().map(|(r, c, v)| (r, c, v * factor)).collect();
        Self::from_triplets(self.dim, t, hermitian)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let t = self.triplets().chain(other.triplets()).collect();
        Self::from_triplets(self.dim, t, self.hermitian && other.hermitian)
    }

    /// Sparse product `self · other`. The result is not tagged Hermitian.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut t = Vec::new();
        for r in 0..self.dim {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    t.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.dim, t, false)
    }

    pub fn with_hermitian_tag(mut self, hermitian: bool) -> Self {
        self.hermitian = hermitian;
        self
    }

    /// Exact structural check `A == A†`.
    pub fn equals_adjoint(&self) -> bool {
        self.triplets().all(|(r, c, v)| self.get(c, r) == v.conj())
    }

    pub fn is_diagonal(&self) -> bool {
        self.triplets().all(|(r, c, _)| r == c)
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// Row-major dense copy, for tests and small systems.
    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut d = vec![C0; self.dim * self.dim];
        for (r, c, v) in self.triplets() {
            d[r * self.dim + c] = v;
        }
        d
    }

    /// Coordinate-format dump, one `row col re im` line per entry.
    pub fn write_coo<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "# dim {} nnz {} hermitian {}",
            self.dim,
            self.nnz(),
            self.hermitian
        )?;
        for (r, c, v) in self.triplets() {
            writeln!(out, "{r} {c} {:e} {:e}", v.re, v.im)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    X,
    Y,
    Z,
    /// σ+ = |e><g|
    Plus,
    /// σ- = |g><e|
    Minus,
}

pub(crate) fn check_sites(n_sites: usize) -> Result<usize> {
    if n_sites > MAX_STATE_VECTOR_SITES {
        return Err(Error::TooManySites {
            sites: n_sites,
            limit: MAX_STATE_VECTOR_SITES,
            backend: "sparse operator",
        });
    }
    Ok(1usize << n_sites)
}

/// Bit mask of `site` in a basis index.
#[inline]
pub fn site_mask(site: usize, n_sites: usize) -> usize {
    1usize << (n_sites - 1 - site)
}

/// `1 ⊗ … ⊗ σ ⊗ … ⊗ 1` with σ acting on `site`.
pub fn embed_pauli(kind: Pauli, site: usize, n_sites: usize) -> Result<SparseOperator> {
    if site >= n_sites {
        return Err(Error::SiteOutOfRange { site, n_sites });
    }
    let dim = check_sites(n_sites)?;
    let mask = site_mask(site, n_sites);
    let mut t = Vec::with_capacity(dim);
    for b in 0..dim {
        let ground = b & mask != 0;
        match kind {
            Pauli::X => t.push((b, b ^ mask, C1)),
            // <e|σy|g> = -i, <g|σy|e> = +i
            Pauli::Y => t.push((b, b ^ mask, if ground { CI } else { -CI })),
            Pauli::Z => t.push((b, b, if ground { -C1 } else { C1 })),
            Pauli::Plus if !ground => t.push((b, b | mask, C1)),
            Pauli::Minus if ground => t.push((b, b & !mask, C1)),
            _ => {}
        }
    }
    let hermitian = matches!(kind, Pauli::X | Pauli::Y | Pauli::Z);
    Ok(SparseOperator::from_triplets(dim, t, hermitian))
}

/// H = Σ Δ_i/2 σz + Ω/2 Σ σx + Σ_bonds J { n_i n_j - σ+σ- - σ-σ+ },
/// with n = (1 + σz)/2. Assembled directly in the computational basis.
pub fn build_hamiltonian(lattice: &Lattice, params: &ModelParams) -> Result<SparseOperator> {
    params.validate()?;
    let n = lattice.n_sites();
    let dim = check_sites(n)?;
    let detunings = params.site_detunings(lattice);
    let masks: Vec<usize> = (0..n).map(|i| site_mask(i, n)).collect();
    let half_omega = C1 * (0.5 * params.omega);

    let mut t = Vec::with_capacity(dim * (1 + n + lattice.bonds().len()));
    for b in 0..dim {
        let excited = |i: usize| b & masks[i] == 0;
        let mut diag = 0.0;
        for (i, d) in detunings.iter().enumerate() {
            diag += if excited(i) { 0.5 * d } else { -0.5 * d };
        }
        for bond in lattice.bonds() {
            if excited(bond.site_a) && excited(bond.site_b) {
                diag += bond.strength;
            }
        }
        t.push((b, b, C1 * diag));
        if params.omega != 0.0 {
            for &m in &masks {
                t.push((b, b ^ m, half_omega));
            }
        }
        for bond in lattice.bonds() {
            // flip-flop exchanges |eg> and |ge>
            if excited(bond.site_a) != excited(bond.site_b) {
                let pair = masks[bond.site_a] | masks[bond.site_b];
                t.push((b, b ^ pair, C1 * (-bond.strength)));
            }
        }
    }
    Ok(SparseOperator::from_triplets(dim, t, true))
}

/// `√γ σ-` on every site, followed by `√(1/T2) σz` on every site when
/// dephasing is enabled. Both groups are ordered by site.
pub fn build_jump_operators(lattice: &Lattice, params: &ModelParams) -> Result<Vec<SparseOperator>> {
    params.validate()?;
    let n = lattice.n_sites();
    check_sites(n)?;
    let mut ops = Vec::with_capacity(2 * n);
    let pump = C1 * params.gamma.sqrt();
    for i in 0..n {
        ops.push(embed_pauli(Pauli::Minus, i, n)?.scale(pump));
    }
    if params.t2_inverse > 0.0 {
        let deph = C1 * params.t2_inverse.sqrt();
        for i in 0..n {
            ops.push(embed_pauli(Pauli::Z, i, n)?.scale(deph).with_hermitian_tag(false));
        }
    }
    Ok(ops)
}

/// Σ_k c_k† c_k.
pub fn jump_sum(jumps: &[SparseOperator], dim: usize) -> SparseOperator {
    jumps
        .iter()
        .map(|c| c.adjoint().mul(c))
        .fold(SparseOperator::zeros(dim), |acc, term| acc.add(&term))
        .with_hermitian_tag(true)
}

/// `H_eff = H - (i/2) Σ c†c`.
pub fn effective_hamiltonian(h: &SparseOperator, jumps: &[SparseOperator]) -> SparseOperator {
    let decay = jump_sum(jumps, h.dim()).scale(Complex64::new(0.0, -0.5));
    h.add(&decay).with_hermitian_tag(false)
}
