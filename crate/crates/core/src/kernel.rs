//! Matrix-free application of `-i H_eff` for trajectory integration.
//!
//! Spin-lattice operators only ever connect basis states that differ by a
//! fixed bit mask: a single-site flip for the drive, a two-site swap for
//! the flip-flop term. [`XorOperator`] stores those masks instead of a
//! column index per entry, which keeps the working set to the state
//! vectors themselves. Operators without that structure fall back to CSR.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::operators::{SparseOperator, C0};

/// Rows on which a masked term acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Support {
    /// Every basis state.
    All,
    /// Basis states with an odd number of set bits under the mask, e.g.
    /// `|eg>`/`|ge>` for a two-site flip-flop.
    OddParity,
}

#[derive(Debug, Clone)]
struct TermGroup {
    value: Complex64,
    support: Support,
    masks: Vec<usize>,
}

/// Diagonal plus mask-structured off-diagonal operator.
#[derive(Debug, Clone)]
pub struct XorOperator {
    diag: Vec<Complex64>,
    groups: Vec<TermGroup>,
}

impl XorOperator {
    /// Recognises the mask structure of `op`, or `None` if any off-diagonal
    /// entry breaks it (row-dependent values or irregular support).
    pub fn from_sparse(op: &SparseOperator) -> Option<Self> {
        let dim = op.dim();
        let mut diag = vec![C0; dim];
        // mask -> (value, rows seen, every row odd under mask)
        let mut by_mask: BTreeMap<usize, (Complex64, usize, bool)> = BTreeMap::new();
        for (r, c, v) in op.triplets() {
            if r == c {
                diag[r] = v;
                continue;
            }
            let mask = r ^ c;
            let odd = (r & mask).count_ones() % 2 == 1;
            let entry = by_mask.entry(mask).or_insert((v, 0, true));
            if entry.0 != v {
                return None;
            }
            entry.1 += 1;
            entry.2 &= odd;
        }
        let mut grouped: BTreeMap<(u64, u64, Support), Vec<usize>> = BTreeMap::new();
        for (mask, (value, count, all_odd)) in by_mask {
            let support = if count == dim {
                Support::All
            } else if all_odd && count == odd_count(mask, dim) {
                Support::OddParity
            } else {
                return None;
            };
            grouped
                .entry((value.re.to_bits(), value.im.to_bits(), support))
                .or_default()
                .push(mask);
        }
        let groups = grouped
            .into_iter()
            .map(|((re, im, support), masks)| TermGroup {
                value: Complex64::new(f64::from_bits(re), f64::from_bits(im)),
                support,
                masks,
            })
            .collect();
        Some(Self { diag, groups })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `y = -i A x`.
    ///
    /// Terms are applied one mask at a time over contiguous blocks: a
    /// one-bit mask `2^p` pairs the two halves of every `2^(p+1)` block, a
    /// two-bit mask pairs runs of length `2^q` inside those halves.
    pub fn apply_neg_i(&self, x: &[Complex64], y: &mut [Complex64]) {
        for ((out, d), v) in y.iter_mut().zip(&self.diag).zip(x) {
            *out = d * v;
        }
        for g in &self.groups {
            for &m in &g.masks {
                match (g.support, m.count_ones()) {
                    (Support::All, 1) => pair_blocks(x, y, g.value, m, 0),
                    (Support::OddParity, 2) => {
                        let hi = 1usize << (usize::BITS - 1 - m.leading_zeros());
                        let lo = m ^ hi;
                        pair_blocks(x, y, g.value, hi, lo);
                    }
                    _ => generic_term(x, y, g.value, g.support, m),
                }
            }
        }
        for v in y.iter_mut() {
            *v = Complex64::new(v.im, -v.re);
        }
    }
}

/// For every `2·hi` block and every `2·lo` sub-block of its lower half,
/// exchanges the run of length `lo` at offset `lo` with the run at offset
/// `hi` (both directions). `lo = 0` handles a single-bit mask, where the
/// two halves are exchanged whole.
fn pair_blocks(x: &[Complex64], y: &mut [Complex64], v: Complex64, hi: usize, lo: usize) {
    for (yb, xb) in y.chunks_exact_mut(2 * hi).zip(x.chunks_exact(2 * hi)) {
        let (y0, y1) = yb.split_at_mut(hi);
        let (x0, x1) = xb.split_at(hi);
        if lo == 0 {
            axpy(y0, x1, v);
            axpy(y1, x0, v);
            continue;
        }
        let pairs = y0
            .chunks_exact_mut(2 * lo)
            .zip(y1.chunks_exact_mut(2 * lo))
            .zip(x0.chunks_exact(2 * lo).zip(x1.chunks_exact(2 * lo)));
        for ((ya, yb), (xa, xb)) in pairs {
            axpy(&mut ya[lo..], &xb[..lo], v);
            axpy(&mut yb[..lo], &xa[lo..], v);
        }
    }
}

#[inline(always)]
fn axpy(y: &mut [Complex64], x: &[Complex64], v: Complex64) {
    if v.im == 0.0 {
        let r = v.re;
        for (a, b) in y.iter_mut().zip(x) {
            a.re += b.re * r;
            a.im += b.im * r;
        }
    } else {
        for (a, b) in y.iter_mut().zip(x) {
            *a += *b * v;
        }
    }
}

fn generic_term(x: &[Complex64], y: &mut [Complex64], v: Complex64, support: Support, m: usize) {
    for (b, out) in y.iter_mut().enumerate() {
        if support == Support::All || (b & m).count_ones() & 1 == 1 {
            *out += v * x[b ^ m];
        }
    }
}

/// Number of basis states with odd parity under `mask`.
fn odd_count(mask: usize, dim: usize) -> usize {
    if mask == 0 {
        0
    } else {
        dim / 2
    }
}

/// Generator of the non-unitary evolution `dψ/dt = -i H_eff ψ`.
#[derive(Debug, Clone)]
pub enum EffectiveGenerator {
    Structured(XorOperator),
    Csr(SparseOperator),
}

impl EffectiveGenerator {
    /// Uses the matrix-free kernel when the structure allows it.
    pub fn new(heff: &SparseOperator) -> Self {
        match XorOperator::from_sparse(heff) {
            Some(x) => Self::Structured(x),
            None => Self::Csr(heff.clone()),
        }
    }

    pub fn csr(heff: &SparseOperator) -> Self {
        Self::Csr(heff.clone())
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Structured(x) => x.dim(),
            Self::Csr(s) => s.dim(),
        }
    }

    pub fn is_structured(&self) -> bool {
        matches!(self, Self::Structured(_))
    }

    /// `y = -i H_eff x`.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        match self {
            Self::Structured(op) => op.apply_neg_i(x, y),
            Self::Csr(op) => {
                op.matvec(x, y);
                for v in y.iter_mut() {
                    *v = Complex64::new(v.im, -v.re);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Lattice, LatticeSpec};
    use crate::operators::{
        build_hamiltonian, build_jump_operators, effective_hamiltonian, embed_pauli, ModelParams, Pauli,
    };

    fn heff_for(spec: LatticeSpec, params: &ModelParams) -> SparseOperator {
        let l = Lattice::build(&spec, params.coupling).unwrap();
        let h = build_hamiltonian(&l, params).unwrap();
        let c = build_jump_operators(&l, params).unwrap();
        effective_hamiltonian(&h, &c)
    }

    fn test_vector(dim: usize) -> Vec<Complex64> {
        (0..dim)
            .map(|k| Complex64::new((0.37 * k as f64).sin(), (1.3 * k as f64 + 0.2).cos()))
            .collect()
    }

    #[test]
    fn structured_matches_csr_on_lattices() {
        let params = ModelParams {
            omega: 1.7,
            delta: -0.3,
            t2_inverse: 0.4,
            gradient_tm: 500.0,
            ..ModelParams::default()
        };
        for spec in [
            LatticeSpec::planar(2, 3),
            LatticeSpec::planar(3, 3),
            LatticeSpec::slab(2, 1, 3),
        ] {
            let heff = heff_for(spec, &params);
            let fast = EffectiveGenerator::new(&heff);
            assert!(fast.is_structured());
            let slow = EffectiveGenerator::csr(&heff);
            let x = test_vector(heff.dim());
            let mut y1 = vec![C0; heff.dim()];
            let mut y2 = vec![C0; heff.dim()];
            fast.apply(&x, &mut y1);
            slow.apply(&x, &mut y2);
            for (a, b) in y1.iter().zip(&y2) {
                assert!((a - b).norm() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn row_dependent_values_fall_back_to_csr() {
        let y = embed_pauli(Pauli::Y, 0, 2).unwrap();
        assert!(XorOperator::from_sparse(&y).is_none());
        assert!(!EffectiveGenerator::new(&y).is_structured());
    }

    #[test]
    fn irregular_support_falls_back() {
        let op = SparseOperator::from_triplets(4, vec![(0, 3, Complex64::new(1.0, 0.0))], false);
        assert!(XorOperator::from_sparse(&op).is_none());
    }
}
