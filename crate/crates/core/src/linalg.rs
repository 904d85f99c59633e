//! Thin wrappers over `faer` for the dense kernels used by the solvers.
//! All matrices are passed row-major.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use num_complex::Complex64;

/// Eigenvalues (ascending) of a Hermitian matrix.
pub fn hermitian_eigenvalues(data: &[Complex64], dim: usize) -> Vec<f64> {
    debug_assert_eq!(data.len(), dim * dim);
    // symmetrise explicitly; only one triangle is read by the solver
    let m = Mat::<Complex64>::from_fn(dim, dim, |r, c| 0.5 * (data[r * dim + c] + data[c * dim + r].conj()));
    m.self_adjoint_eigenvalues(Side::Lower)
        .expect("Hermitian eigensolver failed to converge")
}

/// Σ|λ| of a Hermitian matrix.
pub fn hermitian_trace_norm(data: &[Complex64], dim: usize) -> f64 {
    hermitian_eigenvalues(data, dim).iter().map(|l| l.abs()).sum()
}

/// Eigenvalues of a general real matrix.
pub fn real_eigenvalues(data: &[f64], n: usize) -> Vec<Complex64> {
    let m = Mat::<f64>::from_fn(n, n, |r, c| data[r * n + c]);
    m.eigenvalues().expect("eigensolver failed to converge")
}

/// Result of an LU solve, with the smallest-to-largest pivot ratio as a
/// cheap rank indicator.
pub struct LuSolution {
    pub x: Vec<f64>,
    pub pivot_ratio: f64,
}

/// Solves `A x = b` by LU with partial pivoting.
pub fn lu_solve(a: Mat<f64>, b: &[f64]) -> LuSolution {
    let n = a.nrows();
    let lu = a.partial_piv_lu();
    let u = lu.U();
    let mut pmin = f64::INFINITY;
    let mut pmax: f64 = 0.0;
    for i in 0..n {
        let p = u[(i, i)].abs();
        pmin = pmin.min(p);
        pmax = pmax.max(p);
    }
    let rhs = Mat::<f64>::from_fn(n, 1, |r, _| b[r]);
    let sol = lu.solve(&rhs);
    LuSolution {
        x: (0..n).map(|r| sol[(r, 0)]).collect(),
        pivot_ratio: if pmax > 0.0 { pmin / pmax } else { 0.0 },
    }
}

/// Solves a small dense real system, `None` if singular.
pub fn solve_small(a: &[f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
    let m = Mat::<f64>::from_fn(n, n, |r, c| a[r * n + c]);
    let s = lu_solve(m, b);
    (s.pivot_ratio > 1e-14 && s.x.iter().all(|v| v.is_finite())).then_some(s.x)
}

/// Inverse of a small dense real matrix, `None` if singular.
pub fn invert_small(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        let col = solve_small(a, n, &e)?;
        for r in 0..n {
            inv[r * n + c] = col[r];
        }
    }
    Some(inv)
}

/// Eigenvalues (unsorted) of a small Hermitian matrix by cyclic Jacobi
/// rotations. Allocation-free; used in inner loops on 4×4 blocks.
pub fn small_hermitian_eigenvalues<const N: usize>(mut a: [[Complex64; N]; N]) -> [f64; N] {
    let scale: f64 = a.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for _sweep in 0..50 {
        let off: f64 = (0..N)
            .flat_map(|p| (p + 1..N).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..N {
            for q in p + 1..N {
                let r = a[p][q].norm();
                if r == 0.0 {
                    continue;
                }
                let phase = a[p][q] / r;
                let theta = (a[q][q].re - a[p][p].re) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // U = diag(1, e^{-iφ}) · [[c, s], [-s, c]] in the (p, q) plane
                let upp = Complex64::new(c, 0.0);
                let upq = Complex64::new(s, 0.0);
                let uqp = -phase.conj() * s;
                let uqq = phase.conj() * c;
                for row in a.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = x * upp + y * uqp;
                    row[q] = x * upq + y * uqq;
                }
                for k in 0..N {
                    let (x, y) = (a[p][k], a[q][k]);
                    a[p][k] = upp.conj() * x + uqp.conj() * y;
                    a[q][k] = upq.conj() * x + uqq.conj() * y;
                }
            }
        }
    }
    std::array::from_fn(|k| a[k][k].re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pauli_y_spectrum() {
        let i = Complex64::new(0.0, 1.0);
        let y = [Complex64::new(0.0, 0.0), -i, i, Complex64::new(0.0, 0.0)];
        let ev = hermitian_eigenvalues(&y, 2);
        assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
        assert!((hermitian_trace_norm(&y, 2) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rotation_has_imaginary_eigenvalues() {
        let ev = real_eigenvalues(&[0.0, -2.0, 2.0, 0.0], 2);
        let mut im: Vec<f64> = ev.iter().map(|z| z.im).collect();
        im.sort_by(f64::total_cmp);
        assert!((im[0] + 2.0).abs() < 1e-12 && (im[1] - 2.0).abs() < 1e-12);
        assert!(ev.iter().all(|z| z.re.abs() < 1e-12));
    }

    #[test]
    fn jacobi_matches_dense_solver() {
        let mut a = [[Complex64::new(0.0, 0.0); 4]; 4];
        for r in 0..4 {
            for c in 0..4 {
                let z = Complex64::new((r * 4 + c) as f64 * 0.37 - 1.0, (r as f64 - c as f64) * 0.61);
                a[r][c] += z * 0.5;
                a[c][r] += z.conj() * 0.5;
            }
        }
        let flat: Vec<Complex64> = a.iter().flatten().copied().collect();
        let want = hermitian_eigenvalues(&flat, 4);
        let mut got = small_hermitian_eigenvalues(a);
        got.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn jacobi_on_diagonal_input() {
        let z = Complex64::new(0.0, 0.0);
        let a = [[Complex64::new(2.0, 0.0), z], [z, Complex64::new(-1.0, 0.0)]];
        assert_eq!(small_hermitian_eigenvalues(a), [2.0, -1.0]);
    }

    #[test]
    fn small_solves() {
        let x = solve_small(&[2.0, 1.0, 1.0, 3.0], 2, &[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
        assert!(solve_small(&[1.0, 2.0, 2.0, 4.0], 2, &[1.0, 1.0]).is_none());
        let inv = invert_small(&[4.0, 0.0, 0.0, 0.5], 2).unwrap();
        assert_eq!(inv, vec![0.25, 0.0, 0.0, 2.0]);
    }
}
