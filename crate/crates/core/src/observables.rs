//! Magnetization and per-site polarization.

use num_complex::Complex64;

use crate::operators::site_mask;

/// Excited-state fraction `m = Σ (1 + <σz_i>) / (2N)`.
pub fn magnetization(site_sz: &[f64]) -> f64 {
    if site_sz.is_empty() {
        return 0.0;
    }
    site_sz.iter().map(|s| 0.5 * (1.0 + s)).sum::<f64>() / site_sz.len() as f64
}

/// Per-site `<σz>` from basis-state weights (|ψ_b|² or ρ_bb), normalised
/// by their total.
pub fn site_sz_from_weights(weights: impl Iterator<Item = f64>, n_sites: usize) -> Vec<f64> {
    let mut ground = vec![0.0; n_sites];
    let mut total = 0.0;
    for (b, w) in weights.enumerate() {
        total += w;
        let mut rest = b;
        // walk the set bits only
        while rest != 0 {
            let bit = rest.trailing_zeros() as usize;
            ground[n_sites - 1 - bit] += w;
            rest &= rest - 1;
        }
    }
    ground.iter().map(|g| (total - 2.0 * g) / total).collect()
}

pub fn site_sz_pure(psi: &[Complex64], n_sites: usize) -> Vec<f64> {
    site_sz_from_weights(psi.iter().map(|a| a.norm_sqr()), n_sites)
}

/// Number of excited spins in basis state `b`.
pub fn excitations(b: usize, n_sites: usize) -> u32 {
    n_sites as u32 - b.count_ones()
}

pub fn is_excited(b: usize, site: usize, n_sites: usize) -> bool {
    b & site_mask(site, n_sites) == 0
}
