//! Lattice geometry and nearest-neighbour dipolar bonds.
//!
//! Sites are enumerated row-major with `x` fastest:
//! `index = x + nx * (y + ny * z)`. Boundaries are open.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest lattice the state-vector backends accept (2^24 amplitudes).
pub const MAX_STATE_VECTOR_SITES: usize = 24;

/// 2π · 0.4 rad·MHz, the nearest-neighbour coupling at 5 nm spacing.
pub const DEFAULT_COUPLING: f64 = 2.0 * std::f64::consts::PI * 0.4;

pub const DEFAULT_SPACING_NM: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub spacing_nm: f64,
    /// Unit vector along the NV axis.
    pub dipole_axis: [f64; 3],
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self {
            nx: 1,
            ny: 1,
            nz: 1,
            spacing_nm: DEFAULT_SPACING_NM,
            dipole_axis: [0.0, 0.0, 1.0],
        }
    }
}

impl LatticeSpec {
    pub fn planar(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            ..Self::default()
        }
    }

    pub fn slab(nx: usize, ny: usize, nz: usize) -> Self {
        Self {
            nx,
            ny,
            nz,
            ..Self::default()
        }
    }

    pub fn n_sites(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// `nx / ny`, the aspect ratio used by the finite-size analysis.
    pub fn anisotropy(&self) -> f64 {
        self.nx as f64 / self.ny as f64
    }

    /// Only planar lattices and three-layer slabs are exercised by the
    /// solvers; other layer counts are accepted but not validated.
    pub fn is_tested_configuration(&self) -> bool {
        self.nz == 1 || self.nz == 3
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::InvalidLattice(format!(
                "site counts must be positive, got {}x{}x{}",
                self.nx, self.ny, self.nz
            )));
        }
        if !(self.spacing_nm > 0.0) || !self.spacing_nm.is_finite() {
            return Err(Error::InvalidLattice(format!(
                "spacing must be positive, got {}",
                self.spacing_nm
            )));
        }
        let norm = self.dipole_axis.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidLattice(format!(
                "dipole axis must be a unit vector, |axis| = {norm}"
            )));
        }
        Ok(())
    }
}

/// Angular factor `1 - 3 cos²θ` of the dipole-dipole interaction.
pub fn dipolar_prefactor(theta: f64) -> f64 {
    let c = theta.cos();
    1.0 - 3.0 * c * c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub index: usize,
    pub grid: [usize; 3],
    /// Position in nanometres.
    pub position: [f64; 3],
}

/// A nearest-neighbour pair with `site_a < site_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bond {
    pub site_a: usize,
    pub site_b: usize,
    /// Signed coupling in rad·MHz.
    pub strength: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lattice {
    spec: LatticeSpec,
    coupling: f64,
    sites: Vec<Site>,
    bonds: Vec<Bond>,
}

impl Lattice {
    /// Builds all sites and nearest-neighbour bonds. In-plane bonds of a
    /// lattice with the dipoles perpendicular to the plane carry `+V`,
    /// bonds along the dipole axis carry `-2V`.
    pub fn build(spec: &LatticeSpec, coupling: f64) -> Result<Self> {
        spec.validate()?;
        if !(coupling > 0.0) || !coupling.is_finite() {
            return Err(Error::InvalidLattice(format!(
                "coupling V must be positive, got {coupling}"
            )));
        }
        let LatticeSpec { nx, ny, nz, .. } = *spec;
        let a = spec.spacing_nm;
        let index = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);

        let mut sites = Vec::with_capacity(spec.n_sites());
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    sites.push(Site {
                        index: index(x, y, z),
                        grid: [x, y, z],
                        position: [x as f64 * a, y as f64 * a, z as f64 * a],
                    });
                }
            }
        }

        // One strength per lattice direction, from the angle to the dipole axis.
        let strengths: [f64; 3] = std::array::from_fn(|dir| {
            let cos = spec.dipole_axis[dir].clamp(-1.0, 1.0);
            let s = coupling * dipolar_prefactor(cos.acos());
            // snap round-off so the axis-aligned table is exact
            let snapped = (s / coupling).round();
            if (s / coupling - snapped).abs() < 1e-12 {
                snapped * coupling
            } else {
                s
            }
        });

        let mut bonds = Vec::new();
        for site in &sites {
            let [x, y, z] = site.grid;
            let neighbours = [
                (x + 1 < nx).then(|| (index(x + 1, y, z), 0)),
                (y + 1 < ny).then(|| (index(x, y + 1, z), 1)),
                (z + 1 < nz).then(|| (index(x, y, z + 1), 2)),
            ];
            for (other, dir) in neighbours.into_iter().flatten() {
                bonds.push(Bond {
                    site_a: site.index,
                    site_b: other,
                    strength: strengths[dir],
                });
            }
        }
        bonds.sort_by_key(|b| (b.site_a, b.site_b));

        Ok(Self {
            spec: spec.clone(),
            coupling,
            sites,
            bonds,
        })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    /// Largest number of bonds touching a single site.
    pub fn max_coordination(&self) -> usize {
        let mut degree = vec![0usize; self.n_sites()];
        for b in &self.bonds {
            degree[b.site_a] += 1;
            degree[b.site_b] += 1;
        }
        degree.into_iter().max().unwrap_or(0)
    }

    /// Coordinate of each site along the dipole axis, in metres, measured
    /// from the lattice centre (the central layer of a slab sits at zero).
    pub fn axial_offsets_m(&self) -> Vec<f64> {
        let n = self.n_sites() as f64;
        let mut centre = [0.0; 3];
        for s in &self.sites {
            for (c, p) in centre.iter_mut().zip(s.position) {
                *c += p / n;
            }
        }
        let axis = self.spec.dipole_axis;
        self.sites
            .iter()
            .map(|s| {
                let along: f64 = (0..3).map(|k| (s.position[k] - centre[k]) * axis[k]).sum();
                along * 1e-9
            })
            .collect()
    }

    /// Hilbert-space dimension, guarded against the state-vector limit.
    pub fn hilbert_dim(&self, limit: usize, backend: &'static str) -> Result<usize> {
        let n = self.n_sites();
        if n > limit {
            return Err(Error::TooManySites {
                sites: n,
                limit,
                backend,
            });
        }
        Ok(1usize << n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const V: f64 = DEFAULT_COUPLING;

    #[test]
    fn single_pair() {
        let l = Lattice::build(&LatticeSpec::planar(2, 1), V).unwrap();
        assert_eq!(l.n_sites(), 2);
        assert_eq!(
            l.bonds(),
            &[Bond {
                site_a: 0,
                site_b: 1,
                strength: V
            }]
        );
    }

    #[test]
    fn three_by_three_grid() {
        let l = Lattice::build(&LatticeSpec::planar(3, 3), V).unwrap();
        assert_eq!(l.n_sites(), 9);
        assert_eq!(l.bonds().len(), 12);
        assert!(l.bonds().iter().all(|b| b.strength == V && b.site_a < b.site_b));
        assert_eq!(l.max_coordination(), 4);
    }

    #[test]
    fn axial_column_is_attractive() {
        let l = Lattice::build(&LatticeSpec::slab(1, 1, 3), V).unwrap();
        assert_eq!(l.n_sites(), 3);
        assert_eq!(l.bonds().len(), 2);
        assert!(l.bonds().iter().all(|b| b.strength == -2.0 * V));
    }

    #[test]
    fn prefactor_values() {
        assert!((dipolar_prefactor(PI / 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(dipolar_prefactor(0.0), -2.0);
        assert!(dipolar_prefactor((1.0 / 3f64.sqrt()).acos()).abs() < 1e-15);
    }

    #[test]
    fn interior_site_directions_cancel() {
        let l = Lattice::build(&LatticeSpec::slab(3, 3, 3), V).unwrap();
        // centre site 13: one bond per direction in the + sense
        let centre = 13;
        let mut per_dir = [0.0; 3];
        for b in l.bonds().iter().filter(|b| b.site_a == centre) {
            let ga = l.sites()[b.site_a].grid;
            let gb = l.sites()[b.site_b].grid;
            let dir = (0..3).find(|&k| ga[k] != gb[k]).unwrap();
            per_dir[dir] += b.strength;
        }
        assert!(per_dir.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn slab_offsets_centre_on_middle_layer() {
        let l = Lattice::build(&LatticeSpec::slab(2, 2, 3), V).unwrap();
        let z = l.axial_offsets_m();
        assert!((z[0] + 5e-9).abs() < 1e-20);
        assert!(z[4].abs() < 1e-20);
        assert!((z[8] - 5e-9).abs() < 1e-20);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(Lattice::build(&LatticeSpec::planar(0, 3), V).is_err());
        assert!(Lattice::build(&LatticeSpec::planar(2, 2), -1.0).is_err());
        let mut s = LatticeSpec::planar(2, 2);
        s.spacing_nm = 0.0;
        assert!(Lattice::build(&s, V).is_err());
        let big = Lattice::build(&LatticeSpec::planar(5, 5), V).unwrap();
        assert!(matches!(
            big.hilbert_dim(MAX_STATE_VECTOR_SITES, "state vector"),
            Err(Error::TooManySites { sites: 25, .. })
        ));
    }

    #[test]
    fn untested_layer_counts_are_flagged() {
        assert!(LatticeSpec::slab(2, 2, 3).is_tested_configuration());
        assert!(!LatticeSpec::slab(2, 2, 2).is_tested_configuration());
    }
}
