//! Finite atomic quadratures of a Lévy measure `q(dz)`.
//!
//! Atoms with `|z| ≤ 1` are small jumps (they carry the gradient compensator
//! in the nonlocal term), the rest are tail jumps. The quadrature records the
//! two moments of the integrability condition: `s2 = Σ_small w|z|²` and
//! `tmass = Σ_tail w`.

use crate::error::{Error, Result};
use crate::grid::{norm, norm_sq, Point, MAX_DIM};
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// Midpoint nodes used to estimate the second moment lost below `r_min`.
const TRUNCATION_NODES: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub z: Point,
    pub weight: f64,
    /// `|z| ≤ 1`.
    pub small: bool,
}

/// A rotation-invariant density `d(|z|)` restricted to the annulus
/// `r_min ≤ |z| ≤ r_max`.
#[derive(Clone, Copy)]
pub struct RadialSpec<'a> {
    pub dim: usize,
    pub density: &'a dyn Fn(f64) -> f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Midpoint nodes per radial direction.
    pub radial_nodes: usize,
    /// Angular sectors (ignored in one dimension).
    pub angular_sectors: usize,
}

pub enum MeasureSpec<'a> {
    Atomic { dim: usize, atoms: Vec<(Point, f64)> },
    Radial(RadialSpec<'a>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevyQuadrature {
    dim: usize,
    atoms: Vec<Atom>,
    s2: f64,
    tmass: f64,
    truncated_s2: f64,
}

impl LevyQuadrature {
    /// Validates an explicit atom list.
    pub fn from_atoms(dim: usize, atoms: &[(Point, f64)]) -> Result<LevyQuadrature> {
        Self::assemble(dim, atoms, 0.0)
    }

    fn assemble(dim: usize, raw: &[(Point, f64)], truncated_s2: f64) -> Result<LevyQuadrature> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidMeasure(format!("dimension must be 1 or 2, got {dim}")));
        }
        if raw.is_empty() {
            return Err(Error::InvalidMeasure("empty atom set".into()));
        }
        let mut atoms = Vec::with_capacity(raw.len());
        for (k, &(z, w)) in raw.iter().enumerate() {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidMeasure(format!("atom {k}: weight {w} is not positive")));
            }
            if z.iter().any(|c| !c.is_finite()) || z[dim..].iter().any(|&c| c != 0.0) {
                return Err(Error::InvalidMeasure(format!("atom {k}: bad position {z:?}")));
            }
            let r = norm(&z);
            if r == 0.0 {
                return Err(Error::InvalidMeasure(format!("atom {k} sits at z = 0")));
            }
            atoms.push(Atom { z, weight: w, small: r <= 1.0 });
        }
        let (s2, tmass) = moments(&atoms);
        Ok(LevyQuadrature { dim, atoms, s2, tmass, truncated_s2 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `Σ_{|z|≤1} w|z|²`.
    pub fn second_moment_small(&self) -> f64 {
        self.s2
    }

    /// `Σ_{|z|>1} w`.
    pub fn tail_mass(&self) -> f64 {
        self.tmass
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn max_jump(&self) -> f64 {
        self.atoms.iter().map(|a| norm(&a.z)).fold(0.0, f64::max)
    }

    /// Estimate of `∫_{|z|<r_min} |z|² q(dz)` dropped by a radial cutoff; zero
    /// for atomic measures.
    pub fn truncated_second_moment(&self) -> f64 {
        self.truncated_s2
    }

    /// Same atoms with every weight multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<LevyQuadrature> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter { name: "scale", reason: format!("{c} is not positive") });
        }
        let atoms: Vec<Atom> = self.atoms.iter().map(|a| Atom { weight: a.weight * c, ..*a }).collect();
        let (s2, tmass) = moments(&atoms);
        Ok(LevyQuadrature { atoms, s2, tmass, truncated_s2: self.truncated_s2 * c, ..*self })
    }
}

fn moments(atoms: &[Atom]) -> (f64, f64) {
    atoms.iter().fold(
        (0.0, 0.0),
        |(s2, tm), a| {
            if a.small {
                (s2 + a.weight * norm_sq(&a.z), tm)
            } else {
                (s2, tm + a.weight)
            }
        },
    )
}

/// Realizes a measure specification as a finite quadrature.
///
/// Radial densities use the midpoint rule per radial shell, times `2π/S`
/// angular sectors in two dimensions. Atoms whose density vanishes are dropped.
pub fn build_quadrature(spec: &MeasureSpec<'_>) -> Result<LevyQuadrature> {
    match spec {
        MeasureSpec::Atomic { dim, atoms } => LevyQuadrature::from_atoms(*dim, atoms),
        MeasureSpec::Radial(r) => build_radial(r),
    }
}

fn build_radial(spec: &RadialSpec<'_>) -> Result<LevyQuadrature> {
    let RadialSpec { dim, density, r_min, r_max, radial_nodes, angular_sectors } = *spec;
    if !(r_min > 0.0) {
        return Err(Error::InvalidMeasure(format!("inner cutoff r_min must be > 0, got {r_min}")));
    }
    if !(r_max > r_min) || !r_max.is_finite() {
        return Err(Error::InvalidMeasure(format!("need r_max > r_min, got [{r_min}, {r_max}]")));
    }
    if radial_nodes == 0 || (dim == 2 && angular_sectors == 0) {
        return Err(Error::InvalidMeasure("node counts must be positive".into()));
    }
    let dr = (r_max - r_min) / radial_nodes as f64;
    let mut raw = Vec::new();
    for i in 0..radial_nodes {
        let r = r_min + (i as f64 + 0.5) * dr;
        let d = density(r);
        if !d.is_finite() || d < 0.0 {
            return Err(Error::InvalidMeasure(format!("density {d} at |z| = {r}")));
        }
        if d == 0.0 {
            continue;
        }
        match dim {
            1 => {
                raw.push(([r, 0.0], d * dr));
                raw.push(([-r, 0.0], d * dr));
            }
            2 => {
                let dtheta = 2.0 * PI / angular_sectors as f64;
                for j in 0..angular_sectors {
                    let t = (j as f64 + 0.5) * dtheta;
                    raw.push(([r * libm::cos(t), r * libm::sin(t)], d * r * dr * dtheta));
                }
            }
            _ => return Err(Error::InvalidMeasure(format!("dimension must be 1 or 2, got {dim}"))),
        }
    }
    let truncated = truncated_second_moment(dim, density, r_min);
    LevyQuadrature::assemble(dim, &raw, truncated)
}

fn truncated_second_moment(dim: usize, density: &dyn Fn(f64) -> f64, r_min: f64) -> f64 {
    let dr = r_min / TRUNCATION_NODES as f64;
    let surface = |r: f64| if dim == 1 { 2.0 } else { 2.0 * PI * r };
    (0..TRUNCATION_NODES)
        .map(|i| {
            let r = (i as f64 + 0.5) * dr;
            r * r * density(r).max(0.0) * surface(r) * dr
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn single_tail_atom() {
        let q = LevyQuadrature::from_atoms(1, &[([2.0, 0.0], 1.0)]).unwrap();
        assert!(!q.atoms()[0].small);
        assert_eq!(q.second_moment_small(), 0.0);
        assert_eq!(q.tail_mass(), 1.0);
    }

    #[test]
    fn symmetric_small_pair() {
        let q = LevyQuadrature::from_atoms(1, &[([0.5, 0.0], 1.0), ([-0.5, 0.0], 1.0)]).unwrap();
        assert!(q.atoms().iter().all(|a| a.small));
        assert_eq!(q.second_moment_small(), 0.5);
        assert_eq!(q.tail_mass(), 0.0);
    }

    #[test]
    fn mixed_atoms() {
        let q = LevyQuadrature::from_atoms(1, &[([0.5, 0.0], 1.0), ([-0.5, 0.0], 1.0), ([3.0, 0.0], 0.2)]).unwrap();
        assert_eq!(q.second_moment_small(), 0.5);
        assert_eq!(q.tail_mass(), 0.2);
        assert_eq!(q.max_jump(), 3.0);
    }

    #[test]
    fn unit_jump_is_small() {
        let q = LevyQuadrature::from_atoms(2, &[([0.6, 0.8], 1.0), ([1.0, 0.0], 2.0)]).unwrap();
        assert!(q.atoms().iter().all(|a| a.small));
        assert_eq!(q.tail_mass(), 0.0);
    }

    #[test]
    fn invalid_atoms_rejected() {
        assert!(LevyQuadrature::from_atoms(1, &[]).is_err());
        assert!(LevyQuadrature::from_atoms(1, &[([1.0, 0.0], -1.0)]).is_err());
        assert!(LevyQuadrature::from_atoms(1, &[([1.0, 0.0], 0.0)]).is_err());
        assert!(LevyQuadrature::from_atoms(1, &[([0.0, 0.0], 1.0)]).is_err());
        assert!(LevyQuadrature::from_atoms(1, &[([1.0, 1.0], 1.0)]).is_err());
    }

    #[test]
    fn radial_power_law_second_moment() {
        // ∫_{0.01≤|z|≤1} |z|^{0.5} dz = 2·(2/3)(1 - 0.01^{1.5})
        let density = |r: f64| r.powf(-1.5);
        let spec = MeasureSpec::Radial(RadialSpec {
            dim: 1,
            density: &density,
            r_min: 0.01,
            r_max: 1.0,
            radial_nodes: 1000,
            angular_sectors: 1,
        });
        let q = build_quadrature(&spec).unwrap();
        let exact = 4.0 / 3.0 * (1.0 - 0.01f64.powf(1.5));
        assert_abs_diff_eq!(exact, 1.3320, epsilon = 1e-4);
        assert_abs_diff_eq!(q.second_moment_small(), exact, epsilon = 1e-3);
        assert_eq!(q.tail_mass(), 0.0);
        // ∫_0^{0.01} 2 r^{0.5} dr = (4/3)·0.01^{1.5}
        assert_abs_diff_eq!(q.truncated_second_moment(), 4.0 / 3.0 * 1e-3, epsilon = 1e-6);
    }

    #[test]
    fn stable_density_small_moment_limit() {
        // |z|^{-1-σ}, σ = 1/2: s2(ε) = (4/3)(1 - ε^{3/2}) → 4/3
        let density = |r: f64| r.powf(-1.5);
        for eps in [1e-2, 1e-3, 1e-4] {
            let q = build_quadrature(&MeasureSpec::Radial(RadialSpec {
                dim: 1,
                density: &density,
                r_min: eps,
                r_max: 1.0,
                radial_nodes: 20_000,
                angular_sectors: 1,
            }))
            .unwrap();
            let closed = 4.0 / 3.0 * (1.0 - eps.powf(1.5));
            assert_abs_diff_eq!(q.second_moment_small(), closed, epsilon = 1e-5);
            assert_abs_diff_eq!(q.second_moment_small() + q.truncated_second_moment(), 4.0 / 3.0, epsilon = 1e-4);
        }
    }

    #[test]
    fn planar_annulus_moments() {
        // d ≡ 1 on 0.5 ≤ |z| ≤ 1.5: s2 = 2π(1 - 0.5⁴)/4, tmass = π(1.5² - 1)
        let density = |_: f64| 1.0;
        let q = build_quadrature(&MeasureSpec::Radial(RadialSpec {
            dim: 2,
            density: &density,
            r_min: 0.5,
            r_max: 1.5,
            radial_nodes: 100,
            angular_sectors: 24,
        }))
        .unwrap();
        assert_abs_diff_eq!(q.second_moment_small(), 2.0 * PI * (1.0 - 0.0625) / 4.0, epsilon = 1e-4);
        assert_abs_diff_eq!(q.tail_mass(), PI * 1.25, epsilon = 1e-9);
    }

    #[test]
    fn radial_refinement_improves_moment() {
        let density = |r: f64| r.powf(-1.5);
        let exact = 4.0 / 3.0 * (1.0 - 0.01f64.powf(1.5));
        let mut last = f64::INFINITY;
        for nodes in [10, 20, 40, 80, 160, 320] {
            let q = build_quadrature(&MeasureSpec::Radial(RadialSpec {
                dim: 1,
                density: &density,
                r_min: 0.01,
                r_max: 1.0,
                radial_nodes: nodes,
                angular_sectors: 1,
            }))
            .unwrap();
            let err = (q.second_moment_small() - exact).abs();
            assert!(err < last, "nodes {nodes}: {err} !< {last}");
            last = err;
        }
    }

    #[test]
    fn radial_rejects_bad_specs() {
        let density = |r: f64| r.powf(-1.5);
        let base =
            RadialSpec { dim: 1, density: &density, r_min: 0.0, r_max: 1.0, radial_nodes: 10, angular_sectors: 1 };
        assert!(build_quadrature(&MeasureSpec::Radial(base)).is_err());
        let negative = |_: f64| -1.0;
        let spec = RadialSpec { density: &negative, r_min: 0.1, ..base };
        assert!(build_quadrature(&MeasureSpec::Radial(spec)).is_err());
        let zero = |_: f64| 0.0;
        let spec = RadialSpec { density: &zero, r_min: 0.1, ..base };
        assert!(build_quadrature(&MeasureSpec::Radial(spec)).is_err());
    }

    proptest! {
        #[test]
        fn scaling_scales_moments(c in 0.01..100.0f64,
                                  zs in proptest::collection::vec((-3.0..3.0f64, 0.01..2.0f64), 1..12)) {
            let atoms: Vec<(Point, f64)> = zs.iter()
                .filter(|(z, _)| z.abs() > 1e-6)
                .map(|&(z, w)| ([z, 0.0], w)).collect();
            prop_assume!(!atoms.is_empty());
            let q = LevyQuadrature::from_atoms(1, &atoms).unwrap();
            let s = q.scaled(c).unwrap();
            prop_assert!((s.second_moment_small() - c * q.second_moment_small()).abs()
                         <= 1e-12 * c * q.second_moment_small().max(1.0));
            prop_assert!((s.tail_mass() - c * q.tail_mass()).abs()
                         <= 1e-12 * c * q.tail_mass().max(1.0));
        }
    }
}
