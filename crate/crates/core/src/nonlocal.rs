//! The compensated nonlocal term
//!
//! ```text
//! I[u](x) = Σ_j w_j [u(x + z_j) - u(x) - 1_{|z_j|≤1} <z_j, p>]
//! ```
//!
//! and its variants: the split form that replaces jumps `|z| ≤ ε` by a
//! second-order model, the form restricted to jumps landing in `Ω̄`, and the
//! anchored form used by the Neumann residuals.
//!
//! The gradient `p` is always supplied by the caller. Values at `x + z` off the
//! lattice are multilinearly interpolated.

use crate::error::{Error, Result};
use crate::grid::{dot, norm, norm_sq, GridFunction, Jet, Node, Point};
use crate::levy::{Atom, LevyQuadrature};
use alloc::format;

/// Which one-sided second-order model replaces the small jumps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Upper model `½<(X + 2δI)z, z>` (subsolutions).
    Sub,
    /// Lower model `½<(Y - 2δI)z, z>` (supersolutions).
    Super,
}

fn shifted(x: &Point, z: &Point) -> Point {
    [x[0] + z[0], x[1] + z[1]]
}

fn atom_term(u: &GridFunction, node: Node, ux: f64, p: &Point, atom: &Atom, k: usize) -> Result<f64> {
    let v = u
        .sample_shifted(node, &atom.z)
        .ok_or_else(|| Error::OutOfReach { atom: k, target: shifted(&u.grid().coord(node), &atom.z) })?;
    let compensator = if atom.small { dot(&atom.z, p) } else { 0.0 };
    Ok(atom.weight * (v - ux - compensator))
}

fn check_dims(u: &GridFunction, q: &LevyQuadrature) -> Result<()> {
    if u.grid().dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: u.grid().dim(), got: q.dim() });
    }
    Ok(())
}

fn value_at(u: &GridFunction, node: Node) -> Result<f64> {
    u.get(node).ok_or(Error::MissingNeighbor { node, offset: [0, 0] })
}

/// `I[u](x)` summed over every atom, in atom order.
pub fn eval_nonlocal(u: &GridFunction, node: Node, p: &Point, q: &LevyQuadrature) -> Result<f64> {
    check_dims(u, q)?;
    let ux = value_at(u, node)?;
    q.atoms().iter().enumerate().try_fold(0.0, |acc, (k, a)| Ok(acc + atom_term(u, node, ux, p, a, k)?))
}

/// Split evaluation: atoms with `|z| ≤ ε` contribute `½<(X ± 2δI)z, z>` (sign
/// from `side`), the others are evaluated directly. When `ε` is below every
/// jump the result is bit-identical to [`eval_nonlocal`].
pub fn eval_nonlocal_split(
    u: &GridFunction,
    node: Node,
    jet: &Jet,
    delta: f64,
    eps: f64,
    q: &LevyQuadrature,
    side: Side,
) -> Result<f64> {
    check_dims(u, q)?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter { name: "eps", reason: format!("{eps} not in (0, 1]") });
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter { name: "delta", reason: format!("{delta} < 0") });
    }
    let shift = match side {
        Side::Sub => 2.0 * delta,
        Side::Super => -2.0 * delta,
    };
    let ux = value_at(u, node)?;
    q.atoms().iter().enumerate().try_fold(0.0, |acc, (k, a)| {
        let term = if norm(&a.z) <= eps {
            a.weight * 0.5 * (jet.x.quad(&a.z) + shift * norm_sq(&a.z))
        } else {
            atom_term(u, node, ux, &jet.p, a, k)?
        };
        Ok(acc + term)
    })
}

/// `I[u](x)` restricted to atoms with `x + z_j ∈ Ω̄`, where `Ω` is the box of
/// `region`. Other atoms are skipped.
pub fn eval_nonlocal_restricted(
    u: &GridFunction,
    node: Node,
    p: &Point,
    q: &LevyQuadrature,
    region: &crate::grid::Grid,
) -> Result<f64> {
    check_dims(u, q)?;
    let x = u.grid().coord(node);
    let ux = value_at(u, node)?;
    q.atoms().iter().enumerate().try_fold(0.0, |acc, (k, a)| {
        if region.box_contains(&shifted(&x, &a.z)) {
            Ok(acc + atom_term(u, node, ux, p, a, k)?)
        } else {
            Ok(acc)
        }
    })
}

/// Nonlocal term with the jump set anchored at `anchor`: atoms with
/// `anchor + z_j ∈ Ω̄` are admissible, `u` is evaluated at `x + z_j`.
/// Admissible atoms whose target `x + z_j` leaves `Ω̄` are skipped and counted.
pub fn eval_nonlocal_anchored(
    u: &GridFunction,
    node: Node,
    anchor: &Point,
    p: &Point,
    q: &LevyQuadrature,
) -> Result<(f64, usize)> {
    check_dims(u, q)?;
    let grid = u.grid();
    let x = grid.coord(node);
    let ux = value_at(u, node)?;
    let mut skipped = 0;
    let mut acc = 0.0;
    for (k, a) in q.atoms().iter().enumerate() {
        if !grid.box_contains(&shifted(anchor, &a.z)) {
            continue;
        }
        if !grid.box_contains(&shifted(&x, &a.z)) {
            skipped += 1;
            continue;
        }
        acc += atom_term(u, node, ux, p, a, k)?;
    }
    Ok((acc, skipped))
}

/// Total weight of atoms that are not lattice vectors of `grid`, i.e. whose
/// evaluation interpolates.
pub fn off_lattice_weight(grid: &crate::grid::Grid, q: &LevyQuadrature) -> f64 {
    q.atoms()
        .iter()
        .filter(|a| {
            (0..grid.dim()).any(|i| {
                let s = a.z[i] / grid.h();
                libm::fabs(s - libm::round(s)) > 1e-9
            })
        })
        .map(|a| a.weight)
        .sum()
}

/// Bound on the interpolation error of [`eval_nonlocal`] for a function whose
/// second derivatives satisfy `Σ_i |∂_ii u| ≤ hessian_bound`:
/// `(h²/8) · hessian_bound · (off-lattice weight)`.
pub fn interpolation_error_bound(grid: &crate::grid::Grid, q: &LevyQuadrature, hessian_bound: f64) -> f64 {
    grid.h() * grid.h() / 8.0 * hessian_bound * off_lattice_weight(grid, q)
}
