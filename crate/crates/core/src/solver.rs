//! Damped Picard solver for the Dirichlet problem
//!
//! ```text
//! F(x, u, Du, D²u) - I[u](x) = 0  in Ω,      u = g  on Ω^c,
//! ```
//!
//! with central differences for `Du`, `D²u`, plus comparison experiments and
//! manufactured-solution convergence studies.

use crate::error::{Error, Result};
use crate::field::SmoothField;
use crate::grid::{discrete_jet, Grid, GridFunction, Node, Point};
use crate::levy::LevyQuadrature;
use crate::nonlocal::eval_nonlocal;
use crate::viscosity::FSpec;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// Fixed-point variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeVariant {
    /// `F - I[u]`.
    Standard,
    /// `F + I[u]`: a non-monotone scheme kept to show that the comparison
    /// experiments can fail.
    FlippedNonlocalSign,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveParams {
    pub damping: f64,
    pub max_iters: usize,
    /// Stop once the sup-norm of the residual is at most this.
    pub stop_tol: f64,
    pub scheme: SchemeVariant,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams { damping: 1.0, max_iters: 200_000, stop_tol: 1e-10, scheme: SchemeVariant::Standard }
    }
}

impl SolveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter { name: "damping", reason: format!("{} not in (0, 1]", self.damping) });
        }
        if !(self.stop_tol > 0.0) || !self.stop_tol.is_finite() {
            return Err(Error::InvalidParameter { name: "stop_tol", reason: format!("{} is not > 0", self.stop_tol) });
        }
        Ok(())
    }
}

fn check_setup(grid: &Grid, f: &FSpec, q: &LevyQuadrature) -> Result<()> {
    if grid.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), got: q.dim() });
    }
    if grid.halo_radius() + 1e-12 < q.max_jump() {
        return Err(Error::HaloTooSmall { halo: grid.halo_radius(), jump: q.max_jump() });
    }
    f.check_elliptic(grid)
}

/// Residual of the chosen scheme variant at an interior node.
pub fn scheme_residual_for(
    u: &GridFunction,
    node: Node,
    f: &FSpec,
    q: &LevyQuadrature,
    scheme: SchemeVariant,
) -> Result<f64> {
    if !u.grid().is_interior(node) {
        return Err(Error::NotInterior(node));
    }
    let jet = discrete_jet(u, node)?;
    let x = u.grid().coord(node);
    let nonlocal = eval_nonlocal(u, node, &jet.p, q)?;
    let local = f.eval(&x, u.at(node), &jet.p, &jet.x);
    Ok(match scheme {
        SchemeVariant::Standard => local - nonlocal,
        SchemeVariant::FlippedNonlocalSign => local + nonlocal,
    })
}

/// Discrete residual `F(x, u(x), p, X) - I[u](x)` with the central-difference
/// jet at an interior node.
pub fn scheme_residual(u: &GridFunction, node: Node, f: &FSpec, q: &LevyQuadrature) -> Result<f64> {
    scheme_residual_for(u, node, f, q, SchemeVariant::Standard)
}

/// Residuals at all interior nodes, in lexicographic order.
fn residuals(
    u: &GridFunction,
    nodes: &[Node],
    f: &FSpec,
    q: &LevyQuadrature,
    scheme: SchemeVariant,
) -> Result<Vec<f64>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        nodes.par_iter().map(|&n| scheme_residual_for(u, n, f, q, scheme)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        nodes.iter().map(|&n| scheme_residual_for(u, n, f, q, scheme)).collect()
    }
}

fn sup_norm(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, v| if libm::fabs(*v) > m || v.is_nan() { libm::fabs(*v) } else { m })
}

/// Diagonal normalization `λ + 2·tr(a)/h² + Σ_j w_j` at `x`; it bounds the
/// derivative of the residual in `u(x)`.
fn diagonal(f: &FSpec, q: &LevyQuadrature, grid: &Grid, x: &Point) -> f64 {
    f.lambda() + 2.0 * f.diffusion_at(x).trace() / (grid.h() * grid.h()) + q.total_mass()
}

/// One bulk-synchronous update `u ← u - θ·R(u)/D` on the interior. Returns the
/// new iterate and the sup-norm of the residual of the old one.
pub fn picard_step(
    u: &GridFunction,
    f: &FSpec,
    q: &LevyQuadrature,
    params: &SolveParams,
) -> Result<(GridFunction, f64)> {
    let grid = *u.grid();
    let nodes: Vec<Node> = grid.interior_nodes().collect();
    let r = residuals(u, &nodes, f, q, params.scheme)?;
    Ok((update(u, &nodes, &r, f, q, params)?, sup_norm(&r)))
}

fn update(
    u: &GridFunction,
    nodes: &[Node],
    r: &[f64],
    f: &FSpec,
    q: &LevyQuadrature,
    params: &SolveParams,
) -> Result<GridFunction> {
    let grid = u.grid();
    let next: Vec<f64> = nodes
        .iter()
        .zip(r)
        .map(|(&n, &res)| u.at(n) - params.damping * res / diagonal(f, q, grid, &grid.coord(n)))
        .collect();
    u.with_interior(&next)
}

/// Solution of a Dirichlet solve.
#[derive(Clone, Debug)]
pub struct Solution {
    pub u: GridFunction,
    /// Residual evaluations performed, the last one included.
    pub iterations: usize,
    /// Sup-norm of the residual of `u`.
    pub residual: f64,
}

/// Damped Picard iteration from the initial guess `f(x)/λ`. The exterior data
/// `g` is sampled once onto every non-interior node and stays pinned.
pub fn solve_dirichlet(
    f: &FSpec,
    g: &dyn Fn(&Point) -> f64,
    q: &LevyQuadrature,
    grid: &Grid,
    params: &SolveParams,
) -> Result<Solution> {
    params.validate()?;
    check_setup(grid, f, q)?;
    let lambda = f.lambda();
    let u = GridFunction::from_parts(*grid, |x| f.source_at(x) / lambda, g)?;
    solve_from(u, f, q, params)
}

/// Picard iteration from an explicit initial iterate, whose exterior values
/// are kept.
pub fn solve_from(mut u: GridFunction, f: &FSpec, q: &LevyQuadrature, params: &SolveParams) -> Result<Solution> {
    params.validate()?;
    let grid = *u.grid();
    check_setup(&grid, f, q)?;
    let nodes: Vec<Node> = grid.interior_nodes().collect();
    let mut last = f64::INFINITY;
    for it in 1..=params.max_iters {
        let r = residuals(&u, &nodes, f, q, params.scheme)?;
        last = sup_norm(&r);
        if !last.is_finite() {
            return Err(Error::NotConverged { iterations: it, residual: last });
        }
        if last <= params.stop_tol {
            return Ok(Solution { u, iterations: it, residual: last });
        }
        u = update(&u, &nodes, &r, f, q, params)?;
    }
    Err(Error::NotConverged { iterations: params.max_iters, residual: last })
}

/// Checks a sufficient condition for the scheme to be monotone: diagonal
/// diffusion and, per axis, `h·(L_H + |Σ_{|z|≤1} w z_i|) ≤ 2 a_ii`, where
/// `L_H` bounds `|∂H/∂p_i|`. The error names the first offending node.
pub fn check_monotone(f: &FSpec, q: &LevyQuadrature, grid: &Grid) -> Result<()> {
    let mut drift = [0.0; 2];
    for a in q.atoms().iter().filter(|a| a.small) {
        for (i, d) in drift.iter_mut().enumerate() {
            *d += a.weight * a.z[i];
        }
    }
    for n in grid.interior_nodes() {
        let x = grid.coord(n);
        let a = f.diffusion_at(&x);
        if grid.dim() == 2 && a.get(0, 1) != 0.0 {
            return Err(Error::InvalidParameter {
                name: "diffusion",
                reason: format!("off-diagonal diffusion at {x:?} breaks monotonicity of the cross stencil"),
            });
        }
        for i in 0..grid.dim() {
            let need = grid.h() * (f.hamiltonian().lipschitz(i) + libm::fabs(drift[i]));
            if need > 2.0 * a.get(i, i) + 1e-12 {
                return Err(Error::InvalidParameter {
                    name: "scheme",
                    reason: format!(
                        "first-order terms dominate on axis {i} at {x:?}: h·(L_H + |drift|) = {need} > 2·a_ii = {}",
                        2.0 * a.get(i, i)
                    ),
                });
            }
        }
    }
    Ok(())
}

/// Outcome of [`comparison_experiment`].
#[derive(Clone, Debug)]
pub struct ComparisonReport {
    /// `max_Ω (u₁ - u₂)`.
    pub violation: f64,
    pub worst_node: Node,
    pub pass: bool,
    pub iterations: [usize; 2],
    pub residuals: [f64; 2],
    /// Why the sufficient monotonicity condition fails, if it does.
    pub monotonicity: Option<String>,
    pub u1: GridFunction,
    pub u2: GridFunction,
}

/// Solves with exterior data `g₁ ≤ g₂` and reports the worst interior violation
/// of `u₁ ≤ u₂`; passes when it is at most `tol`.
pub fn comparison_experiment(
    f: &FSpec,
    q: &LevyQuadrature,
    grid: &Grid,
    g1: &dyn Fn(&Point) -> f64,
    g2: &dyn Fn(&Point) -> f64,
    params: &SolveParams,
    tol: f64,
) -> Result<ComparisonReport> {
    for n in grid.nodes().filter(|&n| !grid.is_interior(n)) {
        let x = grid.coord(n);
        if g1(&x) > g2(&x) {
            return Err(Error::DataNotOrdered { at: x });
        }
    }
    let s1 = solve_dirichlet(f, g1, q, grid, params)?;
    let s2 = solve_dirichlet(f, g2, q, grid, params)?;
    let mut violation = f64::NEG_INFINITY;
    let mut worst_node = Node([0, 0]);
    for n in grid.interior_nodes() {
        let d = s1.u.at(n) - s2.u.at(n);
        if d > violation {
            violation = d;
            worst_node = n;
        }
    }
    Ok(ComparisonReport {
        violation,
        worst_node,
        pass: violation <= tol,
        iterations: [s1.iterations, s2.iterations],
        residuals: [s1.residual, s2.residual],
        monotonicity: check_monotone(f, q, grid).err().map(|e| format!("{e}")),
        u1: s1.u,
        u2: s2.u,
    })
}

/// Closed-form `I[u*](x)` for a smooth field, from exact values at `x + z_j`.
pub fn exact_nonlocal(u: &dyn SmoothField, x: &Point, q: &LevyQuadrature) -> f64 {
    let ux = u.value(x);
    let grad = u.gradient(x);
    q.atoms()
        .iter()
        .map(|a| {
            let y = [x[0] + a.z[0], x[1] + a.z[1]];
            let comp = if a.small { a.z[0] * grad[0] + a.z[1] * grad[1] } else { 0.0 };
            a.weight * (u.value(&y) - ux - comp)
        })
        .sum()
}

/// Source making `u*` an exact solution: `f = λu* - tr(a D²u*) + H(x, Du*) - I[u*]`.
pub fn manufactured_source(u: &dyn SmoothField, template: &FSpec, q: &LevyQuadrature, x: &Point) -> f64 {
    let dim = q.dim();
    template.lambda() * u.value(x) - template.diffusion_at(x).trace_mul(&u.hessian(x, dim))
        + template.hamiltonian().eval(x, &u.gradient(x))
        - exact_nonlocal(u, x, q)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    /// Sup-norm error on interior nodes.
    pub error: f64,
    /// `log(e_prev/e) / log(h_prev/h)` against the previous row.
    pub order: Option<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Order reported on the last row.
    pub fn last_order(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.order)
    }
}

/// Solves the manufactured problem for `u*` on the box `bounds` at each
/// spacing; the source of `template` is replaced and `g = u*`.
pub fn convergence_study<U>(
    u_star: &U,
    template: &FSpec,
    q: &LevyQuadrature,
    bounds: &[(f64, f64)],
    hs: &[f64],
    params: &SolveParams,
) -> Result<ConvergenceTable>
where
    U: SmoothField + Clone + Send + Sync + 'static,
{
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(hs.len());
    let (u_src, q_src) = (u_star.clone(), q.clone());
    let f = template.clone().with_source({
        let t = template.clone();
        move |x| manufactured_source(&u_src, &t, &q_src, x)
    });
    for &h in hs {
        let grid = Grid::new(bounds, h, q.max_jump())?;
        let sol = solve_dirichlet(&f, &|x| u_star.value(x), q, &grid, params)?;
        let error =
            grid.interior_nodes().map(|n| libm::fabs(sol.u.at(n) - u_star.value(&grid.coord(n)))).fold(0.0, f64::max);
        let order = rows.last().map(|prev| libm::log(prev.error / error) / libm::log(prev.h / h));
        rows.push(ConvergenceRow { h, error, order, iterations: sol.iterations });
    }
    Ok(ConvergenceTable { rows })
}
