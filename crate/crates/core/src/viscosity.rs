//! Approximate viscosity inequalities, the doubling-of-variables engine and
//! its Jensen-type perturbed maxima, and residuals of the Neumann
//! approximating problem.
//!
//! The nonlinearity is the concrete proper, degenerate elliptic family
//!
//! ```text
//! F(x, r, p, X) = λ r - trace(a(x) X) + H(x, p) - f(x),     λ > 0, a(x) ⪰ 0.
//! ```

use crate::error::{Error, Result};
use crate::grid::{discrete_jet, dot, is_matrix_ordered, norm, norm_sq, Grid, GridFunction, Jet, Node, Point, SymMat};
use crate::levy::LevyQuadrature;
use crate::moreau::{certify_semiconcave_directional, certify_semiconvex_directional};
use crate::nonlocal::{eval_nonlocal_anchored, eval_nonlocal_split, Side};
use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use rand_core::RngCore;

/// Check tolerances and the Jensen slack scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Relative slack on one-sided jet bounds.
    pub jet_bound: f64,
    /// Slack on `X ≤ Y`.
    pub matrix_order: f64,
    /// Slack on the key inequality and on re-checked maximality.
    pub key_inequality: f64,
    /// Slack on residual-type verdicts.
    pub check: f64,
    /// `δ₀` in `δ_m = 2^{-m} δ₀`.
    pub delta0: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { jet_bound: 1e-10, matrix_order: 1e-9, key_inequality: 1e-8, check: 1e-8, delta0: 0.1 }
    }
}

type FieldFn<T> = Arc<dyn Fn(&Point) -> T + Send + Sync>;

pub type HamiltonianFn = Arc<dyn Fn(&Point, &Point) -> f64 + Send + Sync>;

/// First-order part `H(x, p)`.
#[derive(Clone)]
pub enum Hamiltonian {
    Zero,
    /// `<b, p>`.
    Linear(Point),
    /// `k |p|`.
    Eikonal(f64),
    /// Arbitrary continuous `H`, with a bound on `|∂H/∂p_i|` used by the
    /// monotonicity check of the solver.
    Custom {
        f: HamiltonianFn,
        lipschitz: f64,
    },
}

impl Hamiltonian {
    pub fn eval(&self, x: &Point, p: &Point) -> f64 {
        match self {
            Hamiltonian::Zero => 0.0,
            Hamiltonian::Linear(b) => dot(b, p),
            Hamiltonian::Eikonal(k) => k * norm(p),
            Hamiltonian::Custom { f, .. } => f(x, p),
        }
    }

    /// Bound on `|∂H/∂p_axis|`.
    pub fn lipschitz(&self, axis: usize) -> f64 {
        match self {
            Hamiltonian::Zero => 0.0,
            Hamiltonian::Linear(b) => libm::fabs(b[axis]),
            Hamiltonian::Eikonal(k) => libm::fabs(*k),
            Hamiltonian::Custom { lipschitz, .. } => *lipschitz,
        }
    }
}

impl fmt::Debug for Hamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hamiltonian::Zero => write!(f, "Zero"),
            Hamiltonian::Linear(b) => write!(f, "Linear({b:?})"),
            Hamiltonian::Eikonal(k) => write!(f, "Eikonal({k})"),
            Hamiltonian::Custom { lipschitz, .. } => write!(f, "Custom {{ lipschitz: {lipschitz} }}"),
        }
    }
}

#[derive(Clone)]
enum Diffusion {
    Constant(SymMat),
    Field(FieldFn<SymMat>),
}

#[derive(Clone)]
pub struct FSpec {
    lambda: f64,
    diffusion: Diffusion,
    hamiltonian: Hamiltonian,
    source: FieldFn<f64>,
}

impl fmt::Debug for FSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let diffusion = match &self.diffusion {
            Diffusion::Constant(a) => format!("{a:?}"),
            Diffusion::Field(_) => "<field>".into(),
        };
        f.debug_struct("FSpec")
            .field("lambda", &self.lambda)
            .field("diffusion", &diffusion)
            .field("hamiltonian", &self.hamiltonian)
            .finish_non_exhaustive()
    }
}

impl FSpec {
    /// `F = λ r` in dimension `dim`; add terms with the builder methods.
    pub fn new(dim: usize, lambda: f64) -> Result<FSpec> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Properness(lambda));
        }
        Ok(FSpec {
            lambda,
            diffusion: Diffusion::Constant(SymMat::zeros(dim)),
            hamiltonian: Hamiltonian::Zero,
            source: Arc::new(|_| 0.0),
        })
    }

    /// Constant diffusion matrix; rejected unless positive semidefinite.
    pub fn with_diffusion(mut self, a: SymMat) -> Result<FSpec> {
        let eig = a.min_eigenvalue();
        if eig < -1e-12 {
            return Err(Error::NotDegenerateElliptic { at: [0.0; 2], eig });
        }
        self.diffusion = Diffusion::Constant(a);
        Ok(self)
    }

    /// Space-dependent diffusion; positivity is checked per grid by
    /// [`FSpec::check_elliptic`].
    pub fn with_diffusion_field(mut self, a: impl Fn(&Point) -> SymMat + Send + Sync + 'static) -> FSpec {
        self.diffusion = Diffusion::Field(Arc::new(a));
        self
    }

    pub fn with_hamiltonian(mut self, h: Hamiltonian) -> FSpec {
        self.hamiltonian = h;
        self
    }

    pub fn with_source(mut self, f: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> FSpec {
        self.source = Arc::new(f);
        self
    }

    pub fn with_constant_source(self, c: f64) -> FSpec {
        self.with_source(move |_| c)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.hamiltonian
    }

    pub fn diffusion_at(&self, x: &Point) -> SymMat {
        match &self.diffusion {
            Diffusion::Constant(a) => *a,
            Diffusion::Field(a) => a(x),
        }
    }

    pub fn source_at(&self, x: &Point) -> f64 {
        (self.source)(x)
    }

    /// `F(x, r, p, X)`.
    pub fn eval(&self, x: &Point, r: f64, p: &Point, xm: &SymMat) -> f64 {
        self.lambda * r - self.diffusion_at(x).trace_mul(xm) + self.hamiltonian.eval(x, p) - self.source_at(x)
    }

    /// Checks `a(x) ⪰ 0` at every lattice node.
    pub fn check_elliptic(&self, grid: &Grid) -> Result<()> {
        for n in grid.nodes() {
            let x = grid.coord(n);
            let eig = self.diffusion_at(&x).min_eigenvalue();
            if eig < -1e-12 {
                return Err(Error::NotDegenerateElliptic { at: x, eig });
            }
        }
        Ok(())
    }
}

/// Lattice offsets `k` (in node units) with `0 < |k|·h ≤ radius`, sorted by length.
fn lattice_ball(grid: &Grid, radius: f64) -> Vec<[i64; 2]> {
    let h = grid.h();
    let reach = libm::floor(radius / h + 1e-9) as i64;
    let span1 = if grid.dim() == 2 { reach } else { 0 };
    let mut out = Vec::new();
    for a in -reach..=reach {
        for b in -span1..=span1 {
            if (a, b) == (0, 0) {
                continue;
            }
            let len = libm::sqrt((a * a + b * b) as f64) * h;
            if len <= radius * (1.0 + 1e-12) {
                out.push([a, b]);
            }
        }
    }
    out.sort_by(|p, q| (p[0] * p[0] + p[1] * p[1]).cmp(&(q[0] * q[0] + q[1] * q[1])).then(p.cmp(q)));
    out
}

fn offset_vector(grid: &Grid, k: [i64; 2]) -> Point {
    [k[0] as f64 * grid.h(), k[1] as f64 * grid.h()]
}

/// Amount by which the one-sided bound fails at lattice offset `k`, relative
/// to the magnitudes involved (positive means violated).
fn jet_excess(u: &GridFunction, node: Node, jet: &Jet, delta: f64, side: Side, k: [i64; 2]) -> Result<f64> {
    let grid = u.grid();
    let z = offset_vector(grid, k);
    let ux = u.at(node);
    let uz = u.get(node.offset(k)).ok_or(Error::MissingNeighbor { node, offset: k })?;
    let linear = ux + dot(&jet.p, &z) + 0.5 * jet.x.quad(&z);
    let pad = delta * norm_sq(&z);
    let excess = match side {
        Side::Sub => uz - (linear + pad),
        Side::Super => (linear - pad) - uz,
    };
    let scale = 1.0 + libm::fabs(ux) + libm::fabs(uz);
    Ok(excess / scale)
}

/// Verifies the one-sided jet bound on every lattice offset with `|z| ≤ ε`:
/// `u(x+z) ≤ u(x) + <p,z> + ½<Xz,z> + δ|z|²` (sub side) or its mirror.
pub fn check_jet_bound(
    u: &GridFunction,
    node: Node,
    jet: &Jet,
    eps: f64,
    delta: f64,
    side: Side,
    tol: f64,
) -> Result<()> {
    for k in lattice_ball(u.grid(), eps) {
        let excess = jet_excess(u, node, jet, delta, side, k)?;
        if excess > tol {
            return Err(Error::JetBound { z: offset_vector(u.grid(), k), excess });
        }
    }
    Ok(())
}

/// Largest lattice radius `≤ cap` on which the one-sided bound holds; zero when
/// it already fails at the nearest offsets or a neighbour is missing.
pub fn largest_jet_radius(u: &GridFunction, node: Node, jet: &Jet, delta: f64, side: Side, cap: f64, tol: f64) -> f64 {
    let grid = u.grid();
    let mut eps = 0.0;
    let ball = lattice_ball(grid, cap);
    let mut i = 0;
    while i < ball.len() {
        let len2 = ball[i][0] * ball[i][0] + ball[i][1] * ball[i][1];
        let mut j = i;
        while j < ball.len() && ball[j][0] * ball[j][0] + ball[j][1] * ball[j][1] == len2 {
            match jet_excess(u, node, jet, delta, side, ball[j]) {
                Ok(e) if e <= tol => j += 1,
                _ => return eps,
            }
        }
        eps = libm::sqrt(len2 as f64) * grid.h();
        i = j;
    }
    eps
}

/// Residual of the approximate subsolution inequality at `x` with the small
/// jumps `|z| ≤ ε` replaced by `½<(X + 2δI)z, z>`:
/// `F(x, u(x), p, X) - I_split`. Subsolution at slack `ν` means `≤ ν`.
#[allow(clippy::too_many_arguments)]
pub fn sub_residual(
    u: &GridFunction,
    node: Node,
    jet: &Jet,
    f: &FSpec,
    q: &LevyQuadrature,
    eps: f64,
    delta: f64,
    tol: &Tolerances,
) -> Result<f64> {
    side_residual(u, node, jet, f, q, eps, delta, tol, Side::Sub)
}

/// Mirror of [`sub_residual`] with `Y - 2δI` and the lower jet bound.
/// Supersolution at slack `ν` means `≥ -ν`.
#[allow(clippy::too_many_arguments)]
pub fn super_residual(
    v: &GridFunction,
    node: Node,
    jet: &Jet,
    f: &FSpec,
    q: &LevyQuadrature,
    eps: f64,
    delta: f64,
    tol: &Tolerances,
) -> Result<f64> {
    side_residual(v, node, jet, f, q, eps, delta, tol, Side::Super)
}

#[allow(clippy::too_many_arguments)]
fn side_residual(
    u: &GridFunction,
    node: Node,
    jet: &Jet,
    f: &FSpec,
    q: &LevyQuadrature,
    eps: f64,
    delta: f64,
    tol: &Tolerances,
    side: Side,
) -> Result<f64> {
    let split = eval_nonlocal_split(u, node, jet, delta, eps, q, side)?;
    check_jet_bound(u, node, jet, eps, delta, side, tol.jet_bound)?;
    let x = u.grid().coord(node);
    Ok(f.eval(&x, u.at(node), &jet.p, &jet.x) - split)
}

/// Closed box of node indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexBox {
    pub lo: Node,
    pub hi: Node,
}

impl IndexBox {
    /// Index box of the lattice nodes of `Π [a_i, b_i]`; the corners must be
    /// lattice points.
    pub fn from_coords(grid: &Grid, bounds: &[(f64, f64)]) -> Result<IndexBox> {
        if bounds.len() != grid.dim() {
            return Err(Error::DimensionMismatch { expected: grid.dim(), got: bounds.len() });
        }
        let mut lo = [0i64; 2];
        let mut hi = [0i64; 2];
        for (axis, &(a, b)) in bounds.iter().enumerate() {
            let to_index = |v: f64| -> Result<i64> {
                let s = (v - grid.lo()[axis]) / grid.h();
                let r = libm::round(s);
                if libm::fabs(s - r) > 1e-9 {
                    return Err(Error::InvalidParameter {
                        name: "window",
                        reason: format!("corner {v} on axis {axis} is not a lattice point"),
                    });
                }
                Ok(r as i64)
            };
            lo[axis] = to_index(a)?;
            hi[axis] = to_index(b)?;
        }
        let bx = IndexBox { lo: Node(lo), hi: Node(hi) };
        if !(grid.contains(bx.lo) && grid.contains(bx.hi)) || (0..2).any(|a| lo[a] > hi[a]) {
            return Err(Error::InvalidParameter { name: "window", reason: "box leaves the lattice".into() });
        }
        Ok(bx)
    }

    /// Nodes of `Ω̄`.
    pub fn closure_of(grid: &Grid) -> IndexBox {
        IndexBox { lo: Node([0, 0]), hi: Node([grid.cells(0), grid.cells(1)]) }
    }

    pub fn contains(&self, n: Node, dim: usize) -> bool {
        (0..dim).all(|a| self.lo.0[a] <= n.0[a] && n.0[a] <= self.hi.0[a])
    }

    pub fn contains_open(&self, n: Node, dim: usize) -> bool {
        (0..dim).all(|a| self.lo.0[a] < n.0[a] && n.0[a] < self.hi.0[a])
    }

    fn nodes(&self, dim: usize) -> impl Iterator<Item = Node> + '_ {
        let hi1 = if dim == 2 { self.hi.0[1] } else { self.lo.0[1] };
        let lo1 = self.lo.0[1];
        (self.lo.0[0]..=self.hi.0[0]).flat_map(move |a| (lo1..=hi1).map(move |b| Node([a, b])))
    }
}

/// The open precompact window `O ⊂ Ω × Ω`, discretized as a product of index
/// boxes. Its discrete interior is the product of the open boxes; `∂O` is the
/// rest of the closed product.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub x: IndexBox,
    pub y: IndexBox,
}

impl Window {
    /// `O = Ω × Ω` with `∂O` on `∂(Ω × Ω)`.
    pub fn full(grid: &Grid) -> Window {
        let b = IndexBox::closure_of(grid);
        Window { x: b, y: b }
    }

    pub fn contains_open(&self, x: Node, y: Node, dim: usize) -> bool {
        self.x.contains_open(x, dim) && self.y.contains_open(y, dim)
    }

    /// Euclidean diameter of the closed window in `(x, y)` space.
    pub fn diameter(&self, grid: &Grid) -> f64 {
        let ext = |b: &IndexBox| -> f64 {
            (0..grid.dim())
                .map(|a| {
                    let d = (b.hi.0[a] - b.lo.0[a]) as f64 * grid.h();
                    d * d
                })
                .sum()
        };
        libm::sqrt(ext(&self.x) + ext(&self.y))
    }
}

/// `Φ(x, y) = U(x) - V(y) - α|x - y|²`.
fn phi(u: &GridFunction, v: &GridFunction, alpha: f64, x: Node, y: Node) -> f64 {
    let h = u.grid().h();
    let d0 = (x.0[0] - y.0[0]) as f64 * h;
    let d1 = (x.0[1] - y.0[1]) as f64 * h;
    u.at(x) - v.at(y) - alpha * (d0 * d0 + d1 * d1)
}

/// Tilt `<P, (x, y)>` with `P = (Px, Py)`.
fn tilt(grid: &Grid, p: &[Point; 2], x: Node, y: Node) -> f64 {
    dot(&p[0], &grid.coord(x)) + dot(&p[1], &grid.coord(y))
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Best {
    value: f64,
    x: Node,
    y: Node,
}

impl Best {
    const NONE: Best = Best { value: f64::NEG_INFINITY, x: Node([i64::MAX; 2]), y: Node([i64::MAX; 2]) };

    /// Larger value wins; ties go to the lexicographically smaller pair.
    fn merge(self, other: Best) -> Best {
        if other.value > self.value || (other.value == self.value && (other.x, other.y) < (self.x, self.y)) {
            other
        } else {
            self
        }
    }
}

/// Exhaustive max of `value(x, y)` over pairs of the closed window accepted
/// by `keep`.
fn window_argmax<V, K>(window: &Window, dim: usize, value: V, keep: K) -> Best
where
    V: Fn(Node, Node) -> f64 + Sync,
    K: Fn(Node, Node) -> bool + Sync,
{
    let row = |x: Node| {
        window.y.nodes(dim).filter(|&y| keep(x, y)).fold(Best::NONE, |b, y| b.merge(Best { value: value(x, y), x, y }))
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let xs: Vec<Node> = window.x.nodes(dim).collect();
        xs.par_iter().map(|&x| row(x)).reduce(|| Best::NONE, Best::merge)
    }
    #[cfg(not(feature = "parallel"))]
    {
        window.x.nodes(dim).map(row).fold(Best::NONE, Best::merge)
    }
}

/// Maximum of the doubled function and its interior margin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoublingPoint {
    pub x_bar: Node,
    pub y_bar: Node,
    pub alpha: f64,
    /// `max_O Φ`.
    pub phi_max: f64,
    /// `max_∂O Φ`.
    pub boundary_max: f64,
    /// `phi_max - boundary_max`; perturbation needs `μ > 0`.
    pub mu: f64,
    pub window: Window,
}

fn same_grid(u: &GridFunction, v: &GridFunction) -> Result<()> {
    if u.grid() != v.grid() {
        return Err(Error::InvalidGrid("U and V live on different grids".into()));
    }
    Ok(())
}

/// Exhaustive maximization of `Φ(x, y) = U(x) - V(y) - α|x-y|²` over the
/// discrete window. Ties are broken lexicographically; `μ ≤ 0` is reported,
/// not rejected.
pub fn doubling_maximize(u: &GridFunction, v: &GridFunction, alpha: f64, window: &Window) -> Result<DoublingPoint> {
    same_grid(u, v)?;
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter { name: "alpha", reason: format!("{alpha} is not > 0") });
    }
    let grid = *u.grid();
    let dim = grid.dim();
    for b in [&window.x, &window.y] {
        if !(grid.contains(b.lo) && grid.contains(b.hi)) {
            return Err(Error::InvalidParameter { name: "window", reason: "window leaves the lattice".into() });
        }
    }
    let interior = window_argmax(window, dim, |x, y| phi(u, v, alpha, x, y), |x, y| window.contains_open(x, y, dim));
    let boundary = window_argmax(window, dim, |x, y| phi(u, v, alpha, x, y), |x, y| !window.contains_open(x, y, dim));
    if interior.value == f64::NEG_INFINITY || boundary.value == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter {
            name: "window",
            reason: "window needs a nonempty interior and boundary".into(),
        });
    }
    Ok(DoublingPoint {
        x_bar: interior.x,
        y_bar: interior.y,
        alpha,
        phi_max: interior.value,
        boundary_max: boundary.value,
        mu: interior.value - boundary.value,
        window: *window,
    })
}

/// One perturbed maximum of the Jensen-type sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbedMax {
    pub m: usize,
    pub x_m: Node,
    pub y_m: Node,
    /// Upper jet gradient of `U` at `x_m`.
    pub p_m: Point,
    /// Lower jet gradient of `V` at `y_m`.
    pub p_prime_m: Point,
    pub x_mat: SymMat,
    pub y_mat: SymMat,
    /// `2α(x_m - y_m)`.
    pub p: Point,
    /// `P_m = (p_m - p, -(p'_m - p))`.
    pub perturbation: [Point; 2],
    /// The random linear tilt that produced `(x_m, y_m)`.
    pub tilt: [Point; 2],
    pub eps_m: f64,
    pub delta_m: f64,
    /// `max(|p_m - p|, |p'_m - p|)`.
    pub gradient_gap: f64,
    /// Tolerance-sequence entry the gap is checked against.
    pub gradient_tolerance: f64,
    /// Worst margin of the key inequality over admissible shifts.
    pub key_margin: f64,
    /// `|(x_m, y_m) - (x̄, ȳ)|`.
    pub distance_to_limit: f64,
    /// Tilts drawn until every clause verified.
    pub draws: usize,
}

/// Settings of [`jensen_sequence`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JensenConfig {
    pub count: usize,
    pub tolerances: Tolerances,
    /// When set, `U` and `V` must pass the semiconvexity/semiconcavity
    /// certificates with this modulus before any perturbation is drawn.
    pub semiconvexity: Option<f64>,
    /// Cap on `ε_m`.
    pub max_radius: f64,
    /// Tilts drawn per step before the step is reported as failed.
    pub max_draws: usize,
}

impl Default for JensenConfig {
    fn default() -> Self {
        JensenConfig {
            count: 10,
            tolerances: Tolerances::default(),
            semiconvexity: None,
            max_radius: 1.0,
            max_draws: 64,
        }
    }
}

fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw from the ball of radius `radius` in `R^{2·dim}`.
fn draw_tilt(rng: &mut impl RngCore, dim: usize, radius: f64) -> [Point; 2] {
    loop {
        let mut t = [[0.0; 2]; 2];
        let mut len2 = 0.0;
        for part in t.iter_mut() {
            for c in part.iter_mut().take(dim) {
                *c = 2.0 * unit_f64(rng) - 1.0;
                len2 += *c * *c;
            }
        }
        if len2 <= 1.0 && len2 > 0.0 {
            for c in t.iter_mut().flatten() {
                *c *= radius;
            }
            return t;
        }
    }
}

fn jensen_error(m: usize, clause: impl Into<alloc::string::String>) -> Error {
    Error::Jensen { m, clause: clause.into() }
}

/// Discrete realization of Jensen's lemma: for `m = 1..=count` draws a tilt
/// `|P| ≤ μ/(2·diam O)·2^{-m}`, takes the exact discrete maximizer of the
/// tilted `Φ`, extracts discrete jets there and verifies every clause:
/// positive jet radius `ε_m` with slack `δ_m = 2^{-m}δ₀`, `X_m ≤ Y_m`,
/// maximality of `Φ - <P_m, (x, y)>` at `(x_m, y_m)`, the gradient tolerance
/// sequence, and the key inequality. The first failed clause is returned as
/// an error.
pub fn jensen_sequence(
    u: &GridFunction,
    v: &GridFunction,
    point: &DoublingPoint,
    config: &JensenConfig,
    rng: &mut impl RngCore,
) -> Result<Vec<PerturbedMax>> {
    same_grid(u, v)?;
    let grid = *u.grid();
    let dim = grid.dim();
    let tol = &config.tolerances;
    if config.count == 0 {
        return Ok(Vec::new());
    }
    if !(point.mu > 0.0) {
        return Err(jensen_error(0, format!("interior margin mu = {} is not positive", point.mu)));
    }
    if let Some(c) = config.semiconvexity {
        let up = certify_semiconvex_directional(u, c)?;
        if !up.passes(tol.check) {
            return Err(jensen_error(0, format!("U is not semiconvex with modulus {c} ({})", up.worst_violation)));
        }
        let down = certify_semiconcave_directional(v, c)?;
        if !down.passes(tol.check) {
            return Err(jensen_error(0, format!("V is not semiconcave with modulus {c} ({})", down.worst_violation)));
        }
    }
    let diam = point.window.diameter(&grid);
    let mut out = Vec::with_capacity(config.count);
    for m in 1..=config.count {
        let radius = point.mu / (2.0 * diam) * libm::ldexp(1.0, -(m as i32));
        let mut last = None;
        for draw in 1..=config.max_draws.max(1) {
            let tilt = draw_tilt(rng, dim, radius);
            match perturbed_max(u, v, point, config, m, tilt) {
                Ok(mut pm) => {
                    pm.draws = draw;
                    last = Some(Ok(pm));
                    break;
                }
                Err(e) => last = Some(Err(e)),
            }
        }
        match last {
            Some(Ok(pm)) => out.push(pm),
            Some(Err(e)) => return Err(e),
            None => unreachable!(),
        }
    }
    Ok(out)
}

fn perturbed_max(
    u: &GridFunction,
    v: &GridFunction,
    point: &DoublingPoint,
    config: &JensenConfig,
    m: usize,
    drawn: [Point; 2],
) -> Result<PerturbedMax> {
    let grid = *u.grid();
    let dim = grid.dim();
    let h = grid.h();
    let tol = &config.tolerances;
    let alpha = point.alpha;
    let window = point.window;
    let scale = libm::ldexp(1.0, -(m as i32));
    let limit = [grid.coord(point.x_bar), grid.coord(point.y_bar)];
    let best = window_argmax(
        &window,
        dim,
        |x, y| phi(u, v, alpha, x, y) - tilt(&grid, &drawn, x, y),
        |x, y| window.contains_open(x, y, dim),
    );
    let (x_m, y_m) = (best.x, best.y);
    let ju = discrete_jet(u, x_m).map_err(|e| jensen_error(m, format!("jet of U: {e}")))?;
    let jv = discrete_jet(v, y_m).map_err(|e| jensen_error(m, format!("jet of V: {e}")))?;
    let (xc, yc) = (grid.coord(x_m), grid.coord(y_m));
    let p = [2.0 * alpha * (xc[0] - yc[0]), 2.0 * alpha * (xc[1] - yc[1])];
    let perturbation = [[ju.p[0] - p[0], ju.p[1] - p[1]], [-(jv.p[0] - p[0]), -(jv.p[1] - p[1])]];

    let delta_m = scale * tol.delta0;
    let eps_u = largest_jet_radius(u, x_m, &ju, delta_m, Side::Sub, config.max_radius, tol.jet_bound);
    let eps_v = largest_jet_radius(v, y_m, &jv, delta_m, Side::Super, config.max_radius, tol.jet_bound);
    let eps_m = eps_u.min(eps_v);
    if !(eps_m > 0.0) {
        return Err(jensen_error(m, "one-sided jet bounds fail at the nearest lattice offsets"));
    }

    if !is_matrix_ordered(&ju.x, &jv.x, tol.matrix_order)? {
        return Err(jensen_error(
            m,
            format!("X_m <= Y_m violated (min eig of Y - X = {})", jv.x.sub(&ju.x).min_eigenvalue()),
        ));
    }

    let at_max = phi(u, v, alpha, x_m, y_m) - tilt(&grid, &perturbation, x_m, y_m);
    let rival = window_argmax(
        &window,
        dim,
        |x, y| phi(u, v, alpha, x, y) - tilt(&grid, &perturbation, x, y),
        |x, y| window.contains_open(x, y, dim),
    );
    if rival.value > at_max + tol.key_inequality * (1.0 + libm::fabs(at_max)) {
        return Err(jensen_error(
            m,
            format!(
                "Phi - <P_m,(x,y)> exceeds its value at (x_m,y_m) by {} at {:?}",
                rival.value - at_max,
                (rival.x, rival.y)
            ),
        ));
    }

    // At a discrete maximizer of the tilted Φ, each central difference of Φ
    // is within (h/2)·|second difference| of the tilt component.
    let mut gap: f64 = 0.0;
    let mut gap_tol: f64 = 0.0;
    for a in 0..dim {
        let sx = libm::fabs(ju.x.get(a, a) - 2.0 * alpha);
        let sy = libm::fabs(jv.x.get(a, a) + 2.0 * alpha);
        gap = gap.max(libm::fabs(perturbation[0][a])).max(libm::fabs(perturbation[1][a]));
        gap_tol = gap_tol.max(0.5 * h * sx.max(sy));
    }
    let gradient_tolerance = norm(&drawn[0]).max(norm(&drawn[1])) + gap_tol + tol.check;
    if gap > gradient_tolerance {
        return Err(jensen_error(m, format!("|p_m - p| = {gap} exceeds tolerance {gradient_tolerance}")));
    }

    let mut pm = PerturbedMax {
        m,
        x_m,
        y_m,
        p_m: ju.p,
        p_prime_m: jv.p,
        x_mat: ju.x,
        y_mat: jv.x,
        p,
        perturbation,
        tilt: drawn,
        eps_m,
        delta_m,
        gradient_gap: gap,
        gradient_tolerance,
        key_margin: 0.0,
        distance_to_limit: libm::sqrt(
            norm_sq(&[xc[0] - limit[0][0], xc[1] - limit[0][1]]) + norm_sq(&[yc[0] - limit[1][0], yc[1] - limit[1][1]]),
        ),
        draws: 1,
    };
    let key = check_key_inequality(u, v, &pm, &window, tol.key_inequality)?;
    if !key.pass {
        return Err(jensen_error(m, format!("key inequality margin {} at z = {:?}", key.worst_margin, key.witness)));
    }
    pm.key_margin = key.worst_margin;
    Ok(pm)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeyInequalityReport {
    /// `min_z (RHS - LHS)`; never positive since `z = 0` is admissible.
    pub worst_margin: f64,
    pub witness: Point,
    pub shifts_checked: usize,
    pub pass: bool,
}

/// Scans every lattice shift `z` with `(x_m + z, y_m + z) ∈ O` and evaluates
/// `U(x_m+z) - U(x_m) - <p_m,z> ≤ V(y_m+z) - V(y_m) - <p'_m,z>`.
pub fn check_key_inequality(
    u: &GridFunction,
    v: &GridFunction,
    pm: &PerturbedMax,
    window: &Window,
    tol: f64,
) -> Result<KeyInequalityReport> {
    same_grid(u, v)?;
    let grid = *u.grid();
    let dim = grid.dim();
    let mut range = [(0i64, 0i64); 2];
    for (a, r) in range.iter_mut().enumerate().take(dim) {
        let lo = (window.x.lo.0[a] - pm.x_m.0[a]).max(window.y.lo.0[a] - pm.y_m.0[a]) + 1;
        let hi = (window.x.hi.0[a] - pm.x_m.0[a]).min(window.y.hi.0[a] - pm.y_m.0[a]) - 1;
        *r = (lo, hi);
    }
    let (ux, vy) = (u.at(pm.x_m), v.at(pm.y_m));
    let mut worst = f64::INFINITY;
    let mut witness = [0.0; 2];
    let mut count = 0;
    for a in range[0].0..=range[0].1 {
        for b in range[1].0..=range[1].1 {
            let k = [a, b];
            let z = offset_vector(&grid, k);
            let lhs = u.at(pm.x_m.offset(k)) - ux - dot(&pm.p_m, &z);
            let rhs = v.at(pm.y_m.offset(k)) - vy - dot(&pm.p_prime_m, &z);
            let margin = rhs - lhs;
            count += 1;
            if margin < worst {
                worst = margin;
                witness = z;
            }
        }
    }
    let scale = 1.0 + libm::fabs(ux) + libm::fabs(vy);
    Ok(KeyInequalityReport { worst_margin: worst, witness, shifts_checked: count, pass: worst >= -tol * scale })
}

/// Outward unit normal on `∂Ω`.
pub trait NormalField {
    fn normal(&self, y: &Point) -> Point;
}

/// Outward normal of a box: the face normal, or the normalized sum of face
/// normals at edges and corners.
#[derive(Clone, Copy, Debug)]
pub struct BoxNormal {
    grid: Grid,
}

impl BoxNormal {
    pub fn new(grid: &Grid) -> BoxNormal {
        BoxNormal { grid: *grid }
    }
}

impl NormalField for BoxNormal {
    fn normal(&self, y: &Point) -> Point {
        let g = &self.grid;
        let slack = 1e-9 * g.h();
        let mut n = [0.0; 2];
        for a in 0..g.dim() {
            if libm::fabs(y[a] - g.lo()[a]) <= slack {
                n[a] = -1.0;
            } else if libm::fabs(y[a] - g.hi()[a]) <= slack {
                n[a] = 1.0;
            }
        }
        let len = norm(&n);
        if len > 0.0 {
            [n[0] / len, n[1] / len]
        } else {
            n
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeumannParams {
    pub rho: f64,
    pub r: f64,
    pub m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeumannResidual {
    /// `min` (sub) or `max` (super) of the two branches.
    pub value: f64,
    /// `F(x, w, p, X) + ext_y {-J_y}` over anchors `y ∈ Ω̄`, `|x - y| ≤ √(2M)r`.
    pub nonlocal_branch: f64,
    /// `ext_y <n(y), p> ± ρ` over boundary anchors; `±∞` if none is in reach.
    pub boundary_branch: f64,
    /// Admissible atoms skipped at the extremal anchor because `x + z ∉ Ω̄`.
    pub skipped_atoms: usize,
    pub anchors: usize,
    pub boundary_anchors: usize,
}

/// Residual of the approximating problem for the restricted-domain equation
/// with Neumann condition, at a node `x ∈ Ω̄`:
///
/// ```text
/// sub:   min[ F(x,w,p,X) + min_y { -∫_{y+z∈Ω̄} w(x+z) - w(x) - 1_{|z|≤1}<z,p> q(dz) },
///             min_{y∈∂Ω} { <n(y), p> + ρ } ]
/// super: max[ F(x,w,p,X) + max_y { ... },  max_{y∈∂Ω} { <n(y), p> - ρ } ]
/// ```
///
/// with `y` restricted to `|x - y| ≤ √(2M)·r`. Admissible jumps whose target
/// `x + z` leaves `Ω̄` are skipped and counted.
#[allow(clippy::too_many_arguments)]
pub fn neumann_residual(
    w: &GridFunction,
    node: Node,
    jet: &Jet,
    f: &FSpec,
    q: &LevyQuadrature,
    normals: &dyn NormalField,
    params: &NeumannParams,
    side: Side,
) -> Result<NeumannResidual> {
    let grid = *w.grid();
    if !grid.in_closure(node) {
        return Err(Error::InvalidParameter { name: "x", reason: format!("{node:?} is not in the closed domain") });
    }
    if !(params.rho > 0.0) || !(params.r > 0.0) || !(params.m >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "neumann",
            reason: format!("need rho > 0, r > 0, M >= 0, got {params:?}"),
        });
    }
    let reach = libm::sqrt(2.0 * params.m) * params.r;
    let x = grid.coord(node);
    let better = |a: f64, b: f64| match side {
        Side::Sub => a < b,
        Side::Super => a > b,
    };
    let worst_start = match side {
        Side::Sub => f64::INFINITY,
        Side::Super => f64::NEG_INFINITY,
    };
    let mut nonlocal = worst_start;
    let mut skipped = 0;
    let mut boundary = worst_start;
    let mut anchors = 0;
    let mut boundary_anchors = 0;
    for y_node in grid.nodes().filter(|&n| grid.in_closure(n)) {
        let y = grid.coord(y_node);
        let d = norm(&[x[0] - y[0], x[1] - y[1]]);
        if d > reach * (1.0 + 1e-12) + 1e-12 {
            continue;
        }
        anchors += 1;
        let (j, s) = eval_nonlocal_anchored(w, node, &y, &jet.p, q)?;
        if better(-j, nonlocal) || anchors == 1 {
            nonlocal = -j;
            skipped = s;
        }
        if grid.on_boundary(y_node) {
            boundary_anchors += 1;
            let n = normals.normal(&y);
            let val = match side {
                Side::Sub => dot(&n, &jet.p) + params.rho,
                Side::Super => dot(&n, &jet.p) - params.rho,
            };
            if better(val, boundary) {
                boundary = val;
            }
        }
    }
    if anchors == 0 {
        return Err(Error::InvalidParameter { name: "x", reason: "no anchor within reach".into() });
    }
    let nonlocal_branch = f.eval(&x, w.at(node), &jet.p, &jet.x) + nonlocal;
    let value = match side {
        Side::Sub => nonlocal_branch.min(boundary),
        Side::Super => nonlocal_branch.max(boundary),
    };
    Ok(NeumannResidual {
        value,
        nonlocal_branch,
        boundary_branch: boundary,
        skipped_atoms: skipped,
        anchors,
        boundary_anchors,
    })
}
