//! Sup- and inf-convolutions (quadratic Moreau envelopes) on the lattice
//!
//! ```text
//! u^r(x) = max_y { u(y) - |x - y|² / (2r²) },    v_r(x) = min_y { v(y) + |x - y|² / (2r²) },
//! ```
//!
//! with `y` ranging over every lattice node (interior and halo), together with
//! the shrunken domain `Ω_r` and discrete semiconvexity certificates.
//!
//! Two implementations of the envelope are provided: a brute-force scan and a
//! separable upper-envelope-of-parabolas pass per axis. Every candidate value
//! is formed by the same floating-point expression
//! `(u(y) - c·d₀²) - c·d₁²` with `d_i = (x_i - y_i)` taken in lattice units
//! times `h`, so both routes return bit-identical results.

use crate::error::{Error, Result};
use crate::grid::{discrete_jet, Grid, GridFunction, Node, SymMat};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Convolution parameter `r` and sup-norm bound `M`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoreauParams {
    r: f64,
    m: f64,
}

impl MoreauParams {
    pub fn new(r: f64, m: f64) -> Result<MoreauParams> {
        check_r(r)?;
        if !(m >= 0.0) || !m.is_finite() {
            return Err(Error::InvalidParameter { name: "M", reason: format!("{m} is not >= 0") });
        }
        Ok(MoreauParams { r, m })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    /// `√(2M)·r`, the boundary layer removed from `Ω`.
    pub fn margin(&self) -> f64 {
        libm::sqrt(2.0 * self.m) * self.r
    }
}

fn check_r(r: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter { name: "r", reason: format!("{r} is not > 0") });
    }
    Ok(())
}

/// `max(sup_Ω̄ |u|, sup_Ω̄ |v|)` over nodes of the closed box.
pub fn sup_norm_bound(u: &GridFunction, v: &GridFunction) -> f64 {
    let closure_max = |w: &GridFunction| {
        w.grid().nodes().filter(|&n| w.grid().in_closure(n)).map(|n| libm::fabs(w.at(n))).fold(0.0, f64::max)
    };
    closure_max(u).max(closure_max(v))
}

/// Penalties `c·(k h)²` indexed by lattice distance `k`.
fn penalty_table(len: usize, h: f64, r: f64) -> Vec<f64> {
    let c = 1.0 / (2.0 * r * r);
    (0..len)
        .map(|k| {
            let d = k as f64 * h;
            c * (d * d)
        })
        .collect()
}

fn line_lengths(grid: &Grid) -> [usize; 2] {
    let len = |a: usize| {
        let (lo, hi) = grid.index_range(a);
        (hi - lo + 1) as usize
    };
    [len(0), len(1)]
}

/// `u^r` by exhaustive search over all node pairs.
pub fn sup_convolution_brute(u: &GridFunction, r: f64) -> Result<GridFunction> {
    check_r(r)?;
    let grid = *u.grid();
    let lens = line_lengths(&grid);
    let pen = penalty_table(lens[0].max(lens[1]), grid.h(), r);
    let idx = |a: i64, b: i64| (a - b).unsigned_abs() as usize;
    let values = grid
        .nodes()
        .map(|x| {
            grid.nodes().zip(u.values()).fold(f64::NEG_INFINITY, |best, (y, &uy)| {
                let cand = (uy - pen[idx(x.0[0], y.0[0])]) - pen[idx(x.0[1], y.0[1])];
                best.max(cand)
            })
        })
        .collect();
    GridFunction::from_values(grid, values)
}

/// `v_r` by exhaustive search over all node pairs.
pub fn inf_convolution_brute(v: &GridFunction, r: f64) -> Result<GridFunction> {
    check_r(r)?;
    let grid = *v.grid();
    let lens = line_lengths(&grid);
    let pen = penalty_table(lens[0].max(lens[1]), grid.h(), r);
    let idx = |a: i64, b: i64| (a - b).unsigned_abs() as usize;
    let values = grid
        .nodes()
        .map(|x| {
            grid.nodes().zip(v.values()).fold(f64::INFINITY, |best, (y, &vy)| {
                let cand = (vy + pen[idx(x.0[0], y.0[0])]) + pen[idx(x.0[1], y.0[1])];
                best.min(cand)
            })
        })
        .collect();
    GridFunction::from_values(grid, values)
}

/// Scratch space for the one-dimensional upper envelope of the parabolas
/// `f(q) - k (p - q)²`.
struct Envelope {
    apex: Vec<usize>,
    breaks: Vec<f64>,
}

impl Envelope {
    fn new(n: usize) -> Envelope {
        Envelope { apex: vec![0; n], breaks: vec![0.0; n + 1] }
    }

    /// `out[p] = max_q f[q] - pen[|p - q|]`, exact in floating point. The
    /// envelope (with curvature `k` in lattice units) only selects candidates;
    /// values are re-evaluated with the canonical expression over the selected
    /// parabola and its envelope neighbours.
    fn run(&mut self, f: &[f64], out: &mut [f64], pen: &[f64], k: f64) {
        let n = f.len();
        let key = |q: usize| -f[q] + k * (q as f64) * (q as f64);
        let mut j = 0usize;
        self.apex[0] = 0;
        self.breaks[0] = f64::NEG_INFINITY;
        self.breaks[1] = f64::INFINITY;
        for q in 1..n {
            let mut s;
            loop {
                let v = self.apex[j];
                s = (key(q) - key(v)) / (2.0 * k * (q as f64 - v as f64));
                if s <= self.breaks[j] && j > 0 {
                    j -= 1;
                } else {
                    break;
                }
            }
            if s <= self.breaks[j] {
                // j == 0 and the new parabola dominates everywhere
                self.apex[0] = q;
                self.breaks[1] = f64::INFINITY;
                continue;
            }
            j += 1;
            self.apex[j] = q;
            self.breaks[j] = s;
            self.breaks[j + 1] = f64::INFINITY;
        }
        let last = j;
        j = 0;
        for (p, slot) in out.iter_mut().enumerate() {
            while j < last && self.breaks[j + 1] < p as f64 {
                j += 1;
            }
            let lo = j.saturating_sub(1);
            let hi = (j + 1).min(last);
            *slot = (lo..=hi)
                .map(|e| {
                    let q = self.apex[e];
                    f[q] - pen[p.abs_diff(q)]
                })
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
}

/// `u^r` by separable upper-envelope passes, axis 0 then axis 1.
pub fn sup_convolution(u: &GridFunction, r: f64) -> Result<GridFunction> {
    check_r(r)?;
    let grid = *u.grid();
    let [len0, len1] = line_lengths(&grid);
    let pen = penalty_table(len0.max(len1), grid.h(), r);
    let k = 1.0 / (2.0 * r * r) * grid.h() * grid.h();
    let mut work = u.values().to_vec();

    let mut env = Envelope::new(len0);
    let mut line = vec![0.0; len0];
    let mut out = vec![0.0; len0];
    for i1 in 0..len1 {
        for i0 in 0..len0 {
            line[i0] = work[i0 * len1 + i1];
        }
        env.run(&line, &mut out, &pen, k);
        for i0 in 0..len0 {
            work[i0 * len1 + i1] = out[i0];
        }
    }
    if grid.dim() == 2 {
        let mut env = Envelope::new(len1);
        let mut out = vec![0.0; len1];
        for i0 in 0..len0 {
            let row = &mut work[i0 * len1..(i0 + 1) * len1];
            env.run(row, &mut out, &pen, k);
            row.copy_from_slice(&out);
        }
    }
    GridFunction::from_values(grid, work)
}

/// `v_r = -(-v)^r`.
pub fn inf_convolution(v: &GridFunction, r: f64) -> Result<GridFunction> {
    sup_convolution(&v.map(|x| -x)?, r)?.map(|x| -x)
}

/// Interior nodes at distance `> √(2M)·r` from `∂Ω`. May be empty.
pub fn shrunken_domain(grid: &Grid, params: &MoreauParams) -> Vec<Node> {
    let threshold = params.margin();
    let slack = 1e-12 * (1.0 + threshold);
    grid.interior_nodes().filter(|&n| grid.distance_to_boundary(&grid.coord(n)) > threshold + slack).collect()
}

/// Outcome of a discrete semiconvexity (or semiconcavity) check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SemiconvexityReport {
    /// Candidate modulus `c`.
    pub constant: f64,
    /// Smallest eigenvalue over interior nodes of the discrete Hessian of
    /// `U + (c/2)|x|²` (or of `-V + (c/2)|x|²`); `+∞` without interior nodes.
    pub worst_violation: f64,
    pub witness_node: Option<Node>,
}

impl SemiconvexityReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.worst_violation >= -tol
    }
}

fn certify(u: &GridFunction, c: f64, sign: f64) -> Result<SemiconvexityReport> {
    if !(c >= 0.0) {
        return Err(Error::InvalidParameter { name: "c", reason: format!("{c} is not >= 0") });
    }
    let dim = u.grid().dim();
    let shift = SymMat::scalar(dim, c);
    let mut worst = f64::INFINITY;
    let mut witness = None;
    for n in u.grid().interior_nodes() {
        let jet = discrete_jet(u, n)?;
        let eig = jet.x.scale(sign).add(&shift).min_eigenvalue();
        if eig < worst {
            worst = eig;
            witness = Some(n);
        }
    }
    Ok(SemiconvexityReport { constant: c, worst_violation: worst, witness_node: witness })
}

/// Discrete check that `U + (c/2)|x|²` is convex: the jet Hessian plus `c·I`
/// is positive semidefinite at every interior node.
pub fn certify_semiconvex(u: &GridFunction, c: f64) -> Result<SemiconvexityReport> {
    certify(u, c, 1.0)
}

/// Discrete check that `V - (c/2)|x|²` is concave.
pub fn certify_semiconcave(v: &GridFunction, c: f64) -> Result<SemiconvexityReport> {
    certify(v, c, -1.0)
}

/// Lattice-direction variant of [`certify_semiconvex`]: second differences of
/// `U` along `e₁, e₂, e₁ ± e₂` must be at least `-c|d|²`. In two dimensions this
/// holds exactly for every sup-convolution with `c = 1/r²`, whereas the jet
/// Hessian of a convex piecewise-affine function need not be positive
/// semidefinite. Coincides with the eigenvalue check in one dimension.
pub fn certify_semiconvex_directional(u: &GridFunction, c: f64) -> Result<SemiconvexityReport> {
    certify_directional(u, c, 1.0)
}

/// Lattice-direction variant of [`certify_semiconcave`].
pub fn certify_semiconcave_directional(v: &GridFunction, c: f64) -> Result<SemiconvexityReport> {
    certify_directional(v, c, -1.0)
}

fn certify_directional(u: &GridFunction, c: f64, sign: f64) -> Result<SemiconvexityReport> {
    if !(c >= 0.0) {
        return Err(Error::InvalidParameter { name: "c", reason: format!("{c} is not >= 0") });
    }
    let grid = u.grid();
    let h2 = grid.h() * grid.h();
    let dirs: &[[i64; 2]] = if grid.dim() == 1 { &[[1, 0]] } else { &[[1, 0], [0, 1], [1, 1], [1, -1]] };
    let mut worst = f64::INFINITY;
    let mut witness = None;
    for n in grid.interior_nodes() {
        let center = u.at(n);
        for d in dirs {
            let fwd = u.get(n.offset(*d));
            let bwd = u.get(n.offset([-d[0], -d[1]]));
            let (Some(f), Some(b)) = (fwd, bwd) else {
                return Err(Error::MissingNeighbor { node: n, offset: *d });
            };
            let len2 = (d[0] * d[0] + d[1] * d[1]) as f64;
            let curv = sign * (f - 2.0 * center + b) / (h2 * len2) + c;
            if curv < worst {
                worst = curv;
                witness = Some(n);
            }
        }
    }
    Ok(SemiconvexityReport { constant: c, worst_violation: worst, witness_node: witness })
}

/// Largest difference quotient between axis-adjacent lattice nodes.
pub fn lipschitz_estimate(u: &GridFunction) -> f64 {
    let grid = u.grid();
    let mut best: f64 = 0.0;
    for n in grid.nodes() {
        for axis in 0..grid.dim() {
            let mut e = [0i64; 2];
            e[axis] = 1;
            if let Some(next) = u.get(n.offset(e)) {
                best = best.max(libm::fabs(next - u.at(n)) / grid.h());
            }
        }
    }
    best
}

/// `max - min` of a grid function over all nodes.
pub fn oscillation(u: &GridFunction) -> f64 {
    let (lo, hi) = u.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    hi - lo
}
