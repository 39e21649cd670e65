//! Uniform Cartesian grids with an exterior halo, grid functions, and
//! discrete second-order jets.
//!
//! A [`Grid`] covers a box `Ω = Π (lo_i, hi_i)` with spacing `h`. Nodes are
//! addressed by integer indices relative to `lo`: index `k` on an axis sits at
//! `lo + k·h`. Indices `1..cells-1` are interior; `0` and `cells` lie on `∂Ω`,
//! and the halo extends `halo_cells` further nodes on each side. Everything
//! that is not interior is exterior data (`Ωᶜ` includes `∂Ω`).

use crate::error::{Error, Result};
use alloc::vec::Vec;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 2;

/// A point or vector in space. Components past the grid dimension are zero.
pub type Point = [f64; MAX_DIM];

/// Fractional index offsets closer than this to an integer snap onto the lattice.
const SNAP: f64 = 1e-9;

/// Node index tuple. Unused trailing components are zero, so the derived
/// ordering is the lexicographic node order used for all tie-breaking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Node(pub [i64; MAX_DIM]);

impl Node {
    pub fn offset(self, by: [i64; MAX_DIM]) -> Node {
        Node([self.0[0] + by[0], self.0[1] + by[1]])
    }
}

pub(crate) fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn norm_sq(a: &Point) -> f64 {
    dot(a, a)
}

pub(crate) fn norm(a: &Point) -> f64 {
    libm::sqrt(norm_sq(a))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    lo: Point,
    hi: Point,
    h: f64,
    halo_radius: f64,
    cells: [i64; MAX_DIM],
    halo_cells: i64,
}

impl Grid {
    /// Builds a grid over the box given by one `(lo, hi)` pair per axis.
    pub fn new(bounds: &[(f64, f64)], h: f64, halo_radius: f64) -> Result<Grid> {
        let dim = bounds.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidGrid(alloc::format!("dimension must be 1 or 2, got {dim}")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::NonPositiveSpacing(h));
        }
        if !(halo_radius >= 0.0) || !halo_radius.is_finite() {
            return Err(Error::InvalidParameter {
                name: "halo_radius",
                reason: alloc::format!("must be finite and >= 0, got {halo_radius}"),
            });
        }
        let mut lo = [0.0; MAX_DIM];
        let mut hi = [0.0; MAX_DIM];
        let mut cells = [0; MAX_DIM];
        for (axis, &(a, b)) in bounds.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::InvalidGrid(alloc::format!("axis {axis}: empty or non-finite interval [{a}, {b}]")));
            }
            let length = b - a;
            let n = libm::round(length / h);
            if n < 1.0 || libm::fabs(length - n * h) > 1e-12 * length {
                return Err(Error::NonCommensurate { axis, length, h });
            }
            lo[axis] = a;
            hi[axis] = b;
            cells[axis] = n as i64;
        }
        let halo_cells = libm::ceil(halo_radius / h - SNAP).max(0.0) as i64;
        Ok(Grid { dim, lo, hi, h, halo_radius, cells, halo_cells })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn halo_radius(&self) -> f64 {
        self.halo_radius
    }

    pub fn lo(&self) -> Point {
        self.lo
    }

    pub fn hi(&self) -> Point {
        self.hi
    }

    /// Number of cells of `Ω` along `axis` (zero for axes past the dimension).
    pub fn cells(&self, axis: usize) -> i64 {
        self.cells[axis]
    }

    pub fn halo_cells(&self) -> i64 {
        self.halo_cells
    }

    /// Inclusive index range of the extended lattice along `axis`.
    pub fn index_range(&self, axis: usize) -> (i64, i64) {
        if axis < self.dim {
            (-self.halo_cells, self.cells[axis] + self.halo_cells)
        } else {
            (0, 0)
        }
    }

    fn axis_len(&self, axis: usize) -> usize {
        let (a, b) = self.index_range(axis);
        (b - a + 1) as usize
    }

    pub fn node_count(&self) -> usize {
        self.axis_len(0) * self.axis_len(1)
    }

    pub fn interior_count(&self) -> usize {
        (0..self.dim).map(|a| (self.cells[a] - 1).max(0) as usize).product()
    }

    pub fn coord(&self, node: Node) -> Point {
        let mut x = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            x[axis] = self.lo[axis] + node.0[axis] as f64 * self.h;
        }
        x
    }

    /// Whether `node` belongs to the extended (interior + halo) lattice.
    pub fn contains(&self, node: Node) -> bool {
        (0..MAX_DIM).all(|a| {
            let (lo, hi) = self.index_range(a);
            (lo..=hi).contains(&node.0[a])
        })
    }

    pub fn is_interior(&self, node: Node) -> bool {
        (0..MAX_DIM).all(|a| if a < self.dim { (1..self.cells[a]).contains(&node.0[a]) } else { node.0[a] == 0 })
    }

    /// Whether `node` lies in the closed box `Ω̄`.
    pub fn in_closure(&self, node: Node) -> bool {
        (0..MAX_DIM).all(|a| if a < self.dim { (0..=self.cells[a]).contains(&node.0[a]) } else { node.0[a] == 0 })
    }

    /// Whether `node` lies on `∂Ω`.
    pub fn on_boundary(&self, node: Node) -> bool {
        self.in_closure(node) && !self.is_interior(node)
    }

    pub(crate) fn flat_index(&self, node: Node) -> Option<usize> {
        if !self.contains(node) {
            return None;
        }
        let (a0, _) = self.index_range(0);
        let (a1, _) = self.index_range(1);
        let i0 = (node.0[0] - a0) as usize;
        let i1 = (node.0[1] - a1) as usize;
        Some(i0 * self.axis_len(1) + i1)
    }

    pub(crate) fn node_at(&self, flat: usize) -> Node {
        let len1 = self.axis_len(1);
        let (a0, _) = self.index_range(0);
        let (a1, _) = self.index_range(1);
        Node([(flat / len1) as i64 + a0, (flat % len1) as i64 + a1])
    }

    /// All lattice nodes (interior and halo) in lexicographic order.
    pub fn nodes(&self) -> impl Iterator<Item = Node> + '_ {
        (0..self.node_count()).map(move |k| self.node_at(k))
    }

    /// Interior nodes in lexicographic order.
    pub fn interior_nodes(&self) -> impl Iterator<Item = Node> + '_ {
        self.nodes().filter(move |&n| self.is_interior(n))
    }

    /// Continuous index coordinates of a point: `(x - lo) / h` per axis.
    pub fn index_position(&self, x: &Point) -> Point {
        let mut s = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            s[axis] = (x[axis] - self.lo[axis]) / self.h;
        }
        s
    }

    /// Whether a point lies in `Ω̄` (up to `1e-12` relative slack).
    pub fn box_contains(&self, x: &Point) -> bool {
        (0..self.dim).all(|a| {
            let slack = 1e-12 * (self.hi[a] - self.lo[a]);
            x[a] >= self.lo[a] - slack && x[a] <= self.hi[a] + slack
        })
    }

    /// Euclidean distance from a point of `Ω̄` to `∂Ω`.
    pub fn distance_to_boundary(&self, x: &Point) -> f64 {
        (0..self.dim).map(|a| (x[a] - self.lo[a]).min(self.hi[a] - x[a])).fold(f64::INFINITY, f64::min)
    }

    /// Whether the index-space position `x + z` of a node shift stays on the lattice.
    pub(crate) fn shifted_position(&self, node: Node, z: &Point) -> Point {
        let mut s = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            s[axis] = node.0[axis] as f64 + z[axis] / self.h;
        }
        s
    }
}

/// Real values on every lattice node of a grid. Exterior (halo and boundary)
/// values are sampled once at construction and never recomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    /// Samples `f` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(&Point) -> f64) -> Result<GridFunction> {
        Self::from_parts(grid, &f, &f)
    }

    /// Samples `interior` on interior nodes and `exterior` everywhere else.
    pub fn from_parts(
        grid: Grid,
        interior: impl Fn(&Point) -> f64,
        exterior: impl Fn(&Point) -> f64,
    ) -> Result<GridFunction> {
        let values = grid
            .nodes()
            .map(|n| {
                let x = grid.coord(n);
                if grid.is_interior(n) {
                    interior(&x)
                } else {
                    exterior(&x)
                }
            })
            .collect();
        Self::from_values(grid, values)
    }

    /// Takes ownership of values given in lexicographic node order.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<GridFunction> {
        if values.len() != grid.node_count() {
            return Err(Error::DimensionMismatch { expected: grid.node_count(), got: values.len() });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(grid.node_at(k)));
        }
        Ok(GridFunction { grid, values })
    }

    /// Replaces the interior values (in lexicographic interior order), keeping
    /// the sampled exterior data bit-for-bit.
    pub fn with_interior(&self, interior: &[f64]) -> Result<GridFunction> {
        if interior.len() != self.grid.interior_count() {
            return Err(Error::DimensionMismatch { expected: self.grid.interior_count(), got: interior.len() });
        }
        let mut values = self.values.clone();
        let mut it = interior.iter();
        for (k, v) in values.iter_mut().enumerate() {
            if self.grid.is_interior(self.grid.node_at(k)) {
                *v = *it.next().expect("length checked");
            }
        }
        Self::from_values(self.grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// All values in lexicographic node order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, node: Node) -> Option<f64> {
        self.grid.flat_index(node).map(|k| self.values[k])
    }

    pub(crate) fn at(&self, node: Node) -> f64 {
        self.values[self.grid.flat_index(node).expect("node on lattice")]
    }

    pub fn interior_values(&self) -> Vec<f64> {
        self.grid.nodes().zip(&self.values).filter(|(n, _)| self.grid.is_interior(*n)).map(|(_, v)| *v).collect()
    }

    /// Pointwise map over all nodes, exterior included.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<GridFunction> {
        Self::from_values(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// `a·self + b·other` on a shared grid.
    pub fn lin_comb(&self, a: f64, other: &GridFunction, b: f64) -> Result<GridFunction> {
        if self.grid != other.grid {
            return Err(Error::InvalidGrid("grid functions live on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Self::from_values(self.grid, values)
    }

    /// Multilinear interpolation at continuous index position `s`, snapping
    /// near-integer components onto the lattice. `None` when off the lattice.
    pub(crate) fn sample_index(&self, s: &Point) -> Option<f64> {
        let dim = self.grid.dim;
        let mut base = [0i64; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for axis in 0..dim {
            let r = libm::round(s[axis]);
            if libm::fabs(s[axis] - r) <= SNAP {
                base[axis] = r as i64;
            } else {
                let f = libm::floor(s[axis]);
                base[axis] = f as i64;
                frac[axis] = s[axis] - f;
            }
        }
        let corners = 1usize << dim;
        let mut acc = 0.0;
        let mut any = false;
        for c in 0..corners {
            let mut weight = 1.0;
            let mut node = Node(base);
            for axis in 0..dim {
                let upper = (c >> axis) & 1 == 1;
                if frac[axis] == 0.0 {
                    if upper {
                        weight = 0.0;
                    }
                } else if upper {
                    weight *= frac[axis];
                    node.0[axis] += 1;
                } else {
                    weight *= 1.0 - frac[axis];
                }
            }
            if weight == 0.0 {
                continue;
            }
            let v = self.get(node)?;
            if !any && weight == 1.0 {
                return Some(v);
            }
            acc += weight * v;
            any = true;
        }
        Some(acc)
    }

    /// Value at `coord(node) + z`, interpolated when `z` is not a lattice vector.
    pub fn sample_shifted(&self, node: Node, z: &Point) -> Option<f64> {
        self.sample_index(&self.grid.shifted_position(node, z))
    }

    /// Value at an arbitrary point of the extended lattice box.
    pub fn sample(&self, x: &Point) -> Option<f64> {
        self.sample_index(&self.grid.index_position(x))
    }
}

/// Symmetric `dim × dim` matrix (`dim ≤ 2`), zero-padded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymMat {
    dim: usize,
    m: [[f64; MAX_DIM]; MAX_DIM],
}

impl SymMat {
    /// Symmetrizes `m` and zeroes entries past `dim`.
    pub fn new(dim: usize, m: [[f64; MAX_DIM]; MAX_DIM]) -> SymMat {
        let mut s = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..dim {
            for j in 0..dim {
                s[i][j] = if i == j { m[i][i] } else { 0.5 * (m[i][j] + m[j][i]) };
            }
        }
        SymMat { dim, m: s }
    }

    pub fn zeros(dim: usize) -> SymMat {
        SymMat { dim, m: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    pub fn scalar(dim: usize, s: f64) -> SymMat {
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in m.iter_mut().enumerate().take(dim) {
            row[i] = s;
        }
        SymMat { dim, m }
    }

    pub fn identity(dim: usize) -> SymMat {
        Self::scalar(dim, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn entries(&self) -> [[f64; MAX_DIM]; MAX_DIM] {
        self.m
    }

    pub fn add(&self, other: &SymMat) -> SymMat {
        let mut m = self.m;
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += other.m[i][j];
            }
        }
        SymMat { dim: self.dim, m }
    }

    pub fn sub(&self, other: &SymMat) -> SymMat {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> SymMat {
        let mut m = self.m;
        m.iter_mut().flatten().for_each(|v| *v *= s);
        SymMat { dim: self.dim, m }
    }

    /// `<M z, z>`.
    pub fn quad(&self, z: &Point) -> f64 {
        let m = &self.m;
        m[0][0] * z[0] * z[0] + 2.0 * m[0][1] * z[0] * z[1] + m[1][1] * z[1] * z[1]
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1]
    }

    /// `trace(self · other)` for symmetric arguments.
    pub fn trace_mul(&self, other: &SymMat) -> f64 {
        let (a, b) = (&self.m, &other.m);
        a[0][0] * b[0][0] + 2.0 * a[0][1] * b[0][1] + a[1][1] * b[1][1]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let m = &self.m;
        match self.dim {
            1 => m[0][0],
            _ => {
                let mean = 0.5 * (m[0][0] + m[1][1]);
                let half_gap = 0.5 * (m[0][0] - m[1][1]);
                mean - libm::hypot(half_gap, m[0][1])
            }
        }
    }
}

/// Gradient/Hessian pair `(p, X)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub p: Point,
    pub x: SymMat,
}

impl Jet {
    pub fn new(p: Point, x: SymMat) -> Jet {
        Jet { p, x }
    }

    pub fn dim(&self) -> usize {
        self.x.dim
    }
}

/// Central-difference gradient and second-difference Hessian at `node`.
///
/// Off-diagonal entries use the four-point cross stencil; the result is exact
/// on quadratic polynomials.
pub fn discrete_jet(u: &GridFunction, node: Node) -> Result<Jet> {
    let grid = u.grid();
    let h = grid.h();
    let value = |off: [i64; 2]| u.get(node.offset(off)).ok_or(Error::MissingNeighbor { node, offset: off });
    let center = value([0, 0])?;
    let mut p = [0.0; MAX_DIM];
    let mut m = [[0.0; MAX_DIM]; MAX_DIM];
    for axis in 0..grid.dim() {
        let mut e = [0i64; 2];
        e[axis] = 1;
        let plus = value(e)?;
        let minus = value([-e[0], -e[1]])?;
        p[axis] = (plus - minus) / (2.0 * h);
        m[axis][axis] = (plus - 2.0 * center + minus) / (h * h);
    }
    if grid.dim() == 2 {
        let pp = value([1, 1])?;
        let pm = value([1, -1])?;
        let mp = value([-1, 1])?;
        let mm = value([-1, -1])?;
        let cross = (pp - pm - mp + mm) / (4.0 * h * h);
        m[0][1] = cross;
        m[1][0] = cross;
    }
    Ok(Jet::new(p, SymMat::new(grid.dim(), m)))
}

/// Whether `X ≤ Y` in the positive semidefinite order, up to `tol`.
pub fn is_matrix_ordered(x: &SymMat, y: &SymMat, tol: f64) -> Result<bool> {
    if x.dim != y.dim {
        return Err(Error::DimensionMismatch { expected: x.dim, got: y.dim });
    }
    Ok(y.sub(x).min_eigenvalue() >= -tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn unit_interval_with_halo() {
        let g = Grid::new(&[(0.0, 1.0)], 0.25, 1.0).unwrap();
        let interior: Vec<f64> = g.interior_nodes().map(|n| g.coord(n)[0]).collect();
        assert_eq!(interior, [0.25, 0.5, 0.75]);
        let all: Vec<f64> = g.nodes().map(|n| g.coord(n)[0]).collect();
        assert_eq!(all.first().copied(), Some(-1.0));
        assert_eq!(all.last().copied(), Some(2.0));
        assert_eq!(all.len(), 13);
    }

    #[test]
    fn unit_square_single_interior_node() {
        let g = Grid::new(&[(0.0, 1.0), (0.0, 1.0)], 0.5, 0.0).unwrap();
        let interior: Vec<Point> = g.interior_nodes().map(|n| g.coord(n)).collect();
        assert_eq!(interior, [[0.5, 0.5]]);
        assert_eq!(g.node_count(), 9);
    }

    #[test]
    fn rejects_bad_spacing() {
        assert!(matches!(Grid::new(&[(0.0, 1.0)], 0.3, 0.0), Err(Error::NonCommensurate { axis: 0, .. })));
        assert!(matches!(Grid::new(&[(0.0, 1.0), (0.0, 0.7)], 0.2, 0.0), Err(Error::NonCommensurate { axis: 1, .. })));
        assert!(matches!(Grid::new(&[(0.0, 1.0)], 0.0, 0.0), Err(Error::NonPositiveSpacing(_))));
        assert!(matches!(Grid::new(&[(0.0, 1.0)], -0.1, 0.0), Err(Error::NonPositiveSpacing(_))));
    }

    #[test]
    fn non_finite_values_rejected() {
        let g = Grid::new(&[(0.0, 1.0)], 0.25, 0.0).unwrap();
        let err = GridFunction::from_fn(g, |x| if x[0] == 0.5 { f64::NAN } else { 0.0 });
        assert_eq!(err, Err(Error::NonFinite(Node([2, 0]))));
    }

    #[test]
    fn exterior_preserved_by_with_interior() {
        let g = Grid::new(&[(0.0, 1.0)], 0.25, 0.5).unwrap();
        let u = GridFunction::from_parts(g, |_| 0.0, |x| 1.0 / 3.0 + x[0]).unwrap();
        let w = u.with_interior(&[7.0, 8.0, 9.0]).unwrap();
        for n in g.nodes() {
            if g.is_interior(n) {
                assert!(w.get(n).unwrap() >= 7.0);
            } else {
                assert_eq!(w.get(n).unwrap().to_bits(), u.get(n).unwrap().to_bits());
            }
        }
    }

    #[test]
    fn jet_of_parabola_and_constant() {
        let g = Grid::new(&[(-1.0, 1.0)], 0.1, 0.0).unwrap();
        let u = GridFunction::from_fn(g, |x| x[0] * x[0]).unwrap();
        let jet = discrete_jet(&u, Node([10, 0])).unwrap();
        assert_abs_diff_eq!(jet.p[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(jet.x.get(0, 0), 2.0, epsilon = 1e-10);

        let c = GridFunction::from_fn(g, |_| 5.0).unwrap();
        let jet = discrete_jet(&c, Node([3, 0])).unwrap();
        assert_eq!(jet.p[0], 0.0);
        assert_eq!(jet.x.get(0, 0), 0.0);
    }

    #[test]
    fn jet_of_cubic_matches_taylor_remainder() {
        // p = 3x² + h² u'''/6 = 0.75 + 0.01, X = 6x exactly
        let g = Grid::new(&[(0.0, 1.0)], 0.1, 0.0).unwrap();
        let u = GridFunction::from_fn(g, |x| x[0] * x[0] * x[0]).unwrap();
        let jet = discrete_jet(&u, Node([5, 0])).unwrap();
        assert_abs_diff_eq!(jet.p[0], 0.76, epsilon = 1e-12);
        assert_abs_diff_eq!(jet.x.get(0, 0), 3.0, epsilon = 1e-10);
    }

    #[test]
    fn jet_missing_neighbor() {
        let g = Grid::new(&[(0.0, 1.0)], 0.25, 0.0).unwrap();
        let u = GridFunction::from_fn(g, |x| x[0]).unwrap();
        assert!(matches!(discrete_jet(&u, Node([0, 0])), Err(Error::MissingNeighbor { node: Node([0, 0]), .. })));
    }

    #[test]
    fn matrix_order_examples() {
        let x = SymMat::identity(2);
        let y = SymMat::new(2, [[2.0, 0.0], [0.0, 3.0]]);
        assert!(is_matrix_ordered(&x, &y, 0.0).unwrap());
        assert!(is_matrix_ordered(&y, &y, 0.0).unwrap());
        let off = SymMat::new(2, [[0.0, 2.0], [2.0, 0.0]]);
        // Y - X = [[1,-2],[-2,1]] has eigenvalue -1
        assert!(!is_matrix_ordered(&off, &x, 1e-9).unwrap());
        assert_abs_diff_eq!(x.sub(&off).min_eigenvalue(), -1.0, epsilon = 1e-15);
        assert!(is_matrix_ordered(&SymMat::zeros(1), &x, 0.0).is_err());
    }

    #[test]
    fn interpolation_reproduces_affine() {
        let g = Grid::new(&[(0.0, 1.0), (0.0, 1.0)], 0.25, 0.5).unwrap();
        let u = GridFunction::from_fn(g, |x| 2.0 * x[0] - 3.0 * x[1] + 1.0).unwrap();
        let v = u.sample(&[0.4, 0.1]).unwrap();
        assert_abs_diff_eq!(v, 2.0 * 0.4 - 0.3 + 1.0, epsilon = 1e-12);
        assert!(u.sample(&[1.6, 0.0]).is_none());
    }

    fn quad_coeffs() -> impl Strategy<Value = [f64; 6]> {
        proptest::array::uniform6(-3.0..3.0f64)
    }

    proptest! {
        #[test]
        fn jet_exact_on_quadratics(c in quad_coeffs(), hk in 1usize..6) {
            let h = 1.0 / (4 * hk) as f64;
            let g = Grid::new(&[(-1.0, 1.0), (0.0, 1.0)], h, 0.0).unwrap();
            let u = GridFunction::from_fn(g, |x| {
                c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[0] * x[0]
                    + c[4] * x[0] * x[1] + c[5] * x[1] * x[1]
            }).unwrap();
            for n in g.interior_nodes() {
                let x = g.coord(n);
                let jet = discrete_jet(&u, n).unwrap();
                prop_assert!((jet.p[0] - (c[1] + 2.0 * c[3] * x[0] + c[4] * x[1])).abs() < 1e-10);
                prop_assert!((jet.p[1] - (c[2] + c[4] * x[0] + 2.0 * c[5] * x[1])).abs() < 1e-10);
                prop_assert!((jet.x.get(0, 0) - 2.0 * c[3]).abs() < 1e-10);
                prop_assert!((jet.x.get(0, 1) - c[4]).abs() < 1e-10);
                prop_assert!((jet.x.get(1, 1) - 2.0 * c[5]).abs() < 1e-10);
            }
        }

        #[test]
        fn jet_is_linear(a in -2.0..2.0f64, b in -2.0..2.0f64,
                         vals in proptest::collection::vec(-1.0..1.0f64, 2 * 49)) {
            let g = Grid::new(&[(0.0, 1.0), (0.0, 1.0)], 1.0 / 6.0, 0.0).unwrap();
            let u = GridFunction::from_values(g, vals[..49].to_vec()).unwrap();
            let w = GridFunction::from_values(g, vals[49..].to_vec()).unwrap();
            let combo = u.lin_comb(a, &w, b).unwrap();
            for n in g.interior_nodes() {
                let (ju, jw, jc) = (discrete_jet(&u, n).unwrap(), discrete_jet(&w, n).unwrap(),
                                    discrete_jet(&combo, n).unwrap());
                for i in 0..2 {
                    let expect = a * ju.p[i] + b * jw.p[i];
                    prop_assert!((jc.p[i] - expect).abs() <= 1e-12 * (1.0 + expect.abs()) * 50.0);
                    for j in 0..2 {
                        let expect = a * ju.x.get(i, j) + b * jw.x.get(i, j);
                        prop_assert!((jc.x.get(i, j) - expect).abs() <= 1e-12 * (1.0 + expect.abs()) * 50.0);
                    }
                }
            }
        }

        #[test]
        fn matrix_order_is_partial_order(m in proptest::array::uniform3(-2.0..2.0f64),
                                         d1 in proptest::array::uniform3(-1.0..1.0f64),
                                         d2 in proptest::array::uniform3(-1.0..1.0f64)) {
            // X ≤ X + AᵀA ≤ X + AᵀA + BᵀB
            let psd = |d: [f64; 3]| SymMat::new(2, [[d[0] * d[0] + d[1] * d[1], d[1] * d[2]],
                                                  [d[1] * d[2], d[2] * d[2]]]);
            let x = SymMat::new(2, [[m[0], m[1]], [m[1], m[2]]]);
            let y = x.add(&psd(d1));
            let z = y.add(&psd(d2));
            prop_assert!(is_matrix_ordered(&x, &x, 0.0).unwrap());
            prop_assert!(is_matrix_ordered(&x, &y, 1e-12).unwrap());
            prop_assert!(is_matrix_ordered(&y, &z, 1e-12).unwrap());
            prop_assert!(is_matrix_ordered(&x, &z, 1e-12).unwrap());
        }
    }
}
