use crate::grid::{Node, Point};
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("grid spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),
    #[error("axis {axis}: length {length} is not an integer multiple of h = {h}")]
    NonCommensurate { axis: usize, length: f64, h: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value at node {0:?}")]
    NonFinite(Node),
    #[error("node {node:?} is missing its neighbour at offset {offset:?}")]
    MissingNeighbor { node: Node, offset: [i64; 2] },
    #[error("node {0:?} is not an interior node")]
    NotInterior(Node),
    #[error("atom {atom}: x + z = {target:?} lies outside the halo of the grid")]
    OutOfReach { atom: usize, target: Point },
    #[error("halo radius {halo} is smaller than the largest jump {jump}")]
    HaloTooSmall { halo: f64, jump: f64 },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("properness requires lambda > 0, got {0}")]
    Properness(f64),
    #[error("diffusion matrix is not positive semidefinite at {at:?} (smallest eigenvalue {eig})")]
    NotDegenerateElliptic { at: Point, eig: f64 },
    #[error("one-sided jet bound violated at offset z = {z:?} by {excess}")]
    JetBound { z: Point, excess: f64 },
    #[error("Jensen step m = {m}: {clause}")]
    Jensen { m: usize, clause: String },
    #[error("solver did not converge in {iterations} iterations (residual {residual})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("exterior data not ordered: g1 > g2 at {at:?}")]
    DataNotOrdered { at: Point },
}
