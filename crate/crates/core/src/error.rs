//! Error type shared by every module of the crate.

use crate::grid::NodeId;
use thiserror::Error;

/// Everything that can go wrong across the workbench.
///
/// Validation failures (`Config`, `Domain`) indicate malformed input;
/// `Cfl` and `DiagonalDominance` indicate that the requested grid or
/// coefficients violate the contract of the explicit monotone scheme and
/// carry enough detail to locate the offender.
#[derive(Debug, Error)]
pub enum Error {
    /// A jet or stencil was requested at a node without a full interior
    /// neighborhood.
    #[error("node {0:?} is not interior to the domain mask")]
    BoundaryNode(NodeId),

    /// A parameter left its admissible range, or a requested window is empty.
    #[error("domain error: {0}")]
    Domain(String),

    /// A kernel or cylinder is too small for the grid to resolve.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// A matrix that must be symmetric is not, beyond round-off.
    #[error("matrix not symmetric: max asymmetry {asymmetry:.3e} exceeds {tolerance:.3e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    /// Structural misconfiguration: empty index sets, dimension mismatches,
    /// malformed ladders, and similar.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation needs the affine lower-order form but was handed a
    /// generic sampler.
    #[error("unsupported coefficient form: {0}")]
    UnsupportedForm(String),

    /// The time step exceeds the stability bound of the explicit scheme.
    #[error("CFL violation: tau {tau:.6e} exceeds bound {bound:.6e} at node {node:?}")]
    Cfl { tau: f64, bound: f64, node: NodeId },

    /// An off-diagonal diffusion entry exceeds what the seven-point splitting
    /// can absorb; the scheme would lose monotonicity.
    #[error(
        "diagonal dominance failure at node {node:?}, pair ({alpha},{beta}): deficit {deficit:.3e}"
    )]
    DiagonalDominance {
        node: NodeId,
        alpha: usize,
        beta: usize,
        deficit: f64,
    },

    /// A grid function or coefficient sample came back NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;
