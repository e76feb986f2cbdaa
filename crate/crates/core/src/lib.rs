//! Numerical workbench for uniformly parabolic Isaacs equations
//!
//! The central object is the terminal-value problem
//!
//! ```text
//!     du/dt + H(u'', u', u, t, x) = 0      on (0, T) x Omega,
//!     u = g                                on the parabolic boundary,
//! ```
//!
//! where `H` is a finite sup-inf envelope of linear uniformly elliptic
//! operators.  The crate provides:
//!
//! * [`grid`] — space-time lattices, grid functions, discrete jets and a
//!   discrete parabolic Holder norm;
//! * [`operators`] — the Isaacs envelope, the Pucci maximal operator, the
//!   two cutoff envelopes used to build extremal solutions, and structure
//!   validation for coefficient families;
//! * [`mollify`] — parabolic and isotropic smoothing kernels, grid-function
//!   mollification and mollification of sampled operator envelopes;
//! * [`barrier`] — radial `cosh` barriers for forcing boundary attainment;
//! * [`solver`] — an explicit monotone scheme for the cutoff equations, the
//!   cutoff ladder that brackets the solution from above and below, and the
//!   uniqueness-gap experiment;
//! * [`harness`] — diagnostics: doubling-of-variables maximization, the
//!   smoothing-scale schedule, sweep checks of the scalar penalty bound,
//!   oscillation and operator-deviation measurements, the operator-smoothing
//!   stability ladder, and a discrete viscosity-solution check;
//! * [`presets`] — the named model problems used by the command-line tool
//!   and the acceptance tests.

pub mod barrier;
pub mod error;
pub mod grid;
pub mod harness;
pub mod jet;
pub mod mollify;
pub mod operators;
pub mod presets;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{GridFunction, NodeId, SpaceTimeGrid, SubGrid};
pub use jet::Jet;

/// Crate version, recorded in artifact manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
