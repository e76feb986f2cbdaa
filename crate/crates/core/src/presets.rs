//! Named closed-form problem instances: coefficient bundles with matching
//! ellipticity bounds, boundary data, and structure constants.  The grids
//! are chosen by the caller (experiment files or test suites) so one preset
//! can run at several resolutions.
//!
//! Four instances cover the workbench's exercise range:
//! - `linear-heat`: single-pair identity diffusion with zero lower order
//!   and data `e^t sin x1`, which solves the equation exactly — the
//!   manufactured-solution and transform testbed.
//! - `isaacs-2x2`: two controls per side with distinct constant diffusions,
//!   drifts, decays and sources — the ordering testbed.
//! - `isaacs-holder`: Holder-continuous diffusions, piecewise-constant
//!   sources and strongly curved data — the uniqueness-gap testbed.
//! - `measurable-f`: identity diffusion with a lone source interface and no
//!   drift or decay — the smoothing-stability testbed.

use crate::error::Result;
use crate::operators::{
    AffineLower, EllipticityBounds, IsaacsCoefficients, LowerOrder, MatrixField, OmegaTable,
    ScalarField, StructureConstants,
};
use crate::solver::BoundaryData;
use nalgebra::DMatrix;

/// A ready-to-solve problem: coefficients, their certified bounds and
/// constants, and boundary data.  Pose it on any grid over the intended
/// box.
#[derive(Debug)]
pub struct Preset {
    pub name: &'static str,
    /// Spatial box the data and coefficients are designed for.
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub coeffs: IsaacsCoefficients,
    pub bounds: EllipticityBounds,
    pub constants: StructureConstants,
    pub data: BoundaryData,
}

fn const_matrix(v: f64) -> MatrixField {
    MatrixField::constant(DMatrix::from_element(1, 1, v)).expect("1x1 symmetric")
}

fn affine(drift: f64, decay: f64, source: ScalarField) -> LowerOrder {
    LowerOrder::Affine(AffineLower {
        drift: vec![ScalarField::constant(drift)],
        decay: ScalarField::constant(decay),
        source,
    })
}

/// Modulus table for coefficient families continuous in `x` (identically
/// zero: constants and Holder fields are certified through their own
/// quotients, not through a modulus).
fn zero_modulus() -> OmegaTable {
    OmegaTable::new(vec![(0.0, 0.0), (4.0, 0.0)]).expect("valid table")
}

/// Modulus table recording a unit-height jump: the measurable families are
/// discontinuous, so every positive distance already sees the full
/// oscillation of the source channel.
fn jump_modulus(height: f64) -> OmegaTable {
    OmegaTable::new(vec![(0.0, 0.0), (1e-9, height), (4.0, height)]).expect("valid table")
}

/// Heat equation on `(0, pi)`: one control pair, `a = 1`, no lower-order
/// term, data `e^t sin x1`.  The data solves `u_t + u_xx = 0` classically,
/// so it doubles as the exact solution for convergence studies.
pub fn linear_heat() -> Result<Preset> {
    let coeffs = IsaacsCoefficients::new(
        1,
        1,
        1,
        vec![const_matrix(1.0)],
        vec![LowerOrder::zero(1)],
        0.0,
        ScalarField::constant(0.0),
    )?;
    Ok(Preset {
        name: "linear-heat",
        box_lo: vec![0.0],
        box_hi: vec![std::f64::consts::PI],
        coeffs,
        bounds: EllipticityBounds::new(0.9, 0.5)?,
        constants: StructureConstants::new(0.0, 1.5, zero_modulus(), 0.5)?,
        data: BoundaryData::from_fn(|t, x: &[f64]| t.exp() * x[0].sin()),
    })
}

/// Exact solution of the `linear-heat` preset.
pub fn heat_exact(t: f64, x: &[f64]) -> f64 {
    t.exp() * x[0].sin()
}

/// Two-by-two game on `(-1, 1)`: four constant diffusion levels inside the
/// `[1/2, 2]` band, mixed drifts and decays under the Lipschitz budget
/// `K0 = 1`, and bounded sources.  Concave-in-space data keeps the
/// second-order branch engaged at small cutoff levels.
pub fn isaacs_2x2() -> Result<Preset> {
    let diffusion = vec![
        const_matrix(0.55),
        const_matrix(0.8),
        const_matrix(1.1),
        const_matrix(0.7),
    ];
    let lower = vec![
        affine(0.3, 0.2, ScalarField::constant(0.6)),
        affine(-0.4, 0.5, ScalarField::constant(-0.5)),
        affine(0.2, 0.0, ScalarField::constant(0.25)),
        affine(-0.1, 0.3, ScalarField::constant(0.1)),
    ];
    let coeffs = IsaacsCoefficients::new(
        1,
        2,
        2,
        diffusion,
        lower,
        1.0,
        ScalarField::constant(1.0),
    )?;
    Ok(Preset {
        name: "isaacs-2x2",
        box_lo: vec![-1.0],
        box_hi: vec![1.0],
        coeffs,
        bounds: EllipticityBounds::new(0.5, 0.4)?,
        constants: StructureConstants::new(1.0, 1.5, zero_modulus(), 0.5)?,
        data: BoundaryData::from_fn(|t, x: &[f64]| (1.0 - x[0] * x[0]) * (1.0 + 0.5 * t)),
    })
}

/// Game on `(-1, 1)` with diffusions Holder-continuous in `x` at the
/// exponent tied to `kappa`, piecewise-constant sources jumping across
/// `x = 0`, and multi-scale data whose curvature keeps the cutoff branch
/// active on the first few ladder rungs.
pub fn isaacs_holder(kappa: f64) -> Result<Preset> {
    let gamma = crate::operators::gamma_of_kappa(kappa)?;
    let holder_a = move |mid: f64, amp: f64| {
        MatrixField::scaled_identity(ScalarField::spatial(move |x: &[f64]| {
            mid + amp * x[0].abs().powf(gamma)
        }))
    };
    let step = |lo: f64, hi: f64| {
        ScalarField::spatial(move |x: &[f64]| if x[0] > 0.0 { hi } else { lo })
    };
    let diffusion = vec![
        holder_a(0.7, 0.15),
        holder_a(0.9, -0.1),
        holder_a(1.2, 0.2),
        holder_a(0.8, -0.12),
    ];
    let lower = vec![
        affine(0.2, 0.3, step(-0.4, 0.6)),
        affine(-0.3, 0.1, step(0.4, -0.4)),
        affine(0.1, 0.4, step(-0.5, 0.1)),
        affine(-0.2, 0.0, step(-0.2, 0.2)),
    ];
    let coeffs = IsaacsCoefficients::new(
        1,
        2,
        2,
        diffusion,
        lower,
        1.0,
        ScalarField::constant(1.0),
    )?;
    Ok(Preset {
        name: "isaacs-holder",
        box_lo: vec![-1.0],
        box_hi: vec![1.0],
        coeffs,
        bounds: EllipticityBounds::new(0.5, 0.4)?,
        constants: StructureConstants::new(1.0, kappa, jump_modulus(1.0), 0.5)?,
        data: BoundaryData::from_fn(|t, x: &[f64]| {
            0.4 * (2.0 * x[0]).cos() + 0.25 * (5.0 * x[0]).sin() + 0.1 * t * (1.0 - x[0] * x[0])
        }),
    })
}

/// Stability testbed on `(-1, 1)`: identity diffusion, no drift or decay,
/// and two source channels that jump across `x = 0` in opposite
/// directions.  Everything ignores time, so operator smoothings collapse
/// to their spatial marginals and stay defined on short horizons.
pub fn measurable_f() -> Result<Preset> {
    let step = |lo: f64, hi: f64| {
        ScalarField::spatial(move |x: &[f64]| if x[0] > 0.0 { hi } else { lo })
    };
    let coeffs = IsaacsCoefficients::new(
        1,
        1,
        2,
        vec![const_matrix(1.0), const_matrix(1.0)],
        vec![
            affine(0.0, 0.0, step(-0.5, 0.5)),
            affine(0.0, 0.0, step(0.6, -0.2)),
        ],
        1.0,
        ScalarField::constant(1.0),
    )?;
    Ok(Preset {
        name: "measurable-f",
        box_lo: vec![-1.0],
        box_hi: vec![1.0],
        coeffs,
        bounds: EllipticityBounds::new(1.0, 0.9)?,
        constants: StructureConstants::new(1.0, 1.5, jump_modulus(1.0), 0.5)?,
        data: BoundaryData::from_fn(|_, x: &[f64]| 0.3 * (std::f64::consts::FRAC_PI_2 * x[0]).cos()),
    })
}

/// Look a preset up by its published name (the `isaacs-holder` entry uses
/// `kappa = 1.5`; build other exponents through [`isaacs_holder`]).
pub fn by_name(name: &str) -> Option<Result<Preset>> {
    match name {
        "linear-heat" => Some(linear_heat()),
        "isaacs-2x2" => Some(isaacs_2x2()),
        "isaacs-holder" => Some(isaacs_holder(1.5)),
        "measurable-f" => Some(measurable_f()),
        _ => None,
    }
}
