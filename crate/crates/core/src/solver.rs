//! Explicit monotone finite differences for the cutoff equations, swept
//! backward from the terminal slice.
//!
//! Each reverse-time Euler step computes `u(t) = u(t+tau) + tau *
//! G_h[u(t+tau)]`, where `G_h` discretizes the chosen cutoff envelope:
//!
//! * per control pair, axis second differences plus the positive/negative
//!   cross-difference splitting for off-diagonal diffusion (requiring
//!   diagonal dominance `a_ii >= sum_{j != i} |a_ij|` at every node),
//!   upwinded drift, decay and source, then the exact finite sup-inf;
//! * the Pucci branch evaluated in eigenvalue form on the central discrete
//!   Hessian, combined as `max(H, P - K)` (upper) or `min(H, -P(-u'') + K)`
//!   (lower).
//!
//! Every stencil weight off the center is nonnegative and the in-loop CFL
//! check keeps the center coefficient nonnegative, so raising any input
//! value cannot lower an output: the scheme is monotone and inherits a
//! discrete maximum principle.  One caveat is inherent to the eigenvalue
//! Pucci branch: its dependence on *cross* neighbors is not monotone in
//! dimension two and higher (the four-point cross difference enters the
//! matrix indefinitely), so the unconditional monotonicity statement holds
//! in dimension one, and in higher dimension whenever the Pucci branch is
//! inactive.  Diffusion coefficients are always sampled at the stencil
//! center; the optional kernel shifts (used for operator-smoothing
//! experiments) displace only the lower-order channel, clamped to the
//! space-time box near its edges.

use crate::error::{Error, Result};
use crate::grid::{GridFunction, NodeId, SpaceTimeGrid, SubGrid};
use crate::jet::check_symmetric;
use crate::mollify::{isotropic_weights, KernelWeights};
use crate::operators::{
    sym_eigenvalues, AffineLower, EllipticityBounds, IsaacsCoefficients, LowerOrder,
};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Which cutoff envelope the scheme integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutoffSide {
    /// `max(H, P - K)`; solutions decrease toward the maximal one as `K`
    /// grows.
    Upper,
    /// `min(H, -P(-u'') + K)`; solutions increase toward the minimal one.
    Lower,
}

/// Numerical knobs of the explicit scheme.
#[derive(Debug, Clone, Copy)]
pub struct SchemeConfig {
    /// Fraction of the CFL limit that automatic step selection may use.
    pub cfl_safety: f64,
    /// Hard cap on time steps per solve.
    pub max_steps: usize,
    /// Tolerated diagonal-dominance deficit before a node is rejected.
    pub diag_tol: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            cfl_safety: 0.9,
            max_steps: 200_000,
            diag_tol: 1e-12,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Config(format!(
                "CFL safety factor {} not in (0, 1]",
                self.cfl_safety
            )));
        }
        if !(self.diag_tol >= 0.0) {
            return Err(Error::Config("diagonal tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

/// Data on the parabolic boundary: the terminal slice `{T} x closure(Omega)`
/// and the lateral boundary nodes at every time level.
#[derive(Clone)]
pub enum BoundaryData {
    Closure(Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>),
    /// Sampled data; evaluated at the nearest node.
    Table(GridFunction),
}

impl BoundaryData {
    pub fn from_fn(f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        BoundaryData::Closure(Arc::new(f))
    }
    pub fn constant(c: f64) -> Self {
        BoundaryData::Closure(Arc::new(move |_, _| c))
    }
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            BoundaryData::Closure(f) => f(t, x),
            BoundaryData::Table(g) => g.eval_nearest(t, x),
        }
    }
}

impl fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryData::Closure(_) => write!(f, "Closure"),
            BoundaryData::Table(_) => write!(f, "Table"),
        }
    }
}

/// Audit record of one cutoff solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub k: f64,
    pub tau: f64,
    /// Largest step the binding node/pair would have allowed.
    pub cfl_bound: f64,
    /// Recomputed stepping residual of the stored solution (round-off scale
    /// by construction; reported for audit, not tuned).
    pub max_residual: f64,
    pub steps: usize,
    pub wall: Duration,
}

/// One displaced evaluation of the lower-order channel.
#[derive(Debug, Clone)]
pub(crate) struct ShiftEntry {
    pub weight: f64,
    pub dt: f64,
    pub dx: Vec<f64>,
}

/// Convex combination of lower-order displacements; the identity for plain
/// solves, kernel offsets for operator-smoothing runs.
#[derive(Debug, Clone)]
pub(crate) struct Shifts {
    pub entries: Vec<ShiftEntry>,
}

impl Shifts {
    pub fn identity(dim: usize) -> Self {
        Shifts {
            entries: vec![ShiftEntry {
                weight: 1.0,
                dt: 0.0,
                dx: vec![0.0; dim],
            }],
        }
    }

    pub fn from_kernel(weights: &KernelWeights, tau: f64, h: f64) -> Self {
        Shifts {
            entries: weights
                .entries()
                .iter()
                .map(|e| ShiftEntry {
                    weight: e.weight,
                    dt: e.dt as f64 * tau,
                    dx: e.dx.iter().map(|&m| m as f64 * h).collect(),
                })
                .collect(),
        }
    }
}

/// Per-thread scratch for the node update.
struct Scratch {
    a: DMatrix<f64>,
    hess: DMatrix<f64>,
    xeval: Vec<f64>,
    uprime_pos: Vec<usize>,
    uprime_neg: Vec<usize>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Scratch {
            a: DMatrix::zeros(dim, dim),
            hess: DMatrix::zeros(dim, dim),
            xeval: vec![0.0; dim],
            uprime_pos: vec![0; dim],
            uprime_neg: vec![0; dim],
        }
    }
}

struct Stepper<'a> {
    grid: &'a Arc<SpaceTimeGrid>,
    coeffs: &'a IsaacsCoefficients,
    delta_bar: f64,
    k: f64,
    side: CutoffSide,
    diag_tol: f64,
    shifts: &'a Shifts,
    tau: f64,
}

impl Stepper<'_> {
    /// Advance one reverse-time level: read the slice at `t_next`, return
    /// the slice one step earlier together with the largest center
    /// coefficient met (for CFL reporting).  Non-interior entries are
    /// copied through; the caller pins boundary data afterwards.
    fn step(&self, u_next: &[f64], t_next: f64, k_time: usize) -> Result<(Vec<f64>, f64)> {
        let grid = self.grid;
        let updated = grid
            .interior_nodes()
            .par_iter()
            .map_init(
                || Scratch::new(grid.dim()),
                |scratch, &s| self.node_update(scratch, u_next, t_next, k_time, s),
            )
            .collect::<Result<Vec<(f64, f64)>>>()?;
        let mut out = u_next.to_vec();
        let mut center_max = 2.0 * grid.dim() as f64 / (self.delta_bar * grid.h() * grid.h());
        for (&s, &(value, center)) in grid.interior_nodes().iter().zip(&updated) {
            out[s] = value;
            center_max = center_max.max(center);
        }
        Ok((out, center_max))
    }

    fn node_update(
        &self,
        scr: &mut Scratch,
        u_next: &[f64],
        t_next: f64,
        k_time: usize,
        s: usize,
    ) -> Result<(f64, f64)> {
        let grid = self.grid;
        let d = grid.dim();
        let h = grid.h();
        let h2 = h * h;
        let x = grid.coord(s);
        let u0 = u_next[s];
        let node = NodeId { time: k_time, space: s };

        for i in 0..d {
            scr.uprime_pos[i] = grid.neighbor(s, i, 1).expect("interior node");
            scr.uprime_neg[i] = grid.neighbor(s, i, -1).expect("interior node");
        }

        // Central discrete Hessian for the Pucci branch.
        for i in 0..d {
            let dii =
                (u_next[scr.uprime_pos[i]] + u_next[scr.uprime_neg[i]] - 2.0 * u0) / h2;
            scr.hess[(i, i)] = dii;
            for j in (i + 1)..d {
                let pp = grid.diag_neighbor(s, i, 1, j, 1).expect("interior node");
                let mm = grid.diag_neighbor(s, i, -1, j, -1).expect("interior node");
                let pm = grid.diag_neighbor(s, i, 1, j, -1).expect("interior node");
                let mp = grid.diag_neighbor(s, i, -1, j, 1).expect("interior node");
                let dij =
                    (u_next[pp] + u_next[mm] - u_next[pm] - u_next[mp]) / (4.0 * h2);
                scr.hess[(i, j)] = dij;
                scr.hess[(j, i)] = dij;
            }
        }
        let eigen = sym_eigenvalues(&scr.hess);
        let db = self.delta_bar;
        let pucci_branch = match self.side {
            // max(H, P(u'') - K)
            CutoffSide::Upper => {
                let p: f64 = eigen
                    .iter()
                    .map(|&l| if l > 0.0 { l / db } else { l * db })
                    .sum();
                p - self.k
            }
            // min(H, -P(-u'') + K)
            CutoffSide::Lower => {
                let p_neg: f64 = eigen
                    .iter()
                    .map(|&l| if l < 0.0 { -l / db } else { -l * db })
                    .sum();
                -p_neg + self.k
            }
        };

        let mut sup = f64::NEG_INFINITY;
        let mut center_worst = 0.0f64;
        for alpha in 0..self.coeffs.n_alpha() {
            let mut inf = f64::INFINITY;
            for beta in 0..self.coeffs.n_beta() {
                self.coeffs.diffusion(alpha, beta).eval_into(t_next, x, &mut scr.a);
                check_symmetric(&scr.a)?;
                let mut val = 0.0;
                let mut center = 0.0;
                for i in 0..d {
                    let row_off: f64 = (0..d)
                        .filter(|&j| j != i)
                        .map(|j| scr.a[(i, j)].abs())
                        .sum();
                    let deficit = row_off - scr.a[(i, i)];
                    if deficit > self.diag_tol {
                        return Err(Error::DiagonalDominance {
                            node,
                            alpha,
                            beta,
                            deficit,
                        });
                    }
                    let w_axis = ((scr.a[(i, i)] - row_off) / h2).max(0.0);
                    val += w_axis
                        * ((u_next[scr.uprime_pos[i]] - u0)
                            + (u_next[scr.uprime_neg[i]] - u0));
                    center += 2.0 * w_axis;
                }
                for i in 0..d {
                    for j in (i + 1)..d {
                        let aij = scr.a[(i, j)];
                        if aij == 0.0 {
                            continue;
                        }
                        let w = aij.abs() / h2;
                        let (c1, c2) = if aij > 0.0 {
                            (
                                grid.diag_neighbor(s, i, 1, j, 1).expect("interior"),
                                grid.diag_neighbor(s, i, -1, j, -1).expect("interior"),
                            )
                        } else {
                            (
                                grid.diag_neighbor(s, i, 1, j, -1).expect("interior"),
                                grid.diag_neighbor(s, i, -1, j, 1).expect("interior"),
                            )
                        };
                        val += w * ((u_next[c1] - u0) + (u_next[c2] - u0));
                        center += 2.0 * w;
                    }
                }

                let affine = match self.coeffs.lower(alpha, beta) {
                    LowerOrder::Affine(a) => a,
                    LowerOrder::Sampler(_) => {
                        return Err(Error::UnsupportedForm(
                            "the stepping scheme needs the affine lower-order \
                             form to upwind the drift"
                                .into(),
                        ))
                    }
                };
                let (bval, bcenter) =
                    self.lower_order(scr, affine, u_next, u0, t_next, x)?;
                val += bval;
                center += bcenter;

                if self.tau * center > 1.0 + 1e-12 {
                    return Err(Error::Cfl {
                        tau: self.tau,
                        bound: 1.0 / center,
                        node,
                    });
                }
                center_worst = center_worst.max(center);
                inf = inf.min(val);
            }
            sup = sup.max(inf);
        }

        let g = match self.side {
            CutoffSide::Upper => sup.max(pucci_branch),
            CutoffSide::Lower => sup.min(pucci_branch),
        };
        let out = u0 + self.tau * g;
        if !out.is_finite() {
            return Err(Error::NonFinite(format!(
                "update at t-index {k_time}, space index {s}"
            )));
        }
        Ok((out, center_worst))
    }

    /// Upwinded drift, decay and source of one control pair, mixed over the
    /// displacement entries.  Returns the value contribution and the center
    /// coefficient it adds to the CFL budget.
    fn lower_order(
        &self,
        scr: &mut Scratch,
        affine: &AffineLower,
        u_next: &[f64],
        u0: f64,
        t_next: f64,
        x: &[f64],
    ) -> Result<(f64, f64)> {
        let grid = self.grid;
        let d = grid.dim();
        let h = grid.h();
        let mut val = 0.0;
        let mut center = 0.0;
        for entry in &self.shifts.entries {
            let t_eval = (t_next + entry.dt).min(grid.horizon());
            for i in 0..d {
                scr.xeval[i] =
                    (x[i] + entry.dx[i]).clamp(grid.box_lo()[i], grid.box_hi()[i]);
            }
            let eta = entry.weight;
            for i in 0..d {
                let b = affine.drift[i].eval(t_eval, &scr.xeval);
                if b > 0.0 {
                    val += eta * b * (u_next[scr.uprime_pos[i]] - u0) / h;
                    center += eta * b / h;
                } else if b < 0.0 {
                    val += eta * (-b) * (u_next[scr.uprime_neg[i]] - u0) / h;
                    center += eta * (-b) / h;
                }
            }
            let decay = affine.decay.eval(t_eval, &scr.xeval);
            val += eta * (affine.source.eval(t_eval, &scr.xeval) - decay * u0);
            center += eta * decay;
        }
        Ok((val, center))
    }
}

/// One explicit reverse-time step on a spatial slice: reads values at
/// `t_next`, returns the slice at `t_next - tau` with interior nodes
/// updated and the rest copied through (callers pin boundary data).
#[allow(clippy::too_many_arguments)]
pub fn monotone_step(
    grid: &Arc<SpaceTimeGrid>,
    coeffs: &IsaacsCoefficients,
    bounds: &EllipticityBounds,
    u_next: &[f64],
    t_next: f64,
    k: f64,
    side: CutoffSide,
    config: &SchemeConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    check_compatible(grid, coeffs)?;
    if u_next.len() != grid.n_space() {
        return Err(Error::Config(format!(
            "slice has {} entries, grid has {} spatial nodes",
            u_next.len(),
            grid.n_space()
        )));
    }
    let shifts = Shifts::identity(grid.dim());
    let stepper = Stepper {
        grid,
        coeffs,
        delta_bar: bounds.delta_bar(),
        k,
        side,
        diag_tol: config.diag_tol,
        shifts: &shifts,
        tau: grid.tau(),
    };
    check_pucci_cfl(grid, bounds)?;
    let k_time = grid.nearest_time(t_next).saturating_sub(1);
    Ok(stepper.step(u_next, t_next, k_time)?.0)
}

fn check_compatible(grid: &SpaceTimeGrid, coeffs: &IsaacsCoefficients) -> Result<()> {
    if grid.dim() != coeffs.dim() {
        return Err(Error::Config(format!(
            "grid dimension {} != coefficient dimension {}",
            grid.dim(),
            coeffs.dim()
        )));
    }
    Ok(())
}

/// The Pucci branch shifts the center by at most `2 d / (delta_bar h^2)`;
/// enforced once per solve since it does not vary over nodes.
fn check_pucci_cfl(grid: &SpaceTimeGrid, bounds: &EllipticityBounds) -> Result<f64> {
    let center = 2.0 * grid.dim() as f64 / (bounds.delta_bar() * grid.h() * grid.h());
    if grid.tau() * center > 1.0 + 1e-12 {
        return Err(Error::Cfl {
            tau: grid.tau(),
            bound: 1.0 / center,
            node: NodeId { time: 0, space: 0 },
        });
    }
    Ok(center)
}

#[allow(clippy::too_many_arguments)]
fn solve_cutoff_shifted(
    grid: &Arc<SpaceTimeGrid>,
    coeffs: &IsaacsCoefficients,
    bounds: &EllipticityBounds,
    g: &BoundaryData,
    k: f64,
    side: CutoffSide,
    config: &SchemeConfig,
    shifts: &Shifts,
) -> Result<(GridFunction, SolveReport)> {
    config.validate()?;
    check_compatible(grid, coeffs)?;
    if !(k >= 1.0) {
        return Err(Error::Config(format!("cutoff level {k} must be >= 1")));
    }
    let steps = grid.n_time() - 1;
    if steps > config.max_steps {
        return Err(Error::Config(format!(
            "{steps} time steps exceed the configured cap {}",
            config.max_steps
        )));
    }
    check_pucci_cfl(grid, bounds)?;
    let start = Instant::now();
    let n_space = grid.n_space();
    let mut values = vec![0.0; grid.n_time() * n_space];

    // Terminal data over the whole masked slice.
    let top = grid.n_time() - 1;
    let t_top = grid.time(top);
    for s in 0..n_space {
        if grid.is_masked(s) {
            values[top * n_space + s] = g.eval(t_top, grid.coord(s));
        }
    }

    let stepper = Stepper {
        grid,
        coeffs,
        delta_bar: bounds.delta_bar(),
        k,
        side,
        diag_tol: config.diag_tol,
        shifts,
        tau: grid.tau(),
    };
    let mut center_max = 0.0f64;
    for k_next in (1..=top).rev() {
        let t_next = grid.time(k_next);
        let (slice, center) = {
            let src = &values[k_next * n_space..(k_next + 1) * n_space];
            stepper.step(src, t_next, k_next - 1)?
        };
        center_max = center_max.max(center);
        let t_cur = grid.time(k_next - 1);
        let dst = &mut values[(k_next - 1) * n_space..k_next * n_space];
        dst.copy_from_slice(&slice);
        for &s in grid.boundary_nodes() {
            dst[s] = g.eval(t_cur, grid.coord(s));
        }
    }

    let u = GridFunction::from_values(grid, values)?;
    let max_residual = stepping_residual_sup(&u, &stepper, g)?;
    Ok((
        u,
        SolveReport {
            k,
            tau: grid.tau(),
            cfl_bound: if center_max > 0.0 { 1.0 / center_max } else { f64::INFINITY },
            max_residual,
            steps,
            wall: start.elapsed(),
        },
    ))
}

/// Recompute every step of a stored solution and report the largest
/// discrepancy against it (interior nodes).  Zero up to round-off for
/// anything produced by the solver itself.
fn stepping_residual_sup(
    u: &GridFunction,
    stepper: &Stepper<'_>,
    _g: &BoundaryData,
) -> Result<f64> {
    let grid = u.grid();
    let n_space = grid.n_space();
    let mut worst = 0.0f64;
    for k_next in 1..grid.n_time() {
        let (slice, _) =
            stepper.step(u.slice(k_next), grid.time(k_next), k_next - 1)?;
        for &s in grid.interior_nodes() {
            let stored = u.values()[(k_next - 1) * n_space + s];
            worst = worst.max((stored - slice[s]).abs() / grid.tau());
        }
    }
    Ok(worst)
}

/// Solve one cutoff equation backward from the terminal slice, with lateral
/// data pinned at every level.
pub fn solve_cutoff(
    grid: &Arc<SpaceTimeGrid>,
    coeffs: &IsaacsCoefficients,
    bounds: &EllipticityBounds,
    g: &BoundaryData,
    k: f64,
    side: CutoffSide,
    config: &SchemeConfig,
) -> Result<(GridFunction, SolveReport)> {
    let shifts = Shifts::identity(grid.dim());
    solve_cutoff_shifted(grid, coeffs, bounds, g, k, side, config, &shifts)
}

/// Cutoff solve against the operator whose lower-order channel has been
/// smoothed at isotropic scale `1/n`: the update mixes the per-pair
/// envelopes over the kernel's lattice displacements (diffusion pinned at
/// the center).  Coefficient families that ignore time collapse the time
/// offsets exactly, which keeps fine-step runs affordable.
#[allow(clippy::too_many_arguments)]
pub fn solve_cutoff_mollified(
    grid: &Arc<SpaceTimeGrid>,
    coeffs: &IsaacsCoefficients,
    bounds: &EllipticityBounds,
    g: &BoundaryData,
    k: f64,
    side: CutoffSide,
    config: &SchemeConfig,
    n: u32,
) -> Result<(GridFunction, SolveReport)> {
    let weights = isotropic_weights(grid.dim(), grid.h(), grid.tau(), n)?;
    let weights = if coeffs.is_time_invariant() {
        weights.collapse_time()
    } else {
        weights
    };
    let shifts = Shifts::from_kernel(&weights, grid.tau(), grid.h());
    solve_cutoff_shifted(grid, coeffs, bounds, g, k, side, config, &shifts)
}

/// Outcome of a ladder of cutoff solves.
#[derive(Debug, Clone)]
pub struct LadderReport {
    /// Cutoff levels actually solved (a prefix of the requested ladder when
    /// the gap tolerance was reached early).
    pub ks: Vec<f64>,
    /// Sup-gap against the previous ladder entry; the first entry has no
    /// predecessor and records infinity.
    pub gaps: Vec<f64>,
    pub converged: bool,
    pub reports: Vec<SolveReport>,
}

/// Climb the cutoff ladder until consecutive solutions agree within `tol`,
/// returning the last iterate.  An exhausted ladder is reported as
/// non-converged, not raised as an error.
#[allow(clippy::too_many_arguments)]
pub fn extremal_solution(
    grid: &Arc<SpaceTimeGrid>,
    coeffs: &IsaacsCoefficients,
    bounds: &EllipticityBounds,
    g: &BoundaryData,
    ladder: &[f64],
    tol: f64,
    side: CutoffSide,
    config: &SchemeConfig,
) -> Result<(GridFunction, LadderReport)> {
    let shifts = Shifts::identity(grid.dim());
    extremal_shifted(grid, coeffs, bounds, g, ladder, tol, side, config, &shifts)
}

/// Ladder solve against the smoothed lower-order channel at scale `1/n`.
#[allow(clippy::too_many_arguments)]
pub fn extremal_solution_mollified(
    grid: &Arc<SpaceTimeGrid>,
    coeffs: &IsaacsCoefficients,
    bounds: &EllipticityBounds,
    g: &BoundaryData,
    ladder: &[f64],
    tol: f64,
    side: CutoffSide,
    config: &SchemeConfig,
    n: u32,
) -> Result<(GridFunction, LadderReport)> {
    let weights = isotropic_weights(grid.dim(), grid.h(), grid.tau(), n)?;
    let weights = if coeffs.is_time_invariant() {
        weights.collapse_time()
    } else {
        weights
    };
    let shifts = Shifts::from_kernel(&weights, grid.tau(), grid.h());
    extremal_shifted(grid, coeffs, bounds, g, ladder, tol, side, config, &shifts)
}

#[allow(clippy::too_many_arguments)]
fn extremal_shifted(
    grid: &Arc<SpaceTimeGrid>,
    coeffs: &IsaacsCoefficients,
    bounds: &EllipticityBounds,
    g: &BoundaryData,
    ladder: &[f64],
    tol: f64,
    side: CutoffSide,
    config: &SchemeConfig,
    shifts: &Shifts,
) -> Result<(GridFunction, LadderReport)> {
    validate_ladder(ladder)?;
    if !(tol > 0.0) {
        return Err(Error::Config(format!("gap tolerance {tol} must be positive")));
    }
    let mut ks = Vec::new();
    let mut gaps = Vec::new();
    let mut reports = Vec::new();
    let mut last: Option<GridFunction> = None;
    let mut converged = false;
    for &k in ladder {
        let (u, report) =
            solve_cutoff_shifted(grid, coeffs, bounds, g, k, side, config, shifts)?;
        let gap = match &last {
            Some(prev) => prev.sup_diff(&u),
            None => f64::INFINITY,
        };
        ks.push(k);
        gaps.push(gap);
        reports.push(report);
        last = Some(u);
        if gap < tol {
            converged = true;
            break;
        }
    }
    Ok((
        last.expect("ladder is nonempty"),
        LadderReport {
            ks,
            gaps,
            converged,
            reports,
        },
    ))
}

fn validate_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::Config("cutoff ladder is empty".into()));
    }
    if !(ladder[0] >= 1.0) {
        return Err(Error::Config(format!(
            "cutoff ladder must start at K >= 1, got {}",
            ladder[0]
        )));
    }
    for w in ladder.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Config(
                "cutoff ladder must be strictly increasing".into(),
            ));
        }
    }
    Ok(())
}

/// Gap curve between the two one-sided solutions along a cutoff ladder.
#[derive(Debug, Clone)]
pub struct GapCurve {
    pub ks: Vec<f64>,
    /// `sup |u_K - u_{-K}|` over all masked nodes, per ladder entry.
    pub gaps: Vec<f64>,
    pub final_gap: f64,
    pub tol: f64,
    /// True when the final gap undercuts the tolerance: the two extremal
    /// solutions coincide at this resolution.
    pub unique_at_tol: bool,
}

/// Solve both cutoff sides along a ladder and report the closing gap
/// between them.
#[allow(clippy::too_many_arguments)]
pub fn uniqueness_gap(
    grid: &Arc<SpaceTimeGrid>,
    coeffs: &IsaacsCoefficients,
    bounds: &EllipticityBounds,
    g: &BoundaryData,
    ladder: &[f64],
    tol: f64,
    config: &SchemeConfig,
) -> Result<GapCurve> {
    validate_ladder(ladder)?;
    if !(tol > 0.0) {
        return Err(Error::Config(format!("gap tolerance {tol} must be positive")));
    }
    let mut ks = Vec::new();
    let mut gaps = Vec::new();
    for &k in ladder {
        let (hi, _) = solve_cutoff(grid, coeffs, bounds, g, k, CutoffSide::Upper, config)?;
        let (lo, _) = solve_cutoff(grid, coeffs, bounds, g, k, CutoffSide::Lower, config)?;
        ks.push(k);
        gaps.push(hi.sup_diff(&lo));
    }
    let final_gap = *gaps.last().expect("ladder is nonempty");
    Ok(GapCurve {
        ks,
        gaps,
        final_gap,
        tol,
        unique_at_tol: final_gap < tol,
    })
}

/// Stepping residual of an arbitrary grid function: at each interior node
/// and non-terminal level, `(u(t+tau) - u(t)) / tau + G_h[u(t+tau)]` — the
/// forward time difference plus the same discrete envelope the solver
/// steps with.  Zero (to round-off) on solver output; truncation-sized on
/// smooth manufactured solutions.  Boundary and terminal entries are zero.
pub fn residual(
    u: &GridFunction,
    coeffs: &IsaacsCoefficients,
    bounds: &EllipticityBounds,
    k: f64,
    side: CutoffSide,
    config: &SchemeConfig,
) -> Result<GridFunction> {
    config.validate()?;
    let grid = u.grid();
    check_compatible(grid, coeffs)?;
    check_pucci_cfl(grid, bounds)?;
    let shifts = Shifts::identity(grid.dim());
    let stepper = Stepper {
        grid,
        coeffs,
        delta_bar: bounds.delta_bar(),
        k,
        side,
        diag_tol: config.diag_tol,
        shifts: &shifts,
        tau: grid.tau(),
    };
    let n_space = grid.n_space();
    let mut vals = vec![0.0; grid.n_time() * n_space];
    for k_next in 1..grid.n_time() {
        let (stepped, _) = stepper.step(u.slice(k_next), grid.time(k_next), k_next - 1)?;
        for &s in grid.interior_nodes() {
            // stepped = u(t+tau) + tau G, so (stepped - u(t)) / tau is the
            // forward difference plus the envelope.
            vals[(k_next - 1) * n_space + s] =
                (stepped[s] - u.values()[(k_next - 1) * n_space + s]) / grid.tau();
        }
    }
    GridFunction::from_values(grid, vals)
}

/// Largest stable time step for these coefficients on this spatial grid:
/// scans interior nodes, control pairs and the supplied time samples for
/// the worst center coefficient (including the Pucci branch) and inverts
/// it.  Field sampling is only as fine as `times`, so keep a safety factor.
pub fn cfl_limit(
    grid: &Arc<SpaceTimeGrid>,
    coeffs: &IsaacsCoefficients,
    bounds: &EllipticityBounds,
    times: &[f64],
) -> Result<f64> {
    check_compatible(grid, coeffs)?;
    if times.is_empty() {
        return Err(Error::Config("CFL scan needs at least one time sample".into()));
    }
    let d = grid.dim();
    let h = grid.h();
    let h2 = h * h;
    let mut center_max = 2.0 * d as f64 / (bounds.delta_bar() * h2);
    let mut a = DMatrix::zeros(d, d);
    for &t in times {
        for &s in grid.interior_nodes() {
            let x = grid.coord(s);
            for alpha in 0..coeffs.n_alpha() {
                for beta in 0..coeffs.n_beta() {
                    coeffs.diffusion(alpha, beta).eval_into(t, x, &mut a);
                    let mut center = 0.0;
                    for i in 0..d {
                        let row_off: f64 = (0..d)
                            .filter(|&j| j != i)
                            .map(|j| a[(i, j)].abs())
                            .sum();
                        center += 2.0 * ((a[(i, i)] - row_off) / h2).max(0.0);
                        for j in (i + 1)..d {
                            center += 2.0 * a[(i, j)].abs() / h2;
                        }
                    }
                    match coeffs.lower(alpha, beta) {
                        LowerOrder::Affine(affine) => {
                            for dfield in &affine.drift {
                                center += dfield.eval(t, x).abs() / h;
                            }
                            center += affine.decay.eval(t, x).max(0.0);
                        }
                        LowerOrder::Sampler(_) => {
                            return Err(Error::UnsupportedForm(
                                "CFL scan needs the affine lower-order form".into(),
                            ))
                        }
                    }
                    center_max = center_max.max(center);
                }
            }
        }
    }
    Ok(1.0 / center_max)
}

/// Largest step count-friendly `tau` at or below `safety * limit` that
/// divides the horizon exactly.
pub fn auto_tau(horizon: f64, limit: f64, safety: f64) -> Result<f64> {
    if !(horizon > 0.0 && limit > 0.0 && safety > 0.0 && safety <= 1.0) {
        return Err(Error::Config(format!(
            "auto step selection needs positive horizon/limit and safety in (0,1], \
             got ({horizon}, {limit}, {safety})"
        )));
    }
    let m = (horizon / (safety * limit)).ceil().max(1.0);
    Ok(horizon / m)
}

/// Restriction of the sup-difference to a window (used by stability and
/// comparison experiments that only trust values away from the boundary).
pub fn sup_diff_on(u: &GridFunction, v: &GridFunction, window: &SubGrid) -> Result<f64> {
    if !Arc::ptr_eq(u.grid(), v.grid()) || !Arc::ptr_eq(u.grid(), window.grid()) {
        return Err(Error::Config(
            "sup-difference needs both functions and the window on one grid".into(),
        ));
    }
    Ok(window
        .nodes()
        .iter()
        .map(|&n| (u.value(n) - v.value(n)).abs())
        .fold(0.0, f64::max))
}
