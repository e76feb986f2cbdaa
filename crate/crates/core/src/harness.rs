//! Verification workbench on top of the solver: the comparison-proof
//! doubling maximization, the smoothing-scale schedule, the quadratic slack
//! inequality behind the penalty bookkeeping, decay-rate fitting, local
//! oscillation and operator-deviation functionals, the smoothing stability
//! ladder, and a discrete viscosity-solution check via quadratic test
//! functions.
//!
//! Everything here is diagnostic: the functions measure quantities on grid
//! functions the solver produced (or on coefficient fields directly) and
//! report them with pass flags at stated tolerances.  They never feed back
//! into the solves.

use crate::error::{Error, Result};
use crate::grid::{discrete_jet, holder_norm, GridFunction, NodeId, SpaceTimeGrid, SubGrid};
use crate::jet::Jet;
use crate::mollify::{mollify, mollify_operator, OperatorTable, Probe};
use crate::operators::{gamma_of_kappa, isaacs_eval, EllipticityBounds, IsaacsCoefficients};
use crate::solver::{
    extremal_solution_mollified, BoundaryData, CutoffSide, LadderReport, SchemeConfig,
};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::sync::Arc;

/// Argmax record of the two-point penalized maximization
/// `W(t, x, y) = [u - u_eps](t, x) - [v - u_eps](t, y) - nu K |x - y|^2`.
#[derive(Debug, Clone)]
pub struct DoublingResult {
    pub t_bar: f64,
    pub node_x: NodeId,
    pub node_y: NodeId,
    pub x_bar: Vec<f64>,
    pub y_bar: Vec<f64>,
    pub w_value: f64,
    /// Euclidean distance `|x_bar - y_bar|`.
    pub separation: f64,
    /// Whether the maximizer sits on the spatial rim of the scan window.
    pub x_on_rim: bool,
    pub y_on_rim: bool,
    /// Whether it sits at the latest time level of the window.
    pub t_at_top: bool,
    /// `separation * nu K / M` with `M` the smoothness norm of `u`; the
    /// separation bound predicts this stays of order one along ladders.
    pub penalty_quotient: f64,
}

/// Exhaustive maximization of the doubling functional over all same-time
/// pairs of window nodes.  The window is where `mollify(u, eps)` is
/// defined; the scan is its own oracle (no heuristics are involved).
pub fn doubling_max(
    u: &GridFunction,
    v: &GridFunction,
    eps: f64,
    nu: f64,
    k: f64,
    kappa: f64,
) -> Result<DoublingResult> {
    if !Arc::ptr_eq(u.grid(), v.grid()) {
        return Err(Error::Config(
            "doubling maximization needs both functions on one grid".into(),
        ));
    }
    if !(nu > 0.0) || !(k > 0.0) {
        return Err(Error::Config(format!(
            "penalty parameters must be positive, got nu = {nu}, K = {k}"
        )));
    }
    let grid = u.grid();
    let smoothed = mollify(u, eps)?;
    let window = &smoothed.window;

    // Window nodes are time-major; group the spatial indices per level.
    let mut levels: Vec<(usize, Vec<usize>)> = Vec::new();
    for n in window.nodes() {
        match levels.last_mut() {
            Some((k_t, list)) if *k_t == n.time => list.push(n.space),
            _ => levels.push((n.time, vec![n.space])),
        }
    }

    let nuk = nu * k;
    let best_per_level: Vec<(f64, usize, usize, usize)> = levels
        .par_iter()
        .map(|(k_t, spaces)| {
            let gx: Vec<f64> = spaces
                .iter()
                .map(|&s| {
                    let n = NodeId { time: *k_t, space: s };
                    u.value(n) - smoothed.values.value(n)
                })
                .collect();
            let hy: Vec<f64> = spaces
                .iter()
                .map(|&s| {
                    let n = NodeId { time: *k_t, space: s };
                    v.value(n) - smoothed.values.value(n)
                })
                .collect();
            let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
            for (ix, &sx) in spaces.iter().enumerate() {
                for (iy, &sy) in spaces.iter().enumerate() {
                    let dist2: f64 = grid
                        .coord(sx)
                        .iter()
                        .zip(grid.coord(sy))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    let w = gx[ix] - hy[iy] - nuk * dist2;
                    if w > best.0 {
                        best = (w, sx, sy);
                    }
                }
            }
            (best.0, *k_t, best.1, best.2)
        })
        .collect();

    let mut best = best_per_level
        .first()
        .copied()
        .ok_or_else(|| Error::Domain("empty scan window".into()))?;
    for cand in &best_per_level[1..] {
        if cand.0 > best.0 {
            best = *cand;
        }
    }
    let (w_value, k_t, sx, sy) = best;
    let node_x = NodeId { time: k_t, space: sx };
    let node_y = NodeId { time: k_t, space: sy };
    let separation: f64 = grid
        .coord(sx)
        .iter()
        .zip(grid.coord(sy))
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let m = holder_norm(u, kappa, window)?;
    let top_time = levels.last().expect("nonempty window").0;
    Ok(DoublingResult {
        t_bar: grid.time(k_t),
        node_x,
        node_y,
        x_bar: grid.coord(sx).to_vec(),
        y_bar: grid.coord(sy).to_vec(),
        w_value,
        separation,
        x_on_rim: on_spatial_rim(window, node_x),
        y_on_rim: on_spatial_rim(window, node_y),
        t_at_top: k_t == top_time,
        penalty_quotient: if m > 0.0 { separation * nuk / m } else { 0.0 },
    })
}

fn on_spatial_rim(window: &SubGrid, node: NodeId) -> bool {
    let grid = window.grid();
    (0..grid.dim()).any(|axis| {
        [-1isize, 1].iter().any(|&step| {
            match grid.neighbor(node.space, axis, step) {
                Some(s) => !window.contains(NodeId { time: node.time, space: s }),
                None => true,
            }
        })
    })
}

/// Smoothing scale coupled to the data size and the cutoff level:
/// `eps = eps0 * M^{-1/(kappa-1)} * K^{-(1-gamma)/(2 gamma)}`, where the
/// `K`-exponent equals `(5-kappa)/(14-6 kappa)`.  Along any increasing
/// `K`-ladder the product `eps * M * K^{(kappa-1)/4}` then decreases to
/// zero, which is what the comparison argument needs.
pub fn epsilon_schedule(eps0: f64, m: f64, k: f64, kappa: f64) -> Result<f64> {
    if !(eps0 > 0.0 && eps0 <= 1.0) {
        return Err(Error::Domain(format!("eps0 {eps0} not in (0, 1]")));
    }
    if !(m >= 1.0) {
        return Err(Error::Domain(format!("data norm {m} must be >= 1")));
    }
    if !(k >= 1.0) {
        return Err(Error::Domain(format!("cutoff level {k} must be >= 1")));
    }
    let gamma = gamma_of_kappa(kappa)?;
    let exp_k = (1.0 - gamma) / (2.0 * gamma);
    let exp_m = 1.0 / (kappa - 1.0);
    Ok(eps0 * m.powf(-exp_m) * k.powf(-exp_k))
}

/// The quantity the schedule is built to suppress: `eps * M * K^{(kappa-1)/4}`.
/// Along any increasing ladder with [`epsilon_schedule`]'s `eps` this
/// decreases strictly, so callers can bound it by any fixed constant from
/// some rung onward.
pub fn penalty_product(eps: f64, m: f64, k: f64, kappa: f64) -> Result<f64> {
    if !(kappa > 1.0 && kappa < 2.0) {
        return Err(Error::Domain(format!("kappa {kappa} not in (1, 2)")));
    }
    Ok(eps * m * k.powf((kappa - 1.0) / 4.0))
}

/// One evaluation of the penalty slack inequality
/// `beta alpha - delta alpha^2 / (alpha + 4 nu) <= 2 (nu / delta) beta^2`.
#[derive(Debug, Clone, Copy)]
pub struct SlackCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Check the quadratic slack inequality at one parameter tuple.  Valid for
/// `beta` up to `delta / 2` and `alpha` above the pole at `-4 nu`.
pub fn quadratic_slack_check(beta: f64, alpha: f64, nu: f64, delta: f64) -> Result<SlackCheck> {
    if !(delta > 0.0) || !(nu > 0.0) {
        return Err(Error::Domain(format!(
            "nu and delta must be positive, got ({nu}, {delta})"
        )));
    }
    if !(0.0..=delta / 2.0).contains(&beta) {
        return Err(Error::Domain(format!(
            "beta {beta} outside [0, delta/2] = [0, {}]",
            delta / 2.0
        )));
    }
    if !(alpha >= -4.0 * nu + 1e-9) {
        return Err(Error::Domain(format!(
            "alpha {alpha} too close to the pole at {}",
            -4.0 * nu
        )));
    }
    let lhs = beta * alpha - delta * alpha * alpha / (alpha + 4.0 * nu);
    let rhs = 2.0 * (nu / delta) * beta * beta;
    Ok(SlackCheck {
        lhs,
        rhs,
        pass: lhs <= rhs + 1e-12,
    })
}

/// Where the slack inequality's left side peaks in `alpha` (from setting
/// its derivative to zero): `4 nu (sqrt(delta / (delta - beta)) - 1)`.
pub fn critical_alpha(beta: f64, nu: f64, delta: f64) -> f64 {
    4.0 * nu * ((delta / (delta - beta)).sqrt() - 1.0)
}

/// Log-log least-squares fit of a decay curve.
#[derive(Debug, Clone, Copy)]
pub struct RateFit {
    /// Negated slope: `gap ~ C K^{-exponent}`.
    pub exponent: f64,
    pub r_squared: f64,
}

/// Fit `log gap` against `log K`.  Needs at least three points with
/// positive abscissas and gaps; a perfectly flat curve fits exponent zero
/// with `r^2 = 1`.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::Domain(format!(
            "rate fit needs >= 3 points, got {}",
            points.len()
        )));
    }
    for &(k, gap) in points {
        if !(k > 0.0) || !(gap > 0.0) {
            return Err(Error::Domain(format!(
                "rate fit needs positive entries, got ({k}, {gap})"
            )));
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::Domain("rate fit needs distinct K values".into()));
    }
    let slope = sxy / sxx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let fit = my + slope * (x - mx);
            (y - fit) * (y - fit)
        })
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(RateFit {
        exponent: -slope,
        r_squared,
    })
}

/// Worst local oscillation of an operator field around its own spatial
/// average: for each probe, node center and forward cylinder of radius `r`,
/// the node average of `|F - F_bar|` where `F_bar` averages `F` over the
/// spatial ball per time slice.  Averages are uniform over masked nodes
/// (cylinders clipped at the domain mask and the horizon).
pub fn oscillation_theta(
    field: impl Fn(&DMatrix<f64>, f64, &[f64]) -> f64 + Sync,
    r: f64,
    grid: &Arc<SpaceTimeGrid>,
    probes: &[DMatrix<f64>],
) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::Config("oscillation scan needs at least one probe".into()));
    }
    for p in probes {
        if p.nrows() != grid.dim() || p.ncols() != grid.dim() {
            return Err(Error::Config(format!(
                "probe is {}x{}, grid dimension is {}",
                p.nrows(),
                p.ncols(),
                grid.dim()
            )));
        }
        let frob = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (frob - 1.0).abs() > 1e-8 {
            return Err(Error::Config(format!(
                "probe must have unit Frobenius norm, got {frob}"
            )));
        }
    }
    if !(r >= 2.0 * grid.h()) {
        return Err(Error::Resolution(format!(
            "radius {r} under twice the spacing {}",
            grid.h()
        )));
    }

    let masked: Vec<usize> = (0..grid.n_space()).filter(|&s| grid.is_masked(s)).collect();
    // Spatial balls do not depend on the time level; precompute them.
    let balls: Vec<Vec<usize>> = masked
        .par_iter()
        .map(|&s0| {
            let x0 = grid.coord(s0);
            masked
                .iter()
                .copied()
                .filter(|&s| {
                    let dist2: f64 = grid
                        .coord(s)
                        .iter()
                        .zip(x0)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    dist2 <= r * r * (1.0 + 1e-12)
                })
                .collect()
        })
        .collect();

    let mut worst = 0.0f64;
    for probe in probes {
        // Field values per (level, masked node).
        let vals: Vec<Vec<f64>> = (0..grid.n_time())
            .into_par_iter()
            .map(|k| {
                let t = grid.time(k);
                masked.iter().map(|&s| field(probe, t, grid.coord(s))).collect()
            })
            .collect();
        let idx_of: std::collections::HashMap<usize, usize> =
            masked.iter().enumerate().map(|(i, &s)| (s, i)).collect();

        let theta = (0..grid.n_time())
            .into_par_iter()
            .map(|k0| {
                let t0 = grid.time(k0);
                let k_hi = (0..grid.n_time())
                    .rev()
                    .find(|&k| grid.time(k) <= t0 + r * r + 1e-12)
                    .unwrap_or(k0)
                    .max(k0);
                let mut level_worst = 0.0f64;
                for ball in &balls {
                    let mut total = 0.0;
                    let mut count = 0usize;
                    for k in k0..=k_hi {
                        let slice = &vals[k];
                        let mean = ball
                            .iter()
                            .map(|&s| slice[idx_of[&s]])
                            .sum::<f64>()
                            / ball.len() as f64;
                        for &s in ball {
                            total += (slice[idx_of[&s]] - mean).abs();
                            count += 1;
                        }
                    }
                    level_worst = level_worst.max(total / count as f64);
                }
                level_worst
            })
            .reduce(|| 0.0, f64::max);
        worst = worst.max(theta);
    }
    Ok(worst)
}

/// Nodewise worst deviation between two probe-indexed operator samplers
/// over a window, plus its discrete `L_{d+1}` norm (node volume
/// `tau * h^d`).  The probe set stands in for the `|argument| <= M` ball of
/// the continuum definition; callers choose its density.
pub fn deviation_delta<P: Sync>(
    h_new: impl Fn(&P, f64, &[f64]) -> f64 + Sync,
    h_ref: impl Fn(&P, f64, &[f64]) -> f64 + Sync,
    probes: &[P],
    window: &SubGrid,
) -> Result<(GridFunction, f64)> {
    if probes.is_empty() {
        return Err(Error::Domain("deviation scan needs at least one probe".into()));
    }
    if window.is_empty() {
        return Err(Error::Domain("deviation scan window is empty".into()));
    }
    let grid = window.grid().clone();
    let node_sups: Vec<f64> = window
        .nodes()
        .par_iter()
        .map(|n| {
            let t = grid.time(n.time);
            let x = grid.coord(n.space);
            probes
                .iter()
                .map(|p| (h_new(p, t, x) - h_ref(p, t, x)).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let mut vals = vec![0.0; grid.n_time() * grid.n_space()];
    for (n, &v) in window.nodes().iter().zip(&node_sups) {
        vals[grid.node_index(*n)] = v;
    }
    let d = grid.dim();
    let vol = grid.tau() * grid.h().powi(d as i32);
    let p = (d + 1) as f64;
    let norm = node_sups
        .iter()
        .map(|v| vol * v.powf(p))
        .sum::<f64>()
        .powf(1.0 / p);
    Ok((GridFunction::from_values(&grid, vals)?, norm))
}

/// Cross product of per-pair payoff levels and first-order slot levels,
/// each drawn from `{-m, 0, m}` (dropping to `{-m, m}` when the pair count
/// would make the three-level lattice explode).
pub fn probe_lattice(pairs: usize, dim: usize, m: f64) -> Result<Vec<Probe>> {
    if pairs == 0 {
        return Err(Error::Config("probe lattice needs at least one pair".into()));
    }
    if !(m > 0.0) {
        return Err(Error::Config(format!("probe amplitude {m} must be positive")));
    }
    let three = [-m, 0.0, m];
    let two = [-m, m];
    let xi_levels: &[f64] = if 3usize.pow(pairs as u32) <= 1000 { &three } else { &two };
    if (xi_levels.len() as f64).powi(pairs as i32) > 4096.0 {
        return Err(Error::Config(format!(
            "{pairs} control pairs make the probe lattice too large"
        )));
    }
    let xis = cartesian(xi_levels, pairs);
    let ups = cartesian(&three, dim + 1);
    let mut probes = Vec::with_capacity(xis.len() * ups.len());
    for xi in &xis {
        for up in &ups {
            probes.push(Probe {
                xi: xi.clone(),
                uprime: up.clone(),
            });
        }
    }
    Ok(probes)
}

fn cartesian(levels: &[f64], len: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                levels.iter().map(move |&v| {
                    let mut next = prefix.clone();
                    next.push(v);
                    next
                })
            })
            .collect();
    }
    out
}

/// Outcome of the smoothing stability ladder.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub ns: Vec<u32>,
    /// `sup |v_n - v_{n_max}|` for every n before the last.
    pub deviations: Vec<f64>,
    /// Operator deviation norms per n, all over the coarsest-scale window.
    pub delta_norms: Vec<f64>,
    /// Probe amplitude used for the operator deviations.
    pub m_bound: f64,
    /// Deviations and operator norms both decay along n within 10% slack;
    /// rungs below rounding noise count as decayed.
    pub pass: bool,
    pub ladder: Vec<LadderReport>,
}

/// Solve the extremal problem against lower-order smoothings at scales
/// `1/n` for each `n` in an increasing list, and track two curves: the
/// solution deviation from the finest scale, and the operator deviation
/// norm from [`deviation_delta`] over a shared probe lattice.
#[allow(clippy::too_many_arguments)]
pub fn stability_ladder(
    grid: &Arc<SpaceTimeGrid>,
    coeffs: &IsaacsCoefficients,
    bounds: &EllipticityBounds,
    g: &BoundaryData,
    n_list: &[u32],
    k_ladder: &[f64],
    tol: f64,
    config: &SchemeConfig,
) -> Result<StabilityReport> {
    if n_list.is_empty() {
        return Err(Error::Config("smoothing ladder is empty".into()));
    }
    for w in n_list.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Config("smoothing ladder must be strictly increasing".into()));
        }
    }

    // Amplitude that covers the solution range: data size grown by the
    // source over the horizon and the decay factor.
    let mut g_sup = 0.0f64;
    let mut h_sup = 0.0f64;
    for k in 0..grid.n_time() {
        let t = grid.time(k);
        for s in 0..grid.n_space() {
            if grid.is_masked(s) {
                g_sup = g_sup.max(g.eval(t, grid.coord(s)).abs());
                h_sup = h_sup.max(coeffs.h_bar().eval(t, grid.coord(s)).abs());
            }
        }
    }
    let m_bound = ((g_sup + grid.horizon() * h_sup) * (coeffs.k0() * grid.horizon()).exp()).max(1.0);

    let probes = probe_lattice(coeffs.n_alpha() * coeffs.n_beta(), grid.dim(), m_bound)?;
    let table0 = OperatorTable::sample(coeffs, grid, probes)?;

    // All norms over the coarsest window (the first scale's) so the curve
    // is comparable along the ladder.
    let mut window_min: Option<SubGrid> = None;
    let mut delta_norms = Vec::with_capacity(n_list.len());
    let mut solutions = Vec::with_capacity(n_list.len());
    let mut ladder = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let table_n = mollify_operator(&table0, n)?;
        let window = window_min.get_or_insert_with(|| table_n.window().clone());
        let (_, norm) = deviation_delta(
            |p: &usize, t, x| table_n.values(*p).eval_nearest(t, x),
            |p: &usize, t, x| table0.values(*p).eval_nearest(t, x),
            &(0..table0.probes().len()).collect::<Vec<_>>(),
            window,
        )?;
        delta_norms.push(norm);
        let (v, rep) = extremal_solution_mollified(
            grid,
            coeffs,
            bounds,
            g,
            k_ladder,
            tol,
            CutoffSide::Upper,
            config,
            n,
        )?;
        solutions.push(v);
        ladder.push(rep);
    }

    let finest = solutions.last().expect("nonempty ladder");
    let deviations: Vec<f64> = solutions[..solutions.len() - 1]
        .iter()
        .map(|v| v.sup_diff(finest))
        .collect();
    // A rung that has already hit rounding noise (sups of kernel-weighted
    // sums fluctuate by a few 1e-15 even when the smoothing is an exact
    // no-op) cannot witness growth; only signal-level values must decay.
    let noise = 1e-12;
    let decays = |curve: &[f64]| {
        curve
            .windows(2)
            .all(|w| w[1] <= noise || w[1] <= 1.1 * w[0] + 1e-15)
    };
    let pass = decays(&deviations) && decays(&delta_norms);
    Ok(StabilityReport {
        ns: n_list.to_vec(),
        deviations,
        delta_norms,
        m_bound,
        pass,
        ladder,
    })
}

/// Which side a test function touches the candidate solution from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TouchDirection {
    /// `u - phi` has a max at the center: subsolution-type inequality.
    FromAbove,
    /// `u - phi` has a min at the center: supersolution-type inequality.
    FromBelow,
}

#[derive(Debug, Clone)]
pub struct ViscosityFailure {
    pub node: NodeId,
    pub direction: TouchDirection,
    pub r: f64,
    pub value: f64,
    pub tol: f64,
}

/// Outcome of the quadratic test-function check.
#[derive(Debug, Clone)]
pub struct ViscosityReport {
    pub nodes_checked: usize,
    /// Nodes where no quadratic in the net touched admissibly in either
    /// direction at any radius (trivially passing, but flagged).
    pub nodes_vacuous: usize,
    pub admissible_evals: usize,
    /// Smallest `value + tol` over subsolution evaluations (negative =
    /// failure) and smallest `tol - value` over supersolution ones.
    pub worst_sub_margin: f64,
    pub worst_super_margin: f64,
    pub failures: Vec<ViscosityFailure>,
    pub pass: bool,
}

/// Check the viscosity inequalities at sampled interior nodes through
/// discrete quadratic test functions.
///
/// For each node, radius `r` and candidate `(p, X, q)` drawn from a
/// multiplicative net `{0.5, 1, 2}` around the node's discrete jet and
/// forward time slope, the candidate is admitted when `u - phi` attains a
/// strict discrete max (resp. min) at the node over the forward cylinder
/// `[t0, t0 + r^2] x B_r(x0)`, with strictness margin `eps_probe * (|x -
/// x0|^2 + (t - t0))`.  Admissible maxima must satisfy `q + eps + H(u, p, X
/// + 2 eps I) >= -tol`, minima the mirrored bound, with `tol = c_tol *
/// (h^2/r^2 + r^{kappa-1})`.  Nodes where nothing is admissible are
/// vacuously true and counted separately.
#[allow(clippy::too_many_arguments)]
pub fn viscosity_check(
    u: &GridFunction,
    coeffs: &IsaacsCoefficients,
    nodes: &[NodeId],
    r_ladder: &[f64],
    eps_probe: f64,
    c_tol: f64,
    kappa: f64,
) -> Result<ViscosityReport> {
    let grid = u.grid();
    if nodes.is_empty() || r_ladder.is_empty() {
        return Err(Error::Config("viscosity check needs nodes and radii".into()));
    }
    if !(eps_probe > 0.0) || !(c_tol > 0.0) {
        return Err(Error::Config(format!(
            "eps_probe and c_tol must be positive, got ({eps_probe}, {c_tol})"
        )));
    }
    if !(kappa > 1.0 && kappa < 2.0) {
        return Err(Error::Domain(format!("kappa {kappa} not in (1, 2)")));
    }
    for &r in r_ladder {
        if !(r >= 2.0 * grid.h()) {
            return Err(Error::Resolution(format!(
                "radius {r} under twice the spacing {}",
                grid.h()
            )));
        }
    }
    for &n in nodes {
        if !grid.is_interior(n.space) {
            return Err(Error::BoundaryNode(n));
        }
        if n.time + 1 >= grid.n_time() {
            return Err(Error::Config(format!(
                "node at the terminal level has no forward cylinder: {n:?}"
            )));
        }
    }

    let d = grid.dim();
    let h = grid.h();
    let scales = [0.5, 1.0, 2.0];

    let per_node: Vec<(usize, usize, f64, f64, Vec<ViscosityFailure>)> = nodes
        .par_iter()
        .map(|&node| -> Result<_> {
            let jet = discrete_jet(u, node)?;
            let t0 = grid.time(node.time);
            let x0 = grid.coord(node.space).to_vec();
            let u0 = u.value(node);
            let q0 = (u.value(NodeId { time: node.time + 1, space: node.space }) - u0)
                / grid.tau();

            let p_net = component_net(jet.gradient.as_slice(), &scales);
            let x_net = hessian_net(&jet.hessian, &scales);
            let q_net: Vec<f64> = scales.iter().map(|s| s * q0).collect();

            let mut admissible = 0usize;
            let mut evals = 0usize;
            let mut worst_sub = f64::INFINITY;
            let mut worst_super = f64::INFINITY;
            let mut failures = Vec::new();

            for &r in r_ladder {
                let tol = c_tol * (h * h / (r * r) + r.powf(kappa - 1.0));
                // Forward cylinder: clipped time range and masked ball.
                let k_hi = (node.time..grid.n_time())
                    .take_while(|&k| grid.time(k) <= t0 + r * r + 1e-12)
                    .last()
                    .unwrap_or(node.time);
                let ball: Vec<usize> = (0..grid.n_space())
                    .filter(|&s| {
                        grid.is_masked(s)
                            && grid
                                .coord(s)
                                .iter()
                                .zip(&x0)
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum::<f64>()
                                <= r * r * (1.0 + 1e-12)
                    })
                    .collect();

                for p in &p_net {
                    for x_mat in &x_net {
                        for &q in &q_net {
                            for dir in [TouchDirection::FromAbove, TouchDirection::FromBelow] {
                                if !admits(
                                    u, grid, node, u0, p, x_mat, q, &x0, t0, eps_probe, dir,
                                    node.time, k_hi, &ball,
                                ) {
                                    continue;
                                }
                                admissible += 1;
                                let sign = match dir {
                                    TouchDirection::FromAbove => 1.0,
                                    TouchDirection::FromBelow => -1.0,
                                };
                                let mut x_tilt = x_mat.clone();
                                for i in 0..d {
                                    x_tilt[(i, i)] += sign * 2.0 * eps_probe;
                                }
                                let jet_t = Jet::new(u0, DVector::from_vec(p.clone()), x_tilt)?;
                                let hval = isaacs_eval(coeffs, &jet_t, t0, &x0)?;
                                let value = q + sign * eps_probe + hval;
                                evals += 1;
                                match dir {
                                    TouchDirection::FromAbove => {
                                        worst_sub = worst_sub.min(value + tol);
                                        if value < -tol {
                                            failures.push(ViscosityFailure {
                                                node,
                                                direction: dir,
                                                r,
                                                value,
                                                tol,
                                            });
                                        }
                                    }
                                    TouchDirection::FromBelow => {
                                        worst_super = worst_super.min(tol - value);
                                        if value > tol {
                                            failures.push(ViscosityFailure {
                                                node,
                                                direction: dir,
                                                r,
                                                value,
                                                tol,
                                            });
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            let _ = evals;
            Ok((
                admissible,
                usize::from(admissible == 0),
                worst_sub,
                worst_super,
                failures,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut admissible_evals = 0;
    let mut nodes_vacuous = 0;
    let mut worst_sub_margin = f64::INFINITY;
    let mut worst_super_margin = f64::INFINITY;
    let mut failures = Vec::new();
    for (adm, vac, ws, wsup, mut fails) in per_node {
        admissible_evals += adm;
        nodes_vacuous += vac;
        worst_sub_margin = worst_sub_margin.min(ws);
        worst_super_margin = worst_super_margin.min(wsup);
        failures.append(&mut fails);
    }
    let pass = failures.is_empty() && admissible_evals > 0;
    Ok(ViscosityReport {
        nodes_checked: nodes.len(),
        nodes_vacuous,
        admissible_evals,
        worst_sub_margin,
        worst_super_margin,
        failures,
        pass,
    })
}

/// Multiplicative net around a vector, component by component.
fn component_net(base: &[f64], scales: &[f64]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for &b in base {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                scales.iter().map(move |&s| {
                    let mut next = prefix.clone();
                    next.push(s * b);
                    next
                })
            })
            .collect();
    }
    out
}

/// Multiplicative net over the upper triangle of a symmetric matrix.
fn hessian_net(base: &DMatrix<f64>, scales: &[f64]) -> Vec<DMatrix<f64>> {
    let d = base.nrows();
    let mut upper = Vec::new();
    for i in 0..d {
        for j in i..d {
            upper.push((i, j, base[(i, j)]));
        }
    }
    let mut out = vec![DMatrix::zeros(d, d)];
    for &(i, j, b) in &upper {
        out = out
            .into_iter()
            .flat_map(|m| {
                scales.iter().map(move |&s| {
                    let mut next = m.clone();
                    next[(i, j)] = s * b;
                    next[(j, i)] = s * b;
                    next
                })
            })
            .collect();
    }
    out
}

/// Does `u - phi` attain a strict discrete extremum at the center over the
/// forward cylinder, with margin `eps * (|x - x0|^2 + (t - t0))`?
#[allow(clippy::too_many_arguments)]
fn admits(
    u: &GridFunction,
    grid: &Arc<SpaceTimeGrid>,
    center: NodeId,
    u0: f64,
    p: &[f64],
    x_mat: &DMatrix<f64>,
    q: f64,
    x0: &[f64],
    t0: f64,
    eps: f64,
    dir: TouchDirection,
    k_lo: usize,
    k_hi: usize,
    ball: &[usize],
) -> bool {
    let d = grid.dim();
    for k in k_lo..=k_hi {
        let t = grid.time(k);
        for &s in ball {
            if k == center.time && s == center.space {
                continue;
            }
            let x = grid.coord(s);
            let mut dx = [0.0f64; 3];
            for i in 0..d {
                dx[i] = x[i] - x0[i];
            }
            let mut phi = u0 + q * (t - t0);
            let mut dist2 = 0.0;
            for i in 0..d {
                phi += p[i] * dx[i];
                dist2 += dx[i] * dx[i];
                for j in 0..d {
                    phi += 0.5 * x_mat[(i, j)] * dx[i] * dx[j];
                }
            }
            let margin = eps * (dist2 + (t - t0));
            let diff = u.value(NodeId { time: k, space: s }) - phi;
            let ok = match dir {
                TouchDirection::FromAbove => diff <= -margin,
                TouchDirection::FromBelow => diff >= margin,
            };
            if !ok {
                return false;
            }
        }
    }
    true
}
