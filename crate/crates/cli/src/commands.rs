//! The six experiment commands.  Each returns the process exit code after
//! writing its artifacts; partial results (gap curves, stability ladders)
//! are written even when the run concludes "not converged", so a nonzero
//! exit still leaves evidence behind.

use crate::artifacts::{sig, write_csv, write_manifest, write_solution};
use crate::spec::{CliError, CliResult, Problem};
use isaacs_core::barrier::{find_barrier, verify_barrier};
use isaacs_core::grid::NodeId;
use isaacs_core::harness::{quadratic_slack_check, rate_fit, stability_ladder, viscosity_check};
use isaacs_core::mollify::check_mollifier_estimates;
use isaacs_core::operators::{validate_structure, SampleSet};
use isaacs_core::solver::{
    extremal_solution, solve_cutoff, solve_cutoff_mollified, uniqueness_gap, CutoffSide,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

pub fn run(command: &str, problem: &Problem, out: &Path) -> CliResult<i32> {
    write_manifest(out, command, problem)?;
    match command {
        "solve" => solve(problem, out),
        "extremal" => extremal(problem, out),
        "uniqueness" => uniqueness(problem, out),
        "stability" => stability(problem, out),
        "verify" => verify(problem, out),
        "sweep" => sweep(problem, out),
        other => Err(CliError::Validation(format!("unknown command `{other}`"))),
    }
}

fn solve(problem: &Problem, out: &Path) -> CliResult<i32> {
    let e = &problem.experiment;
    let (u, report) = solve_cutoff(
        &problem.grid,
        problem.coeffs(),
        &problem.bounds,
        &problem.preset.data,
        e.cutoff,
        e.side,
        &e.config,
    )?;
    write_solution(&out.join("solution.csv"), &u)?;
    write_csv(
        &out.join("report.csv"),
        &["k", "tau", "cfl_bound", "max_residual", "steps"],
        &[vec![
            sig(report.k),
            sig(report.tau),
            sig(report.cfl_bound),
            sig(report.max_residual),
            report.steps.to_string(),
        ]],
    )?;
    Ok(0)
}

fn extremal(problem: &Problem, out: &Path) -> CliResult<i32> {
    let e = &problem.experiment;
    let tol = problem.gap_tolerance();
    let mut ladder_rows = Vec::new();
    let mut report_rows = Vec::new();
    let mut all_converged = true;
    for (side, label) in [(CutoffSide::Upper, "upper"), (CutoffSide::Lower, "lower")] {
        let (u, ladder) = extremal_solution(
            &problem.grid,
            problem.coeffs(),
            &problem.bounds,
            &problem.preset.data,
            &e.k_ladder,
            tol,
            side,
            &e.config,
        )?;
        write_solution(&out.join(format!("extremal_{label}.csv")), &u)?;
        for (k, gap) in ladder.ks.iter().zip(&ladder.gaps) {
            ladder_rows.push(vec![label.to_owned(), sig(*k), sig(*gap)]);
        }
        report_rows.push(vec![
            label.to_owned(),
            if ladder.converged { "1" } else { "0" }.to_owned(),
            sig(*ladder.ks.last().expect("ladder never empty")),
        ]);
        all_converged &= ladder.converged;
    }
    write_csv(&out.join("ladder.csv"), &["side", "k", "gap"], &ladder_rows)?;
    write_csv(
        &out.join("extremal_report.csv"),
        &["side", "converged", "final_k"],
        &report_rows,
    )?;
    Ok(if all_converged { 0 } else { 3 })
}

fn uniqueness(problem: &Problem, out: &Path) -> CliResult<i32> {
    let e = &problem.experiment;
    let curve = uniqueness_gap(
        &problem.grid,
        problem.coeffs(),
        &problem.bounds,
        &problem.preset.data,
        &e.k_ladder,
        problem.gap_tolerance(),
        &e.config,
    )?;
    let rows: Vec<Vec<String>> = curve
        .ks
        .iter()
        .zip(&curve.gaps)
        .map(|(k, g)| vec![sig(*k), sig(*g)])
        .collect();
    write_csv(&out.join("gap_curve.csv"), &["k", "gap"], &rows)?;

    // The decay exponent only makes sense on the strictly positive prefix;
    // a curve that collapses immediately reports NaN rather than an error.
    let positive: Vec<(f64, f64)> = curve
        .ks
        .iter()
        .zip(&curve.gaps)
        .take_while(|(_, g)| **g > 0.0)
        .map(|(k, g)| (*k, *g))
        .collect();
    let (exponent, r_squared) = match rate_fit(&positive) {
        Ok(fit) => (fit.exponent, fit.r_squared),
        Err(_) => (f64::NAN, f64::NAN),
    };
    write_csv(
        &out.join("fit.csv"),
        &["exponent", "r_squared", "final_gap", "tolerance", "unique_at_tol"],
        &[vec![
            sig(exponent),
            sig(r_squared),
            sig(curve.final_gap),
            sig(curve.tol),
            if curve.unique_at_tol { "1" } else { "0" }.to_owned(),
        ]],
    )?;
    Ok(if curve.unique_at_tol { 0 } else { 3 })
}

fn stability(problem: &Problem, out: &Path) -> CliResult<i32> {
    let e = &problem.experiment;
    let report = stability_ladder(
        &problem.grid,
        problem.coeffs(),
        &problem.bounds,
        &problem.preset.data,
        &e.n_ladder,
        &e.k_ladder,
        problem.gap_tolerance(),
        &e.config,
    )?;
    // Deviations compare against the finest scale, so they exist for all
    // but the last rung; pad with zero to keep one row per n.
    let mut rows = Vec::new();
    for (i, &n) in report.ns.iter().enumerate() {
        let deviation = report.deviations.get(i).copied().unwrap_or(0.0);
        rows.push(vec![n.to_string(), sig(deviation), sig(report.delta_norms[i])]);
    }
    write_csv(
        &out.join("stability.csv"),
        &["n", "deviation_from_finest", "operator_delta_norm"],
        &rows,
    )?;
    let mut detail = Vec::new();
    for (i, &n) in report.ns.iter().enumerate() {
        for (k, gap) in report.ladder[i].ks.iter().zip(&report.ladder[i].gaps) {
            detail.push(vec![n.to_string(), sig(*k), sig(*gap)]);
        }
    }
    write_csv(&out.join("ladder_detail.csv"), &["n", "k", "gap"], &detail)?;
    write_csv(
        &out.join("summary.csv"),
        &["m_bound", "pass"],
        &[vec![
            sig(report.m_bound),
            if report.pass { "1" } else { "0" }.to_owned(),
        ]],
    )?;
    Ok(if report.pass { 0 } else { 3 })
}

fn verify(problem: &Problem, out: &Path) -> CliResult<i32> {
    let e = &problem.experiment;
    let grid = &problem.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(e.seed);
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut violated = false;
    let push = |rows: &mut Vec<Vec<String>>, check: &str, quantity: &str, value: String| {
        rows.push(vec![check.to_owned(), quantity.to_owned(), value]);
    };

    // -- structural assumptions on random space-time samples ---------------
    let samples = draw_samples(problem, &mut rng);
    let structure =
        validate_structure(problem.coeffs(), &problem.bounds, &problem.constants, &samples)?;
    violated |= !structure.pass();
    push(&mut rows, "structure", "pass", u8::from(structure.pass()).to_string());
    push(&mut rows, "structure", "ellipticity_margin", sig(structure.ellipticity_margin));
    push(&mut rows, "structure", "holder_quotient", sig(structure.holder_quotient));
    push(&mut rows, "structure", "lipschitz_quotient", sig(structure.lipschitz_quotient));
    push(&mut rows, "structure", "growth_slack", sig(structure.growth_slack));
    push(&mut rows, "structure", "monotone_slope", sig(structure.monotone_slope));

    // -- boundary barrier ---------------------------------------------------
    let barrier = find_barrier(grid, problem.bounds.delta_bar(), problem.constants.k0)?;
    let barrier_report =
        verify_barrier(&barrier, grid, problem.bounds.delta_bar(), problem.constants.k0)?;
    violated |= !barrier_report.pass();
    push(&mut rows, "barrier", "pass", u8::from(barrier_report.pass()).to_string());
    push(&mut rows, "barrier", "operator_margin", sig(barrier_report.operator_margin));
    push(&mut rows, "barrier", "psi_min", sig(barrier_report.psi_min));

    // -- mollifier estimates on the solved candidate ------------------------
    let (u, _) = solve_cutoff(
        grid,
        problem.coeffs(),
        &problem.bounds,
        &problem.preset.data,
        e.cutoff,
        e.side,
        &e.config,
    )?;
    // A scale must be coarse enough for the lattice (eps >= 2h) yet small
    // enough that the parabolic support (time width eps^2, space radius
    // eps) leaves a nonempty window inside the cylinder.
    let half_extent = grid
        .box_lo()
        .iter()
        .zip(grid.box_hi())
        .map(|(lo, hi)| 0.5 * (hi - lo))
        .fold(f64::INFINITY, f64::min);
    let resolvable: Vec<f64> = e
        .eps_ladder
        .iter()
        .copied()
        .filter(|eps| {
            *eps >= 2.0 * grid.h() && eps * eps < grid.horizon() && *eps < half_extent
        })
        .collect();
    if resolvable.is_empty() {
        return Err(CliError::Validation(format!(
            "[experiment] eps_ladder: no scale fits (need 2h = {} <= eps, eps^2 < horizon \
             = {}, eps < half-extent = {half_extent})",
            2.0 * grid.h(),
            grid.horizon()
        )));
    }
    let estimates = check_mollifier_estimates(&u, problem.constants.kappa, &resolvable)?;
    for row in &estimates.rows {
        push(&mut rows, "mollifier", &format!("value_ratio_{}", row.eps), sig(row.value_ratio));
        push(
            &mut rows,
            "mollifier",
            &format!("gradient_ratio_{}", row.eps),
            sig(row.gradient_ratio),
        );
    }
    push(&mut rows, "mollifier", "value_sup", sig(estimates.value_sup));
    push(&mut rows, "mollifier", "gradient_sup", sig(estimates.gradient_sup));
    push(&mut rows, "mollifier", "holder_norm", sig(estimates.norm));

    // -- quadratic penalty slack sweep --------------------------------------
    let delta = problem.bounds.delta();
    let (mut tuples, mut violations, mut worst) = (0usize, 0usize, f64::NEG_INFINITY);
    for ib in 0..100 {
        let beta = delta / 2.0 * ib as f64 / 99.0;
        for is in 0..200 {
            let s_max: f64 = 1e3 + 4.0 * e.nu;
            let s = 1e-6 * (s_max / 1e-6).powf(is as f64 / 199.0);
            let check = quadratic_slack_check(beta, s - 4.0 * e.nu, e.nu, delta)?;
            tuples += 1;
            worst = worst.max(check.lhs - check.rhs);
            violations += usize::from(!check.pass);
        }
    }
    violated |= violations > 0;
    push(&mut rows, "slack", "tuples", tuples.to_string());
    push(&mut rows, "slack", "violations", violations.to_string());
    push(&mut rows, "slack", "worst_excess", sig(worst));

    // -- discrete viscosity probes on the same candidate --------------------
    let radii: Vec<f64> = e
        .viscosity_radii
        .iter()
        .copied()
        .filter(|r| *r >= 2.0 * grid.h())
        .collect();
    if radii.is_empty() {
        return Err(CliError::Validation(format!(
            "[experiment] viscosity_radii: no radius is resolvable at h = {} (need r >= 2h)",
            grid.h()
        )));
    }
    let r_max = radii.iter().fold(0.0f64, |a, &b| a.max(b));
    let window = grid
        .shrink_with(grid.tau(), r_max)
        .map_err(|err| CliError::Validation(format!("viscosity sample window: {err}")))?;
    let interior: Vec<NodeId> = window.nodes().to_vec();
    if interior.is_empty() {
        return Err(CliError::Validation(
            "viscosity sample window is empty; reduce viscosity_radii or refine the grid"
                .into(),
        ));
    }
    let nodes: Vec<NodeId> = (0..8)
        .map(|_| interior[rng.random_range(0..interior.len())])
        .collect();
    let visc = viscosity_check(
        &u,
        problem.coeffs(),
        &nodes,
        &radii,
        e.probe_eps,
        e.viscosity_tol,
        problem.constants.kappa,
    )?;
    violated |= !visc.failures.is_empty();
    push(&mut rows, "viscosity", "nodes_checked", visc.nodes_checked.to_string());
    push(&mut rows, "viscosity", "nodes_vacuous", visc.nodes_vacuous.to_string());
    push(&mut rows, "viscosity", "admissible_evals", visc.admissible_evals.to_string());
    push(&mut rows, "viscosity", "failures", visc.failures.len().to_string());
    push(&mut rows, "viscosity", "worst_sub_margin", sig(visc.worst_sub_margin));
    push(&mut rows, "viscosity", "worst_super_margin", sig(visc.worst_super_margin));

    write_csv(&out.join("verify.csv"), &["check", "quantity", "value"], &rows)?;
    Ok(if violated { 4 } else { 0 })
}

fn sweep(problem: &Problem, out: &Path) -> CliResult<i32> {
    let e = &problem.experiment;
    let mut rows = Vec::new();
    for &k in &e.k_ladder {
        let (base, _) = solve_cutoff(
            &problem.grid,
            problem.coeffs(),
            &problem.bounds,
            &problem.preset.data,
            k,
            e.side,
            &e.config,
        )?;
        for &n in &e.n_ladder {
            let (smoothed, report) = solve_cutoff_mollified(
                &problem.grid,
                problem.coeffs(),
                &problem.bounds,
                &problem.preset.data,
                k,
                e.side,
                &e.config,
                n,
            )?;
            rows.push(vec![
                sig(k),
                n.to_string(),
                sig(base.sup_diff(&smoothed)),
                report.steps.to_string(),
            ]);
        }
    }
    write_csv(
        &out.join("sweep.csv"),
        &["k", "n", "smoothing_deviation", "steps"],
        &rows,
    )?;
    Ok(0)
}

/// Random structure probes: space-time points, same-time pairs, and `u'`
/// vectors, all drawn from the seeded generator so reruns agree.
fn draw_samples(problem: &Problem, rng: &mut ChaCha8Rng) -> SampleSet {
    let grid = &problem.grid;
    let masked: Vec<usize> = (0..grid.n_space()).filter(|&s| grid.is_masked(s)).collect();
    let random_point = |rng: &mut ChaCha8Rng| {
        let s = masked[rng.random_range(0..masked.len())];
        let t = grid.time(rng.random_range(0..grid.n_time()));
        (t, grid.coord(s).to_vec())
    };
    let mut points = Vec::new();
    let mut pairs = Vec::new();
    let mut uprime = Vec::new();
    for _ in 0..40 {
        points.push(random_point(rng));
        let (t, x) = random_point(rng);
        let (_, y) = random_point(rng);
        if x != y {
            pairs.push((t, x, y));
        }
        uprime.push(
            (0..=grid.dim())
                .map(|_| rng.random_range(-2.0..2.0))
                .collect(),
        );
    }
    SampleSet { points, pairs, uprime }
}
