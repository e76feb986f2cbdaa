//! End-to-end acceptance gates for the workbench, one test per criterion.
//!
//! Each test prints a single `PASS`/`FAIL` line (visible under
//! `cargo test --test acceptance -- --nocapture`) with the measured
//! quantities, then asserts.  Randomized gates draw from fixed seeds so
//! reruns are bit-identical.

use isaacs_core::barrier::{find_barrier, verify_barrier};
use isaacs_core::grid::{GridFunction, NodeId, SpaceTimeGrid};
use isaacs_core::harness::{
    quadratic_slack_check, rate_fit, stability_ladder, viscosity_check,
};
use isaacs_core::mollify::{
    check_mollifier_estimates, isotropic_weights, mollify, parabolic_weights,
};
use isaacs_core::operators::{exp_transform, pucci_max};
use isaacs_core::presets::{heat_exact, isaacs_2x2, isaacs_holder, linear_heat, measurable_f};
use isaacs_core::solver::{
    solve_cutoff, uniqueness_gap, BoundaryData, CutoffSide, SchemeConfig,
};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use std::time::Instant;

fn verdict(idx: usize, name: &str, pass: bool, details: &str) {
    println!(
        "[{idx:>2}/11] {name:<26} {}  {details}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{name}: {details}");
}

fn nodewise_leq(a: &GridFunction, b: &GridFunction, slack: f64) -> bool {
    a.values().iter().zip(b.values()).all(|(x, y)| *x <= y + slack)
}

// ---------------------------------------------------------------- 1 ----

fn random_symmetric(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = rng.random_range(-5.0..5.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Random diffusion with spectrum inside `[delta_bar, 1/delta_bar]`:
/// a rotation conjugating a random admissible diagonal.
fn random_band_matrix(rng: &mut ChaCha8Rng, d: usize, delta_bar: f64) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let q = raw.qr().q();
    let diag = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            rng.random_range(delta_bar..=1.0 / delta_bar)
        } else {
            0.0
        }
    });
    let a = &q * diag * q.transpose();
    (&a + a.transpose()) * 0.5
}

#[test]
fn pucci_closed_form_dominates_and_is_attained() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut samples = 0usize;
    let mut worst_dominance = f64::NEG_INFINITY; // tr(a m) - P, needs <= tol
    let mut worst_attain = 0.0f64;
    for i in 0..200 {
        let d = 1 + i % 3;
        let m = random_symmetric(&mut rng, d);
        for &delta_bar in &[0.2, 0.5] {
            let p = pucci_max(&m, delta_bar).unwrap();
            for _ in 0..250 {
                let a = random_band_matrix(&mut rng, d, delta_bar);
                let trace = (&a * &m).trace();
                worst_dominance = worst_dominance.max(trace - p);
                samples += 1;
            }
            // The eigenbasis maximizer attains the closed form.
            let eig = SymmetricEigen::new(m.clone());
            let coeff = DMatrix::from_fn(d, d, |i, j| {
                if i == j {
                    if eig.eigenvalues[i] > 0.0 { 1.0 / delta_bar } else { delta_bar }
                } else {
                    0.0
                }
            });
            let a_star = &eig.eigenvectors * coeff * eig.eigenvectors.transpose();
            worst_attain = worst_attain.max(((&a_star * &m).trace() - p).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = samples == 100_000
        && worst_dominance <= 1e-10
        && worst_attain <= 1e-10
        && elapsed.as_secs_f64() <= 30.0;
    verdict(
        1,
        "pucci-closed-form",
        pass,
        &format!(
            "1e5 band samples, worst dominance slack {worst_dominance:.2e}, \
             attainment gap {worst_attain:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- 2 ----

fn heat_grid(n: usize) -> Arc<SpaceTimeGrid> {
    let h = std::f64::consts::PI / n as f64;
    let m = (6.0 / (h * h)).ceil();
    SpaceTimeGrid::box_domain(1, &[0.0], &[std::f64::consts::PI], h, 1.0, 1.0 / m).unwrap()
}

#[test]
fn manufactured_heat_converges_at_second_order() {
    let start = Instant::now();
    let preset = linear_heat().unwrap();
    let config = SchemeConfig::default();
    let mut errors = Vec::new();
    for &n in &[32usize, 64, 128] {
        let grid = heat_grid(n);
        let (u, _) = solve_cutoff(
            &grid,
            &preset.coeffs,
            &preset.bounds,
            &preset.data,
            1e12,
            CutoffSide::Upper,
            &config,
        )
        .unwrap();
        let exact = GridFunction::from_fn(&grid, heat_exact).unwrap();
        errors.push((n as f64, u.sup_diff(&exact)));
    }
    let fit = rate_fit(&errors).unwrap();
    let finest = errors.last().unwrap().1;
    let elapsed = start.elapsed();
    let pass = fit.exponent >= 1.8 && finest <= 5e-4 && elapsed.as_secs_f64() <= 60.0;
    verdict(
        2,
        "manufactured-heat",
        pass,
        &format!(
            "sup errors {:.3e}/{:.3e}/{:.3e}, order {:.2}, {:.1}s",
            errors[0].1,
            errors[1].1,
            errors[2].1,
            fit.exponent,
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- 3 ----

#[test]
fn cutoff_solutions_are_ordered_along_the_ladder() {
    let preset = isaacs_2x2().unwrap();
    let grid =
        SpaceTimeGrid::box_domain(1, &[-1.0], &[1.0], 1.0 / 16.0, 0.08, 6.25e-4).unwrap();
    let config = SchemeConfig::default();
    let ladder: Vec<f64> = (0..9).map(|i| 2f64.powi(i)).collect();
    let mut uppers = Vec::new();
    let mut lowers = Vec::new();
    for &k in &ladder {
        let (up, _) = solve_cutoff(
            &grid, &preset.coeffs, &preset.bounds, &preset.data, k,
            CutoffSide::Upper, &config,
        )
        .unwrap();
        let (lo, _) = solve_cutoff(
            &grid, &preset.coeffs, &preset.bounds, &preset.data, k,
            CutoffSide::Lower, &config,
        )
        .unwrap();
        uppers.push(up);
        lowers.push(lo);
    }
    let slack = 1e-12;
    let mut pass = true;
    for i in 0..ladder.len() {
        pass &= nodewise_leq(&lowers[i], &uppers[i], slack);
        if i + 1 < ladder.len() {
            pass &= nodewise_leq(&uppers[i + 1], &uppers[i], slack);
            pass &= nodewise_leq(&lowers[i], &lowers[i + 1], slack);
        }
    }
    let final_gap = uppers.last().unwrap().sup_diff(lowers.last().unwrap());
    verdict(
        3,
        "cutoff-orderings",
        pass,
        &format!(
            "K in 1..=256: side order, upper drops, lower rises (slack {slack:.0e}); \
             final gap {final_gap:.2e}"
        ),
    );
}

// ---------------------------------------------------------------- 4 ----

fn holder_grid() -> Arc<SpaceTimeGrid> {
    SpaceTimeGrid::box_domain(1, &[-1.0], &[1.0], 1.0 / 32.0, 0.05, 0.05 / 300.0).unwrap()
}

#[test]
fn uniqueness_gap_decays_along_the_ladder() {
    let preset = isaacs_holder(1.5).unwrap();
    let grid = holder_grid();
    let scheme_tol = 2.0 * (grid.h() * grid.h() + grid.tau());
    let ladder: Vec<f64> = (0..9).map(|i| 2f64.powi(i)).collect();
    let curve = uniqueness_gap(
        &grid,
        &preset.coeffs,
        &preset.bounds,
        &preset.data,
        &ladder,
        10.0 * scheme_tol,
        &SchemeConfig::default(),
    )
    .unwrap();
    let monotone = curve
        .gaps
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-10);
    let positive: Vec<(f64, f64)> = curve
        .ks
        .iter()
        .zip(&curve.gaps)
        .take_while(|(_, g)| **g > 0.0)
        .map(|(k, g)| (*k, *g))
        .collect();
    let fit = rate_fit(&positive).unwrap();
    let pass =
        monotone && curve.unique_at_tol && fit.exponent > 0.0 && fit.r_squared >= 0.9;
    verdict(
        4,
        "uniqueness-gap",
        pass,
        &format!(
            "gaps {:?} (tol {:.2e}); fit p = {:.3}, r2 = {:.3} over {} rungs",
            curve
                .gaps
                .iter()
                .map(|g| format!("{g:.1e}"))
                .collect::<Vec<_>>(),
            10.0 * scheme_tol,
            fit.exponent,
            fit.r_squared,
            positive.len()
        ),
    );
}

// ---------------------------------------------------------------- 5 ----

#[test]
fn penalty_slack_sweep_has_no_violations() {
    let start = Instant::now();
    let mut tuples = 0usize;
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for &nu in &[0.1, 0.25, 0.5] {
        for &delta in &[0.5, 1.0] {
            for ib in 0..100 {
                let beta = delta / 2.0 * ib as f64 / 99.0;
                for is in 0..200 {
                    let s_max: f64 = 1e3 + 4.0 * nu;
                    let s = 1e-6 * (s_max / 1e-6).powf(is as f64 / 199.0);
                    let alpha = s - 4.0 * nu;
                    let check = quadratic_slack_check(beta, alpha, nu, delta).unwrap();
                    tuples += 1;
                    worst = worst.max(check.lhs - check.rhs);
                    if !check.pass {
                        violations += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = tuples >= 100_000 && violations == 0 && elapsed.as_secs_f64() <= 10.0;
    verdict(
        5,
        "penalty-slack-sweep",
        pass,
        &format!(
            "{tuples} tuples, {violations} violations, sup(lhs-rhs) = {worst:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- 6 ----

#[test]
fn barriers_verify_on_interval_and_disc() {
    let interval =
        SpaceTimeGrid::box_domain(1, &[-1.0], &[1.0], 1.0 / 32.0, 0.1, 0.01).unwrap();
    let disc = SpaceTimeGrid::disc_domain(
        2,
        &[-1.1, -1.1],
        &[1.1, 1.1],
        0.1,
        0.1,
        0.01,
        &[0.0, 0.0],
        1.0,
    )
    .unwrap();
    let mut pass = true;
    let mut worst_margin = f64::NEG_INFINITY;
    for grid in [&interval, &disc] {
        for &delta_bar in &[0.1, 0.5, 1.0] {
            for &k0 in &[0.0, 1.0, 10.0] {
                let barrier = find_barrier(grid, delta_bar, k0).unwrap();
                let report = verify_barrier(&barrier, grid, delta_bar, k0).unwrap();
                pass &= report.pass();
                worst_margin = worst_margin.max(report.operator_margin);
            }
        }
    }
    verdict(
        6,
        "boundary-barrier",
        pass,
        &format!("18 domain/ellipticity/growth combos, worst margin {worst_margin:.3}"),
    );
}

// ---------------------------------------------------------------- 7 ----

#[test]
fn mollifier_mass_reproduction_and_ratio_stability() {
    let grid =
        SpaceTimeGrid::box_domain(1, &[-1.0], &[1.0], 1.0 / 64.0, 0.2, 1.0 / 320.0).unwrap();
    // Unit mass at every scale, both kernel families, both dimensions.
    let mut mass_defect = 0.0f64;
    for &eps in &[0.1, 0.2, 0.4] {
        let w = parabolic_weights(1, grid.h(), grid.tau(), eps).unwrap();
        mass_defect = mass_defect.max((w.mass() - 1.0).abs());
        let w2 = parabolic_weights(2, 0.05, 1e-3, eps).unwrap();
        mass_defect = mass_defect.max((w2.mass() - 1.0).abs());
    }
    for n in [2u32, 4, 8, 16] {
        let w = isotropic_weights(1, grid.h(), grid.tau(), n).unwrap();
        mass_defect = mass_defect.max((w.mass() - 1.0).abs());
    }

    // Constants and affine data come back exactly on the window.
    let affine = GridFunction::from_fn(&grid, |_, x| 0.3 - 1.7 * x[0]).unwrap();
    let smoothed = mollify(&affine, 0.2).unwrap();
    let mut affine_defect = 0.0f64;
    for &node in smoothed.window.nodes() {
        affine_defect =
            affine_defect.max((smoothed.values.value(node) - affine.value(node)).abs());
    }

    // Smoothing-estimate ratios stay within a fixed factor along a ladder.
    let u = GridFunction::from_fn(&grid, |_, x| x[0].abs().powf(1.5)).unwrap();
    let est = check_mollifier_estimates(&u, 1.5, &[0.1, 0.2, 0.4]).unwrap();
    let vals: Vec<f64> = est.rows.iter().map(|r| r.value_ratio).collect();
    let grads: Vec<f64> = est.rows.iter().map(|r| r.gradient_ratio).collect();
    let spread = |v: &[f64]| {
        let lo = v.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let hi = v.iter().fold(0.0f64, |a, &b| a.max(b));
        hi / lo
    };
    let pass = mass_defect <= 1e-10
        && affine_defect <= 1e-12
        && vals.iter().all(|v| *v > 0.0)
        && spread(&vals) <= 3.0
        && spread(&grads) <= 3.0;
    verdict(
        7,
        "mollifier-estimates",
        pass,
        &format!(
            "mass defect {mass_defect:.1e}, affine defect {affine_defect:.1e}, \
             ratio spreads {:.2} / {:.2}",
            spread(&vals),
            spread(&grads)
        ),
    );
}

// ---------------------------------------------------------------- 8 ----

#[test]
fn smoothing_stability_ladder_decays() {
    let start = Instant::now();
    let preset = measurable_f().unwrap();
    let grid =
        SpaceTimeGrid::box_domain(1, &[-1.0], &[1.0], 1.0 / 32.0, 0.0252, 4e-4).unwrap();
    let scheme_tol = 2.0 * (grid.h() * grid.h() + grid.tau());
    let report = stability_ladder(
        &grid,
        &preset.coeffs,
        &preset.bounds,
        &preset.data,
        &[2, 4, 8, 16],
        &[1.0, 2.0, 4.0],
        1e-6,
        &SchemeConfig::default(),
    )
    .unwrap();
    let final_dev = *report.deviations.last().unwrap();
    let elapsed = start.elapsed();
    let pass =
        report.pass && final_dev <= 20.0 * scheme_tol && elapsed.as_secs_f64() <= 300.0;
    verdict(
        8,
        "smoothing-stability",
        pass,
        &format!(
            "deviations {:?}, operator norms {:?}, final dev {final_dev:.2e} \
             vs {:.2e}, {:.1}s",
            report
                .deviations
                .iter()
                .map(|v| format!("{v:.2e}"))
                .collect::<Vec<_>>(),
            report
                .delta_norms
                .iter()
                .map(|v| format!("{v:.2e}"))
                .collect::<Vec<_>>(),
            20.0 * scheme_tol,
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- 9 ----

#[test]
fn comparison_principle_holds_for_random_ordered_data() {
    let preset = isaacs_2x2().unwrap();
    let grid =
        SpaceTimeGrid::box_domain(1, &[-1.0], &[1.0], 1.0 / 8.0, 0.05, 2.5e-3).unwrap();
    let config = SchemeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut pass = true;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..50 {
        let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r0 = rng.random_range(0.0..0.5);
        let r1 = rng.random_range(0.0..0.5);
        let (c0, c1, c2, c3) = (c[0], c[1], c[2], c[3]);
        let g1 = BoundaryData::from_fn(move |_, x: &[f64]| {
            c0 + c1 * x[0] + c2 * (3.0 * x[0]).sin() + c3 * x[0] * x[0]
        });
        let g2 = BoundaryData::from_fn(move |_, x: &[f64]| {
            c0 + c1 * x[0]
                + c2 * (3.0 * x[0]).sin()
                + c3 * x[0] * x[0]
                + r0
                + 0.5 * r1 * (1.0 + (2.0 * x[0]).sin())
        });
        let (u1, _) = solve_cutoff(
            &grid, &preset.coeffs, &preset.bounds, &g1, 4.0, CutoffSide::Upper, &config,
        )
        .unwrap();
        let (u2, _) = solve_cutoff(
            &grid, &preset.coeffs, &preset.bounds, &g2, 4.0, CutoffSide::Upper, &config,
        )
        .unwrap();
        for (a, b) in u1.values().iter().zip(u2.values()) {
            worst = worst.max(a - b);
        }
        pass &= nodewise_leq(&u1, &u2, 1e-12);
    }
    verdict(
        9,
        "comparison-principle",
        pass,
        &format!("50 ordered data pairs, worst excess {worst:.2e}"),
    );
}

// --------------------------------------------------------------- 10 ----

#[test]
fn exponential_transform_commutes_with_solving() {
    let preset = linear_heat().unwrap();
    let grid = heat_grid(32);
    let config = SchemeConfig::default();
    let c = preset.coeffs.k0() + 1.0;
    let (u, _) = solve_cutoff(
        &grid, &preset.coeffs, &preset.bounds, &preset.data, 1e12,
        CutoffSide::Upper, &config,
    )
    .unwrap();
    let transformed = exp_transform(&preset.coeffs, c).unwrap();
    let lifted_data = BoundaryData::from_fn(move |t, x: &[f64]| (c * t).exp() * heat_exact(t, x));
    let (w, _) = solve_cutoff(
        &grid, &transformed, &preset.bounds, &lifted_data, 1e12,
        CutoffSide::Upper, &config,
    )
    .unwrap();
    let pulled = {
        let g = grid.clone();
        w.map(|node: NodeId, v| (-c * g.time(node.time)).exp() * v).unwrap()
    };
    let dev = pulled.sup_diff(&u);
    let tol = 3.0 * (grid.h() * grid.h() + grid.tau());
    let pass = dev <= tol;
    verdict(
        10,
        "exponential-transform",
        pass,
        &format!("pullback deviation {dev:.2e} vs {tol:.2e} (c = {c})"),
    );
}

// --------------------------------------------------------------- 11 ----

#[test]
fn final_ladder_solution_passes_viscosity_probes() {
    let preset = isaacs_holder(1.5).unwrap();
    let grid = holder_grid();
    let (u, _) = solve_cutoff(
        &grid,
        &preset.coeffs,
        &preset.bounds,
        &preset.data,
        256.0,
        CutoffSide::Upper,
        &SchemeConfig::default(),
    )
    .unwrap();
    // Mid-to-late interior nodes away from the piecewise-constant source's
    // kink at x = 0, where the solution is locally flat enough that no
    // strict touching candidate exists (vacuously true, but uninformative).
    let nodes: Vec<NodeId> = [150usize, 225]
        .iter()
        .flat_map(|&k| {
            [8usize, 24, 36, 40, 48]
                .iter()
                .map(move |&s| NodeId { time: k, space: s })
        })
        .collect();
    let report = viscosity_check(&u, &preset.coeffs, &nodes, &[0.2, 0.4], 1e-6, 10.0, 1.5)
        .unwrap();
    let pass = report.pass && report.nodes_vacuous == 0;
    verdict(
        11,
        "viscosity-probes",
        pass,
        &format!(
            "{} nodes, {} admissible touches, {} vacuous, margins sub {:.2} / super {:.2}, \
             {} failures",
            report.nodes_checked,
            report.admissible_evals,
            report.nodes_vacuous,
            report.worst_sub_margin,
            report.worst_super_margin,
            report.failures.len()
        ),
    );
}
