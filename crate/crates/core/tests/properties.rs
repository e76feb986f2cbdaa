//! Property-based invariants: order preservation, homogeneity, and
//! domain-wide inequalities that must hold for *every* admissible input,
//! not just the worked examples.

use isaacs_core::grid::{holder_norm, GridFunction, SpaceTimeGrid};
use isaacs_core::harness::{epsilon_schedule, quadratic_slack_check, rate_fit};
use isaacs_core::mollify::mollify;
use isaacs_core::operators::pucci_max;
use isaacs_core::presets::isaacs_2x2;
use isaacs_core::solver::{monotone_step, CutoffSide, SchemeConfig};
use nalgebra::DMatrix;
use proptest::prelude::*;
use std::sync::Arc;

fn sym_from(entries: &[f64], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut it = entries.iter();
    for i in 0..d {
        for j in i..d {
            let v = *it.next().unwrap();
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Spectrum in `[delta_bar, 1/delta_bar]` via a QR rotation of a diagonal.
fn band_member(rot: &[f64], eigs: &[f64], d: usize, delta_bar: f64) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(d, d, |i, j| rot[i * d + j]);
    let q = raw.qr().q();
    let diag = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            delta_bar + (1.0 / delta_bar - delta_bar) * eigs[i]
        } else {
            0.0
        }
    });
    let a = &q * diag * q.transpose();
    (&a + a.transpose()) * 0.5
}

proptest! {
    #[test]
    fn pucci_dominates_every_band_member(
        d in 1usize..=3,
        entries in prop::collection::vec(-5.0f64..5.0, 6),
        rot in prop::collection::vec(-1.0f64..1.0, 9),
        eigs in prop::collection::vec(0.0f64..=1.0, 3),
        delta_bar in 0.1f64..=1.0,
    ) {
        let m = sym_from(&entries, d);
        // Degenerate rotations (near-singular raw matrices) still give an
        // orthogonal Q from QR, possibly with sign flips; that is fine.
        let a = band_member(&rot, &eigs, d, delta_bar);
        let p = pucci_max(&m, delta_bar).unwrap();
        prop_assert!((&a * &m).trace() <= p + 1e-9);
    }

    #[test]
    fn pucci_is_positively_homogeneous(
        d in 1usize..=3,
        entries in prop::collection::vec(-5.0f64..5.0, 6),
        c in 0.0f64..10.0,
        delta_bar in 0.1f64..=1.0,
    ) {
        let m = sym_from(&entries, d);
        let lhs = pucci_max(&(&m * c), delta_bar).unwrap();
        let rhs = c * pucci_max(&m, delta_bar).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
    }

    #[test]
    fn pucci_is_monotone_in_the_matrix_order(
        d in 1usize..=3,
        entries in prop::collection::vec(-5.0f64..5.0, 6),
        bump in prop::collection::vec(-2.0f64..2.0, 9),
        delta_bar in 0.1f64..=1.0,
    ) {
        let m = sym_from(&entries, d);
        let b = DMatrix::from_fn(d, d, |i, j| bump[i * d + j]);
        let larger = &m + b.transpose() * &b;
        prop_assert!(
            pucci_max(&larger, delta_bar).unwrap()
                >= pucci_max(&m, delta_bar).unwrap() - 1e-9
        );
    }

    #[test]
    fn slack_inequality_has_no_random_counterexample(
        beta_frac in 0.0f64..=1.0,
        alpha_frac in 0.0f64..=1.0,
        nu in 0.05f64..=0.5,
        delta in 0.5f64..=1.0,
    ) {
        let beta = beta_frac * delta / 2.0;
        let alpha = -4.0 * nu + 1e-6 + alpha_frac * (1e3 + 4.0 * nu - 1e-6);
        let check = quadratic_slack_check(beta, alpha, nu, delta).unwrap();
        prop_assert!(check.pass, "lhs {} > rhs {}", check.lhs, check.rhs);
    }

    #[test]
    fn smoothing_schedule_is_monotone_in_both_arguments(
        eps0 in 0.05f64..=1.0,
        m1 in 1.0f64..=1e4,
        m2 in 1.0f64..=1e4,
        k1 in 1.0f64..=1e4,
        k2 in 1.0f64..=1e4,
        kappa in 1.05f64..=1.95,
    ) {
        let (m_lo, m_hi) = (m1.min(m2), m1.max(m2));
        let (k_lo, k_hi) = (k1.min(k2), k1.max(k2));
        let base = epsilon_schedule(eps0, m_lo, k_lo, kappa).unwrap();
        prop_assert!(epsilon_schedule(eps0, m_hi, k_lo, kappa).unwrap() <= base + 1e-15);
        prop_assert!(epsilon_schedule(eps0, m_lo, k_hi, kappa).unwrap() <= base + 1e-15);
    }

    #[test]
    fn rate_fit_recovers_exact_power_laws(
        p in 0.1f64..=3.0,
        c in 0.1f64..=10.0,
    ) {
        let points: Vec<(f64, f64)> =
            [1.0f64, 2.0, 4.0, 8.0].iter().map(|&k| (k, c * k.powf(-p))).collect();
        let fit = rate_fit(&points).unwrap();
        prop_assert!((fit.exponent - p).abs() <= 1e-9);
        prop_assert!(fit.r_squared >= 1.0 - 1e-9);
    }
}

fn norm_grid() -> Arc<SpaceTimeGrid> {
    SpaceTimeGrid::box_domain(1, &[-1.0], &[1.0], 0.25, 0.1, 0.05).unwrap()
}

fn step_grid() -> Arc<SpaceTimeGrid> {
    SpaceTimeGrid::box_domain(1, &[-1.0], &[1.0], 0.25, 0.1, 0.01).unwrap()
}

fn smooth_grid() -> Arc<SpaceTimeGrid> {
    SpaceTimeGrid::box_domain(1, &[-1.0], &[1.0], 0.125, 0.25, 0.0625).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn holder_norm_is_homogeneous_and_subadditive(
        us in prop::collection::vec(-10.0f64..10.0, 27),
        vs in prop::collection::vec(-10.0f64..10.0, 27),
        c in -4.0f64..4.0,
    ) {
        let grid = norm_grid();
        let window = grid.shrink_with(0.0, 0.0).unwrap();
        let u = GridFunction::from_values(&grid, us.clone()).unwrap();
        let v = GridFunction::from_values(&grid, vs.clone()).unwrap();
        let sum = GridFunction::from_values(
            &grid,
            us.iter().zip(&vs).map(|(a, b)| a + b).collect(),
        )
        .unwrap();
        let scaled = u.map(|_, x| c * x).unwrap();
        let (nu, nv) = (
            holder_norm(&u, 1.5, &window).unwrap(),
            holder_norm(&v, 1.5, &window).unwrap(),
        );
        let nsum = holder_norm(&sum, 1.5, &window).unwrap();
        let nscaled = holder_norm(&scaled, 1.5, &window).unwrap();
        prop_assert!(nsum <= nu + nv + 1e-9 * (1.0 + nu + nv));
        prop_assert!((nscaled - c.abs() * nu).abs() <= 1e-9 * (1.0 + nu));
    }

    #[test]
    fn one_step_is_monotone_and_a_shift_contraction(
        us in prop::collection::vec(-1.0f64..1.0, 9),
        bumps in prop::collection::vec(0.0f64..1.0, 9),
        shift in 0.0f64..2.0,
        k in 0.5f64..64.0,
    ) {
        let preset = isaacs_2x2().unwrap();
        let grid = step_grid();
        let config = SchemeConfig::default();
        let t_next = grid.tau();
        let stepped = |vals: &[f64]| {
            monotone_step(
                &grid, &preset.coeffs, &preset.bounds, vals, t_next, k,
                CutoffSide::Upper, &config,
            )
            .unwrap()
        };
        let base = stepped(&us);
        let bumped: Vec<f64> = us.iter().zip(&bumps).map(|(a, b)| a + b).collect();
        for (lo, hi) in base.iter().zip(stepped(&bumped)) {
            prop_assert!(*lo <= hi + 1e-12);
        }
        let shifted: Vec<f64> = us.iter().map(|a| a + shift).collect();
        for (b, s) in base.iter().zip(stepped(&shifted)) {
            prop_assert!(s <= b + shift + 1e-12);
            prop_assert!(s >= *b - 1e-12);
        }
    }

    #[test]
    fn smoothing_preserves_order_and_the_sup_bound(
        us in prop::collection::vec(-5.0f64..5.0, 85),
        bumps in prop::collection::vec(0.0f64..2.0, 85),
    ) {
        let grid = smooth_grid();
        let u = GridFunction::from_values(&grid, us.clone()).unwrap();
        let bumped = GridFunction::from_values(
            &grid,
            us.iter().zip(&bumps).map(|(a, b)| a + b).collect(),
        )
        .unwrap();
        let su = mollify(&u, 0.3).unwrap();
        let sb = mollify(&bumped, 0.3).unwrap();
        let sup = us.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for &node in su.window.nodes() {
            prop_assert!(su.values.value(node) <= sb.values.value(node) + 1e-13);
            prop_assert!(su.values.value(node).abs() <= sup + 1e-13);
        }
    }
}
