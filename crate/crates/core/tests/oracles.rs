//! Cross-implementation oracles: each test recomputes a solver quantity
//! through an independent, deliberately naive route and demands agreement
//! at round-off scale.

use isaacs_core::grid::{GridFunction, NodeId, SpaceTimeGrid};
use isaacs_core::mollify::{mollify, parabolic_weights};
use isaacs_core::presets::{heat_exact, isaacs_2x2, linear_heat};
use isaacs_core::solver::{monotone_step, solve_cutoff, CutoffSide, SchemeConfig};
use isaacs_core::operators::IsaacsCoefficients;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Freezing one control pair turns the game into a linear problem; the
/// game step must equal the elementwise sup over the first index of the
/// inf over the second of the frozen steps.  This exercises the sup-inf
/// reduction against an independent composition of linear solves.
#[test]
fn game_step_is_the_sup_inf_of_frozen_policy_steps() {
    let preset = isaacs_2x2().unwrap();
    let grid =
        SpaceTimeGrid::box_domain(1, &[-1.0], &[1.0], 1.0 / 8.0, 0.05, 2.5e-3).unwrap();
    let config = SchemeConfig::default();
    let c = &preset.coeffs;
    let mut frozen = Vec::new();
    for alpha in 0..c.n_alpha() {
        for beta in 0..c.n_beta() {
            frozen.push(
                IsaacsCoefficients::new(
                    c.dim(),
                    1,
                    1,
                    vec![c.diffusion(alpha, beta).clone()],
                    vec![c.lower(alpha, beta).clone()],
                    c.k0(),
                    c.h_bar().clone(),
                )
                .unwrap(),
            );
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let t_next = grid.tau();
    for _ in 0..20 {
        let u_next: Vec<f64> = (0..grid.n_space())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let full = monotone_step(
            &grid, c, &preset.bounds, &u_next, t_next, 1e12, CutoffSide::Upper, &config,
        )
        .unwrap();
        let per_pair: Vec<Vec<f64>> = frozen
            .iter()
            .map(|cf| {
                monotone_step(
                    &grid, cf, &preset.bounds, &u_next, t_next, 1e12,
                    CutoffSide::Upper, &config,
                )
                .unwrap()
            })
            .collect();
        for s in 0..grid.n_space() {
            let mut best = f64::NEG_INFINITY;
            for alpha in 0..c.n_alpha() {
                let mut worst = f64::INFINITY;
                for beta in 0..c.n_beta() {
                    worst = worst.min(per_pair[alpha * c.n_beta() + beta][s]);
                }
                best = best.max(worst);
            }
            assert!(
                (full[s] - best).abs() <= 1e-11,
                "node {s}: game step {} vs frozen sup-inf {}",
                full[s],
                best
            );
        }
    }
}

/// The degenerate one-pair heat problem admits a three-line reference
/// implementation of the whole backward sweep; the production solver must
/// reproduce it bit-for-bit up to accumulated round-off.
#[test]
fn heat_solve_matches_a_handwritten_explicit_sweep() {
    let preset = linear_heat().unwrap();
    let n = 16usize;
    let h = std::f64::consts::PI / n as f64;
    let steps = (6.0 / (h * h)).ceil() as usize;
    let tau = 1.0 / steps as f64;
    let grid =
        SpaceTimeGrid::box_domain(1, &[0.0], &[std::f64::consts::PI], h, 1.0, tau).unwrap();
    let (u, _) = solve_cutoff(
        &grid,
        &preset.coeffs,
        &preset.bounds,
        &preset.data,
        1e12,
        CutoffSide::Upper,
        &SchemeConfig::default(),
    )
    .unwrap();

    let ns = grid.n_space();
    let nt = grid.n_time();
    let mut reference = vec![0.0f64; ns * nt];
    for s in 0..ns {
        reference[(nt - 1) * ns + s] = heat_exact(1.0, grid.coord(s));
    }
    for k in (0..nt - 1).rev() {
        let t = grid.time(k);
        for s in 0..ns {
            let x = grid.coord(s);
            reference[k * ns + s] = if s == 0 || s == ns - 1 {
                heat_exact(t, x)
            } else {
                let (lo, mid, hi) = (
                    reference[(k + 1) * ns + s - 1],
                    reference[(k + 1) * ns + s],
                    reference[(k + 1) * ns + s + 1],
                );
                mid + tau * (lo - 2.0 * mid + hi) / (h * h)
            };
        }
    }
    for (i, (&got, &want)) in u.values().iter().zip(&reference).enumerate() {
        assert!(
            (got - want).abs() <= 1e-12,
            "node {i}: solver {got} vs reference {want}"
        );
    }
}

/// Applying the kernel table by hand at a few nodes checks that the
/// published entry offsets mean what they say: `dt` steps forward in time,
/// `dx` in grid increments, weights already normalized.
#[test]
fn mollification_matches_direct_summation_over_kernel_entries() {
    let grid =
        SpaceTimeGrid::box_domain(1, &[-1.0], &[1.0], 1.0 / 16.0, 0.5, 1.0 / 64.0).unwrap();
    let u = GridFunction::from_fn(&grid, |t, x| (3.0 * x[0]).sin() + 0.5 * t * x[0]).unwrap();
    let eps = 0.25;
    let smoothed = mollify(&u, eps).unwrap();
    let weights = parabolic_weights(grid.dim(), grid.h(), grid.tau(), eps).unwrap();
    let probe_nodes: Vec<NodeId> = smoothed
        .window
        .nodes()
        .iter()
        .step_by(smoothed.window.nodes().len() / 5)
        .copied()
        .collect();
    for node in probe_nodes {
        let mut acc = 0.0;
        for entry in weights.entries() {
            let mut s = node.space;
            let mut inside = true;
            for (axis, &off) in entry.dx.iter().enumerate() {
                match offset_space(&grid, s, axis, off) {
                    Some(next) => s = next,
                    None => {
                        inside = false;
                        break;
                    }
                }
            }
            assert!(inside, "kernel left the grid at a window node");
            acc += entry.weight
                * u.value(NodeId { time: node.time + entry.dt, space: s });
        }
        let got = smoothed.values.value(node);
        assert!(
            (got - acc).abs() <= 1e-13,
            "node {node:?}: mollify {got} vs direct sum {acc}"
        );
    }
}

fn offset_space(grid: &Arc<SpaceTimeGrid>, s: usize, axis: usize, off: isize) -> Option<usize> {
    let mut cur = s;
    let step: isize = if off >= 0 { 1 } else { -1 };
    for _ in 0..off.unsigned_abs() {
        cur = grid.neighbor(cur, axis, step)?;
    }
    Some(cur)
}
