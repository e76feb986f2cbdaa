//! Convolution smoothing on the space-time lattice.
//!
//! One bump shape drives two rescalings: the *parabolic* one
//! `eps^{-d-2} zeta(t / eps^2, x / eps)` smooths grid functions, the
//! *isotropic* one `n^{d+1} zeta(n t, n x)` smooths operator samples in
//! `(t, x)`.  The kernel lives on `(-1, 0) x B_1` in `(t, x)`: its time
//! support sits *behind* the evaluation point, so the convolution
//! `u^(eps)(z) = sum_w u(z - w) zeta_eps(w)` reads values at **later**
//! times (toward the terminal slice where data is prescribed).  Results are
//! therefore defined on a window shrunk away from the terminal time and the
//! lateral boundary, and nowhere else; outside the window the returned
//! field simply copies its input.
//!
//! Lattice weights are renormalized to unit sum at every scale, which makes
//! reproduction of constants (and, by the symmetric spatial enumeration, of
//! spatially affine functions) exact rather than quadrature-accurate.

use crate::error::{Error, Result};
use crate::grid::{GridFunction, NodeId, SpaceTimeGrid, SubGrid};
use crate::operators::IsaacsCoefficients;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::sync::Arc;

/// Smooth bump on `(-1, 0) x B_1`, radially symmetric in `x`, positive
/// inside its support and identically zero outside.  Unnormalized: discrete
/// weight sets built from it renormalize to unit mass themselves.
#[derive(Debug, Clone, Copy)]
pub struct MollifierKernel {
    dim: usize,
}

impl MollifierKernel {
    pub fn new(dim: usize) -> Self {
        MollifierKernel { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `exp(1 / ((2t+1)^2 - 1)) * exp(1 / (|x|^2 - 1))` inside
    /// `(-1, 0) x B_1`, zero elsewhere.  Both exponents tend to minus
    /// infinity at the support boundary, so the bump vanishes smoothly.
    pub fn shape(&self, t: f64, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        if t <= -1.0 || t >= 0.0 {
            return 0.0;
        }
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 >= 1.0 {
            return 0.0;
        }
        let s = 2.0 * t + 1.0;
        (1.0 / (s * s - 1.0)).exp() * (1.0 / (r2 - 1.0)).exp()
    }
}

/// One lattice sample of a scaled kernel: the convolution reads the source
/// at `(t + dt * tau, x + dx * h)`.
#[derive(Debug, Clone)]
pub struct KernelEntry {
    pub dt: usize,
    pub dx: Vec<isize>,
    pub weight: f64,
}

/// Discrete kernel at a fixed scale: weights are nonnegative with unit sum,
/// time offsets point strictly forward (later times) unless collapsed.
#[derive(Debug, Clone)]
pub struct KernelWeights {
    entries: Vec<KernelEntry>,
    time_radius: f64,
    space_radius: f64,
}

impl KernelWeights {
    pub fn entries(&self) -> &[KernelEntry] {
        &self.entries
    }
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    /// Temporal reach of the support (`eps^2` parabolic, `1/n` isotropic).
    pub fn time_radius(&self) -> f64 {
        self.time_radius
    }
    /// Spatial reach of the support (`eps` parabolic, `1/n` isotropic).
    pub fn space_radius(&self) -> f64 {
        self.space_radius
    }

    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum()
    }

    /// `sum_w weight * |dx * h|^2` — the exact shift a quadratic `|x|^2`
    /// picks up under lattice convolution.
    pub fn spatial_second_moment(&self, h: f64) -> f64 {
        self.entries
            .iter()
            .map(|e| {
                let r2: f64 = e.dx.iter().map(|&m| (m as f64 * h).powi(2)).sum();
                e.weight * r2
            })
            .sum()
    }

    /// `sum_w weight * dt * tau` — the exact shift of a function affine in
    /// time (the kernel is one-sided in `t`, so this does not vanish).
    pub fn time_first_moment(&self, tau: f64) -> f64 {
        self.entries
            .iter()
            .map(|e| e.weight * e.dt as f64 * tau)
            .sum()
    }

    /// Merge all time offsets into `dt = 0`, keeping the spatial marginal.
    /// Exact replacement when the convolved data ignores time.
    pub fn collapse_time(&self) -> KernelWeights {
        let mut marginal: BTreeMap<Vec<isize>, f64> = BTreeMap::new();
        for e in &self.entries {
            *marginal.entry(e.dx.clone()).or_insert(0.0) += e.weight;
        }
        KernelWeights {
            entries: marginal
                .into_iter()
                .map(|(dx, weight)| KernelEntry { dt: 0, dx, weight })
                .collect(),
            time_radius: 0.0,
            space_radius: self.space_radius,
        }
    }
}

/// Sample a scaled kernel on the lattice and renormalize.  `time_radius`
/// and `space_radius` are the support extents; time offsets start at one
/// step because the kernel vanishes at `t = 0`.
fn lattice_weights(
    dim: usize,
    h: f64,
    tau: f64,
    time_radius: f64,
    space_radius: f64,
) -> Result<KernelWeights> {
    let kernel = MollifierKernel::new(dim);
    let j_max = (time_radius / tau).ceil() as usize;
    let m_max = (space_radius / h).ceil() as isize;
    let side = (2 * m_max + 1) as usize;
    let cells = side.pow(dim as u32);
    let mut entries = Vec::new();
    let mut m = vec![0isize; dim];
    let mut x_arg = vec![0.0; dim];
    for j in 1..=j_max {
        let t_arg = -(j as f64) * tau / time_radius;
        for lin in 0..cells {
            let mut rem = lin;
            for i in (0..dim).rev() {
                m[i] = (rem % side) as isize - m_max;
                rem /= side;
            }
            for i in 0..dim {
                x_arg[i] = m[i] as f64 * h / space_radius;
            }
            let w = kernel.shape(t_arg, &x_arg);
            if w > 0.0 {
                entries.push(KernelEntry {
                    dt: j,
                    dx: m.clone(),
                    weight: w,
                });
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::Resolution(format!(
            "time step {tau} leaves no lattice samples inside the kernel's \
             time support (radius {time_radius})"
        )));
    }
    let total: f64 = entries.iter().map(|e| e.weight).sum();
    for e in &mut entries {
        e.weight /= total;
    }
    Ok(KernelWeights {
        entries,
        time_radius,
        space_radius,
    })
}

/// Lattice weights of the parabolic rescaling at scale `eps`: spatial reach
/// `eps`, temporal reach `eps^2`.  Needs `eps >= 2h` and at least one time
/// level inside `eps^2`.
pub fn parabolic_weights(dim: usize, h: f64, tau: f64, eps: f64) -> Result<KernelWeights> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("kernel scale {eps} must be positive")));
    }
    if eps < 2.0 * h {
        return Err(Error::Resolution(format!(
            "kernel scale {eps} under-resolved: needs at least two mesh widths (2h = {})",
            2.0 * h
        )));
    }
    lattice_weights(dim, h, tau, eps * eps, eps)
}

/// Lattice weights of the isotropic rescaling at integer scale `n`: both
/// reaches equal `1/n`.  Needs `1/n >= 2h` and a time level inside `1/n`.
pub fn isotropic_weights(dim: usize, h: f64, tau: f64, n: u32) -> Result<KernelWeights> {
    if n == 0 {
        return Err(Error::Domain("kernel scale n must be a positive integer".into()));
    }
    let r = 1.0 / n as f64;
    if r < 2.0 * h {
        return Err(Error::Resolution(format!(
            "kernel scale 1/{n} under-resolved: needs at least two mesh widths (2h = {})",
            2.0 * h
        )));
    }
    lattice_weights(dim, h, tau, r, r)
}

/// Convolve on the given window; everywhere else the result copies `u`.
/// Window membership must guarantee that every kernel sample stays on
/// masked nodes within the time range — violations are reported loudly
/// rather than clamped.
fn convolve(u: &GridFunction, weights: &KernelWeights, window: &SubGrid) -> Result<GridFunction> {
    let grid = u.grid();
    let mut vals = u.values().to_vec();
    let computed = window
        .nodes()
        .par_iter()
        .map(|&node| {
            let mut acc = 0.0;
            for e in weights.entries() {
                let k = node.time + e.dt;
                if k >= grid.n_time() {
                    return Err(Error::Domain(
                        "kernel sample escaped the time range".into(),
                    ));
                }
                let s = grid
                    .offset_by(node.space, &e.dx)
                    .filter(|&s| grid.is_masked(s))
                    .ok_or_else(|| {
                        Error::Domain("kernel sample escaped the domain mask".into())
                    })?;
                acc += e.weight * u.value(NodeId { time: k, space: s });
            }
            Ok((grid.node_index(node), acc))
        })
        .collect::<Result<Vec<_>>>()?;
    for (idx, v) in computed {
        vals[idx] = v;
    }
    GridFunction::from_values(grid, vals)
}

/// A smoothed grid function together with the window where the convolution
/// is actually defined.
#[derive(Debug, Clone)]
pub struct Mollified {
    pub values: GridFunction,
    pub window: SubGrid,
}

/// Parabolic smoothing of a grid function at scale `eps`, defined on the
/// parabolically shrunk window (`t <= T - eps^2`, distance to the domain
/// complement `> eps`).  Weights are a probability vector, so values stay
/// within `[min u, max u]` and constants are reproduced exactly.
pub fn mollify(u: &GridFunction, eps: f64) -> Result<Mollified> {
    let grid = u.grid();
    let weights = parabolic_weights(grid.dim(), grid.h(), grid.tau(), eps)?;
    let window = grid.shrink(eps)?;
    let values = convolve(u, &weights, &window)?;
    Ok(Mollified { values, window })
}

/// A frozen operator argument: per-pair second-order payoffs `xi` (row-major
/// over control pairs) and the first-order slot `u' = (u, Du)`.
#[derive(Debug, Clone)]
pub struct Probe {
    pub xi: Vec<f64>,
    pub uprime: Vec<f64>,
}

/// An operator sampled over probes and lattice nodes: one grid function per
/// probe, meaningful on `window`.
#[derive(Debug, Clone)]
pub struct OperatorTable {
    probes: Vec<Probe>,
    values: Vec<GridFunction>,
    window: SubGrid,
}

impl OperatorTable {
    /// Sample an arbitrary probe-indexed function over the whole lattice.
    pub fn from_fn(
        grid: &Arc<SpaceTimeGrid>,
        probes: Vec<Probe>,
        f: impl Fn(&Probe, f64, &[f64]) -> f64 + Sync,
    ) -> Result<Self> {
        if probes.is_empty() {
            return Err(Error::Config("operator table needs at least one probe".into()));
        }
        let values = probes
            .iter()
            .map(|p| GridFunction::from_fn(grid, |t, x| f(p, t, x)))
            .collect::<Result<Vec<_>>>()?;
        Ok(OperatorTable {
            probes,
            values,
            window: grid.full_window(),
        })
    }

    /// Sample the lower-order envelope of a coefficient family: each probe
    /// pins `(xi, u')` and the table records
    /// `sup_alpha inf_beta [ xi_{alpha beta} + b_{alpha beta}(u', t, x) ]`.
    pub fn sample(
        coeffs: &IsaacsCoefficients,
        grid: &Arc<SpaceTimeGrid>,
        probes: Vec<Probe>,
    ) -> Result<Self> {
        let pairs = coeffs.n_alpha() * coeffs.n_beta();
        for p in &probes {
            if p.xi.len() != pairs || p.uprime.len() != coeffs.dim() + 1 {
                return Err(Error::Config(format!(
                    "probe shape mismatch: expected xi of length {pairs}, u' of length {}",
                    coeffs.dim() + 1
                )));
            }
        }
        OperatorTable::from_fn(grid, probes, |p, t, x| {
            coeffs.envelope(&p.xi, &p.uprime, t, x)
        })
    }

    pub fn grid(&self) -> &Arc<SpaceTimeGrid> {
        self.values[0].grid()
    }
    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }
    pub fn values(&self, probe: usize) -> &GridFunction {
        &self.values[probe]
    }
    pub fn window(&self) -> &SubGrid {
        &self.window
    }
    pub fn value(&self, probe: usize, node: NodeId) -> f64 {
        self.values[probe].value(node)
    }
}

/// Isotropic smoothing of an operator table at integer scale `n`: each
/// probe slice is convolved in `(t, x)` with reach `1/n`, and the result is
/// meaningful on the isotropically shrunk window (`t <= T - 1/n`, distance
/// `> 1/n`).  Being a fixed convex combination per node, the smoothing
/// preserves any per-probe Lipschitz bound and any pointwise monotonicity
/// across probes.
///
/// Tables that carry no time dependence are convolved with the spatial
/// marginal of the kernel instead, which is the identical operation (the
/// time convolution of a time-constant signal is the identity), and the
/// window then keeps every time level.  Short-horizon grids can therefore
/// still smooth at coarse scales when their coefficients ignore time.
pub fn mollify_operator(table: &OperatorTable, n: u32) -> Result<OperatorTable> {
    let grid = table.grid();
    let weights = isotropic_weights(grid.dim(), grid.h(), grid.tau(), n)?;
    let r = 1.0 / n as f64;
    let time_invariant = table.values.iter().all(|gf| {
        let vals = gf.values();
        let first = &vals[..grid.n_space()];
        vals.chunks_exact(grid.n_space()).all(|slice| slice == first)
    });
    let (weights, window) = if time_invariant {
        (weights.collapse_time(), grid.shrink_with(0.0, r)?)
    } else {
        (weights, grid.shrink_with(r, r)?)
    };
    if !window.is_subset_of(table.window()) {
        return Err(Error::Domain(
            "smoothing window exceeds the window where the table is defined".into(),
        ));
    }
    let values = table
        .values
        .iter()
        .map(|gf| convolve(gf, &weights, &window))
        .collect::<Result<Vec<_>>>()?;
    Ok(OperatorTable {
        probes: table.probes.clone(),
        values,
        window,
    })
}

/// Smoothing-estimate ratios at one scale.
#[derive(Debug, Clone, Copy)]
pub struct MollifierRatio {
    pub eps: f64,
    /// `sup |u - u^(eps)| / eps^kappa`, normalized by the Holder norm.
    pub value_ratio: f64,
    /// `sup |Du - Du^(eps)| / eps^(kappa-1)`, normalized likewise.
    pub gradient_ratio: f64,
}

/// Report of [`check_mollifier_estimates`].
#[derive(Debug, Clone)]
pub struct MollifierEstimates {
    pub rows: Vec<MollifierRatio>,
    pub value_sup: f64,
    pub gradient_sup: f64,
    /// The normalizing Holder norm of the input.
    pub norm: f64,
}

/// Measure how the smoothing error scales across a ladder of kernel sizes:
/// for a function with finite Holder-`kappa` norm the normalized ratios
/// should stay bounded by a single constant along the ladder.  Value ratios
/// range over each scale's window; gradient ratios (central differences)
/// over the window nodes whose axis neighbors stay in the window, so that
/// both gradients are built from genuinely smoothed values.
pub fn check_mollifier_estimates(
    u: &GridFunction,
    kappa: f64,
    ladder: &[f64],
) -> Result<MollifierEstimates> {
    if ladder.is_empty() {
        return Err(Error::Config("scale ladder is empty".into()));
    }
    let grid = u.grid();
    let norm = crate::grid::holder_norm(u, kappa, &grid.full_window())?;
    let safe_div = |num: f64, den: f64| if num == 0.0 { 0.0 } else { num / den };
    let mut rows = Vec::with_capacity(ladder.len());
    for &eps in ladder {
        let mol = mollify(u, eps)?;
        let mut dv = 0.0f64;
        let mut dg = 0.0f64;
        let mut any_gradient = false;
        for &node in mol.window.nodes() {
            dv = dv.max((u.value(node) - mol.values.value(node)).abs());
            let mut rim = false;
            for axis in 0..grid.dim() {
                for step in [-1isize, 1] {
                    let s = grid.neighbor(node.space, axis, step).unwrap_or(usize::MAX);
                    if s == usize::MAX || !mol.window.contains(NodeId { time: node.time, space: s })
                    {
                        rim = true;
                    }
                }
            }
            if rim {
                continue;
            }
            any_gradient = true;
            for axis in 0..grid.dim() {
                let sp = grid.neighbor(node.space, axis, 1).unwrap();
                let sm = grid.neighbor(node.space, axis, -1).unwrap();
                let at = |g: &GridFunction, s: usize| g.value(NodeId { time: node.time, space: s });
                let du = (at(u, sp) - at(u, sm)) / (2.0 * grid.h());
                let dm = (at(&mol.values, sp) - at(&mol.values, sm)) / (2.0 * grid.h());
                dg = dg.max((du - dm).abs());
            }
        }
        if !any_gradient {
            return Err(Error::Domain(format!(
                "window at scale {eps} is too thin for gradient ratios"
            )));
        }
        rows.push(MollifierRatio {
            eps,
            value_ratio: safe_div(dv, eps.powf(kappa) * norm),
            gradient_ratio: safe_div(dg, eps.powf(kappa - 1.0) * norm),
        });
    }
    let value_sup = rows.iter().map(|r| r.value_ratio).fold(0.0, f64::max);
    let gradient_sup = rows.iter().map(|r| r.gradient_ratio).fold(0.0, f64::max);
    Ok(MollifierEstimates {
        rows,
        value_sup,
        gradient_sup,
        norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{AffineLower, LowerOrder, MatrixField, ScalarField};
    use nalgebra::DMatrix;

    fn line_grid(h: f64, tau: f64, horizon: f64, lo: f64, hi: f64) -> Arc<SpaceTimeGrid> {
        SpaceTimeGrid::box_domain(1, &[lo], &[hi], h, horizon, tau).unwrap()
    }

    #[test]
    fn kernel_vanishes_outside_support_and_is_positive_inside() {
        let k = MollifierKernel::new(2);
        assert_eq!(k.shape(-1.0, &[0.0, 0.0]), 0.0);
        assert_eq!(k.shape(0.0, &[0.0, 0.0]), 0.0);
        assert_eq!(k.shape(-0.5, &[1.0, 0.0]), 0.0);
        assert_eq!(k.shape(-0.5, &[0.8, 0.8]), 0.0);
        assert_eq!(k.shape(0.3, &[0.0, 0.0]), 0.0);
        assert!(k.shape(-0.5, &[0.0, 0.0]) > 0.0);
        assert!(k.shape(-0.1, &[0.5, 0.3]) > 0.0);
    }

    #[test]
    fn kernel_is_radially_symmetric_in_space() {
        let k = MollifierKernel::new(3);
        let base = k.shape(-0.4, &[0.3, -0.2, 0.5]);
        assert_eq!(base, k.shape(-0.4, &[-0.3, -0.2, 0.5]));
        assert_eq!(base, k.shape(-0.4, &[0.3, 0.2, -0.5]));
        assert_eq!(base, k.shape(-0.4, &[0.5, -0.2, 0.3]));
        assert_eq!(base, k.shape(-0.4, &[-0.2, 0.5, 0.3]));
    }

    #[test]
    fn weights_have_unit_mass_at_every_scale() {
        for eps in [0.1, 0.2, 0.4] {
            let w = parabolic_weights(1, 0.025, 0.002, eps).unwrap();
            assert!((w.mass() - 1.0).abs() < 1e-12);
            assert!(w.entries().iter().all(|e| e.weight >= 0.0));
            assert!(w.entries().iter().all(|e| e.dt >= 1));
        }
        let w = isotropic_weights(2, 0.05, 0.01, 4).unwrap();
        assert!((w.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_reject_unresolved_scales() {
        assert!(matches!(
            parabolic_weights(1, 0.1, 0.01, 0.15),
            Err(Error::Resolution(_))
        ));
        // eps^2 <= tau: no time level fits inside the support.
        assert!(matches!(
            parabolic_weights(1, 0.01, 0.01, 0.05),
            Err(Error::Resolution(_))
        ));
        assert!(matches!(
            isotropic_weights(1, 0.2, 0.01, 4),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn collapse_time_keeps_mass_and_spatial_moments() {
        let w = parabolic_weights(1, 0.025, 0.002, 0.2).unwrap();
        let c = w.collapse_time();
        assert!((c.mass() - 1.0).abs() < 1e-12);
        assert!(c.entries().iter().all(|e| e.dt == 0));
        assert!(
            (c.spatial_second_moment(0.025) - w.spatial_second_moment(0.025)).abs() < 1e-15
        );
        assert_eq!(c.time_first_moment(0.002), 0.0);
    }

    #[test]
    fn mollify_reproduces_constants_and_spatially_affine_fields() {
        let grid = line_grid(1.0 / 32.0, 0.005, 0.2, 0.0, 1.0);
        let c = GridFunction::from_fn(&grid, |_, _| 3.25).unwrap();
        let mc = mollify(&c, 0.125).unwrap();
        for &n in mc.window.nodes() {
            assert!((mc.values.value(n) - 3.25).abs() < 1e-14);
        }
        let a = GridFunction::from_fn(&grid, |_, x| 2.0 - 5.0 * x[0]).unwrap();
        let ma = mollify(&a, 0.125).unwrap();
        for &n in ma.window.nodes() {
            assert!((ma.values.value(n) - a.value(n)).abs() < 1e-13);
        }
    }

    #[test]
    fn mollify_shifts_quadratics_by_the_discrete_second_moment() {
        let grid = line_grid(1.0 / 32.0, 0.005, 0.2, 0.0, 1.0);
        let q = GridFunction::from_fn(&grid, |_, x| x[0] * x[0]).unwrap();
        let m = mollify(&q, 0.125).unwrap();
        let w = parabolic_weights(1, grid.h(), grid.tau(), 0.125).unwrap();
        let m2 = w.spatial_second_moment(grid.h());
        assert!(m2 > 0.0);
        for &n in m.window.nodes() {
            assert!((m.values.value(n) - q.value(n) - m2).abs() < 1e-13);
        }
    }

    #[test]
    fn mollify_respects_order_and_sup_bound() {
        let grid = line_grid(1.0 / 32.0, 0.005, 0.2, 0.0, 1.0);
        let u = GridFunction::from_fn(&grid, |t, x| (7.0 * x[0]).sin() - t).unwrap();
        let v = GridFunction::from_fn(&grid, |t, x| (7.0 * x[0]).sin() - t + 0.3 * x[0]).unwrap();
        let mu = mollify(&u, 0.125).unwrap();
        let mv = mollify(&v, 0.125).unwrap();
        let (lo, hi) = u.masked_range();
        for &n in mu.window.nodes() {
            assert!(mu.values.value(n) <= mv.values.value(n) + 1e-14);
            assert!(mu.values.value(n) >= lo - 1e-14 && mu.values.value(n) <= hi + 1e-14);
        }
    }

    #[test]
    fn mollify_commutes_with_lattice_translation() {
        let grid = line_grid(1.0 / 32.0, 0.005, 0.2, 0.0, 1.0);
        let u = GridFunction::from_fn(&grid, |t, x| (5.0 * x[0]).cos() + t * x[0]).unwrap();
        // Shift by one lattice step in space (pure index shift).
        let mut shifted = u.values().to_vec();
        for k in 0..grid.n_time() {
            for s in (1..grid.n_space()).rev() {
                shifted[k * grid.n_space() + s] = u.values()[k * grid.n_space() + s - 1];
            }
        }
        let v = GridFunction::from_values(&grid, shifted).unwrap();
        let mu = mollify(&u, 0.125).unwrap();
        let mv = mollify(&v, 0.125).unwrap();
        let mut compared = 0;
        for &n in mv.window.nodes() {
            if n.space == 0 {
                continue;
            }
            let left = NodeId { time: n.time, space: n.space - 1 };
            if mu.window.contains(left) {
                assert_eq!(mv.values.value(n), mu.values.value(left));
                compared += 1;
            }
        }
        assert!(compared > 0);
    }

    #[test]
    fn operator_table_constant_is_fixed_by_smoothing() {
        let grid = line_grid(1.0 / 16.0, 0.01, 0.6, -1.0, 1.0);
        let probes = vec![Probe { xi: vec![0.0], uprime: vec![0.0, 0.0] }];
        let table = OperatorTable::from_fn(&grid, probes, |_, _, _| -2.5).unwrap();
        let sm = mollify_operator(&table, 2).unwrap();
        for &n in sm.window().nodes() {
            assert!((sm.value(0, n) + 2.5).abs() < 1e-13);
        }
    }

    #[test]
    fn operator_table_affine_in_time_shifts_by_the_first_moment() {
        let grid = line_grid(1.0 / 16.0, 0.01, 0.6, -1.0, 1.0);
        let probes = vec![Probe { xi: vec![0.0], uprime: vec![0.0, 0.0] }];
        let table = OperatorTable::from_fn(&grid, probes, |_, t, _| 3.0 * t).unwrap();
        let sm = mollify_operator(&table, 2).unwrap();
        let w = isotropic_weights(1, grid.h(), grid.tau(), 2).unwrap();
        let shift = 3.0 * w.time_first_moment(grid.tau());
        assert!(shift > 0.0 && shift <= 3.0 * 0.5);
        for &n in sm.window().nodes() {
            let diff = sm.value(0, n) - table.value(0, n);
            assert!((diff - shift).abs() < 1e-12);
        }
    }

    #[test]
    fn operator_table_step_smears_only_near_the_jump() {
        let grid = line_grid(1.0 / 16.0, 0.01, 0.6, -2.0, 2.0);
        let probes = vec![Probe { xi: vec![0.0], uprime: vec![0.0, 0.0] }];
        let table =
            OperatorTable::from_fn(&grid, probes, |_, _, x| if x[0] >= 0.0 { 1.0 } else { 0.0 })
                .unwrap();
        let sm = mollify_operator(&table, 2).unwrap();
        // Independent oracle: direct double sum of shape samples over the
        // whole lattice, renormalized, at a handful of nodes.  The table is
        // time-constant, so the smoothing extends to every level, but the
        // oracle's renormalization only matches where the full space-time
        // kernel fits before the horizon.
        let kernel = MollifierKernel::new(1);
        let n_scale = 2.0;
        let mut compared = 0;
        for &node in sm.window().nodes().iter().step_by(7) {
            if grid.time(node.time) > grid.horizon() - 1.0 / n_scale {
                continue;
            }
            compared += 1;
            let (t0, x0) = (grid.time(node.time), grid.coord(node.space)[0]);
            let mut num = 0.0;
            let mut den = 0.0;
            for k in 0..grid.n_time() {
                for s in 0..grid.n_space() {
                    let w = kernel.shape(
                        (t0 - grid.time(k)) * n_scale,
                        &[(x0 - grid.coord(s)[0]) * n_scale],
                    );
                    if w > 0.0 {
                        num += w * table.value(0, NodeId { time: k, space: s });
                        den += w;
                    }
                }
            }
            assert!((sm.value(0, node) - num / den).abs() < 1e-12);
        }
        assert!(compared > 0);
        // At the jump the smoothed value sits at 1/2 plus half the center
        // column's mass (the lattice node on the jump counts as the high
        // side), approaching 1/2 as the mesh refines.
        let jump = NodeId { time: 0, space: grid.nearest_space(&[0.0]) };
        assert!(sm.window().contains(jump));
        let w = isotropic_weights(1, grid.h(), grid.tau(), 2).unwrap();
        let center_mass: f64 = w
            .entries()
            .iter()
            .filter(|e| e.dx[0] == 0)
            .map(|e| e.weight)
            .sum();
        assert!((sm.value(0, jump) - 0.5 - center_mass / 2.0).abs() < 1e-12);
        assert!((sm.value(0, jump) - 0.5).abs() < 0.06);
        for &node in sm.window().nodes() {
            let x = grid.coord(node.space)[0];
            if x.abs() > 0.5 + grid.h() {
                assert!((sm.value(0, node) - table.value(0, node)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn operator_smoothing_preserves_lipschitz_and_monotonicity() {
        let grid = line_grid(1.0 / 16.0, 0.01, 0.6, -1.0, 1.0);
        let coeffs = IsaacsCoefficients::new(
            1,
            1,
            2,
            vec![
                MatrixField::constant(DMatrix::identity(1, 1)).unwrap(),
                MatrixField::constant(DMatrix::identity(1, 1) * 1.4).unwrap(),
            ],
            vec![
                LowerOrder::Affine(AffineLower {
                    drift: vec![ScalarField::spatial(|x: &[f64]| x[0].signum() * 0.8)],
                    decay: ScalarField::constant(0.5),
                    source: ScalarField::spatial(|x: &[f64]| if x[0] > 0.3 { 1.0 } else { -1.0 }),
                }),
                LowerOrder::Affine(AffineLower {
                    drift: vec![ScalarField::constant(-0.6)],
                    decay: ScalarField::constant(1.0),
                    source: ScalarField::constant(0.2),
                }),
            ],
            1.0,
            ScalarField::constant(2.0),
        )
        .unwrap();
        let probes = vec![
            Probe { xi: vec![0.3, -0.2], uprime: vec![0.0, 0.4] },
            Probe { xi: vec![0.3, -0.2], uprime: vec![1.0, -0.2] },
            Probe { xi: vec![0.3, -0.2], uprime: vec![2.0, 0.4] },
        ];
        let table = OperatorTable::sample(&coeffs, &grid, probes).unwrap();
        let sm = mollify_operator(&table, 2).unwrap();
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt()
        };
        let d01 = dist(&sm.probes()[0].uprime, &sm.probes()[1].uprime);
        // Per-pair Lipschitz constant in u': sqrt(decay^2 + sum drift^2),
        // worst pair here is sqrt(1 + 0.36).
        let lip = (1.0f64 + 0.36).sqrt();
        let raw_sup = table
            .window()
            .nodes()
            .iter()
            .map(|&n| (table.value(0, n) - table.value(1, n)).abs())
            .fold(0.0, f64::max);
        for &n in sm.window().nodes() {
            // Convex combinations cannot exceed the raw sup difference, and
            // both tables obey the coefficient Lipschitz bound.
            let smo = (sm.value(0, n) - sm.value(1, n)).abs();
            assert!(smo <= raw_sup + 1e-12);
            assert!(smo <= lip * d01 + 1e-12);
            // Nonincreasing in u'_0 (probes 0 and 2 differ only there).
            assert!(table.value(2, n) <= table.value(0, n) + 1e-12);
            assert!(sm.value(2, n) <= sm.value(0, n) + 1e-12);
        }
    }

    #[test]
    fn estimate_ratios_vanish_on_affine_data() {
        let grid = line_grid(1.0 / 32.0, 0.002, 0.2, 0.0, 1.0);
        let u = GridFunction::from_fn(&grid, |_, x| 1.0 + 4.0 * x[0]).unwrap();
        let report = check_mollifier_estimates(&u, 1.5, &[0.1, 0.2]).unwrap();
        assert!(report.value_sup < 1e-10);
        assert!(report.gradient_sup < 1e-10);
        assert!(report.norm > 0.0);
    }
}
