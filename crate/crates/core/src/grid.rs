//! Space-time lattices and grid functions.
//!
//! A [`SpaceTimeGrid`] is a uniform lattice on `[0, T] x closure(Omega)` for a
//! spatial domain `Omega` carved out of an axis-aligned box by a node mask.
//! Time level `k` sits at `t = k * tau`; spatial nodes are ordered
//! lexicographically by coordinate.  The terminal-value problems solved here
//! carry their data on the parabolic boundary: the whole top slice `{T} x
//! closure(Omega)` together with the lateral boundary nodes at every level.
//!
//! [`GridFunction`] is an immutable nodal field on such a grid; all
//! operations hand back fresh values.  [`discrete_jet`] provides the central
//! second-order jet used by the pointwise operators, and [`holder_norm`] a
//! discrete surrogate of the parabolic Holder norm of exponent
//! `kappa in (1, 2)` built from the distance `|x - y| + |t - s|^(1/2)`.

use crate::error::{Error, Result};
use crate::jet::Jet;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::io::{BufRead, Write};
use std::sync::Arc;

/// A single lattice node: time level and flattened spatial index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId {
    pub time: usize,
    pub space: usize,
}

/// Relative tolerance for "divides exactly" checks on grid spacings.
const DIVISIBILITY_TOL: f64 = 1e-9;

/// Uniform space-time lattice over `[0, T] x box`, with a spatial mask
/// selecting the closed domain.
///
/// Invariants enforced at construction: `1 <= dim <= 3`; `tau` divides the
/// horizon and `h` divides every box edge (up to round-off); the mask is
/// nonempty and connected under axis adjacency.  A spatial node is
/// *interior* when its full `3^dim` neighborhood (the stencil of the
/// second-order schemes) stays inside the mask; masked nodes that fail this
/// are the *boundary* nodes carrying lateral data.
#[derive(Debug)]
pub struct SpaceTimeGrid {
    dim: usize,
    horizon: f64,
    tau: f64,
    h: f64,
    box_lo: Vec<f64>,
    box_hi: Vec<f64>,
    n_per_dim: Vec<usize>,
    n_time: usize,
    n_space: usize,
    /// Flattened node coordinates, `dim` entries per spatial index.
    coords: Vec<f64>,
    mask: Vec<bool>,
    interior: Vec<bool>,
    interior_nodes: Vec<usize>,
    boundary_nodes: Vec<usize>,
    /// Distance from each masked node to the complement of the domain
    /// (nearest unmasked node or box face); zero on unmasked nodes.
    dist: Vec<f64>,
}

impl SpaceTimeGrid {
    /// Grid over a solid box: every lattice node of the box is masked.
    pub fn box_domain(
        dim: usize,
        box_lo: &[f64],
        box_hi: &[f64],
        h: f64,
        horizon: f64,
        tau: f64,
    ) -> Result<Arc<Self>> {
        Self::with_mask_fn(dim, box_lo, box_hi, h, horizon, tau, |_| true)
    }

    /// Grid over the closed disc/ball `|x - center| <= radius` inside the box.
    pub fn disc_domain(
        dim: usize,
        box_lo: &[f64],
        box_hi: &[f64],
        h: f64,
        horizon: f64,
        tau: f64,
        center: &[f64],
        radius: f64,
    ) -> Result<Arc<Self>> {
        if center.len() != dim {
            return Err(Error::Config("disc center dimension mismatch".into()));
        }
        if radius <= 0.0 {
            return Err(Error::Config("disc radius must be positive".into()));
        }
        Self::with_mask_fn(dim, box_lo, box_hi, h, horizon, tau, |x| {
            let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
            r2.sqrt() <= radius + 1e-12
        })
    }

    /// Grid with an arbitrary mask predicate evaluated on node coordinates.
    pub fn with_mask_fn(
        dim: usize,
        box_lo: &[f64],
        box_hi: &[f64],
        h: f64,
        horizon: f64,
        tau: f64,
        mask_fn: impl Fn(&[f64]) -> bool,
    ) -> Result<Arc<Self>> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Config(format!("dimension {dim} not in 1..=3")));
        }
        if box_lo.len() != dim || box_hi.len() != dim {
            return Err(Error::Config("box bounds dimension mismatch".into()));
        }
        if !(h > 0.0) || !(tau > 0.0) || !(horizon > 0.0) {
            return Err(Error::Config(
                "h, tau and horizon must all be positive".into(),
            ));
        }
        let mut n_per_dim = Vec::with_capacity(dim);
        for i in 0..dim {
            let edge = box_hi[i] - box_lo[i];
            if !(edge > 0.0) {
                return Err(Error::Config(format!("box edge {i} is not positive")));
            }
            let count = edge / h;
            if (count - count.round()).abs() > DIVISIBILITY_TOL * count.max(1.0) {
                return Err(Error::Config(format!(
                    "h = {h} does not divide box edge {edge} (axis {i})"
                )));
            }
            n_per_dim.push(count.round() as usize + 1);
        }
        let steps = horizon / tau;
        if (steps - steps.round()).abs() > DIVISIBILITY_TOL * steps.max(1.0) {
            return Err(Error::Config(format!(
                "tau = {tau} does not divide horizon {horizon}"
            )));
        }
        let n_time = steps.round() as usize + 1;
        let n_space: usize = n_per_dim.iter().product();

        let mut coords = vec![0.0; n_space * dim];
        let mut multi = vec![0usize; dim];
        for s in 0..n_space {
            unflatten(s, &n_per_dim, &mut multi);
            for i in 0..dim {
                coords[s * dim + i] = box_lo[i] + multi[i] as f64 * h;
            }
        }
        let mask: Vec<bool> = (0..n_space)
            .map(|s| mask_fn(&coords[s * dim..(s + 1) * dim]))
            .collect();
        if !mask.iter().any(|&m| m) {
            return Err(Error::Config("domain mask is empty".into()));
        }

        let mut grid = SpaceTimeGrid {
            dim,
            horizon,
            tau,
            h,
            box_lo: box_lo.to_vec(),
            box_hi: box_hi.to_vec(),
            n_per_dim,
            n_time,
            n_space,
            coords,
            mask,
            interior: Vec::new(),
            interior_nodes: Vec::new(),
            boundary_nodes: Vec::new(),
            dist: Vec::new(),
        };
        grid.classify_nodes();
        grid.check_connected()?;
        grid.compute_distances();
        Ok(Arc::new(grid))
    }

    /// Same spatial layout with a different time step (used when fitting the
    /// step to a stability bound).
    pub fn with_tau(&self, tau: f64) -> Result<Arc<Self>> {
        let mask = self.mask.clone();
        Self::with_mask_fn(
            self.dim,
            &self.box_lo,
            &self.box_hi,
            self.h,
            self.horizon,
            tau,
            |x| {
                // Reuse the stored mask: map coordinates back to the index.
                let mut idx = 0usize;
                for i in 0..self.dim {
                    let j = ((x[i] - self.box_lo[i]) / self.h).round() as usize;
                    idx = idx * self.n_per_dim[i] + j;
                }
                mask[idx]
            },
        )
    }

    fn classify_nodes(&mut self) {
        let mut interior = vec![false; self.n_space];
        let mut multi = vec![0usize; self.dim];
        let mut nb = vec![0usize; self.dim];
        for s in 0..self.n_space {
            if !self.mask[s] {
                continue;
            }
            unflatten(s, &self.n_per_dim, &mut multi);
            // Interior requires the whole 3^dim box of neighbors: the
            // cross-difference stencil reaches the diagonal nodes.
            let mut ok = true;
            'offsets: for code in 0..3usize.pow(self.dim as u32) {
                let mut c = code;
                for i in 0..self.dim {
                    let step = (c % 3) as isize - 1;
                    c /= 3;
                    let j = multi[i] as isize + step;
                    if j < 0 || j >= self.n_per_dim[i] as isize {
                        ok = false;
                        break 'offsets;
                    }
                    nb[i] = j as usize;
                }
                if !self.mask[flatten(&nb, &self.n_per_dim)] {
                    ok = false;
                    break;
                }
            }
            interior[s] = ok;
        }
        self.interior_nodes = (0..self.n_space).filter(|&s| interior[s]).collect();
        self.boundary_nodes = (0..self.n_space)
            .filter(|&s| self.mask[s] && !interior[s])
            .collect();
        self.interior = interior;
    }

    fn check_connected(&self) -> Result<()> {
        let start = self.mask.iter().position(|&m| m).expect("nonempty mask");
        let mut seen = vec![false; self.n_space];
        let mut queue = vec![start];
        seen[start] = true;
        let mut count = 1usize;
        while let Some(s) = queue.pop() {
            for axis in 0..self.dim {
                for step in [-1isize, 1] {
                    if let Some(n) = self.neighbor(s, axis, step) {
                        if self.mask[n] && !seen[n] {
                            seen[n] = true;
                            count += 1;
                            queue.push(n);
                        }
                    }
                }
            }
        }
        let total = self.mask.iter().filter(|&&m| m).count();
        if count != total {
            return Err(Error::Config(
                "domain mask is not connected under axis adjacency".into(),
            ));
        }
        Ok(())
    }

    fn compute_distances(&mut self) {
        let unmasked: Vec<usize> = (0..self.n_space).filter(|&s| !self.mask[s]).collect();
        let dist: Vec<f64> = (0..self.n_space)
            .into_par_iter()
            .map(|s| {
                if !self.mask[s] {
                    return 0.0;
                }
                let x = &self.coords[s * self.dim..(s + 1) * self.dim];
                // Distance to the box complement is exact; unmasked lattice
                // nodes stand in for the rest of the continuum complement.
                let mut d = f64::INFINITY;
                for i in 0..self.dim {
                    d = d.min(x[i] - self.box_lo[i]).min(self.box_hi[i] - x[i]);
                }
                for &u in &unmasked {
                    let y = &self.coords[u * self.dim..(u + 1) * self.dim];
                    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                    d = d.min(r2.sqrt());
                }
                d
            })
            .collect();
        self.dist = dist;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn n_time(&self) -> usize {
        self.n_time
    }
    pub fn n_space(&self) -> usize {
        self.n_space
    }
    pub fn n_per_dim(&self) -> &[usize] {
        &self.n_per_dim
    }
    pub fn box_lo(&self) -> &[f64] {
        &self.box_lo
    }
    pub fn box_hi(&self) -> &[f64] {
        &self.box_hi
    }

    /// Time coordinate of level `k`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.tau
    }

    /// Spatial coordinates of a flattened index.
    pub fn coord(&self, s: usize) -> &[f64] {
        &self.coords[s * self.dim..(s + 1) * self.dim]
    }

    pub fn is_masked(&self, s: usize) -> bool {
        self.mask[s]
    }
    pub fn is_interior(&self, s: usize) -> bool {
        self.interior[s]
    }
    pub fn is_boundary(&self, s: usize) -> bool {
        self.mask[s] && !self.interior[s]
    }
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    /// Distance from node `s` to the complement of the domain.
    pub fn dist_to_complement(&self, s: usize) -> f64 {
        self.dist[s]
    }

    /// Flattened index of the axis neighbor, or `None` outside the box.
    pub fn neighbor(&self, s: usize, axis: usize, step: isize) -> Option<usize> {
        debug_assert!(axis < self.dim);
        let stride: usize = self.n_per_dim[axis + 1..].iter().product();
        let along = (s / stride) % self.n_per_dim[axis];
        let target = along as isize + step;
        if target < 0 || target >= self.n_per_dim[axis] as isize {
            return None;
        }
        Some((s as isize + step * stride as isize) as usize)
    }

    /// Neighbor displaced by one step along two distinct axes.
    pub fn diag_neighbor(
        &self,
        s: usize,
        axis_a: usize,
        step_a: isize,
        axis_b: usize,
        step_b: isize,
    ) -> Option<usize> {
        self.neighbor(s, axis_a, step_a)
            .and_then(|n| self.neighbor(n, axis_b, step_b))
    }

    /// Neighbor displaced by a full multi-index, or `None` once any axis
    /// leaves the box.  Does not consult the mask.
    pub fn offset_by(&self, s: usize, steps: &[isize]) -> Option<usize> {
        debug_assert_eq!(steps.len(), self.dim);
        let mut idx = 0usize;
        let mut rem = s;
        for (i, &step) in steps.iter().enumerate() {
            let stride: usize = self.n_per_dim[i + 1..].iter().product();
            let along = (rem / stride) as isize + step;
            rem %= stride;
            if along < 0 || along >= self.n_per_dim[i] as isize {
                return None;
            }
            idx = idx * self.n_per_dim[i] + along as usize;
        }
        Some(idx)
    }

    /// Flattened storage index of a node in a full space-time field.
    pub fn node_index(&self, node: NodeId) -> usize {
        node.time * self.n_space + node.space
    }

    /// Nearest spatial index to a coordinate, clamped to the box.
    pub fn nearest_space(&self, x: &[f64]) -> usize {
        let mut idx = 0usize;
        for i in 0..self.dim {
            let j = ((x[i] - self.box_lo[i]) / self.h).round();
            let j = (j.max(0.0) as usize).min(self.n_per_dim[i] - 1);
            idx = idx * self.n_per_dim[i] + j;
        }
        idx
    }

    /// Nearest time level to `t`, clamped to `[0, T]`.
    pub fn nearest_time(&self, t: f64) -> usize {
        let k = (t / self.tau).round();
        (k.max(0.0) as usize).min(self.n_time - 1)
    }

    /// Parabolic shrinking `Pi^rho`: nodes with `t <= T - rho^2` whose
    /// distance to the domain complement exceeds `rho`.
    pub fn shrink(self: &Arc<Self>, rho: f64) -> Result<SubGrid> {
        if !(rho > 0.0) {
            return Err(Error::Domain(format!("shrink radius {rho} must be positive")));
        }
        self.shrink_with(rho * rho, rho)
    }

    /// Shrinking with independent time and space margins (the isotropic
    /// kernels need `t <= T - rho` rather than `T - rho^2`).
    pub fn shrink_with(self: &Arc<Self>, time_margin: f64, space_margin: f64) -> Result<SubGrid> {
        let t_cut = self.horizon - time_margin + 1e-12 * self.horizon.max(1.0);
        let mut nodes = Vec::new();
        let mut member = vec![false; self.n_time * self.n_space];
        for k in 0..self.n_time {
            if self.time(k) > t_cut {
                continue;
            }
            for s in 0..self.n_space {
                if self.mask[s] && self.dist[s] > space_margin {
                    let node = NodeId { time: k, space: s };
                    member[self.node_index(node)] = true;
                    nodes.push(node);
                }
            }
        }
        if nodes.is_empty() {
            return Err(Error::Domain(format!(
                "shrunk window is empty (margins {time_margin}, {space_margin})"
            )));
        }
        Ok(SubGrid {
            grid: Arc::clone(self),
            nodes,
            member,
        })
    }

    /// All masked nodes at every time level, as a window.
    pub fn full_window(self: &Arc<Self>) -> SubGrid {
        let mut nodes = Vec::new();
        let mut member = vec![false; self.n_time * self.n_space];
        for k in 0..self.n_time {
            for s in 0..self.n_space {
                if self.mask[s] {
                    let node = NodeId { time: k, space: s };
                    member[self.node_index(node)] = true;
                    nodes.push(node);
                }
            }
        }
        SubGrid {
            grid: Arc::clone(self),
            nodes,
            member,
        }
    }
}

fn flatten(multi: &[usize], n_per_dim: &[usize]) -> usize {
    let mut idx = 0usize;
    for (j, n) in multi.iter().zip(n_per_dim) {
        idx = idx * n + j;
    }
    idx
}

fn unflatten(mut s: usize, n_per_dim: &[usize], multi: &mut [usize]) {
    for i in (0..n_per_dim.len()).rev() {
        multi[i] = s % n_per_dim[i];
        s /= n_per_dim[i];
    }
}

/// A set of nodes of a parent grid, in deterministic (time, space) order.
#[derive(Debug, Clone)]
pub struct SubGrid {
    grid: Arc<SpaceTimeGrid>,
    nodes: Vec<NodeId>,
    member: Vec<bool>,
}

impl SubGrid {
    pub fn grid(&self) -> &Arc<SpaceTimeGrid> {
        &self.grid
    }
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn contains(&self, node: NodeId) -> bool {
        self.member[self.grid.node_index(node)]
    }
    /// Subset relation against another window on the same grid.
    pub fn is_subset_of(&self, other: &SubGrid) -> bool {
        self.nodes.iter().all(|&n| other.contains(n))
    }
}

/// Immutable nodal field over a [`SpaceTimeGrid`].
///
/// Values are stored for every lattice node (time-major, then lexicographic
/// space); entries at unmasked nodes are kept finite but carry no meaning.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<SpaceTimeGrid>,
    values: Vec<f64>,
}

impl GridFunction {
    /// Sample a closure `(t, x) -> value` at every node.
    pub fn from_fn(grid: &Arc<SpaceTimeGrid>, f: impl Fn(f64, &[f64]) -> f64) -> Result<Self> {
        let mut values = vec![0.0; grid.n_time() * grid.n_space()];
        for k in 0..grid.n_time() {
            let t = grid.time(k);
            for s in 0..grid.n_space() {
                values[k * grid.n_space() + s] = f(t, grid.coord(s));
            }
        }
        Self::from_values(grid, values)
    }

    /// Wrap raw nodal values; rejects non-finite entries.
    pub fn from_values(grid: &Arc<SpaceTimeGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_time() * grid.n_space() {
            return Err(Error::Config(format!(
                "value buffer has {} entries, grid has {}",
                values.len(),
                grid.n_time() * grid.n_space()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "grid function entry {i} = {}",
                values[i]
            )));
        }
        Ok(GridFunction {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn zeros(grid: &Arc<SpaceTimeGrid>) -> Self {
        GridFunction {
            grid: Arc::clone(grid),
            values: vec![0.0; grid.n_time() * grid.n_space()],
        }
    }

    pub fn grid(&self) -> &Arc<SpaceTimeGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, node: NodeId) -> f64 {
        self.values[self.grid.node_index(node)]
    }

    /// Spatial slice at time level `k`.
    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.n_space();
        &self.values[k * n..(k + 1) * n]
    }

    /// Nearest-node sample at an arbitrary space-time point (clamped).
    pub fn eval_nearest(&self, t: f64, x: &[f64]) -> f64 {
        let node = NodeId {
            time: self.grid.nearest_time(t),
            space: self.grid.nearest_space(x),
        };
        self.value(node)
    }

    /// New function with `f` applied to (node, value).
    pub fn map(&self, f: impl Fn(NodeId, f64) -> f64) -> Result<Self> {
        let n = self.grid.n_space();
        let values: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                f(
                    NodeId {
                        time: i / n,
                        space: i % n,
                    },
                    v,
                )
            })
            .collect();
        Self::from_values(&self.grid, values)
    }

    /// Supremum of `|u|` over masked nodes at all levels.
    pub fn sup_norm(&self) -> f64 {
        let n = self.grid.n_space();
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.is_masked(i % n))
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max)
    }

    /// Supremum of `|u - v|` over masked nodes.
    pub fn sup_diff(&self, other: &GridFunction) -> f64 {
        let n = self.grid.n_space();
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .filter(|(i, _)| self.grid.is_masked(i % n))
            .map(|(_, (a, b))| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Minimum and maximum over masked nodes.
    pub fn masked_range(&self) -> (f64, f64) {
        let n = self.grid.n_space();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, &v) in self.values.iter().enumerate() {
            if self.grid.is_masked(i % n) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    /// Write `t,x1,...,xd,value` rows for every masked node, time-major then
    /// lexicographic in space, 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let d = self.grid.dim();
        write!(out, "t")?;
        for i in 1..=d {
            write!(out, ",x{i}")?;
        }
        writeln!(out, ",value")?;
        for k in 0..self.grid.n_time() {
            let t = self.grid.time(k);
            for s in 0..self.grid.n_space() {
                if !self.grid.is_masked(s) {
                    continue;
                }
                write!(out, "{}", fmt_sig17(t))?;
                for &c in self.grid.coord(s) {
                    write!(out, ",{}", fmt_sig17(c))?;
                }
                writeln!(out, ",{}", fmt_sig17(self.values[k * self.grid.n_space() + s]))?;
            }
        }
        Ok(())
    }

    /// Read a CSV produced by [`write_csv`] back onto a grid; every masked
    /// node must be covered exactly once.
    pub fn read_csv<R: BufRead>(grid: &Arc<SpaceTimeGrid>, input: R) -> Result<Self> {
        let mut values = vec![0.0; grid.n_time() * grid.n_space()];
        let mut seen = vec![false; values.len()];
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty CSV".into()))?
            .map_err(|e| Error::Config(format!("CSV read: {e}")))?;
        let expected_cols = grid.dim() + 2;
        if header.split(',').count() != expected_cols {
            return Err(Error::Config(format!(
                "CSV header has wrong column count (expected {expected_cols})"
            )));
        }
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Config(format!("CSV read: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != expected_cols {
                return Err(Error::Config(format!("CSV row {} malformed", lineno + 2)));
            }
            let mut nums = Vec::with_capacity(expected_cols);
            for f in &fields {
                nums.push(
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("CSV row {}: {e}", lineno + 2)))?,
                );
            }
            let k = grid.nearest_time(nums[0]);
            let s = grid.nearest_space(&nums[1..=grid.dim()]);
            if (grid.time(k) - nums[0]).abs() > 1e-9 * grid.horizon().max(1.0) {
                return Err(Error::Config(format!(
                    "CSV row {}: time {} off-lattice",
                    lineno + 2,
                    nums[0]
                )));
            }
            let idx = grid.node_index(NodeId { time: k, space: s });
            values[idx] = nums[expected_cols - 1];
            seen[idx] = true;
        }
        for k in 0..grid.n_time() {
            for s in 0..grid.n_space() {
                if grid.is_masked(s) && !seen[k * grid.n_space() + s] {
                    return Err(Error::Config(format!(
                        "CSV misses masked node (level {k}, space {s})"
                    )));
                }
            }
        }
        Self::from_values(grid, values)
    }
}

/// Format with 17 significant digits (round-trip exact for f64).
pub fn fmt_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Central-difference space jet of `u` at an interior node: value, gradient
/// `(u(x+h e_i) - u(x-h e_i)) / 2h` and symmetric Hessian with the four-point
/// cross difference off the diagonal.  Exact on quadratics.
pub fn discrete_jet(u: &GridFunction, node: NodeId) -> Result<Jet> {
    let grid = u.grid();
    if !grid.is_interior(node.space) {
        return Err(Error::BoundaryNode(node));
    }
    let d = grid.dim();
    let h = grid.h();
    let k = node.time;
    let at = |s: usize| u.value(NodeId { time: k, space: s });
    let center = at(node.space);

    let mut gradient = DVector::zeros(d);
    let mut hessian = DMatrix::zeros(d, d);
    for i in 0..d {
        let plus = grid.neighbor(node.space, i, 1).expect("interior node");
        let minus = grid.neighbor(node.space, i, -1).expect("interior node");
        gradient[i] = (at(plus) - at(minus)) / (2.0 * h);
        hessian[(i, i)] = (at(plus) - 2.0 * center + at(minus)) / (h * h);
        for j in (i + 1)..d {
            let pp = grid.diag_neighbor(node.space, i, 1, j, 1).expect("interior");
            let mm = grid.diag_neighbor(node.space, i, -1, j, -1).expect("interior");
            let pm = grid.diag_neighbor(node.space, i, 1, j, -1).expect("interior");
            let mp = grid.diag_neighbor(node.space, i, -1, j, 1).expect("interior");
            let v = (at(pp) + at(mm) - at(pm) - at(mp)) / (4.0 * h * h);
            hessian[(i, j)] = v;
            hessian[(j, i)] = v;
        }
    }
    Jet::new(center, gradient, hessian)
}

/// Forward time difference `(u(t + tau, x) - u(t, x)) / tau`.
pub fn discrete_time_derivative(u: &GridFunction, node: NodeId) -> Result<f64> {
    let grid = u.grid();
    if node.time + 1 >= grid.n_time() {
        return Err(Error::Domain(
            "time derivative needs a level above the node".into(),
        ));
    }
    let up = u.value(NodeId {
        time: node.time + 1,
        space: node.space,
    });
    Ok((up - u.value(node)) / grid.tau())
}

/// The three components of the discrete parabolic Holder norm: sup of `|u|`,
/// sup of first spatial difference quotients, and the first-order-offset
/// seminorm of exponent `kappa`.
#[derive(Debug, Clone, Copy)]
pub struct HolderParts {
    pub sup: f64,
    pub grad_sup: f64,
    pub seminorm: f64,
}

impl HolderParts {
    pub fn total(&self) -> f64 {
        self.sup + self.grad_sup + self.seminorm
    }
}

/// Discrete parabolic Holder norm of exponent `kappa in (1, 2)` over a
/// window: `sup |u| + sup |Delta_h u| / h + sup_pairs |u(s,y) - u(t,x) -
/// Du(t,x).(y - x)| / rho^kappa` with `rho = |x - y| + |t - s|^(1/2)`.
/// The pair term uses the central-difference gradient, so only pairs whose
/// base node is spatially interior contribute.
pub fn holder_norm(u: &GridFunction, kappa: f64, window: &SubGrid) -> Result<f64> {
    holder_norm_parts(u, kappa, window).map(|p| p.total())
}

/// Same as [`holder_norm`] but exposing the three components.
pub fn holder_norm_parts(u: &GridFunction, kappa: f64, window: &SubGrid) -> Result<HolderParts> {
    if !(1.0 < kappa && kappa < 2.0) {
        return Err(Error::Domain(format!("kappa {kappa} not in (1, 2)")));
    }
    if window.is_empty() {
        return Err(Error::Domain("holder norm over empty window".into()));
    }
    if !Arc::ptr_eq(window.grid(), u.grid()) {
        return Err(Error::Config("window belongs to a different grid".into()));
    }
    let grid = u.grid();
    let h = grid.h();

    let sup = window
        .nodes()
        .iter()
        .map(|&n| u.value(n).abs())
        .fold(0.0, f64::max);

    let grad_sup = window
        .nodes()
        .iter()
        .map(|&n| {
            let mut best = 0.0f64;
            for axis in 0..grid.dim() {
                if let Some(nb) = grid.neighbor(n.space, axis, 1) {
                    let other = NodeId {
                        time: n.time,
                        space: nb,
                    };
                    if window.contains(other) {
                        best = best.max((u.value(other) - u.value(n)).abs() / h);
                    }
                }
            }
            best
        })
        .fold(0.0, f64::max);

    // Pairwise seminorm; bases restricted to spatially interior nodes where
    // the discrete gradient exists.
    let nodes = window.nodes();
    let seminorm = nodes
        .par_iter()
        .filter(|n| grid.is_interior(n.space))
        .map(|&base| {
            let jet = discrete_jet(u, base).expect("interior base");
            let xb = grid.coord(base.space);
            let tb = grid.time(base.time);
            let ub = u.value(base);
            let mut worst = 0.0f64;
            for &other in nodes {
                if other == base {
                    continue;
                }
                let xo = grid.coord(other.space);
                let spatial: f64 = xb
                    .iter()
                    .zip(xo)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let rho = spatial + (grid.time(other.time) - tb).abs().sqrt();
                let linear: f64 = (0..grid.dim())
                    .map(|i| jet.gradient[i] * (xo[i] - xb[i]))
                    .sum();
                let offset = (u.value(other) - ub - linear).abs();
                worst = worst.max(offset / rho.powf(kappa));
            }
            worst
        })
        .reduce(|| 0.0, f64::max);

    Ok(HolderParts {
        sup,
        grad_sup,
        seminorm,
    })
}
