//! Pointwise operators: the finite sup-inf Isaacs envelope, the Pucci
//! maximal operator, the cutoff envelopes, and structural validation of
//! coefficient families.
//!
//! Coefficients come per control pair `(alpha, beta)`:
//!
//! * a diffusion matrix field `a(t, x)` expected to stay uniformly elliptic
//!   (eigenvalues in `[delta, 1/delta]`), and
//! * a lower-order term `b(u', t, x)` acting on `u' = (u, Du)`; the affine
//!   form is `sum_i b_i u'_i - c u'_0 + f` with `c >= 0` so the envelope is
//!   nonincreasing in the zeroth coordinate.
//!
//! Fields are either constants, closed-form samplers, or per-node tables
//! (sampled nearest-node).  Field-level structure bounds cannot be checked
//! eagerly on closures, which is exactly what [`validate_structure`] is for.

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::jet::{check_symmetric, Jet};
use nalgebra::DMatrix;
use std::fmt;
use std::sync::Arc;

type ScalarFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
type MatrixFn = Arc<dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync>;

/// Ellipticity band: operators live in `S_delta` (eigenvalues in
/// `[delta, 1/delta]`), the Pucci cutoff in the wider band `S_delta_bar`.
#[derive(Debug, Clone, Copy)]
pub struct EllipticityBounds {
    delta: f64,
    delta_bar: f64,
}

impl EllipticityBounds {
    /// Requires `0 < delta_bar < delta <= 1`.
    pub fn new(delta: f64, delta_bar: f64) -> Result<Self> {
        if !(0.0 < delta_bar && delta_bar < delta && delta <= 1.0) {
            return Err(Error::Config(format!(
                "ellipticity bounds need 0 < delta_bar < delta <= 1, got ({delta}, {delta_bar})"
            )));
        }
        Ok(EllipticityBounds { delta, delta_bar })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn delta_bar(&self) -> f64 {
        self.delta_bar
    }
}

/// A scalar coefficient field on space-time.
#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    /// Closed-form sampler; the flag records whether it ignores `t`, which
    /// lets downstream convolutions collapse their time sums.
    Closure(ScalarFn, bool),
    /// Per-node table, sampled at the nearest node (clamped at the edges).
    Table(GridFunction),
}

impl ScalarField {
    pub fn constant(v: f64) -> Self {
        ScalarField::Constant(v)
    }
    pub fn closure(f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField::Closure(Arc::new(f), false)
    }
    /// A sampler known not to depend on time.
    pub fn spatial(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField::Closure(Arc::new(move |_t, x| f(x)), true)
    }
    pub fn table(values: GridFunction) -> Self {
        ScalarField::Table(values)
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            ScalarField::Constant(v) => *v,
            ScalarField::Closure(f, _) => f(t, x),
            ScalarField::Table(g) => g.eval_nearest(t, x),
        }
    }

    pub fn is_time_invariant(&self) -> bool {
        match self {
            ScalarField::Constant(_) => true,
            ScalarField::Closure(_, ti) => *ti,
            ScalarField::Table(g) => g.grid().n_time() == 1,
        }
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Constant(v) => write!(f, "Constant({v})"),
            ScalarField::Closure(_, ti) => write!(f, "Closure(time_invariant={ti})"),
            ScalarField::Table(_) => write!(f, "Table"),
        }
    }
}

/// A symmetric-matrix coefficient field on space-time.
#[derive(Clone)]
pub enum MatrixField {
    Constant(DMatrix<f64>),
    /// `s(t, x) * I` — the common isotropic case, evaluated without
    /// allocating.
    ScaledIdentity(ScalarField),
    Closure(MatrixFn, bool),
}

impl MatrixField {
    pub fn constant(m: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&m)?;
        Ok(MatrixField::Constant(m))
    }
    pub fn scaled_identity(s: ScalarField) -> Self {
        MatrixField::ScaledIdentity(s)
    }
    pub fn closure(f: impl Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        MatrixField::Closure(Arc::new(f), false)
    }

    /// Evaluate into a caller-provided `dim x dim` scratch matrix.
    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut DMatrix<f64>) {
        match self {
            MatrixField::Constant(m) => out.copy_from(m),
            MatrixField::ScaledIdentity(s) => {
                let v = s.eval(t, x);
                out.fill(0.0);
                out.fill_diagonal(v);
            }
            MatrixField::Closure(f, _) => out.copy_from(&f(t, x)),
        }
    }

    pub fn eval(&self, t: f64, x: &[f64], dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, dim);
        self.eval_into(t, x, &mut m);
        m
    }

    pub fn is_time_invariant(&self) -> bool {
        match self {
            MatrixField::Constant(_) => true,
            MatrixField::ScaledIdentity(s) => s.is_time_invariant(),
            MatrixField::Closure(_, ti) => *ti,
        }
    }
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixField::Constant(m) => write!(f, "Constant({}x{})", m.nrows(), m.ncols()),
            MatrixField::ScaledIdentity(s) => write!(f, "ScaledIdentity({s:?})"),
            MatrixField::Closure(_, ti) => write!(f, "Closure(time_invariant={ti})"),
        }
    }
}

/// Affine lower-order term `sum_i drift_i(t,x) u'_i - decay(t,x) u'_0 +
/// source(t,x)`.
#[derive(Debug, Clone)]
pub struct AffineLower {
    pub drift: Vec<ScalarField>,
    pub decay: ScalarField,
    pub source: ScalarField,
}

impl AffineLower {
    pub fn eval(&self, uprime: &[f64], t: f64, x: &[f64]) -> f64 {
        let mut v = self.source.eval(t, x) - self.decay.eval(t, x) * uprime[0];
        for (i, d) in self.drift.iter().enumerate() {
            v += d.eval(t, x) * uprime[1 + i];
        }
        v
    }

    fn is_time_invariant(&self) -> bool {
        self.drift.iter().all(ScalarField::is_time_invariant)
            && self.decay.is_time_invariant()
            && self.source.is_time_invariant()
    }
}

/// Lower-order term of one control pair: affine, or an opaque sampler
/// `b(u', t, x)` (the latter cannot pass through the exponential transform).
#[derive(Clone)]
pub enum LowerOrder {
    Affine(AffineLower),
    Sampler(Arc<dyn Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync>),
}

impl LowerOrder {
    pub fn zero(dim: usize) -> Self {
        LowerOrder::Affine(AffineLower {
            drift: vec![ScalarField::constant(0.0); dim],
            decay: ScalarField::constant(0.0),
            source: ScalarField::constant(0.0),
        })
    }

    /// `u'` is laid out as `(u, grad_1, ..., grad_d)`.
    pub fn eval(&self, uprime: &[f64], t: f64, x: &[f64]) -> f64 {
        match self {
            LowerOrder::Affine(a) => a.eval(uprime, t, x),
            LowerOrder::Sampler(f) => f(uprime, t, x),
        }
    }

    fn is_time_invariant(&self) -> bool {
        match self {
            LowerOrder::Affine(a) => a.is_time_invariant(),
            LowerOrder::Sampler(_) => false,
        }
    }
}

impl fmt::Debug for LowerOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LowerOrder::Affine(a) => write!(f, "Affine({a:?})"),
            LowerOrder::Sampler(_) => write!(f, "Sampler"),
        }
    }
}

/// Coefficient family of a finite Isaacs envelope
/// `H = sup_alpha inf_beta [ tr(a d2u) + b(u', t, x) ]`.
#[derive(Debug, Clone)]
pub struct IsaacsCoefficients {
    dim: usize,
    n_alpha: usize,
    n_beta: usize,
    /// Row-major `[alpha][beta]`.
    diffusion: Vec<MatrixField>,
    lower: Vec<LowerOrder>,
    k0: f64,
    h_bar: ScalarField,
}

impl IsaacsCoefficients {
    pub fn new(
        dim: usize,
        n_alpha: usize,
        n_beta: usize,
        diffusion: Vec<MatrixField>,
        lower: Vec<LowerOrder>,
        k0: f64,
        h_bar: ScalarField,
    ) -> Result<Self> {
        if n_alpha == 0 || n_beta == 0 {
            return Err(Error::Config(
                "control index sets must both be nonempty".into(),
            ));
        }
        if diffusion.len() != n_alpha * n_beta || lower.len() != n_alpha * n_beta {
            return Err(Error::Config(format!(
                "expected {} coefficient entries, got {} diffusion / {} lower",
                n_alpha * n_beta,
                diffusion.len(),
                lower.len()
            )));
        }
        if !(k0 >= 0.0) {
            return Err(Error::Config("structure constant K0 must be >= 0".into()));
        }
        Ok(IsaacsCoefficients {
            dim,
            n_alpha,
            n_beta,
            diffusion,
            lower,
            k0,
            h_bar,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn n_alpha(&self) -> usize {
        self.n_alpha
    }
    pub fn n_beta(&self) -> usize {
        self.n_beta
    }
    pub fn k0(&self) -> f64 {
        self.k0
    }
    pub fn h_bar(&self) -> &ScalarField {
        &self.h_bar
    }

    pub fn diffusion(&self, alpha: usize, beta: usize) -> &MatrixField {
        &self.diffusion[alpha * self.n_beta + beta]
    }
    pub fn lower(&self, alpha: usize, beta: usize) -> &LowerOrder {
        &self.lower[alpha * self.n_beta + beta]
    }

    /// True when every field ignores time; convolution passes over time
    /// collapse to the identity in that case.
    pub fn is_time_invariant(&self) -> bool {
        self.diffusion.iter().all(MatrixField::is_time_invariant)
            && self.lower.iter().all(LowerOrder::is_time_invariant)
    }

    /// The lower-order envelope `sup_alpha inf_beta [ xi_{alpha beta} +
    /// b_{alpha beta}(u', t, x) ]` with the second-order contribution frozen
    /// into the probe `xi` (row-major over pairs).
    pub fn envelope(&self, xi: &[f64], uprime: &[f64], t: f64, x: &[f64]) -> f64 {
        debug_assert_eq!(xi.len(), self.n_alpha * self.n_beta);
        let mut sup = f64::NEG_INFINITY;
        for alpha in 0..self.n_alpha {
            let mut inf = f64::INFINITY;
            for beta in 0..self.n_beta {
                let idx = alpha * self.n_beta + beta;
                let v = xi[idx] + self.lower[idx].eval(uprime, t, x);
                inf = inf.min(v);
            }
            sup = sup.max(inf);
        }
        sup
    }
}

/// Pucci maximal operator at ellipticity `delta_bar`:
/// `sup { tr(a m) : a symmetric, eigenvalues in [delta_bar, 1/delta_bar] }
///  = (1/delta_bar) sum lambda_i^+ - delta_bar sum lambda_i^-`.
///
/// Convex, positively one-homogeneous, monotone in the matrix order.
pub fn pucci_max(m: &DMatrix<f64>, delta_bar: f64) -> Result<f64> {
    if !(0.0 < delta_bar && delta_bar <= 1.0) {
        return Err(Error::Domain(format!(
            "pucci ellipticity {delta_bar} not in (0, 1]"
        )));
    }
    check_symmetric(m)?;
    let mut acc = 0.0;
    for lambda in sym_eigenvalues(m) {
        if lambda > 0.0 {
            acc += lambda / delta_bar;
        } else {
            acc += lambda * delta_bar;
        }
    }
    Ok(acc)
}

/// Eigenvalues of a symmetric matrix (symmetry already verified by caller
/// for the operator paths; cheap direct form in dimension one).
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    match m.nrows() {
        0 => Vec::new(),
        1 => vec![m[(0, 0)]],
        _ => m.clone().symmetric_eigen().eigenvalues.iter().copied().collect(),
    }
}

/// Isaacs envelope applied to a jet at `(t, x)`.
pub fn isaacs_eval(coeffs: &IsaacsCoefficients, jet: &Jet, t: f64, x: &[f64]) -> Result<f64> {
    let d = coeffs.dim();
    if jet.dim() != d || x.len() != d {
        return Err(Error::Config(format!(
            "dimension mismatch: coefficients {d}, jet {}, point {}",
            jet.dim(),
            x.len()
        )));
    }
    let mut uprime = Vec::with_capacity(d + 1);
    uprime.push(jet.value);
    uprime.extend(jet.gradient.iter());
    let mut a = DMatrix::zeros(d, d);
    let mut sup = f64::NEG_INFINITY;
    for alpha in 0..coeffs.n_alpha() {
        let mut inf = f64::INFINITY;
        for beta in 0..coeffs.n_beta() {
            coeffs.diffusion(alpha, beta).eval_into(t, x, &mut a);
            let mut v = coeffs.lower(alpha, beta).eval(&uprime, t, x);
            for i in 0..d {
                for j in 0..d {
                    v += a[(i, j)] * jet.hessian[(j, i)];
                }
            }
            inf = inf.min(v);
        }
        sup = sup.max(inf);
    }
    if !sup.is_finite() {
        return Err(Error::NonFinite("isaacs envelope value".into()));
    }
    Ok(sup)
}

/// Upper cutoff envelope `max(H, P - K)`; nonincreasing in `K` (callers use
/// `K >= 1`).
#[inline]
pub fn cutoff_upper(hval: f64, pval: f64, k: f64) -> f64 {
    hval.max(pval - k)
}

/// Lower cutoff envelope `min(H, -P(-u'') + K)`; `p_neg_val` is the Pucci
/// value of the negated Hessian.  Nondecreasing in `K`.
#[inline]
pub fn cutoff_lower(hval: f64, p_neg_val: f64, k: f64) -> f64 {
    hval.min(-p_neg_val + k)
}

/// Conjugation by `e^{ct}`: `H^c(u, t, x) = e^{ct} H(e^{-ct} u, t, x) -
/// c u'_0`.  For affine lower-order terms the diffusion and the drift are
/// untouched, the decay gains `c`, and the source is scaled by `e^{ct}`.
/// With `c = K0 + 1` the transformed envelope is strictly decreasing in
/// `u'_0` with slope at most `-1`.
pub fn exp_transform(coeffs: &IsaacsCoefficients, c: f64) -> Result<IsaacsCoefficients> {
    let mut lower = Vec::with_capacity(coeffs.lower.len());
    for term in &coeffs.lower {
        let affine = match term {
            LowerOrder::Affine(a) => a,
            LowerOrder::Sampler(_) => {
                return Err(Error::UnsupportedForm(
                    "exponential transform needs the affine lower-order form".into(),
                ))
            }
        };
        if c == 0.0 {
            lower.push(LowerOrder::Affine(affine.clone()));
            continue;
        }
        let decay = {
            let old = affine.decay.clone();
            let time_invariant = old.is_time_invariant();
            ScalarField::Closure(
                Arc::new(move |t: f64, x: &[f64]| old.eval(t, x) + c),
                time_invariant,
            )
        };
        let source = {
            let old = affine.source.clone();
            ScalarField::closure(move |t: f64, x: &[f64]| (c * t).exp() * old.eval(t, x))
        };
        lower.push(LowerOrder::Affine(AffineLower {
            drift: affine.drift.clone(),
            decay,
            source,
        }));
    }
    let h_bar = if c == 0.0 {
        coeffs.h_bar.clone()
    } else {
        let old = coeffs.h_bar.clone();
        ScalarField::closure(move |t: f64, x: &[f64]| (c * t).exp() * old.eval(t, x))
    };
    IsaacsCoefficients::new(
        coeffs.dim,
        coeffs.n_alpha,
        coeffs.n_beta,
        coeffs.diffusion.clone(),
        lower,
        coeffs.k0 + c.max(0.0),
        h_bar,
    )
}

/// The Holder exponent tied to `kappa`: `gamma = (7 - 3 kappa) / (12 - 4
/// kappa)`, strictly decreasing from 1/2 to 1/4 on `kappa in (1, 2)`.
pub fn gamma_of_kappa(kappa: f64) -> Result<f64> {
    if !(1.0 < kappa && kappa < 2.0) {
        return Err(Error::Domain(format!("kappa {kappa} not in (1, 2)")));
    }
    Ok((7.0 - 3.0 * kappa) / (12.0 - 4.0 * kappa))
}

/// Tabulated modulus of continuity: nondecreasing, zero at zero, evaluated
/// by linear interpolation and clamped beyond the last knot.
#[derive(Debug, Clone)]
pub struct OmegaTable {
    knots: Vec<(f64, f64)>,
}

impl OmegaTable {
    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Config("modulus table is empty".into()));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots[0].0 != 0.0 || knots[0].1 != 0.0 {
            return Err(Error::Config("modulus table must start at (0, 0)".into()));
        }
        for w in knots.windows(2) {
            if w[1].1 < w[0].1 {
                return Err(Error::Config("modulus table must be nondecreasing".into()));
            }
        }
        Ok(OmegaTable { knots })
    }

    pub fn eval(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match self
            .knots
            .iter()
            .position(|&(k, _)| k >= r)
        {
            Some(0) => self.knots[0].1,
            Some(i) => {
                let (r0, w0) = self.knots[i - 1];
                let (r1, w1) = self.knots[i];
                w0 + (w1 - w0) * (r - r0) / (r1 - r0)
            }
            None => self.knots.last().unwrap().1,
        }
    }
}

/// Structure constants of a problem instance: growth bound `K0`, regularity
/// exponent `kappa` with its derived `gamma`, modulus table, and the
/// scaling exponent `tau_mod` used when converting the modulus argument.
#[derive(Debug, Clone)]
pub struct StructureConstants {
    pub k0: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub omega: OmegaTable,
    pub tau_mod: f64,
}

impl StructureConstants {
    pub fn new(k0: f64, kappa: f64, omega: OmegaTable, tau_mod: f64) -> Result<Self> {
        if !(k0 >= 0.0) {
            return Err(Error::Config("K0 must be >= 0".into()));
        }
        if !(tau_mod > 0.0) {
            return Err(Error::Config("tau_mod must be positive".into()));
        }
        let gamma = gamma_of_kappa(kappa)?;
        Ok(StructureConstants {
            k0,
            kappa,
            gamma,
            omega,
            tau_mod,
        })
    }
}

/// Probe points for [`validate_structure`].
#[derive(Debug, Clone, Default)]
pub struct SampleSet {
    /// Space-time points for pointwise bounds.
    pub points: Vec<(f64, Vec<f64>)>,
    /// Same-time point pairs for the spatial Holder quotient.
    pub pairs: Vec<(f64, Vec<f64>, Vec<f64>)>,
    /// `u'` probes (layout `(u, grad)`), compared pairwise for Lipschitz
    /// bounds.
    pub uprime: Vec<Vec<f64>>,
}

/// Measured structure diagnostics over a sample set.
#[derive(Debug, Clone)]
pub struct StructureReport {
    /// `min(lambda_min - delta, 1/delta - lambda_max)` over all samples;
    /// nonnegative iff every sampled diffusion stays in the band.
    pub ellipticity_margin: f64,
    /// `max |a(t,x) - a(t,y)|_F / |x-y|^gamma`; pass when `<= K0`.
    pub holder_quotient: f64,
    /// `max |b(u'_1) - b(u'_2)| / |u'_1 - u'_2|`; pass when `<= K0`.
    pub lipschitz_quotient: f64,
    /// `min (K0 |u'| + Hbar - |b(u')|)`; pass when `>= 0`.
    pub growth_slack: f64,
    /// Largest observed forward slope of `b` in `u'_0`; pass when `<= 0`.
    pub monotone_slope: f64,
    pub ellipticity_pass: bool,
    pub holder_pass: bool,
    pub lipschitz_pass: bool,
    pub growth_pass: bool,
    pub monotone_pass: bool,
}

impl StructureReport {
    pub fn pass(&self) -> bool {
        self.ellipticity_pass
            && self.holder_pass
            && self.lipschitz_pass
            && self.growth_pass
            && self.monotone_pass
    }
}

/// Sample-based audit of the structural assumptions: ellipticity band of
/// every diffusion entry, spatial Holder-`gamma` modulus of the diffusion,
/// Lipschitz bound and growth bound of the lower-order terms, and their
/// monotonicity in `u'_0`.  Tolerances are small multiples of round-off so
/// honest instances pass exactly.
pub fn validate_structure(
    coeffs: &IsaacsCoefficients,
    bounds: &EllipticityBounds,
    constants: &StructureConstants,
    samples: &SampleSet,
) -> Result<StructureReport> {
    if samples.points.is_empty() {
        return Err(Error::Config("sample set has no points".into()));
    }
    let d = coeffs.dim();
    let delta = bounds.delta();
    let tol = 1e-10;

    let mut ell_margin = f64::INFINITY;
    let mut a = DMatrix::zeros(d, d);
    for (t, x) in &samples.points {
        for alpha in 0..coeffs.n_alpha() {
            for beta in 0..coeffs.n_beta() {
                coeffs.diffusion(alpha, beta).eval_into(*t, x, &mut a);
                check_symmetric(&a)?;
                for lambda in sym_eigenvalues(&a) {
                    ell_margin = ell_margin.min(lambda - delta).min(1.0 / delta - lambda);
                }
            }
        }
    }

    let mut holder_q = 0.0f64;
    let mut ax = DMatrix::zeros(d, d);
    let mut ay = DMatrix::zeros(d, d);
    for (t, x, y) in &samples.pairs {
        let dist: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist < 1e-14 {
            continue;
        }
        for alpha in 0..coeffs.n_alpha() {
            for beta in 0..coeffs.n_beta() {
                coeffs.diffusion(alpha, beta).eval_into(*t, x, &mut ax);
                coeffs.diffusion(alpha, beta).eval_into(*t, y, &mut ay);
                let frob: f64 = ax
                    .iter()
                    .zip(ay.iter())
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
                    .sqrt();
                holder_q = holder_q.max(frob / dist.powf(constants.gamma));
            }
        }
    }

    let mut lip_q = 0.0f64;
    let mut growth_slack = f64::INFINITY;
    let mut mono_slope = f64::NEG_INFINITY;
    let step = 1e-3;
    for (t, x) in &samples.points {
        for alpha in 0..coeffs.n_alpha() {
            for beta in 0..coeffs.n_beta() {
                let term = coeffs.lower(alpha, beta);
                for u in &samples.uprime {
                    let bu = term.eval(u, *t, x);
                    let norm: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                    growth_slack = growth_slack
                        .min(coeffs.k0() * norm + coeffs.h_bar().eval(*t, x) - bu.abs());
                    let mut shifted = u.clone();
                    shifted[0] += step;
                    mono_slope = mono_slope.max((term.eval(&shifted, *t, x) - bu) / step);
                    for v in &samples.uprime {
                        let dist: f64 = u
                            .iter()
                            .zip(v)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt();
                        if dist < 1e-14 {
                            continue;
                        }
                        lip_q = lip_q.max((bu - term.eval(v, *t, x)).abs() / dist);
                    }
                }
            }
        }
    }

    Ok(StructureReport {
        ellipticity_margin: ell_margin,
        holder_quotient: holder_q,
        lipschitz_quotient: lip_q,
        growth_slack,
        monotone_slope: mono_slope,
        ellipticity_pass: ell_margin >= -tol,
        holder_pass: holder_q <= coeffs.k0() + tol,
        lipschitz_pass: lip_q <= coeffs.k0() + tol,
        growth_pass: growth_slack >= -tol,
        monotone_pass: mono_slope <= tol,
    })
}
