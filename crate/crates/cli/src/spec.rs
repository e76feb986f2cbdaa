//! Problem ingestion: a flat, sectioned `key = value` text format.
//!
//! ```text
//! [grid]
//! dim = 1
//! h = 0.0625          # space step, same unit as the box
//! tau = auto          # time step; `auto` resolves to a CFL-safe divisor
//! ...
//! ```
//!
//! Values are scalars or whitespace-separated lists; comments run from `#`
//! to end of line; no nesting.  Every diagnostic carries the offending
//! field path (`[section] key: problem`) so batch runs fail legibly.

use isaacs_core::grid::SpaceTimeGrid;
use isaacs_core::operators::{
    EllipticityBounds, IsaacsCoefficients, OmegaTable, StructureConstants,
};
use isaacs_core::presets::{by_name, isaacs_holder, Preset};
use isaacs_core::solver::{auto_tau, cfl_limit, CutoffSide, SchemeConfig};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

/// Failures ranked by exit code: validation (2), non-convergence (3),
/// numerical-contract violation (4).
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    NonConvergence(String),
    Contract(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Contract(_) => 4,
        }
    }
    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::NonConvergence(m) | CliError::Contract(m) => m,
        }
    }
}

impl From<isaacs_core::Error> for CliError {
    fn from(e: isaacs_core::Error) -> Self {
        use isaacs_core::Error as E;
        match e {
            E::Cfl { .. } | E::DiagonalDominance { .. } => CliError::Contract(e.to_string()),
            E::NonFinite(_) => CliError::NonConvergence(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(format!("i/o failure: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Parsed but untyped spec: section -> key -> raw value string.
#[derive(Debug, Clone)]
pub struct RawSpec {
    sections: BTreeMap<String, BTreeMap<String, String>>,
    /// File stem recorded in manifests (never the absolute path, so that
    /// identical runs from different directories stay byte-identical).
    pub name: String,
}

/// Allowed keys per section; unknown fields are rejected with their path so
/// typos surface instead of silently falling back to defaults.
const SCHEMA: &[(&str, &[&str])] = &[
    (
        "grid",
        &[
            "dim", "horizon", "h", "tau", "box_lo", "box_hi", "mask", "disc_center",
            "disc_radius", "mask_file",
        ],
    ),
    ("problem", &["preset"]),
    (
        "constants",
        &["delta", "delta_bar", "kappa", "k0", "tau_mod", "omega"],
    ),
    (
        "experiment",
        &[
            "k_ladder", "n_ladder", "cutoff", "side", "tolerance", "seed", "eps0", "nu",
            "viscosity_radii", "viscosity_tol", "probe_eps", "eps_ladder", "max_steps",
        ],
    ),
];

impl RawSpec {
    pub fn parse(path: &Path) -> CliResult<RawSpec> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("spec file {}: {e}", path.display()))
        })?;
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "spec".to_owned());
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(section) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let section = section.trim().to_owned();
                sections.entry(section.clone()).or_default();
                current = Some(section);
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Validation(format!(
                    "spec line {}: expected `key = value` or `[section]`, got `{line}`",
                    lineno + 1
                )));
            };
            let Some(section) = current.clone() else {
                return Err(CliError::Validation(format!(
                    "spec line {}: `{}` appears before any [section]",
                    lineno + 1,
                    key.trim()
                )));
            };
            let prev = sections
                .get_mut(&section)
                .expect("section inserted on header")
                .insert(key.trim().to_owned(), value.trim().to_owned());
            if prev.is_some() {
                return Err(CliError::Validation(format!(
                    "[{section}] {}: duplicate key (line {})",
                    key.trim(),
                    lineno + 1
                )));
            }
        }
        let spec = RawSpec { sections, name };
        spec.check_schema()?;
        Ok(spec)
    }

    fn check_schema(&self) -> CliResult<()> {
        for (section, keys) in &self.sections {
            let Some((_, allowed)) = SCHEMA.iter().find(|(s, _)| s == section) else {
                return Err(CliError::Validation(format!(
                    "[{section}]: unknown section (expected one of grid, problem, \
                     constants, experiment)"
                )));
            };
            for key in keys.keys() {
                if !allowed.contains(&key.as_str()) {
                    return Err(CliError::Validation(format!(
                        "[{section}] {key}: unknown field"
                    )));
                }
            }
        }
        Ok(())
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(|s| s.as_str())
    }

    fn require(&self, section: &str, key: &str) -> CliResult<&str> {
        self.get(section, key)
            .ok_or_else(|| CliError::Validation(format!("[{section}] {key}: missing")))
    }

    fn f64(&self, section: &str, key: &str) -> CliResult<f64> {
        parse_f64(self.require(section, key)?, section, key)
    }

    fn f64_or(&self, section: &str, key: &str, default: f64) -> CliResult<f64> {
        match self.get(section, key) {
            Some(v) => parse_f64(v, section, key),
            None => Ok(default),
        }
    }

    fn u64_or(&self, section: &str, key: &str, default: u64) -> CliResult<u64> {
        match self.get(section, key) {
            Some(v) => v.parse().map_err(|_| {
                CliError::Validation(format!("[{section}] {key}: not an integer: `{v}`"))
            }),
            None => Ok(default),
        }
    }

    fn str_or<'a>(&'a self, section: &str, key: &str, default: &'a str) -> &'a str {
        self.get(section, key).unwrap_or(default)
    }

    fn f64_list(&self, section: &str, key: &str, raw: &str) -> CliResult<Vec<f64>> {
        raw.split_whitespace()
            .map(|tok| parse_f64(tok, section, key))
            .collect()
    }

    fn f64_list_or(&self, section: &str, key: &str, default: &str) -> CliResult<Vec<f64>> {
        let raw = self.str_or(section, key, default).to_owned();
        self.f64_list(section, key, &raw)
    }

    fn u32_list_or(&self, section: &str, key: &str, default: &str) -> CliResult<Vec<u32>> {
        self.str_or(section, key, default)
            .split_whitespace()
            .map(|tok| {
                tok.parse().map_err(|_| {
                    CliError::Validation(format!(
                        "[{section}] {key}: not an integer: `{tok}`"
                    ))
                })
            })
            .collect()
    }

    /// Flattened `section.key = value` pairs, sorted, for manifest echo.
    pub fn echo(&self) -> Vec<(String, String)> {
        self.sections
            .iter()
            .flat_map(|(sec, kv)| {
                kv.iter()
                    .map(move |(k, v)| (format!("{sec}.{k}"), v.clone()))
            })
            .collect()
    }
}

fn parse_f64(tok: &str, section: &str, key: &str) -> CliResult<f64> {
    tok.parse().map_err(|_| {
        CliError::Validation(format!("[{section}] {key}: not a number: `{tok}`"))
    })
}

/// Experiment block with every knob resolved to a concrete value.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub k_ladder: Vec<f64>,
    pub n_ladder: Vec<u32>,
    pub cutoff: f64,
    pub side: CutoffSide,
    /// `None` means `auto`: ten times the scheme tolerance `2(h^2 + tau)`.
    pub tolerance: Option<f64>,
    pub seed: u64,
    pub eps0: f64,
    pub nu: f64,
    pub viscosity_radii: Vec<f64>,
    pub viscosity_tol: f64,
    pub probe_eps: f64,
    pub eps_ladder: Vec<f64>,
    pub config: SchemeConfig,
}

/// Fully resolved problem: grid, preset, effective constants, experiment.
pub struct Problem {
    pub grid: Arc<SpaceTimeGrid>,
    pub preset: Preset,
    pub bounds: EllipticityBounds,
    pub constants: StructureConstants,
    pub experiment: Experiment,
    pub echo: Vec<(String, String)>,
    pub spec_name: String,
}

impl Problem {
    pub fn scheme_tolerance(&self) -> f64 {
        2.0 * (self.grid.h() * self.grid.h() + self.grid.tau())
    }

    pub fn gap_tolerance(&self) -> f64 {
        self.experiment
            .tolerance
            .unwrap_or(10.0 * self.scheme_tolerance())
    }

    pub fn coeffs(&self) -> &IsaacsCoefficients {
        &self.preset.coeffs
    }
}

pub fn resolve(raw: &RawSpec, seed_flag: Option<u64>) -> CliResult<Problem> {
    // -- preset ----------------------------------------------------------
    let preset_name = raw.require("problem", "preset")?;
    let kappa_override = raw.get("constants", "kappa").is_some();
    let kappa = raw.f64_or("constants", "kappa", f64::NAN)?;
    let preset = if preset_name == "isaacs-holder" && kappa_override {
        isaacs_holder(kappa)?
    } else {
        match by_name(preset_name) {
            Some(p) => p?,
            None => {
                return Err(CliError::Validation(format!(
                    "[problem] preset: unknown `{preset_name}` (expected linear-heat, \
                     isaacs-2x2, isaacs-holder or measurable-f)"
                )))
            }
        }
    };

    // -- constants (validation/harness overrides; coefficient families come
    //    from the preset's closed forms and are not editable here) --------
    let delta = raw.f64_or("constants", "delta", preset.bounds.delta())?;
    let delta_bar = raw.f64_or("constants", "delta_bar", preset.bounds.delta_bar())?;
    let bounds = EllipticityBounds::new(delta, delta_bar)
        .map_err(|e| CliError::Validation(format!("[constants]: {e}")))?;
    let kappa = if kappa_override { kappa } else { preset.constants.kappa };
    let k0 = raw.f64_or("constants", "k0", preset.constants.k0)?;
    let tau_mod = raw.f64_or("constants", "tau_mod", preset.constants.tau_mod)?;
    let omega = match raw.get("constants", "omega") {
        Some(flat) => {
            let nums = raw.f64_list("constants", "omega", flat)?;
            if nums.len() % 2 != 0 || nums.is_empty() {
                return Err(CliError::Validation(
                    "[constants] omega: expected flattened (distance, value) pairs".into(),
                ));
            }
            OmegaTable::new(nums.chunks_exact(2).map(|c| (c[0], c[1])).collect())
                .map_err(|e| CliError::Validation(format!("[constants] omega: {e}")))?
        }
        None => preset.constants.omega.clone(),
    };
    let constants = StructureConstants::new(k0, kappa, omega, tau_mod)
        .map_err(|e| CliError::Validation(format!("[constants]: {e}")))?;

    // -- grid --------------------------------------------------------------
    let dim = raw.u64_or("grid", "dim", preset.box_lo.len() as u64)? as usize;
    let box_lo = raw.f64_list_or("grid", "box_lo", &join(&preset.box_lo))?;
    let box_hi = raw.f64_list_or("grid", "box_hi", &join(&preset.box_hi))?;
    if box_lo.len() != dim || box_hi.len() != dim {
        return Err(CliError::Validation(format!(
            "[grid] box_lo/box_hi: expected {dim} coordinates, got {}/{}",
            box_lo.len(),
            box_hi.len()
        )));
    }
    let h = raw.f64("grid", "h")?;
    let horizon = raw.f64("grid", "horizon")?;
    let tau_raw = raw.str_or("grid", "tau", "auto").to_owned();
    let mask = raw.str_or("grid", "mask", "box").to_owned();

    let build = |tau: f64| -> CliResult<Arc<SpaceTimeGrid>> {
        let grid = match mask.as_str() {
            "box" => SpaceTimeGrid::box_domain(dim, &box_lo, &box_hi, h, horizon, tau),
            "disc" => {
                let center = raw.f64_list_or("grid", "disc_center", "")?;
                if center.len() != dim {
                    return Err(CliError::Validation(format!(
                        "[grid] disc_center: expected {dim} coordinates, got {}",
                        center.len()
                    )));
                }
                let radius = raw.f64("grid", "disc_radius")?;
                SpaceTimeGrid::disc_domain(
                    dim, &box_lo, &box_hi, h, horizon, tau, &center, radius,
                )
            }
            "file" => {
                let file = raw.require("grid", "mask_file")?;
                let points = read_mask_points(file, dim)?;
                let half = 0.5 * h;
                SpaceTimeGrid::with_mask_fn(dim, &box_lo, &box_hi, h, horizon, tau, |x| {
                    points.iter().any(|p| {
                        p.iter().zip(x).all(|(a, b)| (a - b).abs() <= half)
                    })
                })
            }
            other => {
                return Err(CliError::Validation(format!(
                    "[grid] mask: unknown `{other}` (expected box, disc or file)"
                )))
            }
        };
        grid.map_err(|e| CliError::Validation(format!("[grid]: {e}")))
    };

    let grid = if tau_raw == "auto" {
        // CFL limits need a grid to sample coefficients on; probe with a
        // throwaway fine step, then rebuild at the resolved one.
        let probe = build(horizon / 1024.0)?;
        let times: Vec<f64> = (0..=8).map(|i| horizon * i as f64 / 8.0).collect();
        let limit = cfl_limit(&probe, &preset.coeffs, &bounds, &times)?;
        let tau = auto_tau(horizon, limit, 0.9)?;
        build(tau)?
    } else {
        build(parse_f64(&tau_raw, "grid", "tau")?)?
    };

    // -- experiment --------------------------------------------------------
    let side = match raw.str_or("experiment", "side", "upper") {
        "upper" => CutoffSide::Upper,
        "lower" => CutoffSide::Lower,
        other => {
            return Err(CliError::Validation(format!(
                "[experiment] side: unknown `{other}` (expected upper or lower)"
            )))
        }
    };
    let tolerance = match raw.str_or("experiment", "tolerance", "auto") {
        "auto" => None,
        tok => Some(parse_f64(tok, "experiment", "tolerance")?),
    };
    let mut config = SchemeConfig::default();
    if let Some(ms) = raw.get("experiment", "max_steps") {
        config.max_steps = ms.parse().map_err(|_| {
            CliError::Validation(format!(
                "[experiment] max_steps: not an integer: `{ms}`"
            ))
        })?;
    }
    let experiment = Experiment {
        k_ladder: raw.f64_list_or("experiment", "k_ladder", "1 2 4 8 16 32 64 128 256")?,
        n_ladder: raw.u32_list_or("experiment", "n_ladder", "2 4 8 16")?,
        cutoff: raw.f64_or("experiment", "cutoff", 4.0)?,
        side,
        tolerance,
        seed: seed_flag.map_or_else(|| raw.u64_or("experiment", "seed", 0), Ok)?,
        eps0: raw.f64_or("experiment", "eps0", 0.5)?,
        nu: raw.f64_or("experiment", "nu", 0.25)?,
        viscosity_radii: raw.f64_list_or("experiment", "viscosity_radii", "0.2 0.4")?,
        viscosity_tol: raw.f64_or("experiment", "viscosity_tol", 10.0)?,
        probe_eps: raw.f64_or("experiment", "probe_eps", 1e-6)?,
        eps_ladder: raw.f64_list_or("experiment", "eps_ladder", "0.1 0.2 0.4")?,
        config,
    };

    Ok(Problem {
        grid,
        preset,
        bounds,
        constants,
        experiment,
        echo: raw.echo(),
        spec_name: raw.name.clone(),
    })
}

fn join(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn read_mask_points(file: &str, dim: usize) -> CliResult<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(file).map_err(|e| {
        CliError::Validation(format!("[grid] mask_file: cannot read `{file}`: {e}"))
    })?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let coords: Result<Vec<f64>, _> =
            line.split_whitespace().map(|t| t.parse::<f64>()).collect();
        match coords {
            Ok(c) if c.len() == dim => points.push(c),
            _ => {
                return Err(CliError::Validation(format!(
                    "[grid] mask_file: line {} of `{file}` is not {dim} numbers",
                    lineno + 1
                )))
            }
        }
    }
    if points.is_empty() {
        return Err(CliError::Validation(format!(
            "[grid] mask_file: `{file}` lists no points"
        )));
    }
    Ok(points)
}
