//! Artifact emission: CSV files (UTF-8, LF line endings, header row, 17
//! significant digits) and the run manifest.  A single writer produces each
//! file in one `fs::write`, so partially written artifacts never survive a
//! crash mid-row.

use crate::spec::{CliResult, Problem};
use isaacs_core::grid::GridFunction;
use std::path::{Path, PathBuf};

/// 17 significant digits (one leading plus sixteen fractional), scientific
/// notation, locale-independent.  Infinities and NaNs print as `inf`/`NaN`,
/// which round-trips through standard float parsers.
pub fn sig(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut text = String::with_capacity(rows.len() * 32 + 64);
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Solution dump: one row per masked node in deterministic node order.
pub fn write_solution(path: &Path, u: &GridFunction) -> CliResult<()> {
    let grid = u.grid();
    let mut header = vec!["time".to_owned()];
    for axis in 0..grid.dim() {
        header.push(format!("x{}", axis + 1));
    }
    header.push("value".to_owned());
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut rows = Vec::new();
    for k in 0..grid.n_time() {
        for s in 0..grid.n_space() {
            if !grid.is_masked(s) {
                continue;
            }
            let mut row = vec![sig(grid.time(k))];
            row.extend(grid.coord(s).iter().map(|&c| sig(c)));
            row.push(sig(u.value(isaacs_core::NodeId { time: k, space: s })));
            rows.push(row);
        }
    }
    write_csv(path, &header_refs, &rows)
}

/// Run manifest in the same flat sectioned format as the input spec:
/// command and inputs, crate versions, every constant the run actually
/// used, and a verbatim echo of the parsed spec.  Absolute paths are
/// deliberately absent so reruns from different directories stay
/// byte-identical.
pub fn write_manifest(dir: &Path, command: &str, problem: &Problem) -> CliResult<()> {
    let e = &problem.experiment;
    let mut text = String::new();
    text.push_str("[run]\n");
    text.push_str(&format!("command = {command}\n"));
    text.push_str(&format!("spec = {}\n", problem.spec_name));
    text.push_str(&format!("seed = {}\n", e.seed));
    text.push_str("\n[versions]\n");
    text.push_str(&format!("isaacs-cli = {}\n", env!("CARGO_PKG_VERSION")));
    text.push_str(&format!("isaacs-core = {}\n", isaacs_core::VERSION));
    text.push_str("\n[constants]\n");
    for (name, value) in [
        ("delta", problem.bounds.delta()),
        ("delta_bar", problem.bounds.delta_bar()),
        ("kappa", problem.constants.kappa),
        ("gamma", problem.constants.gamma),
        ("k0", problem.constants.k0),
        ("tau_mod", problem.constants.tau_mod),
        ("eps0", e.eps0),
        ("nu", e.nu),
        ("h", problem.grid.h()),
        ("tau", problem.grid.tau()),
        ("gap_tolerance", problem.gap_tolerance()),
        ("scheme_tolerance", problem.scheme_tolerance()),
    ] {
        text.push_str(&format!("{name} = {}\n", sig(value)));
    }
    text.push_str("\n[spec-echo]\n");
    for (key, value) in &problem.echo {
        text.push_str(&format!("{key} = {value}\n"));
    }
    std::fs::write(dir.join("manifest.txt"), text)?;
    Ok(())
}

/// Create the output directory (and parents) if needed, returning it.
pub fn prepare_out_dir(dir: &Path) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}
