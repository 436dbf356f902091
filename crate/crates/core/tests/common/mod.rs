#![allow(dead_code)]

use std::path::PathBuf;

use memkit_core::linalg::{Matrix, Vector};
use memkit_core::nodal::SemiExplicitDAE;
use memkit_core::{parse_netlist, Circuit};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture(name: &str) -> Circuit {
    let path = fixture_dir().join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_netlist(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Every fixture that parses, sorted by file name.
pub fn all_fixtures() -> Vec<(String, Circuit)> {
    let mut names: Vec<String> = std::fs::read_dir(fixture_dir())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".ckt"))
        .collect();
    names.sort();
    names
        .into_iter()
        .filter_map(|n| {
            let text = std::fs::read_to_string(fixture_dir().join(&n)).unwrap();
            parse_netlist(&text).ok().map(|c| (n, c))
        })
        .collect()
}

/// Nondegenerate fixtures with positive incremental values.
pub const NONDEGENERATE: [&str; 15] = [
    "rc.ckt",
    "gc.ckt",
    "rlc_series.ckt",
    "rl_current_driven.ckt",
    "ladder.ckt",
    "chua_m_driven.ckt",
    "chua_w_driven.ckt",
    "josephson_rl.ckt",
    "meminductor.ckt",
    "mixed_memristive.ckt",
    "hm_rc.ckt",
    "chua_series_pair.ckt",
    "hybrid_series.ckt",
    "chua_parallel_pair.ckt",
    "hybrid_parallel.ckt",
];

/// VCM-loop and ILM-cutset fixtures.
pub const DEGENERATE: [&str; 6] = [
    "vc_loop.ckt",
    "c_mc_loop.ckt",
    "c_loop.ckt",
    "il_cutset.ckt",
    "iml_cutset.ckt",
    "lml_cutset.ckt",
];

/// Central differences of the stacked residual, column by column.
pub fn fd_jacobian(dae: &SemiExplicitDAE, z: &Vector, t: f64) -> Matrix {
    let n = dae.dim();
    let mut out = Matrix::zeros(n, n);
    for k in 0..n {
        let step = 1e-6 * z[k].abs().max(1.0);
        let mut plus = z.clone();
        let mut minus = z.clone();
        plus[k] += step;
        minus[k] -= step;
        let d = (dae.residual(&plus, t).unwrap() - dae.residual(&minus, t).unwrap()) / (2.0 * step);
        out.set_column(k, &d);
    }
    out
}

/// Largest entrywise `|a − b| / max(1, |b|)`.
pub fn max_relative_error(a: &Matrix, b: &Matrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}
