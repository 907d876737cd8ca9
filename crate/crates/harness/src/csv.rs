//! Plot-ready CSV output with fixed formatting.
//!
//! Numbers carry 9 significant digits: positional notation for magnitudes in
//! `[1e-5, 1e9)`, scientific otherwise. Trailing zeros are kept so that
//! every value of a column has the same shape.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;
use uniflux_core::observables::NormalizedProfile;
use uniflux_core::FluxEstimate;

pub const PROFILE_HEADER: &str = "bin_center,concentration,stderr";
pub const FLUX_HEADER: &str = "x1,window,j_lr,j_rl,j_net,stderr_lr,stderr_rl,n_windows";
pub const SUMMARY_HEADER: &str = "bin_center,ratio,ratio_stderr";

#[derive(Debug, Error)]
#[error("writing {path}: {source}")]
pub struct CsvError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

/// Per-bin ratio of two profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioSummary {
    pub dt_num: f64,
    pub dt_den: f64,
    pub centers: Vec<f64>,
    pub ratio: Vec<f64>,
    pub ratio_stderr: Vec<f64>,
}

/// Formats `x` with 9 significant digits.
pub fn fmt_sig9(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0.00000000".into();
    }
    let sci = format!("{x:.8e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..].parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        format!("{x:.*}", (8 - exp) as usize)
    } else {
        sci
    }
}

pub fn profile_csv(profile: &NormalizedProfile) -> String {
    let mut s = format!("{PROFILE_HEADER}\n");
    for i in 0..profile.centers.len() {
        let _ = writeln!(
            s,
            "{},{},{}",
            fmt_sig9(profile.centers[i]),
            fmt_sig9(profile.concentration[i]),
            fmt_sig9(profile.stderr[i])
        );
    }
    s
}

pub fn flux_csv(fluxes: &[FluxEstimate]) -> String {
    let mut s = format!("{FLUX_HEADER}\n");
    for f in fluxes {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            fmt_sig9(f.x1),
            fmt_sig9(f.window),
            fmt_sig9(f.j_lr),
            fmt_sig9(f.j_rl),
            fmt_sig9(f.j_net),
            fmt_sig9(f.stderr_lr),
            fmt_sig9(f.stderr_rl),
            f.n_windows
        );
    }
    s
}

pub fn summary_csv(summary: &RatioSummary) -> String {
    let mut s = format!(
        "# dt_num={}, dt_den={}\n{SUMMARY_HEADER}\n",
        summary.dt_num, summary.dt_den
    );
    for i in 0..summary.centers.len() {
        let _ = writeln!(
            s,
            "{},{},{}",
            fmt_sig9(summary.centers[i]),
            fmt_sig9(summary.ratio[i]),
            fmt_sig9(summary.ratio_stderr[i])
        );
    }
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CsvError> {
    std::fs::write(path, contents).map_err(|source| CsvError {
        path: path.to_path_buf(),
        source,
    })
}

pub fn emit_profile(profile: &NormalizedProfile, path: &Path) -> Result<(), CsvError> {
    write_file(path, &profile_csv(profile))
}

pub fn emit_flux(fluxes: &[FluxEstimate], path: &Path) -> Result<(), CsvError> {
    write_file(path, &flux_csv(fluxes))
}

pub fn emit_summary(summary: &RatioSummary, path: &Path) -> Result<(), CsvError> {
    write_file(path, &summary_csv(summary))
}
