//! Shooting calibration of the two source rates.
//!
//! The rates start at the leading-order strength `√(ε/(πγΔt)) C` and are
//! rescaled by `target / achieved` after every run until the concentration
//! next to each boundary matches its bath. Each iteration reuses the same
//! seed, so successive runs differ only through the rates.

use crate::config::ExperimentConfig;
use crate::experiment::{run_experiment, RunError};
use thiserror::Error;
use uniflux_core::observables::{measured_net_flux, NormalizedProfile};
use uniflux_core::sampling::EntryKind;
use uniflux_core::sources::source_strength;
use uniflux_core::{EntryDistribution, InjectionPolicy, Side, SourceSpec};

pub const MAX_ITERATIONS: usize = 20;
/// Bins averaged next to each boundary.
pub const BOUNDARY_BINS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationIterate {
    pub rate_lo: f64,
    pub rate_hi: f64,
    pub achieved_c_lo: f64,
    pub achieved_c_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationResult {
    pub rate_lo: f64,
    pub rate_hi: f64,
    pub achieved_c_lo: f64,
    pub achieved_c_hi: f64,
    pub j_net_estimate: f64,
    pub j_net_stderr: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("calibration targets must be finite and non-negative, got ({0}, {1})")]
    BadTargets(f64, f64),
    #[error("calibration tolerance must lie in (0, 0.1], got {0}")]
    BadTolerance(f64),
    #[error("calibration needs at least {min} bins, got {got}", min = 2 * BOUNDARY_BINS)]
    TooFewBins { got: usize },
    #[error("calibration did not converge in {} iterations: {}", iterates.len(), describe(iterates))]
    NotConverged { iterates: Vec<CalibrationIterate> },
    #[error(transparent)]
    Run(#[from] RunError),
}

fn describe(iterates: &[CalibrationIterate]) -> String {
    iterates
        .iter()
        .map(|i| {
            format!(
                "[rates ({:.6e}, {:.6e}) -> c ({:.6}, {:.6})]",
                i.rate_lo, i.rate_hi, i.achieved_c_lo, i.achieved_c_hi
            )
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Mean concentration of the [`BOUNDARY_BINS`] bins nearest each end.
pub fn boundary_concentrations(profile: &NormalizedProfile) -> (f64, f64) {
    let c = &profile.concentration;
    let k = BOUNDARY_BINS.min(c.len());
    let lo = c[..k].iter().sum::<f64>() / k as f64;
    let hi = c[c.len() - k..].iter().sum::<f64>() / k as f64;
    (lo, hi)
}

/// Whether `achieved` is within `tolerance` of `target`. The tolerance is
/// relative to the larger bath concentration, so a zero target is judged on
/// the same scale as its partner.
pub fn within_tolerance(achieved: f64, target: f64, scale: f64, tolerance: f64) -> bool {
    (achieved - target).abs() <= tolerance * scale
}

fn side_spec(config: &ExperimentConfig, side: Side, concentration: f64, rate: f64) -> SourceSpec {
    let (policy, entry) = match config.source(side) {
        Some(s) => (s.policy, s.entry),
        None => (
            InjectionPolicy::Poisson,
            EntryDistribution::for_params(EntryKind::ResidualNormal, &config.params),
        ),
    };
    SourceSpec {
        side,
        concentration,
        rate,
        policy,
        entry,
    }
}

fn rescale(rate: f64, target: f64, achieved: f64, initial: f64) -> f64 {
    if target == 0.0 {
        0.0
    } else if achieved > 0.0 {
        rate * target / achieved
    } else if rate > 0.0 {
        2.0 * rate
    } else {
        initial
    }
}

/// Finds source rates holding `targets = (C_L, C_R)` at the two boundaries.
///
/// Policies and entry laws are taken from the sources already in `config`;
/// a missing side gets a Poisson source with residual-normal entry.
pub fn calibrate_sources(
    targets: (f64, f64),
    config: &ExperimentConfig,
    tolerance: f64,
) -> Result<CalibrationResult, CalibrationError> {
    let (c_lo, c_hi) = targets;
    if !(c_lo.is_finite() && c_hi.is_finite() && c_lo >= 0.0 && c_hi >= 0.0) {
        return Err(CalibrationError::BadTargets(c_lo, c_hi));
    }
    if !(tolerance > 0.0 && tolerance <= 0.1) {
        return Err(CalibrationError::BadTolerance(tolerance));
    }
    if config.n_bins < 2 * BOUNDARY_BINS {
        return Err(CalibrationError::TooFewBins { got: config.n_bins });
    }
    let p = &config.params;
    let initial = (
        source_strength(c_lo, p, 0.0, Side::Lo),
        source_strength(c_hi, p, 0.0, Side::Hi),
    );
    let scale = c_lo.max(c_hi);
    let (mut rate_lo, mut rate_hi) = initial;
    let mut iterates = Vec::new();
    for iteration in 1..=MAX_ITERATIONS {
        let mut trial = config.clone();
        trial.sources = vec![
            side_spec(config, Side::Lo, c_lo, rate_lo),
            side_spec(config, Side::Hi, c_hi, rate_hi),
        ];
        let out = run_experiment(&trial)?;
        let (a_lo, a_hi) = if out.profile.total_sim_time > 0.0 {
            boundary_concentrations(&out.profile.normalize().map_err(RunError::from)?)
        } else {
            (0.0, 0.0)
        };
        iterates.push(CalibrationIterate {
            rate_lo,
            rate_hi,
            achieved_c_lo: a_lo,
            achieved_c_hi: a_hi,
        });
        let converged = within_tolerance(a_lo, c_lo, scale, tolerance) && within_tolerance(a_hi, c_hi, scale, tolerance);
        if converged {
            let (j_net, j_net_stderr) = if out.ledger.elapsed > 0.0 {
                let net = measured_net_flux(&out.ledger).map_err(RunError::from)?;
                (net.j_net, net.stderr)
            } else {
                (0.0, 0.0)
            };
            return Ok(CalibrationResult {
                rate_lo,
                rate_hi,
                achieved_c_lo: a_lo,
                achieved_c_hi: a_hi,
                j_net_estimate: j_net,
                j_net_stderr,
                iterations: iteration,
                converged: true,
            });
        }
        rate_lo = rescale(rate_lo, c_lo, a_lo, initial.0);
        rate_hi = rescale(rate_hi, c_hi, a_hi, initial.1);
    }
    Err(CalibrationError::NotConverged { iterates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Workload;
    use uniflux_core::SimParams;

    fn config(n: u64) -> ExperimentConfig {
        let p = SimParams::new(1.0, 1000.0, 1.0, 0.0, 1.0);
        ExperimentConfig::new(p, Workload::Trajectories(n))
    }

    #[test]
    fn vacuum_converges_immediately() {
        let r = calibrate_sources((0.0, 0.0), &config(1000), 0.02).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert_eq!((r.rate_lo, r.rate_hi), (0.0, 0.0));
        assert_eq!(r.j_net_estimate, 0.0);
    }

    #[test]
    fn argument_checks() {
        assert!(matches!(
            calibrate_sources((-1.0, 0.0), &config(10), 0.02),
            Err(CalibrationError::BadTargets(..))
        ));
        assert!(matches!(
            calibrate_sources((1.0, 0.0), &config(10), 0.5),
            Err(CalibrationError::BadTolerance(_))
        ));
        let mut c = config(10);
        c.n_bins = 3;
        assert!(matches!(
            calibrate_sources((1.0, 0.0), &c, 0.05),
            Err(CalibrationError::TooFewBins { got: 3 })
        ));
    }

    #[test]
    fn non_convergence_reports_every_iterate() {
        // a two-trajectory ensemble cannot resolve a 1e-6 tolerance
        let mut c = config(2);
        c.n_bins = 4;
        match calibrate_sources((1.0, 1.0), &c, 1e-6) {
            Err(CalibrationError::NotConverged { iterates }) => assert_eq!(iterates.len(), MAX_ITERATIONS),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rescale_rules() {
        assert_eq!(rescale(2.0, 1.0, 0.5, 9.0), 4.0);
        assert_eq!(rescale(2.0, 0.0, 0.5, 9.0), 0.0);
        assert_eq!(rescale(2.0, 1.0, 0.0, 9.0), 4.0);
        assert_eq!(rescale(0.0, 1.0, 0.0, 9.0), 9.0);
    }

    #[test]
    fn boundary_average() {
        let p = NormalizedProfile {
            centers: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            concentration: vec![1.0, 0.8, 0.5, 0.2, 0.0],
            stderr: vec![0.0; 5],
        };
        assert_eq!(boundary_concentrations(&p), (0.9, 0.1));
    }
}
