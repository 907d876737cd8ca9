//! Canned experiments: the four profile figures and the flux, matching and
//! mean-squared-displacement checks.
//!
//! Every preset uses ε = 1 and, unless noted, γ = 1000 on `[0, 1]`.
//!
//! * `fig1`, `fig2`: 10⁴ trajectories from a single source on the left at
//!   Δt = 1, absorbed at both ends. `fig1` injects on the interface and lets
//!   the first step carry the particle in; `fig2` uses residual-normal entry.
//! * `fig3`: Δt ∈ {4, 1, 0.25} at a fixed injection rate, the Δt = 1 source
//!   strength for C = 1.
//! * `fig4`: the same Δt set with the rate rescaled to `√(ε/(πγΔt))`.
//! * `uf-validate`: the periodic equilibrium ring at windows 2/γ, 1 and 4.
//! * `match-check`: Brownian fluxes at window 2/γ against Langevin fluxes on
//!   random probes.
//! * `msd-crossover`: free Langevin particles, γ = 1: stationary velocity
//!   variance and the ballistic-to-diffusive MSD crossover.

use crate::config::{ExperimentConfig, Workload};
use crate::csv::{self, CsvError, RatioSummary};
use crate::experiment::{run_experiment, RunError};
use rand::Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;
use uniflux_core::dynamics::langevin_update;
use uniflux_core::flux::{analytic_uf_brownian, analytic_uf_langevin, FluxError, PeriodicHarness};
use uniflux_core::observables::{fit_eval_weights, fit_linear, fit_profile, NormalizedProfile};
use uniflux_core::sampling::{gaussian_increment, EntryKind};
use uniflux_core::sources::source_strength;
use uniflux_core::{
    AbsorptionLedger, ConcentrationProfile, DensityProbe, EntryDistribution, FluxEstimate, ForceField,
    InjectionPolicy, LinearFit, RngStream, Side, SimParams, SourceSpec,
};

pub const FIG_TRAJECTORIES: u64 = 10_000;
pub const FIG_BINS: usize = 50;
/// First bin (0-based) of the reference line in the depletion test.
pub const DEPLETION_FIT_START: usize = 9;
pub const SCAN_DTS: [f64; 3] = [4.0, 1.0, 0.25];
pub const SCAN_TRAJECTORIES: u64 = 200_000;
pub const UF_PARTICLES: usize = 10_000;
pub const UF_WINDOWS: usize = 2000;
pub const MATCH_PROBES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    UfValidate,
    MatchCheck,
    MsdCrossover,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Fig1,
        Preset::Fig2,
        Preset::Fig3,
        Preset::Fig4,
        Preset::UfValidate,
        Preset::MatchCheck,
        Preset::MsdCrossover,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::UfValidate => "uf-validate",
            Preset::MatchCheck => "match-check",
            Preset::MsdCrossover => "msd-crossover",
        }
    }
}

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("unknown preset `{0}` (known: fig1, fig2, fig3, fig4, uf-validate, match-check, msd-crossover)")]
    Unknown(String),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Flux(#[from] FluxError),
    #[error(transparent)]
    Csv(#[from] CsvError),
}

impl FromStr for Preset {
    type Err = PresetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| PresetError::Unknown(s.to_string()))
    }
}

/// Independent master seed for sub-run `tag` of a preset.
pub fn subseed(seed: u64, tag: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(tag))
}

pub fn paper_params() -> SimParams {
    SimParams::new(1.0, 1000.0, 1.0, 0.0, 1.0)
}

/// Single left source at bath concentration 1, absorbing ends.
pub fn left_source_config(params: SimParams, rate: f64, entry: EntryKind, n: u64, seed: u64) -> ExperimentConfig {
    let mut config = ExperimentConfig::new(params, Workload::Trajectories(n)).with_source(SourceSpec {
        side: Side::Lo,
        concentration: 1.0,
        rate,
        policy: InjectionPolicy::Poisson,
        entry: EntryDistribution::for_params(entry, &params),
    });
    config.n_bins = FIG_BINS;
    config.seed = seed;
    config
}

/// Profile from one run, with the statistics behind the linearity and
/// depletion tests.
#[derive(Debug, Clone)]
pub struct ProfileReport {
    pub raw: ConcentrationProfile,
    pub profile: NormalizedProfile,
    pub ledger: AbsorptionLedger,
}

impl ProfileReport {
    fn from_run(raw: ConcentrationProfile, ledger: AbsorptionLedger) -> Result<Self, PresetError> {
        let profile = raw.normalize().map_err(RunError::from)?;
        Ok(Self { raw, profile, ledger })
    }

    fn n(&self) -> usize {
        self.profile.centers.len()
    }

    /// Least-squares line through every bin.
    pub fn linear_fit(&self) -> LinearFit {
        fit_profile(&self.profile, 0..self.n()).expect("at least 3 bins")
    }

    /// Largest `|c_k − fit(x_k)|` in units of its own standard error, which
    /// accounts for the fit being estimated from the same bins.
    pub fn max_residual_z(&self) -> f64 {
        let fit = self.linear_fit();
        let n = self.n();
        (0..n)
            .map(|k| {
                let x = self.profile.centers[k];
                let mut w: Vec<f64> = fit_eval_weights(&self.profile.centers, 0..n, x)
                    .into_iter()
                    .map(|a| -a)
                    .collect();
                w[k] += 1.0;
                let se = self.raw.functional_stderr(&w).expect("matching weights");
                (self.profile.concentration[k] - fit.eval(x)).abs() / se
            })
            .fold(0.0, f64::max)
    }

    /// Shortfall of the first bin below the line through bins
    /// `DEPLETION_FIT_START..`: `(relative deficit, deficit / stderr)`.
    pub fn first_bin_deficit(&self) -> (f64, f64) {
        let range = DEPLETION_FIT_START..self.n();
        let fit = fit_profile(&self.profile, range.clone()).expect("at least 3 bins");
        let x0 = self.profile.centers[0];
        let expected = fit.eval(x0);
        let deficit = expected - self.profile.concentration[0];
        let mut w = fit_eval_weights(&self.profile.centers, range, x0);
        w[0] -= 1.0;
        let se = self.raw.functional_stderr(&w).expect("matching weights");
        (deficit / expected, deficit / se)
    }
}

fn profile_figure(entry: EntryKind, n: u64, seed: u64) -> Result<ProfileReport, PresetError> {
    let p = paper_params();
    let rate = source_strength(1.0, &p, 0.0, Side::Lo);
    let out = run_experiment(&left_source_config(p, rate, entry, n, seed))?;
    ProfileReport::from_run(out.profile, out.ledger)
}

/// Point entry: particles start on the interface.
pub fn fig1(seed: u64) -> Result<ProfileReport, PresetError> {
    profile_figure(EntryKind::PointAtBoundary, FIG_TRAJECTORIES, seed)
}

/// Residual-normal entry.
pub fn fig2(seed: u64) -> Result<ProfileReport, PresetError> {
    profile_figure(EntryKind::ResidualNormal, FIG_TRAJECTORIES, seed)
}

#[derive(Debug, Clone)]
pub struct DtRun {
    pub dt: f64,
    pub rate: f64,
    pub report: ProfileReport,
}

/// Profiles at several time steps.
#[derive(Debug, Clone)]
pub struct DtScanReport {
    pub runs: Vec<DtRun>,
    pub summary: RatioSummary,
}

impl DtScanReport {
    pub fn run(&self, dt: f64) -> &DtRun {
        self.runs.iter().find(|r| r.dt == dt).expect("scanned time step")
    }

    /// `(mean concentration, stderr)` of the run at `dt`.
    pub fn mean_concentration(&self, dt: f64) -> (f64, f64) {
        let r = &self.run(dt).report;
        let n = r.profile.centers.len();
        let se = r.raw.functional_stderr(&vec![1.0 / n as f64; n]).expect("matching weights");
        (r.profile.mean_concentration(), se)
    }

    /// Ratio of mean concentrations and its stderr, runs taken independent.
    pub fn mean_ratio(&self, num: f64, den: f64) -> (f64, f64) {
        let (a, sa) = self.mean_concentration(num);
        let (b, sb) = self.mean_concentration(den);
        let r = a / b;
        (r, r * ((sa / a).powi(2) + (sb / b).powi(2)).sqrt())
    }

    /// Largest `|c_num / c_den − 1|` over bins, excluding the first and last.
    pub fn max_interior_deviation(&self, num: f64, den: f64) -> f64 {
        let (a, b) = (&self.run(num).report.profile, &self.run(den).report.profile);
        let n = a.concentration.len();
        (1..n - 1)
            .map(|k| (a.concentration[k] / b.concentration[k] - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|c_num − c_den|` over the same bins, in units of the bath
    /// concentration.
    pub fn max_interior_abs_deviation(&self, num: f64, den: f64) -> f64 {
        let (a, b) = (&self.run(num).report.profile, &self.run(den).report.profile);
        let n = a.concentration.len();
        (1..n - 1)
            .map(|k| (a.concentration[k] - b.concentration[k]).abs())
            .fold(0.0, f64::max)
    }
}

fn ratio_summary(num: &DtRun, den: &DtRun) -> RatioSummary {
    let (a, b) = (&num.report.profile, &den.report.profile);
    let ratio: Vec<f64> = a.concentration.iter().zip(&b.concentration).map(|(x, y)| x / y).collect();
    let ratio_stderr = (0..ratio.len())
        .map(|k| {
            let rel_a = a.stderr[k] / a.concentration[k];
            let rel_b = b.stderr[k] / b.concentration[k];
            ratio[k].abs() * (rel_a * rel_a + rel_b * rel_b).sqrt()
        })
        .collect();
    RatioSummary {
        dt_num: num.dt,
        dt_den: den.dt,
        centers: a.centers.clone(),
        ratio,
        ratio_stderr,
    }
}

fn dt_scan(scaled_rate: bool, ratio: (f64, f64), n: u64, seed: u64) -> Result<DtScanReport, PresetError> {
    let base = paper_params();
    let fixed_rate = source_strength(1.0, &base, 0.0, Side::Lo);
    let mut runs = Vec::new();
    for (i, &dt) in SCAN_DTS.iter().enumerate() {
        let p = base.with_dt(dt);
        let rate = if scaled_rate {
            source_strength(1.0, &p, 0.0, Side::Lo)
        } else {
            fixed_rate
        };
        let config = left_source_config(p, rate, EntryKind::ResidualNormal, n, subseed(seed, i as u64));
        let out = run_experiment(&config)?;
        runs.push(DtRun {
            dt,
            rate,
            report: ProfileReport::from_run(out.profile, out.ledger)?,
        });
    }
    let find = |dt: f64| runs.iter().find(|r| r.dt == dt).expect("scanned time step");
    let summary = ratio_summary(find(ratio.0), find(ratio.1));
    Ok(DtScanReport { runs, summary })
}

/// Fixed injection rate at every Δt; the summary is `c(Δt=1) / c(Δt=4)`.
pub fn fig3(seed: u64) -> Result<DtScanReport, PresetError> {
    dt_scan(false, (1.0, 4.0), SCAN_TRAJECTORIES, seed)
}

/// Rate `∝ 1/√Δt`; the summary is `c(Δt=0.25) / c(Δt=1)`.
pub fn fig4(seed: u64) -> Result<DtScanReport, PresetError> {
    dt_scan(true, (0.25, 1.0), SCAN_TRAJECTORIES, seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UfWindow {
    pub measured: FluxEstimate,
    pub predicted: f64,
}

impl UfWindow {
    /// `(measured / predicted, its stderr)`.
    pub fn ratio(&self) -> (f64, f64) {
        (
            self.measured.j_lr / self.predicted,
            self.measured.stderr_lr / self.predicted,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UfReport {
    pub windows: Vec<UfWindow>,
}

impl UfReport {
    pub fn window(&self, w: f64) -> &UfWindow {
        self.windows
            .iter()
            .find(|u| u.measured.window == w)
            .expect("validated window")
    }

    /// `j_lr(a) / j_lr(b)` with its stderr, windows taken independent.
    pub fn window_ratio(&self, a: f64, b: f64) -> (f64, f64) {
        let (x, y) = (self.window(a).measured, self.window(b).measured);
        let r = x.j_lr / y.j_lr;
        let rel = ((x.stderr_lr / x.j_lr).powi(2) + (y.stderr_lr / y.j_lr).powi(2)).sqrt();
        (r, r * rel)
    }
}

pub fn uf_windows(params: &SimParams) -> [f64; 3] {
    [2.0 / params.gamma, 1.0, 4.0]
}

pub fn uf_validate(seed: u64) -> Result<UfReport, PresetError> {
    let base = paper_params();
    let mut windows = Vec::new();
    for (i, w) in uf_windows(&base).into_iter().enumerate() {
        let harness = PeriodicHarness {
            params: base.with_dt(w),
            n_particles: UF_PARTICLES,
            n_windows: UF_WINDOWS,
            x1: 0.5,
        };
        windows.push(UfWindow {
            measured: harness.run(subseed(seed, i as u64))?,
            predicted: harness.predicted_j_lr(),
        });
    }
    Ok(UfReport { windows })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchSample {
    pub probe: DensityProbe,
    pub params: SimParams,
    pub relative_difference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    pub samples: Vec<MatchSample>,
}

impl MatchReport {
    pub fn max_relative_difference(&self) -> f64 {
        self.samples.iter().map(|s| s.relative_difference).fold(0.0, f64::max)
    }
}

pub fn match_check(seed: u64) -> MatchReport {
    let mut stream = RngStream::new(seed, 0);
    let samples = (0..MATCH_PROBES)
        .map(|_| {
            let params = SimParams::new(
                10f64.powf(stream.random_range(-1.0..1.0)),
                10f64.powf(stream.random_range(-1.0..4.0)),
                1.0,
                0.0,
                1.0,
            );
            let probe = DensityProbe {
                p: stream.random_range(0.0..10.0),
                dpdx: stream.random_range(-100.0..100.0),
                f_at_x1: stream.random_range(-100.0..100.0),
            };
            let bd = analytic_uf_brownian(&probe, &params, 2.0 / params.gamma);
            let ld = analytic_uf_langevin(&probe, &params);
            let scale = ld.j_lr.abs().max(ld.j_rl.abs()).max(f64::MIN_POSITIVE);
            MatchSample {
                probe,
                params,
                relative_difference: bd.max_abs_diff(&ld) / scale,
            }
        })
        .collect();
    MatchReport { samples }
}

/// Free Langevin particles at γ = ε = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdReport {
    pub velocity_variance: f64,
    pub velocity_variance_stderr: f64,
    /// `(t, msd)` on a log-spaced grid.
    pub curve: Vec<(f64, f64)>,
    /// Log-log slope for `t ≤ 0.01/γ`.
    pub short_slope: f64,
    /// Log-log slope for `t ≥ 100/γ`.
    pub long_slope: f64,
}

pub const MSD_VELOCITY_DT: f64 = 0.005;
pub const MSD_CHAINS: u64 = 1000;
pub const MSD_SAMPLES_PER_CHAIN: u64 = 10_000;
pub const MSD_SAMPLE_SPACING: u64 = 40;
pub const MSD_SHORT_DT: f64 = 0.0005;
pub const MSD_SHORT_PARTICLES: u64 = 10_000;
pub const MSD_LONG_DT: f64 = 0.05;
pub const MSD_LONG_PARTICLES: u64 = 10_000;

fn free_params(dt: f64) -> SimParams {
    SimParams::new(1.0, 1.0, dt, f64::MIN, f64::MAX)
}

/// Mean of `v²` over stationary chains and the stderr from chain means.
fn velocity_variance(seed: u64) -> (f64, f64) {
    let p = free_params(MSD_VELOCITY_DT);
    let burn = (10.0 / (p.gamma * p.dt)) as u64;
    let chain_means: Vec<f64> = (0..MSD_CHAINS)
        .into_par_iter()
        .map(|c| {
            let mut s = RngStream::new(seed, c);
            let mut v = gaussian_increment(&mut s, p.epsilon);
            let mut sum = 0.0;
            for k in 0..burn + MSD_SAMPLES_PER_CHAIN * MSD_SAMPLE_SPACING {
                let dw = gaussian_increment(&mut s, p.dt);
                v = langevin_update(0.0, v, dw, p.dt, &p, &ForceField::Zero).1;
                if k >= burn && (k - burn + 1).is_multiple_of(MSD_SAMPLE_SPACING) {
                    sum += v * v;
                }
            }
            sum / MSD_SAMPLES_PER_CHAIN as f64
        })
        .collect();
    let n = chain_means.len() as f64;
    let mean = chain_means.iter().sum::<f64>() / n;
    let var = chain_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// MSD of Maxwellian particles started at the origin, sampled after each
/// step count in `record`.
fn msd_at(dt: f64, n: u64, record: &[u64], stream_base: u64, seed: u64) -> Vec<(f64, f64)> {
    let p = free_params(dt);
    let last = *record.last().expect("nonempty");
    // collected then summed in index order: a parallel float reduction
    // would depend on the thread count
    let per_particle: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = RngStream::new(seed, stream_base + i);
            let (mut x, mut v) = (0.0, gaussian_increment(&mut s, p.epsilon));
            let mut out = vec![0.0; record.len()];
            let mut next = 0;
            for k in 1..=last {
                let dw = gaussian_increment(&mut s, p.dt);
                (x, v) = langevin_update(x, v, dw, p.dt, &p, &ForceField::Zero);
                if k == record[next] {
                    out[next] = x * x;
                    next += 1;
                }
            }
            out
        })
        .collect();
    let mut sums = vec![0.0; record.len()];
    for row in &per_particle {
        sums.iter_mut().zip(row).for_each(|(a, b)| *a += b);
    }
    record
        .iter()
        .zip(sums)
        .map(|(&k, s)| (k as f64 * dt, s / n as f64))
        .collect()
}

fn log_slope(points: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    fit_linear(&xs, &ys).expect("at least 3 points").slope
}

/// Geometric step grid from `from` to `to` steps, deduplicated.
fn geometric_steps(from: f64, to: f64, per_decade: usize) -> Vec<u64> {
    let n = ((to / from).log10() * per_decade as f64).round() as usize;
    let mut steps: Vec<u64> = (0..=n)
        .map(|i| (from * (to / from).powf(i as f64 / n as f64)).round() as u64)
        .collect();
    steps.dedup();
    steps
}

pub fn msd_crossover(seed: u64) -> MsdReport {
    let (velocity_variance, velocity_variance_stderr) = velocity_variance(subseed(seed, 0));
    let short_steps = geometric_steps(0.001 / MSD_SHORT_DT, 0.01 / MSD_SHORT_DT, 10);
    let long_steps = geometric_steps(1.0 / MSD_LONG_DT, 400.0 / MSD_LONG_DT, 10);
    let short = msd_at(MSD_SHORT_DT, MSD_SHORT_PARTICLES, &short_steps, 0, subseed(seed, 1));
    let long = msd_at(MSD_LONG_DT, MSD_LONG_PARTICLES, &long_steps, 0, subseed(seed, 2));
    let tail: Vec<(f64, f64)> = long.iter().copied().filter(|(t, _)| *t >= 100.0 - 1e-9).collect();
    let mut curve = short.clone();
    curve.extend(long.iter().copied());
    MsdReport {
        velocity_variance,
        velocity_variance_stderr,
        short_slope: log_slope(&short),
        long_slope: log_slope(&tail),
        curve,
    }
}

/// Exact MSD of a Maxwellian Ornstein-Uhlenbeck particle,
/// `2ε/γ² (γt − 1 + e^{−γt})`.
pub fn msd_exact(t: f64, epsilon: f64, gamma: f64) -> f64 {
    let g = gamma * t;
    2.0 * epsilon / (gamma * gamma) * (g - 1.0 + (-g).exp())
}

#[derive(Debug, Clone)]
pub enum PresetReport {
    Profile(Preset, ProfileReport),
    DtScan(Preset, DtScanReport),
    Uf(UfReport),
    Match(MatchReport),
    Msd(MsdReport),
}

impl PresetReport {
    /// Human-readable key numbers.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        match self {
            PresetReport::Profile(preset, r) => {
                let fit = r.linear_fit();
                let (rel, z) = r.first_bin_deficit();
                let _ = writeln!(s, "{}: {} trajectories", preset.name(), r.raw.n_trajectories());
                let _ = writeln!(s, "  linear fit slope {:.6} intercept {:.6} r2 {:.6}", fit.slope, fit.intercept, fit.r2);
                let _ = writeln!(s, "  max residual {:.3} stderr", r.max_residual_z());
                let _ = writeln!(s, "  first bin deficit {:.4} ({:.2} stderr)", rel, z);
            }
            PresetReport::DtScan(preset, r) => {
                let _ = writeln!(s, "{}:", preset.name());
                for run in &r.runs {
                    let (m, se) = r.mean_concentration(run.dt);
                    let _ = writeln!(s, "  dt {} rate {:.6e} mean concentration {:.6} +- {:.6}", run.dt, run.rate, m, se);
                }
                let (num, den) = (r.summary.dt_num, r.summary.dt_den);
                let (ratio, se) = r.mean_ratio(num, den);
                let _ = writeln!(s, "  mean ratio dt {num}/{den}: {ratio:.5} +- {se:.5}");
                let _ = writeln!(
                    s,
                    "  max interior deviation: {:.5} relative, {:.5} absolute",
                    r.max_interior_deviation(num, den),
                    r.max_interior_abs_deviation(num, den)
                );
            }
            PresetReport::Uf(r) => {
                let _ = writeln!(s, "uf-validate:");
                for w in &r.windows {
                    let (ratio, se) = w.ratio();
                    let _ = writeln!(
                        s,
                        "  window {} j_lr {:.6e} predicted {:.6e} ratio {:.5} +- {:.5}",
                        w.measured.window, w.measured.j_lr, w.predicted, ratio, se
                    );
                }
                let (r14, se) = r.window_ratio(1.0, 4.0);
                let _ = writeln!(s, "  j_lr(1)/j_lr(4) {r14:.5} +- {se:.5}");
            }
            PresetReport::Match(r) => {
                let _ = writeln!(
                    s,
                    "match-check: {} probes, max relative difference {:.3e}",
                    r.samples.len(),
                    r.max_relative_difference()
                );
            }
            PresetReport::Msd(r) => {
                let _ = writeln!(s, "msd-crossover:");
                let _ = writeln!(
                    s,
                    "  velocity variance {:.5} +- {:.5}",
                    r.velocity_variance, r.velocity_variance_stderr
                );
                let _ = writeln!(s, "  short-time slope {:.4}, long-time slope {:.4}", r.short_slope, r.long_slope);
            }
        }
        s
    }

    /// Writes the preset's CSV files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), CsvError> {
        match self {
            PresetReport::Profile(preset, r) => {
                csv::emit_profile(&r.profile, &dir.join(format!("{}_profile.csv", preset.name())))
            }
            PresetReport::DtScan(preset, r) => {
                for run in &r.runs {
                    let path = dir.join(format!("{}_dt{}.csv", preset.name(), run.dt));
                    csv::emit_profile(&run.report.profile, &path)?;
                }
                csv::emit_summary(&r.summary, &dir.join(format!("{}_summary.csv", preset.name())))
            }
            PresetReport::Uf(r) => {
                let fluxes: Vec<FluxEstimate> = r.windows.iter().map(|w| w.measured).collect();
                csv::emit_flux(&fluxes, &dir.join("uf_validate.csv"))
            }
            PresetReport::Match(r) => {
                let mut text = String::from("p,dpdx,f,epsilon,gamma,relative_difference\n");
                for m in &r.samples {
                    let _ = writeln!(
                        text,
                        "{},{},{},{},{},{}",
                        csv::fmt_sig9(m.probe.p),
                        csv::fmt_sig9(m.probe.dpdx),
                        csv::fmt_sig9(m.probe.f_at_x1),
                        csv::fmt_sig9(m.params.epsilon),
                        csv::fmt_sig9(m.params.gamma),
                        csv::fmt_sig9(m.relative_difference)
                    );
                }
                csv::write_file(&dir.join("match_check.csv"), &text)
            }
            PresetReport::Msd(r) => {
                let mut text = String::from("t,msd,msd_exact\n");
                for &(t, m) in &r.curve {
                    let _ = writeln!(
                        text,
                        "{},{},{}",
                        csv::fmt_sig9(t),
                        csv::fmt_sig9(m),
                        csv::fmt_sig9(msd_exact(t, 1.0, 1.0))
                    );
                }
                csv::write_file(&dir.join("msd_crossover.csv"), &text)
            }
        }
    }
}

/// Runs a preset and, if `out` is given, writes its CSV files there.
pub fn run_preset(preset: Preset, seed: u64, out: Option<&Path>) -> Result<PresetReport, PresetError> {
    let report = match preset {
        Preset::Fig1 => PresetReport::Profile(preset, fig1(seed)?),
        Preset::Fig2 => PresetReport::Profile(preset, fig2(seed)?),
        Preset::Fig3 => PresetReport::DtScan(preset, fig3(seed)?),
        Preset::Fig4 => PresetReport::DtScan(preset, fig4(seed)?),
        Preset::UfValidate => PresetReport::Uf(uf_validate(seed)?),
        Preset::MatchCheck => PresetReport::Match(match_check(seed)),
        Preset::MsdCrossover => PresetReport::Msd(msd_crossover(seed)),
    };
    if let Some(dir) = out {
        report.write(dir)?;
    }
    Ok(report)
}
