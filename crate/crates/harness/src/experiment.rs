//! Injection, stepping, absorption and accumulation.
//!
//! Trajectory `k` (the `k`-th injection) draws everything from stream
//! `(seed, k)`. Trajectories are processed in fixed-size chunks that are
//! merged in index order, so results do not depend on the number of worker
//! threads.
//!
//! Two workloads are supported:
//!
//! * **Trajectories**: `n` injections, each followed to absorption. The
//!   sources fire with total rate `R`, so the run stands for `n / R` units of
//!   stationary time, and each injection picks its source in proportion to
//!   the source rates.
//! * **Duration**: every source runs its own injection schedule over a
//!   burn-in of five diffusion times followed by the measurement window;
//!   only the window is recorded.

use crate::config::{ConfigError, ExperimentConfig, Workload};
use rayon::prelude::*;
use thiserror::Error;
use uniflux_core::dynamics::step;
use uniflux_core::flux::{CrossingTally, FluxError};
use uniflux_core::observables::{NormalizedProfile, ObservableError, TrajectoryOccupancy};
use uniflux_core::sources::{inject_particle, InjectionSchedule, SourceError};
use uniflux_core::{AbsorptionLedger, ConcentrationProfile, FluxEstimate, RngStream, Side, StepEvent};

/// Trajectories per work unit.
pub const CHUNK: u64 = 1024;
/// Work units evaluated in parallel before merging.
const CHUNKS_PER_BATCH: u64 = 32;
/// Burn-in of duration runs, in diffusion times `γ L² / ε`.
pub const BURN_IN_DIFFUSION_TIMES: f64 = 5.0;
/// Injection schedules use streams from here up, one per source.
const SCHEDULE_STREAM_BASE: u64 = 1 << 63;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trajectory {trajectory} reached a non-finite state at t = {time}")]
    NonFinite { trajectory: u64, time: f64 },
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error(transparent)]
    Flux(#[from] FluxError),
    #[error(transparent)]
    Source(#[from] SourceError),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub profile: ConcentrationProfile,
    /// One estimate per configured probe, in probe order.
    pub fluxes: Vec<FluxEstimate>,
    pub ledger: AbsorptionLedger,
}

impl RunOutput {
    /// Normalized profile; a run that never simulated any time gives zeros.
    pub fn normalized_profile(&self) -> Result<NormalizedProfile, ObservableError> {
        if self.profile.total_sim_time > 0.0 {
            return self.profile.normalize();
        }
        let n = self.profile.n_bins();
        Ok(NormalizedProfile {
            centers: self.profile.centers(),
            concentration: vec![0.0; n],
            stderr: vec![0.0; n],
        })
    }
}

#[derive(Debug, Clone)]
struct Partial {
    profile: ConcentrationProfile,
    tallies: Vec<CrossingTally>,
    ledger: AbsorptionLedger,
}

impl Partial {
    fn new(config: &ExperimentConfig) -> Result<Self, RunError> {
        let p = &config.params;
        Ok(Self {
            profile: ConcentrationProfile::uniform(p.domain_lo, p.domain_hi, config.n_bins)?,
            tallies: config.probes.iter().map(|&x| CrossingTally::new(x)).collect(),
            ledger: AbsorptionLedger::default(),
        })
    }

    fn merge(&mut self, other: &Partial) -> Result<(), RunError> {
        self.profile.merge(&other.profile)?;
        for (a, b) in self.tallies.iter_mut().zip(&other.tallies) {
            a.merge(b);
        }
        self.ledger.merge(&other.ledger);
        Ok(())
    }
}

/// Recording window `[start, end)` on the simulation clock.
#[derive(Debug, Clone, Copy)]
struct Window {
    start: f64,
    end: f64,
}

impl Window {
    const ALL: Window = Window {
        start: f64::NEG_INFINITY,
        end: f64::INFINITY,
    };

    fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

/// Follows one injected particle from `birth` until absorption or the end of
/// the window, crediting dwell, crossings and absorptions inside the window.
#[allow(clippy::too_many_arguments)]
fn follow(
    config: &ExperimentConfig,
    id: u64,
    side: Side,
    birth: f64,
    window: Window,
    stream: &mut RngStream,
    buffer: &mut TrajectoryOccupancy,
    part: &mut Partial,
) -> Result<(), RunError> {
    let p = &config.params;
    let spec = config.source(side).expect("source chosen from config");
    let mut state = inject_particle(spec, birth, p, stream, config.mode);
    if window.contains(birth) {
        match side {
            Side::Lo => part.ledger.injected_lo += 1,
            Side::Hi => part.ledger.injected_hi += 1,
        }
    }
    let mut t = birth;
    while t < window.end {
        if !state.is_finite() {
            return Err(RunError::NonFinite { trajectory: id, time: t });
        }
        let recording = t >= window.start;
        if recording {
            part.profile.accumulate_occupancy(buffer, state.x, p.dt);
        }
        let out = step(config.mode, state, p, &config.force, stream);
        if !out.state.is_finite() {
            return Err(RunError::NonFinite {
                trajectory: id,
                time: t + p.dt,
            });
        }
        if recording {
            if let Some((a, b)) = out.crossing {
                for tally in &mut part.tallies {
                    tally.record(a, b);
                }
            }
            match out.event {
                StepEvent::AbsorbedLo => part.ledger.absorbed_lo += 1,
                StepEvent::AbsorbedHi => part.ledger.absorbed_hi += 1,
                StepEvent::Survived => {}
            }
        }
        if out.event.is_absorbed() {
            break;
        }
        state = out.state;
        t += p.dt;
    }
    Ok(())
}

fn total_rate(config: &ExperimentConfig) -> f64 {
    config.sources.iter().map(|s| s.rate).sum()
}

/// Runs `count` work items in chunks, merging in index order.
fn run_chunked(
    config: &ExperimentConfig,
    count: u64,
    item: impl Fn(u64, &mut TrajectoryOccupancy, &mut Partial) -> Result<(), RunError> + Sync,
) -> Result<Partial, RunError> {
    let mut total = Partial::new(config)?;
    let n_chunks = count.div_ceil(CHUNK);
    let mut first = 0;
    while first < n_chunks {
        let last = (first + CHUNKS_PER_BATCH).min(n_chunks);
        let parts: Vec<Result<Partial, RunError>> = (first..last)
            .into_par_iter()
            .map(|c| {
                let mut part = Partial::new(config)?;
                let mut buffer = TrajectoryOccupancy::new(config.n_bins);
                for k in c * CHUNK..((c + 1) * CHUNK).min(count) {
                    item(k, &mut buffer, &mut part)?;
                    part.profile.add_trajectory(&mut buffer);
                    part.tallies.iter_mut().for_each(CrossingTally::end_group);
                }
                Ok(part)
            })
            .collect();
        for part in parts {
            total.merge(&part?)?;
        }
        first = last;
    }
    Ok(total)
}

fn run_trajectories(config: &ExperimentConfig, n: u64) -> Result<RunOutput, RunError> {
    let rate = total_rate(config);
    if n == 0 || rate == 0.0 {
        return null_output(config);
    }
    let part = run_chunked(config, n, |k, buffer, part| {
        let mut stream = RngStream::new(config.seed, k);
        let u = stream.uniform() * rate;
        let mut acc = 0.0;
        let mut side = config.sources.last().expect("nonempty").side;
        for s in &config.sources {
            acc += s.rate;
            if u < acc {
                side = s.side;
                break;
            }
        }
        follow(config, k, side, k as f64 / rate, Window::ALL, &mut stream, buffer, part)
    })?;
    finish(config, part, n as f64 / rate)
}

fn run_duration(config: &ExperimentConfig, duration: f64) -> Result<RunOutput, RunError> {
    let p = &config.params;
    let start = BURN_IN_DIFFUSION_TIMES * p.diffusion_time();
    let window = Window {
        start,
        end: start + duration,
    };
    let mut births: Vec<(f64, Side)> = Vec::new();
    for (i, spec) in config.sources.iter().enumerate() {
        let mut stream = RngStream::new(config.seed, SCHEDULE_STREAM_BASE + i as u64);
        let mut schedule = InjectionSchedule::new(*spec, p)?;
        births.extend(
            schedule
                .window(0.0, window.end, &mut stream)?
                .into_iter()
                .map(|t| (t, spec.side)),
        );
    }
    births.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let part = run_chunked(config, births.len() as u64, |k, buffer, part| {
        let (birth, side) = births[k as usize];
        let mut stream = RngStream::new(config.seed, k);
        follow(config, k, side, birth, window, &mut stream, buffer, part)
    })?;
    finish(config, part, duration)
}

fn finish(config: &ExperimentConfig, mut part: Partial, elapsed: f64) -> Result<RunOutput, RunError> {
    part.profile.total_sim_time = elapsed;
    part.ledger.elapsed = elapsed;
    let fluxes = part
        .tallies
        .iter()
        .map(|t| t.estimate(elapsed, config.params.dt))
        .collect::<Result<_, _>>()?;
    Ok(RunOutput {
        profile: part.profile,
        fluxes,
        ledger: part.ledger,
    })
}

fn null_output(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let part = Partial::new(config)?;
    Ok(RunOutput {
        profile: part.profile,
        fluxes: config
            .probes
            .iter()
            .map(|&x1| FluxEstimate {
                x1,
                j_lr: 0.0,
                j_rl: 0.0,
                j_net: 0.0,
                stderr_lr: 0.0,
                stderr_rl: 0.0,
                window: config.params.dt,
                n_windows: 0,
            })
            .collect(),
        ledger: part.ledger,
    })
}

/// Runs `config` to its workload bound.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    config.validate()?;
    match config.workload {
        Workload::Trajectories(n) => run_trajectories(config, n),
        Workload::Duration(d) => {
            if total_rate(config) == 0.0 {
                null_output(config)
            } else {
                run_duration(config, d)
            }
        }
    }
}
