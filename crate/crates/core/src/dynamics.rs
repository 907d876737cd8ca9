//! Time stepping for overdamped Brownian and phase-space Langevin motion with
//! absorbing ends.
//!
//! Brownian (Smoluchowski) update over one step `Δt`:
//!
//! ```text
//! x ← x + f(x) Δt / γ + √(2ε/γ) Δw,          Δw ~ N(0, Δt)
//! ```
//!
//! Langevin update (first-order Euler in `Δt`):
//!
//! ```text
//! x ← x + v Δt
//! v ← v + [−γ v + f(x)] Δt + √(2εγ) Δw,       Δw ~ N(0, Δt)
//! ```
//!
//! The Langevin step is split into `⌈γΔt / 0.1⌉` equal sub-steps when
//! `γΔt > 0.1`. Boundaries are checked only at (sub-)step ends.

use crate::params::{ForceField, ParticleState, SimParams};
use crate::sampling::{gaussian_increment, RngStream};

/// Largest `γ h` a single Langevin Euler sub-step may take.
pub const MAX_SUBSTEP_GAMMA_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DynamicsKind {
    Brownian,
    Langevin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepEvent {
    Survived,
    AbsorbedLo,
    AbsorbedHi,
}

impl StepEvent {
    pub fn is_absorbed(self) -> bool {
        self != StepEvent::Survived
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: ParticleState,
    pub event: StepEvent,
    /// `(x_before, x_after)` over the whole step; present iff the particle
    /// survived.
    pub crossing: Option<(f64, f64)>,
}

/// Absorption test at a step end. No bridge correction: an excursion outside
/// the domain that returns within one step goes unnoticed.
pub fn process_boundaries(x_before: f64, x_after: f64, params: &SimParams) -> StepEvent {
    debug_assert!(params.contains(x_before) || x_before.is_nan());
    if x_after < params.domain_lo {
        StepEvent::AbsorbedLo
    } else if x_after > params.domain_hi {
        StepEvent::AbsorbedHi
    } else {
        StepEvent::Survived
    }
}

/// Deterministic Brownian update for a given Wiener increment `dw ~ N(0, Δt)`.
pub fn brownian_update(x: f64, dw: f64, params: &SimParams, force: &ForceField) -> f64 {
    x + force.eval(x) * params.dt / params.gamma + (2.0 * params.epsilon / params.gamma).sqrt() * dw
}

/// Deterministic Langevin Euler update over `h` for a given `dw ~ N(0, h)`.
pub fn langevin_update(
    x: f64,
    v: f64,
    dw: f64,
    h: f64,
    params: &SimParams,
    force: &ForceField,
) -> (f64, f64) {
    let x_next = x + v * h;
    let v_next =
        v + (-params.gamma * v + force.eval(x)) * h + (2.0 * params.epsilon * params.gamma).sqrt() * dw;
    (x_next, v_next)
}

/// Number of Euler sub-steps a Langevin step of `params.dt` is split into.
pub fn langevin_substeps(params: &SimParams) -> usize {
    let gdt = params.gamma * params.dt;
    if gdt <= MAX_SUBSTEP_GAMMA_DT {
        1
    } else {
        (gdt / MAX_SUBSTEP_GAMMA_DT).ceil() as usize
    }
}

fn finish(mut state: ParticleState, x_before: f64, event: StepEvent) -> StepOutcome {
    let crossing = match event {
        StepEvent::Survived => Some((x_before, state.x)),
        _ => {
            state.alive = false;
            None
        }
    };
    StepOutcome {
        state,
        event,
        crossing,
    }
}

/// One Brownian step followed by boundary processing.
pub fn step_brownian(
    state: ParticleState,
    params: &SimParams,
    force: &ForceField,
    stream: &mut RngStream,
) -> StepOutcome {
    debug_assert!(state.alive);
    let dw = gaussian_increment(stream, params.dt);
    let x_before = state.x;
    let x_after = brownian_update(x_before, dw, params, force);
    let event = process_boundaries(x_before, x_after, params);
    finish(
        ParticleState {
            x: x_after,
            ..state
        },
        x_before,
        event,
    )
}

/// One Langevin step (possibly sub-stepped) followed by boundary processing.
///
/// # Panics
///
/// If the state carries no velocity.
pub fn step_langevin(
    state: ParticleState,
    params: &SimParams,
    force: &ForceField,
    stream: &mut RngStream,
) -> StepOutcome {
    debug_assert!(state.alive);
    let mut v = state.v.expect("Langevin step needs a velocity");
    let n = langevin_substeps(params);
    let h = params.dt / n as f64;
    debug_assert!(params.gamma * h <= MAX_SUBSTEP_GAMMA_DT * (1.0 + 1e-12));
    let x_before = state.x;
    let mut x = x_before;
    let mut event = StepEvent::Survived;
    for _ in 0..n {
        let dw = gaussian_increment(stream, h);
        let prev = x;
        (x, v) = langevin_update(x, v, dw, h, params, force);
        event = process_boundaries(prev, x, params);
        if event.is_absorbed() {
            break;
        }
    }
    finish(
        ParticleState {
            x,
            v: Some(v),
            ..state
        },
        x_before,
        event,
    )
}

pub fn step(
    kind: DynamicsKind,
    state: ParticleState,
    params: &SimParams,
    force: &ForceField,
    stream: &mut RngStream,
) -> StepOutcome {
    match kind {
        DynamicsKind::Brownian => step_brownian(state, params, force, stream),
        DynamicsKind::Langevin => step_langevin(state, params, force, stream),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(gamma: f64, dt: f64) -> SimParams {
        SimParams::new(1.0, gamma, dt, 0.0, 1.0)
    }

    fn wide(gamma: f64, dt: f64) -> SimParams {
        SimParams::new(1.0, gamma, dt, -1e9, 1e9)
    }

    #[test]
    fn boundary_events() {
        let p = unit(1000.0, 1.0);
        assert_eq!(process_boundaries(0.9, 1.2, &p), StepEvent::AbsorbedHi);
        assert_eq!(process_boundaries(0.4, 0.5, &p), StepEvent::Survived);
        assert_eq!(process_boundaries(0.01, -0.001, &p), StepEvent::AbsorbedLo);
        assert_eq!(process_boundaries(0.5, 1.0, &p), StepEvent::Survived);
    }

    #[test]
    fn brownian_no_drift_no_noise_stays() {
        let p = unit(1000.0, 1.0);
        assert_eq!(brownian_update(0.3, 0.0, &p, &ForceField::Zero), 0.3);
    }

    #[test]
    fn brownian_constant_drift() {
        let p = wide(100.0, 0.5);
        let f = ForceField::Constant(4.0);
        let x = brownian_update(0.0, 0.0, &p, &f);
        assert!((x - 4.0 * 0.5 / 100.0).abs() < 1e-15);
    }

    #[test]
    fn brownian_step_variance() {
        let p = wide(1000.0, 1.0);
        let mut s = RngStream::new(1, 1);
        let n = 1_000_000;
        let mut sum2 = 0.0;
        let mut state = ParticleState::brownian(0.0, 0.0);
        for _ in 0..n {
            let out = step_brownian(state, &p, &ForceField::Zero, &mut s);
            sum2 += (out.state.x - state.x).powi(2);
            state = out.state;
        }
        let var = sum2 / n as f64;
        assert!((var / 2e-3 - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn free_brownian_msd() {
        let p = wide(1000.0, 1.0);
        let (n_traj, n_steps) = (100_000, 20);
        let mut sum2 = 0.0;
        let mut sum4 = 0.0;
        for i in 0..n_traj {
            let mut s = RngStream::new(2, i);
            let mut state = ParticleState::brownian(0.0, 0.0);
            for _ in 0..n_steps {
                state = step_brownian(state, &p, &ForceField::Zero, &mut s).state;
            }
            sum2 += state.x * state.x;
            sum4 += state.x.powi(4);
        }
        let msd = sum2 / n_traj as f64;
        let se = ((sum4 / n_traj as f64 - msd * msd) / n_traj as f64).sqrt();
        let want = 2.0 * p.diffusivity() * n_steps as f64 * p.dt;
        assert!((msd - want).abs() < 3.0 * se, "{msd} vs {want} ± {se}");
    }

    #[test]
    fn langevin_noise_free_update() {
        let p = wide(0.5, 0.1);
        let (x, v) = langevin_update(1.0, 2.0, 0.0, p.dt, &p, &ForceField::Zero);
        assert_eq!(x, 1.0 + 2.0 * 0.1);
        assert!((v - 2.0 * (1.0 - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn substep_rule() {
        assert_eq!(langevin_substeps(&unit(1.0, 0.1)), 1);
        assert_eq!(langevin_substeps(&unit(1.0, 0.05)), 1);
        assert_eq!(langevin_substeps(&unit(1000.0, 1.0)), 10_000);
        assert_eq!(langevin_substeps(&unit(2.0, 1.0)), 20);
        assert_eq!(langevin_substeps(&unit(1.0, 0.25)), 3);
    }

    #[test]
    fn replay_is_exact() {
        let p = unit(1000.0, 1.0);
        let run = || {
            let mut s = RngStream::new(42, 7);
            let mut st = ParticleState::brownian(0.5, 0.0);
            let mut xs = Vec::new();
            while st.alive {
                st = step_brownian(st, &p, &ForceField::Zero, &mut s).state;
                xs.push(st.x);
            }
            xs
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn absorption_marks_dead_and_drops_crossing() {
        let p = unit(1.0, 1.0);
        let mut s = RngStream::new(0, 0);
        // near the top edge with a huge kick upwards
        let st = ParticleState::brownian(1.0, 0.0);
        let out = step_brownian(st, &p, &ForceField::Constant(100.0), &mut s);
        assert_eq!(out.event, StepEvent::AbsorbedHi);
        assert!(!out.state.alive);
        assert!(out.crossing.is_none());
    }

    #[test]
    fn survived_step_records_crossing() {
        let p = unit(1000.0, 1.0);
        let mut s = RngStream::new(0, 3);
        let st = ParticleState::brownian(0.5, 0.0);
        let out = step_brownian(st, &p, &ForceField::Zero, &mut s);
        assert_eq!(out.event, StepEvent::Survived);
        assert_eq!(out.crossing, Some((0.5, out.state.x)));
    }

    #[test]
    fn langevin_substeps_stop_at_first_exit() {
        // ballistic particle leaving within the first of many sub-steps
        let p = SimParams::new(1e-12, 1000.0, 1.0, 0.0, 1.0);
        let mut s = RngStream::new(0, 0);
        let st = ParticleState::langevin(0.999, 100.0, 0.0);
        let out = step_langevin(st, &p, &ForceField::Zero, &mut s);
        assert_eq!(out.event, StepEvent::AbsorbedHi);
        assert!(out.state.x < 1.1);
    }
}
