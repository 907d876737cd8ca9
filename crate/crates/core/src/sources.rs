//! Boundary sources that stand in for the infinite baths on either side of
//! the simulated interval.
//!
//! A bath at concentration `C` pushes particles across its interface at the
//! unidirectional rate
//!
//! ```text
//! J = √(ε / (π γ Δt)) C ± J_net / 2
//! ```
//!
//! (`+` on the lower side, `−` on the upper side). Only the mean rate is
//! constrained; the inter-injection law is a free choice.

use crate::dynamics::DynamicsKind;
use crate::params::{ParticleState, SimParams};
use crate::sampling::{gaussian_increment, sample_entry, EntryDistribution, RngStream};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Lo,
    Hi,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Lo => "lo",
            Side::Hi => "hi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum InjectionPolicy {
    /// Exponential inter-arrival times.
    #[default]
    Poisson,
    /// Deterministic spacing `1/rate`, phase carried across windows.
    FixedInterval,
    /// At most one injection per step, with probability `rate Δt`.
    BernoulliPerStep,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SourceError {
    #[error("source rate must be finite and non-negative, got {0}")]
    BadRate(f64),
    #[error("source concentration must be finite and non-negative, got {0}")]
    BadConcentration(f64),
    #[error("bernoulli-per-step injection needs rate*dt <= 1, got {0}")]
    BernoulliOverflow(f64),
    #[error("empty injection window [{0}, {1})")]
    EmptyWindow(f64, f64),
    #[error("entry width {got} does not match the simulation step width {want}")]
    EntryMismatch { got: f64, want: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    pub side: Side,
    pub concentration: f64,
    pub rate: f64,
    pub policy: InjectionPolicy,
    pub entry: EntryDistribution,
}

impl SourceSpec {
    /// Source maintaining `concentration` at leading order (`J_net = 0`).
    pub fn for_concentration(
        side: Side,
        concentration: f64,
        params: &SimParams,
        policy: InjectionPolicy,
        entry: EntryDistribution,
    ) -> Self {
        Self {
            side,
            concentration,
            rate: source_strength(concentration, params, 0.0, side),
            policy,
            entry,
        }
    }

    pub fn validate(&self, params: &SimParams) -> Result<(), SourceError> {
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(SourceError::BadRate(self.rate));
        }
        if !(self.concentration.is_finite() && self.concentration >= 0.0) {
            return Err(SourceError::BadConcentration(self.concentration));
        }
        let want = params.brownian_step_variance().sqrt();
        if !self.entry.is_valid() || (self.entry.sigma - want).abs() > 1e-12 * want {
            return Err(SourceError::EntryMismatch {
                got: self.entry.sigma,
                want,
            });
        }
        if self.policy == InjectionPolicy::BernoulliPerStep && self.rate * params.dt > 1.0 {
            return Err(SourceError::BernoulliOverflow(self.rate * params.dt));
        }
        Ok(())
    }
}

/// Injection rate that keeps a bath at `concentration` behind the `side`
/// interface, corrected by half the (signed, rightward) net flux.
pub fn source_strength(concentration: f64, params: &SimParams, j_net: f64, side: Side) -> f64 {
    let leading = (params.epsilon / (PI * params.gamma * params.dt)).sqrt() * concentration;
    match side {
        Side::Lo => leading + 0.5 * j_net,
        Side::Hi => leading - 0.5 * j_net,
    }
}

/// Per-source injection clock. Carries whatever state a policy needs between
/// consecutive windows so that windows can be scheduled back to back.
#[derive(Debug, Clone)]
pub struct InjectionSchedule {
    spec: SourceSpec,
    dt: f64,
    next_arrival: Option<f64>,
    carry: f64,
}

impl InjectionSchedule {
    pub fn new(spec: SourceSpec, params: &SimParams) -> Result<Self, SourceError> {
        spec.validate(params)?;
        Ok(Self {
            spec,
            dt: params.dt,
            next_arrival: None,
            carry: 0.0,
        })
    }

    pub fn spec(&self) -> &SourceSpec {
        &self.spec
    }

    /// Injection times in `[t_start, t_end)`, in increasing order.
    pub fn window(
        &mut self,
        t_start: f64,
        t_end: f64,
        stream: &mut RngStream,
    ) -> Result<Vec<f64>, SourceError> {
        if !(t_start < t_end) {
            return Err(SourceError::EmptyWindow(t_start, t_end));
        }
        let rate = self.spec.rate;
        let mut times = Vec::new();
        if rate == 0.0 {
            return Ok(times);
        }
        match self.spec.policy {
            InjectionPolicy::Poisson => {
                let mut t = match self.next_arrival {
                    Some(t) if t >= t_start => t,
                    _ => t_start + exponential(stream, rate),
                };
                while t < t_end {
                    times.push(t);
                    t += exponential(stream, rate);
                }
                self.next_arrival = Some(t);
            }
            InjectionPolicy::FixedInterval => {
                // `carry` counts expected injections accrued but not yet issued
                let spacing = 1.0 / rate;
                let mut acc = self.carry;
                let mut t = t_start;
                loop {
                    let to_next = (1.0 - acc) * spacing;
                    if t + to_next >= t_end {
                        acc += (t_end - t) * rate;
                        break;
                    }
                    t += to_next;
                    times.push(t);
                    acc = 0.0;
                }
                self.carry = acc;
            }
            InjectionPolicy::BernoulliPerStep => {
                let p = rate * self.dt;
                if p > 1.0 {
                    return Err(SourceError::BernoulliOverflow(p));
                }
                let n_steps = ((t_end - t_start) / self.dt).round() as u64;
                for k in 0..n_steps {
                    if stream.uniform() < p {
                        times.push(t_start + k as f64 * self.dt);
                    }
                }
            }
        }
        Ok(times)
    }
}

fn exponential(stream: &mut RngStream, rate: f64) -> f64 {
    // 1 - U lies in (0, 1]
    -(1.0 - stream.uniform()).ln() / rate
}

/// One-shot scheduling of `[t_start, t_end)` from a fresh clock.
pub fn schedule_injections(
    spec: &SourceSpec,
    params: &SimParams,
    t_start: f64,
    t_end: f64,
    stream: &mut RngStream,
) -> Result<Vec<f64>, SourceError> {
    InjectionSchedule::new(*spec, params)?.window(t_start, t_end, stream)
}

/// Builds a freshly injected particle born at time `t`.
///
/// Langevin particles get an inward half-Maxwellian velocity.
pub fn inject_particle(
    spec: &SourceSpec,
    t: f64,
    params: &SimParams,
    stream: &mut RngStream,
    mode: DynamicsKind,
) -> ParticleState {
    let offset = sample_entry(&spec.entry, stream);
    let x = match spec.side {
        Side::Lo => params.domain_lo + offset,
        Side::Hi => params.domain_hi - offset,
    };
    match mode {
        DynamicsKind::Brownian => ParticleState::brownian(x, t),
        DynamicsKind::Langevin => {
            let speed = gaussian_increment(stream, params.epsilon).abs();
            let v = match spec.side {
                Side::Lo => speed,
                Side::Hi => -speed,
            };
            ParticleState::langevin(x, v, t)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{residual_mean, EntryKind};
    use proptest::prelude::*;

    fn paper() -> SimParams {
        SimParams::new(1.0, 1000.0, 1.0, 0.0, 1.0)
    }

    fn spec(rate: f64, policy: InjectionPolicy) -> SourceSpec {
        spec_for(rate, policy, &paper())
    }

    fn spec_for(rate: f64, policy: InjectionPolicy, p: &SimParams) -> SourceSpec {
        SourceSpec {
            side: Side::Lo,
            concentration: 1.0,
            rate,
            policy,
            entry: EntryDistribution::for_params(EntryKind::ResidualNormal, p),
        }
    }

    #[test]
    fn leading_order_strength() {
        // 1/sqrt(1000 π) to 7 digits
        let j = source_strength(1.0, &paper(), 0.0, Side::Lo);
        assert!((j - 0.017_841_24).abs() < 1e-8, "{j}");
        assert_eq!(source_strength(0.0, &paper(), 0.0, Side::Hi), 0.0);
    }

    #[test]
    fn strength_at_matching_window() {
        let p = SimParams::new(1.0, 1000.0, 2.0 / 1000.0, 0.0, 1.0);
        let j = source_strength(1.0, &p, 0.0, Side::Lo);
        assert!((j - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert!((j - 0.398_942).abs() < 1e-6);
    }

    #[test]
    fn net_flux_correction_sign() {
        let p = paper();
        let base = source_strength(1.0, &p, 0.0, Side::Lo);
        assert!((source_strength(1.0, &p, 0.002, Side::Lo) - base - 0.001).abs() < 1e-15);
        assert!((source_strength(1.0, &p, 0.002, Side::Hi) - base + 0.001).abs() < 1e-15);
    }

    #[test]
    fn strength_scales_as_inverse_sqrt_dt() {
        let p = paper();
        let r = source_strength(2.5, &p, 0.0, Side::Lo) / source_strength(2.5, &p.with_dt(4.0), 0.0, Side::Lo);
        assert_eq!(r, 2.0);
    }

    #[test]
    fn silent_source_injects_nothing() {
        let mut s = RngStream::new(0, 0);
        for policy in [
            InjectionPolicy::Poisson,
            InjectionPolicy::FixedInterval,
            InjectionPolicy::BernoulliPerStep,
        ] {
            let times = schedule_injections(&spec(0.0, policy), &paper(), 0.0, 1e6, &mut s).unwrap();
            assert!(times.is_empty());
        }
    }

    #[test]
    fn bernoulli_overflow_rejected() {
        let mut s = RngStream::new(0, 0);
        let err = schedule_injections(&spec(1.5, InjectionPolicy::BernoulliPerStep), &paper(), 0.0, 10.0, &mut s);
        assert!(matches!(err, Err(SourceError::BernoulliOverflow(_))));
    }

    #[test]
    fn empty_window_rejected() {
        let mut s = RngStream::new(0, 0);
        assert!(schedule_injections(&spec(1.0, InjectionPolicy::Poisson), &paper(), 2.0, 2.0, &mut s).is_err());
    }

    #[test]
    fn poisson_count_mean_and_variance() {
        let rate = 0.5;
        let t = 2000.0; // rate * T = 1000
        let reps = 1000;
        let counts: Vec<f64> = (0..reps)
            .map(|i| {
                let mut s = RngStream::new(17, i);
                schedule_injections(&spec(rate, InjectionPolicy::Poisson), &paper(), 0.0, t, &mut s)
                    .unwrap()
                    .len() as f64
            })
            .collect();
        let mean = counts.iter().sum::<f64>() / reps as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        assert!((mean - 1000.0).abs() < 3.0 * 1000f64.sqrt(), "{mean}");
        assert!((var / 1000.0 - 1.0).abs() < 0.2, "{var}");
    }

    #[test]
    fn fixed_interval_carries_phase() {
        let p = SimParams::new(1.0, 1000.0, 0.1, 0.0, 1.0);
        let mut sched = InjectionSchedule::new(spec_for(0.3, InjectionPolicy::FixedInterval, &p), &p).unwrap();
        let mut s = RngStream::new(0, 0);
        let mut all = Vec::new();
        for k in 0..101 {
            all.extend(sched.window(k as f64, k as f64 + 1.0, &mut s).unwrap());
        }
        assert_eq!(all.len(), 30);
        for w in all.windows(2) {
            assert!((w[1] - w[0] - 1.0 / 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn long_run_rate_converges_for_every_policy() {
        let p = SimParams::new(1.0, 1000.0, 0.5, 0.0, 1.0);
        let rate = 0.4;
        let expected = 10_000.0;
        let t_total = expected / rate;
        for policy in [
            InjectionPolicy::Poisson,
            InjectionPolicy::FixedInterval,
            InjectionPolicy::BernoulliPerStep,
        ] {
            let mut sched = InjectionSchedule::new(spec_for(rate, policy, &p), &p).unwrap();
            let mut s = RngStream::new(23, 0);
            let windows = 250;
            let w = t_total / windows as f64;
            let n: usize = (0..windows)
                .map(|k| sched.window(k as f64 * w, (k + 1) as f64 * w, &mut s).unwrap().len())
                .sum();
            assert!(
                (n as f64 - expected).abs() < 3.0 * expected.sqrt(),
                "{policy:?}: {n}"
            );
        }
    }

    #[test]
    fn poisson_arrivals_within_window_and_sorted() {
        let mut s = RngStream::new(4, 4);
        let times = schedule_injections(&spec(3.0, InjectionPolicy::Poisson), &paper(), 5.0, 50.0, &mut s).unwrap();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
        assert!(times.iter().all(|&t| (5.0..50.0).contains(&t)));
    }

    #[test]
    fn point_entry_first_hop() {
        let p = paper();
        let sp = SourceSpec {
            entry: EntryDistribution::for_params(EntryKind::PointAtBoundary, &p),
            ..spec(1.0, InjectionPolicy::Poisson)
        };
        let mut a = RngStream::new(1, 2);
        let mut b = a.clone();
        let st = inject_particle(&sp, 3.0, &p, &mut a, DynamicsKind::Brownian);
        // x(0) = sqrt(2 eps / gamma) |dw|, dw ~ N(0, dt)
        let dw = gaussian_increment(&mut b, p.dt);
        assert!((st.x - (2.0 * p.epsilon / p.gamma).sqrt() * dw.abs()).abs() < 1e-15);
        assert_eq!(st.birth_time, 3.0);
        assert!(st.alive && st.v.is_none());
    }

    #[test]
    fn residual_injection_mean_position() {
        let p = paper();
        let sp = spec(1.0, InjectionPolicy::Poisson);
        let mut s = RngStream::new(99, 0);
        let n = 1_000_000;
        let mean = (0..n)
            .map(|_| inject_particle(&sp, 0.0, &p, &mut s, DynamicsKind::Brownian).x)
            .sum::<f64>()
            / n as f64;
        let sigma = (2.0_f64 / 1000.0).sqrt();
        assert!((mean / residual_mean(sigma) - 1.0).abs() < 0.01, "{mean}");
        assert!((mean / 0.028022 - 1.0).abs() < 0.01);
    }

    #[test]
    fn langevin_injection_points_inward() {
        let p = paper();
        for side in [Side::Lo, Side::Hi] {
            let sp = SourceSpec {
                side,
                ..spec(1.0, InjectionPolicy::Poisson)
            };
            let mut s = RngStream::new(5, 0);
            for _ in 0..1000 {
                let st = inject_particle(&sp, 0.0, &p, &mut s, DynamicsKind::Langevin);
                let v = st.v.unwrap();
                match side {
                    Side::Lo => assert!(v >= 0.0),
                    Side::Hi => assert!(v <= 0.0),
                }
            }
        }
    }

    proptest! {
        #[test]
        fn strength_linear_in_concentration(c in 0.0f64..100.0, k in 0.0f64..10.0) {
            let p = paper();
            let a = source_strength(k * c, &p, 0.0, Side::Lo);
            let b = k * source_strength(c, &p, 0.0, Side::Lo);
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }

        #[test]
        fn sides_mirror_about_midpoint(seed in 0u64..1000) {
            let p = SimParams::new(1.0, 1000.0, 1.0, -0.5, 2.5);
            let lo = SourceSpec { entry: EntryDistribution::for_params(EntryKind::ResidualNormal, &p), ..spec(1.0, InjectionPolicy::Poisson) };
            let hi = SourceSpec { side: Side::Hi, ..lo };
            let a = inject_particle(&lo, 0.0, &p, &mut RngStream::new(seed, 1), DynamicsKind::Brownian).x;
            let b = inject_particle(&hi, 0.0, &p, &mut RngStream::new(seed, 1), DynamicsKind::Brownian).x;
            let mid = 0.5 * (p.domain_lo + p.domain_hi);
            prop_assert!(((a - mid) + (b - mid)).abs() < 1e-12);
        }
    }
}
