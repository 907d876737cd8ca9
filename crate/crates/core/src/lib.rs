//! Particle simulation of diffusion on a finite interval coupled to implicit
//! infinite baths.
//!
//! The crate is organised bottom-up:
//!
//! - [`params`]: simulation constants, force fields and particle state.
//! - [`sampling`]: keyed random streams, Gaussian increments and the
//!   residual-normal entry law for injected particles.
//! - [`dynamics`]: Brownian (overdamped) and Langevin (phase-space) stepping
//!   with absorbing ends.
//! - [`sources`]: boundary source strengths, injection schedules and particle
//!   construction.
//! - [`flux`]: analytic unidirectional fluxes, crossing counters, the periodic
//!   equilibrium harness and the one-step phase-space propagator check.
//! - [`observables`]: occupancy-time profiles, linear fits and net-flux
//!   bookkeeping.
//!
//! All quantities are in reduced units: `epsilon = k_B T / m`, `gamma` the
//! friction rate, `dt` the time step.

// `!(x > 0.0)` is used on purpose so that NaN is rejected with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod flux;
pub mod observables;
pub mod params;
pub mod sampling;
pub mod sources;

pub use dynamics::{DynamicsKind, StepEvent, StepOutcome};
pub use flux::{DensityProbe, FluxEstimate, UnidirectionalFlux};
pub use observables::{AbsorptionLedger, ConcentrationProfile, LinearFit, NormalizedProfile};
pub use params::{ForceField, ParamError, ParticleState, SimParams};
pub use sampling::{EntryDistribution, RngStream};
pub use sources::{InjectionPolicy, Side, SourceSpec};
