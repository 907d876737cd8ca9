//! Unidirectional and net fluxes.
//!
//! Langevin trajectories have finite velocities, so their unidirectional
//! fluxes are finite; in the overdamped limit
//!
//! ```text
//! J_LR = √(ε/2π) p − (ε p′ − f p) / 2γ
//! J_RL = √(ε/2π) p + (ε p′ − f p) / 2γ
//! ```
//!
//! Brownian trajectories counted over a window `Δt` give instead
//!
//! ```text
//! J_LR(Δt) = √(ε/(π γ Δt)) p + (f p − ε p′) / 2γ
//! J_RL(Δt) = √(ε/(π γ Δt)) p − (f p − ε p′) / 2γ
//! ```
//!
//! which diverge as `Δt → 0` but coincide with the Langevin values at
//! `γ Δt = 2`. Both share the net flux `−(ε p′ − f p) / γ`.
//!
//! Besides the closed forms this module holds the Monte-Carlo crossing
//! counter, a periodic equilibrium harness for checking the Brownian law, and
//! a one-step phase-space propagator compared against sampled Euler steps.

use crate::dynamics::{brownian_update, langevin_update};
use crate::params::{ForceField, SimParams};
use crate::sampling::{erfc, gaussian_increment, RngStream};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FluxError {
    #[error("total counting time must be positive")]
    ZeroTotalTime,
    #[error("velocity cell {dv} exceeds sigma_v/5 = {limit}")]
    GridTooCoarse { dv: f64, limit: f64 },
    #[error("phase grid needs at least {min}x{min} cells, got {nx}x{nv}")]
    GridTooSmall { nx: usize, nv: usize, min: usize },
    #[error("one-step propagator needs gamma*dt <= 0.1, got {0}")]
    StepTooLong(f64),
    #[error("phase grid has no mass")]
    EmptyGrid,
}

/// Local density data at a probe point `x1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityProbe {
    pub p: f64,
    pub dpdx: f64,
    pub f_at_x1: f64,
}

impl DensityProbe {
    /// Probe with `p′ → −p′`, `f → −f`: the same situation seen in a mirror.
    pub fn reflected(self) -> Self {
        Self {
            p: self.p,
            dpdx: -self.dpdx,
            f_at_x1: -self.f_at_x1,
        }
    }

    /// `ε p′ − f p`, minus `γ` times the net flux.
    fn gradient_term(&self, params: &SimParams) -> f64 {
        params.epsilon * self.dpdx - self.f_at_x1 * self.p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnidirectionalFlux {
    pub j_lr: f64,
    pub j_rl: f64,
    pub j_net: f64,
}

impl UnidirectionalFlux {
    fn from_parts(lr: f64, rl: f64) -> Self {
        Self {
            j_lr: lr,
            j_rl: rl,
            j_net: lr - rl,
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.j_lr - other.j_lr)
            .abs()
            .max((self.j_rl - other.j_rl).abs())
            .max((self.j_net - other.j_net).abs())
    }
}

/// Brownian unidirectional fluxes counted over `window`, two-term expansion.
pub fn analytic_uf_brownian(probe: &DensityProbe, params: &SimParams, window: f64) -> UnidirectionalFlux {
    debug_assert!(window > 0.0);
    let lead = (params.epsilon / (PI * params.gamma * window)).sqrt() * probe.p;
    let corr = -probe.gradient_term(params) / (2.0 * params.gamma);
    UnidirectionalFlux::from_parts(lead + corr, lead - corr)
}

/// Langevin unidirectional fluxes in the overdamped expansion.
pub fn analytic_uf_langevin(probe: &DensityProbe, params: &SimParams) -> UnidirectionalFlux {
    let lead = (params.epsilon / (2.0 * PI)).sqrt() * probe.p;
    let corr = probe.gradient_term(params) / (2.0 * params.gamma);
    UnidirectionalFlux::from_parts(lead - corr, lead + corr)
}

/// Largest component difference between the Brownian fluxes at window
/// `2/γ` and the Langevin fluxes. Zero up to round-off.
pub fn matching_identity_check(probe: &DensityProbe, params: &SimParams) -> f64 {
    let bd = analytic_uf_brownian(probe, params, 2.0 / params.gamma);
    let ld = analytic_uf_langevin(probe, params);
    bd.max_abs_diff(&ld)
}

/// Measured fluxes across `x1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxEstimate {
    pub x1: f64,
    pub j_lr: f64,
    pub j_rl: f64,
    pub j_net: f64,
    pub stderr_lr: f64,
    pub stderr_rl: f64,
    pub window: f64,
    pub n_windows: u64,
}

/// Directed crossing counts of one probe point, mergeable by summation.
///
/// Pairs can be grouped by particle with [`CrossingTally::end_group`]. The
/// crossings of one particle are correlated (a particle sitting next to the
/// probe crosses it over and over), so with at least two groups the errors
/// come from the spread of per-group counts rather than from a binomial law
/// on independent pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingTally {
    pub x1: f64,
    pub n_lr: u64,
    pub n_rl: u64,
    /// Position pairs examined; the number of Bernoulli trials.
    pub n_pairs: u64,
    /// Closed groups, and the sums of their squared counts.
    pub n_groups: u64,
    pub sum_sq_lr: f64,
    pub sum_sq_rl: f64,
    open_lr: u64,
    open_rl: u64,
}

impl CrossingTally {
    pub fn new(x1: f64) -> Self {
        Self {
            x1,
            n_lr: 0,
            n_rl: 0,
            n_pairs: 0,
            n_groups: 0,
            sum_sq_lr: 0.0,
            sum_sq_rl: 0.0,
            open_lr: 0,
            open_rl: 0,
        }
    }

    fn add(&mut self, lr: u64, rl: u64) {
        self.n_pairs += 1;
        self.n_lr += lr;
        self.n_rl += rl;
        self.open_lr += lr;
        self.open_rl += rl;
    }

    /// Counts `x_before < x1 <= x_after` as left-to-right and the mirror
    /// as right-to-left.
    pub fn record(&mut self, x_before: f64, x_after: f64) {
        if x_before < self.x1 && self.x1 <= x_after {
            self.add(1, 0);
        } else if x_after < self.x1 && self.x1 <= x_before {
            self.add(0, 1);
        } else {
            self.add(0, 0);
        }
    }

    /// Counts every periodic image `x1 + kL` passed by the unwrapped
    /// displacement `x_before -> x_after`.
    pub fn record_periodic(&mut self, x_before: f64, x_after: f64, period: f64) {
        let level = |y: f64| ((y - self.x1) / period).floor() as i64;
        let passed = level(x_after) - level(x_before);
        if passed > 0 {
            self.add(passed as u64, 0);
        } else {
            self.add(0, (-passed) as u64);
        }
    }

    /// Closes the current group (one particle's pairs).
    pub fn end_group(&mut self) {
        self.n_groups += 1;
        self.sum_sq_lr += (self.open_lr as f64).powi(2);
        self.sum_sq_rl += (self.open_rl as f64).powi(2);
        self.open_lr = 0;
        self.open_rl = 0;
    }

    /// Adds another tally's counts. Its open group is closed first.
    pub fn merge(&mut self, other: &CrossingTally) {
        debug_assert_eq!(self.x1, other.x1);
        let mut other = *other;
        if other.open_lr + other.open_rl > 0 {
            other.end_group();
        }
        self.n_lr += other.n_lr;
        self.n_rl += other.n_rl;
        self.n_pairs += other.n_pairs;
        self.n_groups += other.n_groups;
        self.sum_sq_lr += other.sum_sq_lr;
        self.sum_sq_rl += other.sum_sq_rl;
    }

    /// Fluxes per unit time over `total_time`. Errors come from the group
    /// spread when at least two groups were closed, otherwise from a
    /// binomial law on the per-pair crossing probability.
    pub fn estimate(&self, total_time: f64, window: f64) -> Result<FluxEstimate, FluxError> {
        if !(total_time > 0.0) {
            return Err(FluxError::ZeroTotalTime);
        }
        let grouped = self.n_groups >= 2 && self.open_lr + self.open_rl == 0;
        let se = |k: u64, sum_sq: f64| {
            if grouped {
                let g = self.n_groups as f64;
                let mean = k as f64 / g;
                let var = ((sum_sq / g - mean * mean) * g / (g - 1.0)).max(0.0);
                (g * var).sqrt() / total_time
            } else if self.n_pairs == 0 {
                0.0
            } else {
                let n = self.n_pairs as f64;
                let q = (k as f64 / n).min(1.0);
                (n * q * (1.0 - q)).sqrt() / total_time
            }
        };
        let j_lr = self.n_lr as f64 / total_time;
        let j_rl = self.n_rl as f64 / total_time;
        Ok(FluxEstimate {
            x1: self.x1,
            j_lr,
            j_rl,
            j_net: j_lr - j_rl,
            stderr_lr: se(self.n_lr, self.sum_sq_lr),
            stderr_rl: se(self.n_rl, self.sum_sq_rl),
            window,
            n_windows: (total_time / window).round() as u64,
        })
    }
}

/// Flux estimate from consecutive position pairs sampled `window` apart.
pub fn count_crossings(
    pairs: impl IntoIterator<Item = (f64, f64)>,
    x1: f64,
    total_time: f64,
    window: f64,
) -> Result<FluxEstimate, FluxError> {
    let mut tally = CrossingTally::new(x1);
    for (a, b) in pairs {
        tally.record(a, b);
    }
    tally.estimate(total_time, window)
}

/// Free Brownian particles on a ring: a stationary, uniform-density reference
/// for the crossing estimator, with no boundaries to perturb it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicHarness {
    pub params: SimParams,
    pub n_particles: usize,
    pub n_windows: usize,
    pub x1: f64,
}

impl PeriodicHarness {
    /// Uniform density `n_particles / L`.
    pub fn density(&self) -> f64 {
        self.n_particles as f64 / self.params.length()
    }

    /// Leading-order prediction `√(ε/(πγΔt)) p` at the harness window.
    pub fn predicted_j_lr(&self) -> f64 {
        let probe = DensityProbe {
            p: self.density(),
            dpdx: 0.0,
            f_at_x1: 0.0,
        };
        analytic_uf_brownian(&probe, &self.params, self.params.dt).j_lr
    }

    /// Runs the ring; particle `i` uses stream `(seed, i)`.
    pub fn run(&self, seed: u64) -> Result<FluxEstimate, FluxError> {
        let p = &self.params;
        let period = p.length();
        let mut tally = CrossingTally::new(self.x1);
        for i in 0..self.n_particles {
            let mut stream = RngStream::new(seed, i as u64);
            let mut x = p.domain_lo + period * stream.uniform();
            for _ in 0..self.n_windows {
                let dw = gaussian_increment(&mut stream, p.dt);
                let moved = brownian_update(x, dw, p, &ForceField::Zero);
                tally.record_periodic(x, moved, period);
                x = p.domain_lo + (moved - p.domain_lo).rem_euclid(period);
            }
            tally.end_group();
        }
        tally.estimate(self.n_windows as f64 * p.dt, p.dt)
    }
}

/// Mass density on a uniform `(x, v)` grid, stored row-major by `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    pub x_lo: f64,
    pub x_hi: f64,
    pub nx: usize,
    pub v_lo: f64,
    pub v_hi: f64,
    pub nv: usize,
    pub mass: Vec<f64>,
}

/// Smallest grid the propagator check accepts in each direction.
pub const MIN_GRID_CELLS: usize = 200;

impl PhaseGrid {
    pub fn zeros(x_range: (f64, f64), nx: usize, v_range: (f64, f64), nv: usize) -> Self {
        Self {
            x_lo: x_range.0,
            x_hi: x_range.1,
            nx,
            v_lo: v_range.0,
            v_hi: v_range.1,
            nv,
            mass: vec![0.0; nx * nv],
        }
    }

    /// Cell masses proportional to `density` at the cell centres, normalised
    /// to unit total mass.
    pub fn from_density(
        x_range: (f64, f64),
        nx: usize,
        v_range: (f64, f64),
        nv: usize,
        density: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut g = Self::zeros(x_range, nx, v_range, nv);
        for ix in 0..nx {
            for iv in 0..nv {
                let (x, v) = g.center(ix, iv);
                g.mass[ix * nv + iv] = density(x, v).max(0.0);
            }
        }
        let total = g.total_mass();
        if total > 0.0 {
            g.mass.iter_mut().for_each(|m| *m /= total);
        }
        g
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.nx as f64
    }

    pub fn dv(&self) -> f64 {
        (self.v_hi - self.v_lo) / self.nv as f64
    }

    pub fn center(&self, ix: usize, iv: usize) -> (f64, f64) {
        (
            self.x_lo + (ix as f64 + 0.5) * self.dx(),
            self.v_lo + (iv as f64 + 0.5) * self.dv(),
        )
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn cell_of(&self, x: f64, v: f64) -> Option<(usize, usize)> {
        let fx = (x - self.x_lo) / self.dx();
        let fv = (v - self.v_lo) / self.dv();
        if fx < 0.0 || fv < 0.0 {
            return None;
        }
        let (ix, iv) = (fx as usize, fv as usize);
        (ix < self.nx && iv < self.nv).then_some((ix, iv))
    }

    fn add(&mut self, ix: i64, iv: usize, m: f64) {
        if ix >= 0 && (ix as usize) < self.nx {
            self.mass[ix as usize * self.nv + iv] += m;
        }
    }

    // linear (cloud-in-cell) split along x; mass outside the grid is dropped
    fn deposit_x(&mut self, x: f64, iv: usize, m: f64) {
        let fx = (x - self.x_lo) / self.dx() - 0.5;
        let i0 = fx.floor();
        let w = fx - i0;
        self.add(i0 as i64, iv, m * (1.0 - w));
        self.add(i0 as i64 + 1, iv, m * w);
    }

    /// One step of the Euler phase-space propagator: the displacement is
    /// deterministic, `x' = ξ + ηΔt`, and the velocity is normal with mean
    /// `η + [−γη + f(ξ)]Δt` and variance `2εγΔt` (zero when `noise` is off).
    pub fn propagate(&self, params: &SimParams, force: &ForceField, noise: bool) -> PhaseGrid {
        let dt = params.dt;
        let dv = self.dv();
        let sd = if noise {
            (2.0 * params.epsilon * params.gamma * dt).sqrt()
        } else {
            0.0
        };
        let mut out = PhaseGrid::zeros((self.x_lo, self.x_hi), self.nx, (self.v_lo, self.v_hi), self.nv);
        let mut weights: Vec<(usize, f64)> = Vec::new();
        for ix in 0..self.nx {
            for iv in 0..self.nv {
                let m = self.mass[ix * self.nv + iv];
                if m == 0.0 {
                    continue;
                }
                let (xi, eta) = self.center(ix, iv);
                let x_new = xi + eta * dt;
                let mean = eta + (-params.gamma * eta + force.eval(xi)) * dt;
                weights.clear();
                if sd > 0.0 {
                    let lo_cell = (((mean - 9.0 * sd) - self.v_lo) / dv).floor().max(0.0) as usize;
                    let hi_cell = ((((mean + 9.0 * sd) - self.v_lo) / dv).ceil().max(0.0) as usize).min(self.nv);
                    let cdf = |v: f64| 0.5 * erfc(-(v - mean) / sd * FRAC_1_SQRT_2);
                    for jv in lo_cell..hi_cell {
                        let a = self.v_lo + jv as f64 * dv;
                        let w = cdf(a + dv) - cdf(a);
                        if w > 0.0 {
                            weights.push((jv, w));
                        }
                    }
                } else {
                    let fv = (mean - self.v_lo) / dv - 0.5;
                    let j0 = fv.floor();
                    let w = fv - j0;
                    for (j, wj) in [(j0 as i64, 1.0 - w), (j0 as i64 + 1, w)] {
                        if j >= 0 && (j as usize) < self.nv && wj > 0.0 {
                            weights.push((j as usize, wj));
                        }
                    }
                }
                for &(jv, w) in &weights {
                    out.deposit_x(x_new, jv, m * w);
                }
            }
        }
        out
    }

    /// Histogram of one sampled Euler step from this density: `n_samples`
    /// start points drawn cell-by-mass and uniformly within the cell.
    pub fn monte_carlo_step(
        &self,
        params: &SimParams,
        force: &ForceField,
        n_samples: usize,
        stream: &mut RngStream,
    ) -> PhaseGrid {
        let mut cumulative = Vec::with_capacity(self.mass.len());
        let mut acc = 0.0;
        for m in &self.mass {
            acc += m;
            cumulative.push(acc);
        }
        let total = acc;
        let (dx, dv) = (self.dx(), self.dv());
        let mut out = PhaseGrid::zeros((self.x_lo, self.x_hi), self.nx, (self.v_lo, self.v_hi), self.nv);
        let w = 1.0 / n_samples as f64;
        for _ in 0..n_samples {
            let u = stream.uniform() * total;
            let cell = cumulative.partition_point(|&c| c <= u).min(self.mass.len() - 1);
            let (ix, iv) = (cell / self.nv, cell % self.nv);
            let x = self.x_lo + (ix as f64 + stream.uniform()) * dx;
            let v = self.v_lo + (iv as f64 + stream.uniform()) * dv;
            let dw = gaussian_increment(stream, params.dt);
            let (x_new, v_new) = langevin_update(x, v, dw, params.dt, params, force);
            if let Some((jx, jv)) = out.cell_of(x_new, v_new) {
                out.mass[jx * out.nv + jv] += w;
            }
        }
        out
    }

    /// Sums `block x block` groups of cells; trailing partial blocks are kept.
    pub fn coarsen(&self, block: usize) -> Vec<f64> {
        let (bx, bv) = (self.nx.div_ceil(block), self.nv.div_ceil(block));
        let mut out = vec![0.0; bx * bv];
        for ix in 0..self.nx {
            for iv in 0..self.nv {
                out[(ix / block) * bv + iv / block] += self.mass[ix * self.nv + iv];
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorCheck {
    /// L1 distance between propagated and sampled densities on the
    /// comparison blocks.
    pub l1: f64,
    /// Total mass on the grid after the propagator step.
    pub mass_after: f64,
}

/// Compares one propagator step on `grid` against a Monte-Carlo histogram of
/// `n_samples` Euler steps, on blocks of `block x block` cells.
pub fn propagator_step_check(
    grid: &PhaseGrid,
    params: &SimParams,
    force: &ForceField,
    n_samples: usize,
    block: usize,
    stream: &mut RngStream,
) -> Result<PropagatorCheck, FluxError> {
    if grid.nx < MIN_GRID_CELLS || grid.nv < MIN_GRID_CELLS {
        return Err(FluxError::GridTooSmall {
            nx: grid.nx,
            nv: grid.nv,
            min: MIN_GRID_CELLS,
        });
    }
    let gdt = params.gamma * params.dt;
    if gdt > 0.1 {
        return Err(FluxError::StepTooLong(gdt));
    }
    let limit = (2.0 * params.epsilon * gdt).sqrt() / 5.0;
    if grid.dv() > limit {
        return Err(FluxError::GridTooCoarse { dv: grid.dv(), limit });
    }
    let initial = grid.total_mass();
    if !(initial > 0.0) {
        return Err(FluxError::EmptyGrid);
    }
    let propagated = grid.propagate(params, force, true);
    let sampled = grid.monte_carlo_step(params, force, n_samples, stream);
    let a = propagated.coarsen(block);
    let b = sampled.coarsen(block);
    let l1 = a
        .iter()
        .zip(&b)
        .map(|(p, q)| (p / initial - q).abs())
        .sum();
    Ok(PropagatorCheck {
        l1,
        mass_after: propagated.total_mass() / initial,
    })
}
