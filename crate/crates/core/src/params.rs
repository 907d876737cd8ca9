//! Simulation constants, external force fields and per-particle state.

use thiserror::Error;

/// Violated parameter invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("epsilon must be positive")]
    NonPositiveEpsilon,
    #[error("gamma must be positive")]
    NonPositiveGamma,
    #[error("dt must be positive")]
    NonPositiveDt,
    #[error("empty domain")]
    EmptyDomain,
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("force table needs at least one node and strictly increasing abscissae")]
    BadForceTable,
}

/// Physical constants and the simulated interval.
///
/// `epsilon` is the thermal energy per unit mass, `gamma` the friction rate
/// and `dt` the integration (and flux counting) time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub epsilon: f64,
    pub gamma: f64,
    pub dt: f64,
    pub domain_lo: f64,
    pub domain_hi: f64,
}

impl SimParams {
    pub fn new(epsilon: f64, gamma: f64, dt: f64, domain_lo: f64, domain_hi: f64) -> Self {
        Self {
            epsilon,
            gamma,
            dt,
            domain_lo,
            domain_hi,
        }
    }

    /// Returns the parameters unchanged if every invariant holds, otherwise
    /// the first violated one.
    pub fn validate(self) -> Result<Self, ParamError> {
        let named = [
            ("epsilon", self.epsilon),
            ("gamma", self.gamma),
            ("dt", self.dt),
            ("domain_lo", self.domain_lo),
            ("domain_hi", self.domain_hi),
        ];
        if let Some((name, _)) = named.iter().find(|(_, v)| !v.is_finite()) {
            return Err(ParamError::NonFinite(name));
        }
        if self.epsilon <= 0.0 {
            return Err(ParamError::NonPositiveEpsilon);
        }
        if self.gamma <= 0.0 {
            return Err(ParamError::NonPositiveGamma);
        }
        if self.dt <= 0.0 {
            return Err(ParamError::NonPositiveDt);
        }
        if self.domain_lo >= self.domain_hi {
            return Err(ParamError::EmptyDomain);
        }
        Ok(self)
    }

    pub fn with_dt(self, dt: f64) -> Self {
        Self { dt, ..self }
    }

    pub fn length(&self) -> f64 {
        self.domain_hi - self.domain_lo
    }

    /// Diffusion coefficient `epsilon / gamma`.
    pub fn diffusivity(&self) -> f64 {
        self.epsilon / self.gamma
    }

    /// Variance of one Brownian position increment, `2 epsilon dt / gamma`.
    pub fn brownian_step_variance(&self) -> f64 {
        2.0 * self.epsilon * self.dt / self.gamma
    }

    /// Time to diffuse across the domain, `gamma L^2 / epsilon`.
    pub fn diffusion_time(&self) -> f64 {
        self.length() * self.length() / self.diffusivity()
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.domain_lo..=self.domain_hi).contains(&x)
    }
}

/// External acceleration field `f(x)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ForceField {
    #[default]
    Zero,
    Constant(f64),
    /// Piecewise-linear interpolation through `(x, f)` nodes, clamped to the
    /// end values outside the table.
    Table { xs: Vec<f64>, values: Vec<f64> },
}

impl ForceField {
    pub fn table(xs: Vec<f64>, values: Vec<f64>) -> Result<Self, ParamError> {
        if xs.is_empty()
            || xs.len() != values.len()
            || xs.windows(2).any(|w| w[1] <= w[0])
            || xs.iter().chain(values.iter()).any(|v| !v.is_finite())
        {
            return Err(ParamError::BadForceTable);
        }
        Ok(Self::Table { xs, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant(c) => *c,
            Self::Table { xs, values } => {
                let last = xs.len() - 1;
                if x <= xs[0] {
                    return values[0];
                }
                if x >= xs[last] {
                    return values[last];
                }
                // first node strictly greater than x
                let hi = xs.partition_point(|&node| node <= x);
                let lo = hi - 1;
                let w = (x - xs[lo]) / (xs[hi] - xs[lo]);
                values[lo] + w * (values[hi] - values[lo])
            }
        }
    }
}

/// One live (or terminated) trajectory.
///
/// `v` is `Some` only for Langevin particles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    pub x: f64,
    pub v: Option<f64>,
    pub birth_time: f64,
    pub alive: bool,
}

impl ParticleState {
    pub fn brownian(x: f64, birth_time: f64) -> Self {
        Self {
            x,
            v: None,
            birth_time,
            alive: true,
        }
    }

    pub fn langevin(x: f64, v: f64, birth_time: f64) -> Self {
        Self {
            x,
            v: Some(v),
            birth_time,
            alive: true,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.v.is_none_or(f64::is_finite)
    }
}
