//! Keyed random streams, Gaussian increments and the entry law of injected
//! particles.
//!
//! A particle hopping into the simulation across an imaginary interface does
//! not land on the interface: the distance it covers past the interface,
//! unconditioned on where it came from, follows the *residual* of the normal
//! law,
//!
//! ```text
//! f(x) = (1/σ) √(π/2) erfc(x / (√2 σ)),   x ≥ 0,   σ² = 2 ε Δt / γ
//! ```
//!
//! whose antiderivative is closed-form through `∫ erfc = u erfc(u) − e^{−u²}/√π`:
//!
//! ```text
//! F(x) = 1 − e^{−u²} + √π u erfc(u),   u = x / (√2 σ)
//! ```

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// A reproducible random stream identified by `(master_seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id mapped onto the cipher's native
/// 64-bit stream selector, so distinct ids under one seed never overlap.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Zero-mean normal draw with the given variance.
///
/// One standard normal is consumed regardless of the variance so that stream
/// positions do not depend on it.
///
/// # Panics
///
/// If `variance` is negative or NaN.
pub fn gaussian_increment(stream: &mut RngStream, variance: f64) -> f64 {
    assert!(variance >= 0.0, "negative variance {variance}");
    let z = stream.standard_normal();
    if variance == 0.0 {
        0.0
    } else {
        variance.sqrt() * z
    }
}

/// Residual-normal density at `x >= 0`; zero on the negative half-line.
pub fn residual_pdf(x: f64, sigma: f64) -> f64 {
    debug_assert!(sigma > 0.0);
    if x < 0.0 {
        return 0.0;
    }
    (PI / 2.0).sqrt() / sigma * erfc(x / (SQRT_2 * sigma))
}

/// Cumulative distribution of [`residual_pdf`].
pub fn residual_cdf(x: f64, sigma: f64) -> f64 {
    debug_assert!(sigma > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    standard_residual_cdf(x / sigma)
}

/// Mean of the residual law, `σ √(2π) / 4`.
pub fn residual_mean(sigma: f64) -> f64 {
    sigma * (2.0 * PI).sqrt() / 4.0
}

// CDF and density in units of sigma
fn standard_residual_cdf(z: f64) -> f64 {
    // survival first: adding two nearly equal tails to 1 is not monotone
    let u = z * FRAC_1_SQRT_2;
    let survival = ((-u * u).exp() - PI.sqrt() * u * erfc(u)).max(0.0);
    1.0 - survival
}

fn standard_residual_pdf(z: f64) -> f64 {
    (PI / 2.0).sqrt() * erfc(z * FRAC_1_SQRT_2)
}

/// Inverse of [`residual_cdf`]: bracketing bisection then safeguarded Newton,
/// to an absolute tolerance of `1e-12 σ`.
pub fn residual_quantile(p: f64, sigma: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p));
    if p <= 0.0 {
        return 0.0;
    }
    const TOL: f64 = 1e-12;
    const Z_MAX: f64 = 40.0;

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while standard_residual_cdf(hi) < p && hi < Z_MAX {
        lo = hi;
        hi *= 2.0;
    }
    if hi >= Z_MAX {
        return Z_MAX * sigma;
    }
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if standard_residual_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut z = 0.5 * (lo + hi);
    for _ in 0..50 {
        let g = standard_residual_cdf(z) - p;
        if g < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let mut next = z - g / standard_residual_pdf(z);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let converged = (next - z).abs() < TOL || hi - lo < TOL;
        z = next;
        if converged {
            break;
        }
    }
    z * sigma
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntryKind {
    /// Inject exactly on the interface and take one half-normal hop inward.
    PointAtBoundary,
    /// Inject at a residual-normal distance past the interface.
    ResidualNormal,
}

/// How far past the interface an injected particle is placed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryDistribution {
    pub kind: EntryKind,
    pub sigma: f64,
}

impl EntryDistribution {
    pub fn new(kind: EntryKind, sigma: f64) -> Self {
        Self { kind, sigma }
    }

    /// Entry law matching the Brownian step of `params`: `σ² = 2 ε Δt / γ`.
    pub fn for_params(kind: EntryKind, params: &crate::SimParams) -> Self {
        Self::new(kind, params.brownian_step_variance().sqrt())
    }

    pub fn is_valid(&self) -> bool {
        match self.kind {
            EntryKind::PointAtBoundary => self.sigma >= 0.0,
            EntryKind::ResidualNormal => self.sigma > 0.0,
        }
    }
}

/// Inward offset (`>= 0`) of a freshly injected particle from its interface.
pub fn sample_entry(dist: &EntryDistribution, stream: &mut RngStream) -> f64 {
    debug_assert!(dist.is_valid());
    match dist.kind {
        EntryKind::PointAtBoundary => gaussian_increment(stream, dist.sigma * dist.sigma).abs(),
        EntryKind::ResidualNormal => residual_quantile(stream.uniform(), dist.sigma),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // erf by its all-positive series, erfc by Lentz continued fraction
    fn erfc_oracle(x: f64) -> f64 {
        if x < 2.5 {
            let mut term = x;
            let mut sum = x;
            for n in 1..400 {
                term *= 2.0 * x * x / (2.0 * n as f64 + 1.0);
                sum += term;
                if term.abs() < 1e-18 * sum.abs() {
                    break;
                }
            }
            1.0 - 2.0 / PI.sqrt() * (-x * x).exp() * sum
        } else {
            // erfc(x) = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
            let mut f = x;
            let mut c = x;
            let mut d = 0.0;
            for k in 1..500 {
                let a = k as f64 / 2.0;
                d = x + a * d;
                d = 1.0 / d;
                c = x + a / c;
                let delta = c * d;
                f *= delta;
                if (delta - 1.0).abs() < 1e-16 {
                    break;
                }
            }
            (-x * x).exp() / PI.sqrt() / f
        }
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn erfc_matches_series_oracle() {
        for i in 0..20 {
            let x = -1.0 + 0.3 * i as f64;
            let (got, want) = (erfc(x), erfc_oracle(x));
            assert!(((got - want) / want).abs() < 1e-12, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn gaussian_zero_variance_is_zero() {
        let mut s = RngStream::new(3, 0);
        for _ in 0..100 {
            assert_eq!(gaussian_increment(&mut s, 0.0), 0.0);
        }
    }

    #[test]
    #[should_panic(expected = "negative variance")]
    fn gaussian_negative_variance_panics() {
        gaussian_increment(&mut RngStream::new(0, 0), -1.0);
    }

    #[test]
    fn gaussian_moments() {
        let mut s = RngStream::new(11, 4);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| gaussian_increment(&mut s, 1.0)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        // sd of the sample variance is sqrt(2/n) = 0.14%
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn streams_replay_and_differ() {
        let a: Vec<u64> = (0..8).map(|_| 0).scan(RngStream::new(9, 1), |s, _| Some(s.next_u64())).collect();
        let b: Vec<u64> = (0..8).map(|_| 0).scan(RngStream::new(9, 1), |s, _| Some(s.next_u64())).collect();
        let c: Vec<u64> = (0..8).map(|_| 0).scan(RngStream::new(9, 2), |s, _| Some(s.next_u64())).collect();
        let d: Vec<u64> = (0..8).map(|_| 0).scan(RngStream::new(10, 1), |s, _| Some(s.next_u64())).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn residual_pdf_normalised() {
        let sigma = 0.3;
        let total = simpson(|x| residual_pdf(x, sigma), 0.0, 12.0 * sigma, 20_000);
        assert!((total - 1.0).abs() < 1e-8, "{total}");
    }

    #[test]
    fn residual_pdf_ratio_two_sigma() {
        let sigma = 0.7;
        let ratio = residual_pdf(2.0 * sigma, sigma) / residual_pdf(0.0, sigma);
        let want = erfc_oracle(SQRT_2);
        assert!((ratio - want).abs() < 1e-13);
        assert!((ratio - 0.04550).abs() < 5e-6);
    }

    #[test]
    fn residual_mean_matches_quadrature() {
        let sigma = 0.044721;
        let quad = simpson(|x| x * residual_pdf(x, sigma), 0.0, 14.0 * sigma, 20_000);
        assert!((quad - residual_mean(sigma)).abs() < 1e-12);
        assert!((quad / sigma - 0.626_657).abs() < 1e-6);
    }

    #[test]
    fn residual_cdf_limits_and_quadrature() {
        let sigma = 1.3;
        assert_eq!(residual_cdf(0.0, sigma), 0.0);
        assert_eq!(residual_cdf(-2.0, sigma), 0.0);
        assert!((residual_cdf(10.0 * sigma, sigma) - 1.0).abs() < 1e-12);
        let quad = simpson(|x| residual_pdf(x, sigma), 0.0, sigma, 2_000);
        assert!((residual_cdf(sigma, sigma) - quad).abs() < 1e-10);
    }

    #[test]
    fn residual_cdf_derivative_is_pdf() {
        let sigma = 0.5;
        let h = 1e-6;
        for i in 0..100 {
            let x = 0.01 + i as f64 * 0.04;
            let fd = (residual_cdf(x + h, sigma) - residual_cdf(x - h, sigma)) / (2.0 * h);
            assert!((fd - residual_pdf(x, sigma)).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let sigma = 0.044721;
        for i in 1..200 {
            let p = i as f64 / 200.0;
            let x = residual_quantile(p, sigma);
            assert!((residual_cdf(x, sigma) - p).abs() < 1e-11, "p={p}");
        }
        assert_eq!(residual_quantile(0.0, sigma), 0.0);
    }

    #[test]
    fn residual_entry_mean() {
        let sigma = (2.0_f64 / 1000.0).sqrt();
        let dist = EntryDistribution::new(EntryKind::ResidualNormal, sigma);
        let mut s = RngStream::new(5, 77);
        let n = 1_000_000;
        let mean = (0..n).map(|_| sample_entry(&dist, &mut s)).sum::<f64>() / n as f64;
        assert!((mean / 0.028025 - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn point_entry_degenerate_width() {
        let dist = EntryDistribution::new(EntryKind::PointAtBoundary, 0.0);
        let mut s = RngStream::new(5, 1);
        assert!((0..1000).all(|_| sample_entry(&dist, &mut s) == 0.0));
    }

    #[test]
    fn point_entry_is_half_normal() {
        let sigma = 0.2;
        let dist = EntryDistribution::new(EntryKind::PointAtBoundary, sigma);
        let mut s = RngStream::new(8, 1);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_entry(&dist, &mut s)).collect();
        assert!(draws.iter().all(|&d| d >= 0.0));
        let mean = draws.iter().sum::<f64>() / n as f64;
        let want = sigma * (2.0 / PI).sqrt();
        assert!((mean / want - 1.0).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn pdf_is_positive_and_decreasing(a in 0.0f64..8.0, b in 0.0f64..8.0, sigma in 0.01f64..5.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-9);
            let (flo, fhi) = (residual_pdf(lo * sigma, sigma), residual_pdf(hi * sigma, sigma));
            prop_assert!(fhi >= 0.0);
            prop_assert!(flo > fhi);
        }

        #[test]
        fn cdf_nondecreasing(a in 0.0f64..10.0, d in 0.0f64..1.0, sigma in 0.01f64..5.0) {
            prop_assert!(residual_cdf((a + d) * sigma, sigma) >= residual_cdf(a * sigma, sigma));
        }
    }
}
