//! Occupancy-time concentration profiles, straight-line fits, and net-flux
//! bookkeeping from boundary counts.
//!
//! Every step's dwell time is credited to the bin holding the particle at the
//! start of the step. Profiles keep the per-trajectory second moments of the
//! bin occupancies, so the standard error of any linear function of the
//! profile (a bin, a fit residual, an extrapolation) is available without
//! re-running anything.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObservableError {
    #[error("profile needs at least one bin and strictly increasing edges")]
    BadEdges,
    #[error("total simulated time must be positive")]
    ZeroTime,
    #[error("linear fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("profiles with different binning cannot be merged")]
    BinningMismatch,
    #[error("weight vector has length {got}, profile has {want} bins")]
    WeightLength { got: usize, want: usize },
}

/// Occupancy of one trajectory, accumulated before it is committed to a
/// profile.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryOccupancy {
    dwell: Vec<f64>,
    touched: Vec<usize>,
}

impl TrajectoryOccupancy {
    pub fn new(n_bins: usize) -> Self {
        Self {
            dwell: vec![0.0; n_bins],
            touched: Vec::new(),
        }
    }

    pub fn add(&mut self, bin: usize, dwell: f64) {
        if self.dwell[bin] == 0.0 {
            self.touched.push(bin);
        }
        self.dwell[bin] += dwell;
    }

    pub fn total(&self) -> f64 {
        self.touched.iter().map(|&b| self.dwell[b]).sum()
    }

    fn clear(&mut self) {
        for &b in &self.touched {
            self.dwell[b] = 0.0;
        }
        self.touched.clear();
    }
}

/// Binned occupancy-time histogram over an ensemble of trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationProfile {
    edges: Vec<f64>,
    /// Summed dwell time per bin.
    occupancy: Vec<f64>,
    /// Upper triangle (row-major, `i <= j`) of `Σ_traj o_i o_j`.
    second_moment: Vec<f64>,
    n_trajectories: u64,
    /// Time over which the ensemble represents the steady state.
    pub total_sim_time: f64,
}

impl ConcentrationProfile {
    pub fn new(edges: Vec<f64>) -> Result<Self, ObservableError> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ObservableError::BadEdges);
        }
        let n = edges.len() - 1;
        Ok(Self {
            edges,
            occupancy: vec![0.0; n],
            second_moment: vec![0.0; n * (n + 1) / 2],
            n_trajectories: 0,
            total_sim_time: 0.0,
        })
    }

    /// `n_bins` equal bins on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, n_bins: usize) -> Result<Self, ObservableError> {
        if n_bins == 0 {
            return Err(ObservableError::BadEdges);
        }
        let w = (hi - lo) / n_bins as f64;
        let mut edges: Vec<f64> = (0..n_bins).map(|i| lo + i as f64 * w).collect();
        edges.push(hi);
        Self::new(edges)
    }

    pub fn n_bins(&self) -> usize {
        self.occupancy.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn occupancy(&self) -> &[f64] {
        &self.occupancy
    }

    pub fn n_trajectories(&self) -> u64 {
        self.n_trajectories
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Bin holding `x`; the top edge belongs to the last bin.
    ///
    /// # Panics
    ///
    /// If `x` lies outside the profile: absorption must be processed before
    /// occupancy is credited.
    pub fn bin_of(&self, x: f64) -> usize {
        let n = self.n_bins();
        assert!(
            x >= self.edges[0] && x <= self.edges[n],
            "position {x} outside profile [{}, {}]",
            self.edges[0],
            self.edges[n]
        );
        self.edges.partition_point(|&e| e <= x).saturating_sub(1).min(n - 1)
    }

    /// Credits `dwell` at position `x` to a trajectory buffer.
    pub fn accumulate_occupancy(&self, buffer: &mut TrajectoryOccupancy, x: f64, dwell: f64) {
        debug_assert!(dwell >= 0.0);
        buffer.add(self.bin_of(x), dwell);
    }

    /// Commits one finished trajectory and resets the buffer.
    pub fn add_trajectory(&mut self, buffer: &mut TrajectoryOccupancy) {
        let n = self.n_bins();
        buffer.touched.sort_unstable();
        for (a, &i) in buffer.touched.iter().enumerate() {
            let oi = buffer.dwell[i];
            self.occupancy[i] += oi;
            for &j in &buffer.touched[a..] {
                self.second_moment[tri_index(n, i, j)] += oi * buffer.dwell[j];
            }
        }
        self.n_trajectories += 1;
        buffer.clear();
    }

    /// Counts a trajectory that never dwelt in the domain (absorbed on its
    /// first hop); it still belongs to the ensemble.
    pub fn add_empty_trajectory(&mut self) {
        self.n_trajectories += 1;
    }

    /// Pools another ensemble. Total times add.
    pub fn merge(&mut self, other: &ConcentrationProfile) -> Result<(), ObservableError> {
        if self.edges != other.edges {
            return Err(ObservableError::BinningMismatch);
        }
        for (a, b) in self.occupancy.iter_mut().zip(&other.occupancy) {
            *a += b;
        }
        for (a, b) in self.second_moment.iter_mut().zip(&other.second_moment) {
            *a += b;
        }
        self.n_trajectories += other.n_trajectories;
        self.total_sim_time += other.total_sim_time;
        Ok(())
    }

    fn moment(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.second_moment[tri_index(self.n_bins(), a, b)]
    }

    /// Concentration per bin, `occupancy / (total_sim_time * width)`, with
    /// standard errors from the spread of per-trajectory occupancies.
    pub fn normalize(&self) -> Result<NormalizedProfile, ObservableError> {
        if !(self.total_sim_time > 0.0) {
            return Err(ObservableError::ZeroTime);
        }
        let widths = self.widths();
        let concentration: Vec<f64> = self
            .occupancy
            .iter()
            .zip(&widths)
            .map(|(o, w)| o / (self.total_sim_time * w))
            .collect();
        let stderr = (0..self.n_bins())
            .map(|i| {
                let mut w = vec![0.0; self.n_bins()];
                w[i] = 1.0;
                self.functional_stderr(&w)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(NormalizedProfile {
            centers: self.centers(),
            concentration,
            stderr,
        })
    }

    /// Standard error of `Σ_i weights[i] * concentration[i]`.
    ///
    /// The profile is `(N/T)` times the ensemble mean of per-trajectory
    /// concentration vectors, so the variance follows from their sample
    /// covariance.
    pub fn functional_stderr(&self, weights: &[f64]) -> Result<f64, ObservableError> {
        let n = self.n_bins();
        if weights.len() != n {
            return Err(ObservableError::WeightLength {
                got: weights.len(),
                want: n,
            });
        }
        if !(self.total_sim_time > 0.0) {
            return Err(ObservableError::ZeroTime);
        }
        let count = self.n_trajectories as f64;
        if self.n_trajectories < 2 {
            return Ok(0.0);
        }
        // fold bin widths into the weights: concentration_i = occupancy_i / (T w_i)
        let widths = self.widths();
        let a: Vec<f64> = weights.iter().zip(&widths).map(|(c, w)| c / w).collect();
        let mean_proj: f64 = a.iter().zip(&self.occupancy).map(|(ai, oi)| ai * oi).sum::<f64>() / count;
        let mut second = 0.0;
        for i in 0..n {
            if a[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                if a[j] != 0.0 {
                    second += a[i] * a[j] * self.moment(i, j);
                }
            }
        }
        let var = ((second / count - mean_proj * mean_proj) * count / (count - 1.0)).max(0.0);
        // concentration = (N/T) * mean over trajectories
        Ok(count / self.total_sim_time * (var / count).sqrt())
    }
}

fn tri_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < n);
    i * n - i * (i + 1) / 2 + j
}

/// Concentration per bin and its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedProfile {
    pub centers: Vec<f64>,
    pub concentration: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl NormalizedProfile {
    pub fn mean_concentration(&self) -> f64 {
        self.concentration.iter().sum::<f64>() / self.concentration.len() as f64
    }
}

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; 1 by convention when the data has no
    /// variance.
    pub r2: f64,
}

impl LinearFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Least-squares line through `(xs, ys)`.
pub fn fit_linear(xs: &[f64], ys: &[f64]) -> Result<LinearFit, ObservableError> {
    let n = xs.len().min(ys.len());
    if n < 3 {
        return Err(ObservableError::TooFewPoints(n));
    }
    let nf = n as f64;
    let mx = xs[..n].iter().sum::<f64>() / nf;
    let my = ys[..n].iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy == 0.0 || ss_res <= 1e-15 * syy {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(LinearFit {
        slope,
        intercept,
        r2,
    })
}

/// Fit of a normalized profile over bins `range`.
pub fn fit_profile(profile: &NormalizedProfile, range: std::ops::Range<usize>) -> Result<LinearFit, ObservableError> {
    fit_linear(&profile.centers[range.clone()], &profile.concentration[range])
}

/// Weights `a` such that `Σ a_k c_k` is the fitted line over bins `range`
/// evaluated at `x`. Lets fit-derived quantities reuse
/// [`ConcentrationProfile::functional_stderr`].
pub fn fit_eval_weights(centers: &[f64], range: std::ops::Range<usize>, x: f64) -> Vec<f64> {
    let xs = &centers[range.clone()];
    let nf = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|c| (c - mx).powi(2)).sum();
    let mut w = vec![0.0; centers.len()];
    for k in range {
        w[k] = 1.0 / nf + (x - mx) * (centers[k] - mx) / sxx;
    }
    w
}

/// Boundary event counts over a measurement window of length `elapsed`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AbsorptionLedger {
    pub absorbed_lo: u64,
    pub absorbed_hi: u64,
    pub injected_lo: u64,
    pub injected_hi: u64,
    pub elapsed: f64,
}

impl AbsorptionLedger {
    pub fn merge(&mut self, other: &AbsorptionLedger) {
        self.absorbed_lo += other.absorbed_lo;
        self.absorbed_hi += other.absorbed_hi;
        self.injected_lo += other.injected_lo;
        self.injected_hi += other.injected_hi;
    }

    /// Injected minus absorbed; may be transiently negative in time-bounded
    /// windows that inherit particles injected before the window opened.
    pub fn live_balance(&self) -> i64 {
        (self.injected_lo + self.injected_hi) as i64 - (self.absorbed_lo + self.absorbed_hi) as i64
    }
}

/// Rightward throughput at each boundary and their average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetFlux {
    /// `(absorbed_hi − injected_hi) / elapsed`.
    pub hi_throughput: f64,
    /// `(injected_lo − absorbed_lo) / elapsed`.
    pub lo_throughput: f64,
    pub j_net: f64,
    /// Poisson error of the better-counted side.
    pub stderr: f64,
}

pub fn measured_net_flux(ledger: &AbsorptionLedger) -> Result<NetFlux, ObservableError> {
    if !(ledger.elapsed > 0.0) {
        return Err(ObservableError::ZeroTime);
    }
    let t = ledger.elapsed;
    let hi = (ledger.absorbed_hi as f64 - ledger.injected_hi as f64) / t;
    let lo = (ledger.injected_lo as f64 - ledger.absorbed_lo as f64) / t;
    // both sides measure the same steady flux, so the side with fewer
    // boundary events bounds the error
    let hi_events = (ledger.absorbed_hi + ledger.injected_hi) as f64;
    let lo_events = (ledger.absorbed_lo + ledger.injected_lo) as f64;
    Ok(NetFlux {
        hi_throughput: hi,
        lo_throughput: lo,
        j_net: 0.5 * (hi + lo),
        stderr: hi_events.min(lo_events).sqrt() / t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parked(profile: &mut ConcentrationProfile, x: f64, t: f64) {
        let mut buf = TrajectoryOccupancy::new(profile.n_bins());
        profile.accumulate_occupancy(&mut buf, x, t);
        profile.add_trajectory(&mut buf);
    }

    #[test]
    fn single_bin_dwell() {
        let mut p = ConcentrationProfile::uniform(0.0, 1.0, 10).unwrap();
        parked(&mut p, 0.35, 7.5);
        assert_eq!(p.occupancy()[3], 7.5);
        assert_eq!(p.occupancy().iter().sum::<f64>(), 7.5);
    }

    #[test]
    fn top_edge_in_last_bin() {
        let p = ConcentrationProfile::uniform(0.0, 1.0, 50).unwrap();
        assert_eq!(p.bin_of(1.0), 49);
        assert_eq!(p.bin_of(0.0), 0);
        assert_eq!(p.bin_of(0.02), 1);
    }

    #[test]
    #[should_panic(expected = "outside profile")]
    fn outside_position_panics() {
        let p = ConcentrationProfile::uniform(0.0, 1.0, 5).unwrap();
        p.bin_of(1.5);
    }

    #[test]
    fn total_occupancy_is_total_lifetime() {
        let mut p = ConcentrationProfile::uniform(0.0, 1.0, 20).unwrap();
        let mut buf = TrajectoryOccupancy::new(20);
        let mut lifetimes = 0.0;
        for k in 0..37 {
            let steps = k % 5 + 1;
            for s in 0..steps {
                p.accumulate_occupancy(&mut buf, ((k * 7 + s * 3) % 100) as f64 / 100.0, 0.25);
            }
            lifetimes += 0.25 * steps as f64;
            p.add_trajectory(&mut buf);
        }
        assert_eq!(p.occupancy().iter().sum::<f64>(), lifetimes);
        assert_eq!(p.n_trajectories(), 37);
    }

    #[test]
    fn flat_profile() {
        let mut p = ConcentrationProfile::uniform(0.0, 2.0, 4).unwrap();
        let mut buf = TrajectoryOccupancy::new(4);
        for x in [0.1, 0.6, 1.1, 1.6] {
            p.accumulate_occupancy(&mut buf, x, 3.0);
        }
        p.add_trajectory(&mut buf);
        p.total_sim_time = 6.0;
        let n = p.normalize().unwrap();
        for c in &n.concentration {
            assert!((c - 3.0 / (6.0 * 0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn scale_invariance_and_vacuum() {
        let mut a = ConcentrationProfile::uniform(0.0, 1.0, 3).unwrap();
        parked(&mut a, 0.1, 1.0);
        parked(&mut a, 0.5, 2.0);
        a.total_sim_time = 10.0;
        let mut b = a.clone();
        b.merge(&a).unwrap();
        let (na, nb) = (a.normalize().unwrap(), b.normalize().unwrap());
        assert_eq!(na.concentration, nb.concentration);
        assert_eq!(na.concentration[2], 0.0);
        assert_eq!(na.stderr[2], 0.0);
    }

    #[test]
    fn zero_time_rejected() {
        let p = ConcentrationProfile::uniform(0.0, 1.0, 3).unwrap();
        assert_eq!(p.normalize(), Err(ObservableError::ZeroTime));
    }

    #[test]
    fn stderr_matches_direct_computation() {
        let mut p = ConcentrationProfile::uniform(0.0, 1.0, 2).unwrap();
        let occ = [[1.0, 0.0], [3.0, 2.0], [0.0, 5.0], [2.0, 2.0]];
        for o in occ {
            let mut buf = TrajectoryOccupancy::new(2);
            for (bin, &t) in o.iter().enumerate() {
                if t > 0.0 {
                    buf.add(bin, t);
                }
            }
            p.add_trajectory(&mut buf);
        }
        p.total_sim_time = 8.0;
        let n = p.normalize().unwrap();
        // per-trajectory concentration contributions: o / (T w) * N, stderr of the mean
        let bin0: Vec<f64> = occ.iter().map(|o| o[0] / 0.5).collect();
        let mean = bin0.iter().sum::<f64>() / 4.0;
        let var = bin0.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / 3.0;
        let want = 4.0 / 8.0 * (var / 4.0).sqrt();
        assert!((n.stderr[0] - want).abs() < 1e-12);
        // stderr of the difference uses the covariance
        let diff: Vec<f64> = occ.iter().map(|o| (o[0] - o[1]) / 0.5).collect();
        let md = diff.iter().sum::<f64>() / 4.0;
        let vd = diff.iter().map(|c| (c - md).powi(2)).sum::<f64>() / 3.0;
        let got = p.functional_stderr(&[1.0, -1.0]).unwrap();
        assert!((got - 0.5 * (vd / 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn exact_line_fit() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 + 0.5) / 50.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - x).collect();
        let fit = fit_linear(&xs, &ys).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_fit_reports_unit_r2() {
        let fit = fit_linear(&[0.0, 1.0, 2.0, 3.0], &[2.0; 4]).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.r2, 1.0);
        assert!(fit_linear(&[0.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn fit_weights_reproduce_fit() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin() + x).collect();
        let fit = fit_linear(&xs[2..9], &ys[2..9]).unwrap();
        let w = fit_eval_weights(&xs, 2..9, -0.4);
        let via: f64 = w.iter().zip(&ys).map(|(a, b)| a * b).sum();
        assert!((via - fit.eval(-0.4)).abs() < 1e-12);
    }

    #[test]
    fn closed_system_zero_net_flux() {
        let ledger = AbsorptionLedger {
            elapsed: 5.0,
            ..Default::default()
        };
        assert_eq!(measured_net_flux(&ledger).unwrap().j_net, 0.0);
        assert!(measured_net_flux(&AbsorptionLedger::default()).is_err());
    }

    #[test]
    fn throughputs() {
        let ledger = AbsorptionLedger {
            absorbed_lo: 90,
            absorbed_hi: 12,
            injected_lo: 100,
            injected_hi: 2,
            elapsed: 10.0,
        };
        let f = measured_net_flux(&ledger).unwrap();
        assert_eq!(f.hi_throughput, 1.0);
        assert_eq!(f.lo_throughput, 1.0);
        assert_eq!(f.j_net, 1.0);
        // 14 events on the upper side against 190 on the lower one
        assert!((f.stderr - 14f64.sqrt() / 10.0).abs() < 1e-15);
        assert_eq!(ledger.live_balance(), 0);
    }

    proptest! {
        #[test]
        fn merge_then_normalize_equals_pooled(
            a in proptest::collection::vec((0.0f64..1.0, 0.0f64..3.0), 1..30),
            b in proptest::collection::vec((0.0f64..1.0, 0.0f64..3.0), 1..30),
            ta in 0.5f64..10.0, tb in 0.5f64..10.0,
        ) {
            let fill = |items: &[(f64, f64)], p: &mut ConcentrationProfile| {
                for &(x, t) in items {
                    parked(p, x, t);
                }
            };
            let mut pa = ConcentrationProfile::uniform(0.0, 1.0, 8).unwrap();
            let mut pb = pa.clone();
            let mut pooled = pa.clone();
            fill(&a, &mut pa);
            fill(&b, &mut pb);
            fill(&a, &mut pooled);
            fill(&b, &mut pooled);
            pa.total_sim_time = ta;
            pb.total_sim_time = tb;
            pooled.total_sim_time = ta + tb;
            pa.merge(&pb).unwrap();
            let (m, q) = (pa.normalize().unwrap(), pooled.normalize().unwrap());
            for i in 0..8 {
                prop_assert!((m.concentration[i] - q.concentration[i]).abs() <= 1e-9 * q.concentration[i].abs().max(1e-12));
                prop_assert!((m.stderr[i] - q.stderr[i]).abs() <= 1e-9 * q.stderr[i].abs().max(1e-12));
            }
        }
    }
}
