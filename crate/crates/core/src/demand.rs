//! Request arrivals as a discretized compound Poisson process.
//!
//! A horizon is cut into `k` timesteps. In each timestep at most one request
//! arrives: product `i` with probability `λ_i / k`, nothing with probability
//! `1 - Σ λ_i / k`. The expected request count over the horizon equals the
//! Poisson mean `λ = Σ λ_i` exactly; what the approximation loses are the
//! additional arrivals that fall into an already occupied timestep. Those
//! losses are quantified in closed form by [`err_intervals`] and
//! [`err_missed`], and empirically by [`mc_error_oracle`].

use rand::Rng;
use rand_distr::{Distribution, Geometric, Poisson};

use crate::exec::Exec;
use crate::rng::{rng_for, Stream};
use crate::stats::Welford;
use crate::{Error, Result};

/// Per-product Poisson rates, in expected requests per selling horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityVector {
    rates: Vec<f64>,
    total: f64,
}

impl IntensityVector {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if let Some(bad) = rates.iter().find(|r| !r.is_finite() || **r < 0.0) {
            return Err(Error::domain(format!("intensity must be finite and >= 0, got {bad}")));
        }
        let total = rates.iter().sum();
        Ok(IntensityVector { rates, total })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

/// The timestep grid a horizon is discretized onto.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    horizon_hours: f64,
    timesteps: u32,
}

impl Discretization {
    pub fn new(horizon_hours: f64, timesteps: u32) -> Result<Self> {
        if !(horizon_hours.is_finite() && horizon_hours > 0.0) {
            return Err(Error::config(format!("horizon must be > 0 hours, got {horizon_hours}")));
        }
        if timesteps == 0 {
            return Err(Error::config("timesteps must be positive"));
        }
        Ok(Discretization {
            horizon_hours,
            timesteps,
        })
    }

    pub fn horizon_hours(&self) -> f64 {
        self.horizon_hours
    }

    pub fn timesteps(&self) -> u32 {
        self.timesteps
    }

    pub fn step_length_hours(&self) -> f64 {
        self.horizon_hours / self.timesteps as f64
    }
}

/// Multi-class Bernoulli approximation of the compound Poisson process.
///
/// Timesteps are numbered `1..=k`. An optional per-timestep multiplier
/// profile scales every rate in that timestep, giving a piecewise-constant
/// intensity; the homogeneous process has no profile.
#[derive(Debug, Clone)]
pub struct DiscreteDemandProcess {
    intensity: IntensityVector,
    discretization: Discretization,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
    /// Cumulative product shares `λ_i / λ`, for sampling conditional on an arrival.
    shares: Vec<f64>,
    profile: Option<Vec<f64>>,
}

impl DiscreteDemandProcess {
    pub fn new(intensity: IntensityVector, discretization: Discretization) -> Result<Self> {
        let k = discretization.timesteps() as f64;
        if intensity.total() > k * (1.0 + 1e-12) {
            return Err(Error::config(format!(
                "timesteps k = {k} must be at least the total intensity {}",
                intensity.total()
            )));
        }
        let probs: Vec<f64> = intensity.rates().iter().map(|r| r / k).collect();
        let cumulative = running_sum(&probs);
        let total = intensity.total();
        let shares = if total > 0.0 {
            let mut s = running_sum(&intensity.rates().iter().map(|r| r / total).collect::<Vec<_>>());
            let last_positive = intensity.rates().iter().rposition(|r| *r > 0.0).unwrap_or(0);
            s[last_positive..].iter_mut().for_each(|c| *c = 1.0);
            s
        } else {
            vec![0.0; intensity.len()]
        };
        Ok(DiscreteDemandProcess {
            intensity,
            discretization,
            probs,
            cumulative,
            shares,
            profile: None,
        })
    }

    /// Attaches a per-timestep rate multiplier table of length `k`.
    pub fn with_profile(mut self, multipliers: Vec<f64>) -> Result<Self> {
        let k = self.discretization.timesteps() as usize;
        if multipliers.len() != k {
            return Err(Error::config(format!(
                "profile needs {k} multipliers, got {}",
                multipliers.len()
            )));
        }
        let peak = self.intensity.total() / k as f64;
        for (t, m) in multipliers.iter().enumerate() {
            if !m.is_finite() || *m < 0.0 || peak * m > 1.0 + 1e-12 {
                return Err(Error::config(format!(
                    "multiplier {m} at timestep {} gives an arrival probability outside [0, 1]",
                    t + 1
                )));
            }
        }
        self.profile = Some(multipliers);
        Ok(self)
    }

    pub fn intensity(&self) -> &IntensityVector {
        &self.intensity
    }

    pub fn discretization(&self) -> &Discretization {
        &self.discretization
    }

    pub fn timesteps(&self) -> u32 {
        self.discretization.timesteps()
    }

    pub fn n_products(&self) -> usize {
        self.probs.len()
    }

    fn multiplier(&self, t: u32) -> f64 {
        match &self.profile {
            Some(m) => m[(t - 1) as usize],
            None => 1.0,
        }
    }

    fn check_step(&self, t: u32) -> Result<()> {
        if t == 0 || t > self.timesteps() {
            return Err(Error::domain(format!(
                "timestep {t} outside 1..={}",
                self.timesteps()
            )));
        }
        Ok(())
    }

    /// Probability that any request arrives in timestep `t`.
    pub fn arrival_probability(&self, t: u32) -> f64 {
        (self.intensity.total() / self.timesteps() as f64 * self.multiplier(t)).min(1.0)
    }

    /// `p_req(product, t)`; `None` asks for the empty outcome.
    pub fn request_probability(&self, product: Option<usize>, t: u32) -> Result<f64> {
        self.check_step(t)?;
        let m = self.multiplier(t);
        match product {
            Some(i) => self
                .probs
                .get(i)
                .map(|p| p * m)
                .ok_or_else(|| Error::domain(format!("product index {i} out of range"))),
            None => Ok((1.0 - self.cumulative.last().copied().unwrap_or(0.0) * m).max(0.0)),
        }
    }

    /// Full outcome distribution of timestep `t`: products first, empty last.
    pub fn step_distribution(&self, t: u32) -> Vec<f64> {
        let m = self.multiplier(t);
        let mut out: Vec<f64> = self.probs.iter().map(|p| p * m).collect();
        let filled: f64 = self.cumulative.last().copied().unwrap_or(0.0) * m;
        out.push((1.0 - filled).max(0.0));
        out
    }

    /// One die roll of timestep `t`.
    pub fn sample_step<R: Rng + ?Sized>(&self, t: u32, rng: &mut R) -> Option<usize> {
        let u: f64 = rng.random();
        let m = self.multiplier(t);
        let idx = self.cumulative.partition_point(|c| c * m <= u);
        (idx < self.probs.len()).then_some(idx)
    }

    /// Product of a request, conditional on one arriving.
    pub fn sample_product<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.shares
            .partition_point(|c| *c <= u)
            .min(self.probs.len().saturating_sub(1))
    }

    /// Number of timesteps from `t` to the next arrival, `Δ >= 1`.
    ///
    /// For the homogeneous process this is geometric with success probability
    /// `λ / k` and unbounded support; callers compare `t + Δ` with the horizon.
    /// With a profile the steps are scanned to the end of the horizon. `None`
    /// means no further arrival can happen.
    pub fn sample_interarrival<R: Rng + ?Sized>(&self, t: u32, rng: &mut R) -> Option<u32> {
        match &self.profile {
            None => {
                let p = self.arrival_probability(1);
                if p <= 0.0 {
                    return None;
                }
                if p >= 1.0 {
                    return Some(1);
                }
                let failures = Geometric::new(p).expect("valid probability").sample(rng);
                Some(failures.saturating_add(1).min(u32::MAX as u64) as u32)
            }
            Some(_) => {
                let k = self.timesteps();
                let mut s = t;
                while s < k {
                    s += 1;
                    let p = self.arrival_probability(s);
                    if p > 0.0 && rng.random::<f64>() < p {
                        return Some(s - t);
                    }
                }
                None
            }
        }
    }
}

fn running_sum(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// `P(X >= 2)` for `X ~ Poisson(x)`.
fn prob_two_or_more(x: f64) -> f64 {
    if x < 1e-3 {
        // alternating series Σ_{m>=2} (-1)^m (m-1) x^m / m!
        let mut term = x * x / 2.0;
        let mut sum = 0.0;
        for m in 2..12u32 {
            sum += term * (m - 1) as f64;
            term *= -x / (m + 1) as f64;
        }
        sum
    } else {
        -f64::exp_m1(-x) - x * (-x).exp()
    }
}

/// `E[max(X - 1, 0)]` for `X ~ Poisson(x)`.
fn expected_excess(x: f64) -> f64 {
    if x < 1e-3 {
        // x - (1 - e^{-x}) = Σ_{m>=2} (-1)^m x^m / m!
        let mut term = x * x / 2.0;
        let mut sum = 0.0;
        for m in 2..12u32 {
            sum += term;
            term *= -x / (m + 1) as f64;
        }
        sum
    } else {
        x + f64::exp_m1(-x)
    }
}

/// Expected number of timesteps in which the Poisson process has more than
/// one arrival: `k - (k + λ) e^{-λ/k}`.
pub fn err_intervals(k: u64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    k as f64 * prob_two_or_more(lambda / k as f64)
}

/// Expected number of arrivals beyond the first, summed over timesteps:
/// `λ e^{-λ/k} + (λ - k)(1 - e^{-λ/k})`.
pub fn err_missed(k: u64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    k as f64 * expected_excess(lambda / k as f64)
}

/// Missed additional requests per expected request.
pub fn relative_error(k: u64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("relative error needs lambda > 0, got {lambda}")));
    }
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    Ok(err_missed(k, lambda) / lambda)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub err_intervals: f64,
    pub err_missed: f64,
    pub relative: f64,
}

impl ErrorReport {
    pub fn analytic(k: u64, lambda: f64) -> Self {
        let err_missed = err_missed(k, lambda);
        ErrorReport {
            err_intervals: err_intervals(k, lambda),
            err_missed,
            relative: if lambda > 0.0 { err_missed / lambda } else { 0.0 },
        }
    }
}

/// Smallest `k >= ceil(λ)` whose relative error is at most `epsilon`.
pub fn min_timesteps(lambda: f64, epsilon: f64) -> Result<u64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("lambda must be > 0, got {lambda}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let rel = |k: u64| err_missed(k, lambda) / lambda;
    let lo_start = (lambda.ceil() as u64).max(1);
    if rel(lo_start) <= epsilon {
        return Ok(lo_start);
    }
    // rel(lo) > eps <= rel(hi)
    let mut lo = lo_start;
    let mut hi = lo_start.saturating_mul(2);
    while rel(hi) > epsilon {
        lo = hi;
        hi = hi.saturating_mul(2);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if rel(mid) <= epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// [`min_timesteps`] rounded up to a multiple of `n_slots`, so that every
/// timeslot boundary falls on a timestep boundary.
pub fn aligned_timesteps(lambda: f64, epsilon: f64, n_slots: u64) -> Result<u64> {
    if n_slots == 0 {
        return Err(Error::config("slot count must be positive"));
    }
    let k = min_timesteps(lambda, epsilon)?;
    Ok(k.div_ceil(n_slots) * n_slots)
}

/// Empirical discretization errors with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McErrorReport {
    pub report: ErrorReport,
    pub se_intervals: f64,
    pub se_missed: f64,
    pub samples: u64,
}

const MC_BATCH: u64 = 4096;

/// Simulates Poisson(λ) arrival paths on the unit interval, bins them into
/// `k` equal intervals and measures both discretization errors.
pub fn mc_error_oracle(k: u64, lambda: f64, n_samples: u64, seed: u64, exec: Exec) -> Result<McErrorReport> {
    if n_samples == 0 {
        return Err(Error::domain("n_samples must be at least 1"));
    }
    if k == 0 || !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("invalid (k, lambda) = ({k}, {lambda})")));
    }
    if lambda == 0.0 {
        return Ok(McErrorReport {
            report: ErrorReport {
                err_intervals: 0.0,
                err_missed: 0.0,
                relative: 0.0,
            },
            se_intervals: 0.0,
            se_missed: 0.0,
            samples: n_samples,
        });
    }
    let batches = n_samples.div_ceil(MC_BATCH);
    let poisson = Poisson::new(lambda).map_err(|e| Error::domain(e.to_string()))?;
    let parts = exec.map(batches as usize, |b| {
        let mut rng = rng_for(seed, Stream::Oracle, b as u64, k);
        let n = MC_BATCH.min(n_samples - b as u64 * MC_BATCH);
        let mut counts = vec![0u32; k as usize];
        let mut touched = Vec::new();
        let (mut w1, mut w2) = (Welford::default(), Welford::default());
        for _ in 0..n {
            let arrivals = poisson.sample(&mut rng) as u64;
            let mut multi = 0u64;
            let mut occupied = 0u64;
            for _ in 0..arrivals {
                let u: f64 = rng.random();
                let bin = ((u * k as f64) as usize).min(k as usize - 1);
                let c = &mut counts[bin];
                *c += 1;
                match *c {
                    1 => {
                        occupied += 1;
                        touched.push(bin);
                    }
                    2 => multi += 1,
                    _ => {}
                }
            }
            for &bin in &touched {
                counts[bin] = 0;
            }
            touched.clear();
            w1.push(multi as f64);
            w2.push((arrivals - occupied) as f64);
        }
        (w1, w2)
    });
    let (mut w1, mut w2) = (Welford::default(), Welford::default());
    for (a, b) in &parts {
        w1.merge(a);
        w2.merge(b);
    }
    Ok(McErrorReport {
        report: ErrorReport {
            err_intervals: w1.mean(),
            err_missed: w2.mean(),
            relative: w2.mean() / lambda,
        },
        se_intervals: w1.std_error(),
        se_missed: w2.std_error(),
        samples: n_samples,
    })
}
