//! Run logs, throughput/regret/violation metrics and analytic bounds.

use std::f64::consts::PI;

use serde::Serialize;

use crate::environment::{ActionSet, ChannelModel};
use crate::error::{Error, Result};

/// State of one timeslot as seen by the scheduler, plus what happened.
///
/// `throughput` and `pseudo_regret` are maintained online by the simulator
/// so that strided logs still carry them; they are `NaN` where undefined
/// (`t < W`, or no stationary oracle).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRecord {
    pub t: u64,
    pub action: usize,
    pub rewards: Vec<u8>,
    pub hol_ages: Vec<u64>,
    pub queue_lens: Vec<u64>,
    pub tslr: Vec<u64>,
    pub oracle_rate: f64,
    pub cumulative_reward: u64,
    pub throughput: Vec<f64>,
    pub pseudo_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub arms: usize,
    /// Every `stride`-th slot is recorded (plus the final slot).
    pub stride: u64,
    pub records: Vec<SlotRecord>,
}

impl RunLog {
    pub fn new(arms: usize, stride: u64) -> Self {
        RunLog {
            arms,
            stride: stride.max(1),
            records: Vec::new(),
        }
    }

    pub fn is_dense(&self) -> bool {
        self.stride == 1
            && self
                .records
                .iter()
                .enumerate()
                .all(|(i, r)| r.t == i as u64 + 1)
    }

    fn dense(&self) -> Result<&[SlotRecord]> {
        if self.is_dense() {
            Ok(&self.records)
        } else {
            Err(Error::arg(
                "operation needs an unstrided log starting at t = 1",
            ))
        }
    }

    pub fn record(&self, t: u64) -> Option<&SlotRecord> {
        let i = self.records.partition_point(|r| r.t < t);
        self.records.get(i).filter(|r| r.t == t)
    }
}

/// `(1/W) * sum of arm-k rewards over slots t-W+1 ..= t`.
pub fn windowed_throughput(log: &RunLog, k: usize, t: u64, window: u64) -> Result<f64> {
    let recs = log.dense()?;
    if window == 0 || t < window {
        return Err(Error::arg(format!(
            "need t >= W > 0, got t = {t}, W = {window}"
        )));
    }
    if t as usize > recs.len() || k >= log.arms {
        return Err(Error::arg(format!("t = {t} or arm {k} beyond the log")));
    }
    let lo = (t - window) as usize;
    let hits: u64 = recs[lo..t as usize]
        .iter()
        .map(|r| r.rewards[k] as u64)
        .sum();
    Ok(hits as f64 / window as f64)
}

/// Per-arm `chi_k - throughput`; positive means the requirement is missed.
pub fn violation(log: &RunLog, chi: &[f64], window: u64, t: u64) -> Result<Vec<f64>> {
    chi.iter()
        .enumerate()
        .map(|(k, c)| Ok(c - windowed_throughput(log, k, t, window)?))
        .collect()
}

fn expected_service(actions: &ActionSet, action: usize, rates: &[f64]) -> f64 {
    actions
        .incidence(action)
        .map(|inc| inc.iter().zip(rates).map(|(&i, r)| i as f64 * r).sum())
        .unwrap_or(f64::NAN)
}

/// Mean-form regret `sum_{t <= upto} (oracle_rate - sum_k rate_k I_k(A_t))`.
/// Refuses nonstationary channels; see [`pseudo_regret_segmented`].
pub fn pseudo_regret(
    log: &RunLog,
    actions: &ActionSet,
    model: &ChannelModel,
    oracle_rate: f64,
    upto: u64,
) -> Result<f64> {
    let ChannelModel::Iid { rates } = model else {
        return Err(Error::Nonstationary);
    };
    let recs = log.dense()?;
    Ok(recs
        .iter()
        .take_while(|r| r.t <= upto)
        .map(|r| oracle_rate - expected_service(actions, r.action, rates))
        .sum())
}

/// Oracle for one stationary stretch starting at `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOracle {
    pub start: u64,
    pub rates: Vec<f64>,
    pub oracle_rate: f64,
}

/// Regret against a per-segment oracle. Segments must be sorted by start
/// and the first must start at 1.
pub fn pseudo_regret_segmented(
    log: &RunLog,
    actions: &ActionSet,
    segments: &[SegmentOracle],
    upto: u64,
) -> Result<f64> {
    if segments.first().map(|s| s.start) != Some(1) {
        return Err(Error::arg("segment oracles must start at t = 1"));
    }
    let recs = log.dense()?;
    Ok(recs
        .iter()
        .take_while(|r| r.t <= upto)
        .map(|r| {
            let seg = &segments[segments.partition_point(|s| s.start <= r.t) - 1];
            seg.oracle_rate - expected_service(actions, r.action, &seg.rates)
        })
        .sum())
}

/// Regret using observed rewards instead of true means.
pub fn realized_regret(log: &RunLog, oracle_rate: f64, upto: u64) -> Result<f64> {
    let recs = log.dense()?;
    let r = recs
        .get(
            upto.checked_sub(1)
                .ok_or_else(|| Error::arg("upto must be >= 1"))? as usize,
        )
        .ok_or_else(|| Error::arg("upto beyond the log"))?;
    Ok(upto as f64 * oracle_rate - r.cumulative_reward as f64)
}

/// `sqrt(sum_k (chi_k + eps)/rate_k * age_k^2)`.
pub fn weighted_age_norm(ages: &[u64], chi: &[f64], eps: f64, rates: &[f64]) -> f64 {
    ages.iter()
        .zip(chi.iter().zip(rates))
        .map(|(&z, (c, r))| (c + eps) / r * (z as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Violation bound for an age-based policy at slot `t`, given the mean
/// head-of-line age at `t + 1`.
pub fn age_violation_bound(chi: f64, eps: f64, window: u64, mean_next_age: f64) -> f64 {
    (1.0 + (mean_next_age - 1.0) * (chi + eps)) / window as f64 - eps
}

/// Window size that guarantees zero violation given a measured mean
/// head-of-line age.
pub fn age_window(chi: f64, eps: f64, mean_age: f64) -> f64 {
    ((chi + eps) * mean_age + 1.0) / eps
}

/// Instance parameters for the analytic bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundInputs {
    pub chi: Vec<f64>,
    pub rates: Vec<f64>,
    pub eta: f64,
    pub eps: f64,
    pub gamma: f64,
    pub arms: usize,
    pub i_max: usize,
    pub horizon: u64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if self.chi.len() != self.arms || self.rates.len() != self.arms || self.arms == 0 {
            return Err(Error::arg("chi and rates must have one entry per arm"));
        }
        let positive = [self.eta, self.eps, self.gamma]
            .iter()
            .chain(&self.chi)
            .chain(&self.rates)
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive || self.i_max == 0 || self.horizon == 0 {
            return Err(Error::arg("bound inputs must all be strictly positive"));
        }
        Ok(())
    }

    /// The bounds are only proven for `eps <= gamma / 2`.
    pub fn eps_within_slack(&self) -> bool {
        self.eps <= self.gamma / 2.0
    }

    fn inverse_service_sum(&self) -> f64 {
        self.chi
            .iter()
            .zip(&self.rates)
            .map(|(c, r)| 1.0 / (c * r))
            .sum()
    }
}

/// Upper end of the admissible MGF argument range:
/// `-(min rate / 2) * ln(1 - min chi)`.
pub fn theta_limit(chi: &[f64], rates: &[f64]) -> f64 {
    let rate_min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let chi_min = chi.iter().cloned().fold(f64::INFINITY, f64::min);
    -(rate_min / 2.0) * (1.0 - chi_min).ln()
}

/// Product of geometric MGFs `prod_k chi_k e^{s_k} / (1 - (1 - chi_k) e^{s_k})`
/// with `s_k = 2 theta / rate_k`; `None` where a denominator is not positive.
pub fn geometric_mgf(chi: &[f64], rates: &[f64], theta: f64) -> Option<f64> {
    let mut prod = 1.0;
    for (c, r) in chi.iter().zip(rates) {
        let e = (2.0 * theta / r).exp();
        let denom = 1.0 - (1.0 - c) * e;
        if !(denom > 0.0) {
            return None;
        }
        prod *= c * e / denom;
    }
    prod.is_finite().then_some(prod)
}

fn mgf_objective(chi: &[f64], rates: &[f64], theta: f64) -> Option<f64> {
    let g = geometric_mgf(chi, rates, theta)?;
    let v = 9.0 * g / (theta * theta) * (32.0 * g / (theta * theta)).ln();
    v.is_finite().then_some(v)
}

const THETA_GRID: usize = 10_000;
const GOLDEN_RTOL: f64 = 1e-6;

/// Minimum over `theta in (0, theta_limit]` of
/// `9 g / theta^2 * ln(32 g / theta^2)`. Returns `(value, argmin)`.
///
/// Grid search over log-spaced points in `(1e-8 * limit, limit]`, then
/// golden-section refinement inside the bracket around the best point.
pub fn mgf_min(chi: &[f64], rates: &[f64]) -> Result<(f64, f64)> {
    let limit = theta_limit(chi, rates);
    if !(limit > 0.0 && limit.is_finite()) {
        return Err(Error::NumericDomain(format!(
            "theta range (0, {limit}] is empty; requirements must lie in (0, 1)"
        )));
    }
    let grid: Vec<f64> = (0..THETA_GRID)
        .map(|i| limit * 10f64.powf(-8.0 + 8.0 * i as f64 / (THETA_GRID - 1) as f64))
        .collect();
    let phi = |th: f64| mgf_objective(chi, rates, th);
    let (best, best_val) = grid
        .iter()
        .enumerate()
        .filter_map(|(i, &th)| phi(th).map(|v| (i, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::NumericDomain("no admissible theta on the grid".into()))?;

    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(THETA_GRID - 1)];
    // undefined points count as +inf so the search stays inside the domain
    let f = |th: f64| phi(th).unwrap_or(f64::INFINITY);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while (hi - lo) > GOLDEN_RTOL * hi {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    let (theta, val) = if fa < fb { (a, fa) } else { (b, fb) };
    Ok(if val < best_val {
        (val, theta)
    } else {
        (best_val, grid[best])
    })
}

/// Bound on the mean weighted head-of-line age norm, valid at every slot.
pub fn lemma5_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let (f, _) = mgf_min(&inputs.chi, &inputs.rates)?;
    let g = inputs.gamma;
    Ok(8.0 * (4.0 / g).ln() / g * f
        + 4.0 / g * inputs.inverse_service_sum()
        + 4.0 * inputs.arms as f64 * inputs.eta / g)
}

/// Smallest window for which the age-based policy has zero expected
/// violation.
pub fn theorem2_window(inputs: &BoundInputs) -> Result<f64> {
    Ok(lemma5_bound(inputs)? / inputs.eps + 1.0 / inputs.eps)
}

/// Regret bound of the age-based policy at horizon `T`.
pub fn theorem3_regret_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let t = inputs.horizon as f64;
    let k = inputs.arms as f64;
    Ok(inputs.eps * k * t / inputs.gamma
        + t / inputs.eta * inputs.inverse_service_sum()
        + (56.0 * k * inputs.i_max as f64 * t * t.ln()).sqrt()
        + k * PI * PI / 3.0)
}

/// Streaming mean and standard error (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OnlineStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl OnlineStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean; 0 for fewer than two samples.
    pub fn se(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for OnlineStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = OnlineStats::default();
        iter.into_iter().for_each(|x| s.push(x));
        s
    }
}
