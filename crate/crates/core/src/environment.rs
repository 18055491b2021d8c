//! Network environment: feasible actions, channel models and rewards.
//!
//! Timeslots are 1-based throughout the crate. Binary vectors (successes,
//! rewards, incidence) are stored as `u8` with values 0 or 1.

use std::collections::HashSet;
use std::ops::RangeInclusive;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};

/// Finite set of feasible schedules, each a 0/1 incidence vector over the
/// `K` arms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSet {
    arms: usize,
    incidence: Vec<Vec<u8>>,
}

impl ActionSet {
    pub fn new(arms: usize, incidence: Vec<Vec<u8>>) -> Result<Self> {
        if arms == 0 {
            return Err(Error::arg("action set needs at least one arm"));
        }
        if incidence.is_empty() {
            return Err(Error::arg("action set is empty"));
        }
        let mut seen = HashSet::new();
        for (i, row) in incidence.iter().enumerate() {
            if row.len() != arms {
                return Err(Error::arg(format!(
                    "action {i} has length {}, expected {arms}",
                    row.len()
                )));
            }
            if row.iter().any(|&v| v > 1) {
                return Err(Error::arg(format!("action {i} has a non-binary entry")));
            }
            if !seen.insert(row.clone()) {
                return Err(Error::arg(format!(
                    "action {i} duplicates an earlier action"
                )));
            }
        }
        let set = ActionSet { arms, incidence };
        if set.i_max() == 0 {
            return Err(Error::arg("every action schedules zero arms"));
        }
        Ok(set)
    }

    /// Exactly one arm per slot: action `k` schedules arm `k`.
    pub fn one_of(arms: usize) -> Result<Self> {
        let incidence = (0..arms)
            .map(|k| (0..arms).map(|j| u8::from(j == k)).collect())
            .collect();
        Self::new(arms, incidence)
    }

    /// All subsets of exactly `size` arms, in lexicographic order of the
    /// scheduled arm indices.
    pub fn choose(arms: usize, size: usize) -> Result<Self> {
        if size == 0 || size > arms {
            return Err(Error::arg(format!("cannot choose {size} of {arms} arms")));
        }
        let mut incidence = Vec::new();
        let mut pick: Vec<usize> = (0..size).collect();
        loop {
            let mut row = vec![0u8; arms];
            for &p in &pick {
                row[p] = 1;
            }
            incidence.push(row);
            // advance to the next combination
            let mut i = size;
            loop {
                if i == 0 {
                    return Self::new(arms, incidence);
                }
                i -= 1;
                if pick[i] < arms - size + i {
                    break;
                }
            }
            pick[i] += 1;
            for j in i + 1..size {
                pick[j] = pick[j - 1] + 1;
            }
        }
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn len(&self) -> usize {
        self.incidence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.incidence.is_empty()
    }

    pub fn incidence(&self, action: usize) -> Option<&[u8]> {
        self.incidence.get(action).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> {
        self.incidence.iter().map(Vec::as_slice)
    }

    /// Largest number of arms scheduled by a single action.
    pub fn i_max(&self) -> usize {
        self.incidence
            .iter()
            .map(|row| row.iter().map(|&v| v as usize).sum::<usize>())
            .max()
            .unwrap_or(0)
    }
}

/// A stationary stretch of a piecewise-stationary channel, active on
/// `[start, next.start)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: u64,
    pub rates: Vec<f64>,
}

/// Generator of per-arm success indicators.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    Iid {
        rates: Vec<f64>,
    },
    Piecewise {
        segments: Vec<Segment>,
    },
    /// Row `t - 1` holds the success vector of slot `t`.
    Trace {
        rows: Vec<Vec<u8>>,
    },
}

fn check_rates(rates: &[f64], arms: usize, what: &str) -> Result<()> {
    if rates.len() != arms {
        return Err(Error::arg(format!(
            "{what} has {} rates, expected {arms}",
            rates.len()
        )));
    }
    if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(Error::arg(format!("{what}: rate {r} outside (0, 1]")));
    }
    Ok(())
}

impl ChannelModel {
    pub fn arms(&self) -> usize {
        match self {
            ChannelModel::Iid { rates } => rates.len(),
            ChannelModel::Piecewise { segments } => segments.first().map_or(0, |s| s.rates.len()),
            ChannelModel::Trace { rows } => rows.first().map_or(0, Vec::len),
        }
    }

    pub fn is_iid(&self) -> bool {
        matches!(self, ChannelModel::Iid { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let arms = self.arms();
        if arms == 0 {
            return Err(Error::arg("channel model has no arms"));
        }
        match self {
            ChannelModel::Iid { rates } => check_rates(rates, arms, "i.i.d. channel"),
            ChannelModel::Piecewise { segments } => {
                if segments[0].start != 1 {
                    return Err(Error::arg("first segment must start at t = 1"));
                }
                for (i, seg) in segments.iter().enumerate() {
                    check_rates(&seg.rates, arms, &format!("segment {i}"))?;
                    if i > 0 && seg.start <= segments[i - 1].start {
                        return Err(Error::arg("segment starts must be strictly increasing"));
                    }
                }
                Ok(())
            }
            ChannelModel::Trace { rows } => {
                for (i, row) in rows.iter().enumerate() {
                    if row.len() != arms {
                        return Err(Error::arg(format!("trace row {} is ragged", i + 1)));
                    }
                    if row.iter().any(|&v| v > 1) {
                        return Err(Error::arg(format!("trace row {} is not binary", i + 1)));
                    }
                }
                Ok(())
            }
        }
    }

    /// True channel rates in effect at slot `t`; `None` for traces.
    pub fn rates_at(&self, t: u64) -> Option<&[f64]> {
        match self {
            ChannelModel::Iid { rates } => Some(rates),
            ChannelModel::Piecewise { segments } => {
                let idx = segments.partition_point(|s| s.start <= t);
                segments
                    .get(idx.checked_sub(1)?)
                    .map(|s| s.rates.as_slice())
            }
            ChannelModel::Trace { .. } => None,
        }
    }

    /// Mean success rate per arm over `window` (inclusive slots).
    pub fn mean_rates(&self, window: RangeInclusive<u64>) -> Result<Vec<f64>> {
        let (lo, hi) = (*window.start(), *window.end());
        if lo == 0 || hi < lo {
            return Err(Error::arg(format!("empty or invalid window [{lo}, {hi}]")));
        }
        let span = (hi - lo + 1) as f64;
        match self {
            ChannelModel::Iid { rates } => Ok(rates.clone()),
            ChannelModel::Piecewise { segments } => {
                let mut acc = vec![0.0; self.arms()];
                for (i, seg) in segments.iter().enumerate() {
                    let seg_end = segments.get(i + 1).map_or(u64::MAX, |n| n.start - 1);
                    let a = seg.start.max(lo);
                    let b = seg_end.min(hi);
                    if a > b {
                        continue;
                    }
                    let dur = (b - a + 1) as f64;
                    for (sum, r) in acc.iter_mut().zip(&seg.rates) {
                        *sum += r * dur;
                    }
                }
                Ok(acc.into_iter().map(|s| s / span).collect())
            }
            ChannelModel::Trace { rows } => {
                if hi as usize > rows.len() {
                    return Err(Error::Range {
                        what: "window end",
                        value: hi,
                        valid: format!("1..={}", rows.len()),
                    });
                }
                let mut acc = vec![0u64; self.arms()];
                for row in &rows[lo as usize - 1..hi as usize] {
                    for (sum, &v) in acc.iter_mut().zip(row) {
                        *sum += v as u64;
                    }
                }
                Ok(acc.into_iter().map(|s| s as f64 / span).collect())
            }
        }
    }
}

/// A channel model bound to one run: owns the per-arm RNG substreams and,
/// for traces, the starting row offset (applied with wraparound).
#[derive(Debug, Clone)]
pub struct Channel<'a> {
    model: &'a ChannelModel,
    rngs: Vec<ChaCha8Rng>,
    offset: usize,
}

impl<'a> Channel<'a> {
    /// Every arm draws from `Purpose::Channel` substream `k` of `run_seed`.
    pub fn new(model: &'a ChannelModel, horizon: u64, run_seed: u64) -> Result<Self> {
        Self::with_offset(model, horizon, run_seed, 0)
    }

    pub fn with_offset(
        model: &'a ChannelModel,
        horizon: u64,
        run_seed: u64,
        offset: usize,
    ) -> Result<Self> {
        model.validate()?;
        if let ChannelModel::Trace { rows } = model {
            if (rows.len() as u64) < horizon {
                return Err(Error::config(format!(
                    "trace has {} rows but the horizon is {horizon}",
                    rows.len()
                )));
            }
        }
        let rngs = (0..model.arms() as u32)
            .map(|k| substream(run_seed, Purpose::Channel, k))
            .collect();
        Ok(Channel {
            model,
            rngs,
            offset,
        })
    }

    pub fn model(&self) -> &ChannelModel {
        self.model
    }

    /// Success vector `X(S_t)`. I.i.d. and piecewise arms consume exactly one
    /// uniform draw per slot from their own substream.
    pub fn sample(&mut self, t: u64) -> Result<Vec<u8>> {
        if t == 0 {
            return Err(Error::Range {
                what: "timeslot",
                value: t,
                valid: "t >= 1".into(),
            });
        }
        match self.model {
            ChannelModel::Trace { rows } => {
                let n = rows.len();
                if self.offset == 0 && t as usize > n {
                    return Err(Error::Range {
                        what: "trace timeslot",
                        value: t,
                        valid: format!("1..={n}"),
                    });
                }
                Ok(rows[(self.offset + t as usize - 1) % n].clone())
            }
            _ => {
                let rates = self
                    .model
                    .rates_at(t)
                    .expect("validated model covers t >= 1");
                Ok(self
                    .rngs
                    .iter_mut()
                    .zip(rates)
                    .map(|(rng, &r)| u8::from(rng.random::<f64>() < r))
                    .collect())
            }
        }
    }
}

/// Per-slot successes and the rewards they produce under the chosen action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub successes: Vec<u8>,
    pub rewards: Vec<u8>,
}

/// `R_k = X_k * I_k(a)`.
pub fn apply_action(successes: &[u8], action: usize, actions: &ActionSet) -> Result<StepOutcome> {
    let incidence = actions.incidence(action).ok_or_else(|| Error::Range {
        what: "action index",
        value: action as u64,
        valid: format!("0..{}", actions.len()),
    })?;
    if successes.len() != incidence.len() {
        return Err(Error::arg("success vector length does not match arm count"));
    }
    let rewards = successes
        .iter()
        .zip(incidence)
        .map(|(x, i)| x & i)
        .collect();
    Ok(StepOutcome {
        successes: successes.to_vec(),
        rewards,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_arm() -> ActionSet {
        ActionSet::one_of(2).unwrap()
    }

    #[test]
    fn action_set_invariants() {
        assert!(ActionSet::new(2, vec![]).is_err());
        assert!(ActionSet::new(2, vec![vec![1, 0], vec![1, 0]]).is_err());
        assert!(ActionSet::new(2, vec![vec![1, 2]]).is_err());
        assert!(ActionSet::new(2, vec![vec![1]]).is_err());
        assert!(ActionSet::new(2, vec![vec![0, 0]]).is_err());
        let c = ActionSet::choose(4, 2).unwrap();
        assert_eq!(c.len(), 6);
        assert_eq!(c.i_max(), 2);
        assert_eq!(c.incidence(0).unwrap(), &[1, 1, 0, 0]);
        assert_eq!(c.incidence(5).unwrap(), &[0, 0, 1, 1]);
        assert_eq!(ActionSet::choose(3, 3).unwrap().len(), 1);
    }

    #[test]
    fn masking() {
        let a = two_arm();
        assert_eq!(apply_action(&[1, 1], 0, &a).unwrap().rewards, vec![1, 0]);
        assert_eq!(apply_action(&[0, 1], 0, &a).unwrap().rewards, vec![0, 0]);
        let both = ActionSet::new(2, vec![vec![1, 0], vec![0, 1], vec![1, 1]]).unwrap();
        assert_eq!(apply_action(&[1, 1], 2, &both).unwrap().rewards, vec![1, 1]);
        assert!(matches!(
            apply_action(&[1, 1], 2, &a),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn trace_passthrough_and_range() {
        let model = ChannelModel::Trace {
            rows: vec![vec![1, 0, 1], vec![0, 0, 0]],
        };
        let mut ch = Channel::new(&model, 2, 1).unwrap();
        assert_eq!(ch.sample(1).unwrap(), vec![1, 0, 1]);
        assert_eq!(ch.sample(2).unwrap(), vec![0, 0, 0]);
        assert!(matches!(ch.sample(3), Err(Error::Range { .. })));
        assert!(Channel::new(&model, 3, 1).is_err());
    }

    #[test]
    fn iid_empirical_mean() {
        let model = ChannelModel::Iid {
            rates: vec![0.9, 0.9],
        };
        let mut ch = Channel::new(&model, 100_000, 11).unwrap();
        let mut hits = [0u32; 2];
        for t in 1..=100_000 {
            let x = ch.sample(t).unwrap();
            hits[0] += x[0] as u32;
            hits[1] += x[1] as u32;
        }
        for h in hits {
            assert!((h as f64 / 1e5 - 0.9).abs() < 0.01, "{h}");
        }
    }

    #[test]
    fn piecewise_segment_mean() {
        let t_total: u64 = 210_000;
        let drop = t_total.div_ceil(6);
        let recover = (2 * t_total).div_ceil(3);
        let model = ChannelModel::Piecewise {
            segments: vec![
                Segment {
                    start: 1,
                    rates: vec![0.9, 0.9],
                },
                Segment {
                    start: drop,
                    rates: vec![0.5, 0.9],
                },
                Segment {
                    start: recover,
                    rates: vec![0.9, 0.9],
                },
            ],
        };
        let mut ch = Channel::new(&model, t_total, 5).unwrap();
        let (mut n, mut hits) = (0u32, 0u32);
        for t in 1..=t_total {
            let x = ch.sample(t).unwrap();
            if (drop..recover).contains(&t) && n < 100_000 {
                n += 1;
                hits += x[0] as u32;
            }
        }
        assert_eq!(n, 100_000);
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.01);
        assert_eq!(model.rates_at(drop - 1).unwrap(), &[0.9, 0.9]);
        assert_eq!(model.rates_at(drop).unwrap(), &[0.5, 0.9]);
        assert_eq!(model.rates_at(recover).unwrap(), &[0.9, 0.9]);
    }

    #[test]
    fn mean_rates_variants() {
        let iid = ChannelModel::Iid {
            rates: vec![0.9, 0.9],
        };
        assert_eq!(iid.mean_rates(3..=17).unwrap(), vec![0.9, 0.9]);
        let pw = ChannelModel::Piecewise {
            segments: vec![
                Segment {
                    start: 1,
                    rates: vec![0.9],
                },
                Segment {
                    start: 100,
                    rates: vec![0.5],
                },
            ],
        };
        let m = pw.mean_rates(1..=199).unwrap()[0];
        let expect = 0.9 * (99.0 / 199.0) + 0.5 * (100.0 / 199.0);
        assert!((m - expect).abs() < 1e-12);
        assert!((m - 0.69899).abs() < 1e-5);
        let tr = ChannelModel::Trace {
            rows: vec![vec![1, 0], vec![1, 1], vec![0, 1], vec![1, 1]],
        };
        assert_eq!(tr.mean_rates(1..=4).unwrap(), vec![0.75, 0.75]);
        assert_eq!(tr.mean_rates(2..=3).unwrap(), vec![0.5, 1.0]);
        #[allow(clippy::reversed_empty_ranges)]
        let empty = 5..=4;
        assert!(tr.mean_rates(empty).is_err());
    }

    #[test]
    fn validation() {
        assert!(ChannelModel::Iid { rates: vec![0.0] }.validate().is_err());
        assert!(ChannelModel::Iid { rates: vec![1.1] }.validate().is_err());
        let bad_start = ChannelModel::Piecewise {
            segments: vec![Segment {
                start: 2,
                rates: vec![0.5],
            }],
        };
        assert!(bad_start.validate().is_err());
        let not_increasing = ChannelModel::Piecewise {
            segments: vec![
                Segment {
                    start: 1,
                    rates: vec![0.5],
                },
                Segment {
                    start: 1,
                    rates: vec![0.6],
                },
            ],
        };
        assert!(not_increasing.validate().is_err());
    }
}
