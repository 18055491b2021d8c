//! UCB rate estimation and max-weight scheduling policies.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::ActionSet;
use crate::error::{Error, Result};

/// Per-arm play counts and reward sums. Means are derived, so
/// `mean * plays` is always an exact integer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UcbState {
    plays: Vec<u64>,
    rewards: Vec<u64>,
}

impl UcbState {
    pub fn new(arms: usize) -> Self {
        UcbState {
            plays: vec![0; arms],
            rewards: vec![0; arms],
        }
    }

    pub fn arms(&self) -> usize {
        self.plays.len()
    }

    pub fn plays(&self, k: usize) -> u64 {
        self.plays[k]
    }

    pub fn mean(&self, k: usize) -> f64 {
        match self.plays[k] {
            0 => 0.0,
            n => self.rewards[k] as f64 / n as f64,
        }
    }

    /// UCB index of arm `k` at slot `t`.
    pub fn index(&self, k: usize, t: u64) -> f64 {
        ucb_bound(self.mean(k), self.plays[k], (t.max(1) as f64).ln())
    }

    pub fn indices(&self, t: u64) -> Vec<f64> {
        (0..self.arms()).map(|k| self.index(k, t)).collect()
    }

    /// Records one slot for arm `k`. Unscheduled arms are left untouched.
    pub fn update(&mut self, k: usize, scheduled: u8, reward: u8) -> Result<()> {
        if reward > 1 || scheduled > 1 {
            return Err(Error::arg("scheduled and reward must be binary"));
        }
        if scheduled == 0 {
            if reward == 1 {
                return Err(Error::Contract(format!(
                    "arm {k} earned a reward without being scheduled"
                )));
            }
            return Ok(());
        }
        self.plays[k] += 1;
        self.rewards[k] += reward as u64;
        Ok(())
    }
}

/// `min(1, mean + sqrt(3 ln_t / (2 plays)))`, or 1 for an unplayed arm.
pub fn ucb_bound(mean: f64, plays: u64, ln_t: f64) -> f64 {
    if plays == 0 {
        return 1.0;
    }
    (mean + (3.0 * ln_t / (2.0 * plays as f64)).sqrt()).min(1.0)
}

/// Which statistic augments the UCB term in the max-weight rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    /// `eta * U + head-of-line age`
    AgeBased { eta: f64 },
    /// `queue length + eta * U`
    QLen { eta: f64 },
    /// `TSLR + eta * U`
    Tslr { eta: f64 },
    /// `queue length + alpha * TSLR + eta * U`
    QLenTslr { eta: f64, alpha: f64 },
}

impl PolicyKind {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PolicyKind::AgeBased { eta } | PolicyKind::QLen { eta } | PolicyKind::Tslr { eta } => {
                eta > 0.0
            }
            PolicyKind::QLenTslr { eta, alpha } => eta > 0.0 && alpha > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::arg(format!(
                "{self:?}: parameters must be strictly positive"
            )))
        }
    }

    /// Short stable identifier used in CSV output.
    pub fn id(&self) -> &'static str {
        match self {
            PolicyKind::AgeBased { .. } => "age",
            PolicyKind::QLen { .. } => "qlen",
            PolicyKind::Tslr { .. } => "tslr",
            PolicyKind::QLenTslr { .. } => "qlen_tslr",
        }
    }

    pub fn eta(&self) -> f64 {
        match *self {
            PolicyKind::AgeBased { eta }
            | PolicyKind::QLen { eta }
            | PolicyKind::Tslr { eta }
            | PolicyKind::QLenTslr { eta, .. } => eta,
        }
    }
}

/// Per-arm max-weight coefficients for the given UCB indices and queue
/// statistics.
pub fn policy_weights(
    kind: PolicyKind,
    ucb: &[f64],
    ages: &[u64],
    qlens: &[u64],
    tslr: &[u64],
) -> Vec<f64> {
    (0..ucb.len())
        .map(|k| {
            let u = ucb[k];
            match kind {
                PolicyKind::AgeBased { eta } => eta * u + ages[k] as f64,
                PolicyKind::QLen { eta } => qlens[k] as f64 + eta * u,
                PolicyKind::Tslr { eta } => tslr[k] as f64 + eta * u,
                PolicyKind::QLenTslr { eta, alpha } => {
                    qlens[k] as f64 + alpha * tslr[k] as f64 + eta * u
                }
            }
        })
        .collect()
}

/// How ties between equally weighted actions are broken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
    Random,
}

// Sums within this relative distance count as tied. Relative, so that
// scaling every weight by a positive constant never changes the outcome.
const TIE_RTOL: f64 = 1e-12;

fn ties(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_RTOL * a.abs().max(b.abs())
}

fn action_values<'a>(weights: &'a [f64], actions: &'a ActionSet) -> impl Iterator<Item = f64> + 'a {
    actions.iter().map(move |inc| {
        inc.iter()
            .zip(weights)
            .filter(|(&i, _)| i == 1)
            .map(|(_, w)| w)
            .sum()
    })
}

/// Exhaustive argmax of `sum_k weights[k] * I_k(a)` over the action set,
/// lowest index on ties.
///
/// When the action set is all subsets of a fixed size, the argmax is just the
/// largest weights; enumeration is kept here because every action set used so
/// far is small.
pub fn select_action(weights: &[f64], actions: &ActionSet) -> usize {
    let mut values = action_values(weights, actions).enumerate();
    let (mut best, mut best_value) = values.next().expect("action sets are nonempty");
    for (a, value) in values {
        if value > best_value && !ties(value, best_value) {
            best = a;
            best_value = value;
        }
    }
    best
}

/// Argmax with ties broken uniformly at random.
pub fn select_action_random_tie<R: Rng + ?Sized>(
    weights: &[f64],
    actions: &ActionSet,
    rng: &mut R,
) -> usize {
    let values: Vec<f64> = action_values(weights, actions).collect();
    let lead = values[select_action(weights, actions)];
    let tied: Vec<usize> = (0..values.len())
        .filter(|&a| ties(values[a], lead))
        .collect();
    tied[rng.random_range(0..tied.len())]
}

/// Time since last reward, per arm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TslrCounters {
    values: Vec<u64>,
}

impl TslrCounters {
    pub fn new(arms: usize) -> Self {
        TslrCounters {
            values: vec![0; arms],
        }
    }

    pub fn from_values(values: Vec<u64>) -> Self {
        TslrCounters { values }
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn update(&mut self, rewards: &[u8]) {
        for (v, &r) in self.values.iter_mut().zip(rewards) {
            *v = if r == 1 { 0 } else { *v + 1 };
        }
    }
}
