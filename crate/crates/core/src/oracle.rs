//! Optimal static scheduling policies.
//!
//! A static policy draws an action i.i.d. from a fixed distribution `sigma`
//! every slot. Under i.i.d. channels the best one that meets every
//! long-run throughput requirement solves
//!
//! ```text
//! max  sum_a sigma(a) sum_k rate_k I_k(a)
//! s.t. sum_a sigma(a) rate_k I_k(a) >= chi_k    for every arm k
//!      sigma in the probability simplex over actions
//! ```
//!
//! and the Slater slack `gamma` is the largest uniform margin by which some
//! static policy over-satisfies all requirements.

use rand::Rng;

use crate::environment::ActionSet;
use crate::error::{Error, Result};
use crate::simplex::{LinearProgram, Outcome, Relation};

/// Probabilities are accepted if they sum to one within this tolerance.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct StaticPolicy {
    probs: Vec<f64>,
}

impl StaticPolicy {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::arg("static policy over zero actions"));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::arg(
                "static policy has a negative or non-finite probability",
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::arg(format!("static policy sums to {total}, not 1")));
        }
        Ok(StaticPolicy { probs })
    }

    /// Point mass on `action`.
    pub fn deterministic(actions: usize, action: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions];
        *probs
            .get_mut(action)
            .ok_or_else(|| Error::arg("action index out of range"))? = 1.0;
        Self::new(probs)
    }

    // Solver output can carry round-off of either sign.
    fn from_solver(x: &[f64]) -> Result<Self> {
        let clipped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        Self::new(clipped.into_iter().map(|v| v / total).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Expected service `rate_k * E[I_k(A)]` per arm.
    pub fn service(&self, rates: &[f64], actions: &ActionSet) -> Vec<f64> {
        let mut out = vec![0.0; actions.arms()];
        for (p, inc) in self.probs.iter().zip(actions.iter()) {
            for (k, &i) in inc.iter().enumerate() {
                out[k] += p * rates[k] * i as f64;
            }
        }
        out
    }

    /// Expected reward per slot summed over arms.
    pub fn reward_rate(&self, rates: &[f64], actions: &ActionSet) -> f64 {
        self.service(rates, actions).iter().sum()
    }

    /// One categorical draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        // u landed in the round-off gap above the cumulative sum
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    /// Optimal feasible static policy; `None` when the requirements cannot
    /// be met by any static policy.
    pub sigma_star: Option<StaticPolicy>,
    pub objective_rate: Option<f64>,
    /// Largest uniform slack. Negative when infeasible, by how much the
    /// least-served requirement must be lowered.
    pub gamma_max: f64,
    pub sigma_gamma: StaticPolicy,
    pub feasible: bool,
    /// LP multipliers of the throughput rows then the simplex row.
    pub duals: Option<Vec<f64>>,
}

fn check_inputs(rates: &[f64], chi: &[f64], actions: &ActionSet) -> Result<()> {
    let k = actions.arms();
    if rates.len() != k || chi.len() != k {
        return Err(Error::arg(format!(
            "expected {k} rates and requirements, got {} and {}",
            rates.len(),
            chi.len()
        )));
    }
    if rates.iter().chain(chi).any(|v| !(*v > 0.0 && *v <= 1.0)) {
        return Err(Error::arg("rates and requirements must lie in (0, 1]"));
    }
    Ok(())
}

/// The LP whose optimum is the best feasible static policy. Variables are
/// the action probabilities; rows are one throughput requirement per arm,
/// then the simplex equality.
pub fn static_policy_lp(rates: &[f64], chi: &[f64], actions: &ActionSet) -> LinearProgram {
    let service_row =
        |k: usize| -> Vec<f64> { actions.iter().map(|inc| rates[k] * inc[k] as f64).collect() };
    let objective = actions
        .iter()
        .map(|inc| inc.iter().zip(rates).map(|(&i, r)| r * i as f64).sum())
        .collect();
    let mut lp = LinearProgram::new(objective);
    for (k, &c) in chi.iter().enumerate() {
        lp = lp.constraint(service_row(k), Relation::Ge, c);
    }
    lp.constraint(vec![1.0; actions.len()], Relation::Eq, 1.0)
}

/// Max `gamma` s.t. every arm's service is at least `chi_k + gamma`. The
/// free variable `gamma` is split as `gamma_plus - gamma_minus`, appended
/// after the action probabilities.
fn slack_lp(rates: &[f64], chi: &[f64], actions: &ActionSet) -> LinearProgram {
    let n = actions.len();
    let mut objective = vec![0.0; n + 2];
    objective[n] = 1.0;
    objective[n + 1] = -1.0;
    let mut lp = LinearProgram::new(objective);
    for (k, &c) in chi.iter().enumerate() {
        let mut row: Vec<f64> = actions.iter().map(|inc| rates[k] * inc[k] as f64).collect();
        row.extend([-1.0, 1.0]);
        lp = lp.constraint(row, Relation::Ge, c);
    }
    let mut simplex = vec![1.0; n];
    simplex.extend([0.0, 0.0]);
    lp.constraint(simplex, Relation::Eq, 1.0)
}

pub fn solve_optimal_static(
    rates: &[f64],
    chi: &[f64],
    actions: &ActionSet,
) -> Result<OracleReport> {
    check_inputs(rates, chi, actions)?;
    let n = actions.len();

    let slack = match slack_lp(rates, chi, actions).solve()? {
        Outcome::Optimal(s) => s,
        other => {
            return Err(Error::NumericDomain(format!("slack LP ended as {other:?}")));
        }
    };
    let mut gamma_max = slack.objective;
    if gamma_max.abs() < crate::simplex::FEAS_TOL {
        gamma_max = 0.0;
    }
    let sigma_gamma = StaticPolicy::from_solver(&slack.x[..n])?;

    let (sigma_star, objective_rate, duals) = match static_policy_lp(rates, chi, actions).solve()? {
        Outcome::Optimal(s) if gamma_max >= 0.0 => (
            Some(StaticPolicy::from_solver(&s.x)?),
            Some(s.objective),
            Some(s.duals),
        ),
        Outcome::Unbounded => {
            return Err(Error::NumericDomain("static policy LP unbounded".into()));
        }
        _ => (None, None, None),
    };
    Ok(OracleReport {
        feasible: sigma_star.is_some(),
        sigma_star,
        objective_rate,
        gamma_max,
        sigma_gamma,
        duals,
    })
}

/// `(1 - eps/gamma) sigma_star + (eps/gamma) sigma_gamma`.
pub fn mix_epsilon_tight(
    sigma_star: &StaticPolicy,
    sigma_gamma: &StaticPolicy,
    eps: f64,
    gamma: f64,
) -> Result<StaticPolicy> {
    if !(gamma > 0.0) {
        return Err(Error::arg(format!("gamma must be positive, got {gamma}")));
    }
    if !(eps > 0.0) || eps > gamma {
        return Err(Error::arg(format!("eps must lie in (0, gamma], got {eps}")));
    }
    if sigma_star.probs.len() != sigma_gamma.probs.len() {
        return Err(Error::arg("policies are over different action sets"));
    }
    let w = eps / gamma;
    if w == 1.0 {
        return Ok(sigma_gamma.clone());
    }
    StaticPolicy::new(
        sigma_star
            .probs
            .iter()
            .zip(&sigma_gamma.probs)
            .map(|(s, g)| (1.0 - w) * s + w * g)
            .collect(),
    )
}
