//! The per-slot scheduling loop.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::environment::{apply_action, Channel, ChannelModel, StepOutcome};
use crate::error::{Error, Result};
use crate::harness::config::{ChannelSource, Instance};
use crate::learning::{
    policy_weights, select_action, select_action_random_tie, PolicyKind, TieBreak, TslrCounters,
    UcbState,
};
use crate::metrics::{RunLog, SlotRecord};
use crate::oracle::solve_optimal_static;
use crate::rng::{run_seed, substream, Purpose};
use crate::vqueue::{AgeSnapshot, DeliveryQueue};

/// One policy running against one channel realization.
///
/// Each call to [`step`](Self::step) plays one slot: virtual arrivals, UCB
/// indices and queue snapshots, max-weight action selection, channel draw
/// and reward masking, then the UCB, TSLR and queue updates.
pub struct Simulation<'a> {
    inst: &'a Instance,
    model: &'a ChannelModel,
    policy: PolicyKind,
    channel: Channel<'a>,
    queues: Vec<DeliveryQueue>,
    arrival_rngs: Vec<ChaCha8Rng>,
    tie_rng: ChaCha8Rng,
    ucb: UcbState,
    tslr: TslrCounters,
    oracle_rate: Option<f64>,
    t: u64,
    cumulative_reward: u64,
    pseudo_regret: f64,
    /// Last `W` reward vectors, flattened, as a ring indexed by `t % W`.
    recent: Vec<u8>,
    window_hits: Vec<u64>,
    action: usize,
    snapshots: Vec<AgeSnapshot>,
    tslr_seen: Vec<u64>,
    arrivals: Vec<u8>,
    departures: Vec<u8>,
    outcome: StepOutcome,
}

impl<'a> Simulation<'a> {
    /// `model` is the realized channel for this run (see
    /// [`Instance::channel_model`]); `seed` is the run seed.
    pub fn new(
        inst: &'a Instance,
        model: &'a ChannelModel,
        policy: PolicyKind,
        seed: u64,
    ) -> Result<Self> {
        let cfg = &inst.config;
        policy.validate()?;
        if model.arms() != cfg.arms {
            return Err(Error::config(format!(
                "channel has {} arms, K = {}",
                model.arms(),
                cfg.arms
            )));
        }
        let k = cfg.arms;
        let channel = Channel::new(model, cfg.horizon, seed)?;
        let queues = cfg
            .arrival_probs()
            .into_iter()
            .enumerate()
            .map(|(arm, p)| Ok(DeliveryQueue::new(p)?.with_cap(cfg.queue_cap).with_arm(arm)))
            .collect::<Result<Vec<_>>>()?;
        let oracle_rate = match model {
            ChannelModel::Iid { rates } => {
                solve_optimal_static(rates, &cfg.chi, &inst.actions)?.objective_rate
            }
            _ => None,
        };
        Ok(Simulation {
            inst,
            model,
            policy,
            channel,
            queues,
            arrival_rngs: (0..k as u32)
                .map(|a| substream(seed, Purpose::Arrival, a))
                .collect(),
            tie_rng: substream(seed, Purpose::TieBreak, 0),
            ucb: UcbState::new(k),
            tslr: TslrCounters::new(k),
            oracle_rate,
            t: 0,
            cumulative_reward: 0,
            pseudo_regret: 0.0,
            recent: vec![0; cfg.window as usize * k],
            window_hits: vec![0; k],
            action: 0,
            snapshots: vec![AgeSnapshot::default(); k],
            tslr_seen: vec![0; k],
            arrivals: vec![0; k],
            departures: vec![0; k],
            outcome: StepOutcome {
                successes: vec![0; k],
                rewards: vec![0; k],
            },
        })
    }

    pub fn step(&mut self) -> Result<()> {
        let cfg = &self.inst.config;
        let t = self.t + 1;
        if t > cfg.horizon {
            return Err(Error::Range {
                what: "timeslot",
                value: t,
                valid: format!("1..={}", cfg.horizon),
            });
        }
        let k = cfg.arms;

        for (arm, q) in self.queues.iter_mut().enumerate() {
            self.arrivals[arm] = q.begin_timeslot(t, &mut self.arrival_rngs[arm])?;
        }
        let ucb = self.ucb.indices(t);
        let mut ages = vec![0; k];
        let mut qlens = vec![0; k];
        for (arm, q) in self.queues.iter().enumerate() {
            let s = q.snapshot(t)?;
            ages[arm] = s.hol_age;
            qlens[arm] = s.queue_len;
            self.snapshots[arm] = s;
        }
        self.tslr_seen.copy_from_slice(self.tslr.values());

        let weights = policy_weights(self.policy, &ucb, &ages, &qlens, &self.tslr_seen);
        let actions = &self.inst.actions;
        self.action = match cfg.tie_break {
            TieBreak::LowestIndex => select_action(&weights, actions),
            TieBreak::Random => select_action_random_tie(&weights, actions, &mut self.tie_rng),
        };

        let successes = self.channel.sample(t)?;
        self.outcome = apply_action(&successes, self.action, actions)?;
        let incidence = actions
            .incidence(self.action)
            .expect("selected from the set");
        let rewards = &self.outcome.rewards;
        for arm in 0..k {
            self.ucb.update(arm, incidence[arm], rewards[arm])?;
        }
        self.tslr.update(rewards);
        for (arm, q) in self.queues.iter_mut().enumerate() {
            self.departures[arm] = q.end_timeslot(t, rewards[arm])?;
        }

        self.cumulative_reward += rewards.iter().map(|&r| r as u64).sum::<u64>();
        if let (Some(rate), ChannelModel::Iid { rates }) = (self.oracle_rate, self.model) {
            let served: f64 = incidence
                .iter()
                .zip(rates)
                .map(|(&i, r)| i as f64 * r)
                .sum();
            self.pseudo_regret += rate - served;
        }
        let slot = (t % cfg.window) as usize * k;
        for arm in 0..k {
            // the ring slot still holds slot t - W's rewards (zeros early on)
            self.window_hits[arm] += rewards[arm] as u64;
            self.window_hits[arm] -= self.recent[slot + arm] as u64;
            self.recent[slot + arm] = rewards[arm];
        }
        self.t = t;
        Ok(())
    }

    /// Last completed slot (0 before the first step).
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn policy(&self) -> PolicyKind {
        self.policy
    }

    pub fn action(&self) -> usize {
        self.action
    }

    /// Queue state the last decision was based on (after arrivals).
    pub fn snapshots(&self) -> &[AgeSnapshot] {
        &self.snapshots
    }

    /// TSLR values the last decision was based on.
    pub fn tslr_at_decision(&self) -> &[u64] {
        &self.tslr_seen
    }

    /// TSLR after the last slot's rewards.
    pub fn tslr(&self) -> &[u64] {
        self.tslr.values()
    }

    pub fn queues(&self) -> &[DeliveryQueue] {
        &self.queues
    }

    pub fn arrivals(&self) -> &[u8] {
        &self.arrivals
    }

    pub fn departures(&self) -> &[u8] {
        &self.departures
    }

    pub fn outcome(&self) -> &StepOutcome {
        &self.outcome
    }

    pub fn ucb(&self) -> &UcbState {
        &self.ucb
    }

    pub fn cumulative_reward(&self) -> u64 {
        self.cumulative_reward
    }

    /// Optimal static reward rate, when the channel is i.i.d. and the
    /// requirements are feasible.
    pub fn oracle_rate(&self) -> Option<f64> {
        self.oracle_rate
    }

    /// Mean-form regret so far; `NaN` without a stationary oracle.
    pub fn pseudo_regret(&self) -> f64 {
        if self.oracle_rate.is_some() {
            self.pseudo_regret
        } else {
            f64::NAN
        }
    }

    /// Windowed throughput of `arm` over the last `W` slots, once `t >= W`.
    pub fn throughput(&self, arm: usize) -> Option<f64> {
        let w = self.inst.config.window;
        (self.t >= w).then(|| self.window_hits[arm] as f64 / w as f64)
    }

    pub fn record(&self) -> SlotRecord {
        let k = self.inst.config.arms;
        SlotRecord {
            t: self.t,
            action: self.action,
            rewards: self.outcome.rewards.clone(),
            hol_ages: self.snapshots.iter().map(|s| s.hol_age).collect(),
            queue_lens: self.snapshots.iter().map(|s| s.queue_len).collect(),
            tslr: self.tslr_seen.clone(),
            oracle_rate: self.oracle_rate.unwrap_or(f64::NAN),
            cumulative_reward: self.cumulative_reward,
            throughput: (0..k)
                .map(|a| self.throughput(a).unwrap_or(f64::NAN))
                .collect(),
            pseudo_regret: self.pseudo_regret(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub final_reward: u64,
    /// `NaN` when the channel has no stationary oracle.
    pub final_regret: f64,
    pub max_qlen: u64,
    pub mean_hol_age: Vec<f64>,
    pub mean_tslr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub policy: &'static str,
    pub run: u64,
    pub seed: u64,
    /// Starting row of a trace-driven run.
    pub trace_offset: u64,
    pub log: RunLog,
    pub summary: RunSummary,
}

/// Trace starting offset for a run: drawn from the run's own substream when
/// the config asks for random offsets.
pub fn trace_offset(inst: &Instance, seed: u64) -> u64 {
    match inst.source {
        ChannelSource::Trace {
            random_offset_max: 0,
            offset,
            ..
        } => offset,
        ChannelSource::Trace {
            random_offset_max, ..
        } => substream(seed, Purpose::TraceOffset, 0).random_range(0..=random_offset_max),
        ChannelSource::Model(_) => 0,
    }
}

/// Plays `policy` for `T` slots on run `run_index` of the experiment.
/// Logs every `stride`-th slot and the last one.
pub fn run_once(inst: &Instance, policy: PolicyKind, run_index: u64) -> Result<RunResult> {
    let cfg = &inst.config;
    let seed = run_seed(cfg.base_seed, run_index);
    let offset = trace_offset(inst, seed);
    let model = inst.channel_model(offset);
    let mut sim = Simulation::new(inst, &model, policy, seed)?;
    let stride = cfg.stride();
    let k = cfg.arms;

    let mut log = RunLog::new(k, stride);
    let mut age_sum = vec![0u64; k];
    let mut tslr_sum = vec![0u64; k];
    let mut max_qlen = 0;
    for t in 1..=cfg.horizon {
        sim.step()?;
        for arm in 0..k {
            let s = sim.snapshots()[arm];
            age_sum[arm] += s.hol_age;
            tslr_sum[arm] += sim.tslr_at_decision()[arm];
            max_qlen = max_qlen.max(s.queue_len);
        }
        if t % stride == 0 || t == cfg.horizon {
            log.records.push(sim.record());
        }
    }
    let horizon = cfg.horizon as f64;
    Ok(RunResult {
        policy: policy.id(),
        run: run_index,
        seed,
        trace_offset: offset,
        log,
        summary: RunSummary {
            final_reward: sim.cumulative_reward(),
            final_regret: sim.pseudo_regret(),
            max_qlen,
            mean_hol_age: age_sum.iter().map(|&s| s as f64 / horizon).collect(),
            mean_tslr: tslr_sum.iter().map(|&s| s as f64 / horizon).collect(),
        },
    })
}
