//! Virtual queues of delivery requests.
//!
//! Each arm owns a FIFO of virtual requests. A request arrives at the start
//! of a slot with probability `chi + eps` and the head departs at the end of
//! the slot if the arm earned a reward. The scheduler reads the age of the
//! head-of-line request, which is what makes the policy robust when a
//! constraint becomes temporarily infeasible: the age of a neglected arm
//! grows by one every slot, while its queue length grows only at the
//! arrival rate.
//!
//! Slot protocol: `begin_timeslot(t)` then any number of `snapshot(t)` then
//! `end_timeslot(t, reward)`, for `t = 1, 2, ...` in order.

use std::collections::VecDeque;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct AgeSnapshot {
    /// Clipped age of the head-of-line request; 0 when the queue is empty.
    pub hol_age: u64,
    pub queue_len: u64,
    /// Like TSLR, but also resets whenever the queue is empty.
    pub pseudo_tslr: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Waiting for `begin_timeslot(next)`.
    Idle { next: u64 },
    /// Inside slot `t`.
    Open { t: u64 },
}

#[derive(Debug, Clone)]
pub struct DeliveryQueue {
    pending: VecDeque<u64>,
    last_departed_arrival: Option<u64>,
    arrival_prob: f64,
    total_arrivals: u64,
    total_departures: u64,
    pseudo_tslr: u64,
    phase: Phase,
    cap: Option<usize>,
    arm: usize,
}

impl DeliveryQueue {
    pub fn new(arrival_prob: f64) -> Result<Self> {
        if !(arrival_prob > 0.0 && arrival_prob <= 1.0) {
            return Err(Error::arg(format!(
                "arrival probability {arrival_prob} outside (0, 1]"
            )));
        }
        Ok(DeliveryQueue {
            pending: VecDeque::new(),
            last_departed_arrival: None,
            arrival_prob,
            total_arrivals: 0,
            total_departures: 0,
            pseudo_tslr: 0,
            phase: Phase::Idle { next: 1 },
            cap: None,
            arm: 0,
        })
    }

    /// Abort with [`Error::QueueCap`] once more than `cap` requests are pending.
    pub fn with_cap(mut self, cap: Option<usize>) -> Self {
        self.cap = cap;
        self
    }

    /// Arm index reported in diagnostics.
    pub fn with_arm(mut self, arm: usize) -> Self {
        self.arm = arm;
        self
    }

    pub fn arrival_prob(&self) -> f64 {
        self.arrival_prob
    }

    /// Draws the slot-`t` arrival from `rng` (one uniform per slot).
    pub fn begin_timeslot<R: Rng + ?Sized>(&mut self, t: u64, rng: &mut R) -> Result<u8> {
        let arrived = rng.random::<f64>() < self.arrival_prob;
        self.begin_timeslot_with(t, arrived)
    }

    /// Same as [`begin_timeslot`](Self::begin_timeslot) with the arrival
    /// supplied by the caller, for replaying a fixed arrival sequence.
    pub fn begin_timeslot_with(&mut self, t: u64, arrived: bool) -> Result<u8> {
        match self.phase {
            Phase::Idle { next } if next == t => {}
            Phase::Idle { next } => {
                return Err(Error::Protocol(format!(
                    "begin_timeslot({t}) called, expected t = {next}"
                )))
            }
            Phase::Open { t: open } => {
                return Err(Error::Protocol(format!(
                    "begin_timeslot({t}) called while slot {open} is still open"
                )))
            }
        }
        self.phase = Phase::Open { t };
        if arrived {
            self.pending.push_back(t);
            self.total_arrivals += 1;
            if let Some(cap) = self.cap {
                if self.pending.len() > cap {
                    return Err(Error::QueueCap {
                        arm: self.arm,
                        cap,
                        t,
                    });
                }
            }
        }
        Ok(u8::from(arrived))
    }

    fn open_slot(&self, t: u64, op: &str) -> Result<()> {
        match self.phase {
            Phase::Open { t: open } if open == t => Ok(()),
            _ => Err(Error::Protocol(format!(
                "{op}({t}) called outside an open slot {t} ({:?})",
                self.phase
            ))),
        }
    }

    pub fn snapshot(&self, t: u64) -> Result<AgeSnapshot> {
        self.open_slot(t, "snapshot")?;
        Ok(AgeSnapshot {
            hol_age: self.pending.front().map_or(0, |&head| t - head),
            queue_len: self.pending.len() as u64,
            pseudo_tslr: self.pseudo_tslr,
        })
    }

    /// Serves the head request if `reward == 1` and one is pending. Returns
    /// the departure indicator.
    pub fn end_timeslot(&mut self, t: u64, reward: u8) -> Result<u8> {
        self.open_slot(t, "end_timeslot")?;
        if reward > 1 {
            return Err(Error::arg(format!("reward {reward} is not binary")));
        }
        let nonempty = !self.pending.is_empty();
        self.pseudo_tslr = if reward == 0 && nonempty {
            self.pseudo_tslr + 1
        } else {
            0
        };
        let departed = reward == 1 && nonempty;
        if departed {
            self.last_departed_arrival = self.pending.pop_front();
            self.total_departures += 1;
        }
        self.phase = Phase::Idle { next: t + 1 };
        Ok(u8::from(departed))
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Arrival slots of the pending requests, head first.
    pub fn pending(&self) -> impl Iterator<Item = u64> + '_ {
        self.pending.iter().copied()
    }

    pub fn head_arrival(&self) -> Option<u64> {
        self.pending.front().copied()
    }

    pub fn last_departed_arrival(&self) -> Option<u64> {
        self.last_departed_arrival
    }

    pub fn total_arrivals(&self) -> u64 {
        self.total_arrivals
    }

    pub fn total_departures(&self) -> u64 {
        self.total_departures
    }

    /// Interarrival time between the last departed request and the current
    /// head. `None` before the first departure or while the queue is empty.
    pub fn last_interarrival(&self) -> Option<u64> {
        Some(self.head_arrival()? - self.last_departed_arrival?)
    }
}

/// Predicted one-slot change of the head-of-line age.
///
/// `head_arrival` is the arrival slot of the next request to depart, which
/// may lie in the future when the queue is empty. `successor_gap` is the
/// interarrival time from that request to the one behind it; `None` means
/// the successor had not arrived by `t`, in which case the gap is at least
/// `t + 1 - head_arrival` and the minimum below resolves to that value.
pub fn hol_age_drift_oracle(
    head_arrival: u64,
    departure: u8,
    t: u64,
    successor_gap: Option<u64>,
) -> i64 {
    if head_arrival > t {
        return 0;
    }
    let since = (t + 1 - head_arrival) as i64;
    let step = successor_gap.map_or(since, |gap| since.min(gap as i64));
    1 - departure as i64 * step
}
