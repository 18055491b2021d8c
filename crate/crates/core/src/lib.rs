//! Age-based constrained combinatorial bandit scheduling.
//!
//! A wireless scheduler picks, every timeslot, one feasible set of links
//! (an *action*) to transmit on. Each link `k` succeeds with an unknown
//! probability and must deliver on average at least `chi[k]` packets per
//! slot over every window of `W` slots. This crate simulates that setting
//! and implements:
//!
//! * [`environment`]: action sets, channel models (i.i.d., piecewise
//!   stationary, trace driven) and reward masking.
//! * [`vqueue`]: per-link virtual queues of delivery requests and their
//!   head-of-line age.
//! * [`learning`]: UCB estimation and the age-based, queue-length, TSLR and
//!   queue-length+TSLR max-weight policies.
//! * [`oracle`]: optimal static policies and Slater slack via a small dense
//!   simplex solver ([`simplex`]).
//! * [`metrics`]: windowed throughput, regret, violation and the analytic
//!   bound calculators.
//! * [`harness`]: configuration, presets, trace ingestion, the simulation
//!   loop and CSV emission.

pub mod environment;
pub mod error;
pub mod harness;
pub mod learning;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod simplex;
pub mod vqueue;

pub use environment::{apply_action, ActionSet, Channel, ChannelModel, Segment, StepOutcome};
pub use error::{Error, Result};
pub use learning::{select_action, PolicyKind, TieBreak, TslrCounters, UcbState};
pub use metrics::{BoundInputs, RunLog, SlotRecord};
pub use oracle::{solve_optimal_static, OracleReport, StaticPolicy};
pub use vqueue::{AgeSnapshot, DeliveryQueue};
