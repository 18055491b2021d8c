//! Built-in experiment configurations.

use std::path::PathBuf;

use crate::environment::Segment;
use crate::error::{Error, Result};
use crate::harness::config::{
    ActionSetSpec, ArmColumns, ChannelSpec, ColumnSegment, ExperimentConfig, PolicyName, TraceSpec,
};
use crate::harness::trace::TraceSchema;
use crate::learning::TieBreak;

pub const PRESETS: [&str; 3] = ["abrupt2", "iid6", "trace3"];

const ALL_POLICIES: [PolicyName; 4] = [
    PolicyName::Age,
    PolicyName::Qlen,
    PolicyName::Tslr,
    PolicyName::QlenTslr,
];

/// `(ceil(T/6), ceil(2T/3))`: the slots where arm 1 degrades and recovers
/// in the two-arm abrupt-change study.
pub fn abrupt_change_points(horizon: u64) -> (u64, u64) {
    (horizon.div_ceil(6), (2 * horizon).div_ceil(3))
}

fn base(arms: usize, horizon: u64, chi: Vec<f64>, runs: u64, name: &str) -> ExperimentConfig {
    ExperimentConfig {
        arms,
        horizon,
        window: 100,
        chi,
        eta: 100.0,
        eps: 0.001,
        alpha: 1.0,
        policies: ALL_POLICIES.to_vec(),
        runs,
        base_seed: 20_240_601,
        outputs: PathBuf::from("out").join(name),
        log_stride: None,
        tie_break: TieBreak::LowestIndex,
        queue_cap: None,
        action_set: ActionSetSpec::OneOf,
        channel: ChannelSpec::Iid { rates: vec![] },
    }
}

/// Looks up a preset. `horizon` overrides the default `T` (the change
/// points of `abrupt2` and `trace3` scale with it); it must stay a
/// multiple of `W = 100`.
pub fn preset(name: &str, horizon: Option<u64>) -> Result<ExperimentConfig> {
    match name {
        // Two links, one transmission per slot. Link 1 drops from 0.9 to 0.5
        // on [ceil(T/6), ceil(2T/3)), which makes chi_1 = 0.8 unattainable.
        "abrupt2" => {
            let t = horizon.unwrap_or(60_000);
            let (drop, recover) = abrupt_change_points(t);
            Ok(ExperimentConfig {
                channel: ChannelSpec::Piecewise {
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
                },
                ..base(2, t, vec![0.8, 0.1], 200, name)
            })
        }
        // Placeholder six-link i.i.d. instance: any two links per slot.
        // These rates and requirements are illustrative values, not taken
        // from a published setup; edit them to match the instance of
        // interest.
        "iid6" => Ok(ExperimentConfig {
            action_set: ActionSetSpec::Choose { size: 2 },
            channel: ChannelSpec::Iid {
                rates: vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4],
            },
            ..base(
                6,
                horizon.unwrap_or(60_000),
                vec![0.2, 0.2, 0.15, 0.15, 0.1, 0.1],
                200,
                name,
            )
        }),
        // The abrupt-change study driven by a measured trace. Column 0 is the
        // weak channel that stands in for degraded link 1, column 1 the
        // strong channel link 1 uses otherwise, column 2 feeds link 2. The
        // trace file is not bundled; see the README for its format.
        "trace3" => {
            let t = horizon.unwrap_or(30_000);
            let (drop, recover) = abrupt_change_points(t);
            Ok(ExperimentConfig {
                channel: ChannelSpec::Trace(TraceSpec {
                    file: PathBuf::from("traces/channels_12_16_17.csv"),
                    schema: TraceSchema::Binary,
                    thresholds: None,
                    offset: 0,
                    random_offset_max: 1000,
                    arms: Some(vec![
                        ArmColumns {
                            segments: vec![
                                ColumnSegment {
                                    start: 1,
                                    column: 1,
                                },
                                ColumnSegment {
                                    start: drop,
                                    column: 0,
                                },
                                ColumnSegment {
                                    start: recover,
                                    column: 1,
                                },
                            ],
                        },
                        ArmColumns {
                            segments: vec![ColumnSegment {
                                start: 1,
                                column: 2,
                            }],
                        },
                    ]),
                }),
                ..base(2, t, vec![0.8, 0.1], 100, name)
            })
        }
        other => Err(Error::config(format!(
            "unknown preset {other:?} (expected one of {})",
            PRESETS.join(", ")
        ))),
    }
}
