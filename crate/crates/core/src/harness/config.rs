//! Experiment configuration (TOML) and its resolution into a runnable
//! [`Instance`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environment::{ActionSet, ChannelModel, Segment};
use crate::error::{Error, Result};
use crate::harness::trace::{self, TraceSchema};
use crate::learning::{PolicyKind, TieBreak};

/// Policy names as written in configs and CSVs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Age,
    Qlen,
    Tslr,
    QlenTslr,
}

impl PolicyName {
    pub fn kind(self, eta: f64, alpha: f64) -> PolicyKind {
        match self {
            PolicyName::Age => PolicyKind::AgeBased { eta },
            PolicyName::Qlen => PolicyKind::QLen { eta },
            PolicyName::Tslr => PolicyKind::Tslr { eta },
            PolicyName::QlenTslr => PolicyKind::QLenTslr { eta, alpha },
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "age" => Ok(PolicyName::Age),
            "qlen" => Ok(PolicyName::Qlen),
            "tslr" => Ok(PolicyName::Tslr),
            "qlen_tslr" => Ok(PolicyName::QlenTslr),
            other => Err(Error::arg(format!(
                "unknown policy {other:?} (expected age, qlen, tslr or qlen_tslr)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActionSetSpec {
    /// Exactly one arm per slot.
    OneOf,
    /// Every subset of exactly `size` arms.
    Choose { size: usize },
    /// Explicit incidence vectors.
    List { incidence: Vec<Vec<u8>> },
}

impl ActionSetSpec {
    pub fn build(&self, arms: usize) -> Result<ActionSet> {
        match self {
            ActionSetSpec::OneOf => ActionSet::one_of(arms),
            ActionSetSpec::Choose { size } => ActionSet::choose(arms, *size),
            ActionSetSpec::List { incidence } => ActionSet::new(arms, incidence.clone()),
        }
    }
}

/// Which trace column feeds an arm from `start` on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSegment {
    pub start: u64,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmColumns {
    pub segments: Vec<ColumnSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    /// Relative paths are resolved against the config file's directory.
    pub file: PathBuf,
    pub schema: TraceSchema,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    /// Fixed starting row offset, used when `random_offset_max` is 0.
    #[serde(default)]
    pub offset: u64,
    /// Each run starts at a row drawn uniformly from `0..=random_offset_max`.
    #[serde(default)]
    pub random_offset_max: u64,
    /// Column mapping per arm. Defaults to column `k` for arm `k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arms: Option<Vec<ArmColumns>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelSpec {
    Iid { rates: Vec<f64> },
    Piecewise { segments: Vec<Segment> },
    Trace(TraceSpec),
}

fn default_alpha() -> f64 {
    1.0
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "K")]
    pub arms: usize,
    #[serde(rename = "T")]
    pub horizon: u64,
    #[serde(rename = "W")]
    pub window: u64,
    pub chi: Vec<f64>,
    pub eta: f64,
    pub eps: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub policies: Vec<PolicyName>,
    pub runs: u64,
    pub base_seed: u64,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    /// Defaults to `max(1, T / 2000)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_stride: Option<u64>,
    #[serde(default)]
    pub tie_break: TieBreak,
    /// Abort a run when a virtual queue grows beyond this many requests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue_cap: Option<usize>,
    pub action_set: ActionSetSpec,
    pub channel: ChannelSpec,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn stride(&self) -> u64 {
        self.log_stride.unwrap_or((self.horizon / 2000).max(1))
    }

    pub fn policy_kinds(&self) -> Vec<PolicyKind> {
        self.policies
            .iter()
            .map(|p| p.kind(self.eta, self.alpha))
            .collect()
    }

    /// Per-arm virtual arrival probability `min(1, chi + eps)`.
    pub fn arrival_probs(&self) -> Vec<f64> {
        self.chi.iter().map(|c| (c + self.eps).min(1.0)).collect()
    }

    /// Checks everything that does not need the filesystem.
    pub fn validate(&self) -> Result<()> {
        let k = self.arms;
        if k == 0 {
            return Err(Error::config("K must be at least 1"));
        }
        if self.horizon == 0 || self.window == 0 {
            return Err(Error::config("T and W must be positive"));
        }
        if self.horizon % self.window != 0 {
            return Err(Error::config(format!(
                "T = {} is not a multiple of W = {}",
                self.horizon, self.window
            )));
        }
        if self.chi.len() != k {
            return Err(Error::config(format!(
                "chi has {} entries, K = {k}",
                self.chi.len()
            )));
        }
        if let Some(c) = self.chi.iter().find(|c| !(**c > 0.0 && **c <= 1.0)) {
            return Err(Error::config(format!("requirement {c} outside (0, 1]")));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::config(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if self.runs == 0 {
            return Err(Error::config("runs must be at least 1"));
        }
        if self.log_stride == Some(0) {
            return Err(Error::config("log_stride must be at least 1"));
        }
        if self.base_seed > i64::MAX as u64 {
            return Err(Error::config(
                "base_seed must fit in a signed 64-bit integer",
            ));
        }
        if self.policies.is_empty() {
            return Err(Error::config("no policies listed"));
        }
        for (i, p) in self.policies.iter().enumerate() {
            if self.policies[..i].contains(p) {
                return Err(Error::config(format!("policy {p:?} listed twice")));
            }
        }
        for kind in self.policy_kinds() {
            kind.validate().map_err(|e| Error::config(e.to_string()))?;
        }
        self.action_set
            .build(k)
            .map_err(|e| Error::config(format!("action_set: {e}")))?;
        match &self.channel {
            ChannelSpec::Iid { rates } => ChannelModel::Iid {
                rates: rates.clone(),
            }
            .validate(),
            ChannelSpec::Piecewise { segments } => ChannelModel::Piecewise {
                segments: segments.clone(),
            }
            .validate(),
            ChannelSpec::Trace(spec) => spec.arms.as_ref().map_or(Ok(()), |arms| {
                if arms.len() != k {
                    return Err(Error::config("trace arm mapping must list every arm"));
                }
                for a in arms {
                    let ok = a.segments.first().map(|s| s.start) == Some(1)
                        && a.segments.windows(2).all(|w| w[0].start < w[1].start);
                    if !ok {
                        return Err(Error::config(
                            "trace column segments must start at 1 and increase",
                        ));
                    }
                }
                Ok(())
            }),
        }
        .map_err(|e| Error::config(format!("channel: {e}")))?;
        if !matches!(self.channel, ChannelSpec::Trace(_)) {
            let model_arms = match &self.channel {
                ChannelSpec::Iid { rates } => rates.len(),
                ChannelSpec::Piecewise { segments } => segments[0].rates.len(),
                ChannelSpec::Trace(_) => unreachable!(),
            };
            if model_arms != k {
                return Err(Error::config(format!(
                    "channel has {model_arms} arms, K = {k}"
                )));
            }
        }
        Ok(())
    }
}

/// Where slot successes come from once a config is resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSource {
    Model(ChannelModel),
    /// Binarized trace table plus the per-arm column schedule.
    Trace {
        table: Vec<Vec<u8>>,
        arms: Vec<ArmColumns>,
        offset: u64,
        random_offset_max: u64,
    },
}

/// A validated configuration with the action set built and any trace
/// loaded.
#[derive(Debug, Clone)]
pub struct Instance {
    pub config: ExperimentConfig,
    pub actions: ActionSet,
    pub source: ChannelSource,
}

impl Instance {
    /// `base_dir` anchors relative trace paths.
    pub fn new(config: ExperimentConfig, base_dir: &Path) -> Result<Self> {
        config.validate()?;
        let actions = config.action_set.build(config.arms)?;
        let source = match &config.channel {
            ChannelSpec::Iid { rates } => ChannelSource::Model(ChannelModel::Iid {
                rates: rates.clone(),
            }),
            ChannelSpec::Piecewise { segments } => ChannelSource::Model(ChannelModel::Piecewise {
                segments: segments.clone(),
            }),
            ChannelSpec::Trace(spec) => {
                let path = base_dir.join(&spec.file);
                let table = trace::read_table(&path, spec.schema, spec.thresholds.as_deref())?;
                let columns = table.first().map_or(0, Vec::len);
                let arms = spec.arms.clone().unwrap_or_else(|| {
                    (0..config.arms)
                        .map(|k| ArmColumns {
                            segments: vec![ColumnSegment {
                                start: 1,
                                column: k,
                            }],
                        })
                        .collect()
                });
                if arms.len() != config.arms {
                    return Err(Error::config(format!(
                        "trace feeds {} arms, K = {}",
                        arms.len(),
                        config.arms
                    )));
                }
                if let Some(c) = arms
                    .iter()
                    .flat_map(|a| &a.segments)
                    .find(|s| s.column >= columns)
                {
                    return Err(Error::config(format!(
                        "trace column {} requested but {} has {columns} columns",
                        c.column,
                        path.display()
                    )));
                }
                if (table.len() as u64) < config.horizon {
                    return Err(Error::config(format!(
                        "trace {} has {} rows but T = {}",
                        path.display(),
                        table.len(),
                        config.horizon
                    )));
                }
                ChannelSource::Trace {
                    table,
                    arms,
                    offset: spec.offset,
                    random_offset_max: spec.random_offset_max,
                }
            }
        };
        Ok(Instance {
            config,
            actions,
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let config = ExperimentConfig::load(path)?;
        Self::new(config, path.parent().unwrap_or(Path::new(".")))
    }

    /// The channel model a run sees. Traces are materialized with the run's
    /// starting offset applied (wrapping around the table).
    pub fn channel_model(&self, offset: u64) -> ChannelModel {
        match &self.source {
            ChannelSource::Model(m) => m.clone(),
            ChannelSource::Trace { table, arms, .. } => ChannelModel::Trace {
                rows: (1..=self.config.horizon)
                    .map(|t| {
                        let row = &table[((offset + t - 1) % table.len() as u64) as usize];
                        arms.iter()
                            .map(|a| {
                                let i = a.segments.partition_point(|s| s.start <= t) - 1;
                                row[a.segments[i].column]
                            })
                            .collect()
                    })
                    .collect(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::presets::preset;

    const SAMPLE: &str = r#"
K = 2
T = 1000
W = 100
chi = [0.6, 0.2]
eta = 10.0
eps = 0.02
policies = ["age", "qlen"]
runs = 3
base_seed = 7

[action_set]
kind = "one_of"

[channel]
kind = "iid"
rates = [0.9, 0.9]
"#;

    #[test]
    fn parse_sample() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.arms, 2);
        assert_eq!(cfg.alpha, 1.0);
        assert_eq!(cfg.stride(), 1);
        assert_eq!(cfg.tie_break, TieBreak::LowestIndex);
        assert_eq!(cfg.policies, vec![PolicyName::Age, PolicyName::Qlen]);
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trip() {
        for name in ["abrupt2", "iid6", "trace3"] {
            let cfg = preset(name, None).unwrap();
            let text = cfg.to_toml().unwrap();
            assert_eq!(
                ExperimentConfig::from_toml(&text).unwrap(),
                cfg,
                "{name}:\n{text}"
            );
        }
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(
            ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(),
            cfg
        );
    }

    #[test]
    fn rejects_bad_configs() {
        let base = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let bad = [
            ExperimentConfig {
                window: 300,
                ..base.clone()
            },
            ExperimentConfig {
                eps: 0.0,
                ..base.clone()
            },
            ExperimentConfig {
                chi: vec![0.6, 1.2],
                ..base.clone()
            },
            ExperimentConfig {
                chi: vec![0.6],
                ..base.clone()
            },
            ExperimentConfig {
                runs: 0,
                ..base.clone()
            },
            ExperimentConfig {
                log_stride: Some(0),
                ..base.clone()
            },
            ExperimentConfig {
                policies: vec![],
                ..base.clone()
            },
            ExperimentConfig {
                policies: vec![PolicyName::Age, PolicyName::Age],
                ..base.clone()
            },
            ExperimentConfig {
                eta: -1.0,
                ..base.clone()
            },
            ExperimentConfig {
                channel: ChannelSpec::Iid { rates: vec![0.9] },
                ..base.clone()
            },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
        assert!(
            ExperimentConfig::from_toml(&SAMPLE.replace("runs = 3", "runs = 3\nbogus = 1"))
                .is_err()
        );
    }

    #[test]
    fn arrival_probability_clamped() {
        let cfg = ExperimentConfig {
            chi: vec![1.0, 0.2],
            ..ExperimentConfig::from_toml(SAMPLE).unwrap()
        };
        assert_eq!(cfg.arrival_probs(), vec![1.0, 0.22]);
    }

    #[test]
    fn default_stride() {
        let cfg = ExperimentConfig {
            horizon: 60_000,
            ..ExperimentConfig::from_toml(SAMPLE).unwrap()
        };
        assert_eq!(cfg.stride(), 30);
    }

    #[test]
    fn trace_splice_and_offset() {
        let dir = tempfile::tempdir().unwrap();
        let rows = "t,c0,c1,c2\n1,1,0,0\n2,0,1,0\n3,0,0,1\n4,1,1,0\n";
        std::fs::write(dir.path().join("t.csv"), rows).unwrap();
        let text = SAMPLE
            .replace("T = 1000", "T = 4")
            .replace("W = 100", "W = 2")
            .replace(
                "[channel]\nkind = \"iid\"\nrates = [0.9, 0.9]",
                "[channel]\nkind = \"trace\"\nfile = \"t.csv\"\nschema = \"binary\"\n\
                 [[channel.arms]]\nsegments = [{start = 1, column = 0}, {start = 3, column = 1}]\n\
                 [[channel.arms]]\nsegments = [{start = 1, column = 2}]\n",
            );
        let inst = Instance::new(ExperimentConfig::from_toml(&text).unwrap(), dir.path()).unwrap();
        let ChannelModel::Trace { rows } = inst.channel_model(0) else {
            panic!()
        };
        assert_eq!(rows, vec![vec![1, 0], vec![0, 0], vec![0, 1], vec![1, 0]]);
        let ChannelModel::Trace { rows } = inst.channel_model(1) else {
            panic!()
        };
        assert_eq!(rows, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![0, 0]]);

        let long = text.replace("T = 4", "T = 6").replace("W = 2", "W = 3");
        let err = Instance::new(ExperimentConfig::from_toml(&long).unwrap(), dir.path());
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
