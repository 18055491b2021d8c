//! Multi-run experiments, aggregation and CSV output.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::environment::ChannelModel;
use crate::error::{Error, Result};
use crate::harness::config::{ChannelSource, Instance};
use crate::harness::sim::{run_once, RunResult};
use crate::harness::trace::column_means;
use crate::metrics::{
    age_window, lemma5_bound, theorem2_window, theorem3_regret_bound, BoundInputs, OnlineStats,
};
use crate::oracle::{solve_optimal_static, OracleReport};

/// Runs every (policy, run) pair on the rayon pool. Results come back
/// sorted by policy (config order) then run index, so the output does not
/// depend on scheduling.
pub fn run_experiment(inst: &Instance) -> Result<Vec<RunResult>> {
    let jobs = jobs(inst);
    log::info!(
        "running {} simulations of T = {}",
        jobs.len(),
        inst.config.horizon
    );
    jobs.into_par_iter()
        .map(|(p, run)| run_once(inst, p, run))
        .collect()
}

/// Same as [`run_experiment`] on the calling thread.
pub fn run_experiment_sequential(inst: &Instance) -> Result<Vec<RunResult>> {
    jobs(inst)
        .into_iter()
        .map(|(p, run)| run_once(inst, p, run))
        .collect()
}

fn jobs(inst: &Instance) -> Vec<(crate::learning::PolicyKind, u64)> {
    inst.config
        .policy_kinds()
        .into_iter()
        .flat_map(|p| (0..inst.config.runs).map(move |r| (p, r)))
        .collect()
}

/// Mean and standard error across runs at one logged slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub policy: &'static str,
    /// `None` for per-policy series such as regret.
    pub arm: Option<usize>,
    pub t: u64,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Aggregates {
    pub regret: Vec<SeriesPoint>,
    pub throughput: Vec<SeriesPoint>,
    pub tslr: Vec<SeriesPoint>,
}

fn group_by_policy(results: &[RunResult]) -> Vec<&[RunResult]> {
    results.chunk_by(|a, b| a.policy == b.policy).collect()
}

/// Statistic `f(record)` across runs at every logged slot. Slots where the
/// statistic is undefined (`NaN`) are skipped.
fn series(
    runs: &[RunResult],
    arm: Option<usize>,
    f: impl Fn(&crate::metrics::SlotRecord) -> f64,
) -> Vec<SeriesPoint> {
    let first = &runs[0];
    (0..first.log.records.len())
        .filter_map(|i| {
            let stats: OnlineStats = runs.iter().map(|r| f(&r.log.records[i])).collect();
            let mean = stats.mean();
            (!mean.is_nan()).then(|| SeriesPoint {
                policy: first.policy,
                arm,
                t: first.log.records[i].t,
                mean,
                se: stats.se(),
            })
        })
        .collect()
}

pub fn aggregate(results: &[RunResult]) -> Aggregates {
    let mut agg = Aggregates::default();
    for runs in group_by_policy(results) {
        let arms = runs[0].log.arms;
        agg.regret.extend(series(runs, None, |r| r.pseudo_regret));
        for k in 0..arms {
            agg.throughput
                .extend(series(runs, Some(k), |r| r.throughput[k]));
        }
        for k in 0..arms {
            agg.tslr.extend(series(runs, Some(k), |r| r.tslr[k] as f64));
        }
    }
    agg
}

/// `%.9g`: nine significant digits, trailing zeros dropped, exponent form
/// outside `[1e-4, 1e9)`.
pub fn format_g9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-4..9).contains(&exp) {
        trim(&format!("{x:.*}", (8 - exp) as usize))
    } else {
        format!(
            "{}e{}{:02}",
            trim(mantissa),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_series(path: &Path, points: &[SeriesPoint], per_arm: bool) -> Result<()> {
    let mut w = csv_writer(path)?;
    if per_arm {
        w.write_record(["policy", "arm", "t", "mean", "se"])?;
    } else {
        w.write_record(["policy", "t", "mean", "se"])?;
    }
    for p in points {
        let mut row = vec![p.policy.to_string()];
        if per_arm {
            row.push((p.arm.expect("per-arm series") + 1).to_string());
        }
        row.extend([p.t.to_string(), format_g9(p.mean), format_g9(p.se)]);
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_summary(path: &Path, results: &[RunResult], arms: usize) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = [
        "policy",
        "run",
        "seed",
        "final_reward",
        "final_regret",
        "max_qlen",
    ]
    .map(String::from)
    .to_vec();
    header.extend((1..=arms).map(|k| format!("mean_hol_age_{k}")));
    header.extend((1..=arms).map(|k| format!("mean_tslr_{k}")));
    w.write_record(&header)?;
    for r in results {
        let s = &r.summary;
        let mut row = vec![
            r.policy.to_string(),
            r.run.to_string(),
            r.seed.to_string(),
            s.final_reward.to_string(),
            format_g9(s.final_regret),
            s.max_qlen.to_string(),
        ];
        row.extend(s.mean_hol_age.iter().map(|&v| format_g9(v)));
        row.extend(s.mean_tslr.iter().map(|&v| format_g9(v)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Oracle solution for one stationary stretch of the channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleEntry {
    /// First slot the rates apply to.
    pub start: u64,
    /// `true` when the rates are column means of a trace.
    pub empirical: bool,
    pub rates: Vec<f64>,
    pub feasible: bool,
    pub gamma_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_star: Option<Vec<f64>>,
    pub sigma_gamma: Vec<f64>,
}

impl OracleEntry {
    fn new(start: u64, empirical: bool, rates: Vec<f64>, report: OracleReport) -> Self {
        OracleEntry {
            start,
            empirical,
            rates,
            feasible: report.feasible,
            gamma_max: report.gamma_max,
            objective_rate: report.objective_rate,
            sigma_star: report.sigma_star.map(|s| s.probs().to_vec()),
            sigma_gamma: report.sigma_gamma.probs().to_vec(),
        }
    }
}

/// Oracle per stationary stretch. Trace channels get a single entry built
/// from the column means of the unrotated trace.
pub fn oracle_entries(inst: &Instance) -> Result<Vec<OracleEntry>> {
    let cfg = &inst.config;
    let solve = |start, empirical, rates: Vec<f64>| -> Result<OracleEntry> {
        let clipped: Vec<f64> = rates.iter().map(|r| r.max(f64::MIN_POSITIVE)).collect();
        let report = solve_optimal_static(&clipped, &cfg.chi, &inst.actions)?;
        Ok(OracleEntry::new(start, empirical, rates, report))
    };
    match &inst.source {
        ChannelSource::Model(ChannelModel::Iid { rates }) => {
            Ok(vec![solve(1, false, rates.clone())?])
        }
        ChannelSource::Model(ChannelModel::Piecewise { segments }) => segments
            .iter()
            .filter(|s| s.start <= cfg.horizon)
            .map(|s| solve(s.start, false, s.rates.clone()))
            .collect(),
        ChannelSource::Model(ChannelModel::Trace { rows }) => {
            Ok(vec![solve(1, true, column_means(rows))?])
        }
        ChannelSource::Trace { .. } => {
            let ChannelModel::Trace { rows } = inst.channel_model(0) else {
                unreachable!("trace sources materialize as traces")
            };
            Ok(vec![solve(1, true, column_means(&rows))?])
        }
    }
}

/// Analytic bound values for an i.i.d. instance with positive slack.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    pub eps_within_slack: bool,
    pub lemma5: f64,
    pub min_zero_violation_window: f64,
    pub regret_bound: f64,
    /// Per arm, from the age-based runs' measured mean head-of-line age.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured_age_windows: Option<Vec<f64>>,
}

pub fn bound_inputs(inst: &Instance) -> Result<Option<BoundInputs>> {
    let cfg = &inst.config;
    let ChannelSource::Model(ChannelModel::Iid { rates }) = &inst.source else {
        return Ok(None);
    };
    let report = solve_optimal_static(rates, &cfg.chi, &inst.actions)?;
    if !(report.gamma_max > 0.0) {
        return Ok(None);
    }
    Ok(Some(BoundInputs {
        chi: cfg.chi.clone(),
        rates: rates.clone(),
        eta: cfg.eta,
        eps: cfg.eps,
        gamma: report.gamma_max,
        arms: cfg.arms,
        i_max: inst.actions.i_max(),
        horizon: cfg.horizon,
    }))
}

pub fn bound_report(inst: &Instance, results: Option<&[RunResult]>) -> Result<Option<BoundReport>> {
    let Some(inputs) = bound_inputs(inst)? else {
        return Ok(None);
    };
    let measured_age_windows = results.and_then(|rs| {
        let age: Vec<&RunResult> = rs.iter().filter(|r| r.policy == "age").collect();
        (!age.is_empty()).then(|| {
            (0..inputs.arms)
                .map(|k| {
                    let z: OnlineStats = age.iter().map(|r| r.summary.mean_hol_age[k]).collect();
                    age_window(inputs.chi[k], inputs.eps, z.mean())
                })
                .collect()
        })
    });
    Ok(Some(BoundReport {
        eps_within_slack: inputs.eps_within_slack(),
        lemma5: lemma5_bound(&inputs)?,
        min_zero_violation_window: theorem2_window(&inputs)?,
        regret_bound: theorem3_regret_bound(&inputs)?,
        measured_age_windows,
        inputs,
    }))
}

#[derive(Serialize)]
struct OracleFile<'a> {
    oracle: &'a [OracleEntry],
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::config(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `regret.csv`, `throughput.csv`, `tslr.csv`, `summary.csv`,
/// `oracle.toml`, `bounds.toml` (i.i.d. instances with positive slack only)
/// and the resolved `config.toml` into `dir`.
pub fn write_outputs(inst: &Instance, results: &[RunResult], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let agg = aggregate(results);
    write_series(&dir.join("regret.csv"), &agg.regret, false)?;
    write_series(&dir.join("throughput.csv"), &agg.throughput, true)?;
    write_series(&dir.join("tslr.csv"), &agg.tslr, true)?;
    write_summary(&dir.join("summary.csv"), results, inst.config.arms)?;
    write_toml(
        &dir.join("oracle.toml"),
        &OracleFile {
            oracle: &oracle_entries(inst)?,
        },
    )?;
    if let Some(b) = bound_report(inst, Some(results))? {
        write_toml(&dir.join("bounds.toml"), &b)?;
    }
    let cfg_path = dir.join("config.toml");
    fs::write(&cfg_path, inst.config.to_toml()?).map_err(|e| Error::io(&cfg_path, e))
}
