use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use agebandit::harness::experiment::{bound_report, oracle_entries, run_experiment, write_outputs};
use agebandit::harness::trace::{
    binarize, calibrate_thresholds, column_means, read_numeric, read_table, TraceSchema,
};
use agebandit::harness::{preset, ExperimentConfig, Instance};
use agebandit::{Error, Result};

#[derive(Parser)]
#[command(
    name = "agebandit",
    version,
    about = "Age-based constrained bandit scheduling experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in configuration (abrupt2, iid6, trace3).
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn instance(&self, horizon: Option<u64>) -> Result<Instance> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => preset(name, horizon)?,
            (None, None) => unreachable!("clap requires one source"),
        };
        if self.config.is_some() {
            if let Some(t) = horizon {
                cfg.horizon = t;
            }
        }
        let base = self
            .config
            .as_deref()
            .and_then(Path::parent)
            .unwrap_or(Path::new("."));
        Instance::new(cfg, base)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured policy and write aggregate CSVs.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        runs: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Horizon T (must stay a multiple of W).
        #[arg(long)]
        horizon: Option<u64>,
        /// Output directory; defaults to the config's `outputs`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the optimal static policy and Slater slack.
    Oracle {
        #[command(flatten)]
        source: Source,
    },
    /// Print the minimum zero-violation window, the regret bound and the
    /// age-norm bound.
    Bounds {
        #[command(flatten)]
        source: Source,
    },
    /// Check a trace file and print its shape and column means.
    ValidateTrace {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        schema: TraceSchema,
        /// Comma separated per-column SNR thresholds (snr schema).
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        /// Comma separated target success rates; prints matching thresholds
        /// (snr schema).
        #[arg(long, value_delimiter = ',')]
        calibrate: Option<Vec<f64>>,
    },
    /// Print a built-in configuration as TOML.
    Preset {
        name: String,
        #[arg(long)]
        horizon: Option<u64>,
    },
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            source,
            runs,
            seed,
            horizon,
            out,
        } => {
            let mut inst = source.instance(horizon)?;
            if let Some(r) = runs {
                inst.config.runs = r;
            }
            if let Some(s) = seed {
                inst.config.base_seed = s;
            }
            inst.config.validate()?;
            let dir = out.unwrap_or_else(|| inst.config.outputs.clone());
            let results = run_experiment(&inst)?;
            write_outputs(&inst, &results, &dir)?;
            println!(
                "{} runs x {} policies, T = {}: wrote {}",
                inst.config.runs,
                inst.config.policies.len(),
                inst.config.horizon,
                dir.display()
            );
        }
        Command::Oracle { source } => {
            let inst = source.instance(None)?;
            for e in oracle_entries(&inst)? {
                let label = if e.empirical {
                    "empirical rates"
                } else {
                    "rates"
                };
                println!("from t = {}: {label} {}", e.start, fmt_vec(&e.rates));
                println!("  gamma_max      {:.9}", e.gamma_max);
                match (&e.sigma_star, e.objective_rate) {
                    (Some(s), Some(r)) => {
                        println!("  sigma_star     {}", fmt_vec(s));
                        println!("  objective_rate {r:.9}");
                    }
                    _ => println!("  infeasible: no static policy meets every requirement"),
                }
                println!("  sigma_gamma    {}", fmt_vec(&e.sigma_gamma));
            }
        }
        Command::Bounds { source } => {
            let inst = source.instance(None)?;
            let b = bound_report(&inst, None)?.ok_or_else(|| {
                Error::Config(
                    "bounds need an i.i.d. channel whose requirements hold with positive slack"
                        .into(),
                )
            })?;
            println!("gamma              {:.9}", b.inputs.gamma);
            if !b.eps_within_slack {
                println!(
                    "warning: eps = {} exceeds gamma/2; the bounds below are not guaranteed",
                    b.inputs.eps
                );
            }
            println!("W_min              {:.6e}", b.min_zero_violation_window);
            println!(
                "regret bound (T={}) {:.6e}",
                b.inputs.horizon, b.regret_bound
            );
            println!("age norm bound     {:.6e}", b.lemma5);
        }
        Command::ValidateTrace {
            file,
            schema,
            thresholds,
            calibrate,
        } => {
            if let Some(targets) = calibrate {
                if schema != TraceSchema::Snr {
                    return Err(Error::Argument("--calibrate needs --schema snr".into()));
                }
                let snr = read_numeric(&file)?;
                let thr = calibrate_thresholds(&snr, &targets)?;
                println!("thresholds {}", fmt_vec(&thr));
                println!(
                    "rates      {}",
                    fmt_vec(&column_means(&binarize(&snr, &thr)))
                );
                return Ok(());
            }
            let rows = read_table(&file, schema, thresholds.as_deref())?;
            println!(
                "{}: {} rows x {} columns",
                file.display(),
                rows.len(),
                rows[0].len()
            );
            println!("success rates {}", fmt_vec(&column_means(&rows)));
        }
        Command::Preset { name, horizon } => {
            print!("{}", preset(&name, horizon)?.to_toml()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
