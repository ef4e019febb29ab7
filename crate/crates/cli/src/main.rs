use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use vqa_anatomy::data::{generate_synthetic, SyntheticTaskConfig};
use vqa_anatomy::harness::{
    emit_report, run_experiment, run_grid, score_predictions, ExperimentConfig, GridConfig,
    RunOptions,
};
use vqa_anatomy::metrics::{AccuracyRule, EvalResult, ANSWER_TYPES};

#[derive(Parser)]
#[command(name = "vqa-anatomy", version, about = "Train, ablate and score VQA component models")]
struct Cli {
    /// Overrides the seed in every config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Root directory for experiment artifacts.
    #[arg(long, global = true, env = "VQA_ANATOMY_OUT", default_value = "results")]
    out: PathBuf,

    /// Grid cells trained at the same time.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Only print warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one experiment config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        timing: Timing,
    },
    /// Run every cell of an ablation grid, then write its report.
    Grid {
        config: PathBuf,
        #[command(flatten)]
        timing: Timing,
    },
    /// Rebuild report.md and report.csv from a results directory.
    Report { dir: PathBuf },
    /// Score a prediction file against VQA-format annotations.
    Score {
        predictions: PathBuf,
        annotations: PathBuf,
        /// Average over the ten leave-one-human-out subsets.
        #[arg(long)]
        leave_one_out: bool,
    },
    /// Write a synthetic dataset in VQA JSON plus VQRF feature format.
    Synth {
        dir: PathBuf,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        val: Option<usize>,
        #[arg(long)]
        regions: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        banks: Option<usize>,
    },
}

#[derive(Args)]
struct Timing {
    /// Store elapsed seconds in result.json (breaks byte-identical reruns).
    #[arg(long)]
    record_time: bool,
}

impl Timing {
    fn options(&self) -> RunOptions {
        RunOptions {
            record_wall_time: self.record_time,
        }
    }
}

fn print_eval(result: &EvalResult) {
    println!("overall  {:.4}  ({} questions)", result.overall, result.count);
    for t in ANSWER_TYPES {
        if let Some(v) = result.per_type.get(t) {
            println!("{t:<8} {v:.4}");
        }
    }
    for (t, v) in &result.per_type {
        if !ANSWER_TYPES.contains(&t.as_str()) {
            println!("{t:<8} {v:.4}");
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, timing } => {
            let mut cfg = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(seed) = cli.seed {
                cfg.train.seed = seed;
            }
            let r = run_experiment(&cfg, &cli.out, timing.options())?;
            println!(
                "{}: params {}  train {:.4}  val {:.4}",
                r.name, r.parameter_count, r.train_accuracy, r.val_accuracy
            );
            println!("artifacts in {}", cli.out.join(&r.name).display());
        }
        Command::Grid { config, timing } => {
            let mut grid = GridConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(seed) = cli.seed {
                grid.base.retain(|e| e.key != "seed" && e.key != "train.seed");
                grid.base.push(vqa_anatomy::harness::Entry {
                    key: "seed".into(),
                    value: seed.to_string(),
                    line: 0,
                });
            }
            let outcome = run_grid(&grid, &cli.out, cli.jobs, timing.options())?;
            print!("{}", outcome.report.to_markdown());
            println!("report in {}", outcome.dir.display());
            let failures = outcome.failures();
            if !failures.is_empty() {
                for (name, err) in failures {
                    eprintln!("cell {name} failed: {err}");
                }
                return Ok(ExitCode::from(2));
            }
        }
        Command::Report { dir } => {
            let report = emit_report(&dir)?;
            print!("{}", report.to_markdown());
        }
        Command::Score {
            predictions,
            annotations,
            leave_one_out,
        } => {
            let rule = if leave_one_out {
                AccuracyRule::LeaveOneOut
            } else {
                AccuracyRule::Literal
            };
            print_eval(&score_predictions(&predictions, &annotations, rule)?);
        }
        Command::Synth {
            dir,
            train,
            val,
            regions,
            dim,
            noise,
            banks,
        } => {
            let d = SyntheticTaskConfig::default();
            let task = SyntheticTaskConfig {
                train: train.unwrap_or(d.train),
                val: val.unwrap_or(d.val),
                regions: regions.unwrap_or(d.regions),
                dim: dim.unwrap_or(d.dim),
                noise: noise.unwrap_or(d.noise),
                banks: banks.unwrap_or(d.banks),
                ..d
            };
            let data = generate_synthetic(&task, cli.seed.unwrap_or(0))?;
            data.write(&dir)?;
            println!(
                "wrote {} train and {} val questions to {}",
                task.train,
                task.val,
                dir.display()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if cli.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
