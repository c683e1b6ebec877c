use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use powerprint::detect::FeatureSubset;
use powerprint_cli::commands::{cmd_detect, cmd_evaluate, cmd_generate, cmd_train, resolve, Target};
use powerprint_cli::config::{Config, Overrides};
use powerprint_cli::report::{detection_table, evaluation_table};

/// Detect anomalous executions from CPU power traces.
#[derive(Debug, Parser)]
#[command(name = "powerprint", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for corpus generation and model learning.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Features that vote: `all`, `recommended`, or a comma-separated list.
    #[arg(long, global = true)]
    subset: Option<FeatureSubset>,
    /// Also flag runs with unusually few votes.
    #[arg(long, global = true)]
    two_sided: bool,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a labelled synthetic corpus.
    Generate {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        families: Option<usize>,
        #[arg(long)]
        runs_per_family: Option<usize>,
        #[arg(long)]
        clean_runs: Option<usize>,
        /// Multiplier on every infection effect; 0 gives a negative control.
        #[arg(long)]
        effect_scale: Option<f64>,
    },
    /// Learn task models and the voting ensemble from a corpus' clean runs.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Where to write the model bundle.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify runs. Exits 0 when all are clean and 2 when any is infected.
    Detect {
        /// Model bundle written by `train`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// A run manifest or a corpus directory.
        target: PathBuf,
        /// JSON report path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// CSV z-score table path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Ensemble and hold-one-family-out SVM metrics on a labelled corpus.
    Evaluate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Skip the SVM evaluation.
        #[arg(long)]
        no_svm: bool,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    let overrides = Overrides {
        seed: cli.seed,
        subset: cli.subset.clone(),
        two_sided: cli.two_sided,
    };
    let mut cfg = Config::load(cli.config.as_deref())?;
    cfg.apply(&overrides)?;
    match cli.command {
        Command::Generate {
            out,
            families,
            runs_per_family,
            clean_runs,
            effect_scale,
        } => {
            if let Some(v) = families {
                cfg.corpus.families = v;
            }
            if let Some(v) = runs_per_family {
                cfg.corpus.runs_per_family = v;
            }
            if let Some(v) = clean_runs {
                cfg.corpus.clean_runs = v;
            }
            if let Some(v) = effect_scale {
                cfg.corpus.effect_scale = v;
            }
            cfg.validate()?;
            let out = resolve(out.as_deref(), cfg.paths.corpus.as_ref(), "output directory")?;
            let index = cmd_generate(&cfg, &out)?;
            let infected = cfg.corpus.families * cfg.corpus.runs_per_family;
            println!(
                "generated {} runs ({} clean, {infected} infected across {} families) in {} with seed {}",
                index.runs.len(),
                cfg.corpus.clean_runs,
                cfg.corpus.families,
                out.display(),
                index.seed
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { corpus, out } => {
            let corpus = resolve(corpus.as_deref(), cfg.paths.corpus.as_ref(), "corpus directory")?;
            let out = resolve(out.as_deref(), cfg.paths.model.as_ref(), "model output path")?;
            let bundle = cmd_train(&cfg, &corpus, &out)?;
            println!(
                "trained {} task models on {} clean runs; vote threshold {:.2}; wrote {}",
                bundle.tasks.len(),
                bundle.training_runs.len(),
                bundle.ensemble.vote_threshold(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Detect {
            model,
            target,
            report,
            csv,
        } => {
            let model = resolve(model.as_deref(), cfg.paths.model.as_ref(), "model bundle")?;
            let report_path = report.or_else(|| cfg.paths.reports.as_ref().map(|d| d.join("detection.json")));
            let out = cmd_detect(&model, &Target::infer(target), &overrides, report_path.as_deref(), csv.as_deref())?;
            print!("{}", detection_table(&out));
            Ok(if out.any_infected() { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Evaluate { corpus, report, no_svm } => {
            let corpus = resolve(corpus.as_deref(), cfg.paths.corpus.as_ref(), "corpus directory")?;
            let report_path = report.or_else(|| cfg.paths.reports.as_ref().map(|d| d.join("evaluation.json")));
            let out = cmd_evaluate(&cfg, &corpus, report_path.as_deref(), !no_svm)?;
            print!("{}", evaluation_table(&out));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
