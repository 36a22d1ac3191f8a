use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use divae_core::experiment::{run_command, Command, ExperimentConfig, Overrides, RunOutcome};
use divae_core::Error;

#[derive(Debug, Parser)]
#[command(name = "divae", version, about = "Disentangled IV representation learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Draw one synthetic dataset and write it as CSV.
    Generate(Common),
    /// Train the model once and write its parameters and loss trace.
    Train(Common),
    /// Train once and estimate the treatment effect.
    Estimate(Common),
    /// Seeded replications of the configured pipeline.
    Bench(Common),
    /// The configured pipeline with and without the orthogonality penalty.
    Ablate(Common),
    /// Replications over the alpha grid 0.01 .. 10000.
    SweepAlpha(Common),
    /// Correlations between the learned instrument and each auxiliary latent.
    EvalPcc(Common),
    /// Histogram comparison of the learned and true instrument.
    PdfCompare(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; replication i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replications.
    #[arg(long)]
    jobs: Option<usize>,
    /// Number of replications.
    #[arg(long)]
    reps: Option<usize>,
}

impl Sub {
    fn split(self) -> (Command, Common) {
        match self {
            Sub::Generate(c) => (Command::Generate, c),
            Sub::Train(c) => (Command::Train, c),
            Sub::Estimate(c) => (Command::Estimate, c),
            Sub::Bench(c) => (Command::Bench, c),
            Sub::Ablate(c) => (Command::Ablate, c),
            Sub::SweepAlpha(c) => (Command::SweepAlpha, c),
            Sub::EvalPcc(c) => (Command::EvalPcc, c),
            Sub::PdfCompare(c) => (Command::PdfCompare, c),
        }
    }
}

fn run(command: Command, args: Common) -> divae_core::Result<RunOutcome> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    cfg.apply(&Overrides {
        out: args.out,
        seed: args.seed,
        jobs: args.jobs,
        reps: args.reps,
    })?;
    run_command(command, &cfg)
}

/// One line: `error kind=<kind> [replication=<i>] message="<text>"`.
fn error_line(err: &Error) -> String {
    let mut line = format!("error kind={}", err.kind());
    let mut inner = err;
    if let Error::Replication { index, source } = err {
        line.push_str(&format!(" replication={index} cause={}", source.kind()));
        inner = source;
    }
    let message = inner.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    line.push_str(&format!(" message=\"{message}\""));
    line
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Replication { source, .. } if source.is_validation() => 2,
        e if e.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let (command, args) = Cli::parse().command.split();
    match run(command, args) {
        Ok(outcome) => {
            for v in &outcome.report.variants {
                let opt = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "na".into());
                println!(
                    "variant={} reps={} mean_beta={:.4} mean_bias={} std_bias={} mean_abs_pcc={}",
                    v.label,
                    v.reps,
                    v.mean_beta,
                    opt(v.mean_bias),
                    opt(v.std_bias),
                    opt(v.mean_abs_pcc)
                );
            }
            println!("wrote {}", outcome.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", error_line(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
