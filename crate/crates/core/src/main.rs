use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use genderlens::pipeline::{Pipeline, PipelineConfig, Stage, StageReport};
use genderlens::{Error, Result};

/// Gender signaling vs. gender performance on review helpfulness.
///
/// Stages read and write files under the output directory; run them in the
/// order ingest, signal, train, predict, features, match, estimate, report,
/// or all at once with `run`.
#[derive(Parser)]
#[command(name = "genderlens", version)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// `key = value` configuration file (see `genderlens config`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Corpus store directory [default: <out-dir>/store].
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Output directory for stage files and summaries.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set match_n=2000`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse review and product JSON lines (optionally gzipped) into the store.
    Ingest {
        #[arg(long)]
        reviews: Option<PathBuf>,
        #[arg(long)]
        products: Option<PathBuf>,
    },
    /// Classify reviewers by the gender signal of their user name.
    Signal,
    /// Train the character CNN on signaled reviews.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Label unsignaled reviewers by majority vote and assign groups.
    Predict {
        /// Per-review vote threshold in (0.5, 1].
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Compute the matching confounders.
    Features,
    /// Build Mahalanobis-matched pairs and the balance report.
    Match {
        /// Treated reviews sampled per category and pair group.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Bootstrap advantages and classify quadrants.
    Estimate {
        /// Bootstrap replicates.
        #[arg(long)]
        b: Option<usize>,
    },
    /// Write rank curves and the summary table.
    Report,
    /// Generate a synthetic corpus with planted effects.
    Synth {
        /// Reviews per group per category.
        #[arg(long)]
        per_group: Option<usize>,
        /// Directory for the corpus [default: <out-dir>/synth].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every analysis stage in order.
    Run,
    /// Print the effective configuration with all defaults.
    Config,
}

fn build_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.shared.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let mut set = |k: &str, v: String| cfg.set(k, &v);
    if let Some(s) = cli.shared.seed {
        set("seed", s.to_string())?;
    }
    if let Some(p) = &cli.shared.store {
        set("store", p.display().to_string())?;
    }
    if let Some(p) = &cli.shared.out_dir {
        set("out_dir", p.display().to_string())?;
    }
    match &cli.command {
        Command::Ingest { reviews, products } => {
            if let Some(p) = reviews {
                set("reviews", p.display().to_string())?;
            }
            if let Some(p) = products {
                set("products", p.display().to_string())?;
            }
        }
        Command::Train { epochs: Some(e) } => set("cnn.epochs", e.to_string())?,
        Command::Predict { threshold: Some(t) } => set("threshold", t.to_string())?,
        Command::Match { n: Some(n) } => set("match_n", n.to_string())?,
        Command::Estimate { b: Some(b) } => set("bootstrap_b", b.to_string())?,
        Command::Synth { per_group, out } => {
            if let Some(n) = per_group {
                set("synth.per_group", n.to_string())?;
            }
            if let Some(p) = out {
                set("synth.out", p.display().to_string())?;
            }
        }
        _ => {}
    }
    for o in &cli.shared.overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

fn print_report(r: &StageReport) {
    let outputs = serde_json::to_string(&r.outputs).unwrap_or_default();
    println!("{}: {}", r.stage, outputs);
}

fn run(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli)?;
    let stage = match cli.command {
        Command::Config => {
            print!("{}", cfg.to_text());
            return Ok(());
        }
        Command::Run => {
            for r in Pipeline::new(cfg).run_all()? {
                print_report(&r);
            }
            return Ok(());
        }
        Command::Ingest { .. } => Stage::Ingest,
        Command::Signal => Stage::Signal,
        Command::Train { .. } => Stage::Train,
        Command::Predict { .. } => Stage::Predict,
        Command::Features => Stage::Features,
        Command::Match { .. } => Stage::Match,
        Command::Estimate { .. } => Stage::Estimate,
        Command::Report => Stage::Report,
        Command::Synth { .. } => Stage::Synth,
    };
    let pipeline = Pipeline::new(cfg);
    let report = pipeline.run(stage)?;
    print_report(&report);
    if stage == Stage::Report {
        let table = pipeline.cfg.out_dir.join(genderlens::pipeline::files::SUMMARY_TABLE);
        if let Ok(t) = std::fs::read_to_string(table) {
            print!("{t}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Prerequisite { missing, .. } = &e {
                eprintln!("hint: run `genderlens {missing}` first");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
