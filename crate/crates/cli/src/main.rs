use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use opad::data::TaskKind;
use opad::harness::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "opad", version, about = "Learned acquisition policies for pool-based active learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic datasets.
    Generate(Common),
    /// Train the acquisition policy and its reward-ablation variants.
    TrainPolicy(Common),
    /// Run every strategy and labelling mode over the evaluation seeds.
    Evaluate(Common),
    /// Rebuild mean curves and summary.csv from existing curve files.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Restrict to one task.
    #[arg(long)]
    task: Option<TaskKind>,
}

impl Common {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.task {
            if !cfg.tasks().contains(&t) {
                anyhow::bail!("task {t} is not configured in {}", self.config.display());
            }
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let cfg = c.load()?;
            for f in harness::cli_generate(&cfg, &c.out, c.task)? {
                println!("wrote {}", f.display());
            }
        }
        Command::TrainPolicy(c) => {
            let cfg = c.load()?;
            let files = harness::cli_train_policy(&cfg, &c.out, c.task)?;
            println!("wrote {} files under {}", files.len(), c.out.join("policies").display());
        }
        Command::Evaluate(c) => {
            let cfg = c.load()?;
            let files = harness::cli_evaluate(&cfg, &c.out, c.task)?;
            println!("wrote {} files under {}", files.len(), c.out.display());
            print_summary(&c.out)?;
        }
        Command::Report(c) => {
            let cfg = c.load()?;
            harness::cli_report(&cfg, &c.out)?;
            print_summary(&c.out)?;
        }
    }
    Ok(())
}

fn print_summary(out: &std::path::Path) -> anyhow::Result<()> {
    let rows = harness::read_summary(&out.join("summary.csv"))?;
    print!("{}", harness::render_summary(&rows));
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
