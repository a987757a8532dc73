use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ocvit::cliio::{cmd_ablate, cmd_eval, cmd_gradcheck, cmd_score, cmd_train, ExperimentConfig, Overrides};
use ocvit::evalproto::Protocol;
use ocvit::heads::HeadKind;
use ocvit::{Error, Exec, Result};

#[derive(Parser)]
#[command(name = "ocvit", version, about = "One-class ViT anomaly detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (key=value lines).
    #[arg(long)]
    config: PathBuf,
    /// Base seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["normal-vs-rest", "paper-literal"])]
    protocol: Option<String>,
    #[arg(long, value_parser = ["mlp", "svm", "kde"])]
    head: Option<String>,
    /// FC head depth (total linear layers).
    #[arg(long)]
    depth: Option<usize>,
    /// Run on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per class and seed; write checkpoints and histories.
    Train(Common),
    /// Evaluate saved models; write the AUC report.
    Eval(Common),
    /// Run the ablation grid; write the ablation CSV.
    Ablate(Common),
    /// Print `path,score` for each image.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Finite-difference check of every differentiable operation.
    Gradcheck {
        /// Accepted for a uniform interface; the suite is self-contained.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, Exec)> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        let usage = |e: Error| Error::Usage(e.to_string());
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            protocol: self.protocol.as_deref().map(str::parse::<Protocol>).transpose().map_err(usage)?,
            head: self.head.as_deref().map(str::parse::<HeadKind>).transpose().map_err(usage)?,
            depth: self.depth,
        }
        .apply(&mut cfg)?;
        let exec = if self.sequential { Exec::Sequential } else { Exec::default() };
        Ok((cfg, exec))
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Train(c) => {
            let (cfg, exec) = c.load()?;
            let runs = cmd_train(&cfg, exec)?;
            for r in runs {
                let acc = r.history.epoch_accuracy.last().copied().unwrap_or(f64::NAN);
                println!("class {} seed {}: final train accuracy {acc}", r.class, r.seed);
            }
        }
        Command::Eval(c) => {
            let (cfg, exec) = c.load()?;
            let r = cmd_eval(&cfg, exec)?;
            println!("mean AUC {} (std {})", r.mean, r.std);
        }
        Command::Ablate(c) => {
            let (cfg, exec) = c.load()?;
            let results = cmd_ablate(&cfg, exec)?;
            let failed = results.iter().filter(|r| r.failed()).count();
            println!("{} grid points, {failed} failed", results.len());
        }
        Command::Score { common, images } => {
            let (cfg, exec) = common.load()?;
            cmd_score(&cfg, &images, &mut stdout, exec)?;
        }
        Command::Gradcheck { config, seed } => {
            if let Some(p) = config {
                ExperimentConfig::load(&p)?;
            }
            cmd_gradcheck(seed, &mut stdout)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
