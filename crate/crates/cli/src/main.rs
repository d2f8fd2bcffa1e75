use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use revprobe::catalog::HostDecoder;
use revprobe::probe::PromptMode;
use revprobe_cli::toy::{toy_e2e, ToyOptions};
use revprobe_cli::{stages, Config, Overrides};

#[derive(Parser)]
#[command(name = "revprobe", version, about = "Reversed-playback probing of video diffusion models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(short, long, default_value = "revprobe.toml")]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    prompt_mode: Option<PromptMode>,
    #[arg(long)]
    symmetric_fraction: Option<f64>,
    #[arg(long)]
    bootstrap_resamples: Option<usize>,
    #[arg(long)]
    confidence: Option<f64>,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<Config> {
        let mut cfg = Config::load(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            workers: self.workers,
            prompt_mode: self.prompt_mode,
            symmetric_fraction: self.symmetric_fraction,
            bootstrap_resamples: self.bootstrap_resamples,
            confidence: self.confidence,
            output_dir: self.out.clone(),
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate the manifest and registry and copy them into the output directory.
    Ingest(Common),
    /// Write per-model preprocessing plans.
    Preprocess(Common),
    /// Score forward and reversed playback for every model with an adapter.
    Probe(Common),
    /// Split videos into causal and non-causal sets.
    Partition(Common),
    Rsi(Common),
    Cci(Common),
    /// RSI on the low-asymmetry motion subset.
    Entropy(Common),
    Aggregate(Common),
    /// Serve the human-study API.
    AnnotateServe(Common),
    /// Render results tables from the metric artifacts.
    Report(Common),
    /// Generate synthetic clips, train the toy denoiser, and run every stage.
    ToyE2e(ToyArgs),
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long, default_value = "toy-run")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 200)]
    train_per_kind: usize,
    #[arg(long, default_value_t = 50)]
    eval_irreversible_per_kind: usize,
    #[arg(long, default_value_t = 100)]
    eval_control: usize,
    #[arg(long, default_value_t = 8)]
    epochs: usize,
    #[arg(long, default_value_t = 2000)]
    bootstrap_resamples: usize,
    #[arg(long, default_value_t = 0.9)]
    confidence: f64,
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let decoder = HostDecoder;
    match cli.command {
        Command::Ingest(c) => print_json(&stages::ingest(&c.load()?)?),
        Command::Preprocess(c) => {
            let n = stages::preprocess(&c.load()?)?;
            println!("wrote preprocessing plans for {n} models");
            Ok(())
        }
        Command::Probe(c) => print_json(&stages::probe(&c.load()?, &decoder)?),
        Command::Partition(c) => {
            let p = stages::partition(&c.load()?, &decoder)?;
            println!("{} causal, {} non-causal, {} abstained", p.causal.len(), p.noncausal.len(), p.abstained.len());
            Ok(())
        }
        Command::Rsi(c) => print_json(&stages::rsi(&c.load()?)?),
        Command::Cci(c) => print_json(&stages::cci(&c.load()?)?),
        Command::Entropy(c) => print_json(&stages::entropy(&c.load()?, &decoder)?),
        Command::Aggregate(c) => print_json(&stages::aggregate(&c.load()?)?),
        Command::Report(c) => {
            print!("{}", stages::report(&c.load()?)?);
            Ok(())
        }
        Command::AnnotateServe(c) => {
            let cfg = c.load()?;
            let svc = stages::annotate_service(&cfg)?;
            let addr = cfg.annotate.listen.parse().with_context(|| format!("listen address {:?}", cfg.annotate.listen))?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(revprobe_annotate::http::serve(addr, svc))?;
            Ok(())
        }
        Command::ToyE2e(a) => {
            let opts = ToyOptions {
                output_dir: a.out,
                seed: a.seed,
                workers: a.workers,
                train_per_kind: a.train_per_kind,
                eval_irreversible_per_kind: a.eval_irreversible_per_kind,
                eval_control: a.eval_control,
                epochs: a.epochs,
                hidden: 16,
                bootstrap_resamples: a.bootstrap_resamples,
                confidence: a.confidence,
            };
            let summary = toy_e2e(&opts)?;
            print!("{}", revprobe_cli::toy::render_summary(&summary));
            Ok(())
        }
    }
}
