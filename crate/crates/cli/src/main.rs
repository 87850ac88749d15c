use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use irpatch::harness::{self, ExperimentReport, RunConfig};

/// Shape-and-location optimization of occluding patches against a
/// sliding-window detector.
#[derive(Parser)]
#[command(name = "irpatch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one patch on the configured scene (exit 0 converged, 2 not)
    Optimize(Common),
    /// Optimized vs random-location vs canonical-shape vs no patch
    AblatePlacement(Common),
    /// Attack loss alone vs with the binary term vs the full loss
    AblateLosses(Common),
    /// Median-smoothing defense applied before scoring
    Defend(Common),
    /// Average precision on clean and patched scenes
    EvalAp(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "irpatch-out")]
    out: PathBuf,
    /// Number of suite scenes (overrides n_scenes)
    #[arg(long)]
    scenes: Option<usize>,
    /// Base seed (overrides seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Snapshot every K iterations (overrides snapshot_every)
    #[arg(long)]
    snapshots: Option<usize>,
}

impl Common {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::from_path(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(n) = self.scenes {
            cfg.n_scenes = n;
        }
        if let Some(s) = self.seed {
            cfg.optim.seed = s;
            cfg.scene.seed = s;
        }
        if let Some(k) = self.snapshots {
            cfg.optim.snapshot_every = Some(k);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn finish(report: ExperimentReport, common: &Common) -> anyhow::Result<u8> {
    report.write(&common.out)?;
    print!("{}", report.summary());
    Ok(0)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Optimize(c) => {
            let cfg = c.load()?;
            let summary = harness::optimize(&cfg, &c.out)?;
            print!("{}", summary.to_key_values());
            Ok(summary.exit_code() as u8)
        }
        Command::AblatePlacement(c) => finish(harness::ablate_placement(&c.load()?)?, c),
        Command::AblateLosses(c) => finish(harness::ablate_losses(&c.load()?)?, c),
        Command::Defend(c) => finish(harness::defend_smooth(&c.load()?)?, c),
        Command::EvalAp(c) => finish(harness::eval_ap(&c.load()?)?, c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
