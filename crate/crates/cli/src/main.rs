mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pillarmatch::eval::Matcher;
use pillarmatch::learn::LossKind;
use pillarmatch::transport::SinkhornMode;

use crate::config::RunConfig;
use crate::failure::Failure;

/// Learned key-point matching and registration for LiDAR scans.
#[derive(Debug, Parser)]
#[command(name = "pillarmatch", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` and `train.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Training loss.
    #[arg(long, global = true, value_parser = parse_loss)]
    loss: Option<LossKind>,
    #[arg(long, global = true, value_parser = parse_mode)]
    sinkhorn_mode: Option<SinkhornMode>,
    #[arg(long, global = true)]
    sinkhorn_iters: Option<usize>,
    /// Minimum assignment probability for a hard match.
    #[arg(long, global = true)]
    match_threshold: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Turn KITTI odometry sequences into a dataset.
    Preprocess {
        #[arg(long)]
        out: PathBuf,
        /// Overrides `kitti.root`.
        #[arg(long)]
        kitti_root: Option<PathBuf>,
    },
    /// Train a model on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: Option<String>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Match one pair file with a trained model.
    Match {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pair: PathBuf,
        /// Forward passes to time; overrides `timing.runs`.
        #[arg(long)]
        runs: Option<usize>,
        /// Write the assignment matrix as CSV.
        #[arg(long)]
        dump_assignment: Option<PathBuf>,
        /// Write key-points and match lines as JSON for plotting.
        #[arg(long)]
        plot_export: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Registration report over a dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: Option<String>,
        /// Needed for the learned matcher.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated subset of icp, nn, ours, vm.
        #[arg(long, value_delimiter = ',', value_parser = parse_matcher)]
        matchers: Option<Vec<Matcher>>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Run directory, relative to $PILLARMATCH_RUN_ROOT (default `runs`).
    #[arg(long)]
    run: Option<PathBuf>,
}

impl RunArgs {
    fn dir(&self, command: &str) -> PathBuf {
        let root = std::env::var_os("PILLARMATCH_RUN_ROOT").map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        root.join(self.run.clone().unwrap_or_else(|| PathBuf::from(command)))
    }
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|e: pillarmatch::Error| e.to_string())
}

fn parse_matcher(s: &str) -> Result<Matcher, String> {
    s.parse().map_err(|e: pillarmatch::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<SinkhornMode, String> {
    match s {
        "alternating" => Ok(SinkhornMode::Alternating),
        "simultaneous" => Ok(SinkhornMode::Simultaneous),
        _ => Err(format!("unknown Sinkhorn mode {s:?}, expected alternating or simultaneous")),
    }
}

fn effective_config(g: &GlobalArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(loss) = g.loss {
        cfg.train.loss = loss;
    }
    if let Some(mode) = g.sinkhorn_mode {
        cfg.model.options.sinkhorn_mode = mode;
    }
    if let Some(iters) = g.sinkhorn_iters {
        cfg.model.hyper.sinkhorn_iters = iters;
    }
    if let Some(t) = g.match_threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(Failure::Usage(format!("match threshold {t} lies outside [0, 1]")));
        }
        cfg.train.match_threshold = t;
        cfg.eval.match_threshold = t;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = effective_config(&cli.global)?;
    let sinkhorn_override = cli.global.sinkhorn_mode.is_some() || cli.global.sinkhorn_iters.is_some();
    match cli.command {
        Command::Synth { out, count } => {
            if let Some(c) = count {
                cfg.synth.count = c;
            }
            commands::synth(&cfg, &out)
        }
        Command::Preprocess { out, kitti_root } => {
            if kitti_root.is_some() {
                cfg.kitti.root = kitti_root;
            }
            commands::preprocess(&cfg, &out)
        }
        Command::Train { data, split, resume, run } => {
            commands::train(&mut cfg, &data, split.as_deref(), resume.as_deref(), &run.dir("train"))
        }
        Command::Match { checkpoint, pair, runs, dump_assignment, plot_export, run } => {
            if let Some(k) = runs {
                cfg.timing.runs = k;
            }
            let outputs = commands::MatchOutputs {
                run_dir: run.dir("match"),
                dump_assignment,
                plot_export,
            };
            commands::match_pair(&mut cfg, sinkhorn_override, &checkpoint, &pair, &outputs)
        }
        Command::Eval { data, split, checkpoint, matchers, run } => {
            if let Some(m) = matchers {
                cfg.eval.matchers = m;
            }
            commands::eval(&mut cfg, sinkhorn_override, &data, split.as_deref(), checkpoint.as_deref(), &run.dir("eval"))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
