use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use marl_sop::critic::CriticKind;
use marl_sop::env::{CaptureGridConfig, EnvConfig, SwitchGameConfig};
use marl_sop::harness::{self, checks, RunConfig};
use marl_sop::learn::CriticSchedule;
use marl_sop::sop::SopMode;
use marl_sop::Error;

#[derive(Parser)]
#[command(
    name = "marl-sop",
    version,
    about = "Semi-on-policy multi-agent actor-critic experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EnvKind {
    Switch,
    Capture,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleEnv {
    Switch,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seed and write metrics.csv, manifest.toml and params.json.
    Train(TrainArgs),
    /// Median and quartiles of test win rate across run directories.
    Aggregate {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of the actor and critic gradients.
    GradCheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Fit critics to exact values under a uniform policy.
    OracleCheck {
        #[arg(long, value_enum, default_value = "switch")]
        env: OracleEnv,
        #[arg(long, default_value_t = 5000)]
        max_updates: usize,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Every flag overrides the matching key of `--config`.
#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    env: Option<EnvKind>,
    #[arg(long, value_enum)]
    algo: Option<CriticKind>,
    #[arg(long, value_enum)]
    sop: Option<SopMode>,
    #[arg(long, value_enum)]
    critic_schedule: Option<CriticSchedule>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    kl_threshold: Option<f64>,
    #[arg(long)]
    gamma_adv_one: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    total_steps: Option<u64>,
    #[arg(long)]
    eval_interval: Option<u64>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

impl TrainArgs {
    fn resolve(&self) -> marl_sop::Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        match (self.env, &c.env) {
            (Some(EnvKind::Switch), EnvConfig::Capture(_)) => c.env = EnvConfig::Switch(SwitchGameConfig::default()),
            (Some(EnvKind::Capture), EnvConfig::Switch(_)) => c.env = EnvConfig::Capture(CaptureGridConfig::default()),
            _ => {}
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field { c.$field = v; }
            )*};
        }
        set!(
            algo,
            sop,
            critic_schedule,
            batch_size,
            kl_threshold,
            gamma_adv_one,
            seed,
            total_steps,
            eval_interval,
            eval_episodes
        );
        c.validate()?;
        Ok(c)
    }
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::Config(_) => ExitCode::from(2),
        Error::NonFinite(_) => ExitCode::from(3),
        _ => ExitCode::FAILURE,
    }
}

fn metrics_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        harness::RunFiles::in_dir(p).metrics
    } else {
        p.to_path_buf()
    }
}

fn run(cli: Cli) -> marl_sop::Result<bool> {
    match cli.command {
        Command::Train(args) => {
            let config = args.resolve()?;
            let out = harness::run_experiment(&config)?;
            let files = out.write(&args.out)?;
            if let Some(last) = out.rows.last() {
                println!(
                    "step {} episodes {} test win rate {:.3} test return {:.3}",
                    last.step, last.episodes, last.test_win_rate, last.test_return
                );
            }
            println!("wrote {}", files.metrics.display());
            Ok(true)
        }
        Command::Aggregate { runs, out } => {
            let all = runs
                .iter()
                .map(|p| harness::read_metrics(&metrics_path(p)))
                .collect::<marl_sop::Result<Vec<_>>>()?;
            let rows = harness::aggregate(&all)?;
            std::fs::write(&out, harness::aggregate_csv(&rows)?)?;
            println!("aggregated {} runs into {} rows", all.len(), rows.len());
            Ok(true)
        }
        Command::GradCheck { seeds, tolerance } => {
            let mut ok = true;
            for r in checks::gradient_suite(seeds)? {
                let pass = r.max_rel_error < tolerance;
                ok &= pass;
                println!(
                    "{:<9} seeds {:>3} max rel error {:.3e} (seed {}, {}[{}]: {:.6e} vs {:.6e}) {}",
                    r.loss,
                    r.seeds,
                    r.max_rel_error,
                    r.worst_seed,
                    r.worst_param,
                    r.worst_entry.0,
                    r.worst_entry.1,
                    r.worst_entry.2,
                    if pass { "ok" } else { "FAIL" }
                );
            }
            Ok(ok)
        }
        Command::OracleCheck {
            env: OracleEnv::Switch,
            max_updates,
            tolerance,
            seed,
        } => {
            let mut ok = true;
            for f in checks::switch_oracle_check(seed, max_updates, tolerance)? {
                let pass = f.error < tolerance;
                ok &= pass;
                println!(
                    "{:<9} error {:.4} after {} updates {}",
                    f.critic,
                    f.error,
                    f.updates,
                    if pass { "ok" } else { "FAIL" }
                );
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
