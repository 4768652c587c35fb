use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trcm_core::audit::{run_check, AuditCheck};
use trcm_core::env::CostFamily;
use trcm_core::harness::{parse_cost_family, run_experiment, ExperimentConfig, RewardKind};
use trcm_core::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_AUDIT_FAILED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "trcm",
    version,
    about = "Truthful reverse contextual bandit auctions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seed sweep and write metrics CSVs and SVG charts.
    Run(RunArgs),
    /// Run incentive and learning audits.
    Audit(AuditArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value config file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    providers: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// Resampling probability.
    #[arg(long)]
    mu: Option<f64>,
    /// Confidence width multiplier.
    #[arg(long)]
    alpha: Option<f64>,
    /// gaussian or exponential
    #[arg(long, value_parser = parse_reward)]
    reward: Option<RewardKind>,
    /// uniform or lognormal
    #[arg(long, value_parser = parse_family)]
    cost_family: Option<CostFamily>,
    #[arg(long)]
    base_seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    /// Check to run; repeat for several. `all` runs every check.
    #[arg(long = "check", default_value = "all")]
    checks: Vec<String>,
    /// Overrides each check's reference trial count.
    #[arg(long)]
    trials: Option<u64>,
    /// Directory for one CSV per check.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_reward(s: &str) -> Result<RewardKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_family(s: &str) -> Result<CostFamily, String> {
    parse_cost_family(s).map_err(|e| e.to_string())
}

fn build_config(args: &RunArgs) -> trcm_core::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.rounds {
        cfg.rounds = v;
    }
    if let Some(v) = args.seeds {
        cfg.seeds = v;
    }
    if let Some(v) = args.providers {
        cfg.providers = v;
    }
    if let Some(v) = args.dim {
        cfg.dim = v;
    }
    if let Some(v) = args.mu {
        cfg.mu = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.reward {
        cfg.reward = v;
    }
    if let Some(v) = args.cost_family {
        cfg.cost_family = v;
    }
    if let Some(v) = args.base_seed {
        cfg.base_seed = v;
    }
    if let Some(v) = &args.out {
        cfg.output_dir = Some(v.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs) -> trcm_core::Result<ExitCode> {
    let cfg = build_config(args)?;
    let result = run_experiment(&cfg)?;
    let last = result.by_round.last().expect("at least one round");
    println!(
        "rounds={} seeds={} mean_cum_regret={} mean_user_utility={} mean_clairvoyant_utility={}",
        cfg.rounds,
        cfg.seeds,
        last.mean_cum_regret,
        last.mean_user_utility,
        last.mean_clairvoyant_utility
    );
    if cfg.rounds >= 20 {
        println!(
            "regret_ratio={} tail_to_head={}",
            result.regret_ratio(),
            result.tail_to_head_regret()
        );
    }
    if let Some(dir) = &cfg.output_dir {
        println!("wrote {}", dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn selected_checks(names: &[String]) -> trcm_core::Result<Vec<AuditCheck>> {
    let mut out = Vec::new();
    for name in names {
        let picked = if name == "all" {
            AuditCheck::ALL.to_vec()
        } else {
            vec![name.parse()?]
        };
        for c in picked {
            if !out.contains(&c) {
                out.push(c);
            }
        }
    }
    Ok(out)
}

fn audit(args: &AuditArgs) -> trcm_core::Result<ExitCode> {
    let checks = selected_checks(&args.checks)?;
    let mut all_passed = true;
    for check in checks {
        let report = run_check(check, args.trials)?;
        println!("{}", report.summary_line());
        if let Some(dir) = &args.out {
            report.write_csv(dir)?;
        }
        all_passed &= report.passed;
    }
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_AUDIT_FAILED)
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match &cli.command {
        Command::Run(args) => run(args),
        Command::Audit(args) => audit(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { EXIT_IO } else { EXIT_VALIDATION })
        }
    }
}
