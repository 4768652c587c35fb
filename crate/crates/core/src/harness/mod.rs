//! Seed sweeps of the mechanism against a clairvoyant benchmark.

mod config;
mod output;
mod plot;

use rayon::prelude::*;

pub use config::{parse_cost_family, ExperimentConfig, RewardKind, GAUSSIAN_NOISE};
pub use output::{
    write_metrics_csv, write_outputs, write_summary_csv, METRICS_HEADER, SUMMARY_HEADER,
};
pub use plot::{render_plot, PlotKind};

use crate::auction::argmax_lowest;
use crate::bandit::Branch;
use crate::env::Environment;
use crate::error::Result;
use crate::mechanism::{run_trcm, RunTrace};

/// Provider maximizing `v_i − Ψ_i`, or `None` if every surplus is negative.
pub fn oracle_choice(values: &[f64], virtual_costs: &[f64]) -> Option<usize> {
    argmax_lowest(
        values
            .iter()
            .zip(virtual_costs)
            .map(|(v, p)| v - p)
            .enumerate(),
    )
    .filter(|&(_, s)| s >= 0.0)
    .map(|(i, _)| i)
}

/// Oracle surplus minus the surplus of `chosen`, each taken as zero when no
/// provider is allocated.
pub fn instantaneous_regret(values: &[f64], virtual_costs: &[f64], chosen: Option<usize>) -> f64 {
    let surplus = |i: Option<usize>| i.map_or(0.0, |i| values[i] - virtual_costs[i]);
    surplus(oracle_choice(values, virtual_costs)) - surplus(chosen)
}

/// Per-round record of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub winner: Option<usize>,
    pub branch: Branch,
    pub payment: f64,
    pub instantaneous_regret: f64,
    pub cumulative_regret: f64,
    /// `v_w − p_w`, zero without a winner.
    pub user_utility: f64,
    /// `max(0, max_i v_i − b_i)`: the best the user could get paying bids.
    pub clairvoyant_utility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub seed: u64,
    pub rounds: Vec<RoundMetrics>,
    pub total_regret: f64,
    pub total_utility: f64,
    pub total_clairvoyant: f64,
    pub total_payments: f64,
    pub resample_count: usize,
}

impl RunMetrics {
    pub fn from_trace(trace: &RunTrace) -> Self {
        let bids: Vec<f64> = trace.bids().collect();
        let mut cumulative = 0.0;
        let (mut utility, mut clairvoyant, mut payments) = (0.0, 0.0, 0.0);
        let rounds = trace
            .rounds
            .iter()
            .map(|o| {
                let v = &o.expected_values;
                let regret = instantaneous_regret(v, &trace.virtual_costs, o.winner);
                cumulative += regret;
                let user = o.winner.map_or(0.0, |w| v[w] - o.payment);
                let best = v.iter().zip(&bids).map(|(v, b)| v - b).fold(0.0, f64::max);
                utility += user;
                clairvoyant += best;
                payments += o.payment;
                RoundMetrics {
                    winner: o.winner,
                    branch: o.branch,
                    payment: o.payment,
                    instantaneous_regret: regret,
                    cumulative_regret: cumulative,
                    user_utility: user,
                    clairvoyant_utility: best,
                }
            })
            .collect();
        Self {
            seed: trace.seed,
            rounds,
            total_regret: cumulative,
            total_utility: utility,
            total_clairvoyant: clairvoyant,
            total_payments: payments,
            resample_count: trace.resample_count(),
        }
    }
}

/// Cross-seed means for one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundAggregate {
    pub round: u64,
    pub mean_cum_regret: f64,
    pub mean_round_regret: f64,
    pub mean_user_utility: f64,
    pub mean_clairvoyant_utility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub total_regret: f64,
    pub total_utility: f64,
    pub total_payments: f64,
    pub resample_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub by_round: Vec<RoundAggregate>,
    pub runs: Vec<RunSummary>,
}

impl ExperimentResult {
    /// `R_T / R_{T/2}` of the mean cumulative regret curve.
    pub fn regret_ratio(&self) -> f64 {
        let t = self.by_round.len();
        self.by_round[t - 1].mean_cum_regret / self.by_round[t / 2 - 1].mean_cum_regret
    }

    /// Mean per-round regret over the last tenth of the horizon divided by
    /// that over the first tenth.
    pub fn tail_to_head_regret(&self) -> f64 {
        let t = self.by_round.len();
        let k = (t / 10).max(1);
        let mean = |rows: &[RoundAggregate]| {
            rows.iter().map(|r| r.mean_round_regret).sum::<f64>() / rows.len() as f64
        };
        mean(&self.by_round[t - k..]) / mean(&self.by_round[..k])
    }
}

/// Mean of per-round metrics over runs, reduced in run order.
pub fn aggregate(runs: &[RunMetrics]) -> Vec<RoundAggregate> {
    let horizon = runs.first().map_or(0, |r| r.rounds.len());
    let n = runs.len() as f64;
    let mut user = vec![0.0; runs.len()];
    let mut oracle = vec![0.0; runs.len()];
    (0..horizon)
        .map(|t| {
            let (mut cum, mut inst, mut u, mut c) = (0.0, 0.0, 0.0, 0.0);
            for (k, run) in runs.iter().enumerate() {
                let r = &run.rounds[t];
                user[k] += r.user_utility;
                oracle[k] += r.clairvoyant_utility;
                cum += r.cumulative_regret;
                inst += r.instantaneous_regret;
                u += user[k];
                c += oracle[k];
            }
            RoundAggregate {
                round: t as u64 + 1,
                mean_cum_regret: cum / n,
                mean_round_regret: inst / n,
                mean_user_utility: u / n,
                mean_clairvoyant_utility: c / n,
            }
        })
        .collect()
}

/// Runs `config.seeds` independent runs in parallel and aggregates them;
/// writes CSVs and plots when `config.output_dir` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let env = Environment::synthetic(&config.env_spec())?;
    let trcm = config.trcm();
    let seeds: Vec<u64> = config.run_seeds().collect();
    let runs = seeds
        .par_iter()
        .map(|&seed| run_trcm(&env, &trcm, seed).map(|trace| RunMetrics::from_trace(&trace)))
        .collect::<Result<Vec<_>>>()?;
    let result = ExperimentResult {
        by_round: aggregate(&runs),
        runs: runs
            .iter()
            .map(|r| RunSummary {
                seed: r.seed,
                total_regret: r.total_regret,
                total_utility: r.total_utility,
                total_payments: r.total_payments,
                resample_count: r.resample_count,
            })
            .collect(),
    };
    if let Some(dir) = &config.output_dir {
        write_outputs(&result, dir)?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_examples() {
        assert_eq!(oracle_choice(&[0.5], &[0.2]), Some(0));
        assert_eq!(oracle_choice(&[0.1, 0.2], &[0.5, 0.6]), None);
        assert_eq!(oracle_choice(&[0.5, 0.4], &[0.0, 0.0]), Some(0));
        assert_eq!(oracle_choice(&[0.4, 0.5], &[0.0, 0.1]), Some(0));
    }

    #[test]
    fn regret_examples() {
        let v = [0.5, 0.4];
        let p = [0.0, 0.0];
        assert_eq!(instantaneous_regret(&v, &p, Some(0)), 0.0);
        assert!((instantaneous_regret(&v, &p, Some(1)) - 0.1).abs() < 1e-15);
        assert_eq!(instantaneous_regret(&[0.1], &[0.5], None), 0.0);
        assert_eq!(instantaneous_regret(&v, &p, None), 0.5);
        // Allocating into a negative surplus is charged in full.
        assert!((instantaneous_regret(&[0.1], &[0.5], Some(0)) - 0.4).abs() < 1e-15);
    }

    fn small(seeds: u64) -> ExperimentConfig {
        ExperimentConfig {
            rounds: 300,
            seeds,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn run_metrics_invariants() {
        let res = run_experiment(&small(4)).unwrap();
        assert_eq!(res.by_round.len(), 300);
        assert_eq!(res.runs.len(), 4);
        for w in res.by_round.windows(2) {
            assert!(w[1].mean_cum_regret >= w[0].mean_cum_regret);
        }
        for r in &res.by_round {
            assert!(r.mean_round_regret >= 0.0);
            assert!(r.mean_user_utility <= r.mean_clairvoyant_utility + 1e-9);
        }
        let last = res.by_round.last().unwrap();
        let mean_total: f64 = res.runs.iter().map(|r| r.total_regret).sum::<f64>() / 4.0;
        assert!((last.mean_cum_regret - mean_total).abs() < 1e-9);
    }

    #[test]
    fn aggregation_does_not_depend_on_thread_count() {
        let cfg = small(6);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let serial = pool.install(|| run_experiment(&cfg).unwrap());
        assert_eq!(serial, run_experiment(&cfg).unwrap());
    }

    #[test]
    fn rejects_invalid_config() {
        assert!(run_experiment(&ExperimentConfig {
            seeds: 0,
            ..small(1)
        })
        .is_err());
    }
}
