use rayon::prelude::*;

use super::{AuditReport, TrialRow};
use crate::bandit::{Branch, SelectorConfig};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::mechanism::{run_trcm_observed, TrcmConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaConfig {
    pub horizon: u64,
    pub kappa: f64,
    pub mu: f64,
    pub runs: u64,
    pub base_seed: u64,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        Self {
            horizon: 5000,
            kappa: 0.05,
            mu: 0.05,
            runs: 5,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct RunCounts {
    sandwich_checks: u64,
    sandwich_misses: u64,
    retention_misses: u64,
    exploit_bound_misses: u64,
}

fn instrumented_run(env: &Environment, cfg: &LemmaConfig, seed: u64) -> Result<RunCounts> {
    let m = env.providers();
    let alpha = SelectorConfig::theory_alpha(cfg.horizon, m, cfg.kappa);
    let trcm = TrcmConfig::new(cfg.horizon, alpha, cfg.mu);
    let mut c = RunCounts::default();
    let trace = run_trcm_observed(env, &trcm, seed, |view| {
        for i in 0..m {
            for s in 1..=view.state.max_stage() {
                let e = view.state.estimate(i, s, view.context);
                c.sandwich_checks += 1;
                if (e.value - view.expected_values[i]).abs() > e.width {
                    c.sandwich_misses += 1;
                }
            }
        }
        let best = (0..m)
            .map(|i| (i, view.expected_values[i] - view.virtual_costs[i]))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
            .0;
        if !view.decision.final_active().contains(&best) {
            c.retention_misses += 1;
        }
    })?;
    let stages = SelectorConfig {
        providers: m,
        dim: env.dim(),
        horizon: cfg.horizon,
        alpha,
    }
    .max_stage();
    for s in 1..=stages {
        let within = trace
            .rounds
            .iter()
            .filter(|r| r.branch == Branch::WithinStageExploit { stage: s })
            .count() as u64;
        let explored = trace
            .rounds
            .iter()
            .filter(|r| r.branch == Branch::ForcedExploration { stage: s })
            .count() as u64;
        if within > (m as u64 - 1) * explored {
            c.exploit_bound_misses += 1;
        }
    }
    Ok(c)
}

/// Instrumented runs at the theory exploration scale
/// `α = sqrt(½ ln(2TM/κ))` with true values known.
///
/// Per round it checks (i) `|v̂ − v| ≤ w` for every provider and stage, and
/// (ii) that the oracle's choice survives into the deciding stage's active
/// set. At the end it checks (iii) `|Λ_est^s| ≤ (M−1)·|Λ^s|` per stage.
/// Passes when (i) and (ii) fail in at most a `κ` fraction of checks and (iii)
/// never fails.
pub fn lemma_instrumentation(env: &Environment, cfg: &LemmaConfig) -> Result<AuditReport> {
    if !(cfg.kappa > 0.0 && cfg.kappa < 1.0) {
        return Err(Error::param("kappa", "must lie in (0, 1)"));
    }
    if cfg.runs == 0 {
        return Err(Error::param("runs", "must be at least 1"));
    }
    let seeds: Vec<u64> = (cfg.base_seed..cfg.base_seed + cfg.runs).collect();
    let counts = seeds
        .par_iter()
        .map(|&s| instrumented_run(env, cfg, s))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(3 * counts.len());
    for (k, (&seed, c)) in seeds.iter().zip(&counts).enumerate() {
        let base = 3 * k as u64;
        rows.push(TrialRow {
            trial: base,
            setting: format!("seed={seed};check=sandwich"),
            value: c.sandwich_misses as f64 / c.sandwich_checks as f64,
            standard_error: 0.0,
            violations: c.sandwich_misses,
        });
        rows.push(TrialRow {
            trial: base + 1,
            setting: format!("seed={seed};check=retention"),
            value: c.retention_misses as f64 / cfg.horizon as f64,
            standard_error: 0.0,
            violations: c.retention_misses,
        });
        rows.push(TrialRow {
            trial: base + 2,
            setting: format!("seed={seed};check=exploit-bound"),
            value: c.exploit_bound_misses as f64,
            standard_error: 0.0,
            violations: c.exploit_bound_misses,
        });
    }
    let total = |f: fn(&RunCounts) -> u64| counts.iter().map(f).sum::<u64>();
    let sandwich_rate = total(|c| c.sandwich_misses) as f64 / total(|c| c.sandwich_checks) as f64;
    let retention_rate = total(|c| c.retention_misses) as f64 / (cfg.horizon * cfg.runs) as f64;
    let bound_misses = total(|c| c.exploit_bound_misses);
    let margin = (cfg.kappa - sandwich_rate).min(cfg.kappa - retention_rate);
    Ok(AuditReport {
        check: "lemmas",
        trials: cfg.runs,
        violations: bound_misses,
        worst_margin: if bound_misses > 0 { -(bound_misses as f64) } else { margin },
        standard_error: 0.0,
        passed: bound_misses == 0 && margin >= 0.0,
        detail: format!("sandwich_rate={sandwich_rate} retention_rate={retention_rate} exploit_bound_violations={bound_misses}"),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvSpec;

    #[test]
    fn single_provider_never_exploits_within_a_stage() {
        let env = Environment::synthetic(&EnvSpec {
            providers: 1,
            dim: 3,
            ..EnvSpec::default()
        })
        .unwrap();
        let r = lemma_instrumentation(
            &env,
            &LemmaConfig {
                horizon: 600,
                runs: 2,
                ..LemmaConfig::default()
            },
        )
        .unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.passed, "{}", r.summary_line());
    }

    #[test]
    fn short_runs_pass() {
        let env = Environment::synthetic(&EnvSpec {
            providers: 3,
            dim: 3,
            ..EnvSpec::default()
        })
        .unwrap();
        let r = lemma_instrumentation(
            &env,
            &LemmaConfig {
                horizon: 800,
                runs: 2,
                ..LemmaConfig::default()
            },
        )
        .unwrap();
        assert!(r.passed, "{}", r.summary_line());
        assert_eq!(r.rows.len(), 6);
    }

    #[test]
    fn rejects_bad_kappa() {
        let env = Environment::synthetic(&EnvSpec::default()).unwrap();
        let cfg = LemmaConfig {
            kappa: 0.0,
            ..LemmaConfig::default()
        };
        assert!(lemma_instrumentation(&env, &cfg).is_err());
    }
}
