use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use super::{mean_and_se, AuditReport, TrialRow};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::mechanism::{run_trcm, BidRule, DeviationStrategy, RunTrace, TrcmConfig};

/// One paired comparison: the same seed run with `bid_low` and `bid_high`
/// for `provider`, everyone else truthful, resampling off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityProbe {
    pub seed: u64,
    pub provider: usize,
    pub bid_low: f64,
    pub bid_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeOutcome {
    /// Rounds where the low bid had fewer cumulative wins than the high bid.
    pub violations: u64,
    /// `min_t (count_low(t) − count_high(t))`.
    pub worst_margin: i64,
    pub first_violation: Option<u64>,
    pub final_low: u64,
    pub final_high: u64,
}

fn probe_config(horizon: u64, alpha: f64, provider: usize, bid: f64) -> TrcmConfig {
    TrcmConfig::new(horizon, alpha, 0.5)
        .without_resampling()
        .with_deviation(DeviationStrategy {
            provider,
            rule: BidRule::Fixed(bid),
        })
}

pub fn monotonicity_pair(
    env: &Environment,
    horizon: u64,
    alpha: f64,
    probe: &MonotonicityProbe,
) -> Result<ProbeOutcome> {
    let MonotonicityProbe {
        seed,
        provider,
        bid_low,
        bid_high,
    } = *probe;
    if provider >= env.providers() {
        return Err(Error::param(
            "provider",
            format!("{provider} is out of range"),
        ));
    }
    let dist = &env.cost_dists()[provider];
    for b in [bid_low, bid_high] {
        if !dist.contains(b) {
            return Err(Error::OutsideSupport {
                value: b,
                lo: dist.lower(),
                hi: dist.upper(),
            });
        }
    }
    if bid_low > bid_high {
        return Err(Error::param(
            "bid_low",
            format!("{bid_low} exceeds bid_high {bid_high}"),
        ));
    }
    let low = run_trcm(env, &probe_config(horizon, alpha, provider, bid_low), seed)?;
    let high = run_trcm(env, &probe_config(horizon, alpha, provider, bid_high), seed)?;
    let cl = low.cumulative_allocations(provider);
    let ch = high.cumulative_allocations(provider);
    let mut out = ProbeOutcome {
        violations: 0,
        worst_margin: 0,
        first_violation: None,
        final_low: *cl.last().unwrap_or(&0),
        final_high: *ch.last().unwrap_or(&0),
    };
    for (t, (&l, &h)) in cl.iter().zip(&ch).enumerate() {
        let margin = l as i64 - h as i64;
        out.worst_margin = out.worst_margin.min(margin);
        if margin < 0 {
            out.violations += 1;
            out.first_violation.get_or_insert(t as u64 + 1);
        }
    }
    Ok(out)
}

/// Random probes: uniform seed, provider, and an ordered pair of bids drawn
/// uniformly from the provider's cost support.
pub fn random_probes(env: &Environment, n: usize, rng_seed: u64) -> Vec<MonotonicityProbe> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);
    (0..n)
        .map(|_| {
            let seed = rng.random::<u32>() as u64;
            let provider = rng.random_range(0..env.providers());
            let d = &env.cost_dists()[provider];
            let a = rng.random_range(d.lower()..=d.upper());
            let b = rng.random_range(d.lower()..=d.upper());
            MonotonicityProbe {
                seed,
                provider,
                bid_low: a.min(b),
                bid_high: a.max(b),
            }
        })
        .collect()
}

/// Exact paired check: every probe must show at least as many cumulative
/// wins under the lower bid at every round.
pub fn monotonicity_audit(
    env: &Environment,
    horizon: u64,
    alpha: f64,
    probes: &[MonotonicityProbe],
) -> Result<AuditReport> {
    let outcomes = probes
        .par_iter()
        .map(|p| monotonicity_pair(env, horizon, alpha, p))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<TrialRow> = probes
        .iter()
        .zip(&outcomes)
        .enumerate()
        .map(|(k, (p, o))| TrialRow {
            trial: k as u64,
            setting: format!(
                "seed={};provider={};low={};high={};first_violation={}",
                p.seed,
                p.provider,
                p.bid_low,
                p.bid_high,
                o.first_violation
                    .map_or("none".to_string(), |t| t.to_string())
            ),
            value: o.worst_margin as f64,
            standard_error: 0.0,
            violations: o.violations,
        })
        .collect();
    let violations: u64 = outcomes.iter().map(|o| o.violations).sum();
    let bad_probes = outcomes.iter().filter(|o| o.violations > 0).count();
    let worst = outcomes.iter().map(|o| o.worst_margin).min().unwrap_or(0);
    Ok(AuditReport {
        check: "monotonicity",
        trials: probes.len() as u64,
        violations,
        worst_margin: worst as f64,
        standard_error: 0.0,
        passed: violations == 0,
        detail: format!("horizon={horizon} violating_probes={bad_probes}"),
        rows,
    })
}

/// Paired probes of one bid pair over several seeds.
pub fn monotonicity_probe(
    env: &Environment,
    horizon: u64,
    alpha: f64,
    provider: usize,
    bid_low: f64,
    bid_high: f64,
    seeds: &[u64],
) -> Result<AuditReport> {
    let probes: Vec<MonotonicityProbe> = seeds
        .iter()
        .map(|&seed| MonotonicityProbe {
            seed,
            provider,
            bid_low,
            bid_high,
        })
        .collect();
    monotonicity_audit(env, horizon, alpha, &probes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpicConfig {
    pub horizon: u64,
    pub alpha: f64,
    pub mu: f64,
    pub provider: usize,
    /// True costs of all providers; `costs[provider]` must be on the grid.
    pub costs: Vec<f64>,
    pub grid: Vec<f64>,
    pub trials: u64,
    pub base_seed: u64,
}

/// `points` evenly spaced bids covering the provider's cost support.
pub fn epic_grid(env: &Environment, provider: usize, points: usize) -> Vec<f64> {
    let d = &env.cost_dists()[provider];
    let (lo, hi) = (d.lower(), d.upper());
    if points < 2 {
        return vec![0.5 * (lo + hi)];
    }
    (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
        .collect()
}

impl EpicConfig {
    /// Two-round-robin reference: `T = 500`, `μ = 0.1`, 11-point grid for
    /// provider 0 whose true cost is the grid midpoint; other providers sit at
    /// the midpoint of their support.
    pub fn reference(env: &Environment, trials: u64) -> Self {
        let grid = epic_grid(env, 0, 11);
        let mut costs: Vec<f64> = env
            .cost_dists()
            .iter()
            .map(|d| 0.5 * (d.lower() + d.upper()))
            .collect();
        costs[0] = grid[grid.len() / 2];
        Self {
            horizon: 500,
            alpha: 0.75,
            mu: 0.1,
            provider: 0,
            costs,
            grid,
            trials,
            base_seed: 0,
        }
    }
}

/// Monte Carlo utility of each grid bid with everyone else truthful.
///
/// Each grid point gets its own block of run seeds, so estimates are
/// independent and the comparison uses the standard error of a difference.
pub fn epic_estimate(env: &Environment, cfg: &EpicConfig) -> Result<AuditReport> {
    let i = cfg.provider;
    if i >= env.providers() {
        return Err(Error::param("provider", format!("{i} is out of range")));
    }
    if cfg.trials < 1000 {
        return Err(Error::param(
            "trials",
            "at least 1000 trials per grid point are required",
        ));
    }
    let c_upper = env.cost_dists()[i].upper();
    if let Some(&b) = cfg.grid.iter().find(|&&b| !(0.0..=c_upper).contains(&b)) {
        return Err(Error::OutsideSupport {
            value: b,
            lo: 0.0,
            hi: c_upper,
        });
    }
    let truth = cfg
        .grid
        .iter()
        .position(|&b| b == cfg.costs[i])
        .ok_or_else(|| Error::param("grid", "must contain the true cost"))?;

    let estimates = cfg
        .grid
        .iter()
        .enumerate()
        .map(|(k, &b)| {
            let trcm = TrcmConfig::new(cfg.horizon, cfg.alpha, cfg.mu)
                .with_costs(cfg.costs.clone())
                .with_deviation(DeviationStrategy {
                    provider: i,
                    rule: BidRule::Fixed(b),
                });
            let first = cfg.base_seed + k as u64 * cfg.trials;
            let utilities = (first..first + cfg.trials)
                .into_par_iter()
                .map(|seed| run_trcm(env, &trcm, seed).map(|t| t.provider_utility(i)))
                .collect::<Result<Vec<_>>>()?;
            Ok(mean_and_se(&utilities))
        })
        .collect::<Result<Vec<_>>>()?;

    let (u_truth, se_truth) = estimates[truth];
    let mut worst = f64::INFINITY;
    let mut worst_se = 0.0;
    let mut violations = 0;
    let rows = cfg
        .grid
        .iter()
        .zip(&estimates)
        .enumerate()
        .map(|(k, (&b, &(u, se)))| {
            let se_diff = (se * se + se_truth * se_truth).sqrt();
            let margin = u_truth - u + 2.0 * se_diff;
            let bad = u64::from(margin < 0.0);
            violations += bad;
            if margin < worst {
                worst = margin;
                worst_se = se_diff;
            }
            TrialRow {
                trial: k as u64,
                setting: format!("bid={b};truthful={}", k == truth),
                value: u,
                standard_error: se,
                violations: bad,
            }
        })
        .collect();
    let best = estimates
        .iter()
        .map(|e| e.0)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(AuditReport {
        check: "epic",
        trials: cfg.trials,
        violations,
        worst_margin: worst,
        standard_error: worst_se,
        passed: violations == 0,
        detail: format!("truthful_utility={u_truth} best_utility={best}"),
        rows,
    })
}

/// `p_{i,t} − c_i·A_{i,t} ≥ 0` for every provider and round of a truthful
/// trace, with zero tolerance.
pub fn epir_check(trace: &RunTrace) -> Result<AuditReport> {
    if trace.bids().zip(&trace.true_costs).any(|(b, &c)| b != c) {
        return Err(Error::param("trace", "bids must be truthful"));
    }
    let m = trace.true_costs.len();
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for r in &trace.rounds {
        for i in 0..m {
            let u = if r.winner == Some(i) {
                r.payment - trace.true_costs[i]
            } else {
                0.0
            };
            worst = worst.min(u);
            violations += u64::from(u < 0.0);
        }
    }
    Ok(AuditReport {
        check: "epir",
        trials: 1,
        violations,
        worst_margin: worst,
        standard_error: 0.0,
        passed: violations == 0,
        detail: format!("seed={} rounds={}", trace.seed, trace.rounds.len()),
        rows: vec![TrialRow {
            trial: trace.seed,
            setting: format!("seed={}", trace.seed),
            value: worst,
            standard_error: 0.0,
            violations,
        }],
    })
}

/// [`epir_check`] over one truthful run per seed.
pub fn epir_sweep(env: &Environment, trcm: &TrcmConfig, seeds: &[u64]) -> Result<AuditReport> {
    if trcm.deviation.is_some() {
        return Err(Error::param(
            "deviation",
            "EPIR is checked under truthful bids",
        ));
    }
    let reports = seeds
        .par_iter()
        .map(|&s| run_trcm(env, trcm, s).and_then(|t| epir_check(&t)))
        .collect::<Result<Vec<_>>>()?;
    let violations = reports.iter().map(|r| r.violations).sum();
    Ok(AuditReport {
        check: "epir",
        trials: seeds.len() as u64,
        violations,
        worst_margin: reports
            .iter()
            .map(|r| r.worst_margin)
            .fold(f64::INFINITY, f64::min),
        standard_error: 0.0,
        passed: violations == 0,
        detail: format!("horizon={}", trcm.horizon),
        rows: reports.into_iter().flat_map(|r| r.rows).collect(),
    })
}

/// Paired runs with and without resampling on the same seed; a trial agrees
/// when the two allocation sequences are identical.
///
/// Passes when the agreement rate is at least `1 − Mμ − 2·SE`, lies within
/// `3·SE` of `(1 − μ)^M`, and no trial without any resampled bid disagrees.
/// SE is the binomial standard error at `(1 − μ)^M`.
pub fn agreement_rate(
    env: &Environment,
    horizon: u64,
    alpha: f64,
    mu: f64,
    trials: u64,
    base_seed: u64,
) -> Result<AuditReport> {
    if trials < 1000 {
        return Err(Error::param(
            "trials",
            "at least 1000 paired trials are required",
        ));
    }
    let with = TrcmConfig::new(horizon, alpha, mu);
    let without = with.clone().without_resampling();
    let pairs = (base_seed..base_seed + trials)
        .into_par_iter()
        .map(|seed| {
            let a = run_trcm(env, &with, seed)?;
            let b = run_trcm(env, &without, seed)?;
            Ok((seed, a.resample_count(), a.winners().eq(b.winners())))
        })
        .collect::<Result<Vec<_>>>()?;

    let m = env.providers() as i32;
    let expected = (1.0 - mu).powi(m);
    let n = trials as f64;
    let se = (expected * (1.0 - expected) / n).sqrt();
    let agreed = pairs.iter().filter(|p| p.2).count() as f64;
    let rate = agreed / n;
    let implication_violations = pairs.iter().filter(|p| p.1 == 0 && !p.2).count() as u64;
    let floor = 1.0 - m as f64 * mu;
    let lower_margin = rate - (floor - 2.0 * se);
    let location_margin = 3.0 * se - (rate - expected).abs();
    let passed = implication_violations == 0 && lower_margin >= 0.0 && location_margin >= 0.0;
    Ok(AuditReport {
        check: "agreement",
        trials,
        violations: implication_violations,
        worst_margin: lower_margin.min(location_margin),
        standard_error: se,
        passed,
        detail: format!("rate={rate} expected={expected} floor={floor}"),
        rows: pairs
            .iter()
            .enumerate()
            .map(|(k, &(seed, resampled, same))| TrialRow {
                trial: k as u64,
                setting: format!("seed={seed};resampled={resampled}"),
                value: if same { 1.0 } else { 0.0 },
                standard_error: 0.0,
                violations: u64::from(resampled == 0 && !same),
            })
            .collect(),
    })
}
