use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use super::{AuditReport, TrialRow};
use crate::bandit::SelectorState;
use crate::env::{CostDistribution, Environment};
use crate::error::{Error, Result};
use crate::mechanism::{rosa, run_trcm_observed, TrcmConfig};

pub const QUADRATURE_POINTS: usize = 10_000;

/// Relative tolerance between the Monte Carlo premium and the integral.
const TOLERANCE: f64 = 0.05;

/// A single-round allocation rule for one provider with everything except
/// that provider's bid held fixed.
pub trait FrozenAllocation: Send + Sync {
    /// Whether the provider is allocated when it reports `u`.
    fn allocated(&self, u: f64) -> bool;
    fn bid(&self) -> f64;
    fn cost_upper(&self) -> f64;
    fn describe(&self) -> String;
}

/// `A(u) = 1{u ≤ threshold}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdAllocation {
    pub bid: f64,
    pub threshold: f64,
    pub cost_upper: f64,
}

impl FrozenAllocation for ThresholdAllocation {
    fn allocated(&self, u: f64) -> bool {
        u <= self.threshold
    }

    fn bid(&self) -> f64 {
        self.bid
    }

    fn cost_upper(&self) -> f64 {
        self.cost_upper
    }

    fn describe(&self) -> String {
        format!(
            "threshold;bid={};z={};upper={}",
            self.bid, self.threshold, self.cost_upper
        )
    }
}

/// The staged selector frozen at one round of a run: learner state, context,
/// round index and the other providers' virtual costs are fixed, and the
/// provider's report `u` enters through `Ψ(u)`.
#[derive(Debug, Clone)]
pub struct FrozenSelector {
    pub state: SelectorState,
    pub context: Vec<f64>,
    pub virtual_costs: Vec<f64>,
    pub round: u64,
    pub provider: usize,
    pub dist: CostDistribution,
    pub bid: f64,
}

impl FrozenSelector {
    /// Runs a truthful, resampling-free mechanism on `seed` and freezes the
    /// selector just before round `at_round` is recorded.
    pub fn capture(
        env: &Environment,
        horizon: u64,
        alpha: f64,
        seed: u64,
        at_round: u64,
        provider: usize,
    ) -> Result<Self> {
        if at_round == 0 || at_round > horizon {
            return Err(Error::param(
                "at_round",
                format!("{at_round} outside [1, {horizon}]"),
            ));
        }
        if provider >= env.providers() {
            return Err(Error::param(
                "provider",
                format!("{provider} is out of range"),
            ));
        }
        let cfg = TrcmConfig::new(horizon, alpha, 0.5).without_resampling();
        let mut frozen = None;
        let trace = run_trcm_observed(env, &cfg, seed, |view| {
            if view.round == at_round {
                frozen = Some((
                    view.state.clone(),
                    view.context.to_vec(),
                    view.virtual_costs.to_vec(),
                ));
            }
        })?;
        let (state, context, virtual_costs) =
            frozen.ok_or_else(|| Error::Invariant("round never reached".into()))?;
        Ok(Self {
            state,
            context,
            virtual_costs,
            round: at_round,
            provider,
            dist: env.cost_dists()[provider].clone(),
            bid: trace.true_costs[provider],
        })
    }
}

impl FrozenAllocation for FrozenSelector {
    fn allocated(&self, u: f64) -> bool {
        let mut vcs = self.virtual_costs.clone();
        vcs[self.provider] = self.dist.virtual_cost_unchecked(u);
        self.state
            .select_provider(&self.context, &vcs, self.round)
            .map(|d| d.winner == self.provider)
            .unwrap_or(false)
    }

    fn bid(&self) -> f64 {
        self.bid
    }

    fn cost_upper(&self) -> f64 {
        self.dist.upper()
    }

    fn describe(&self) -> String {
        format!(
            "selector;round={};provider={};bid={};upper={}",
            self.round,
            self.provider,
            self.bid,
            self.dist.upper()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaymentIdentityResult {
    pub monte_carlo: f64,
    pub standard_error: f64,
    pub integral: f64,
    pub relative_error: f64,
    pub passed: bool,
}

/// Midpoint rule for `∫_b^{c̄} A(u) du`.
fn allocation_integral(setup: &dyn FrozenAllocation) -> f64 {
    let (b, c_upper) = (setup.bid(), setup.cost_upper());
    let h = (c_upper - b) / QUADRATURE_POINTS as f64;
    if h <= 0.0 {
        return 0.0;
    }
    let hits = (0..QUADRATURE_POINTS)
        .filter(|&k| setup.allocated(b + (k as f64 + 0.5) * h))
        .count();
    hits as f64 * h
}

/// Compares the premium `R = 1{resampled}·A(b̃)·(c̄ − b)/μ`, averaged over
/// `n_samples` resampling draws, with `∫_b^{c̄} A(u) du`.
pub fn payment_identity(
    setup: &dyn FrozenAllocation,
    mu: f64,
    n_samples: u64,
    seed: u64,
) -> Result<PaymentIdentityResult> {
    if n_samples < 2 {
        return Err(Error::param(
            "n_samples",
            "at least two samples are required",
        ));
    }
    let (b, c_upper) = (setup.bid(), setup.cost_upper());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let premium = (c_upper - b) / mu;
    let mut hits = 0u64;
    for _ in 0..n_samples {
        let r = rosa(b, mu, c_upper, &mut rng)?;
        if r.resampled && setup.allocated(r.modified_bid) {
            hits += 1;
        }
    }
    let n = n_samples as f64;
    let p = hits as f64 / n;
    let monte_carlo = premium * p;
    let standard_error = premium * (p * (1.0 - p) / (n - 1.0)).sqrt();
    let integral = allocation_integral(setup);
    let (relative_error, passed) = if integral > 0.0 {
        let rel = (monte_carlo - integral).abs() / integral;
        (rel, rel <= TOLERANCE)
    } else {
        (monte_carlo, monte_carlo == 0.0)
    };
    Ok(PaymentIdentityResult {
        monte_carlo,
        standard_error,
        integral,
        relative_error,
        passed,
    })
}

/// [`payment_identity`] on every setup; passes when each setup does.
pub fn payment_identity_check(
    setups: &[Box<dyn FrozenAllocation>],
    mu: f64,
    n_samples: u64,
    seed: u64,
) -> Result<AuditReport> {
    let results = setups
        .par_iter()
        .enumerate()
        .map(|(k, s)| payment_identity(s.as_ref(), mu, n_samples, seed.wrapping_add(k as u64)))
        .collect::<Result<Vec<_>>>()?;
    let violations = results.iter().filter(|r| !r.passed).count() as u64;
    let (worst_idx, worst) = results
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let margin = if r.integral > 0.0 {
                TOLERANCE - r.relative_error
            } else {
                -r.monte_carlo
            };
            (k, margin)
        })
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    Ok(AuditReport {
        check: "payment-identity",
        trials: setups.len() as u64,
        violations,
        worst_margin: worst,
        standard_error: results.get(worst_idx).map_or(0.0, |r| r.standard_error),
        passed: violations == 0,
        detail: format!("mu={mu} samples={n_samples} tolerance={TOLERANCE}"),
        rows: setups
            .iter()
            .zip(&results)
            .enumerate()
            .map(|(k, (s, r))| TrialRow {
                trial: k as u64,
                setting: format!("{};integral={}", s.describe(), r.integral),
                value: r.monte_carlo,
                standard_error: r.standard_error,
                violations: u64::from(!r.passed),
            })
            .collect(),
    })
}

/// `n` setups. Even indices are threshold rules with `b < z < c̄`, where
/// `z` lies in the upper 80% of `[b, c̄]` so the integral is resolvable by
/// the Monte Carlo side. Odd indices freeze the selector at a random round of
/// a 1000-round run, for the provider that won that round.
pub fn random_frozen_setups(
    env: &Environment,
    n: usize,
    seed: u64,
) -> Result<Vec<Box<dyn FrozenAllocation>>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let horizon = 1000;
    let mut out: Vec<Box<dyn FrozenAllocation>> = Vec::with_capacity(n);
    for k in 0..n {
        if k % 2 == 0 {
            let c_upper = rng.random_range(1.0..10.0);
            let bid = rng.random_range(0.0..0.5 * c_upper);
            let threshold = rng.random_range(bid + 0.2 * (c_upper - bid)..c_upper);
            out.push(Box::new(ThresholdAllocation {
                bid,
                threshold,
                cost_upper: c_upper,
            }));
        } else {
            let run_seed = rng.random::<u32>() as u64;
            let at_round = rng.random_range(1..=horizon);
            let cfg = TrcmConfig::new(horizon, 0.75, 0.5).without_resampling();
            let trace = crate::mechanism::run_trcm(env, &cfg, run_seed)?;
            let provider = trace.rounds[at_round as usize - 1]
                .winner
                .ok_or(Error::NoWinner)?;
            out.push(Box::new(FrozenSelector::capture(
                env, horizon, 0.75, run_seed, at_round, provider,
            )?));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvSpec;

    #[test]
    fn threshold_example_integrates_to_four() {
        let s = ThresholdAllocation {
            bid: 2.0,
            threshold: 6.0,
            cost_upper: 10.0,
        };
        assert!((allocation_integral(&s) - 4.0).abs() < 1e-3);
        for mu in [0.2, 0.5, 0.9] {
            let r = payment_identity(&s, mu, 100_000, 1).unwrap();
            assert!(r.passed, "{r:?}");
            assert!((r.monte_carlo - 4.0).abs() < 4.0 * r.standard_error);
        }
    }

    #[test]
    fn bid_at_upper_cost_gives_zero_on_both_sides() {
        let s = ThresholdAllocation {
            bid: 10.0,
            threshold: 10.0,
            cost_upper: 10.0,
        };
        let r = payment_identity(&s, 0.3, 1000, 2).unwrap();
        assert_eq!(r.integral, 0.0);
        assert_eq!(r.monte_carlo, 0.0);
        assert!(r.passed);
    }

    #[test]
    fn never_allocated_above_the_bid() {
        let s = ThresholdAllocation {
            bid: 3.0,
            threshold: 1.0,
            cost_upper: 10.0,
        };
        let r = payment_identity(&s, 0.4, 10_000, 3).unwrap();
        assert_eq!(r.integral, 0.0);
        assert_eq!(r.monte_carlo, 0.0);
        assert!(r.passed);
    }

    #[test]
    fn frozen_selector_replays_the_recorded_round() {
        let env = Environment::synthetic(&EnvSpec::default()).unwrap();
        let cfg = TrcmConfig::new(1000, 0.75, 0.5).without_resampling();
        let trace = crate::mechanism::run_trcm(&env, &cfg, 4).unwrap();
        for (round, provider) in [(1, 0), (37, 2), (600, 1), (999, 3)] {
            let f = FrozenSelector::capture(&env, 1000, 0.75, 4, round, provider).unwrap();
            let winner = trace.rounds[round as usize - 1].winner;
            assert_eq!(f.allocated(f.bid), winner == Some(provider));
        }
    }

    #[test]
    fn capture_validates_arguments() {
        let env = Environment::synthetic(&EnvSpec::default()).unwrap();
        assert!(FrozenSelector::capture(&env, 100, 0.75, 0, 0, 0).is_err());
        assert!(FrozenSelector::capture(&env, 100, 0.75, 0, 101, 0).is_err());
        assert!(FrozenSelector::capture(&env, 100, 0.75, 0, 5, 9).is_err());
    }

    #[test]
    fn small_suite_passes() {
        let env = Environment::synthetic(&EnvSpec::default()).unwrap();
        let setups = random_frozen_setups(&env, 4, 5).unwrap();
        let r = payment_identity_check(&setups, 0.5, 50_000, 9).unwrap();
        assert!(r.passed, "{}", r.summary_line());
        assert_eq!(r.rows.len(), 4);
    }
}
