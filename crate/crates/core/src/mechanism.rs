//! Bid resampling, premium payments and the composed procurement mechanism.

use rand::Rng;

use crate::bandit::{Branch, SelectionDecision, SelectorConfig, SelectorState};
use crate::env::Environment;
use crate::error::{check_len, Error, Result};
use crate::seed::{stream_rng, Stream};

/// Outcome of one self-resampling draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleRecord {
    pub original_bid: f64,
    pub modified_bid: f64,
    pub resampled: bool,
    pub gamma: f64,
    pub mu: f64,
    pub cost_upper: f64,
}

impl ResampleRecord {
    /// A record that leaves the bid untouched.
    pub fn identity(bid: f64, cost_upper: f64) -> Self {
        Self {
            original_bid: bid,
            modified_bid: bid,
            resampled: false,
            gamma: 0.0,
            mu: 1.0,
            cost_upper,
        }
    }
}

fn check_rosa_inputs(b: f64, mu: f64, c_upper: f64) -> Result<()> {
    if !(b.is_finite() && b >= 0.0) {
        return Err(Error::param(
            "bid",
            format!("{b} is not a finite non-negative number"),
        ));
    }
    if !(c_upper.is_finite() && b <= c_upper) {
        return Err(Error::OutsideSupport {
            value: b,
            lo: 0.0,
            hi: c_upper,
        });
    }
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::param("mu", format!("{mu} is outside (0, 1)")));
    }
    Ok(())
}

/// Deterministic core of [`rosa`]: given the uniform draw `gamma` and the
/// branch, `b̃ = b + γ(c̄ − b)` on the resample branch and `b` otherwise.
pub fn rosa_with(
    b: f64,
    mu: f64,
    c_upper: f64,
    gamma: f64,
    resampled: bool,
) -> Result<ResampleRecord> {
    check_rosa_inputs(b, mu, c_upper)?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::param("gamma", format!("{gamma} is outside [0, 1]")));
    }
    let modified_bid = if resampled {
        b + gamma * (c_upper - b)
    } else {
        b
    };
    Ok(ResampleRecord {
        original_bid: b,
        modified_bid,
        resampled,
        gamma,
        mu,
        cost_upper: c_upper,
    })
}

/// With probability `μ` replaces `b` by a uniform draw on `[b, c̄]`.
///
/// `γ` is drawn before the branch coin, so two calls on the same stream with
/// different bids share both `γ` and the branch.
pub fn rosa<R: Rng + ?Sized>(b: f64, mu: f64, c_upper: f64, rng: &mut R) -> Result<ResampleRecord> {
    check_rosa_inputs(b, mu, c_upper)?;
    let gamma: f64 = rng.random();
    let resampled = rng.random::<f64>() < mu;
    rosa_with(b, mu, c_upper, gamma, resampled)
}

/// `P(b̃ ≤ a | resampled) = (a − b)/(c̄ − b)` for `a ∈ [b, c̄]`.
pub fn rosa_conditional_cdf(a: f64, b: f64, c_upper: f64) -> Result<f64> {
    if b.is_nan() || c_upper.is_nan() || b >= c_upper {
        return Err(Error::param(
            "bid",
            format!("{b} must be below the upper cost {c_upper}"),
        ));
    }
    if !(b..=c_upper).contains(&a) {
        return Err(Error::OutsideSupport {
            value: a,
            lo: b,
            hi: c_upper,
        });
    }
    Ok((a - b) / (c_upper - b))
}

/// Per-round payment: the original bid, plus `(c̄ − b)/μ` if resampled.
pub fn rev_gtm_payment(record: &ResampleRecord, allocated: bool) -> f64 {
    if !allocated {
        return 0.0;
    }
    let b = record.original_bid;
    if record.resampled {
        b + (record.cost_upper - b) / record.mu
    } else {
        b
    }
}

/// Payment owed to one provider in one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundPayment {
    pub provider: usize,
    pub allocated: bool,
    pub payment: f64,
}

impl RoundPayment {
    pub fn new(provider: usize, record: &ResampleRecord, allocated: bool) -> Self {
        Self {
            provider,
            allocated,
            payment: rev_gtm_payment(record, allocated),
        }
    }

    /// `p − c·A`.
    pub fn utility(&self, true_cost: f64) -> f64 {
        if self.allocated {
            self.payment - true_cost
        } else {
            self.payment
        }
    }
}

/// Map from a provider's true cost to its report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BidRule {
    Truthful,
    Fixed(f64),
    Scale(f64),
    Shift(f64),
}

impl BidRule {
    /// Report for true cost `c`, clamped to `[0, c̄]`.
    pub fn bid(&self, c: f64, c_upper: f64) -> Result<f64> {
        let raw = match *self {
            BidRule::Truthful => c,
            BidRule::Fixed(b) => b,
            BidRule::Scale(k) => k * c,
            BidRule::Shift(delta) => c + delta,
        };
        if !raw.is_finite() {
            return Err(Error::param("bid", format!("{self:?} produced {raw}")));
        }
        Ok(raw.clamp(0.0, c_upper))
    }
}

/// A unilateral deviation by one provider; all others bid truthfully.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationStrategy {
    pub provider: usize,
    pub rule: BidRule,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resampling {
    Enabled { mu: f64 },
    Disabled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrcmConfig {
    pub horizon: u64,
    pub alpha: f64,
    pub resampling: Resampling,
    /// True costs; drawn from the environment's cost distributions when unset.
    pub costs: Option<Vec<f64>>,
    pub deviation: Option<DeviationStrategy>,
}

impl TrcmConfig {
    pub fn new(horizon: u64, alpha: f64, mu: f64) -> Self {
        Self {
            horizon,
            alpha,
            resampling: Resampling::Enabled { mu },
            costs: None,
            deviation: None,
        }
    }

    pub fn without_resampling(mut self) -> Self {
        self.resampling = Resampling::Disabled;
        self
    }

    pub fn with_costs(mut self, costs: Vec<f64>) -> Self {
        self.costs = Some(costs);
        self
    }

    pub fn with_deviation(mut self, deviation: DeviationStrategy) -> Self {
        self.deviation = Some(deviation);
        self
    }

    fn validate(&self, env: &Environment) -> Result<()> {
        if let Resampling::Enabled { mu } = self.resampling {
            if !(mu > 0.0 && mu < 1.0) {
                return Err(Error::param("mu", format!("{mu} is outside (0, 1)")));
            }
        }
        if let Some(costs) = &self.costs {
            check_len(env.providers(), costs.len())?;
            for (c, dist) in costs.iter().zip(env.cost_dists()) {
                if !dist.contains(*c) {
                    return Err(Error::OutsideSupport {
                        value: *c,
                        lo: dist.lower(),
                        hi: dist.upper(),
                    });
                }
            }
        }
        if let Some(dev) = &self.deviation {
            if dev.provider >= env.providers() {
                return Err(Error::param(
                    "deviation.provider",
                    format!("{} is not below {}", dev.provider, env.providers()),
                ));
            }
        }
        self.selector_config(env).validate()
    }

    fn selector_config(&self, env: &Environment) -> SelectorConfig {
        SelectorConfig {
            providers: env.providers(),
            dim: env.dim(),
            horizon: self.horizon,
            alpha: self.alpha,
        }
    }
}

/// One round of the composed mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismOutcome {
    pub round: u64,
    pub winner: Option<usize>,
    pub branch: Branch,
    pub payment: f64,
    /// Realized reward of the winner.
    pub reward: f64,
    /// `E[r_i | x_t]` for every provider.
    pub expected_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub seed: u64,
    pub true_costs: Vec<f64>,
    pub resamples: Vec<ResampleRecord>,
    /// `Ψ_i(b̃_i)`, fixed for the whole horizon.
    pub virtual_costs: Vec<f64>,
    pub rounds: Vec<MechanismOutcome>,
}

impl RunTrace {
    pub fn bids(&self) -> impl Iterator<Item = f64> + '_ {
        self.resamples.iter().map(|r| r.original_bid)
    }

    pub fn resample_count(&self) -> usize {
        self.resamples.iter().filter(|r| r.resampled).count()
    }

    pub fn winners(&self) -> impl Iterator<Item = Option<usize>> + '_ {
        self.rounds.iter().map(|r| r.winner)
    }

    /// Rounds won by `provider` up to and including each round.
    pub fn cumulative_allocations(&self, provider: usize) -> Vec<u64> {
        let mut n = 0;
        self.rounds
            .iter()
            .map(|r| {
                n += u64::from(r.winner == Some(provider));
                n
            })
            .collect()
    }

    /// `Σ_t (p_{i,t} − c_i·A_{i,t})`.
    pub fn provider_utility(&self, provider: usize) -> f64 {
        let c = self.true_costs[provider];
        self.rounds
            .iter()
            .filter(|r| r.winner == Some(provider))
            .map(|r| r.payment - c)
            .sum()
    }

    pub fn total_payments(&self) -> f64 {
        self.rounds.iter().map(|r| r.payment).sum()
    }
}

/// Everything the selector saw in one round, handed to [`run_trcm_observed`]
/// callbacks before the reward is recorded.
pub struct RoundView<'a> {
    pub round: u64,
    pub context: &'a [f64],
    pub expected_values: &'a [f64],
    pub virtual_costs: &'a [f64],
    pub decision: &'a SelectionDecision,
    pub state: &'a SelectorState,
}

pub fn run_trcm(env: &Environment, config: &TrcmConfig, seed: u64) -> Result<RunTrace> {
    run_trcm_observed(env, config, seed, |_| {})
}

/// Runs the mechanism for `config.horizon` rounds.
///
/// Bids are elicited and resampled once before the first round. Contexts,
/// rewards, costs and each provider's resampling draws come from separate
/// streams of `seed`, so runs that differ only in bids or in whether
/// resampling is enabled see identical contexts and rewards.
pub fn run_trcm_observed(
    env: &Environment,
    config: &TrcmConfig,
    seed: u64,
    mut observe: impl FnMut(&RoundView<'_>),
) -> Result<RunTrace> {
    config.validate(env)?;
    let m = env.providers();
    let dists = env.cost_dists();
    let true_costs = match &config.costs {
        Some(c) => c.clone(),
        None => env.draw_costs(&mut stream_rng(seed, Stream::Cost)),
    };

    let mut resamples = Vec::with_capacity(m);
    for i in 0..m {
        let c_upper = dists[i].upper();
        let rule = match config.deviation {
            Some(dev) if dev.provider == i => dev.rule,
            _ => BidRule::Truthful,
        };
        let bid = rule.bid(true_costs[i], c_upper)?;
        let record = match config.resampling {
            Resampling::Enabled { mu } => {
                rosa(bid, mu, c_upper, &mut stream_rng(seed, Stream::Resample(i)))?
            }
            Resampling::Disabled => ResampleRecord::identity(bid, c_upper),
        };
        resamples.push(record);
    }
    let virtual_costs: Vec<f64> = resamples
        .iter()
        .zip(dists)
        .map(|(r, d)| d.virtual_cost_unchecked(r.modified_bid))
        .collect();
    let truthful = config.deviation.is_none();

    let mut state = SelectorState::new(config.selector_config(env))?;
    let mut context_rng = stream_rng(seed, Stream::Context);
    let mut reward_rng = stream_rng(seed, Stream::Reward);
    let mut rewards = vec![0.0; m];
    let mut rounds = Vec::with_capacity(config.horizon as usize);

    for t in 1..=config.horizon {
        let x = env.contexts().sample(&mut context_rng);
        let x = x.values();
        let mut expected_values = vec![0.0; m];
        env.expected_values(x, &mut expected_values);
        env.sample_rewards(x, &mut reward_rng, &mut rewards);

        let decision = state.select_provider(x, &virtual_costs, t)?;
        observe(&RoundView {
            round: t,
            context: x,
            expected_values: &expected_values,
            virtual_costs: &virtual_costs,
            decision: &decision,
            state: &state,
        });
        let winner = decision.winner;
        let reward = rewards[winner];
        state.record_reward(&decision, t, x, reward)?;

        let pay = RoundPayment::new(winner, &resamples[winner], true);
        if truthful && pay.utility(true_costs[winner]) < 0.0 {
            return Err(Error::Invariant(format!(
                "negative utility {} for provider {winner} in round {t}",
                pay.utility(true_costs[winner])
            )));
        }
        rounds.push(MechanismOutcome {
            round: t,
            winner: Some(winner),
            branch: decision.branch,
            payment: pay.payment,
            reward,
            expected_values,
        });
    }

    Ok(RunTrace {
        seed,
        true_costs,
        resamples,
        virtual_costs,
        rounds,
    })
}
