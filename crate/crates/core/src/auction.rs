//! Single-round optimal reverse auction with known values.
//!
//! The user buys from the provider with the largest non-negative virtual
//! surplus `v_i − Ψ_i(c_i)` and pays it the critical cost report at which it
//! would stop winning.

use crate::env::CostDistribution;
use crate::error::{check_len, Error, Result};

/// Absolute tolerance on the critical threshold.
pub const BISECTION_TOL: f64 = 1e-10;
pub const BISECTION_MAX_ITER: usize = 200;

/// Virtual cost `Ψ(c) = c + F(c)/f(c)` on the closed support of `dist`.
pub fn virtual_cost(dist: &CostDistribution, c: f64) -> Result<f64> {
    if !dist.contains(c) {
        return Err(Error::OutsideSupport {
            value: c,
            lo: dist.lower(),
            hi: dist.upper(),
        });
    }
    Ok(dist.virtual_cost_unchecked(c))
}

/// A provider's virtual cost function.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualCostFn {
    pub dist: CostDistribution,
}

impl VirtualCostFn {
    pub fn new(dist: CostDistribution) -> Self {
        Self { dist }
    }

    pub fn eval(&self, c: f64) -> Result<f64> {
        virtual_cost(&self.dist, c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuctionOutcome {
    pub winner: Option<usize>,
    pub surpluses: Vec<f64>,
    /// Zero when nobody wins.
    pub payment: f64,
}

/// Index of the largest entry, lowest index on ties.
pub(crate) fn argmax_lowest<I>(scores: I) -> Option<(usize, f64)>
where
    I: IntoIterator<Item = (usize, f64)>,
{
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best
}

/// Winner = lowest-index argmax of `v_i − Ψ_i` provided that maximum is
/// non-negative. The payment field is left at zero.
pub fn allocate_optimal(values: &[f64], virtual_costs: &[f64]) -> Result<AuctionOutcome> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    check_len(values.len(), virtual_costs.len())?;
    let surpluses: Vec<f64> = values
        .iter()
        .zip(virtual_costs)
        .map(|(v, psi)| v - psi)
        .collect();
    let winner = argmax_lowest(surpluses.iter().copied().enumerate())
        .filter(|&(_, s)| s >= 0.0)
        .map(|(i, _)| i);
    Ok(AuctionOutcome {
        winner,
        surpluses,
        payment: 0.0,
    })
}

/// Critical threshold `z = sup{s : v_w − Ψ_w(s) ≥ max(0, max_{j≠w} v_j − Ψ_j(c_j))}`.
///
/// `costs[winner]` is the winner's own report; the search starts there, so
/// the threshold never falls below it. If the winner stays competitive at
/// the top of its support the threshold is the upper bound itself.
pub fn critical_payment(
    values: &[f64],
    dists: &[CostDistribution],
    costs: &[f64],
    winner: usize,
) -> Result<f64> {
    check_len(values.len(), dists.len())?;
    check_len(values.len(), costs.len())?;
    if winner >= values.len() {
        return Err(Error::NoWinner);
    }
    let mut benchmark = 0.0f64;
    for j in (0..values.len()).filter(|&j| j != winner) {
        benchmark = benchmark.max(values[j] - virtual_cost(&dists[j], costs[j])?);
    }
    let dist = &dists[winner];
    let v = values[winner];
    let competitive = |s: f64| v - dist.virtual_cost_unchecked(s) >= benchmark;

    let own = costs[winner];
    virtual_cost(dist, own)?;
    if !competitive(own) {
        return Err(Error::Invariant(format!(
            "provider {winner} does not beat the benchmark {benchmark} at its own cost {own}"
        )));
    }
    let hi = dist.upper();
    if competitive(hi) {
        return Ok(hi);
    }
    let (mut inside, mut outside) = (own, hi);
    for _ in 0..BISECTION_MAX_ITER {
        if outside - inside <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (inside + outside);
        if competitive(mid) {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Ok(inside)
}

/// Allocation plus critical payment in one call.
pub fn run_optimal_auction(
    values: &[f64],
    dists: &[CostDistribution],
    costs: &[f64],
) -> Result<AuctionOutcome> {
    check_len(values.len(), dists.len())?;
    let psi = dists
        .iter()
        .zip(costs)
        .map(|(d, &c)| virtual_cost(d, c))
        .collect::<Result<Vec<_>>>()?;
    let mut outcome = allocate_optimal(values, &psi)?;
    if let Some(w) = outcome.winner {
        outcome.payment = critical_payment(values, dists, costs, w)?;
    }
    Ok(outcome)
}
