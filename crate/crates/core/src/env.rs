//! Simulation environment: query contexts, provider ground truth, cost laws
//! and stochastic rewards.
//!
//! Everything here is a pure function of an explicit RNG handle, so runs can
//! be replayed bit-for-bit and executed in parallel as long as each owns its
//! generator.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{check_len, Error, Result};
use crate::seed::{stream_rng, Stream};

/// Number of interior grid points used by the regularity check.
const REGULARITY_GRID: usize = 1000;

/// Smallest admissible bid-model spread.
const MIN_BID_SIGMA: f64 = 1e-6;

/// A query feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector(Vec<f64>);

impl ContextVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty);
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::param("context", format!("non-finite entry {v}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl AsRef<[f64]> for ContextVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Draws contexts from `N(0, Σ)` with `Σ = diag_scale·I + offdiag_corr·(J − I)`.
#[derive(Debug, Clone)]
pub struct ContextSampler {
    dim: usize,
    diag_scale: f64,
    offdiag_corr: f64,
    chol: DMatrix<f64>,
}

impl ContextSampler {
    pub fn new(dim: usize, diag_scale: f64, offdiag_corr: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        let not_pd = || Error::NotPositiveDefinite {
            dim,
            diag_scale,
            offdiag_corr,
        };
        if !diag_scale.is_finite() || !offdiag_corr.is_finite() {
            return Err(not_pd());
        }
        let cov = Self::build_covariance(dim, diag_scale, offdiag_corr);
        let chol = cov.cholesky().ok_or_else(not_pd)?.l();
        Ok(Self {
            dim,
            diag_scale,
            offdiag_corr,
            chol,
        })
    }

    fn build_covariance(dim: usize, diag_scale: f64, offdiag_corr: f64) -> DMatrix<f64> {
        DMatrix::from_fn(
            dim,
            dim,
            |r, c| if r == c { diag_scale } else { offdiag_corr },
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        Self::build_covariance(self.dim, self.diag_scale, self.offdiag_corr)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ContextVector {
        let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        ContextVector((&self.chol * z).iter().copied().collect())
    }
}

/// One-shot convenience wrapper around [`ContextSampler`].
pub fn sample_context<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    diag_scale: f64,
    offdiag_corr: f64,
) -> Result<ContextVector> {
    Ok(ContextSampler::new(dim, diag_scale, offdiag_corr)?.sample(rng))
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal is valid")
}

/// A provider's private cost law.
///
/// Construction verifies regularity: the virtual cost `c + F(c)/f(c)` must be
/// strictly increasing on a fine grid of the open support.
#[derive(Debug, Clone, PartialEq)]
pub enum CostDistribution {
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Log-normal law truncated to `[lo, hi]`, so the upper cost bound exists.
    LogNormalTruncated {
        mu: f64,
        sigma: f64,
        lo: f64,
        hi: f64,
    },
}

impl CostDistribution {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        check_support(lo, hi)?;
        let dist = CostDistribution::Uniform { lo, hi };
        dist.check_regular()?;
        Ok(dist)
    }

    pub fn log_normal_truncated(mu: f64, sigma: f64, lo: f64, hi: f64) -> Result<Self> {
        check_support(lo, hi)?;
        if !mu.is_finite() {
            return Err(Error::param("mu", "must be finite"));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::param("sigma", "must be finite and positive"));
        }
        let dist = CostDistribution::LogNormalTruncated { mu, sigma, lo, hi };
        if dist.mass() <= 0.0 {
            return Err(Error::param("lo/hi", "truncation interval carries no mass"));
        }
        dist.check_regular()?;
        Ok(dist)
    }

    pub fn lower(&self) -> f64 {
        match *self {
            CostDistribution::Uniform { lo, .. } => lo,
            CostDistribution::LogNormalTruncated { lo, .. } => lo,
        }
    }

    pub fn upper(&self) -> f64 {
        match *self {
            CostDistribution::Uniform { hi, .. } => hi,
            CostDistribution::LogNormalTruncated { hi, .. } => hi,
        }
    }

    pub fn contains(&self, c: f64) -> bool {
        c >= self.lower() && c <= self.upper()
    }

    fn log_z(mu: f64, sigma: f64, c: f64) -> f64 {
        if c <= 0.0 {
            f64::NEG_INFINITY
        } else {
            (c.ln() - mu) / sigma
        }
    }

    // Φ(z_hi) − Φ(z_lo) for the truncated family.
    fn mass(&self) -> f64 {
        match *self {
            CostDistribution::Uniform { .. } => 1.0,
            CostDistribution::LogNormalTruncated { mu, sigma, lo, hi } => {
                let n = standard_normal();
                n.cdf(Self::log_z(mu, sigma, hi)) - n.cdf(Self::log_z(mu, sigma, lo))
            }
        }
    }

    pub fn cdf(&self, c: f64) -> f64 {
        if c <= self.lower() {
            return 0.0;
        }
        if c >= self.upper() {
            return 1.0;
        }
        match *self {
            CostDistribution::Uniform { lo, hi } => (c - lo) / (hi - lo),
            CostDistribution::LogNormalTruncated { mu, sigma, lo, .. } => {
                let n = standard_normal();
                let base = n.cdf(Self::log_z(mu, sigma, lo));
                ((n.cdf(Self::log_z(mu, sigma, c)) - base) / self.mass()).clamp(0.0, 1.0)
            }
        }
    }

    /// Density on the closed support (zero outside it).
    pub fn pdf(&self, c: f64) -> f64 {
        if !self.contains(c) {
            return 0.0;
        }
        match *self {
            CostDistribution::Uniform { lo, hi } => 1.0 / (hi - lo),
            CostDistribution::LogNormalTruncated { mu, sigma, .. } => {
                if c <= 0.0 {
                    return 0.0;
                }
                let z = Self::log_z(mu, sigma, c);
                standard_normal().pdf(z) / (c * sigma * self.mass())
            }
        }
    }

    /// `Ψ(c) = c + F(c)/f(c)` without a support check.
    ///
    /// Below the support `F = 0`, so the value is `c` itself; this keeps Ψ
    /// increasing for under-reports that fall beneath `lo`.
    pub fn virtual_cost_unchecked(&self, c: f64) -> f64 {
        match *self {
            CostDistribution::Uniform { lo, .. } => {
                if c <= lo {
                    c
                } else {
                    2.0 * c - lo
                }
            }
            CostDistribution::LogNormalTruncated { .. } => {
                let f_cap = self.cdf(c);
                if f_cap <= 0.0 {
                    return c;
                }
                c + f_cap / self.pdf(c.min(self.upper()))
            }
        }
    }

    fn check_regular(&self) -> Result<()> {
        check_regularity(self.lower(), self.upper(), |c| {
            self.virtual_cost_unchecked(c)
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match *self {
            CostDistribution::Uniform { lo, hi } => lo + u * (hi - lo),
            CostDistribution::LogNormalTruncated { mu, sigma, lo, hi } => {
                let n = standard_normal();
                let base = n.cdf(Self::log_z(mu, sigma, lo));
                let p = (base + u * self.mass()).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
                (mu + sigma * n.inverse_cdf(p)).exp().clamp(lo, hi)
            }
        }
    }
}

/// Checks that `psi` is finite and strictly increasing on a 1,000-point grid
/// of the open interval `(lo, hi)`.
pub fn check_regularity(lo: f64, hi: f64, psi: impl Fn(f64) -> f64) -> Result<()> {
    let step = (hi - lo) / (REGULARITY_GRID + 1) as f64;
    let mut prev = f64::NEG_INFINITY;
    for k in 1..=REGULARITY_GRID {
        let c = lo + step * k as f64;
        let value = psi(c);
        if !value.is_finite() || value <= prev {
            return Err(Error::Irregular { at: c });
        }
        prev = value;
    }
    Ok(())
}

fn check_support(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::param("lo/hi", "support bounds must be finite"));
    }
    if lo < 0.0 {
        return Err(Error::param("lo", "costs are non-negative"));
    }
    if lo >= hi {
        return Err(Error::param(
            "lo/hi",
            format!("need lo < hi, got [{lo}, {hi}]"),
        ));
    }
    Ok(())
}

/// Ground truth for one provider in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderTruth {
    pub theta: Vec<f64>,
    pub cost_dist: CostDistribution,
    pub true_cost: f64,
}

impl ProviderTruth {
    pub fn new(theta: Vec<f64>, cost_dist: CostDistribution, true_cost: f64) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("theta", "entries must be finite"));
        }
        if !cost_dist.contains(true_cost) {
            return Err(Error::OutsideSupport {
                value: true_cost,
                lo: cost_dist.lower(),
                hi: cost_dist.upper(),
            });
        }
        Ok(Self {
            theta,
            cost_dist,
            true_cost,
        })
    }

    pub fn cost_lower(&self) -> f64 {
        self.cost_dist.lower()
    }

    pub fn cost_upper(&self) -> f64 {
        self.cost_dist.upper()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `v = θᵀx`.
pub fn expected_value(theta: &[f64], x: &[f64]) -> Result<f64> {
    check_len(theta.len(), x.len())?;
    Ok(dot(theta, x))
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardModel {
    /// `r = θᵀx + N(0, σ²)`.
    GaussianLinear { sigma: f64 },
    /// `r ~ Exp(λ)` with rate `λ = softplus(θᵀx)`.
    ExponentialSoftplus,
}

impl RewardModel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::param("sigma", "must be finite and non-negative"));
        }
        Ok(RewardModel::GaussianLinear { sigma })
    }

    fn rate(score: f64) -> f64 {
        softplus(score).max(f64::MIN_POSITIVE)
    }

    /// `E[r | x]` under this model.
    pub fn mean(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        let score = expected_value(theta, x)?;
        Ok(self.mean_of_score(score))
    }

    pub(crate) fn mean_of_score(&self, score: f64) -> f64 {
        match self {
            RewardModel::GaussianLinear { .. } => score,
            RewardModel::ExponentialSoftplus => 1.0 / Self::rate(score),
        }
    }

    pub(crate) fn sample_from_score<R: Rng + ?Sized>(&self, score: f64, rng: &mut R) -> f64 {
        match *self {
            RewardModel::GaussianLinear { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                score + sigma * z
            }
            RewardModel::ExponentialSoftplus => {
                // Inverse CDF keeps exactly one uniform draw per sample.
                let u: f64 = rng.random();
                -(1.0 - u).ln() / Self::rate(score)
            }
        }
    }
}

pub fn sample_reward<R: Rng + ?Sized>(
    model: &RewardModel,
    theta: &[f64],
    x: &[f64],
    rng: &mut R,
) -> Result<f64> {
    let score = expected_value(theta, x)?;
    Ok(model.sample_from_score(score, rng))
}

/// Context-dependent log-normal bid parameters `(μ_i, σ_i)`.
///
/// `context_matrix` is `2 × d`: row 0 drives `μ`, row 1 drives `σ`. The
/// spread is clamped to stay strictly positive.
pub fn sample_bid_params(
    base: (f64, f64),
    x: &[f64],
    context_matrix: &DMatrix<f64>,
    scale: f64,
) -> Result<(f64, f64)> {
    if context_matrix.nrows() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: context_matrix.nrows(),
        });
    }
    check_len(context_matrix.ncols(), x.len())?;
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(Error::param("scale", "must be finite and non-negative"));
    }
    let row = |r: usize| -> f64 { (0..x.len()).map(|c| context_matrix[(r, c)] * x[c]).sum() };
    let mu = base.0 + scale * row(0);
    let sigma = (base.1 + scale * row(1)).max(MIN_BID_SIGMA);
    Ok((mu, sigma))
}

/// Per-provider log-normal bid generator driven by the query context.
#[derive(Debug, Clone)]
pub struct LognormalBidModel {
    pub base: Vec<(f64, f64)>,
    pub matrices: Vec<DMatrix<f64>>,
    pub scale: f64,
}

impl LognormalBidModel {
    pub fn params(&self, provider: usize, x: &[f64]) -> Result<(f64, f64)> {
        let base = *self
            .base
            .get(provider)
            .ok_or_else(|| Error::param("provider", format!("index {provider} out of range")))?;
        sample_bid_params(base, x, &self.matrices[provider], self.scale)
    }

    pub fn sample_bid<R: Rng + ?Sized>(
        &self,
        provider: usize,
        x: &[f64],
        rng: &mut R,
    ) -> Result<f64> {
        let (mu, sigma) = self.params(provider, x)?;
        let z: f64 = rng.sample(StandardNormal);
        Ok((mu + sigma * z).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostFamily {
    Uniform,
    LogNormal,
}

/// Structural parameters of a synthetic market. Thetas and cost laws are
/// generated once from `structure_seed` and held fixed across run seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub providers: usize,
    pub dim: usize,
    pub reward: RewardModel,
    pub cost_family: CostFamily,
    pub diag_scale: f64,
    pub offdiag_corr: f64,
    pub structure_seed: u64,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            providers: 4,
            dim: 5,
            reward: RewardModel::GaussianLinear { sigma: 0.1 },
            cost_family: CostFamily::Uniform,
            diag_scale: 0.2,
            offdiag_corr: 0.05,
            structure_seed: 7,
        }
    }
}

/// The market the mechanism is run against.
#[derive(Debug, Clone)]
pub struct Environment {
    thetas: Vec<Vec<f64>>,
    cost_dists: Vec<CostDistribution>,
    reward: RewardModel,
    contexts: ContextSampler,
    bid_model: LognormalBidModel,
}

impl Environment {
    pub fn new(
        thetas: Vec<Vec<f64>>,
        cost_dists: Vec<CostDistribution>,
        reward: RewardModel,
        contexts: ContextSampler,
    ) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::Empty);
        }
        check_len(thetas.len(), cost_dists.len())?;
        for theta in &thetas {
            check_len(contexts.dim(), theta.len())?;
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("theta", "entries must be finite"));
            }
        }
        let m = thetas.len();
        let d = contexts.dim();
        let bid_model = LognormalBidModel {
            base: cost_dists
                .iter()
                .map(|c| (((c.lower() + c.upper()) / 2.0).ln(), 0.25))
                .collect(),
            matrices: vec![DMatrix::zeros(2, d); m],
            scale: 0.0,
        };
        Ok(Self {
            thetas,
            cost_dists,
            reward,
            contexts,
            bid_model,
        })
    }

    /// Builds the synthetic market used by the experiments.
    ///
    /// Thetas are standard normal. Uniform cost laws sit on
    /// `[0.1 + 0.05 i, 0.5 + 0.05 i]`; log-normal laws have median
    /// `0.3 + 0.05 i` and are truncated to `[0.05, 1.0 + 0.1 i]`.
    pub fn synthetic(spec: &EnvSpec) -> Result<Self> {
        if spec.providers == 0 {
            return Err(Error::param("providers", "must be at least 1"));
        }
        let contexts = ContextSampler::new(spec.dim, spec.diag_scale, spec.offdiag_corr)?;
        let mut rng = stream_rng(spec.structure_seed, Stream::Structure);
        let thetas: Vec<Vec<f64>> = (0..spec.providers)
            .map(|_| (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let cost_dists = (0..spec.providers)
            .map(|i| {
                let shift = i as f64;
                match spec.cost_family {
                    CostFamily::Uniform => {
                        CostDistribution::uniform(0.1 + 0.05 * shift, 0.5 + 0.05 * shift)
                    }
                    CostFamily::LogNormal => CostDistribution::log_normal_truncated(
                        (0.3 + 0.05 * shift).ln(),
                        0.4,
                        0.05,
                        1.0 + 0.1 * shift,
                    ),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut env = Self::new(thetas, cost_dists, spec.reward, contexts)?;
        env.bid_model.scale = 0.15;
        env.bid_model.matrices = (0..spec.providers)
            .map(|_| DMatrix::from_fn(2, spec.dim, |_, _| rng.sample(StandardNormal)))
            .collect();
        Ok(env)
    }

    pub fn providers(&self) -> usize {
        self.thetas.len()
    }

    pub fn dim(&self) -> usize {
        self.contexts.dim()
    }

    pub fn thetas(&self) -> &[Vec<f64>] {
        &self.thetas
    }

    pub fn cost_dists(&self) -> &[CostDistribution] {
        &self.cost_dists
    }

    pub fn reward_model(&self) -> RewardModel {
        self.reward
    }

    pub fn contexts(&self) -> &ContextSampler {
        &self.contexts
    }

    pub fn bid_model(&self) -> &LognormalBidModel {
        &self.bid_model
    }

    pub fn with_reward_model(mut self, reward: RewardModel) -> Self {
        self.reward = reward;
        self
    }

    pub fn draw_costs<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.cost_dists.iter().map(|d| d.sample(rng)).collect()
    }

    pub fn truths(&self, costs: &[f64]) -> Result<Vec<ProviderTruth>> {
        check_len(self.providers(), costs.len())?;
        self.thetas
            .iter()
            .zip(&self.cost_dists)
            .zip(costs)
            .map(|((theta, dist), &c)| ProviderTruth::new(theta.clone(), dist.clone(), c))
            .collect()
    }

    /// Writes `E[r_i | x]` for every provider into `out`.
    pub fn expected_values(&self, x: &[f64], out: &mut [f64]) {
        for (slot, theta) in out.iter_mut().zip(&self.thetas) {
            *slot = self.reward.mean_of_score(dot(theta, x));
        }
    }

    /// Draws one reward per provider, so the realized table does not depend
    /// on which provider ends up being chosen.
    pub fn sample_rewards<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R, out: &mut [f64]) {
        for (slot, theta) in out.iter_mut().zip(&self.thetas) {
            *slot = self.reward.sample_from_score(dot(theta, x), rng);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn context_covariance_matches_within_five_percent() {
        let sampler = ContextSampler::new(5, 0.2, 0.05).unwrap();
        let mut r = rng(11);
        let n = 100_000;
        let mut sum = [[0.0f64; 5]; 5];
        for _ in 0..n {
            let x = sampler.sample(&mut r);
            let v = x.values();
            for a in 0..5 {
                for b in 0..5 {
                    sum[a][b] += v[a] * v[b];
                }
            }
        }
        let cov = sampler.covariance();
        for a in 0..5 {
            for b in 0..5 {
                let est = sum[a][b] / n as f64;
                let target = cov[(a, b)];
                assert!(
                    (est - target).abs() <= 0.05 * target,
                    "entry ({a},{b}): {est} vs {target}"
                );
            }
        }
    }

    #[test]
    fn one_dimensional_standard_normal_has_zero_mean() {
        let mut r = rng(3);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_context(&mut r, 1, 1.0, 0.0).unwrap().values()[0])
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 0.02, "{mean}");
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let a = sample_context(&mut rng(5), 5, 0.2, 0.05).unwrap();
        let b = sample_context(&mut rng(5), 5, 0.2, 0.05).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn indefinite_covariance_is_rejected() {
        // Off-diagonal above the diagonal breaks positive definiteness.
        let err = ContextSampler::new(3, 0.1, 0.5).unwrap_err();
        match err {
            Error::NotPositiveDefinite {
                diag_scale,
                offdiag_corr,
                ..
            } => {
                assert_eq!(diag_scale, 0.1);
                assert_eq!(offdiag_corr, 0.5);
            }
            other => panic!("unexpected {other}"),
        }
        assert!(ContextSampler::new(4, 0.2, -0.1).is_err());
        assert!(ContextSampler::new(0, 1.0, 0.0).is_err());
    }

    #[test]
    fn expected_value_examples() {
        assert_eq!(expected_value(&[1.0, 0.0], &[0.3, 9.0]).unwrap(), 0.3);
        assert_eq!(expected_value(&[0.0, 0.0], &[4.0, -2.0]).unwrap(), 0.0);
        assert_eq!(expected_value(&[0.5, 0.5], &[1.0, 3.0]).unwrap(), 2.0);
        assert!(matches!(
            expected_value(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn softplus_is_stable_in_both_tails() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert!((softplus(50.0) - 50.0).abs() < 1e-20 + 1e-12);
    }

    #[test]
    fn noiseless_gaussian_reward_is_the_linear_value() {
        let model = RewardModel::gaussian(0.0).unwrap();
        let r = sample_reward(&model, &[0.5, -1.0], &[2.0, 0.25], &mut rng(1)).unwrap();
        assert_eq!(r, 0.75);
    }

    fn exponential_mean_check(score: f64, seed: u64) {
        let theta = [score];
        let x = [1.0];
        let model = RewardModel::ExponentialSoftplus;
        let lambda = softplus(score);
        let n = 100_000;
        let mut r = rng(seed);
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_reward(&model, &theta, &x, &mut r).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        // Exp(λ) has standard deviation 1/λ.
        let se = (1.0 / lambda) / (n as f64).sqrt();
        assert!(
            (mean - 1.0 / lambda).abs() <= 3.0 * se,
            "score {score}: mean {mean} vs {}",
            1.0 / lambda
        );
        assert_eq!(model.mean(&theta, &x).unwrap(), 1.0 / lambda);
    }

    #[test]
    fn exponential_reward_mean_matches_inverse_rate() {
        exponential_mean_check(50.0, 21);
        exponential_mean_check(0.0, 22);
        assert!((1.0 / softplus(0.0) - std::f64::consts::LOG2_E).abs() < 1e-12);
    }

    #[test]
    fn gaussian_reward_mean_within_four_standard_errors() {
        let model = RewardModel::gaussian(0.7).unwrap();
        let theta = [0.4, -0.2, 1.0];
        let x = [0.3, 0.9, -0.5];
        let v = expected_value(&theta, &x).unwrap();
        let n = 100_000;
        let mut r = rng(99);
        let mean = (0..n)
            .map(|_| sample_reward(&model, &theta, &x, &mut r).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - v).abs() <= 4.0 * 0.7 / (n as f64).sqrt());
    }

    #[test]
    fn uniform_virtual_cost_has_closed_form() {
        let d = CostDistribution::uniform(2.0, 6.0).unwrap();
        assert_eq!(d.virtual_cost_unchecked(3.0), 4.0);
        assert_eq!(d.virtual_cost_unchecked(2.0), 2.0);
        assert_eq!(d.virtual_cost_unchecked(6.0), 10.0);
    }

    #[test]
    fn log_normal_truncated_is_regular_and_normalized() {
        let d = CostDistribution::log_normal_truncated(0.3f64.ln(), 0.4, 0.05, 1.0).unwrap();
        assert_eq!(d.cdf(0.05), 0.0);
        assert_eq!(d.cdf(1.0), 1.0);
        // Trapezoid integral of the density over the support.
        let n = 20_000;
        let h = 0.95 / n as f64;
        let mut total = 0.0;
        for k in 0..=n {
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            total += w * d.pdf(0.05 + h * k as f64);
        }
        assert!((total * h - 1.0).abs() < 1e-6, "{}", total * h);
    }

    #[test]
    fn regularity_check_rejects_a_dip() {
        // Ψ(c) = c + 0.3·sin(20c) turns down repeatedly on (0, 1).
        let err = check_regularity(0.0, 1.0, |c| c + 0.3 * (20.0 * c).sin()).unwrap_err();
        assert!(matches!(err, Error::Irregular { .. }), "{err}");
        assert!(check_regularity(0.0, 1.0, |c| 2.0 * c).is_ok());
        assert!(check_regularity(0.0, 1.0, |_| f64::NAN).is_err());
    }

    #[test]
    fn log_normal_family_passes_regularity_over_a_parameter_sweep() {
        for &sigma in &[0.1f64, 0.4, 1.0, 2.5] {
            for &mu in &[-2.0f64, 0.0, 1.5] {
                let (lo, hi) = ((mu - 2.0 * sigma).exp(), (mu + 2.0 * sigma).exp());
                CostDistribution::log_normal_truncated(mu, sigma, lo, hi).unwrap();
            }
        }
    }

    #[test]
    fn bad_supports_are_rejected() {
        assert!(CostDistribution::uniform(1.0, 1.0).is_err());
        assert!(CostDistribution::uniform(-1.0, 1.0).is_err());
        assert!(CostDistribution::uniform(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn cost_samples_stay_in_support() {
        let mut r = rng(8);
        let ln = CostDistribution::log_normal_truncated(0.3f64.ln(), 0.4, 0.05, 1.0).unwrap();
        for _ in 0..10_000 {
            let c = ln.sample(&mut r);
            assert!(ln.contains(c));
        }
    }

    #[test]
    fn provider_truth_checks_cost_in_support() {
        let dist = CostDistribution::uniform(0.0, 1.0).unwrap();
        assert!(ProviderTruth::new(vec![1.0], dist.clone(), 0.5).is_ok());
        assert!(ProviderTruth::new(vec![1.0], dist.clone(), 1.5).is_err());
        assert!(ProviderTruth::new(vec![f64::NAN], dist, 0.5).is_err());
    }

    #[test]
    fn zero_scale_bid_params_ignore_context() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        let a = sample_bid_params((0.2, 0.3), &[1.0, 1.0, 1.0], &m, 0.0).unwrap();
        let b = sample_bid_params((0.2, 0.3), &[-4.0, 9.0, 0.5], &m, 0.0).unwrap();
        assert_eq!(a, (0.2, 0.3));
        assert_eq!(a, b);
        assert!(sample_bid_params((0.2, 0.3), &[1.0, 1.0], &m, 0.1).is_err());
        assert!(sample_bid_params((0.2, 0.3), &[1.0; 3], &DMatrix::zeros(3, 3), 0.1).is_err());
    }

    #[test]
    fn bid_sigma_is_clamped_positive() {
        let m = DMatrix::from_row_slice(2, 1, &[0.0, -100.0]);
        let (_, sigma) = sample_bid_params((0.0, 0.1), &[1.0], &m, 1.0).unwrap();
        assert_eq!(sigma, MIN_BID_SIGMA);
    }

    #[test]
    fn bid_params_vary_with_context_at_default_scale() {
        let env = Environment::synthetic(&EnvSpec::default()).unwrap();
        let mut r = rng(4);
        let mus: Vec<f64> = (0..10_000)
            .map(|_| {
                let x = env.contexts().sample(&mut r);
                env.bid_model().params(0, x.values()).unwrap().0
            })
            .collect();
        let mean = mus.iter().sum::<f64>() / mus.len() as f64;
        let var = mus.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / mus.len() as f64;
        assert!(var.sqrt() > 0.0);
        let x = env.contexts().sample(&mut r);
        assert_eq!(
            env.bid_model().params(1, x.values()).unwrap(),
            env.bid_model().params(1, x.values()).unwrap()
        );
        assert!(env.bid_model().sample_bid(1, x.values(), &mut r).unwrap() > 0.0);
    }

    #[test]
    fn synthetic_environment_supports_both_cost_families() {
        let spec = EnvSpec {
            cost_family: CostFamily::LogNormal,
            ..EnvSpec::default()
        };
        let env = Environment::synthetic(&spec).unwrap();
        assert_eq!(env.providers(), 4);
        assert_eq!(env.dim(), 5);
        let costs = env.draw_costs(&mut rng(1));
        let truths = env.truths(&costs).unwrap();
        assert!(truths
            .iter()
            .all(|t| t.cost_lower() <= t.true_cost && t.true_cost <= t.cost_upper()));
    }
}
