use std::path::{Path, PathBuf};

use crate::env::{CostFamily, EnvSpec, RewardModel};
use crate::error::{Error, Result};
use crate::mechanism::TrcmConfig;

/// Noise level of the Gaussian reward regime.
pub const GAUSSIAN_NOISE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardKind {
    Gaussian,
    Exponential,
}

impl RewardKind {
    pub fn model(self) -> RewardModel {
        match self {
            RewardKind::Gaussian => RewardModel::GaussianLinear {
                sigma: GAUSSIAN_NOISE,
            },
            RewardKind::Exponential => RewardModel::ExponentialSoftplus,
        }
    }
}

impl std::str::FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(RewardKind::Gaussian),
            "exponential" => Ok(RewardKind::Exponential),
            other => Err(Error::param(
                "reward",
                format!("`{other}` is not one of gaussian, exponential"),
            )),
        }
    }
}

pub fn parse_cost_family(s: &str) -> Result<CostFamily> {
    match s {
        "uniform" => Ok(CostFamily::Uniform),
        "lognormal" => Ok(CostFamily::LogNormal),
        other => Err(Error::param(
            "cost_family",
            format!("`{other}` is not one of uniform, lognormal"),
        )),
    }
}

/// One seed sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub rounds: u64,
    pub seeds: u64,
    pub providers: usize,
    pub dim: usize,
    pub mu: f64,
    pub alpha: f64,
    pub reward: RewardKind,
    pub cost_family: CostFamily,
    pub diag_scale: f64,
    pub offdiag_corr: f64,
    pub base_seed: u64,
    pub structure_seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let env = EnvSpec::default();
        Self {
            rounds: 10_000,
            seeds: 40,
            providers: env.providers,
            dim: env.dim,
            mu: 0.05,
            alpha: 0.75,
            reward: RewardKind::Gaussian,
            cost_family: env.cost_family,
            diag_scale: env.diag_scale,
            offdiag_corr: env.offdiag_corr,
            base_seed: 0,
            structure_seed: env.structure_seed,
            output_dir: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(name: &'static str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::param(name, format!("cannot parse `{value}`")))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.providers == 0 {
            return Err(Error::param("providers", "must be at least 1"));
        }
        if self.dim == 0 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        if self.rounds < self.providers as u64 {
            return Err(Error::param(
                "rounds",
                format!(
                    "{} is below the number of providers {}",
                    self.rounds, self.providers
                ),
            ));
        }
        if self.seeds == 0 {
            return Err(Error::param("seeds", "must be at least 1"));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(Error::param("mu", format!("{} is outside (0, 1)", self.mu)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::param("alpha", "must be finite and positive"));
        }
        Ok(())
    }

    /// Sets one field from its `key=value` spelling.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "rounds" => self.rounds = parse_num("rounds", value)?,
            "seeds" => self.seeds = parse_num("seeds", value)?,
            "providers" => self.providers = parse_num("providers", value)?,
            "dim" => self.dim = parse_num("dim", value)?,
            "mu" => self.mu = parse_num("mu", value)?,
            "alpha" => self.alpha = parse_num("alpha", value)?,
            "reward" => self.reward = value.parse()?,
            "cost_family" => self.cost_family = parse_cost_family(value)?,
            "diag_scale" => self.diag_scale = parse_num("diag_scale", value)?,
            "offdiag_corr" => self.offdiag_corr = parse_num("offdiag_corr", value)?,
            "base_seed" => self.base_seed = parse_num("base_seed", value)?,
            "structure_seed" => self.structure_seed = parse_num("structure_seed", value)?,
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            other => return Err(Error::param("config", format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a flat `key=value` document on top of `self`. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::param("config", format!("line {}: expected key=value", n + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_str(&text)?;
        Ok(cfg)
    }

    pub fn env_spec(&self) -> EnvSpec {
        EnvSpec {
            providers: self.providers,
            dim: self.dim,
            reward: self.reward.model(),
            cost_family: self.cost_family,
            diag_scale: self.diag_scale,
            offdiag_corr: self.offdiag_corr,
            structure_seed: self.structure_seed,
        }
    }

    pub fn trcm(&self) -> TrcmConfig {
        TrcmConfig::new(self.rounds, self.alpha, self.mu)
    }

    pub fn run_seeds(&self) -> impl Iterator<Item = u64> {
        let base = self.base_seed;
        (0..self.seeds).map(move |k| base + k)
    }
}
