//! Staged provider selection with round-robin forced exploration.
//!
//! Each round walks down a ladder of stages. At stage `s` the designated
//! provider is explored if its width still exceeds `2^{-s}`; otherwise the
//! round is either exploited (pure, once every active width is below
//! `1/√T`), passed to the next stage after pruning providers whose optimistic
//! virtual surplus trails the leader by more than `2^{2-s}`, or exploited
//! within the current stage. Only forced-exploration rounds feed the
//! regression models.

use super::stage::{Estimate, StageModel};
use crate::auction::argmax_lowest;
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectorConfig {
    pub providers: usize,
    pub dim: usize,
    pub horizon: u64,
    pub alpha: f64,
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.providers == 0 {
            return Err(Error::param("providers", "must be at least 1"));
        }
        if self.dim == 0 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::param("horizon", "must be at least 1"));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::param("alpha", "must be finite and positive"));
        }
        Ok(())
    }

    /// `⌈ln T⌉`, at least one stage.
    pub fn max_stage(&self) -> usize {
        ((self.horizon as f64).ln().ceil() as usize).max(1)
    }

    /// `α = sqrt(½ ln(2TM/κ))`, the width scale under which the confidence
    /// bounds hold with probability `1 − κ`.
    pub fn theory_alpha(horizon: u64, providers: usize, kappa: f64) -> f64 {
        (0.5 * (2.0 * horizon as f64 * providers as f64 / kappa).ln()).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    ForcedExploration { stage: usize },
    PureExploit,
    WithinStageExploit { stage: usize },
}

impl Branch {
    pub fn is_forced(&self) -> bool {
        matches!(self, Branch::ForcedExploration { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Branch::ForcedExploration { .. } => "forced",
            Branch::PureExploit => "pure_exploit",
            Branch::WithinStageExploit { .. } => "stage_exploit",
        }
    }
}

/// Active set and estimates seen at one rung of the stage ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTrace {
    pub stage: usize,
    pub active: Vec<usize>,
    /// Indexed by provider; `None` for providers outside the active set.
    pub estimates: Vec<Option<Estimate>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionDecision {
    pub winner: usize,
    pub branch: Branch,
    /// Set only for forced exploration.
    pub learn: bool,
    pub designated: usize,
    pub stages: Vec<StageTrace>,
}

impl SelectionDecision {
    pub fn deciding_stage(&self) -> &StageTrace {
        self.stages
            .last()
            .expect("every decision visits at least one stage")
    }

    pub fn estimates(&self) -> &[Option<Estimate>] {
        &self.deciding_stage().estimates
    }

    pub fn final_active(&self) -> &[usize] {
        &self.deciding_stage().active
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorState {
    config: SelectorConfig,
    max_stage: usize,
    // models[provider][stage - 1]
    models: Vec<Vec<StageModel>>,
    pure_exploit: Vec<u64>,
    stage_exploit: Vec<Vec<u64>>,
    last_round: Option<u64>,
}

impl SelectorState {
    pub fn new(config: SelectorConfig) -> Result<Self> {
        config.validate()?;
        let max_stage = config.max_stage();
        Ok(Self {
            config,
            max_stage,
            models: vec![vec![StageModel::new(config.dim); max_stage]; config.providers],
            pure_exploit: Vec::new(),
            stage_exploit: vec![Vec::new(); max_stage],
            last_round: None,
        })
    }

    pub fn config(&self) -> &SelectorConfig {
        &self.config
    }

    pub fn max_stage(&self) -> usize {
        self.max_stage
    }

    pub fn model(&self, provider: usize, stage: usize) -> &StageModel {
        &self.models[provider][stage - 1]
    }

    /// Rounds in which `provider` was force-explored at `stage`.
    pub fn forced_rounds(&self, provider: usize, stage: usize) -> &[u64] {
        self.model(provider, stage).rounds()
    }

    pub fn pure_exploit_rounds(&self) -> &[u64] {
        &self.pure_exploit
    }

    pub fn stage_exploit_rounds(&self, stage: usize) -> &[u64] {
        &self.stage_exploit[stage - 1]
    }

    /// Round-robin provider for round `t`: `1 + (t mod M)` in one-based
    /// numbering, wrapped onto `0..M`.
    pub fn designated(&self, t: u64) -> usize {
        ((1 + t) % self.config.providers as u64) as usize
    }

    pub fn estimate(&self, provider: usize, stage: usize, x: &[f64]) -> Estimate {
        self.model(provider, stage)
            .estimate_unchecked(x, self.config.alpha)
    }

    pub fn select_provider(
        &self,
        x: &[f64],
        virtual_costs: &[f64],
        t: u64,
    ) -> Result<SelectionDecision> {
        let m = self.config.providers;
        check_len(self.config.dim, x.len())?;
        check_len(m, virtual_costs.len())?;
        if t == 0 || t > self.config.horizon {
            return Err(Error::param(
                "t",
                format!("round {t} outside [1, {}]", self.config.horizon),
            ));
        }
        let final_width = 1.0 / (self.config.horizon as f64).sqrt();
        let designated = self.designated(t);
        let mut active: Vec<usize> = (0..m).collect();
        let mut stages = Vec::new();

        for s in 1..=self.max_stage {
            let mut estimates = vec![None; m];
            for &i in &active {
                estimates[i] = Some(self.estimate(i, s, x));
            }
            let width = |i: usize| estimates[i].map_or(0.0, |e: Estimate| e.width);
            let ovs =
                |i: usize| estimates[i].map_or(f64::NEG_INFINITY, |e| e.upper()) - virtual_costs[i];
            let stage_cap = 0.5f64.powi(s as i32);
            let leader = || {
                argmax_lowest(active.iter().map(|&i| (i, ovs(i))))
                    .expect("active set is never empty")
            };

            let branch_and_winner =
                if estimates[designated].is_some() && width(designated) > stage_cap {
                    Some((Branch::ForcedExploration { stage: s }, designated))
                } else if active.iter().all(|&i| width(i) <= final_width) {
                    Some((Branch::PureExploit, leader().0))
                } else if active.iter().all(|&i| width(i) <= stage_cap) && s < self.max_stage {
                    None
                } else {
                    Some((Branch::WithinStageExploit { stage: s }, leader().0))
                };

            match branch_and_winner {
                Some((branch, winner)) => {
                    stages.push(StageTrace {
                        stage: s,
                        active,
                        estimates,
                    });
                    return Ok(SelectionDecision {
                        winner,
                        branch,
                        learn: branch.is_forced(),
                        designated,
                        stages,
                    });
                }
                None => {
                    let cutoff = leader().1 - 2.0 * 2.0f64.powi(1 - s as i32);
                    let next: Vec<usize> = active
                        .iter()
                        .copied()
                        .filter(|&i| ovs(i) >= cutoff)
                        .collect();
                    stages.push(StageTrace {
                        stage: s,
                        active,
                        estimates,
                    });
                    active = next;
                }
            }
        }
        unreachable!("the last stage always decides")
    }

    /// Books round `t`. Forced exploration updates the winner's model at the
    /// deciding stage; every other branch only records the round index.
    pub fn record_reward(
        &mut self,
        decision: &SelectionDecision,
        t: u64,
        x: &[f64],
        reward: f64,
    ) -> Result<()> {
        check_len(self.config.dim, x.len())?;
        if let Some(last) = self.last_round {
            if t <= last {
                return Err(Error::DuplicateRound { round: t, last });
            }
        }
        match decision.branch {
            Branch::ForcedExploration { stage } => {
                self.models[decision.winner][stage - 1].observe(t, x, reward)?;
            }
            Branch::PureExploit => self.pure_exploit.push(t),
            Branch::WithinStageExploit { stage } => self.stage_exploit[stage - 1].push(t),
        }
        self.last_round = Some(t);
        Ok(())
    }

    /// Per stage: `(|Λ_est^s|, |∪_i Λ_i^s|)`.
    pub fn stage_counts(&self) -> Vec<(usize, usize)> {
        (1..=self.max_stage)
            .map(|s| {
                let explored = (0..self.config.providers)
                    .map(|i| self.forced_rounds(i, s).len())
                    .sum();
                (self.stage_exploit_rounds(s).len(), explored)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(m: usize, d: usize, horizon: u64, alpha: f64) -> SelectorConfig {
        SelectorConfig {
            providers: m,
            dim: d,
            horizon,
            alpha,
        }
    }

    #[test]
    fn stage_count_is_ceil_log_horizon() {
        assert_eq!(config(2, 2, 10_000, 1.0).max_stage(), 10);
        assert_eq!(config(2, 2, 100, 1.0).max_stage(), 5);
        assert_eq!(config(2, 2, 1, 1.0).max_stage(), 1);
    }

    #[test]
    fn first_round_force_explores_the_designated_provider() {
        let state = SelectorState::new(config(4, 3, 1000, 1.0)).unwrap();
        let x = [0.6, 0.3, 0.2];
        let d = state.select_provider(&x, &[0.1, 0.2, 0.3, 0.4], 1).unwrap();
        assert_eq!(d.designated, 2);
        assert_eq!(d.winner, 2);
        assert_eq!(d.branch, Branch::ForcedExploration { stage: 1 });
        assert!(d.learn);
        assert_eq!(d.final_active(), &[0, 1, 2, 3]);
    }

    #[test]
    fn narrow_widths_trigger_pure_exploitation() {
        // Tiny α makes every width fall below 1/√T immediately.
        let state = SelectorState::new(config(4, 2, 100, 1e-6)).unwrap();
        let x = [1.0, 0.0];
        // With empty models v̂ = 0, so OVS = w − Ψ and Ψ sets the ranking.
        let psi = [-0.2, -0.7, -0.1, -0.4];
        let d = state.select_provider(&x, &psi, 3).unwrap();
        assert_eq!(d.branch, Branch::PureExploit);
        assert_eq!(d.winner, 1);
        assert!(!d.learn);
    }

    #[test]
    fn single_provider_never_exploits_within_a_stage() {
        let mut state = SelectorState::new(config(1, 2, 500, 0.75)).unwrap();
        for t in 1..=500u64 {
            let x = [((t as f64) * 0.37).sin(), ((t as f64) * 0.11).cos()];
            let d = state.select_provider(&x, &[0.1], t).unwrap();
            assert_eq!(d.winner, 0);
            assert!(!matches!(d.branch, Branch::WithinStageExploit { .. }));
            state.record_reward(&d, t, &x, 0.5).unwrap();
        }
        assert!(state.stage_counts().iter().all(|&(est, _)| est == 0));
    }

    #[test]
    fn exploitation_leaves_models_untouched() {
        let mut state = SelectorState::new(config(3, 2, 100, 1e-6)).unwrap();
        let before = state.clone();
        let x = [0.5, 0.5];
        let d = state.select_provider(&x, &[0.0, 0.1, 0.2], 1).unwrap();
        assert_eq!(d.branch, Branch::PureExploit);
        state.record_reward(&d, 1, &x, 3.0).unwrap();
        for i in 0..3 {
            for s in 1..=state.max_stage() {
                assert_eq!(state.model(i, s), before.model(i, s));
            }
        }
        assert_eq!(state.pure_exploit_rounds(), &[1]);
    }

    #[test]
    fn forced_exploration_updates_only_that_stage() {
        let mut state = SelectorState::new(config(2, 2, 100, 1.0)).unwrap();
        let mut deeper = false;
        for t in 1..=60u64 {
            let x = [1.0, 0.2 * ((t as f64) * 0.7).sin()];
            let pre = state.clone();
            let d = state.select_provider(&x, &[0.0, 0.05], t).unwrap();
            state.record_reward(&d, t, &x, 1.0).unwrap();
            for i in 0..2 {
                for s in 1..=state.max_stage() {
                    let changed = state.model(i, s) != pre.model(i, s);
                    let expected =
                        d.branch == Branch::ForcedExploration { stage: s } && i == d.winner;
                    assert_eq!(changed, expected, "round {t}, provider {i}, stage {s}");
                }
            }
            if let Branch::ForcedExploration { stage } = d.branch {
                assert_eq!(d.winner, d.designated);
                deeper |= stage > 1;
            }
        }
        assert!(deeper, "never explored beyond stage 1");
    }

    #[test]
    fn double_recording_is_rejected() {
        let mut state = SelectorState::new(config(2, 2, 10, 1.0)).unwrap();
        let x = [0.1, 0.2];
        let d = state.select_provider(&x, &[0.0, 0.0], 1).unwrap();
        state.record_reward(&d, 1, &x, 0.0).unwrap();
        assert!(matches!(
            state.record_reward(&d, 1, &x, 0.0),
            Err(Error::DuplicateRound { .. })
        ));
    }

    #[test]
    fn rejects_out_of_range_rounds_and_bad_lengths() {
        let state = SelectorState::new(config(2, 2, 10, 1.0)).unwrap();
        assert!(state.select_provider(&[0.0, 0.0], &[0.0, 0.0], 0).is_err());
        assert!(state.select_provider(&[0.0, 0.0], &[0.0, 0.0], 11).is_err());
        assert!(state.select_provider(&[0.0], &[0.0, 0.0], 1).is_err());
        assert!(state.select_provider(&[0.0, 0.0], &[0.0], 1).is_err());
        assert!(SelectorState::new(config(0, 2, 10, 1.0)).is_err());
        assert!(SelectorState::new(config(2, 2, 10, 0.0)).is_err());
    }

    #[test]
    fn theory_alpha_value() {
        let a = SelectorConfig::theory_alpha(5000, 3, 0.05);
        assert!((a - (0.5 * 600_000f64.ln()).sqrt()).abs() < 1e-12);
    }
}
