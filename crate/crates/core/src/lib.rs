//! Truthful procurement auctions driven by a staged contextual bandit.
//!
//! A user buys one unit per round from one of `M` providers. Each provider
//! has a private cost and a reward that depends linearly on the round's
//! context. The selector allocates by the largest estimated value minus
//! virtual cost, bids pass through a one-shot self-resampling step, and the
//! payment rule turns the monotone allocation into a truthful mechanism.

pub mod auction;
pub mod audit;
pub mod bandit;
pub mod env;
pub mod error;
pub mod harness;
pub mod mechanism;
pub mod seed;

pub use audit::{run_check, AuditCheck, AuditReport};
pub use bandit::{Branch, Estimate, SelectionDecision, SelectorConfig, SelectorState};
pub use env::{ContextVector, CostDistribution, CostFamily, EnvSpec, Environment, RewardModel};
pub use error::{Error, Result};
pub use harness::{run_experiment, ExperimentConfig, ExperimentResult, RewardKind};
pub use mechanism::{run_trcm, BidRule, MechanismOutcome, ResampleRecord, RunTrace, TrcmConfig};
