//! Per-stage ridge regression and the staged provider selector.

mod linalg;
mod selector;
mod stage;

pub use linalg::{sherman_morrison_in_place, sherman_morrison_update};
pub use selector::{Branch, SelectionDecision, SelectorConfig, SelectorState, StageTrace};
pub use stage::{base_linucb, Estimate, StageModel};
