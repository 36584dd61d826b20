//! Pricing policies.
//!
//! Every pricer answers one question: given the decision state of an
//! arriving, feasible request, which [`Action`] to offer.

pub mod flatrate;
pub mod mcts;
pub mod oracle;
pub mod vi;

use crate::market::Request;
use crate::mdp::{Action, State};

pub use flatrate::{flatrate_revenue, train_flatrate, FlatrateFit, FlatratePricer};
pub use mcts::{mcts_plan, reroot, rollout, MctsParams, MctsPricer, SearchTree, UcbSign};
pub use oracle::{oracle, OraclePricer, OracleSolution};
pub use vi::{evaluate_policy, value_iteration, ViPricer, ViSolution};

/// One pricing decision as seen by a pricer.
#[derive(Debug, Clone, Copy)]
pub struct Decision<'a> {
    pub state: &'a State,
    pub request: &'a Request,
    /// Position of the request in its sequence.
    pub index: usize,
}

pub trait Pricer: Send {
    fn name(&self) -> &str;

    /// Only called for feasible requests; must return a grid price or reject.
    fn quote(&mut self, decision: &Decision<'_>) -> Action;
}

/// Index of the largest value, lowest index on ties.
pub(crate) fn argmax_first<I: IntoIterator<Item = f64>>(values: I) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
