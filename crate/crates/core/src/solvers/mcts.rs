//! UCT Monte-Carlo tree search over the pricing MDP.
//!
//! Each iteration descends from the root for at most `max_depth` levels.
//! A node tries every untried action once (ascending price, reject last)
//! before switching to UCB1 selection, and the descent stops at the first
//! untried action or at a terminal state. The remaining value is estimated
//! by a uniformly random rollout that jumps between arrivals with geometric
//! inter-arrival times. Every `(node, action)` on the path then averages in
//! the reward collected below its level.
//!
//! Nodes are keyed by MDP state, so identical states reached along
//! different paths share statistics.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use crate::mdp::{Action, PricingModel, State};
use crate::rng::{seeded, SimRng};
use crate::solvers::{argmax_first, Decision, Pricer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UcbSign {
    /// `q + c·sqrt(ln n_s / n_sa)`: standard UCB1.
    #[default]
    Plus,
    /// `q - c·sqrt(ln n_s / n_sa)`, as printed in the original pseudocode.
    Minus,
}

impl std::str::FromStr for UcbSign {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "plus" | "+" => Ok(UcbSign::Plus),
            "minus" | "-" => Ok(UcbSign::Minus),
            other => Err(crate::Error::config(format!("unknown ucb sign `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MctsParams {
    pub exploration: f64,
    pub max_depth: u32,
    pub iterations: u32,
    pub seed: u64,
    pub ucb_sign: UcbSign,
    /// Keep the subtree of the realized state between real decisions.
    pub reuse: bool,
}

impl MctsParams {
    /// Grid-search winners: 10 000 iterations, depth 10, c = 3.
    pub fn tuned() -> Self {
        MctsParams {
            exploration: 3.0,
            max_depth: 10,
            iterations: 10_000,
            seed: 0,
            ucb_sign: UcbSign::Plus,
            reuse: true,
        }
    }

    /// The lighter setting: 800 iterations, depth 3, c = 1.
    pub fn light() -> Self {
        MctsParams {
            exploration: 1.0,
            max_depth: 3,
            iterations: 800,
            ..Self::tuned()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "tuned" => Some(Self::tuned()),
            "light" => Some(Self::light()),
            _ => None,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.exploration >= 0.0 && self.exploration.is_finite()) {
            return Err(crate::Error::config(format!("exploration must be >= 0, got {}", self.exploration)));
        }
        if self.max_depth == 0 || self.iterations == 0 {
            return Err(crate::Error::config("MCTS depth and iterations must be positive"));
        }
        Ok(())
    }
}

impl Default for MctsParams {
    fn default() -> Self {
        Self::tuned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionStats {
    pub action: Action,
    pub visits: u64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub visits: u64,
    pub actions: Vec<ActionStats>,
}

impl Node {
    fn new(model: &PricingModel, state: &State) -> Self {
        Node {
            visits: 0,
            actions: model
                .actions(state)
                .into_iter()
                .map(|action| ActionStats {
                    action,
                    visits: 0,
                    q: 0.0,
                })
                .collect(),
        }
    }

    fn select(&self, exploration: f64, sign: UcbSign) -> usize {
        if let Some(i) = self.actions.iter().position(|a| a.visits == 0) {
            return i;
        }
        let ln_n = (self.visits as f64).ln();
        let s = match sign {
            UcbSign::Plus => 1.0,
            UcbSign::Minus => -1.0,
        };
        argmax_first(
            self.actions
                .iter()
                .map(|a| a.q + s * exploration * (ln_n / a.visits as f64).sqrt()),
        )
        .expect("nodes have at least one action")
    }

    /// Highest mean among tried actions; lowest price on ties.
    pub fn best_action(&self) -> Action {
        argmax_first(
            self.actions
                .iter()
                .map(|a| if a.visits > 0 { a.q } else { f64::NEG_INFINITY }),
        )
        .map(|i| self.actions[i].action)
        .unwrap_or(Action::Reject)
    }
}

/// Search statistics keyed by state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchTree {
    root: Option<State>,
    nodes: HashMap<State, Node>,
}

impl SearchTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn root(&self) -> Option<&State> {
        self.root.as_ref()
    }

    pub fn node(&self, state: &State) -> Option<&Node> {
        self.nodes.get(state)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&State, &Node)> {
        self.nodes.iter()
    }

    /// Runs `params.iterations` iterations from `state` and returns the
    /// best root action. Statistics already in the tree are kept.
    pub fn search(&mut self, model: &PricingModel, state: &State, params: &MctsParams, rng: &mut SimRng) -> Action {
        if model.is_terminal(state) || !model.pending_feasible(state) {
            return Action::Reject;
        }
        self.root = Some(state.clone());
        let mut path: Vec<(State, usize, f64)> = Vec::with_capacity(params.max_depth as usize);
        for _ in 0..params.iterations {
            path.clear();
            let mut s = state.clone();
            let mut collected = 0.0;
            for _ in 0..params.max_depth {
                let node = self
                    .nodes
                    .entry(s.clone())
                    .or_insert_with(|| Node::new(model, &s));
                let slot = node.select(params.exploration, params.ucb_sign);
                let untried = node.actions[slot].visits == 0;
                let action = node.actions[slot].action;
                let mut next = s.clone();
                let reward = model.advance(&mut next, action, rng);
                path.push((s, slot, collected));
                collected += reward;
                s = next;
                if model.is_terminal(&s) || untried {
                    break;
                }
            }
            let total = collected + rollout(model, &s, rng);
            for (visited, slot, before) in path.drain(..) {
                let node = self.nodes.get_mut(&visited).expect("expanded on descent");
                let stats = &mut node.actions[slot];
                stats.q = (stats.visits as f64 * stats.q + (total - before)) / (stats.visits + 1) as f64;
                stats.visits += 1;
                node.visits += 1;
            }
        }
        self.nodes[state].best_action()
    }
}

/// Keeps the part of `tree` reachable from `state`; a fresh tree if
/// `state` was never expanded.
pub fn reroot(mut tree: SearchTree, state: &State) -> SearchTree {
    if !tree.nodes.contains_key(state) {
        return SearchTree::new();
    }
    tree.nodes
        .retain(|s, _| s == state || (s.t > state.t && s.capacity.le(&state.capacity)));
    tree.root = Some(state.clone());
    tree
}

/// Reward of a uniformly random policy from `state` to the horizon.
///
/// Infeasible requests are rejected; feasible ones get a uniform draw over
/// the grid prices and reject.
pub fn rollout<R: Rng + ?Sized>(model: &PricingModel, state: &State, rng: &mut R) -> f64 {
    let k = model.horizon();
    if state.t >= k {
        return 0.0;
    }
    let demand = model.demand();
    let n_prices = model.n_prices();
    let mut probe = state.clone();
    let mut reward = 0.0;
    loop {
        if let Some(p) = probe.pending {
            if model.pending_feasible(&probe) {
                let choice = rng.random_range(0..=n_prices);
                if choice < n_prices && rng.random::<f64>() < model.acceptance_by_price(choice) {
                    probe
                        .capacity
                        .take(&model.product(p))
                        .expect("feasible request");
                    reward += model.total_price(p, choice);
                }
            }
        }
        match demand.sample_interarrival(probe.t + 1, rng) {
            Some(dt) if (probe.t as u64 + dt as u64) < k as u64 => {
                probe.t += dt;
                probe.pending = Some(demand.sample_product(rng));
            }
            _ => return reward,
        }
    }
}

/// One-shot search from a fresh tree, seeded by `params.seed`.
pub fn mcts_plan(model: &PricingModel, state: &State, params: &MctsParams) -> Action {
    let mut rng = seeded(params.seed);
    SearchTree::new().search(model, state, params, &mut rng)
}

/// MCTS as an online pricer, optionally reusing its tree between decisions.
pub struct MctsPricer {
    model: Arc<PricingModel>,
    params: MctsParams,
    tree: SearchTree,
    rng: SimRng,
}

impl MctsPricer {
    pub fn new(model: Arc<PricingModel>, params: MctsParams, rng: SimRng) -> Self {
        MctsPricer {
            model,
            params,
            tree: SearchTree::new(),
            rng,
        }
    }

    pub fn tree(&self) -> &SearchTree {
        &self.tree
    }
}

impl Pricer for MctsPricer {
    fn name(&self) -> &str {
        "mcts"
    }

    fn quote(&mut self, decision: &Decision<'_>) -> Action {
        let tree = std::mem::take(&mut self.tree);
        self.tree = if self.params.reuse {
            reroot(tree, decision.state)
        } else {
            SearchTree::new()
        };
        self.tree
            .search(&self.model, decision.state, &self.params, &mut self.rng)
    }
}
