//! The finite-horizon pricing MDP.
//!
//! A state is `(capacity, t, pending)`: remaining capacity per slot, the
//! decision timestep `t ∈ 0..=k` and the product requested in that timestep,
//! if any. The seller answers with a grid price or [`Action::Reject`]. Two
//! independent chance events follow: the customer accepts with probability
//! `p_acc`, and the next timestep's request is drawn from the discrete demand
//! process. Every transition advances `t` by exactly one; `t = k` is terminal.

use rand::Rng;

use crate::demand::DiscreteDemandProcess;
use crate::market::{BudgetRate, CapacityVector, InstanceConfig, Market, Product};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    /// Index into the price grid.
    Price(usize),
    /// The infinite price.
    Reject,
}

impl Action {
    /// Dense code: grid indices first, reject last.
    pub fn code(self, n_prices: usize) -> usize {
        match self {
            Action::Price(i) => i,
            Action::Reject => n_prices,
        }
    }

    pub fn from_code(code: usize, n_prices: usize) -> Self {
        if code >= n_prices {
            Action::Reject
        } else {
            Action::Price(code)
        }
    }

    pub fn is_priced(self) -> bool {
        matches!(self, Action::Price(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub capacity: CapacityVector,
    pub t: u32,
    /// Catalog index of the requested product.
    pub pending: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub next: State,
    pub probability: f64,
    pub reward: f64,
}

/// Demand, customer valuations and the seller's market, bundled as an MDP.
#[derive(Debug, Clone)]
pub struct PricingModel {
    market: Market,
    demand: DiscreteDemandProcess,
    budget: BudgetRate,
    acceptance: Vec<f64>,
    hours: Vec<f64>,
    deadlines: Vec<u32>,
}

impl PricingModel {
    pub fn new(market: Market, demand: DiscreteDemandProcess, budget: BudgetRate) -> Result<Self> {
        if demand.timesteps() != market.timesteps {
            return Err(Error::config(format!(
                "demand has {} timesteps, market {}",
                demand.timesteps(),
                market.timesteps
            )));
        }
        if demand.n_products() != market.catalog.len() {
            return Err(Error::config(format!(
                "demand covers {} products, catalog has {}",
                demand.n_products(),
                market.catalog.len()
            )));
        }
        let acceptance = market.prices.rates().iter().map(|r| budget.survival(*r)).collect();
        let hours = market.catalog.products().iter().map(|p| market.hours(p)).collect();
        let deadlines = market.catalog.products().iter().map(|p| market.deadline(p)).collect();
        Ok(PricingModel {
            market,
            demand,
            budget,
            acceptance,
            hours,
            deadlines,
        })
    }

    pub fn from_config(config: &InstanceConfig) -> Result<Self> {
        Self::new(config.market()?, config.demand_process()?, config.budget)
    }

    pub fn market(&self) -> &Market {
        &self.market
    }

    pub fn demand(&self) -> &DiscreteDemandProcess {
        &self.demand
    }

    pub fn budget(&self) -> &BudgetRate {
        &self.budget
    }

    pub fn horizon(&self) -> u32 {
        self.market.timesteps
    }

    pub fn n_prices(&self) -> usize {
        self.market.prices.len()
    }

    pub fn n_products(&self) -> usize {
        self.market.catalog.len()
    }

    pub fn product(&self, index: usize) -> Product {
        self.market.catalog.get(index)
    }

    pub fn product_hours(&self, index: usize) -> f64 {
        self.hours[index]
    }

    pub fn initial_capacity(&self) -> &CapacityVector {
        &self.market.capacity
    }

    pub fn is_terminal(&self, state: &State) -> bool {
        state.t >= self.horizon()
    }

    /// Whether the pending request can be sold at `state`.
    pub fn pending_feasible(&self, state: &State) -> bool {
        match state.pending {
            Some(i) => {
                state.t < self.horizon()
                    && state.t <= self.deadlines[i]
                    && state.capacity.covers(&self.market.catalog.get(i))
            }
            None => false,
        }
    }

    pub fn n_actions(&self, state: &State) -> usize {
        if self.pending_feasible(state) {
            self.n_prices() + 1
        } else {
            1
        }
    }

    /// Available actions in tie-break order: ascending prices, reject last.
    pub fn actions(&self, state: &State) -> Vec<Action> {
        if self.pending_feasible(state) {
            (0..self.n_prices())
                .map(Action::Price)
                .chain(std::iter::once(Action::Reject))
                .collect()
        } else {
            vec![Action::Reject]
        }
    }

    /// `p_acc`: probability that the customer's total budget covers the
    /// price of `action` for `product`. Zero for reject.
    pub fn acceptance_probability(&self, product: &Product, action: Action) -> f64 {
        match action {
            Action::Price(i) => {
                let hours = self.market.hours(product);
                let total = self.market.prices.total_price(i, hours);
                self.budget.survival(total / hours)
            }
            Action::Reject => 0.0,
        }
    }

    /// `p_acc` by price index; budgets are per hour, so it does not depend on the product.
    pub fn acceptance_by_price(&self, price: usize) -> f64 {
        self.acceptance[price]
    }

    pub fn total_price(&self, product: usize, price: usize) -> f64 {
        self.market.prices.total_price(price, self.hours[product])
    }

    pub fn reward(&self, state: &State, action: Action, accepted: bool) -> f64 {
        match (action, state.pending) {
            (Action::Price(i), Some(p)) if accepted => self.total_price(p, i),
            _ => 0.0,
        }
    }

    fn check_action(&self, state: &State, action: Action) -> Result<()> {
        if self.is_terminal(state) {
            return Err(Error::contract(format!("no transition out of terminal state t = {}", state.t)));
        }
        if action.is_priced() && !self.pending_feasible(state) {
            return Err(Error::contract(format!(
                "priced action {action:?} on an infeasible or empty request at t = {}",
                state.t
            )));
        }
        if let Action::Price(i) = action {
            if i >= self.n_prices() {
                return Err(Error::contract(format!("price index {i} outside the grid")));
            }
        }
        Ok(())
    }

    /// Samples `(next state, reward)`.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        state: &State,
        action: Action,
        rng: &mut R,
    ) -> Result<(State, f64)> {
        self.check_action(state, action)?;
        let mut next = state.clone();
        let reward = self.advance(&mut next, action, rng);
        Ok((next, reward))
    }

    /// In-place transition for a validated `(state, action)` pair.
    pub(crate) fn advance<R: Rng + ?Sized>(&self, state: &mut State, action: Action, rng: &mut R) -> f64 {
        let mut reward = 0.0;
        if let (Action::Price(i), Some(p)) = (action, state.pending) {
            if rng.random::<f64>() < self.acceptance[i] {
                state
                    .capacity
                    .take(&self.market.catalog.get(p))
                    .expect("feasible request");
                reward = self.total_price(p, i);
            }
        }
        state.t += 1;
        state.pending = if state.t < self.horizon() {
            self.demand.sample_step(state.t + 1, rng)
        } else {
            None
        };
        reward
    }

    /// Exact support of the transition law.
    pub fn transition_distribution(&self, state: &State, action: Action) -> Result<Vec<Outcome>> {
        self.check_action(state, action)?;
        let next_t = state.t + 1;
        let pending_law: Vec<(Option<usize>, f64)> = if next_t < self.horizon() {
            let dist = self.demand.step_distribution(next_t + 1);
            let empty = dist.len() - 1;
            dist.into_iter()
                .enumerate()
                .map(|(i, p)| ((i < empty).then_some(i), p))
                .collect()
        } else {
            vec![(None, 1.0)]
        };
        let mut branches: Vec<(CapacityVector, f64, f64)> = Vec::with_capacity(2);
        match (action, state.pending) {
            (Action::Price(i), Some(p)) => {
                let acc = self.acceptance[i];
                if acc > 0.0 {
                    let cap = state.capacity.after_taking(&self.market.catalog.get(p))?;
                    branches.push((cap, acc, self.total_price(p, i)));
                }
                if acc < 1.0 {
                    branches.push((state.capacity.clone(), 1.0 - acc, 0.0));
                }
            }
            _ => branches.push((state.capacity.clone(), 1.0, 0.0)),
        }
        let mut out = Vec::with_capacity(branches.len() * pending_law.len());
        for (cap, p_branch, reward) in branches {
            for &(pending, p_next) in &pending_law {
                out.push(Outcome {
                    next: State {
                        capacity: cap.clone(),
                        t: next_t,
                        pending,
                    },
                    probability: p_branch * p_next,
                    reward,
                });
            }
        }
        Ok(out)
    }

    /// Law of the initial state: full capacity, `t = 0`, pending drawn from the first timestep.
    pub fn initial_distribution(&self) -> Vec<(State, f64)> {
        let dist = self.demand.step_distribution(1);
        let empty = dist.len() - 1;
        dist.into_iter()
            .enumerate()
            .map(|(i, p)| {
                (
                    State {
                        capacity: self.market.capacity.clone(),
                        t: 0,
                        pending: (i < empty).then_some(i),
                    },
                    p,
                )
            })
            .collect()
    }

    pub fn sample_initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        State {
            capacity: self.market.capacity.clone(),
            t: 0,
            pending: self.demand.sample_step(1, rng),
        }
    }

    pub fn state_space(&self) -> StateSpace {
        StateSpace::new(self)
    }

    /// Every non-terminal state, in [`StateSpace`] index order.
    pub fn enumerate_states(&self, ceiling: u128) -> Result<Vec<State>> {
        let space = self.state_space();
        space.check(ceiling)?;
        Ok((0..space.len()).map(|i| space.state(i)).collect())
    }
}

/// Mixed-radix indexing of `(t, capacity, pending)` over all non-terminal states.
///
/// Its size is `k · Π_j (c0_j + 1) · (P + 1)` with `P = n(n+1)/2` contiguous
/// products plus the empty request.
#[derive(Debug, Clone)]
pub struct StateSpace {
    radices: Vec<u32>,
    capacities: usize,
    pendings: usize,
    timesteps: u32,
    count: u128,
}

impl StateSpace {
    fn new(model: &PricingModel) -> Self {
        let radices: Vec<u32> = model.initial_capacity().remaining().iter().map(|c| c + 1).collect();
        let caps: u128 = radices.iter().map(|r| *r as u128).product();
        let pendings = model.n_products() + 1;
        let count = model.horizon() as u128 * caps * pendings as u128;
        StateSpace {
            capacities: usize::try_from(caps).unwrap_or(usize::MAX),
            radices,
            pendings,
            timesteps: model.horizon(),
            count,
        }
    }

    pub fn count(&self) -> u128 {
        self.count
    }

    /// The order-of-magnitude count `k · c0^n · n(n+1)/2`, which leaves out
    /// the empty request and the zero-capacity level.
    pub fn coarse_count(&self) -> u128 {
        let n = self.radices.len() as u128;
        let c: u128 = self.radices.iter().map(|r| (*r - 1) as u128).product();
        self.timesteps as u128 * c * n * (n + 1) / 2
    }

    pub fn check(&self, ceiling: u128) -> Result<()> {
        if self.count > ceiling {
            return Err(Error::Resource {
                what: "MDP state space".into(),
                count: self.count,
                ceiling,
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        usize::try_from(self.count).unwrap_or(usize::MAX)
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn capacities(&self) -> usize {
        self.capacities
    }

    pub fn pendings(&self) -> usize {
        self.pendings
    }

    pub fn capacity_index(&self, capacity: &CapacityVector) -> usize {
        capacity
            .remaining()
            .iter()
            .zip(&self.radices)
            .fold(0usize, |acc, (c, r)| acc * *r as usize + *c as usize)
    }

    pub fn capacity_at(&self, mut index: usize) -> CapacityVector {
        let mut rem = vec![0u32; self.radices.len()];
        for (slot, r) in rem.iter_mut().zip(&self.radices).rev() {
            *slot = (index % *r as usize) as u32;
            index /= *r as usize;
        }
        CapacityVector::new(rem)
    }

    pub fn pending_index(&self, pending: Option<usize>) -> usize {
        pending.unwrap_or(self.pendings - 1)
    }

    pub fn index(&self, state: &State) -> usize {
        (state.t as usize * self.capacities + self.capacity_index(&state.capacity)) * self.pendings
            + self.pending_index(state.pending)
    }

    pub fn state(&self, index: usize) -> State {
        let pend = index % self.pendings;
        let rest = index / self.pendings;
        State {
            capacity: self.capacity_at(rest % self.capacities),
            t: (rest / self.capacities) as u32,
            pending: (pend + 1 < self.pendings).then_some(pend),
        }
    }
}
