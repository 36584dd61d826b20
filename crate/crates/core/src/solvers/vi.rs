//! Exact backward induction over the full state space.
//!
//! The pending request of the next timestep is independent of the current
//! decision, so for each capacity `c'` the continuation
//! `W_{t+1}(c') = Σ_p' p_req(p', t+2) · V(c', t+1, p')` is computed once per
//! layer. The Bellman backup of a feasible request then reads
//! `Q(a) = p_acc(a) · (price(a) + W(c - x)) + (1 - p_acc(a)) · W(c)`.

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::exec::Exec;
use crate::mdp::{Action, PricingModel, State, StateSpace};
use crate::solvers::{Decision, Pricer};
use crate::{Error, Result};

/// Optimal values and a greedy policy for every non-terminal state.
#[derive(Debug, Clone)]
pub struct ViSolution {
    space: StateSpace,
    n_prices: usize,
    values: Vec<f64>,
    policy: Vec<u16>,
    horizon: u32,
    initial_value: f64,
}

impl ViSolution {
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    /// `V*(s)`; zero for terminal states.
    pub fn value(&self, state: &State) -> f64 {
        if state.t >= self.horizon {
            return 0.0;
        }
        self.values[self.space.index(state)]
    }

    pub fn action(&self, state: &State) -> Action {
        if state.t >= self.horizon {
            return Action::Reject;
        }
        Action::from_code(self.policy[self.space.index(state)] as usize, self.n_prices)
    }

    /// Expected optimal revenue from the initial state law.
    pub fn initial_value(&self) -> f64 {
        self.initial_value
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Text format: a header line, then `action_code value` per state in index order.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# evprice vi policy v1 states={} prices={} initial_value={}",
            self.values.len(),
            self.n_prices,
            self.initial_value
        )?;
        for (v, a) in self.values.iter().zip(&self.policy) {
            writeln!(w, "{a} {v}")?;
        }
        Ok(())
    }

    /// Reads a policy written by [`ViSolution::write_to`] for `model`.
    pub fn read_from<R: BufRead>(model: &PricingModel, r: R) -> Result<Self> {
        let space = model.state_space();
        let n_prices = model.n_prices();
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Parse { line: 1, msg: "empty policy file".into() })?;
        let field = |key: &str| -> Result<String> {
            header
                .split_whitespace()
                .find_map(|tok| tok.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .map(str::to_owned)
                .ok_or_else(|| Error::Parse { line: 1, msg: format!("missing `{key}`") })
        };
        let states: usize = field("states")?
            .parse()
            .map_err(|e| Error::Parse { line: 1, msg: format!("states: {e}") })?;
        let prices: usize = field("prices")?
            .parse()
            .map_err(|e| Error::Parse { line: 1, msg: format!("prices: {e}") })?;
        let initial_value: f64 = field("initial_value")?
            .parse()
            .map_err(|e| Error::Parse { line: 1, msg: format!("initial_value: {e}") })?;
        if states != space.len() || prices != n_prices {
            return Err(Error::config(format!(
                "policy covers {states} states and {prices} prices, model has {} and {n_prices}",
                space.len()
            )));
        }
        let mut values = Vec::with_capacity(states);
        let mut policy = Vec::with_capacity(states);
        for (i, line) in lines.enumerate() {
            let line = line?;
            let no = i + 2;
            let mut it = line.split_whitespace();
            let (Some(a), Some(v), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::Parse { line: no, msg: "expected `action value`".into() });
            };
            let a: u16 = a.parse().map_err(|e| Error::Parse { line: no, msg: format!("action: {e}") })?;
            if a as usize > n_prices {
                return Err(Error::Parse { line: no, msg: format!("action code {a} out of range") });
            }
            let v: f64 = v.parse().map_err(|e| Error::Parse { line: no, msg: format!("value: {e}") })?;
            policy.push(a);
            values.push(v);
        }
        if values.len() != states {
            return Err(Error::Parse {
                line: values.len() + 2,
                msg: format!("expected {states} states, found {}", values.len()),
            });
        }
        Ok(ViSolution {
            space,
            n_prices,
            values,
            policy,
            horizon: model.horizon(),
            initial_value,
        })
    }
}

/// Capacity-index offsets for taking each product.
fn take_offsets(model: &PricingModel) -> Vec<usize> {
    let radices: Vec<usize> = model
        .initial_capacity()
        .remaining()
        .iter()
        .map(|c| *c as usize + 1)
        .collect();
    let mut strides = vec![1usize; radices.len()];
    for j in (0..radices.len().saturating_sub(1)).rev() {
        strides[j] = strides[j + 1] * radices[j + 1];
    }
    (0..model.n_products())
        .map(|p| model.product(p).slots().map(|j| strides[j]).sum())
        .collect()
}

/// Solves the MDP exactly.
///
/// Fails with a resource error if the state space exceeds `max_states`.
/// Capacity blocks of one layer are computed through `exec`.
pub fn value_iteration(model: &PricingModel, max_states: u128, exec: Exec) -> Result<ViSolution> {
    let n_prices = model.n_prices();
    if n_prices >= u16::MAX as usize {
        return Err(Error::config("price grid too large for the policy encoding"));
    }
    backward(model, max_states, exec, |ctx| {
        let mut best = f64::NEG_INFINITY;
        let mut best_code = n_prices;
        for i in 0..n_prices {
            let q = ctx.q_price(i);
            if q > best {
                best = q;
                best_code = i;
            }
        }
        if ctx.w_keep > best {
            (ctx.w_keep, n_prices)
        } else {
            (best, best_code)
        }
    })
}

/// Exact value of a fixed policy; the policy is only asked about feasible
/// pending requests.
pub fn evaluate_policy<F>(model: &PricingModel, max_states: u128, policy: F) -> Result<ViSolution>
where
    F: Fn(&State) -> Action,
{
    let n_prices = model.n_prices();
    let mut bad = None;
    let sol = backward(model, max_states, Exec::Sequential, |ctx| {
        match policy(&ctx.state()) {
            Action::Price(i) if i < n_prices => (ctx.q_price(i), i),
            Action::Price(i) => {
                bad.get_or_insert(i);
                (ctx.w_keep, n_prices)
            }
            Action::Reject => (ctx.w_keep, n_prices),
        }
    });
    if let Some(i) = bad {
        return Err(Error::contract(format!("policy returned price index {i} outside the grid")));
    }
    sol
}

struct Backup<'a> {
    model: &'a PricingModel,
    space: &'a StateSpace,
    t: u32,
    cap_idx: usize,
    product: usize,
    w_keep: f64,
    w_take: f64,
}

impl Backup<'_> {
    fn q_price(&self, i: usize) -> f64 {
        let acc = self.model.acceptance_by_price(i);
        acc * (self.model.total_price(self.product, i) + self.w_take) + (1.0 - acc) * self.w_keep
    }

    fn state(&self) -> State {
        State {
            capacity: self.space.capacity_at(self.cap_idx),
            t: self.t,
            pending: Some(self.product),
        }
    }
}

fn backward<F>(model: &PricingModel, max_states: u128, exec: Exec, mut choose: F) -> Result<ViSolution>
where
    F: FnMut(&Backup<'_>) -> (f64, usize),
{
    let space = model.state_space();
    space.check(max_states)?;
    let k = model.horizon();
    let caps = space.capacities();
    let pend = space.pendings();
    let n_products = model.n_products();
    let n_prices = model.n_prices();
    let layer = caps * pend;
    let offsets = take_offsets(model);
    let deadlines: Vec<u32> = (0..n_products)
        .map(|p| model.market().deadline(&model.product(p)))
        .collect();
    // A product can be taken from capacity index `ci` iff every covered slot is positive.
    let capacity_vectors: Vec<Vec<u32>> = (0..caps)
        .map(|ci| space.capacity_at(ci).remaining().to_vec())
        .collect();

    let mut values = vec![0.0f64; space.len()];
    let mut policy = vec![n_prices as u16; space.len()];
    let mut w_next = vec![0.0f64; caps];

    for t in (0..k).rev() {
        let base = t as usize * layer;
        for ci in 0..caps {
            let cap = &capacity_vectors[ci];
            let w_keep = w_next[ci];
            for p in 0..n_products {
                let idx = base + ci * pend + p;
                let product = model.product(p);
                let feasible = t <= deadlines[p] && product.slots().all(|j| cap[j] > 0);
                if !feasible {
                    values[idx] = w_keep;
                    continue;
                }
                let ctx = Backup {
                    model,
                    space: &space,
                    t,
                    cap_idx: ci,
                    product: p,
                    w_keep,
                    w_take: w_next[ci - offsets[p]],
                };
                let (v, code) = choose(&ctx);
                values[idx] = v;
                policy[idx] = code as u16;
            }
            values[base + ci * pend + n_products] = w_keep;
        }
        // Continuation for layer t - 1: the request pending at layer t was
        // drawn from timestep t + 1.
        let dist = model.demand().step_distribution(t + 1);
        let layer_values = &values[base..base + layer];
        w_next = exec.map(caps, |ci| {
            let row = &layer_values[ci * pend..(ci + 1) * pend];
            row.iter().zip(&dist).map(|(v, p)| v * p).sum()
        });
    }
    // After the loop `w_next` holds Σ_p p_req(p, 1) V(c, 0, p) for every c.
    let initial_value = w_next[space.capacity_index(model.initial_capacity())];
    Ok(ViSolution {
        space,
        n_prices,
        values,
        policy,
        horizon: k,
        initial_value,
    })
}

/// Looks up the precomputed optimal action.
pub struct ViPricer {
    solution: Arc<ViSolution>,
}

impl ViPricer {
    pub fn new(solution: Arc<ViSolution>) -> Self {
        ViPricer { solution }
    }
}

impl Pricer for ViPricer {
    fn name(&self) -> &str {
        "vi"
    }

    fn quote(&mut self, decision: &Decision<'_>) -> Action {
        self.solution.action(decision.state)
    }
}
