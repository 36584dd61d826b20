//! The hindsight benchmark: with every budget known, sell each request at
//! the highest grid price its budget covers and choose the most valuable
//! subset that fits the capacity. That is a multi-dimensional 0/1 knapsack,
//! solved exactly by depth-first branch and bound.
//!
//! Items are explored in decreasing value density. The bound at a node is
//! the smaller of two relaxations over the remaining items:
//! a fractional knapsack on the pooled capacity `Σ_j c_j`, and the per-slot
//! split in which slot `j` sells its `c_j` best per-slot values `v_i / len_i`.

use crate::market::{Market, RequestSequence};
use crate::mdp::Action;
use crate::solvers::{Decision, Pricer};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// Sum of the accepted prices, in sequence order.
    pub revenue: f64,
    pub accepted: Vec<bool>,
    /// Floored grid price of each request, `None` if its budget is below the grid.
    pub prices: Vec<Option<usize>>,
    /// Branch-and-bound nodes visited.
    pub nodes: u64,
}

struct Item {
    index: usize,
    first: usize,
    len: usize,
    value: f64,
}

struct Search<'a> {
    items: &'a [Item],
    capacity: Vec<u32>,
    chosen: Vec<bool>,
    value: f64,
    best: f64,
    best_set: Vec<bool>,
    nodes: u64,
    scratch: Vec<Vec<f64>>,
}

impl Search<'_> {
    fn bound(&mut self, from: usize) -> f64 {
        let rest = &self.items[from..];
        // pooled fractional knapsack; items are already sorted by density
        let mut room: f64 = self.capacity.iter().map(|c| *c as f64).sum();
        let mut pooled = 0.0;
        for it in rest {
            if !self.fits(it) {
                continue;
            }
            let w = it.len as f64;
            if w <= room {
                pooled += it.value;
                room -= w;
            } else {
                pooled += it.value * room / w;
                break;
            }
        }
        // per-slot split
        for col in self.scratch.iter_mut() {
            col.clear();
        }
        for it in rest {
            if !self.fits(it) {
                continue;
            }
            let share = it.value / it.len as f64;
            for j in it.first..it.first + it.len {
                self.scratch[j].push(share);
            }
        }
        let mut split = 0.0;
        for (j, col) in self.scratch.iter_mut().enumerate() {
            let c = self.capacity[j] as usize;
            if col.len() > c {
                col.sort_unstable_by(|a, b| b.total_cmp(a));
                col.truncate(c);
            }
            split += col.iter().sum::<f64>();
        }
        pooled.min(split)
    }

    fn fits(&self, it: &Item) -> bool {
        self.capacity[it.first..it.first + it.len].iter().all(|c| *c > 0)
    }

    fn dfs(&mut self, depth: usize) {
        self.nodes += 1;
        if self.value > self.best {
            self.best = self.value;
            self.best_set.clone_from(&self.chosen);
        }
        if depth == self.items.len() {
            return;
        }
        if self.value + self.bound(depth) <= self.best + 1e-12 * self.best.abs().max(1.0) {
            return;
        }
        let it = &self.items[depth];
        if self.fits(it) {
            let (first, len, value, index) = (it.first, it.len, it.value, it.index);
            for c in &mut self.capacity[first..first + len] {
                *c -= 1;
            }
            self.chosen[index] = true;
            self.value += value;
            self.dfs(depth + 1);
            self.value -= value;
            self.chosen[index] = false;
            for c in &mut self.capacity[first..first + len] {
                *c += 1;
            }
        }
        self.dfs(depth + 1);
    }
}

/// Optimal hindsight revenue of `seq`.
///
/// Requests whose budget is below the lowest grid price, or that arrive
/// after their selling deadline, can never be sold and are left out before
/// the search.
pub fn oracle(seq: &RequestSequence, market: &Market) -> OracleSolution {
    let n = seq.requests.len();
    let prices: Vec<Option<usize>> = seq
        .requests
        .iter()
        .map(|r| market.prices.floor_to_grid(r.budget, market.hours(&r.product)))
        .collect();
    let mut items: Vec<Item> = seq
        .requests
        .iter()
        .zip(&prices)
        .enumerate()
        .filter_map(|(index, (r, price))| {
            let price = (*price)?;
            let sellable = r.arrival <= market.deadline(&r.product) && market.capacity.covers(&r.product);
            sellable.then(|| Item {
                index,
                first: r.product.first_slot(),
                len: r.product.n_slots(),
                value: market.prices.total_price(price, market.hours(&r.product)),
            })
        })
        .collect();
    items.sort_by(|a, b| {
        (b.value / b.len as f64)
            .total_cmp(&(a.value / a.len as f64))
            .then(a.index.cmp(&b.index))
    });
    let mut search = Search {
        items: &items,
        capacity: market.capacity.remaining().to_vec(),
        chosen: vec![false; n],
        value: 0.0,
        best: 0.0,
        best_set: vec![false; n],
        nodes: 0,
        scratch: vec![Vec::new(); market.slots.n_slots()],
    };
    search.dfs(0);
    let accepted = search.best_set;
    let revenue = accepted
        .iter()
        .zip(&seq.requests)
        .zip(&prices)
        .filter(|((a, _), _)| **a)
        .map(|((_, r), p)| market.prices.total_price(p.expect("priced"), market.hours(&r.product)))
        .sum();
    OracleSolution {
        revenue,
        accepted,
        prices,
        nodes: search.nodes,
    }
}

/// Replays a hindsight solution: accepted requests are offered their
/// floored price, everything else is rejected.
pub struct OraclePricer {
    solution: OracleSolution,
}

impl OraclePricer {
    pub fn new(solution: OracleSolution) -> Self {
        OraclePricer { solution }
    }
}

impl Pricer for OraclePricer {
    fn name(&self) -> &str {
        "oracle"
    }

    fn quote(&mut self, decision: &Decision<'_>) -> Action {
        match (
            self.solution.accepted.get(decision.index),
            self.solution.prices.get(decision.index),
        ) {
            (Some(true), Some(Some(p))) => Action::Price(*p),
            _ => Action::Reject,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{generate_sequence, InstanceConfig, Product, Request, SlotGrid, Timesteps};
    use proptest::prelude::*;

    fn market(n_slots: usize, capacity: u32, k: u32) -> Market {
        InstanceConfig {
            n_slots,
            horizon_hours: n_slots as f64,
            capacity,
            timesteps: Timesteps::Fixed(k),
            demand: 1.0,
            ..InstanceConfig::default()
        }
        .market()
        .unwrap()
    }

    /// Best feasible subset by enumeration.
    fn exhaustive(seq: &RequestSequence, m: &Market) -> f64 {
        let n = seq.requests.len();
        let mut best = 0.0f64;
        for mask in 0u32..(1 << n) {
            let mut cap = m.capacity.clone();
            let mut value = 0.0;
            let mut ok = true;
            for (i, r) in seq.requests.iter().enumerate() {
                if mask & (1 << i) == 0 {
                    continue;
                }
                let hours = m.hours(&r.product);
                let Some(p) = m.prices.floor_to_grid(r.budget, hours) else {
                    ok = false;
                    break;
                };
                if r.arrival > m.deadline(&r.product) || cap.take(&r.product).is_err() {
                    ok = false;
                    break;
                }
                value += m.prices.total_price(p, hours);
            }
            if ok {
                best = best.max(value);
            }
        }
        best
    }

    fn check_solution(seq: &RequestSequence, m: &Market, sol: &OracleSolution) {
        let mut cap = m.capacity.clone();
        for (r, a) in seq.requests.iter().zip(&sol.accepted) {
            if *a {
                assert!(r.arrival <= m.deadline(&r.product));
                cap.take(&r.product).unwrap();
            }
        }
    }

    #[test]
    fn two_requests_one_charger() {
        let m = market(2, 1, 4);
        let seq = RequestSequence {
            requests: vec![
                Request {
                    product: Product::new(0, 2).unwrap(),
                    arrival: 0,
                    time_hours: 0.1,
                    budget: 2.0,
                },
                Request {
                    product: Product::new(1, 1).unwrap(),
                    arrival: 1,
                    time_hours: 0.7,
                    budget: 3.0,
                },
            ],
            ..RequestSequence::empty(SlotGrid::new(2, 1.0).unwrap(), 4)
        };
        let sol = oracle(&seq, &m);
        assert_eq!(sol.accepted, vec![false, true]);
        assert!((sol.revenue - 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_sequence() {
        let m = market(3, 2, 6);
        let sol = oracle(&RequestSequence::empty(m.slots, 6), &m);
        assert_eq!(sol.revenue, 0.0);
    }

    #[test]
    fn matches_exhaustive_on_generated_instances() {
        let mut checked = 0;
        let mut seed = 0u64;
        while checked < 200 {
            let n_slots = 2 + (seed % 5) as usize;
            let cfg = InstanceConfig {
                n_slots,
                horizon_hours: n_slots as f64 * 2.0,
                capacity: 1 + (seed % 3) as u32,
                timesteps: Timesteps::Fixed(8 * n_slots as u32),
                demand: 3.0 + (seed % 13) as f64,
                start_mean_hours: n_slots as f64,
                start_sd_hours: n_slots as f64 / 2.0,
                ..InstanceConfig::default()
            };
            seed += 1;
            let seq = generate_sequence(&cfg, seed).unwrap();
            if seq.len() > 18 {
                continue;
            }
            let m = cfg.market().unwrap();
            let sol = oracle(&seq, &m);
            check_solution(&seq, &m, &sol);
            let ex = exhaustive(&seq, &m);
            assert!((sol.revenue - ex).abs() <= 1e-9, "seed {seed}: {} vs {ex}", sol.revenue);
            checked += 1;
        }
    }

    proptest! {
        #[test]
        fn never_below_a_greedy_packing(
            raw in prop::collection::vec((0usize..4, 1usize..4, 0u32..8, 0.0f64..12.0), 0..14),
            cap in 1u32..3,
        ) {
            let m = market(4, cap, 8);
            let requests: Vec<Request> = raw
                .into_iter()
                .map(|(f, l, t, b)| Request {
                    product: Product::new(f, l.min(4 - f)).unwrap(),
                    arrival: t,
                    time_hours: t as f64 * 0.5,
                    budget: b,
                })
                .collect();
            let mut sorted = requests.clone();
            sorted.sort_by_key(|r| r.arrival);
            let seq = RequestSequence { requests: sorted, ..RequestSequence::empty(m.slots, 8) };
            let sol = oracle(&seq, &m);
            check_solution(&seq, &m, &sol);
            prop_assert!((sol.revenue - exhaustive(&seq, &m)).abs() <= 1e-9);
        }
    }
}
