//! The flat-rate baseline: one per-hour rate for every request, picked on
//! training sequences, with first-come-first-served allocation.

use crate::market::{accepts, CapacityVector, Market, RequestSequence};
use crate::mdp::Action;
use crate::solvers::{argmax_first, Decision, Pricer};
use crate::{Error, Result};

/// Revenue of first-come-first-served selling at grid price `price`.
pub fn flatrate_revenue(seq: &RequestSequence, market: &Market, price: usize) -> f64 {
    let mut capacity: CapacityVector = market.capacity.clone();
    let mut revenue = 0.0;
    for r in &seq.requests {
        if !market.feasible(&capacity, &r.product, r.arrival) {
            continue;
        }
        let total = market.prices.total_price(price, market.hours(&r.product));
        if accepts(total, r.budget) {
            capacity.take(&r.product).expect("feasible request");
            revenue += total;
        }
    }
    revenue
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatrateFit {
    pub price: usize,
    pub rate: f64,
    /// Mean training revenue of every grid rate.
    pub mean_revenue: Vec<f64>,
}

/// Picks the grid rate with the highest mean revenue on `train`; the lower
/// rate wins ties.
pub fn train_flatrate(train: &[RequestSequence], market: &Market) -> Result<FlatrateFit> {
    if train.is_empty() {
        return Err(Error::config("flat-rate training needs at least one sequence"));
    }
    for seq in train {
        market.check_sequence(seq)?;
    }
    let mean_revenue: Vec<f64> = (0..market.prices.len())
        .map(|i| train.iter().map(|s| flatrate_revenue(s, market, i)).sum::<f64>() / train.len() as f64)
        .collect();
    let price = argmax_first(mean_revenue.iter().copied()).expect("non-empty grid");
    Ok(FlatrateFit {
        price,
        rate: market.prices.rate(price),
        mean_revenue,
    })
}

pub struct FlatratePricer {
    price: usize,
}

impl FlatratePricer {
    pub fn new(price: usize) -> Self {
        FlatratePricer { price }
    }
}

impl Pricer for FlatratePricer {
    fn name(&self) -> &str {
        "flatrate"
    }

    fn quote(&mut self, _: &Decision<'_>) -> Action {
        Action::Price(self.price)
    }
}
