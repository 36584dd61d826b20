//! Charging resources, reservation products, prices and the synthetic
//! instance generator.
//!
//! A day is split into `n` equal timeslots; a product is a run of
//! consecutive slots on one charger. Selling a product consumes one unit of
//! capacity in each of its slots. A slot can be sold until its start, so a
//! product's selling deadline is the start of its first slot.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::demand::{Discretization, DiscreteDemandProcess, IntensityVector};
use crate::rng::{seeded, SimRng};
use crate::stats::{normal_cdf, normal_sf};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotGrid {
    n_slots: usize,
    slot_length_hours: f64,
}

impl SlotGrid {
    pub fn new(n_slots: usize, slot_length_hours: f64) -> Result<Self> {
        if n_slots == 0 {
            return Err(Error::config("at least one timeslot is required"));
        }
        if !(slot_length_hours.is_finite() && slot_length_hours > 0.0) {
            return Err(Error::config(format!("slot length must be > 0, got {slot_length_hours}")));
        }
        Ok(SlotGrid {
            n_slots,
            slot_length_hours,
        })
    }

    pub fn from_horizon(horizon_hours: f64, n_slots: usize) -> Result<Self> {
        Self::new(n_slots, horizon_hours / n_slots.max(1) as f64)
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn slot_length_hours(&self) -> f64 {
        self.slot_length_hours
    }

    pub fn horizon_hours(&self) -> f64 {
        self.n_slots as f64 * self.slot_length_hours
    }

    /// Whether every slot boundary falls on a boundary of `timesteps` steps.
    pub fn aligned(&self, timesteps: u32) -> bool {
        (timesteps as usize).is_multiple_of(self.n_slots)
    }

    /// Selling deadline of `slot`, as a decision timestep.
    pub fn deadline(&self, slot: usize, timesteps: u32) -> u32 {
        (slot * (timesteps as usize / self.n_slots)) as u32
    }
}

/// A reservation of consecutive timeslots `first .. first + len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Product {
    first: usize,
    len: usize,
}

impl Product {
    pub fn new(first: usize, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::domain("a product needs at least one slot"));
        }
        Ok(Product { first, len })
    }

    /// Parses a 0/1 incidence vector; the ones must form one contiguous run.
    pub fn from_incidence(incidence: &[u8]) -> Result<Self> {
        if let Some(v) = incidence.iter().find(|v| **v > 1) {
            return Err(Error::domain(format!("incidence entries must be 0 or 1, got {v}")));
        }
        let first = incidence
            .iter()
            .position(|v| *v == 1)
            .ok_or_else(|| Error::domain("empty incidence vector"))?;
        let len = incidence[first..].iter().take_while(|v| **v == 1).count();
        if incidence[first + len..].contains(&1) {
            return Err(Error::domain("product slots must be consecutive"));
        }
        Ok(Product { first, len })
    }

    pub fn first_slot(&self) -> usize {
        self.first
    }

    pub fn last_slot(&self) -> usize {
        self.first + self.len - 1
    }

    pub fn n_slots(&self) -> usize {
        self.len
    }

    pub fn slots(&self) -> Range<usize> {
        self.first..self.first + self.len
    }

    pub fn incidence(&self, n_slots: usize) -> Vec<u8> {
        (0..n_slots).map(|j| self.slots().contains(&j) as u8).collect()
    }

    pub fn hours(&self, grid: &SlotGrid) -> f64 {
        self.len as f64 * grid.slot_length_hours()
    }
}

/// All contiguous products of an `n`-slot grid, ordered by `(first, len)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductCatalog {
    n_slots: usize,
    products: Vec<Product>,
}

impl ProductCatalog {
    pub fn new(n_slots: usize) -> Self {
        let products = (0..n_slots)
            .flat_map(|f| (1..=n_slots - f).map(move |len| Product { first: f, len }))
            .collect();
        ProductCatalog { n_slots, products }
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn get(&self, index: usize) -> Product {
        self.products[index]
    }

    pub fn products(&self) -> &[Product] {
        &self.products
    }

    pub fn index_of(&self, p: &Product) -> usize {
        // products with an earlier first slot: Σ_{f < first} (n - f)
        let f = p.first;
        f * self.n_slots - f * f.saturating_sub(1) / 2 + p.len - 1
    }
}

/// Remaining charger capacity per timeslot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CapacityVector(Vec<u32>);

impl CapacityVector {
    pub fn new(remaining: Vec<u32>) -> Self {
        CapacityVector(remaining)
    }

    pub fn uniform(n_slots: usize, capacity: u32) -> Self {
        CapacityVector(vec![capacity; n_slots])
    }

    pub fn remaining(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn covers(&self, product: &Product) -> bool {
        product.last_slot() < self.0.len() && self.0[product.slots()].iter().all(|c| *c > 0)
    }

    /// Books one unit in every slot of `product`.
    pub fn take(&mut self, product: &Product) -> Result<()> {
        if !self.covers(product) {
            return Err(Error::contract(format!(
                "capacity {:?} cannot hold slots {:?}",
                self.0,
                product.slots()
            )));
        }
        self.0[product.slots()].iter_mut().for_each(|c| *c -= 1);
        Ok(())
    }

    pub fn after_taking(&self, product: &Product) -> Result<Self> {
        let mut next = self.clone();
        next.take(product)?;
        Ok(next)
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|c| *c as u64).sum()
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &CapacityVector) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }
}

/// Ascending per-hour price rates. The reject action (infinite price) is
/// not part of the grid; see [`crate::mdp::Action`].
#[derive(Debug, Clone, PartialEq)]
pub struct PriceGrid {
    rates: Vec<f64>,
}

impl PriceGrid {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::config("price grid is empty"));
        }
        if rates.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(Error::config("price rates must be finite and > 0"));
        }
        if rates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("price rates must be strictly ascending"));
        }
        Ok(PriceGrid { rates })
    }

    /// `min, min + step, …` up to `max` inclusive, rounded to 1e-9.
    pub fn range(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && min > 0.0 && max >= min) {
            return Err(Error::config(format!("invalid price range {min}..{max} step {step}")));
        }
        let count = ((max - min) / step + 1e-9).floor() as usize + 1;
        let rates = (0..count)
            .map(|i| ((min + i as f64 * step) * 1e9).round() / 1e9)
            .collect();
        Self::new(rates)
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn rate(&self, index: usize) -> f64 {
        self.rates[index]
    }

    pub fn total_price(&self, index: usize, hours: f64) -> f64 {
        self.rates[index] * hours
    }

    /// Largest grid action whose total price for `hours` does not exceed `budget`.
    pub fn floor_to_grid(&self, budget: f64, hours: f64) -> Option<usize> {
        self.rates
            .partition_point(|r| accepts(r * hours, budget))
            .checked_sub(1)
    }
}

impl Default for PriceGrid {
    fn default() -> Self {
        PriceGrid::range(0.1, 3.0, 0.1).expect("default grid")
    }
}

/// Customer acceptance rule: pay when the price does not exceed the budget.
#[inline]
pub fn accepts(total_price: f64, budget: f64) -> bool {
    total_price <= budget
}

/// Per-hour willingness to pay: a normal distribution truncated below at
/// `floor` (sampled by rejection).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetRate {
    mean: f64,
    sd: f64,
    floor: f64,
}

impl BudgetRate {
    pub fn new(mean: f64, sd: f64, floor: f64) -> Result<Self> {
        if !(sd.is_finite() && sd > 0.0 && mean.is_finite() && floor.is_finite() && floor >= 0.0) {
            return Err(Error::config(format!(
                "invalid budget distribution mean {mean} sd {sd} floor {floor}"
            )));
        }
        if normal_sf((floor - mean) / sd) < 1e-12 {
            return Err(Error::config("budget floor leaves no probability mass"));
        }
        Ok(BudgetRate { mean, sd, floor })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let normal = Normal::new(self.mean, self.sd).expect("validated");
        loop {
            let x = normal.sample(rng);
            if x > self.floor {
                return x;
            }
        }
    }

    /// `P(R >= rate)`.
    pub fn survival(&self, rate: f64) -> f64 {
        if rate <= self.floor {
            return 1.0;
        }
        let z = |x: f64| (x - self.mean) / self.sd;
        (normal_sf(z(rate)) / normal_sf(z(self.floor))).clamp(0.0, 1.0)
    }

    pub fn cdf(&self, rate: f64) -> f64 {
        1.0 - self.survival(rate)
    }

    /// Inverse survival function by bisection.
    pub fn quantile(&self, p: f64) -> f64 {
        let (mut lo, mut hi) = (self.floor, self.mean + 40.0 * self.sd);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }
}

impl Default for BudgetRate {
    fn default() -> Self {
        BudgetRate::new(1.0, 0.5, 0.0).expect("default budget")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArrivalMode {
    /// At most one request per timestep, drawn from the discrete demand process.
    #[default]
    Discrete,
    /// Raw Poisson timestamps; several requests may share a timestep.
    Continuous,
}

impl std::str::FromStr for ArrivalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrete" => Ok(ArrivalMode::Discrete),
            "continuous" => Ok(ArrivalMode::Continuous),
            other => Err(Error::config(format!("unknown arrival mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for ArrivalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ArrivalMode::Discrete => "discrete",
            ArrivalMode::Continuous => "continuous",
        })
    }
}

/// How the number of timesteps is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Timesteps {
    Fixed(u32),
    /// Smallest slot-aligned count whose relative discretization error is at most this.
    MaxRelativeError(f64),
}

/// A charging request with its hidden budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Request {
    pub product: Product,
    /// Decision timestep `t` in `0..k`; the request arrived in timestep `t + 1`.
    pub arrival: u32,
    pub time_hours: f64,
    /// Total budget for the whole product.
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestSequence {
    pub seed: u64,
    pub slots: SlotGrid,
    pub timesteps: u32,
    pub requests: Vec<Request>,
}

impl RequestSequence {
    pub fn empty(slots: SlotGrid, timesteps: u32) -> Self {
        RequestSequence {
            seed: 0,
            slots,
            timesteps,
            requests: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    const HEADER: &'static str = "arrival_timestep,continuous_time_hours,first_slot,n_slots_requested,budget";

    /// Writes the line-oriented record format: `#` metadata lines, a column
    /// header, then one request per line.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# evprice request sequence v1")?;
        writeln!(w, "# seed={}", self.seed)?;
        writeln!(w, "# slots={}", self.slots.n_slots())?;
        writeln!(w, "# slot_hours={}", self.slots.slot_length_hours())?;
        writeln!(w, "# timesteps={}", self.timesteps)?;
        writeln!(w, "{}", Self::HEADER)?;
        for r in &self.requests {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.arrival,
                r.time_hours,
                r.product.first_slot(),
                r.product.n_slots(),
                r.budget
            )?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf8")
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut seed = None;
        let mut n_slots = None;
        let mut slot_hours = None;
        let mut timesteps = None;
        let mut requests = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let perr = |msg: String| Error::Parse { line: lineno, msg };
            let line = line.trim();
            if line.is_empty() || line == Self::HEADER {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    let v = v.trim();
                    match k.trim() {
                        "seed" => seed = Some(v.parse().map_err(|e| perr(format!("seed: {e}")))?),
                        "slots" => n_slots = Some(v.parse().map_err(|e| perr(format!("slots: {e}")))?),
                        "slot_hours" => {
                            slot_hours = Some(v.parse().map_err(|e| perr(format!("slot_hours: {e}")))?)
                        }
                        "timesteps" => {
                            timesteps = Some(v.parse().map_err(|e| perr(format!("timesteps: {e}")))?)
                        }
                        _ => {}
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(perr(format!("expected 5 fields, got {}", fields.len())));
            }
            let arrival: u32 = fields[0].parse().map_err(|e| perr(format!("arrival: {e}")))?;
            let time_hours: f64 = fields[1].parse().map_err(|e| perr(format!("time: {e}")))?;
            let first: usize = fields[2].parse().map_err(|e| perr(format!("first_slot: {e}")))?;
            let len: usize = fields[3].parse().map_err(|e| perr(format!("n_slots: {e}")))?;
            let budget: f64 = fields[4].parse().map_err(|e| perr(format!("budget: {e}")))?;
            let product = Product::new(first, len).map_err(|e| perr(e.to_string()))?;
            requests.push(Request {
                product,
                arrival,
                time_hours,
                budget,
            });
        }
        let missing = |what: &str| Error::Parse {
            line: 0,
            msg: format!("missing `# {what}=` header"),
        };
        let slots = SlotGrid::new(
            n_slots.ok_or_else(|| missing("slots"))?,
            slot_hours.ok_or_else(|| missing("slot_hours"))?,
        )?;
        let timesteps = timesteps.ok_or_else(|| missing("timesteps"))?;
        if let Some(r) = requests.iter().find(|r| r.product.last_slot() >= slots.n_slots()) {
            return Err(Error::Parse {
                line: 0,
                msg: format!("request slots {:?} outside the grid", r.product.slots()),
            });
        }
        if requests.windows(2).any(|w| w[1].arrival < w[0].arrival) {
            return Err(Error::Parse {
                line: 0,
                msg: "requests are not in arrival order".into(),
            });
        }
        Ok(RequestSequence {
            seed: seed.unwrap_or(0),
            slots,
            timesteps,
            requests,
        })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read_from(text.as_bytes())
    }
}

/// The parameters of a synthetic instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceConfig {
    pub horizon_hours: f64,
    pub n_slots: usize,
    /// Chargers, i.e. initial capacity of every slot.
    pub capacity: u32,
    /// Expected requests over the horizon.
    pub demand: f64,
    pub timesteps: Timesteps,
    pub duration_mean_hours: f64,
    pub start_mean_hours: f64,
    pub start_sd_hours: f64,
    pub budget: BudgetRate,
    pub prices: PriceGrid,
    pub arrivals: ArrivalMode,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            horizon_hours: 24.0,
            n_slots: 24,
            capacity: 3,
            demand: 24.0,
            timesteps: Timesteps::Fixed(192),
            duration_mean_hours: 3.0,
            start_mean_hours: 12.0,
            start_sd_hours: 3.0,
            budget: BudgetRate::default(),
            prices: PriceGrid::default(),
            arrivals: ArrivalMode::Discrete,
        }
    }
}

impl InstanceConfig {
    pub fn slot_grid(&self) -> Result<SlotGrid> {
        SlotGrid::from_horizon(self.horizon_hours, self.n_slots)
    }

    pub fn resolve_timesteps(&self) -> Result<u32> {
        match self.timesteps {
            Timesteps::Fixed(k) => Ok(k),
            Timesteps::MaxRelativeError(eps) => {
                if self.demand <= 0.0 {
                    return Ok(self.n_slots as u32);
                }
                let k = crate::demand::aligned_timesteps(self.demand, eps, self.n_slots as u64)?;
                u32::try_from(k).map_err(|_| Error::config(format!("{k} timesteps is too many")))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let slots = self.slot_grid()?;
        let k = self.resolve_timesteps()?;
        if k == 0 {
            return Err(Error::config("timesteps must be positive"));
        }
        if !slots.aligned(k) {
            return Err(Error::config(format!(
                "{k} timesteps do not align with {} timeslots",
                self.n_slots
            )));
        }
        if !(self.demand >= 0.0 && self.demand.is_finite()) {
            return Err(Error::config(format!("demand must be >= 0, got {}", self.demand)));
        }
        if self.demand > k as f64 {
            return Err(Error::config(format!(
                "{k} timesteps cannot carry demand {} (need k >= lambda)",
                self.demand
            )));
        }
        if self.capacity == 0 {
            return Err(Error::config("capacity must be at least one charger"));
        }
        for (name, v) in [
            ("duration mean", self.duration_mean_hours),
            ("start-time sd", self.start_sd_hours),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !self.start_mean_hours.is_finite() {
            return Err(Error::config("start-time mean must be finite"));
        }
        Ok(())
    }

    pub fn market(&self) -> Result<Market> {
        self.validate()?;
        let slots = self.slot_grid()?;
        Ok(Market {
            slots,
            timesteps: self.resolve_timesteps()?,
            capacity: CapacityVector::uniform(self.n_slots, self.capacity),
            prices: self.prices.clone(),
            catalog: ProductCatalog::new(self.n_slots),
        })
    }

    /// Probability of the start slot, after snapping and clamping the
    /// normal start-time draw.
    pub fn start_slot_distribution(&self) -> Vec<f64> {
        let n = self.n_slots;
        let len = self.horizon_hours / n as f64;
        let cdf = |x: f64| normal_cdf((x - self.start_mean_hours) / self.start_sd_hours);
        (0..n)
            .map(|j| {
                let lo = if j == 0 { 0.0 } else { cdf(j as f64 * len) };
                let hi = if j + 1 == n { 1.0 } else { cdf((j + 1) as f64 * len) };
                hi - lo
            })
            .collect()
    }

    /// Probability that a request starting in `first` spans `len` slots.
    pub fn length_probability(&self, first: usize, len: usize) -> f64 {
        let slot = self.horizon_hours / self.n_slots as f64;
        let room = self.n_slots - first;
        let tail = |m: usize| (-(m as f64) * slot / self.duration_mean_hours).exp();
        match len {
            0 => 0.0,
            l if l < room => tail(l - 1) - tail(l),
            l if l == room => tail(l - 1),
            _ => 0.0,
        }
    }

    /// Probability of every catalog product for one request.
    pub fn product_distribution(&self) -> Vec<f64> {
        let starts = self.start_slot_distribution();
        ProductCatalog::new(self.n_slots)
            .products()
            .iter()
            .map(|p| starts[p.first_slot()] * self.length_probability(p.first_slot(), p.n_slots()))
            .collect()
    }

    pub fn intensity(&self) -> Result<IntensityVector> {
        IntensityVector::new(self.product_distribution().iter().map(|p| p * self.demand).collect())
    }

    pub fn demand_process(&self) -> Result<DiscreteDemandProcess> {
        DiscreteDemandProcess::new(
            self.intensity()?,
            Discretization::new(self.horizon_hours, self.resolve_timesteps()?)?,
        )
    }

    fn sample_product(&self, rng: &mut SimRng) -> Product {
        let n = self.n_slots;
        let slot_len = self.horizon_hours / n as f64;
        let start = Normal::new(self.start_mean_hours, self.start_sd_hours)
            .expect("validated")
            .sample(rng);
        let first = if start < 0.0 {
            0
        } else {
            ((start / slot_len) as usize).min(n - 1)
        };
        let duration = Exp::new(1.0 / self.duration_mean_hours).expect("validated").sample(rng);
        let len = ((duration / slot_len).ceil() as usize).clamp(1, n - first);
        Product { first, len }
    }
}

/// The seller's side of an instance: slots, initial capacity, price grid and
/// the timestep grid decisions are made on.
#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    pub slots: SlotGrid,
    pub timesteps: u32,
    pub capacity: CapacityVector,
    pub prices: PriceGrid,
    pub catalog: ProductCatalog,
}

impl Market {
    pub fn deadline(&self, product: &Product) -> u32 {
        self.slots.deadline(product.first_slot(), self.timesteps)
    }

    pub fn hours(&self, product: &Product) -> f64 {
        product.hours(&self.slots)
    }

    /// Sellable at decision timestep `t` with the given remaining capacity.
    pub fn feasible(&self, capacity: &CapacityVector, product: &Product, t: u32) -> bool {
        t <= self.deadline(product) && capacity.covers(product)
    }

    pub fn check_sequence(&self, seq: &RequestSequence) -> Result<()> {
        if seq.slots != self.slots || seq.timesteps != self.timesteps {
            return Err(Error::config(format!(
                "sequence grid ({} slots x {} h, k = {}) does not match the market ({} slots x {} h, k = {})",
                seq.slots.n_slots(),
                seq.slots.slot_length_hours(),
                seq.timesteps,
                self.slots.n_slots(),
                self.slots.slot_length_hours(),
                self.timesteps
            )));
        }
        Ok(())
    }
}

/// Draws one request sequence. Deterministic in `seed`.
pub fn generate_sequence(config: &InstanceConfig, seed: u64) -> Result<RequestSequence> {
    let market = config.market()?;
    let k = market.timesteps;
    let step_hours = config.horizon_hours / k as f64;
    let mut rng = seeded(seed);
    let mut arrivals: Vec<(u32, f64)> = Vec::new();
    if config.demand > 0.0 {
        match config.arrivals {
            ArrivalMode::Discrete => {
                let aggregate = DiscreteDemandProcess::new(
                    IntensityVector::new(vec![config.demand])?,
                    Discretization::new(config.horizon_hours, k)?,
                )?;
                let mut step = 0u32;
                while let Some(delta) = aggregate.sample_interarrival(step.max(1), &mut rng) {
                    step = step.saturating_add(delta);
                    if step > k {
                        break;
                    }
                    let t = step - 1;
                    let u: f64 = rng.random();
                    arrivals.push((t, (t as f64 + u) * step_hours));
                }
            }
            ArrivalMode::Continuous => {
                let gap = Exp::new(config.demand / config.horizon_hours).expect("positive rate");
                let mut clock = 0.0;
                loop {
                    clock += gap.sample(&mut rng);
                    if clock >= config.horizon_hours {
                        break;
                    }
                    let step = ((clock / step_hours).ceil() as u32).clamp(1, k);
                    arrivals.push((step - 1, clock));
                }
            }
        }
    }
    let slot_hours = market.slots.slot_length_hours();
    let requests = arrivals
        .into_iter()
        .map(|(arrival, time_hours)| {
            let product = config.sample_product(&mut rng);
            let rate = config.budget.sample(&mut rng);
            Request {
                product,
                arrival,
                time_hours,
                budget: rate * product.n_slots() as f64 * slot_hours,
            }
        })
        .collect();
    Ok(RequestSequence {
        seed,
        slots: market.slots,
        timesteps: k,
        requests,
    })
}

/// Flat `key=value` rendering of an instance, in the config-file syntax.
pub fn describe_instance(config: &InstanceConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "instance.horizon_hours={}", config.horizon_hours);
    let _ = writeln!(s, "instance.slots={}", config.n_slots);
    let _ = writeln!(s, "instance.capacity={}", config.capacity);
    let _ = writeln!(s, "instance.demand={}", config.demand);
    match config.timesteps {
        Timesteps::Fixed(k) => {
            let _ = writeln!(s, "instance.timesteps={k}");
        }
        Timesteps::MaxRelativeError(e) => {
            let _ = writeln!(s, "instance.timesteps=auto");
            let _ = writeln!(s, "instance.rel_error={e}");
        }
    }
    let _ = writeln!(s, "instance.duration_mean_hours={}", config.duration_mean_hours);
    let _ = writeln!(s, "instance.start_mean_hours={}", config.start_mean_hours);
    let _ = writeln!(s, "instance.start_sd_hours={}", config.start_sd_hours);
    let _ = writeln!(s, "instance.budget_mean={}", config.budget.mean());
    let _ = writeln!(s, "instance.budget_sd={}", config.budget.sd());
    let _ = writeln!(s, "instance.budget_floor={}", config.budget.floor());
    let _ = writeln!(s, "instance.arrivals={}", config.arrivals);
    let rates: Vec<String> = config.prices.rates().iter().map(|r| r.to_string()).collect();
    let _ = writeln!(s, "prices.rates={}", rates.join(","));
    s
}
