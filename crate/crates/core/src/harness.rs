//! The seller/customer protocol and seeded batch experiments.
//!
//! [`simulate`] plays one request sequence against one pricer: requests are
//! handled in arrival order, infeasible ones are rejected outright, and a
//! feasible one is sold iff the quoted total price is within its budget.
//! [`run_experiment`] repeats that over paired sequences for several
//! pricers and sweep points, and [`grid_search`] does the same over MCTS
//! hyperparameters.

use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::exec::Exec;
use crate::market::{accepts, generate_sequence, CapacityVector, InstanceConfig, Market, Product, RequestSequence, Timesteps};
use crate::mdp::{Action, PricingModel, State};
use crate::rng::{derive_seed, rng_for, SimRng, Stream};
use crate::solvers::{
    oracle, train_flatrate, value_iteration, Decision, FlatratePricer, MctsParams, MctsPricer, OraclePricer,
    Pricer, ViPricer, ViSolution,
};
use crate::stats::Summary;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RequestRecord {
    /// Position in the sequence.
    pub index: usize,
    pub arrival: u32,
    pub time_hours: f64,
    pub product: Product,
    pub budget: f64,
    pub feasible: bool,
    pub action: Action,
    /// Total price offered, if any.
    pub offered: Option<f64>,
    pub accepted: bool,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    /// In processing order.
    pub records: Vec<RequestRecord>,
    pub final_capacity: CapacityVector,
    pub revenue: f64,
    /// Accepted charging hours; products are whole slots, so this is also
    /// the number of slot-hours consumed.
    pub utilization_hours: f64,
    pub accepted: usize,
    pub requests: usize,
    pub runtime_s: f64,
}

/// Plays `seq` against `pricer`.
///
/// Requests sharing an arrival time exactly are put in random order by
/// `tie_rng`. A pricer that quotes a price outside the grid is a contract
/// violation.
pub fn simulate(pricer: &mut dyn Pricer, seq: &RequestSequence, market: &Market, tie_rng: &mut SimRng) -> Result<SimTrace> {
    market.check_sequence(seq)?;
    let start = Instant::now();
    let mut order: Vec<usize> = (0..seq.len()).collect();
    let key = |i: usize| (seq.requests[i].arrival, seq.requests[i].time_hours);
    order.sort_by(|a, b| {
        let (ta, ha) = key(*a);
        let (tb, hb) = key(*b);
        ta.cmp(&tb).then(ha.total_cmp(&hb))
    });
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && key(order[j]) == key(order[i]) {
            j += 1;
        }
        if j - i > 1 {
            order[i..j].shuffle(tie_rng);
        }
        i = j;
    }

    let mut capacity = market.capacity.clone();
    let mut records = Vec::with_capacity(seq.len());
    let (mut revenue, mut hours, mut accepted) = (0.0, 0.0, 0usize);
    for index in order {
        let r = &seq.requests[index];
        let feasible = market.feasible(&capacity, &r.product, r.arrival);
        let action = if feasible {
            let state = State {
                capacity: capacity.clone(),
                t: r.arrival,
                pending: Some(market.catalog.index_of(&r.product)),
            };
            pricer.quote(&Decision {
                state: &state,
                request: r,
                index,
            })
        } else {
            Action::Reject
        };
        let h = market.hours(&r.product);
        let offered = match action {
            Action::Price(p) if p < market.prices.len() => Some(market.prices.total_price(p, h)),
            Action::Price(p) => {
                return Err(Error::contract(format!(
                    "{} quoted price index {p} outside a grid of {}",
                    pricer.name(),
                    market.prices.len()
                )))
            }
            Action::Reject => None,
        };
        let sold = offered.is_some_and(|total| accepts(total, r.budget));
        let reward = if sold {
            capacity.take(&r.product)?;
            revenue += offered.unwrap_or(0.0);
            hours += h;
            accepted += 1;
            offered.unwrap_or(0.0)
        } else {
            0.0
        };
        records.push(RequestRecord {
            index,
            arrival: r.arrival,
            time_hours: r.time_hours,
            product: r.product,
            budget: r.budget,
            feasible,
            action,
            offered,
            accepted: sold,
            reward,
        });
    }
    check_conservation(market, &capacity, &records)?;
    Ok(SimTrace {
        records,
        final_capacity: capacity,
        revenue,
        utilization_hours: hours,
        accepted,
        requests: seq.len(),
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

fn check_conservation(market: &Market, final_capacity: &CapacityVector, records: &[RequestRecord]) -> Result<()> {
    let mut used = vec![0u32; market.slots.n_slots()];
    for r in records.iter().filter(|r| r.accepted) {
        for j in r.product.slots() {
            used[j] += 1;
        }
    }
    let ok = market
        .capacity
        .remaining()
        .iter()
        .zip(final_capacity.remaining())
        .zip(&used)
        .all(|((c0, c), u)| c0 - c == *u);
    if ok {
        Ok(())
    } else {
        Err(Error::contract("capacity bookkeeping does not match the accepted requests"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PricerKind {
    Oracle,
    Mcts,
    Flatrate,
    Vi,
}

impl PricerKind {
    pub fn name(self) -> &'static str {
        match self {
            PricerKind::Oracle => "oracle",
            PricerKind::Mcts => "mcts",
            PricerKind::Flatrate => "flatrate",
            PricerKind::Vi => "vi",
        }
    }
}

impl std::str::FromStr for PricerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(PricerKind::Oracle),
            "mcts" => Ok(PricerKind::Mcts),
            "flatrate" => Ok(PricerKind::Flatrate),
            "vi" => Ok(PricerKind::Vi),
            other => Err(Error::config(format!("unknown pricer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepAxis {
    #[default]
    None,
    /// Timeslot length in hours; the number of slots follows from the horizon.
    TimeslotHours,
    /// Expected requests over the horizon.
    Demand,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::None => "none",
            SweepAxis::TimeslotHours => "timeslot_hours",
            SweepAxis::Demand => "demand",
        }
    }

    /// The instance at sweep value `v`.
    pub fn apply(self, base: &InstanceConfig, v: f64) -> Result<InstanceConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::None => {}
            SweepAxis::TimeslotHours => {
                let n = base.horizon_hours / v;
                if !(v > 0.0 && n >= 1.0 && (n - n.round()).abs() < 1e-9) {
                    return Err(Error::config(format!(
                        "timeslot length {v} h does not divide the {} h horizon",
                        base.horizon_hours
                    )));
                }
                cfg.n_slots = n.round() as usize;
            }
            SweepAxis::Demand => cfg.demand = v,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SweepAxis::None),
            "timeslot_hours" | "timeslot" => Ok(SweepAxis::TimeslotHours),
            "demand" => Ok(SweepAxis::Demand),
            other => Err(Error::config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub instance: InstanceConfig,
    pub axis: SweepAxis,
    /// Ignored when the axis is `None`.
    pub values: Vec<f64>,
    pub pricers: Vec<PricerKind>,
    pub replications: usize,
    pub seed: u64,
    /// Training sequences for the flat rate.
    pub train_sequences: usize,
    /// Use this per-hour rate instead of training; must be on the grid.
    pub flatrate_rate: Option<f64>,
    pub mcts: MctsParams,
    pub vi_max_states: u128,
    /// Keep per-request traces in the results.
    pub keep_traces: bool,
    pub exec: Exec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            instance: InstanceConfig::default(),
            axis: SweepAxis::None,
            values: Vec::new(),
            pricers: vec![PricerKind::Oracle, PricerKind::Mcts, PricerKind::Flatrate],
            replications: 100,
            seed: 0,
            train_sequences: 100,
            flatrate_rate: None,
            mcts: MctsParams::default(),
            vi_max_states: 20_000_000,
            keep_traces: false,
            exec: Exec::Auto,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::config("replications must be at least 1"));
        }
        if self.pricers.is_empty() {
            return Err(Error::config("no pricers selected"));
        }
        if self.axis != SweepAxis::None && self.values.is_empty() {
            return Err(Error::config(format!("sweep over {} needs values", self.axis.name())));
        }
        if self.pricers.contains(&PricerKind::Flatrate) && self.flatrate_rate.is_none() && self.train_sequences == 0 {
            return Err(Error::config("flat-rate training needs at least one sequence"));
        }
        self.mcts.validate()?;
        for c in self.point_configs()? {
            c.validate()?;
        }
        Ok(())
    }

    fn point_values(&self) -> Vec<Option<f64>> {
        match self.axis {
            SweepAxis::None => vec![None],
            _ => self.values.iter().map(|v| Some(*v)).collect(),
        }
    }

    fn point_configs(&self) -> Result<Vec<InstanceConfig>> {
        self.point_values()
            .into_iter()
            .map(|v| match v {
                Some(v) => self.axis.apply(&self.instance, v),
                None => Ok(self.instance.clone()),
            })
            .collect()
    }
}

/// Per-pricer outcome of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub revenue: f64,
    pub utilization_hours: f64,
    pub accepted: usize,
    pub requests: usize,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub sequence_seed: u64,
    pub oracle_revenue: f64,
    /// In [`ExperimentResults::pricers`] order; `None` for skipped pricers.
    pub outcomes: Vec<Option<Outcome>>,
    pub traces: Vec<Option<SimTrace>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub sweep_value: Option<f64>,
    pub instance: InstanceConfig,
    pub timesteps: u32,
    /// Per-hour rate used by the flat-rate pricer.
    pub flatrate_rate: Option<f64>,
    /// Exact optimal expected revenue, when VI ran.
    pub vi_value: Option<f64>,
    /// Pricers skipped at this point, with the reason.
    pub skipped: Vec<(PricerKind, String)>,
    pub replications: Vec<Replication>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub axis: SweepAxis,
    pub pricers: Vec<PricerKind>,
    pub points: Vec<PointResult>,
}

pub const CSV_HEADER: &str = "sweep_axis,sweep_value,pricer,n,revenue_mean,revenue_ci95,utilization_mean_h,accepted_mean,requests_mean,runtime_mean_s,note";

impl ExperimentResults {
    /// Per-replication revenues of `pricer` at point `point`.
    pub fn revenues(&self, point: usize, pricer: PricerKind) -> Option<Vec<f64>> {
        let col = self.pricers.iter().position(|p| *p == pricer)?;
        self.points[point]
            .replications
            .iter()
            .map(|r| r.outcomes[col].as_ref().map(|o| o.revenue))
            .collect()
    }

    /// Replications in which some pricer earned more than the oracle.
    pub fn dominance_violations(&self) -> usize {
        self.points
            .iter()
            .flat_map(|p| &p.replications)
            .map(|r| {
                r.outcomes
                    .iter()
                    .flatten()
                    .filter(|o| o.revenue > r.oracle_revenue + 1e-9 * r.oracle_revenue.abs().max(1.0))
                    .count()
            })
            .sum()
    }

    /// The results table. Runtimes vary between runs, so they are printed
    /// only with `timing`; otherwise the column reads `NA` and the output is
    /// a pure function of the spec.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for point in &self.points {
            let sweep_value = point.sweep_value.map_or("NA".to_string(), |v| format!("{v}"));
            for (col, kind) in self.pricers.iter().enumerate() {
                let prefix = format!("{},{},{}", self.axis.name(), sweep_value, kind.name());
                if let Some((_, why)) = point.skipped.iter().find(|(k, _)| k == kind) {
                    let _ = writeln!(out, "{prefix},0,NA,NA,NA,NA,NA,NA,{why}");
                    continue;
                }
                let pick = |f: &dyn Fn(&Outcome) -> f64| -> Vec<f64> {
                    point
                        .replications
                        .iter()
                        .filter_map(|r| r.outcomes[col].as_ref().map(f))
                        .collect()
                };
                let revenue = Summary::of(&pick(&|o| o.revenue));
                let util = Summary::of(&pick(&|o| o.utilization_hours));
                let acc = Summary::of(&pick(&|o| o.accepted as f64));
                let req = Summary::of(&pick(&|o| o.requests as f64));
                let runtime = if timing {
                    format!("{:.6}", Summary::of(&pick(&|o| o.runtime_s)).mean)
                } else {
                    "NA".into()
                };
                let _ = writeln!(
                    out,
                    "{prefix},{},{:.6},{:.6},{:.6},{:.6},{:.6},{runtime},",
                    revenue.n, revenue.mean, revenue.ci95, util.mean, acc.mean, req.mean
                );
            }
        }
        out
    }

    /// One line per processed request, for allocation plots.
    pub fn write_traces<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "sweep_value,pricer,replication,index,arrival_timestep,time_hours,first_slot,n_slots,budget,feasible,offered,accepted,reward"
        )?;
        for point in &self.points {
            let sv = point.sweep_value.map_or("NA".to_string(), |v| format!("{v}"));
            for (rep, r) in point.replications.iter().enumerate() {
                for (col, trace) in r.traces.iter().enumerate() {
                    let Some(trace) = trace else { continue };
                    for rec in &trace.records {
                        let offered = rec.offered.map_or("NA".to_string(), |o| format!("{o:.6}"));
                        writeln!(
                            w,
                            "{sv},{},{rep},{},{},{:.6},{},{},{:.6},{},{offered},{},{:.6}",
                            self.pricers[col].name(),
                            rec.index,
                            rec.arrival,
                            rec.time_hours,
                            rec.product.first_slot(),
                            rec.product.n_slots(),
                            rec.budget,
                            rec.feasible,
                            rec.accepted,
                            rec.reward
                        )?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Sequence seed of replication `rep` at sweep point `point`.
pub fn sequence_seed(root: u64, point: usize, rep: usize) -> u64 {
    derive_seed(root, Stream::Gen, point as u64, rep as u64)
}

fn flatrate_price(spec: &ExperimentSpec, cfg: &InstanceConfig, market: &Market, point: usize) -> Result<usize> {
    if let Some(rate) = spec.flatrate_rate {
        return market
            .prices
            .rates()
            .iter()
            .position(|r| (r - rate).abs() < 1e-9)
            .ok_or_else(|| Error::config(format!("flat rate {rate} is not on the price grid")));
    }
    let train = spec
        .exec
        .map(spec.train_sequences, |i| {
            generate_sequence(cfg, derive_seed(spec.seed, Stream::Train, point as u64, i as u64))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(train_flatrate(&train, market)?.price)
}

/// Runs every pricer on `spec.replications` paired sequences per sweep point.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResults> {
    spec.validate()?;
    let mut points = Vec::new();
    for (pi, (value, cfg)) in spec.point_values().into_iter().zip(spec.point_configs()?).enumerate() {
        let model = Arc::new(PricingModel::from_config(&cfg)?);
        let market = model.market();
        let mut skipped = Vec::new();
        let flat = if spec.pricers.contains(&PricerKind::Flatrate) {
            Some(flatrate_price(spec, &cfg, market, pi)?)
        } else {
            None
        };
        let vi: Option<Arc<ViSolution>> = if spec.pricers.contains(&PricerKind::Vi) {
            match value_iteration(&model, spec.vi_max_states, spec.exec) {
                Ok(sol) => Some(Arc::new(sol)),
                Err(Error::Resource { .. }) => {
                    skipped.push((PricerKind::Vi, "skipped: memory guard".to_string()));
                    None
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        let replications = spec
            .exec
            .map(spec.replications, |rep| {
                replicate(spec, &cfg, &model, pi, rep, flat, vi.as_ref())
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        points.push(PointResult {
            sweep_value: value,
            timesteps: market.timesteps,
            instance: cfg,
            flatrate_rate: flat.map(|p| market.prices.rate(p)),
            vi_value: vi.as_ref().map(|s| s.initial_value()),
            skipped,
            replications,
        });
    }
    Ok(ExperimentResults {
        axis: spec.axis,
        pricers: spec.pricers.clone(),
        points,
    })
}

fn replicate(
    spec: &ExperimentSpec,
    cfg: &InstanceConfig,
    model: &Arc<PricingModel>,
    point: usize,
    rep: usize,
    flat: Option<usize>,
    vi: Option<&Arc<ViSolution>>,
) -> Result<Replication> {
    let market = model.market();
    let seed = sequence_seed(spec.seed, point, rep);
    let seq = generate_sequence(cfg, seed)?;
    let hindsight = oracle(&seq, market);
    let oracle_revenue = hindsight.revenue;
    let mut outcomes = Vec::with_capacity(spec.pricers.len());
    let mut traces = Vec::with_capacity(spec.pricers.len());
    for kind in &spec.pricers {
        let mut pricer: Box<dyn Pricer> = match kind {
            PricerKind::Oracle => Box::new(OraclePricer::new(hindsight.clone())),
            PricerKind::Mcts => Box::new(MctsPricer::new(
                Arc::clone(model),
                spec.mcts,
                rng_for(spec.seed, Stream::Pricer, point as u64, rep as u64),
            )),
            PricerKind::Flatrate => Box::new(FlatratePricer::new(flat.expect("trained"))),
            PricerKind::Vi => match vi {
                Some(sol) => Box::new(ViPricer::new(Arc::clone(sol))),
                None => {
                    outcomes.push(None);
                    traces.push(None);
                    continue;
                }
            },
        };
        let mut tie = rng_for(spec.seed, Stream::TieBreak, point as u64, rep as u64);
        let trace = simulate(pricer.as_mut(), &seq, market, &mut tie)?;
        outcomes.push(Some(Outcome {
            revenue: trace.revenue,
            utilization_hours: trace.utilization_hours,
            accepted: trace.accepted,
            requests: trace.requests,
            runtime_s: trace.runtime_s,
        }));
        traces.push(spec.keep_traces.then_some(trace));
    }
    Ok(Replication {
        sequence_seed: seed,
        oracle_revenue,
        outcomes,
        traces,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub exploration: Vec<f64>,
    pub depth: Vec<u32>,
    pub iterations: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub params: MctsParams,
    pub revenue: Summary,
    pub runtime: Summary,
    pub revenues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResults {
    pub cells: Vec<GridCell>,
    pub best: usize,
}

pub const GRID_CSV_HEADER: &str = "exploration,depth,iterations,n,revenue_mean,revenue_ci95,runtime_mean_s";

impl GridResults {
    pub fn best(&self) -> &GridCell {
        &self.cells[self.best]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(GRID_CSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6}",
                c.params.exploration,
                c.params.max_depth,
                c.params.iterations,
                c.revenue.n,
                c.revenue.mean,
                c.revenue.ci95,
                c.runtime.mean
            );
        }
        out
    }
}

/// Evaluates MCTS on every `(c, d, μ)` cell with the same
/// `spec.replications` sequences. The best cell has the highest mean
/// revenue; the faster one wins exact ties.
pub fn grid_search(spec: &ExperimentSpec, grid: &GridSpec) -> Result<GridResults> {
    if grid.exploration.is_empty() || grid.depth.is_empty() || grid.iterations.is_empty() {
        return Err(Error::config("every grid axis needs at least one value"));
    }
    if spec.replications == 0 {
        return Err(Error::config("replications must be at least 1"));
    }
    let model = Arc::new(PricingModel::from_config(&spec.instance)?);
    let market = model.market();
    let mut params = Vec::new();
    for &c in &grid.exploration {
        for &d in &grid.depth {
            for &mu in &grid.iterations {
                let p = MctsParams {
                    exploration: c,
                    max_depth: d,
                    iterations: mu,
                    ..spec.mcts
                };
                p.validate()?;
                params.push(p);
            }
        }
    }
    let sequences = spec
        .exec
        .map(spec.replications, |rep| generate_sequence(&spec.instance, sequence_seed(spec.seed, 0, rep)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let n = spec.replications;
    let runs = spec
        .exec
        .map(params.len() * n, |job| -> Result<(f64, f64)> {
            let (cell, rep) = (job / n, job % n);
            let mut pricer = MctsPricer::new(
                Arc::clone(&model),
                params[cell],
                rng_for(spec.seed, Stream::Pricer, cell as u64, rep as u64),
            );
            let mut tie = rng_for(spec.seed, Stream::TieBreak, 0, rep as u64);
            let trace = simulate(&mut pricer, &sequences[rep], market, &mut tie)?;
            Ok((trace.revenue, trace.runtime_s))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<GridCell> = params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let chunk = &runs[i * n..(i + 1) * n];
            let revenues: Vec<f64> = chunk.iter().map(|r| r.0).collect();
            let runtimes: Vec<f64> = chunk.iter().map(|r| r.1).collect();
            GridCell {
                params: *p,
                revenue: Summary::of(&revenues),
                runtime: Summary::of(&runtimes),
                revenues,
            }
        })
        .collect();
    let mut best = 0;
    for (i, c) in cells.iter().enumerate().skip(1) {
        let b = &cells[best];
        if c.revenue.mean > b.revenue.mean || (c.revenue.mean == b.revenue.mean && c.runtime.mean < b.runtime.mean) {
            best = i;
        }
    }
    Ok(GridResults { cells, best })
}

/// Relative discretization error implied by an instance, `None` without demand.
pub fn implied_relative_error(cfg: &InstanceConfig) -> Result<Option<f64>> {
    if cfg.demand <= 0.0 {
        return Ok(None);
    }
    let k = cfg.resolve_timesteps()?;
    crate::demand::relative_error(k as u64, cfg.demand).map(Some)
}

/// The instance with `auto` timesteps resolved.
pub fn resolved(cfg: &InstanceConfig) -> Result<InstanceConfig> {
    Ok(InstanceConfig {
        timesteps: Timesteps::Fixed(cfg.resolve_timesteps()?),
        ..cfg.clone()
    })
}
