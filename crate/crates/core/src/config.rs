//! Flat `key = value` configuration.
//!
//! One assignment per line, `#` starts a comment. Keys are consumed by the
//! loaders; whatever is left over at the end is reported as unknown, so a
//! typo never silently falls back to a default.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::market::{ArrivalMode, BudgetRate, InstanceConfig, PriceGrid, Timesteps};
use crate::solvers::{MctsParams, UcbSign};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = KvMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Parse { line: i + 1, msg: "empty key".into() });
            }
            if map.entries.insert(key.to_owned(), v.trim().to_owned()).is_some() {
                return Err(Error::Parse { line: i + 1, msg: format!("duplicate key `{key}`") });
            }
        }
        Ok(map)
    }

    /// Sets or overrides one key from a `key=value` string.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override `{assignment}` is not `key=value`")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_owned(), value.into());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Removes and parses `key`.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| Error::config(format!("{key} = `{raw}`: {e}"))),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|e| Error::config(format!("{key}: `{s}`: {e}"))))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Errors if any key was never consumed.
    pub fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            return Ok(());
        }
        let keys: Vec<&str> = self.entries.keys().map(String::as_str).collect();
        Err(Error::config(format!("unknown key(s): {}", keys.join(", "))))
    }
}

/// Instance keys, in the syntax printed by [`crate::market::describe_instance`].
pub const INSTANCE_KEYS: &[(&str, &str)] = &[
    ("instance.horizon_hours", "selling horizon in hours [24]"),
    ("instance.slots", "number of timeslots n [24]"),
    ("instance.capacity", "chargers, i.e. capacity per timeslot [3]"),
    ("instance.demand", "expected requests over the horizon, lambda [24]"),
    ("instance.timesteps", "decision timesteps k, or `auto` [192]"),
    ("instance.rel_error", "relative discretization error bound for `auto` [0.06]"),
    ("instance.duration_mean_hours", "mean charging duration [3]"),
    ("instance.start_mean_hours", "mean requested start time [12]"),
    ("instance.start_sd_hours", "sd of the requested start time [3]"),
    ("instance.budget_mean", "mean budget per hour [1]"),
    ("instance.budget_sd", "sd of the budget per hour [0.5]"),
    ("instance.budget_floor", "lower truncation of the budget per hour [0]"),
    ("instance.arrivals", "discrete | continuous [discrete]"),
    ("prices.rates", "explicit comma-separated per-hour grid"),
    ("prices.min", "lowest per-hour price [0.1]"),
    ("prices.max", "highest per-hour price [3.0]"),
    ("prices.step", "price grid step [0.1]"),
];

pub const MCTS_KEYS: &[(&str, &str)] = &[
    ("mcts.preset", "tuned (10000 iterations, depth 10, c 3) | light (800, 3, 1) [tuned]"),
    ("mcts.iterations", "iterations per decision"),
    ("mcts.depth", "maximum tree depth per iteration"),
    ("mcts.exploration", "UCB exploration constant c"),
    ("mcts.ucb_sign", "plus | minus [plus]"),
    ("mcts.reuse", "keep the subtree between decisions [true]"),
];

/// Reads the instance keys over `base`.
pub fn instance_from_kv(kv: &mut KvMap, base: &InstanceConfig) -> Result<InstanceConfig> {
    let mut cfg = base.clone();
    cfg.horizon_hours = kv.take_or("instance.horizon_hours", cfg.horizon_hours)?;
    cfg.n_slots = kv.take_or("instance.slots", cfg.n_slots)?;
    cfg.capacity = kv.take_or("instance.capacity", cfg.capacity)?;
    cfg.demand = kv.take_or("instance.demand", cfg.demand)?;
    let rel: Option<f64> = kv.take("instance.rel_error")?;
    match kv.take::<String>("instance.timesteps")?.as_deref() {
        Some("auto") => cfg.timesteps = Timesteps::MaxRelativeError(rel.unwrap_or(0.06)),
        Some(k) => {
            let k: u32 = k
                .parse()
                .map_err(|e| Error::config(format!("instance.timesteps = `{k}`: {e}")))?;
            if rel.is_some() {
                return Err(Error::config("instance.rel_error only applies with instance.timesteps = auto"));
            }
            cfg.timesteps = Timesteps::Fixed(k);
        }
        None => {
            if let Some(eps) = rel {
                cfg.timesteps = Timesteps::MaxRelativeError(eps);
            }
        }
    }
    cfg.duration_mean_hours = kv.take_or("instance.duration_mean_hours", cfg.duration_mean_hours)?;
    cfg.start_mean_hours = kv.take_or("instance.start_mean_hours", cfg.start_mean_hours)?;
    cfg.start_sd_hours = kv.take_or("instance.start_sd_hours", cfg.start_sd_hours)?;
    let b = cfg.budget;
    cfg.budget = BudgetRate::new(
        kv.take_or("instance.budget_mean", b.mean())?,
        kv.take_or("instance.budget_sd", b.sd())?,
        kv.take_or("instance.budget_floor", b.floor())?,
    )?;
    cfg.arrivals = kv.take_or::<ArrivalMode>("instance.arrivals", cfg.arrivals)?;
    let rates: Option<Vec<f64>> = kv.take_list("prices.rates")?;
    let (min, max, step): (Option<f64>, Option<f64>, Option<f64>) =
        (kv.take("prices.min")?, kv.take("prices.max")?, kv.take("prices.step")?);
    match rates {
        Some(r) => {
            if min.is_some() || max.is_some() || step.is_some() {
                return Err(Error::config("give either prices.rates or prices.min/max/step, not both"));
            }
            cfg.prices = PriceGrid::new(r)?;
        }
        None if min.is_some() || max.is_some() || step.is_some() => {
            cfg.prices = PriceGrid::range(min.unwrap_or(0.1), max.unwrap_or(3.0), step.unwrap_or(0.1))?;
        }
        None => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads the MCTS keys: the preset first, then individual overrides.
pub fn mcts_from_kv(kv: &mut KvMap) -> Result<MctsParams> {
    let mut p = match kv.take::<String>("mcts.preset")? {
        Some(name) => MctsParams::preset(&name)
            .ok_or_else(|| Error::config(format!("unknown MCTS preset `{name}`")))?,
        None => MctsParams::default(),
    };
    p.iterations = kv.take_or("mcts.iterations", p.iterations)?;
    p.max_depth = kv.take_or("mcts.depth", p.max_depth)?;
    p.exploration = kv.take_or("mcts.exploration", p.exploration)?;
    p.ucb_sign = kv.take_or::<UcbSign>("mcts.ucb_sign", p.ucb_sign)?;
    p.reuse = kv.take_or("mcts.reuse", p.reuse)?;
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::describe_instance;

    #[test]
    fn parse_and_consume() {
        let mut kv = KvMap::parse("# header\n a = 1 \n\nb=x # trailing\n").unwrap();
        assert_eq!(kv.take::<u32>("a").unwrap(), Some(1));
        assert!(kv.clone().finish().is_err());
        assert_eq!(kv.take::<String>("b").unwrap().as_deref(), Some("x"));
        kv.finish().unwrap();
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert!(matches!(KvMap::parse("a=1\nnope\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(KvMap::parse("a=1\na=2\n"), Err(Error::Parse { line: 2, .. })));
        let mut kv = KvMap::parse("a=x").unwrap();
        assert!(matches!(kv.take::<u32>("a"), Err(Error::Config(_))));
    }

    #[test]
    fn describe_round_trips() {
        let cfg = InstanceConfig {
            n_slots: 4,
            timesteps: Timesteps::MaxRelativeError(0.06),
            prices: PriceGrid::new(vec![0.5, 1.0, 2.5]).unwrap(),
            arrivals: ArrivalMode::Continuous,
            ..InstanceConfig::default()
        };
        let mut kv = KvMap::parse(&describe_instance(&cfg)).unwrap();
        let back = instance_from_kv(&mut kv, &InstanceConfig::default()).unwrap();
        kv.finish().unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn price_range_and_conflicts() {
        let mut kv = KvMap::parse("prices.min=0.5\nprices.max=1.5\nprices.step=0.5").unwrap();
        let cfg = instance_from_kv(&mut kv, &InstanceConfig::default()).unwrap();
        assert_eq!(cfg.prices.rates(), &[0.5, 1.0, 1.5]);
        let mut kv = KvMap::parse("prices.rates=1,2\nprices.min=0.5").unwrap();
        assert!(instance_from_kv(&mut kv, &InstanceConfig::default()).is_err());
    }

    #[test]
    fn invalid_instances_are_config_errors() {
        for text in ["instance.timesteps=191", "instance.demand=500", "instance.capacity=0", "instance.arrivals=poisson"] {
            let mut kv = KvMap::parse(text).unwrap();
            assert!(matches!(instance_from_kv(&mut kv, &InstanceConfig::default()), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn mcts_preset_then_overrides() {
        let mut kv = KvMap::parse("mcts.preset=light\nmcts.depth=5\nmcts.ucb_sign=minus").unwrap();
        let p = mcts_from_kv(&mut kv).unwrap();
        assert_eq!((p.iterations, p.max_depth, p.exploration), (800, 5, 1.0));
        assert_eq!(p.ucb_sign, UcbSign::Minus);
        let mut kv = KvMap::parse("mcts.iterations=0").unwrap();
        assert!(mcts_from_kv(&mut kv).is_err());
    }
}
