use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use evprice::config::{instance_from_kv, mcts_from_kv, KvMap};
use evprice::demand::{err_intervals, err_missed, relative_error};
use evprice::exec::Exec;
use evprice::harness::{
    grid_search as run_grid, implied_relative_error, resolved, run_experiment, sequence_seed, ExperimentSpec,
    GridSpec, PricerKind, SweepAxis,
};
use evprice::market::{describe_instance, generate_sequence, InstanceConfig};
use evprice::mdp::PricingModel;
use evprice::rng::Stream;
use evprice::solvers::value_iteration;
use evprice::{Error, Result};

struct Common {
    seed: u64,
    out: Option<PathBuf>,
    exec: Exec,
}

fn common(kv: &mut KvMap) -> Result<Common> {
    Ok(Common {
        seed: kv.take_or("seed", 0u64)?,
        out: kv.take::<String>("out")?.map(PathBuf::from),
        exec: match kv.take::<usize>("workers")? {
            Some(w) => Exec::with_workers(w),
            None => Exec::Auto,
        },
    })
}

fn out_dir(out: &Option<PathBuf>) -> Result<Option<&Path>> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)
                .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
            Ok(Some(dir.as_path()))
        }
        None => Ok(None),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

/// Manifest header shared by all subcommands; the key lines form a valid config.
fn manifest(command: &str, c: &Common, cfg: Option<&InstanceConfig>) -> Result<String> {
    let mut m = String::new();
    let _ = writeln!(m, "# evprice manifest v1");
    let _ = writeln!(m, "# command: {command}");
    let _ = writeln!(
        m,
        "# seed scheme: splitmix64(root seed, stream, point, replication); streams: {}",
        [Stream::Gen, Stream::Train, Stream::Pricer, Stream::TieBreak]
            .map(Stream::name)
            .join(", ")
    );
    let _ = writeln!(m, "seed={}", c.seed);
    if let Some(cfg) = cfg {
        if let Some(e) = implied_relative_error(cfg)? {
            let _ = writeln!(m, "# implied relative discretization error: {e:.6}");
        }
        m.push_str(&describe_instance(&resolved(cfg)?));
    }
    Ok(m)
}

pub fn gen(mut kv: KvMap) -> Result<()> {
    let c = common(&mut kv)?;
    let count: usize = kv.take_or("gen.count", 10)?;
    let cfg = instance_from_kv(&mut kv, &InstanceConfig::default())?;
    kv.finish()?;
    let dir = out_dir(&c.out)?.ok_or_else(|| Error::Config("gen needs an output directory (--out)".into()))?;
    let sequences = c
        .exec
        .map(count, |i| generate_sequence(&cfg, sequence_seed(c.seed, 0, i)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut m = manifest("gen", &c, Some(&cfg))?;
    let _ = writeln!(m, "gen.count={count}");
    for (i, seq) in sequences.iter().enumerate() {
        let name = format!("seq_{i:04}.csv");
        write(dir, &name, &seq.to_text())?;
        let _ = writeln!(m, "# {name} seed={} requests={}", seq.seed, seq.len());
    }
    write(dir, "manifest.txt", &m)?;
    eprintln!("wrote {count} sequences to {}", dir.display());
    Ok(())
}

pub fn run(mut kv: KvMap) -> Result<()> {
    let c = common(&mut kv)?;
    let defaults = ExperimentSpec::default();
    let pricers: Vec<PricerKind> = kv.take_list("run.pricers")?.unwrap_or(defaults.pricers);
    let replications = kv.take_or("run.replications", defaults.replications)?;
    let axis: SweepAxis = kv.take_or("run.sweep", SweepAxis::None)?;
    let values: Vec<f64> = kv.take_list("run.sweep_values")?.unwrap_or_default();
    let train_sequences = kv.take_or("run.train", defaults.train_sequences)?;
    let flatrate_rate: Option<f64> = kv.take("run.flatrate_rate")?;
    let timing: bool = kv.take_or("run.timing", false)?;
    let traces: bool = kv.take_or("run.traces", false)?;
    let vi_max_states: u128 = kv.take_or("vi.max_states", defaults.vi_max_states)?;
    let policy_out: Option<PathBuf> = kv.take::<String>("vi.policy_out")?.map(PathBuf::from);
    let mcts = mcts_from_kv(&mut kv)?;
    let instance = instance_from_kv(&mut kv, &InstanceConfig::default())?;
    kv.finish()?;
    if axis == SweepAxis::None && !values.is_empty() {
        return Err(Error::Config("run.sweep_values given without run.sweep".into()));
    }
    if traces && c.out.is_none() {
        return Err(Error::Config("run.traces needs an output directory (--out)".into()));
    }
    if policy_out.is_some() && axis != SweepAxis::None {
        return Err(Error::Config("vi.policy_out needs a single-point run".into()));
    }
    let spec = ExperimentSpec {
        instance: instance.clone(),
        axis,
        values,
        pricers,
        replications,
        seed: c.seed,
        train_sequences,
        flatrate_rate,
        mcts,
        vi_max_states,
        keep_traces: traces,
        exec: c.exec,
    };
    let results = run_experiment(&spec)?;
    let csv = results.to_csv(timing);
    print!("{csv}");
    if let Some(path) = &policy_out {
        let model = PricingModel::from_config(&instance)?;
        let sol = value_iteration(&model, vi_max_states, c.exec)?;
        let file = fs::File::create(path)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
        sol.write_to(std::io::BufWriter::new(file))?;
    }
    if let Some(dir) = out_dir(&c.out)? {
        write(dir, "results.csv", &csv)?;
        let mut m = manifest("run", &c, Some(&instance))?;
        let names: Vec<&str> = spec.pricers.iter().map(|p| p.name()).collect();
        let _ = writeln!(m, "run.pricers={}", names.join(","));
        let _ = writeln!(m, "run.replications={}", spec.replications);
        let _ = writeln!(m, "run.sweep={}", spec.axis.name());
        if spec.axis != SweepAxis::None {
            let v: Vec<String> = spec.values.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(m, "run.sweep_values={}", v.join(","));
        }
        let _ = writeln!(m, "run.train={}", spec.train_sequences);
        if let Some(r) = spec.flatrate_rate {
            let _ = writeln!(m, "run.flatrate_rate={r}");
        }
        let _ = writeln!(m, "vi.max_states={}", spec.vi_max_states);
        let p = spec.mcts;
        let _ = writeln!(m, "mcts.iterations={}", p.iterations);
        let _ = writeln!(m, "mcts.depth={}", p.max_depth);
        let _ = writeln!(m, "mcts.exploration={}", p.exploration);
        let _ = writeln!(m, "mcts.ucb_sign={}", if p.ucb_sign == evprice::solvers::UcbSign::Plus { "plus" } else { "minus" });
        let _ = writeln!(m, "mcts.reuse={}", p.reuse);
        for point in &results.points {
            let sv = point.sweep_value.map_or("NA".to_string(), |v| v.to_string());
            let _ = writeln!(
                m,
                "# point {sv}: timesteps={} flatrate_rate={} vi_value={}",
                point.timesteps,
                point.flatrate_rate.map_or("NA".to_string(), |r| r.to_string()),
                point.vi_value.map_or("NA".to_string(), |v| format!("{v:.6}"))
            );
        }
        write(dir, "manifest.txt", &m)?;
        if traces {
            let mut buf = Vec::new();
            results.write_traces(&mut buf)?;
            write(dir, "traces.csv", &String::from_utf8_lossy(&buf))?;
        }
    }
    let violations = results.dominance_violations();
    if violations > 0 {
        return Err(Error::Contract(format!("{violations} trace(s) earned more than the oracle")));
    }
    Ok(())
}

pub fn error_table(mut kv: KvMap) -> Result<()> {
    let c = common(&mut kv)?;
    let ks: Vec<u64> = kv
        .take_list("error.k")?
        .unwrap_or_else(|| vec![24, 48, 96, 192, 384, 768, 1536]);
    let lambdas: Vec<f64> = kv.take_list("error.lambda")?.unwrap_or_else(|| vec![6.0, 24.0, 96.0, 288.0]);
    kv.finish()?;
    if ks.is_empty() || lambdas.is_empty() {
        return Err(Error::Config("error.k and error.lambda need at least one value".into()));
    }
    if let Some(bad) = ks.iter().find(|k| **k == 0) {
        return Err(Error::Config(format!("timestep count must be positive, got {bad}")));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::Config(format!("lambda must be finite and >= 0, got {bad}")));
    }
    let mut csv = String::from("k,lambda,err1,err2,relative\n");
    for &lambda in &lambdas {
        for &k in &ks {
            let (e1, e2, rel) = if lambda == 0.0 {
                (0.0, 0.0, 0.0)
            } else {
                (err_intervals(k, lambda), err_missed(k, lambda), relative_error(k, lambda)?)
            };
            let _ = writeln!(csv, "{k},{lambda},{e1:.12},{e2:.12},{rel:.12}");
        }
    }
    print!("{csv}");
    if let Some(dir) = out_dir(&c.out)? {
        write(dir, "error_table.csv", &csv)?;
    }
    Ok(())
}

pub fn grid_search(mut kv: KvMap) -> Result<()> {
    let c = common(&mut kv)?;
    let exploration: Vec<f64> = kv.take_list("grid.exploration")?.unwrap_or_else(|| vec![1.0, 3.0, 5.0]);
    let depth: Vec<u32> = kv.take_list("grid.depth")?.unwrap_or_else(|| vec![3, 5, 10]);
    let iterations: Vec<u32> = kv.take_list("grid.iterations")?.unwrap_or_else(|| vec![100, 800, 10000]);
    let replications = kv.take_or("run.replications", 100usize)?;
    let mcts = mcts_from_kv(&mut kv)?;
    let instance = instance_from_kv(&mut kv, &InstanceConfig::default())?;
    kv.finish()?;
    let spec = ExperimentSpec {
        instance: instance.clone(),
        replications,
        seed: c.seed,
        mcts,
        exec: c.exec,
        ..ExperimentSpec::default()
    };
    let grid = GridSpec {
        exploration,
        depth,
        iterations,
    };
    let results = run_grid(&spec, &grid)?;
    let csv = results.to_csv();
    print!("{csv}");
    let best = results.best().params;
    eprintln!(
        "best: exploration={} depth={} iterations={}",
        best.exploration, best.max_depth, best.iterations
    );
    if let Some(dir) = out_dir(&c.out)? {
        write(dir, "grid.csv", &csv)?;
        let mut m = manifest("grid-search", &c, Some(&instance))?;
        let _ = writeln!(m, "run.replications={replications}");
        let _ = writeln!(
            m,
            "# best: exploration={} depth={} iterations={}",
            best.exploration, best.max_depth, best.iterations
        );
        write(dir, "manifest.txt", &m)?;
    }
    Ok(())
}
