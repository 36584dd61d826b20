use evprice::exec::Exec;
use evprice::harness::{run_experiment, ExperimentSpec, PricerKind};
use evprice::market::{
    generate_sequence, CapacityVector, InstanceConfig, PriceGrid, Product, Request, RequestSequence, SlotGrid,
    Timesteps,
};
use evprice::mdp::{Action, PricingModel, State};
use evprice::rng::{derive_seed, rng_for, seeded, Stream};
use evprice::solvers::{
    evaluate_policy, flatrate_revenue, mcts_plan, oracle, reroot, rollout, train_flatrate, value_iteration,
    MctsParams, SearchTree,
};
use evprice::stats::Summary;

fn small_model() -> PricingModel {
    PricingModel::from_config(&InstanceConfig {
        n_slots: 2,
        capacity: 1,
        timesteps: Timesteps::Fixed(6),
        demand: 3.0,
        prices: PriceGrid::new(vec![0.6, 1.0, 1.4]).unwrap(),
        ..InstanceConfig::default()
    })
    .unwrap()
}

fn single_step_model(demand: f64) -> PricingModel {
    PricingModel::from_config(&InstanceConfig {
        horizon_hours: 1.0,
        n_slots: 1,
        capacity: 1,
        timesteps: Timesteps::Fixed(1),
        demand,
        start_mean_hours: 0.5,
        start_sd_hours: 1.0,
        prices: PriceGrid::new(vec![0.5, 1.0, 1.5, 2.0]).unwrap(),
        ..InstanceConfig::default()
    })
    .unwrap()
}

fn myopic_best(model: &PricingModel, product: usize) -> usize {
    let p = model.product(product);
    let values: Vec<f64> = (0..model.n_prices())
        .map(|i| model.total_price(product, i) * model.acceptance_probability(&p, Action::Price(i)))
        .collect();
    let best = values.iter().cloned().fold(f64::MIN, f64::max);
    values.iter().position(|v| *v == best).unwrap()
}

fn four_slot_config() -> InstanceConfig {
    InstanceConfig {
        n_slots: 4,
        capacity: 2,
        timesteps: Timesteps::Fixed(48),
        demand: 12.0,
        prices: PriceGrid::range(0.2, 2.0, 0.2).unwrap(),
        ..InstanceConfig::default()
    }
}

#[test]
fn mcts_single_step_converges_to_myopic_price() {
    let model = single_step_model(1.0);
    let state = State {
        capacity: model.initial_capacity().clone(),
        t: 0,
        pending: Some(0),
    };
    let best = myopic_best(&model, 0);
    let params = MctsParams {
        iterations: 100_000,
        seed: 17,
        ..MctsParams::tuned()
    };
    assert_eq!(mcts_plan(&model, &state, &params), Action::Price(best));
}

#[test]
fn vi_single_step_is_myopic() {
    let model = single_step_model(1.0);
    let sol = value_iteration(&model, 1_000, Exec::Sequential).unwrap();
    let state = State {
        capacity: model.initial_capacity().clone(),
        t: 0,
        pending: Some(0),
    };
    assert_eq!(sol.action(&state), Action::Price(myopic_best(&model, 0)));
}

#[test]
fn vi_zero_demand_is_zero() {
    let model = single_step_model(0.0);
    let sol = value_iteration(&model, 1_000, Exec::Sequential).unwrap();
    assert_eq!(sol.initial_value(), 0.0);
    let four = PricingModel::from_config(&InstanceConfig {
        demand: 0.0,
        ..four_slot_config()
    })
    .unwrap();
    let sol = value_iteration(&four, 1_000_000, Exec::Sequential).unwrap();
    assert_eq!(sol.initial_value(), 0.0);
    // The policy is still defined everywhere.
    for i in 0..sol.space().len() {
        let s = sol.space().state(i);
        let _ = sol.action(&s);
    }
}

#[test]
fn mcts_reaches_ninety_percent_of_vi_on_small_model() {
    let model = small_model();
    let vi = value_iteration(&model, 10_000, Exec::Sequential).unwrap();
    let params = MctsParams::tuned();
    let revenues: Vec<f64> = Exec::Auto.map(200, |run| {
        let mut rng = rng_for(3, Stream::Pricer, 0, run as u64);
        let mut sim = rng_for(3, Stream::Gen, 0, run as u64);
        let mut state = model.sample_initial_state(&mut sim);
        let mut tree = SearchTree::new();
        let mut total = 0.0;
        while !model.is_terminal(&state) {
            tree = reroot(tree, &state);
            let action = tree.search(&model, &state, &params, &mut rng);
            let (next, r) = model.sample_transition(&state, action, &mut sim).unwrap();
            total += r;
            state = next;
        }
        total
    });
    let s = Summary::of(&revenues);
    println!("mcts {:.4} +- {:.4}, vi {:.4}", s.mean, s.ci95, vi.initial_value());
    assert!(s.mean >= 0.9 * vi.initial_value(), "{} < 0.9 * {}", s.mean, vi.initial_value());
}

#[test]
fn rollout_mean_between_zero_and_oracle() {
    let cfg = InstanceConfig::default();
    let model = PricingModel::from_config(&cfg).unwrap();
    let market = cfg.market().unwrap();
    let n = 100_000;
    let values: Vec<f64> = Exec::Auto.map(n, |i| {
        let mut rng = rng_for(11, Stream::Oracle, 0, i as u64);
        let s = model.sample_initial_state(&mut rng);
        rollout(&model, &s, &mut rng)
    });
    let roll = Summary::of(&values);
    let oracle_values: Vec<f64> = Exec::Auto.map(500, |i| {
        let seq = generate_sequence(&cfg, derive_seed(11, Stream::Gen, 0, i as u64)).unwrap();
        oracle(&seq, &market).revenue
    });
    let orc = Summary::of(&oracle_values);
    println!("rollout {:.3} +- {:.3}, oracle {:.3} +- {:.3}", roll.mean, roll.ci95, orc.mean, orc.ci95);
    assert!(roll.mean > 0.0);
    assert!(roll.mean + roll.ci95 < orc.mean - orc.ci95);
}

#[test]
fn rollout_degenerate_states() {
    let model = single_step_model(0.0);
    let mut rng = seeded(1);
    let empty = State {
        capacity: model.initial_capacity().clone(),
        t: 0,
        pending: None,
    };
    assert_eq!(rollout(&model, &empty, &mut rng), 0.0);
    let terminal = State { t: 1, ..empty };
    assert_eq!(rollout(&model, &terminal, &mut rng), 0.0);
}

#[test]
fn reuse_never_significantly_worse() {
    let base = ExperimentSpec {
        instance: four_slot_config(),
        pricers: vec![PricerKind::Mcts],
        replications: 100,
        seed: 21,
        mcts: MctsParams::light(),
        ..ExperimentSpec::default()
    };
    let with = run_experiment(&base).unwrap().revenues(0, PricerKind::Mcts).unwrap();
    let mut fresh = base.clone();
    fresh.mcts.reuse = false;
    let without = run_experiment(&fresh).unwrap().revenues(0, PricerKind::Mcts).unwrap();
    let diff: Vec<f64> = with.iter().zip(&without).map(|(a, b)| a - b).collect();
    let d = Summary::of(&diff);
    println!("reuse - fresh = {:.4} +- {:.4}", d.mean, d.ci95);
    assert!(d.mean >= -d.ci95);
}

#[test]
fn flatrate_generalizes_to_held_out_sequences() {
    let cfg = InstanceConfig::default();
    let market = cfg.market().unwrap();
    let train: Vec<RequestSequence> = (0..100)
        .map(|i| generate_sequence(&cfg, derive_seed(5, Stream::Train, 0, i)).unwrap())
        .collect();
    let held: Vec<RequestSequence> = (0..100)
        .map(|i| generate_sequence(&cfg, derive_seed(5, Stream::Gen, 0, i)).unwrap())
        .collect();
    let fit = train_flatrate(&train, &market).unwrap();
    let per_price: Vec<Summary> = (0..market.prices.len())
        .map(|p| Summary::of(&held.iter().map(|s| flatrate_revenue(s, &market, p)).collect::<Vec<_>>()))
        .collect();
    let best = per_price.iter().max_by(|a, b| a.mean.total_cmp(&b.mean)).unwrap();
    let trained = per_price[fit.price];
    println!("trained {:.3}, best in hindsight {:.3} +- {:.3}", trained.mean, best.mean, best.ci95);
    assert!(best.mean - trained.mean <= best.ci95);
}

#[test]
fn constant_prices_never_beat_vi() {
    let model = PricingModel::from_config(&four_slot_config()).unwrap();
    let vi = value_iteration(&model, 10_000_000, Exec::Auto).unwrap();
    for price in 0..model.n_prices() {
        let flat = evaluate_policy(&model, 10_000_000, |s| {
            if model.pending_feasible(s) {
                Action::Price(price)
            } else {
                Action::Reject
            }
        })
        .unwrap();
        assert!(flat.initial_value() <= vi.initial_value() + 1e-9, "price {price}");
    }
}

#[test]
fn oracle_takes_the_larger_of_two_conflicting_requests() {
    let slots = SlotGrid::new(1, 1.0).unwrap();
    let market = InstanceConfig {
        horizon_hours: 1.0,
        n_slots: 1,
        capacity: 1,
        timesteps: Timesteps::Fixed(2),
        demand: 1.0,
        prices: PriceGrid::new(vec![1.0, 2.0]).unwrap(),
        ..InstanceConfig::default()
    }
    .market()
    .unwrap();
    let product = Product::new(0, 1).unwrap();
    let request = |budget: f64, arrival: u32| Request {
        product,
        arrival,
        time_hours: arrival as f64 * 0.5,
        budget,
    };
    let seq = RequestSequence {
        seed: 0,
        slots,
        timesteps: 2,
        requests: vec![request(2.0, 0), request(1.0, 0)],
    };
    let sol = oracle(&seq, &market);
    assert_eq!(sol.revenue, 2.0);
    assert_eq!(sol.accepted, vec![true, false]);
    assert_eq!(market.capacity, CapacityVector::uniform(1, 1));
}
