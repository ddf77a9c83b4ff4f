mod common;

use poscert::ffnn::Ffnn;
use poscert::lure::{check_lure_positivity, DelayedLureSystem, DelayedTerm};
use poscert::matrix::{IntervalMatrix, Matrix, Vector};
use poscert::monte_carlo::{monte_carlo, plan_tiles, DelayPlan, HistorySampler, MonteCarloConfig, PlantChoice};
use poscert::sim::{integrate_states, simulate, SimConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pure_delay(tau: f64) -> DelayedLureSystem {
    DelayedLureSystem::new(
        IntervalMatrix::degenerate(Matrix::zeros(1, 1)),
        vec![DelayedTerm {
            a: IntervalMatrix::degenerate(Matrix::from_element(1, 1, -1.0)),
            b: Matrix::zeros(1, 1),
            tau,
        }],
        Matrix::from_element(1, 1, 1.0),
    )
    .unwrap()
}

fn output_sampler() -> HistorySampler {
    HistorySampler::OutputBox {
        lo: Vector::from_element(1, 0.0),
        hi: Vector::from_element(1, 4.5),
    }
}

#[test]
fn pure_delay_matches_method_of_steps() {
    let sys = pure_delay(0.5);
    let oracle = common::MethodOfSteps::new(0.5, 10.0);
    assert_eq!(oracle.value(0.25), 0.75);
    let cfg = SimConfig::new(sys.lower_plant(), Vector::from_element(1, 1.0), 10.0);
    let states = integrate_states(&sys, &Ffnn::zero(1, 1), &cfg).unwrap();
    let worst = states
        .iter()
        .enumerate()
        .map(|(k, x)| (x[0] - oracle.value(k as f64 * 1e-3)).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-4, "max deviation {worst}");
}

#[test]
fn smooth_loop_converges_at_fourth_order() {
    let sys = common::load_system("c1_system.json");
    let net = common::surrogate();
    let x0 = Vector::from_vec(vec![0.8, 1.1, 0.4]);
    let terminal = |h: f64| {
        let cfg = SimConfig::new(sys.upper_plant(), x0.clone(), 1.0).with_step(h);
        integrate_states(&sys, &net, &cfg).unwrap().pop().unwrap()
    };
    let (a, b, c) = (terminal(0.04), terminal(0.02), terminal(0.01));
    let order = ((&a - &b).norm() / (&b - &c).norm()).log2();
    assert!(order >= 3.5, "observed order {order}");
}

#[test]
fn zero_histories_stay_at_zero() {
    let sys = common::load_system("c2_system.json").with_delay(0.5).unwrap();
    let mut cfg = MonteCarloConfig::new(HistorySampler::Uniform { lo: 0.0, hi: 0.0 }, 5.0, 1);
    cfg.n_histories = 5;
    let report = monte_carlo(&sys, &common::surrogate(), &cfg).unwrap();
    assert_eq!(report.tiles[0].proportion, Some(1.0));
    assert_eq!(report.tiles[0].median_final_norm, Some(0.0));
}

#[test]
fn certified_c1_tiles_all_converge() {
    let sys = common::load_system("c1_system.json");
    let mut cfg = MonteCarloConfig::new(output_sampler(), 10.0, 3);
    cfg.n_plants = 4;
    let report = monte_carlo(&sys, &common::surrogate(), &cfg).unwrap();
    assert_eq!(report.tiles.len(), 4);
    for t in &report.tiles {
        assert_eq!(t.proportion, Some(1.0));
        assert!(t.min_state.unwrap() >= -1e-6);
        assert_eq!(t.negative_histories, 0);
    }
}

#[test]
fn open_loop_upper_plant_diverges() {
    let sys = common::load_system("c1_system.json");
    let mut cfg = MonteCarloConfig::new(output_sampler(), 5.0, 3);
    cfg.plants = PlantChoice::Upper;
    cfg.n_histories = 20;
    let report = monte_carlo(&sys, &Ffnn::zero(1, 1), &cfg).unwrap();
    assert_eq!(report.tiles[0].proportion, Some(0.0));
}

#[test]
fn zero_horizon_reports_null_proportion() {
    let sys = common::load_system("c2_system.json");
    let mut cfg = MonteCarloConfig::new(output_sampler(), 0.0, 3);
    cfg.n_histories = 3;
    let report = monte_carlo(&sys, &common::surrogate(), &cfg).unwrap();
    assert_eq!(report.tiles[0].proportion, None);
    let json = serde_json::to_value(&report).unwrap();
    assert!(json["tiles"][0]["proportion"].is_null());
}

#[test]
fn seeded_reports_are_identical() {
    let sys = common::load_system("c3_system.json");
    let mut cfg = MonteCarloConfig::new(HistorySampler::Uniform { lo: -1.5, hi: 1.5 }, 3.0, 99);
    cfg.n_plants = 2;
    cfg.n_histories = 4;
    cfg.delays = DelayPlan::PerPlant { lo: 0.2, hi: 3.0 };
    let a = monte_carlo(&sys, &common::surrogate(), &cfg).unwrap();
    let b = monte_carlo(&sys, &common::surrogate(), &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert!(a.tiles.iter().all(|t| t.negative_histories > 0));
    let mut other = cfg.clone();
    other.seed = 100;
    assert_ne!(plan_tiles(&sys, &cfg).unwrap(), plan_tiles(&sys, &other).unwrap());
}

#[test]
fn output_box_histories_land_in_box() {
    let sys = common::load_system("c1_system.json");
    let mut cfg = MonteCarloConfig::new(output_sampler(), 1.0, 8);
    cfg.n_histories = 200;
    for tile in plan_tiles(&sys, &cfg).unwrap() {
        for x in &tile.histories {
            let y = (sys.c() * x)[0];
            assert!(x.min() > 0.0 && (0.0..=4.5).contains(&y));
        }
    }
}

#[test]
fn trajectory_lengths_are_consistent() {
    let sys = common::load_system("c3_system.json");
    let cfg = SimConfig::new(sys.lower_plant(), Vector::from_element(3, 0.5), 0.5);
    let t = simulate(&sys, &common::surrogate(), &cfg).unwrap();
    assert_eq!(t.len(), 501);
    assert_eq!(t.states.len(), t.outputs.len());
    assert_eq!(t.controls.len(), t.times.len());
    assert!((t.times[1] - t.times[0] - 1e-3).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn positive_loops_keep_states_nonnegative(seed in any::<u64>(), tau_steps in 0usize..400) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = common::load_system("c3_system.json").with_delay(tau_steps as f64 * 1e-3).unwrap();
        prop_assert!(check_lure_positivity(&sys, &common::surrogate_sector(), 1e-12).unwrap());
        let plant = sys.sample_plant(&mut rng);
        let d = Vector::from_fn(3, |_, _| rng.random_range(0.0..1.0));
        let x0 = &d * (rng.random_range(0.0..4.5) / d.sum().max(1e-9));
        let cfg = SimConfig::new(plant, x0, 3.0);
        let states = integrate_states(&sys, &common::surrogate(), &cfg).unwrap();
        let low = states.iter().map(|x| x.min()).fold(f64::INFINITY, f64::min);
        prop_assert!(low >= -1e-6, "state dipped to {low}");
    }
}
