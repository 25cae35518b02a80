use modecal_core::mode::ModeMap;
use modecal_core::par::ExecPolicy;
use modecal_core::rng;
use modecal_core::sim::{
    choice_probabilities, estimate_beta, l1_objective, ChoiceObservation, Coefficients, LogNormal, ModeAttributes,
    ModeProfile, Scenario, Simulator, BUNDLED_GROUND_TRUTH, GROUND_TRUTH_BUDGET,
};
use modecal_core::{ModeShare, NUM_MODES};
use rand::Rng;

fn small() -> Scenario {
    let mut s = Scenario::bundled();
    s.population = 1_500;
    s.capacity = 600.0;
    s
}

#[test]
fn longer_budgets_extend_shorter_ones() {
    let sim = Simulator::new(small()).unwrap();
    let short = sim.run(&BUNDLED_GROUND_TRUTH, 3, 11).unwrap();
    let long = sim.run(&BUNDLED_GROUND_TRUTH, 21, 11).unwrap();
    assert_eq!(short.share_trajectory[..], long.share_trajectory[..3]);
    assert_eq!(short.loss_trajectory[..], long.loss_trajectory[..3]);
    assert_eq!(long.iterations_run, 21);
}

#[test]
fn runs_are_bit_identical_across_policies() {
    let a = Simulator::new(small()).unwrap().with_policy(ExecPolicy::Sequential);
    let b = Simulator::new(small()).unwrap().with_policy(ExecPolicy::Parallel);
    let x = [0.5, 1.0, -0.5, 0.0, 0.2, -1.0, 0.8, 0.3];
    assert_eq!(a.run(&x, 8, 3).unwrap(), b.run(&x, 8, 3).unwrap());
    assert_eq!(a.run(&x, 8, 3).unwrap(), a.run(&x, 8, 3).unwrap());
}

#[test]
fn uniform_intercept_shift_leaves_the_loss_unchanged() {
    let sim = Simulator::new(small()).unwrap();
    let x = [0.5, 1.0, -0.5, 0.0, 0.2, -1.0, 0.8, 0.3];
    let shifted = x.map(|v| v + 4.25);
    assert_eq!(
        sim.run(&x, 5, 9).unwrap().loss_trajectory,
        sim.run(&shifted, 5, 9).unwrap().loss_trajectory
    );
}

#[test]
fn symmetric_uncongested_population_splits_evenly() {
    let same = ModeProfile {
        cost: LogNormal::new(2.0, 0.0),
        time: LogNormal::new(20.0, 0.0),
        transfers: 0.0,
    };
    let mut s = small();
    s.population = 8_000;
    s.modes = ModeMap([same; NUM_MODES]);
    s.capacity = f64::INFINITY;
    let r = Simulator::new(s).unwrap().run(&[0.0; NUM_MODES], 4, 2).unwrap();
    // binomial sd of one share, in percent
    let sd = (0.125f64 * 0.875 / 8_000.0).sqrt() * 100.0;
    for share in r.final_share.as_array() {
        assert!((share - 12.5).abs() <= 3.0 * sd, "{share}");
    }
}

#[test]
fn ground_truth_sits_within_the_noise_floor() {
    let mut s = Scenario::bundled();
    s.population = 3_000;
    s.capacity = 1_200.0;
    let s = s.with_generated_benchmark(BUNDLED_GROUND_TRUTH).unwrap();
    let sim = Simulator::new(s.clone()).unwrap();
    let losses: Vec<f64> = (100..120u64)
        .map(|seed| sim.run(&BUNDLED_GROUND_TRUTH, GROUND_TRUTH_BUDGET, seed).unwrap().final_loss())
        .collect();
    // spread of the same quantity between two independent seeds
    let pair: Vec<f64> = (200..220u64)
        .map(|seed| {
            let a = sim.run(&BUNDLED_GROUND_TRUTH, GROUND_TRUTH_BUDGET, seed).unwrap().final_share;
            let b = sim.run(&BUNDLED_GROUND_TRUTH, GROUND_TRUTH_BUDGET, seed + 1000).unwrap().final_share;
            l1_objective(&a, &b)
        })
        .collect();
    let mean = pair.iter().sum::<f64>() / pair.len() as f64;
    let sd = (pair.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (pair.len() - 1) as f64).sqrt();
    let floor = mean + 3.0 * sd;
    assert!(losses.iter().all(|l| *l <= floor), "{losses:?} vs floor {floor}");
    let elsewhere = sim.run(&BUNDLED_GROUND_TRUTH.map(|v| v * 0.8), GROUND_TRUTH_BUDGET, 100).unwrap().final_loss();
    assert!(elsewhere > floor);
}

#[test]
fn full_car_against_the_benchmark() {
    let mut car = [0.0; NUM_MODES];
    car[1] = 100.0;
    let all_car = ModeShare::new(car).unwrap();
    assert_eq!(l1_objective(&all_car, &ModeShare::san_francisco_benchmark()), 102.0);
}

fn simulated_choices(n: usize, seed: u64, truth: &[f64; 3], beta_cost: f64) -> Vec<ChoiceObservation> {
    let mut r = rng::stream(seed, &[]);
    (0..n)
        .map(|_| {
            let alternatives: Vec<ModeAttributes> = (0..3)
                .map(|_| ModeAttributes {
                    cost: r.random_range(0.0..10.0),
                    time: 10.0,
                    transfers: 0.0,
                })
                .collect();
            let v: Vec<f64> = alternatives.iter().zip(truth).map(|(a, b)| b + beta_cost * a.cost).collect();
            let p = choice_probabilities(&v);
            let u: f64 = r.random();
            let mut acc = 0.0;
            let chosen = p.iter().position(|pk| {
                acc += pk;
                u < acc
            });
            ChoiceObservation {
                chosen: chosen.unwrap_or(2),
                alternatives,
            }
        })
        .collect()
}

#[test]
fn maximum_likelihood_recovers_known_parameters() {
    let truth = [0.0, 0.8, -0.4];
    let beta_cost = -0.3;
    let mut errors = Vec::new();
    for n in [1_000, 10_000] {
        let est = estimate_beta(&simulated_choices(n, 7, &truth, beta_cost)).unwrap();
        assert!(est.log_likelihood >= est.null_log_likelihood);
        let cost = est.coefficient("cost").unwrap();
        let checks = [
            (est.intercept(1), est.intercept_std_error(1), truth[1]),
            (est.intercept(2), est.intercept_std_error(2), truth[2]),
            (cost.value, cost.std_error, beta_cost),
        ];
        for (value, se, want) in checks {
            assert!((value - want).abs() <= 3.0 * se, "n={n}: {value} vs {want} (se {se})");
        }
        errors.push(checks.iter().map(|(v, _, w)| (v - w).powi(2)).sum::<f64>().sqrt());
    }
    assert!(errors[1] < errors[0], "{errors:?}");
}

#[test]
fn zero_coefficients_give_even_shares() {
    let s = Scenario {
        coefficients: Coefficients::ZERO,
        ..small()
    };
    let r = Simulator::new(s).unwrap().run(&[0.0; NUM_MODES], 2, 0).unwrap();
    for share in r.final_share.as_array() {
        assert!((share - 12.5).abs() < 3.0);
    }
}
