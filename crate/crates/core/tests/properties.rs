use modecal_core::gp::expected_improvement;
use modecal_core::hyperband::{
    bracket_schedule, build_ladder, early_stop_threshold, sh_promote, EarlyStopRule, RungEntry,
};
use modecal_core::rng;
use modecal_core::sim::{choice_probabilities, l1_objective};
use modecal_core::space::{ConfigId, ParameterSpace};
use modecal_core::tpe::{fit_kde, propose, KdePair, TpeParams};
use modecal_core::{Interval, ModeShare, NUM_MODES};
use proptest::prelude::*;

fn utilities() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-40.0f64..40.0, NUM_MODES)
}

fn bounds() -> impl Strategy<Value = Vec<Interval>> {
    prop::collection::vec((-10.0f64..10.0, 0.1f64..5.0), 1..5)
        .prop_map(|v| v.into_iter().map(|(lo, w)| Interval::new(lo, lo + w)).collect())
}

fn points_in(bounds: Vec<Interval>, n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<Interval>, Vec<Vec<f64>>)> {
    let per_point: Vec<_> = bounds.iter().map(|b| b.lower..=b.upper).collect();
    (Just(bounds), prop::collection::vec(per_point, n))
}

proptest! {
    #[test]
    fn probabilities_sum_to_one(v in utilities()) {
        let p = choice_probabilities(&v);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn uniform_shift_leaves_probabilities_unchanged(v in utilities(), c in -100.0f64..100.0) {
        let p = choice_probabilities(&v);
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        for (a, b) in p.iter().zip(choice_probabilities(&shifted)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn raising_an_intercept_never_lowers_its_probability(v in utilities(), k in 0..NUM_MODES, bump in 0.0f64..10.0) {
        let before = choice_probabilities(&v)[k];
        let mut w = v.clone();
        w[k] += bump;
        prop_assert!(choice_probabilities(&w)[k] >= before - 1e-15);
    }

    #[test]
    fn l1_is_a_metric(a in prop::array::uniform8(0u64..50), b in prop::array::uniform8(0u64..50)) {
        prop_assume!(a.iter().sum::<u64>() > 0 && b.iter().sum::<u64>() > 0);
        let x = ModeShare::from_counts(&a).unwrap();
        let y = ModeShare::from_counts(&b).unwrap();
        prop_assert_eq!(l1_objective(&x, &x), 0.0);
        prop_assert!((l1_objective(&x, &y) - l1_objective(&y, &x)).abs() < 1e-12);
        prop_assert!(l1_objective(&x, &y) <= 200.0 + 1e-9);
    }

    #[test]
    fn samples_validate_against_their_space(seed in any::<u64>(), lo in -20.0f64..0.0, w in 0.0f64..30.0) {
        let space = ParameterSpace::cube(lo, lo + w).unwrap();
        let c = space.sample_uniform(ConfigId(1), &mut rng::stream(seed, &[]));
        prop_assert!(space.validate(&c).is_ok());
    }

    #[test]
    fn centered_width_is_twice_the_relative_halfwidth(center in prop::array::uniform8(1.0f64..20.0), h in 0.01f64..0.5) {
        let space = ParameterSpace::centered(&center, h, 1e-3).unwrap();
        for (b, c) in space.intervals().iter().zip(center) {
            prop_assume!(c * h >= 1e-3);
            prop_assert!((b.width() - 2.0 * c * h).abs() < 1e-9 * c.max(1.0));
        }
    }

    #[test]
    fn threshold_is_monotone_and_bounded(t0 in 0.0f64..500.0, span in 1.0f64..1000.0, a in 0.0f64..2000.0, b in 0.0f64..2000.0) {
        let rule = EarlyStopRule { t_start: t0, t_end: t0 + span, ..EarlyStopRule::default() };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (x, y) = (early_stop_threshold(&rule, lo), early_stop_threshold(&rule, hi));
        prop_assert!(y <= x);
        for v in [x, y] {
            prop_assert!((rule.threshold_end..=rule.threshold_start).contains(&v));
        }
    }

    #[test]
    fn survivors_beat_every_non_survivor(losses in prop::collection::vec(prop::option::of(0.0f64..100.0), 1..40), eta in 2.0f64..5.0) {
        let rung: Vec<RungEntry> = losses
            .iter()
            .enumerate()
            .map(|(i, l)| RungEntry { config: ConfigId(i as u64 + 1), loss: *l, order: i as u64 })
            .collect();
        let kept = sh_promote(&rung, eta).unwrap();
        prop_assert_eq!(kept.len(), ((rung.len() as f64 / eta + 1e-9).floor() as usize).max(1));
        let key = |e: &RungEntry| e.loss.unwrap_or(f64::INFINITY);
        let worst_kept = rung.iter().filter(|e| kept.contains(&e.config)).map(key).fold(f64::NEG_INFINITY, f64::max);
        for e in rung.iter().filter(|e| !kept.contains(&e.config)) {
            prop_assert!(key(e) >= worst_kept);
        }
    }

    #[test]
    fn bracket_budgets_grow_by_eta(b_min in 1u64..10, ratio in 1u64..100, eta in prop::sample::select(vec![2.0, 3.0, 4.0])) {
        let ladder = build_ladder(b_min, b_min * ratio, eta).unwrap();
        for s in 0..=ladder.s_max {
            let stages = bracket_schedule(&ladder, s).stages;
            prop_assert_eq!(stages.len(), s + 1);
            prop_assert_eq!(stages.last().unwrap().budget, ladder.b_max);
            for w in stages.windows(2) {
                prop_assert!(w[1].n_configs >= 1 && w[1].n_configs <= w[0].n_configs);
                let r = w[1].budget as f64 / w[0].budget as f64;
                prop_assert!((r - eta).abs() <= eta * 0.5, "ratio {r}");
            }
        }
    }

    #[test]
    fn ei_is_nonnegative_and_nonincreasing_in_mean(m in -5.0f64..5.0, dm in 0.0f64..3.0, s in 0.0f64..3.0, f in -5.0f64..5.0) {
        let a = expected_improvement(m, s, f);
        prop_assert!(a >= 0.0);
        prop_assert!(expected_improvement(m + dm, s, f) <= a + 1e-12);
    }

    #[test]
    fn proposals_stay_in_bounds((b, pts) in bounds().prop_flat_map(|b| points_in(b, 18..30)), seed in any::<u64>()) {
        let obs: Vec<(Vec<f64>, f64)> = pts.iter().enumerate().map(|(i, p)| (p.clone(), i as f64)).collect();
        let pair = KdePair::fit(&obs, &b, 21, &TpeParams::default()).unwrap();
        let x = propose(&pair, 16, &mut rng::stream(seed, &[]));
        for (v, iv) in x.iter().zip(&b) {
            prop_assert!(iv.contains(*v));
        }
    }

    #[test]
    fn doubling_the_spread_doubles_bandwidths((b, pts) in bounds().prop_flat_map(|b| points_in(b, 2..20))) {
        // bounds wide enough that the floor never engages
        let wide: Vec<Interval> = b.iter().map(|i| Interval::new(2.0 * i.lower - 100.0, 2.0 * i.upper + 100.0)).collect();
        let doubled: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|v| 2.0 * v).collect()).collect();
        let k1 = fit_kde(&pts, &wide, 0.0).unwrap();
        let k2 = fit_kde(&doubled, &wide, 0.0).unwrap();
        for (h1, h2) in k1.bandwidths().iter().zip(k2.bandwidths()) {
            prop_assume!(*h1 > 1e-9);
            prop_assert!((h2 / h1 - 2.0).abs() < 1e-9);
        }
    }
}
