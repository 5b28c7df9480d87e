use proptest::prelude::*;
use rpcmi::harness::moving_average;
use rpcmi::{bounds, format_sig9, invert_critic, mi_from_ratios, optimal_critic, rpc_value, RelativeParams, ScoreBatch};

fn params() -> impl Strategy<Value = RelativeParams> {
    (0.0..4.0f64, 1e-3..1.0f64, 0.5..4.0f64).prop_map(|(a, b, g)| RelativeParams::new(a, b, g).unwrap())
}

proptest! {
    #[test]
    fn optimal_critic_is_monotone_and_in_range(p in params(), mut rs in prop::collection::vec(0.0..1e6f64, 2..50)) {
        rs.sort_by(f64::total_cmp);
        let fs: Vec<f64> = rs.iter().map(|&r| optimal_critic(r, &p).unwrap()).collect();
        for w in fs.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        for f in fs {
            prop_assert!(p.critic_lo() <= f && f <= p.critic_hi());
        }
    }

    #[test]
    fn inversion_round_trips(p in params(), log_r in -7.0..7.0f64) {
        let r = log_r.exp();
        let back = invert_critic(optimal_critic(r, &p).unwrap(), &p).unwrap();
        prop_assert!(!back.clamped);
        prop_assert!((back.ratio - r).abs() <= 1e-10 * r, "{} vs {}", back.ratio, r);
    }

    // Each summand is maximised pointwise by the optimal critic, so no batch can exceed the bound.
    #[test]
    fn no_score_batch_exceeds_the_upper_bound(
        p in params(),
        pos in prop::collection::vec(-50.0..1e4f64, 1..40),
        neg in prop::collection::vec(-50.0..1e4f64, 1..40),
    ) {
        let j = rpc_value(&ScoreBatch::new(pos, neg).unwrap(), &p).unwrap();
        let upper = bounds(&p, 1, 1).unwrap().j_upper;
        prop_assert!(j <= upper * (1.0 + 1e-12));
    }

    #[test]
    fn constant_log_ratio_is_its_own_estimate(c in -20.0..20.0f64, n in 1usize..100) {
        prop_assert!((mi_from_ratios(&vec![c; n]).unwrap() - c).abs() <= 1e-12 * c.abs().max(1.0));
    }

    #[test]
    fn nine_significant_digits_survive_printing(v in prop::num::f64::NORMAL) {
        let back: f64 = format_sig9(v).parse().unwrap();
        prop_assert!((back - v).abs() <= 5e-9 * v.abs());
    }

    #[test]
    fn moving_average_stays_within_the_data(
        values in prop::collection::vec(prop_oneof![4 => -5.0..5.0f64, 1 => Just(f64::NAN)], 1..200),
        window in 1usize..60,
    ) {
        let ma = moving_average(&values, window);
        prop_assert_eq!(ma.len(), values.len());
        for (i, m) in ma.iter().enumerate() {
            let lo = (i + 1).saturating_sub(window);
            let finite: Vec<f64> = values[lo..=i].iter().copied().filter(|v| v.is_finite()).collect();
            if finite.is_empty() {
                prop_assert!(m.is_nan());
            } else {
                let (min, max) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                prop_assert!(*m >= min - 1e-12 && *m <= max + 1e-12);
            }
        }
    }
}
