use brsgd::rng::{self, Purpose};
use brsgd::schedules::{
    validate_schedule, weighting_recurrence, CheckStatus, IterateSampler, Schedule, WeightingSequence, SQUARE_SUMMABLE,
    VANISHING_INVERSE,
};
use proptest::prelude::*;

fn schedule() -> impl Strategy<Value = Schedule> {
    prop_oneof![
        (0.01f64..2.0, 0.0f64..1.5).prop_map(|(c, p)| Schedule::PowerLaw { c, p }),
        (0.01f64..2.0).prop_map(|c| Schedule::Constant { c }),
        prop::collection::vec(0.01f64..2.0, 1..20).prop_map(|mut v| {
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            Schedule::Table { values: v }
        }),
    ]
}

#[test]
fn power_law_verdicts() {
    let rep = validate_schedule(&Schedule::PowerLaw { c: 1.0, p: 0.6 }, 100, 1.0, 1.0, 0.0);
    assert!(rep.passed());
    let rep = validate_schedule(&Schedule::PowerLaw { c: 1.0, p: 0.5 }, 100, 1.0, 1.0, 0.0);
    assert_eq!(rep.check(SQUARE_SUMMABLE).unwrap().status, CheckStatus::Warn);
    let rep = validate_schedule(&Schedule::PowerLaw { c: 1.0, p: 1.0 }, 100, 1.0, 1.0, 0.0);
    assert_eq!(rep.check(VANISHING_INVERSE).unwrap().status, CheckStatus::Fail);
    let rep = validate_schedule(&Schedule::Constant { c: 0.1 }, 100, 1.0, 1.0, 0.0);
    assert_eq!(rep.check(SQUARE_SUMMABLE).unwrap().status, CheckStatus::Fail);
}

/// Pearson chi-square statistic of `counts` against `probs`.
fn chi_square(counts: &[usize], probs: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum()
}

#[test]
fn sampler_passes_chi_square() {
    let sched = Schedule::PowerLaw { c: 0.8, p: 0.7 };
    let horizon = 15;
    let ws = WeightingSequence::new(&sched, 1.5, 2.0, horizon).unwrap();
    let probs = ws.iterate_distribution(horizon);
    let sampler = IterateSampler::new(&ws, horizon).unwrap();
    let mut rng = rng::stream(3, Purpose::Sampler, 0, 0);
    let mut counts = vec![0; horizon];
    for _ in 0..50_000 {
        counts[sampler.sample(&mut rng)] += 1;
    }
    // 14 degrees of freedom: the 99.9% quantile is 36.12
    let stat = chi_square(&counts, &probs);
    assert!(stat < 36.12, "chi-square {stat}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn weights_non_increasing_and_telescoping(
        s in schedule(),
        l in 0.1f64..5.0,
        a_prime in 0.0f64..3.0,
        horizon in 1usize..200,
    ) {
        let ws = WeightingSequence::new(&s, l, a_prime, horizon).unwrap();
        let w = ws.values();
        for pair in w.windows(2) {
            prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-12));
        }
        prop_assert!(w[0] <= 1.0 + 1e-12);
        for k in 1..=horizon {
            let total: f64 = w[..k].iter().sum();
            prop_assert!(total >= k as f64 * w[k - 1] * (1.0 - 1e-12));
        }
        let rec = weighting_recurrence(&s, l, a_prime, horizon);
        for (a, b) in w.iter().zip(&rec) {
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn distribution_is_normalized(s in schedule(), horizon in 1usize..500) {
        let ws = WeightingSequence::new(&s, 1.0, 0.5, horizon).unwrap();
        let p = ws.iterate_distribution(horizon);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn sampler_stays_in_range(s in schedule(), horizon in 1usize..100, seed in any::<u64>()) {
        let ws = WeightingSequence::new(&s, 1.0, 1.0, horizon).unwrap();
        let sampler = IterateSampler::new(&ws, horizon).unwrap();
        let mut rng = rng::stream(seed, Purpose::Sampler, 0, 0);
        for _ in 0..50 {
            prop_assert!(sampler.sample(&mut rng) < horizon);
        }
    }
}
