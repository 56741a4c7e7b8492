use droptune_core::log::{read_log, JsonlWriter, NullSink, Phase, TrialRecord, TrialSink};
use droptune_core::measure::{
    compare, rank_sum_p, Comparison, LandscapeFamily, MeasureConfig, SyntheticBackend,
    SyntheticSpec,
};
use droptune_core::scheduler::{
    initial_quota, tune_model, Budgets, TuneTask, INCREMENT, MAX_INITIAL_QUOTA,
};
use droptune_core::search::{Strategy as Tuning, StrategyParams};
use droptune_core::{
    Coordinate, ParamDef, ParamKind, Sample, SearchSpace, Status, Target, Workload,
};
use proptest::prelude::*;

fn space_strategy() -> impl Strategy<Value = SearchSpace> {
    prop::collection::vec(1usize..8, 1..=6).prop_map(|cards| {
        let params = cards
            .iter()
            .enumerate()
            .map(|(d, &c)| {
                ParamDef::new(format!("p{d}"), ParamKind::Other, (0..c as i64).collect()).unwrap()
            })
            .collect();
        SearchSpace::new(params).unwrap()
    })
}

fn timings() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.0f64..1e6, 3..20)
}

proptest! {
    #[test]
    fn neighbors_are_symmetric_and_counted(space in space_strategy(), pick in any::<u64>()) {
        let c = space.from_linear(pick as u128 % space.size());
        let ns = space.neighbors(&c).unwrap();
        let expected: usize = space
            .params()
            .iter()
            .zip(c.indices())
            .map(|(p, &i)| usize::from(i > 0) + usize::from(i + 1 < p.cardinality()))
            .sum();
        prop_assert_eq!(ns.len(), expected);
        for n in &ns {
            prop_assert!(space.neighbors(n).unwrap().contains(&c));
        }
    }

    #[test]
    fn linear_index_roundtrips(space in space_strategy(), pick in any::<u64>()) {
        let i = pick as u128 % space.size();
        prop_assert_eq!(space.linear_index(&space.from_linear(i)).unwrap(), i);
    }

    #[test]
    fn rank_sum_is_symmetric_and_a_probability(a in timings(), b in timings()) {
        let p = rank_sum_p(&a, &b).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0);
        prop_assert!((p - rank_sum_p(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rank_sum_ignores_monotone_transforms(a in timings(), b in timings()) {
        let f = |v: &[f64]| v.iter().map(|x| 3.0 * x.ln() + 7.0).collect::<Vec<_>>();
        let p = rank_sum_p(&a, &b).unwrap();
        prop_assert!((p - rank_sum_p(&f(&a), &f(&b)).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn compare_is_antisymmetric(a in timings(), b in timings(), alpha in 0.001f64..0.2) {
        let (x, y) = (Sample::ok(Coordinate::new(vec![0]), a), Sample::ok(Coordinate::new(vec![1]), b));
        let flipped = match compare(&y, &x, alpha) {
            Comparison::FirstBetter => Comparison::SecondBetter,
            Comparison::SecondBetter => Comparison::FirstBetter,
            Comparison::Tie => Comparison::Tie,
        };
        prop_assert_eq!(compare(&x, &y, alpha), flipped);
    }

    #[test]
    fn log_roundtrip_is_exact(ts in prop::collection::vec(any::<f64>().prop_filter("finite, positive", |x| x.is_finite() && *x > 0.0), 1..12), trial in 0usize..1000) {
        let rec = TrialRecord {
            sample: Sample::ok(Coordinate::new(vec![trial, 2]), ts),
            layer: "l".into(),
            sketch_id: 3,
            sketch: "tile+unroll".into(),
            phase: Phase::Explore,
            trial,
        };
        let failed = TrialRecord { sample: Sample::failed(Coordinate::new(vec![1]), Status::Timeout), ..rec.clone() };
        let mut w = JsonlWriter::new(Vec::new());
        w.record(&rec).unwrap();
        w.record(&failed).unwrap();
        let back = read_log(&w.into_inner()[..]).unwrap();
        prop_assert_eq!(back, vec![rec, failed]);
    }

    #[test]
    fn quota_formula(k in 1usize..100_000, l in 1usize..500) {
        let even = k / l;
        let want = if even == 0 { 1 } else if even > MAX_INITIAL_QUOTA { MAX_INITIAL_QUOTA } else { even };
        prop_assert_eq!(initial_quota(k, l), want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scheduler_respects_budget(k in 1usize..260, layers in 1usize..5, seed in 0u64..50) {
        let be = SyntheticBackend::new(SyntheticSpec::new(LandscapeFamily::Rugged, seed));
        let tasks: Vec<TuneTask> = (0..layers)
            .map(|i| TuneTask::new(format!("l{i}"), Workload::matmul(8 << i, 16, 8 * (i + 1)), 1.0 + i as f64))
            .collect();
        let cfg = MeasureConfig::default();
        let r = tune_model(&tasks, Tuning::Explore, Budgets::new(k), &be, Target::default(), &cfg, &StrategyParams::default(), seed, &mut NullSink).unwrap();
        prop_assert!(r.total_trials <= k);
        prop_assert_eq!(r.layers.iter().map(|l| l.trials).sum::<usize>(), r.total_trials);
        for round in r.plan.rounds.iter().filter(|x| x.stage == 2) {
            prop_assert!(round.trials <= INCREMENT);
        }
    }
}
