use proptest::prelude::*;

use super::Strategy;
use super::*;
use crate::log::NullSink;
use crate::measure::{compare, Comparison, LandscapeFamily, SyntheticBackend, SyntheticSpec};
use crate::space::{ParamDef, ParamKind};

fn space(cards: &[usize]) -> SearchSpace {
    let params = cards
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            ParamDef::new(format!("p{i}"), ParamKind::Other, (0..n as i64).collect()).unwrap()
        })
        .collect();
    SearchSpace::new(params).unwrap()
}

fn convex(cards: &[usize], seed: u64) -> Landscape {
    Landscape::new(space(cards), LandscapeFamily::SeparableConvex, seed)
}

fn cfg() -> MeasureConfig {
    MeasureConfig::default()
}

fn brute_min(obj: &dyn Objective) -> f64 {
    obj.space(0)
        .enumerate()
        .unwrap()
        .map(|c| obj.measure(0, &c, &cfg(), 0).unwrap().cost)
        .fold(f64::INFINITY, f64::min)
}

fn coords(r: &SearchReport) -> Vec<Coordinate> {
    r.history
        .iter()
        .map(|t| t.sample.coordinate.clone())
        .collect()
}

#[test]
fn droplet_at_optimum_converges_in_one_sweep() {
    let l = convex(&[5, 6, 4], 11);
    let r = droplet_search(
        &l,
        0,
        &l.optimum(),
        &cfg(),
        SearchBudget::new(100, 0),
        &mut NullSink,
    )
    .unwrap();
    assert!(r.converged);
    assert_eq!(r.best.sample.coordinate, l.optimum());
    let ring = l.space.neighbors(&l.optimum()).unwrap().len();
    assert_eq!(r.trials_used, 1 + ring);
}

#[test]
fn droplet_quadratic_example() {
    let obj = FnObjective {
        space: space(&[10, 10, 10, 10]),
        f: |v: &[i64]| Some(v.iter().map(|x| ((x - 3) * (x - 3)) as f64).sum::<f64>() + 1.0),
    };
    let r = droplet_search(
        &obj,
        0,
        &obj.space.origin(),
        &cfg(),
        SearchBudget::new(100, 0),
        &mut NullSink,
    )
    .unwrap();
    assert!(r.converged);
    assert_eq!(
        obj.space.values_of(&r.best.sample.coordinate).unwrap(),
        vec![3, 3, 3, 3]
    );
    assert_eq!(r.best.sample.cost, brute_min(&obj));
}

#[test]
fn droplet_history_has_no_repeats_and_respects_budget() {
    for seed in 0..20 {
        let l = Landscape::new(space(&[7, 7, 7]), LandscapeFamily::Rugged, seed)
            .with_noise(0.05)
            .unwrap();
        let start = Coordinate::new(vec![0, 6, 3]);
        for budget in [1, 5, 17, 100] {
            let r = droplet_search(
                &l,
                0,
                &start,
                &cfg(),
                SearchBudget::new(budget, 0),
                &mut NullSink,
            )
            .unwrap();
            assert!(r.trials_used <= budget);
            let cs = coords(&r);
            assert_eq!(dedup(cs.clone()).len(), cs.len());
        }
    }
}

#[test]
fn droplet_accepted_path_strictly_improves_and_convergence_is_checked() {
    for seed in 0..30 {
        let l = Landscape::new(space(&[6, 8, 5]), LandscapeFamily::CorrelatedValley, seed)
            .with_noise(0.02)
            .unwrap();
        let obj: &dyn Objective = &l;
        let mut t = Droplet::new(0, Coordinate::new(vec![5, 0, 4]), 0.05);
        let mut session = Session::new(obj, cfg());
        run(&mut t, &mut session, 400, &mut NullSink).unwrap();
        let cost = |c: &Coordinate| session.lookup(0, c).unwrap().cost;
        for w in t.path().windows(2) {
            assert!(cost(&w[1]) < cost(&w[0]));
        }
        assert!(t.converged());
        let (best, s) = t.incumbent();
        let s = s.unwrap();
        for n in l.space.neighbors(best).unwrap() {
            let ns = session.lookup(0, &n).expect("every neighbor measured");
            assert_ne!(compare(ns, s, 0.05), Comparison::FirstBetter);
        }
    }
}

#[test]
fn droplet_invalid_seed_moves_to_any_ok_neighbor() {
    let obj = FnObjective {
        space: space(&[5]),
        f: |v: &[i64]| (v[0] != 2).then_some(10.0 + v[0] as f64),
    };
    let r = droplet_search(
        &obj,
        0,
        &Coordinate::new(vec![2]),
        &cfg(),
        SearchBudget::new(100, 0),
        &mut NullSink,
    )
    .unwrap();
    assert_eq!(r.best.sample.coordinate, Coordinate::new(vec![0]));
    assert!(r.converged);
}

#[test]
fn droplet_rejects_bad_seed() {
    let l = convex(&[3, 3], 0);
    assert!(droplet_search(
        &l,
        0,
        &Coordinate::new(vec![3, 0]),
        &cfg(),
        SearchBudget::new(10, 0),
        &mut NullSink
    )
    .is_err());
}

#[test]
fn random_search_cases() {
    let l = convex(&[4, 5], 3);
    let one = random_search(&l, 0, &cfg(), SearchBudget::new(1, 9), &mut NullSink).unwrap();
    assert_eq!(one.trials_used, 1);
    let a = random_search(&l, 0, &cfg(), SearchBudget::new(12, 9), &mut NullSink).unwrap();
    let b = random_search(&l, 0, &cfg(), SearchBudget::new(12, 9), &mut NullSink).unwrap();
    assert_eq!(a, b);
    let all = random_search(&l, 0, &cfg(), SearchBudget::new(50, 9), &mut NullSink).unwrap();
    assert_eq!(all.trials_used, 20);
    assert_eq!(dedup(coords(&all)).len(), 20);
    assert_eq!(all.best.sample.cost, brute_min(&l));
}

#[test]
fn grid_search_cases() {
    let l = convex(&[2, 2], 1);
    let r = grid_search(&l, 0, &cfg(), SearchBudget::new(4, 0), &mut NullSink).unwrap();
    let want: Vec<Coordinate> = [[0, 0], [0, 1], [1, 0], [1, 1]]
        .iter()
        .map(|c| Coordinate::new(c.to_vec()))
        .collect();
    assert_eq!(coords(&r), want);
    let l = convex(&[3, 4, 2], 1);
    let r = grid_search(&l, 0, &cfg(), SearchBudget::new(2, 0), &mut NullSink).unwrap();
    assert_eq!(
        coords(&r),
        l.space.enumerate().unwrap().take(2).collect::<Vec<_>>()
    );
    let r = grid_search(&l, 0, &cfg(), SearchBudget::new(100, 0), &mut NullSink).unwrap();
    assert_eq!((r.trials_used, r.best.sample.cost), (24, brute_min(&l)));
}

#[test]
fn genetic_degenerate_and_deterministic() {
    let l = convex(&[5, 5], 2);
    let p = GaParams {
        population: 1,
        crossover: 0.0,
        mutation: 0.0,
        ..Default::default()
    };
    let r = genetic_search(
        &l,
        0,
        &[],
        &cfg(),
        SearchBudget::new(30, 4),
        p,
        &mut NullSink,
    )
    .unwrap();
    assert_eq!(r.trials_used, 1);
    let run = || {
        genetic_search(
            &l,
            0,
            &[],
            &cfg(),
            SearchBudget::new(20, 4),
            GaParams::default(),
            &mut NullSink,
        )
        .unwrap()
    };
    assert_eq!(run(), run());
    let p = GaParams {
        population: 0,
        ..Default::default()
    };
    assert!(matches!(
        genetic_search(
            &l,
            0,
            &[],
            &cfg(),
            SearchBudget::new(5, 0),
            p,
            &mut NullSink
        ),
        Err(Error::EmptyPopulation)
    ));
}

#[test]
fn genetic_uses_seed_population() {
    let l = convex(&[9, 9], 5);
    let r = genetic_search(
        &l,
        0,
        &[l.optimum()],
        &cfg(),
        SearchBudget::new(3, 1),
        GaParams::default(),
        &mut NullSink,
    )
    .unwrap();
    assert_eq!(r.history[0].sample.coordinate, l.optimum());
    assert_eq!(r.best.sample.cost, l.minimum());
}

#[test]
fn genetic_finds_top_three_on_small_convex() {
    let mut hits = 0;
    for seed in 0..100u64 {
        let l = convex(&[5, 5], seed);
        let mut costs: Vec<f64> = l
            .space
            .enumerate()
            .unwrap()
            .map(|c| l.cost(&c).unwrap())
            .collect();
        costs.sort_by(f64::total_cmp);
        let r = genetic_search(
            &l,
            0,
            &[],
            &cfg(),
            SearchBudget::new(25, seed),
            GaParams::default(),
            &mut NullSink,
        )
        .unwrap();
        if r.best.sample.cost <= costs[2] {
            hits += 1;
        }
    }
    assert!(hits >= 90, "{hits}");
}

#[test]
fn surrogate_cold_start_and_determinism() {
    let l = convex(&[10, 10], 7);
    let seed = Coordinate::new(vec![4, 4]);
    let r = surrogate_search(
        &l,
        0,
        &seed,
        &cfg(),
        SearchBudget::new(8, 3),
        SurrogateParams::default(),
        &mut NullSink,
    )
    .unwrap();
    assert_eq!(r.trials_used, 8);
    assert_eq!(r.history[0].sample.coordinate, seed);
    let again = surrogate_search(
        &l,
        0,
        &seed,
        &cfg(),
        SearchBudget::new(8, 3),
        SurrogateParams::default(),
        &mut NullSink,
    )
    .unwrap();
    assert_eq!(r, again);
}

#[test]
fn surrogate_beats_median_random() {
    let (mut sur, mut rnd) = (Vec::new(), Vec::new());
    for seed in 0..100u64 {
        let l = convex(&[10, 10], seed);
        let budget = SearchBudget::new(40, seed);
        let s = surrogate_search(
            &l,
            0,
            &l.space.origin(),
            &cfg(),
            budget,
            SurrogateParams::default(),
            &mut NullSink,
        )
        .unwrap();
        let r = random_search(&l, 0, &cfg(), budget, &mut NullSink).unwrap();
        sur.push(s.best.sample.cost);
        rnd.push(r.best.sample.cost);
    }
    assert!(
        median(&sur) <= median(&rnd),
        "{} vs {}",
        median(&sur),
        median(&rnd)
    );
}

fn matmul_set(backend: &dyn Backend) -> SketchSet<'_> {
    SketchSet::generate(&Workload::matmul(64, 64, 64), Target::fixed(8), backend)
}

#[test]
fn explore_budget_one_and_determinism() {
    let be = SyntheticBackend::new(SyntheticSpec::new(LandscapeFamily::Rugged, 3));
    let set = matmul_set(&be);
    let r = evolutionary_explore(
        &set,
        &cfg(),
        SearchBudget::new(1, 0),
        ExploreParams::default(),
        &mut NullSink,
    )
    .unwrap();
    assert_eq!(r.report.trials_used, 1);
    assert_eq!(r.report.best, r.report.history[0]);
    let run = || {
        evolutionary_explore(
            &set,
            &cfg(),
            SearchBudget::new(60, 5),
            ExploreParams::default(),
            &mut NullSink,
        )
        .unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(a.report.trials_used, 60);
    let best = a
        .per_sketch
        .iter()
        .filter_map(|s| s.best.as_ref())
        .map(|s| s.cost)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(a.report.best.sample.cost, best);
    assert_eq!(a.per_sketch.iter().map(|s| s.trials).sum::<usize>(), 60);
}

#[test]
fn explore_starts_with_the_richest_sketch() {
    let be = SyntheticBackend::new(SyntheticSpec::new(LandscapeFamily::Rugged, 3));
    let set = matmul_set(&be);
    let r = evolutionary_explore(
        &set,
        &cfg(),
        SearchBudget::new(1, 0),
        ExploreParams::default(),
        &mut NullSink,
    )
    .unwrap();
    assert_eq!(r.report.history[0].sketch, set.full_template());
}

#[test]
fn combined_pipeline() {
    let be = SyntheticBackend::new(SyntheticSpec::new(LandscapeFamily::Rugged, 8));
    let set = matmul_set(&be);
    for n in [1, 30] {
        let r = combined_tune(
            &set,
            &cfg(),
            n,
            DEFAULT_DROPLET_BUDGET,
            2,
            ExploreParams::default(),
            &mut NullSink,
        )
        .unwrap();
        assert_eq!(r.explore.report.trials_used, n);
        assert!(r.droplet.trials_used <= DEFAULT_DROPLET_BUDGET);
        assert_eq!(r.report.trials_used, n + r.droplet.trials_used);
        assert_eq!(r.report.history.len(), r.report.trials_used);
        assert!(r.report.best.sample.cost <= r.explore.report.best.sample.cost);
        assert_eq!(r.seed_sketch, r.explore.report.best.sketch);
    }
    assert!(combined_tune(
        &set,
        &cfg(),
        0,
        10,
        2,
        ExploreParams::default(),
        &mut NullSink
    )
    .is_err());
}

#[test]
fn combined_falls_back_to_naive_origin() {
    let spec = SyntheticSpec {
        invalid_fraction: 0.0,
        ..SyntheticSpec::new(LandscapeFamily::SeparableConvex, 0)
    };
    let be = SyntheticBackend::new(spec);
    // a single-core target makes every multi-worker annotation invalid
    let set = SketchSet::generate(&Workload::matmul(16, 16, 16), Target::fixed(1), &be);
    let explored = vec![Trial {
        sketch: 3,
        phase: Phase::Explore,
        sample: Sample::failed(set.space(3).origin(), Status::Invalid),
    }];
    let (s, c) = droplet_seed(&set, &explored, naive_sketch(&set));
    assert_eq!(
        (s, c),
        (naive_sketch(&set), set.space(naive_sketch(&set)).origin())
    );
    assert!(set.sketches[s].is_naive());
}

#[test]
fn strategy_names_roundtrip() {
    for s in Strategy::ALL {
        assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
    }
    assert!("annealing".parse::<Strategy>().is_err());
}

#[test]
fn best_is_minimum_of_history() {
    let l = Landscape::new(space(&[6, 6]), LandscapeFamily::Plateau, 1)
        .with_noise(0.1)
        .unwrap()
        .with_invalid_fraction(0.3)
        .unwrap();
    let params = StrategyParams::default();
    for strategy in [
        Strategy::Droplet,
        Strategy::Random,
        Strategy::Grid,
        Strategy::Ga,
        Strategy::Surrogate,
    ] {
        let mut t = make_tuner(strategy, &l, &cfg(), &params, 4).unwrap();
        let r = search(
            t.as_mut(),
            &l,
            &cfg(),
            SearchBudget::new(20, 4),
            &mut NullSink,
        )
        .unwrap();
        let min = r
            .history
            .iter()
            .map(|t| t.sample.cost)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(r.best.sample.cost, min, "{strategy}");
        assert!(r.trials_used <= 20);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn droplet_optimal_on_separable_convex(cards in prop::collection::vec(2usize..=10, 1..=5), seed in any::<u64>()) {
        let l = convex(&cards, seed);
        let start = l.space.from_linear(seed as u128 % l.space.size());
        let r = droplet_search(&l, 0, &start, &cfg(), SearchBudget::new(100, 0), &mut NullSink).unwrap();
        prop_assert!(r.converged);
        prop_assert_eq!(r.best.sample.coordinate, l.optimum());
    }

    #[test]
    fn strategies_are_deterministic(seed in 0u64..500, strategy in 0usize..5) {
        let l = Landscape::new(space(&[5, 4, 6]), LandscapeFamily::Rugged, seed).with_noise(0.05).unwrap();
        let s = [Strategy::Droplet, Strategy::Random, Strategy::Grid, Strategy::Ga, Strategy::Surrogate][strategy];
        let go = || {
            let mut t = make_tuner(s, &l, &cfg(), &StrategyParams::default(), seed).unwrap();
            search(t.as_mut(), &l, &cfg(), SearchBudget::new(30, seed), &mut NullSink).unwrap()
        };
        prop_assert_eq!(go(), go());
    }
}
