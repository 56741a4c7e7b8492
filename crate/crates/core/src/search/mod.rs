//! Search strategies over annotation spaces.
//!
//! Every strategy is an ask/tell [`Tuner`]. The driver ([`run`]) owns the
//! budget, the memo of measured points (re-proposing one is free), the
//! history and the trial log. Tuners only decide what to measure next.

mod baselines;
mod droplet;
mod explore;

pub use baselines::{GaParams, Genetic, Grid, RandomSearch, Surrogate, SurrogateParams};
pub use droplet::{Droplet, DEFAULT_DROPLET_BUDGET};
pub use explore::{ExploreParams, Explorer};

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash;
use crate::ir::{generate_sketches, Sketch, Target, Workload};
use crate::log::{Phase, TrialRecord, TrialSink};
use crate::measure::{median, Backend, Landscape, MeasureConfig, Sample, Status};
use crate::space::{Coordinate, SearchSpace};

/// Depth of sketch generation used by the explorer.
pub const SKETCH_DEPTH: usize = 3;
/// The driver gives up after this many consecutive batches with no new
/// measurement.
pub const STALL_ROUNDS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub max_trials: usize,
    pub rng_seed: u64,
}

impl SearchBudget {
    pub fn new(max_trials: usize, rng_seed: u64) -> Self {
        Self {
            max_trials,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_trials == 0 {
            return Err(Error::InvalidConfig("max_trials must be at least 1".into()));
        }
        Ok(())
    }
}

/// What is being tuned: one or more spaces, indexed by sketch id, and a way
/// to measure points in them.
pub trait Objective: Sync {
    fn sketch_count(&self) -> usize;
    fn space(&self, sketch: usize) -> &SearchSpace;

    fn sketch_name(&self, sketch: usize) -> String {
        if self.sketch_count() == 1 {
            "space".into()
        } else {
            format!("sketch{sketch}")
        }
    }

    /// Number of transformation rules behind the sketch; 0 for plain spaces.
    fn rule_count(&self, _sketch: usize) -> usize {
        0
    }

    /// Draws slot `dim` from its initialization distribution.
    fn draw_slot(&self, sketch: usize, dim: usize, rng: &mut ChaCha8Rng) -> usize {
        rng.gen_range(0..self.space(sketch).params()[dim].cardinality())
    }

    fn random_point(&self, sketch: usize, rng: &mut ChaCha8Rng) -> Coordinate {
        Coordinate::new(
            (0..self.space(sketch).dimension())
                .map(|d| self.draw_slot(sketch, d, rng))
                .collect(),
        )
    }

    fn measure(
        &self,
        sketch: usize,
        c: &Coordinate,
        cfg: &MeasureConfig,
        call_index: u64,
    ) -> Result<Sample>;
}

impl Objective for Landscape {
    fn sketch_count(&self) -> usize {
        1
    }

    fn space(&self, _: usize) -> &SearchSpace {
        &self.space
    }

    fn measure(
        &self,
        _: usize,
        c: &Coordinate,
        cfg: &MeasureConfig,
        call_index: u64,
    ) -> Result<Sample> {
        self.evaluate(c, cfg, call_index)
    }
}

/// A noise-free cost function of the parameter values. `None` marks an
/// invalid point.
pub struct FnObjective<F> {
    pub space: SearchSpace,
    pub f: F,
}

impl<F: Fn(&[i64]) -> Option<f64> + Sync> Objective for FnObjective<F> {
    fn sketch_count(&self) -> usize {
        1
    }

    fn space(&self, _: usize) -> &SearchSpace {
        &self.space
    }

    fn measure(&self, _: usize, c: &Coordinate, cfg: &MeasureConfig, _: u64) -> Result<Sample> {
        Ok(match (self.f)(&self.space.values_of(c)?) {
            Some(v) => Sample::ok(c.clone(), vec![v; cfg.repeats]),
            None => Sample::failed(c.clone(), Status::Invalid),
        })
    }
}

/// The sketches of a workload, timed by a backend.
pub struct SketchSet<'a> {
    pub sketches: Vec<Sketch>,
    pub backend: &'a dyn Backend,
}

impl<'a> SketchSet<'a> {
    pub fn generate(w: &Workload, target: Target, backend: &'a dyn Backend) -> Self {
        Self {
            sketches: generate_sketches(w, SKETCH_DEPTH, target),
            backend,
        }
    }

    /// The sketch with the most rules (lowest id on ties): the template
    /// single-space strategies tune.
    pub fn full_template(&self) -> usize {
        full_template(self)
    }

    /// The sketch without transformations, if generated.
    pub fn naive(&self) -> Option<usize> {
        self.sketches.iter().position(|s| s.is_naive())
    }
}

impl Objective for SketchSet<'_> {
    fn sketch_count(&self) -> usize {
        self.sketches.len()
    }

    fn space(&self, sketch: usize) -> &SearchSpace {
        self.sketches[sketch].space()
    }

    fn sketch_name(&self, sketch: usize) -> String {
        self.sketches[sketch].name()
    }

    fn rule_count(&self, sketch: usize) -> usize {
        self.sketches[sketch].rules().len()
    }

    fn draw_slot(&self, sketch: usize, dim: usize, rng: &mut ChaCha8Rng) -> usize {
        let sk = &self.sketches[sketch];
        sk.policy()
            .draw(&sk.space().params()[dim], sk.target(), rng)
    }

    fn measure(
        &self,
        sketch: usize,
        c: &Coordinate,
        cfg: &MeasureConfig,
        call_index: u64,
    ) -> Result<Sample> {
        self.backend
            .evaluate(&self.sketches[sketch], c, cfg, call_index)
    }
}

/// Highest rule count, lowest id on ties.
pub fn full_template(obj: &dyn Objective) -> usize {
    (0..obj.sketch_count())
        .max_by_key(|&s| (obj.rule_count(s), std::cmp::Reverse(s)))
        .unwrap_or(0)
}

/// One measured point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub sketch: usize,
    pub phase: Phase,
    pub sample: Sample,
}

/// Lower cost first, then lower sketch id; `None` if `trials` is empty.
pub fn best_of<'t>(trials: impl IntoIterator<Item = &'t Trial>) -> Option<&'t Trial> {
    trials
        .into_iter()
        .fold(None, |best: Option<&Trial>, t| match best {
            Some(b) if !precedes(t, b) => Some(b),
            _ => Some(t),
        })
}

fn precedes(a: &Trial, b: &Trial) -> bool {
    (a.sample.cost, a.sketch) < (b.sample.cost, b.sketch)
}

/// Ask/tell interface of a search strategy.
pub trait Tuner {
    /// The next batch to measure, as `(sketch, coordinate)` pairs. Empty
    /// means the tuner has nothing left to try.
    fn propose(&mut self, obj: &dyn Objective) -> Result<Vec<(usize, Coordinate)>>;

    /// Results for a prefix of the last batch, in batch order.
    fn observe(&mut self, results: &[(usize, Sample)]);

    /// Set by strategies with a convergence criterion.
    fn converged(&self) -> bool {
        false
    }
}

/// Measurement state of one tuning subject: memo, history and log identity.
pub struct Session<'a> {
    pub objective: &'a dyn Objective,
    pub cfg: MeasureConfig,
    pub layer: String,
    pub phase: Phase,
    memo: HashMap<(usize, Coordinate), usize>,
    history: Vec<Trial>,
}

impl<'a> Session<'a> {
    pub fn new(objective: &'a dyn Objective, cfg: MeasureConfig) -> Self {
        Self {
            objective,
            cfg,
            layer: String::new(),
            phase: Phase::Exploit,
            memo: HashMap::new(),
            history: Vec::new(),
        }
    }

    pub fn with_layer(mut self, layer: impl Into<String>) -> Self {
        self.layer = layer.into();
        self
    }

    pub fn history(&self) -> &[Trial] {
        &self.history
    }

    pub fn lookup(&self, sketch: usize, c: &Coordinate) -> Option<&Sample> {
        self.memo
            .get(&(sketch, c.clone()))
            .map(|&i| &self.history[i].sample)
    }

    /// Measures a point not measured before and logs it.
    fn measure(
        &mut self,
        sketch: usize,
        c: &Coordinate,
        sink: &mut dyn TrialSink,
    ) -> Result<Sample> {
        debug_assert!(self.lookup(sketch, c).is_none());
        let index = self.history.len();
        let sample = self.objective.measure(sketch, c, &self.cfg, index as u64)?;
        sink.record(&TrialRecord {
            sample: sample.clone(),
            layer: self.layer.clone(),
            sketch_id: sketch,
            sketch: self.objective.sketch_name(sketch),
            phase: self.phase,
            trial: index,
        })?;
        self.memo.insert((sketch, c.clone()), index);
        self.history.push(Trial {
            sketch,
            phase: self.phase,
            sample: sample.clone(),
        });
        Ok(sample)
    }
}

/// What one call of [`run`] did.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// Range of the session history measured by this call.
    pub start: usize,
    pub end: usize,
    /// Best sample the tuner saw, memo hits included.
    pub best: Option<Trial>,
    /// The tuner ran out of proposals or stalled.
    pub exhausted: bool,
}

impl RunOutcome {
    pub fn trials(&self) -> usize {
        self.end - self.start
    }
}

/// Drives `tuner` until it has measured `budget` new points, has nothing
/// left to propose, or stalls for [`STALL_ROUNDS`] batches.
pub fn run(
    tuner: &mut dyn Tuner,
    session: &mut Session<'_>,
    budget: usize,
    sink: &mut dyn TrialSink,
) -> Result<RunOutcome> {
    let start = session.history.len();
    let mut best: Option<Trial> = None;
    let mut idle = 0;
    let mut exhausted = false;
    while session.history.len() - start < budget {
        let batch = tuner.propose(session.objective)?;
        if batch.is_empty() {
            exhausted = true;
            break;
        }
        let mut results = Vec::with_capacity(batch.len());
        let mut fresh = false;
        for (sketch, c) in batch {
            let sample = match session.lookup(sketch, &c) {
                Some(s) => s.clone(),
                None if session.history.len() - start >= budget => break,
                None => {
                    fresh = true;
                    session.measure(sketch, &c, sink)?
                }
            };
            let t = Trial {
                sketch,
                phase: session.phase,
                sample,
            };
            if best.as_ref().is_none_or(|b| precedes(&t, b)) {
                best = Some(t.clone());
            }
            results.push((sketch, t.sample));
        }
        tuner.observe(&results);
        if fresh {
            idle = 0;
        } else {
            idle += 1;
            if idle >= STALL_ROUNDS {
                exhausted = true;
                break;
            }
        }
    }
    Ok(RunOutcome {
        start,
        end: session.history.len(),
        best,
        exhausted,
    })
}

/// Result of one strategy run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub best: Trial,
    pub sketch_id: usize,
    pub trials_used: usize,
    pub history: Vec<Trial>,
    /// Droplet only: no neighbor of `best` was significantly faster.
    pub converged: bool,
}

impl SearchReport {
    fn from_run(session: &Session<'_>, out: &RunOutcome, converged: bool) -> Result<Self> {
        let history = session.history[out.start..out.end].to_vec();
        let best = best_of(&history)
            .or(out.best.as_ref())
            .cloned()
            .ok_or(Error::EmptyPopulation)?;
        Ok(Self {
            sketch_id: best.sketch,
            best,
            trials_used: history.len(),
            history,
            converged,
        })
    }
}

/// Runs a fresh tuner with its own session and reports.
pub fn search(
    tuner: &mut dyn Tuner,
    obj: &dyn Objective,
    cfg: &MeasureConfig,
    budget: SearchBudget,
    sink: &mut dyn TrialSink,
) -> Result<SearchReport> {
    budget.validate()?;
    cfg.validate()?;
    let mut session = Session::new(obj, *cfg);
    let out = run(tuner, &mut session, budget.max_trials, sink)?;
    SearchReport::from_run(&session, &out, tuner.converged())
}

/// Droplet coordinate descent from `seed` in space `sketch`.
pub fn droplet_search(
    obj: &dyn Objective,
    sketch: usize,
    seed: &Coordinate,
    cfg: &MeasureConfig,
    budget: SearchBudget,
    sink: &mut dyn TrialSink,
) -> Result<SearchReport> {
    obj.space(sketch).validate(seed)?;
    let mut t = Droplet::new(sketch, seed.clone(), cfg.alpha_converge);
    search(&mut t, obj, cfg, budget, sink)
}

pub fn random_search(
    obj: &dyn Objective,
    sketch: usize,
    cfg: &MeasureConfig,
    budget: SearchBudget,
    sink: &mut dyn TrialSink,
) -> Result<SearchReport> {
    let mut t = RandomSearch::new(sketch, budget.rng_seed);
    search(&mut t, obj, cfg, budget, sink)
}

pub fn grid_search(
    obj: &dyn Objective,
    sketch: usize,
    cfg: &MeasureConfig,
    budget: SearchBudget,
    sink: &mut dyn TrialSink,
) -> Result<SearchReport> {
    let mut t = Grid::new(sketch);
    search(&mut t, obj, cfg, budget, sink)
}

pub fn genetic_search(
    obj: &dyn Objective,
    sketch: usize,
    seed_population: &[Coordinate],
    cfg: &MeasureConfig,
    budget: SearchBudget,
    params: GaParams,
    sink: &mut dyn TrialSink,
) -> Result<SearchReport> {
    let mut t = Genetic::new(obj, sketch, seed_population, params, budget.rng_seed)?;
    search(&mut t, obj, cfg, budget, sink)
}

pub fn surrogate_search(
    obj: &dyn Objective,
    sketch: usize,
    seed: &Coordinate,
    cfg: &MeasureConfig,
    budget: SearchBudget,
    params: SurrogateParams,
    sink: &mut dyn TrialSink,
) -> Result<SearchReport> {
    obj.space(sketch).validate(seed)?;
    let mut t = Surrogate::new(sketch, seed.clone(), params, budget.rng_seed);
    search(&mut t, obj, cfg, budget, sink)
}

/// Best of one sketch after exploration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchBest {
    pub sketch_id: usize,
    pub name: String,
    pub trials: usize,
    pub best: Option<Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreReport {
    pub per_sketch: Vec<SketchBest>,
    /// Global best and full history.
    pub report: SearchReport,
}

impl ExploreReport {
    fn new(obj: &dyn Objective, report: SearchReport) -> Self {
        let per_sketch = (0..obj.sketch_count())
            .map(|s| {
                let mine: Vec<&Trial> = report.history.iter().filter(|t| t.sketch == s).collect();
                SketchBest {
                    sketch_id: s,
                    name: obj.sketch_name(s),
                    trials: mine.len(),
                    best: best_of(mine).map(|t| t.sample.clone()),
                }
            })
            .collect();
        Self { per_sketch, report }
    }
}

/// Evolutionary exploration across every sketch of `obj`.
pub fn evolutionary_explore(
    obj: &dyn Objective,
    cfg: &MeasureConfig,
    budget: SearchBudget,
    params: ExploreParams,
    sink: &mut dyn TrialSink,
) -> Result<ExploreReport> {
    let mut t = Explorer::new(obj, params, budget.rng_seed);
    let mut session = Session::new(obj, *cfg);
    session.phase = Phase::Explore;
    budget.validate()?;
    cfg.validate()?;
    let out = run(&mut t, &mut session, budget.max_trials, sink)?;
    Ok(ExploreReport::new(
        obj,
        SearchReport::from_run(&session, &out, false)?,
    ))
}

/// Exploration with `n` trials, then Droplet from the best point found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedReport {
    /// Both phases merged.
    pub report: SearchReport,
    pub explore: ExploreReport,
    pub droplet: SearchReport,
    /// Where Droplet started.
    pub seed_sketch: usize,
    pub seed: Coordinate,
    pub explore_wall: Duration,
    pub exploit_wall: Duration,
}

/// Picks the Droplet seed from an exploration history: the best ok trial,
/// or the origin of `fallback` when nothing measured ok.
pub fn droplet_seed(
    obj: &dyn Objective,
    explored: &[Trial],
    fallback: usize,
) -> (usize, Coordinate) {
    match best_of(explored) {
        Some(t) if t.sample.is_ok() => (t.sketch, t.sample.coordinate.clone()),
        _ => (fallback, obj.space(fallback).origin()),
    }
}

/// Sketch without rules, or sketch 0.
pub fn naive_sketch(obj: &dyn Objective) -> usize {
    (0..obj.sketch_count())
        .find(|&s| obj.rule_count(s) == 0)
        .unwrap_or(0)
}

#[allow(clippy::too_many_arguments)]
pub fn combined_tune(
    obj: &dyn Objective,
    cfg: &MeasureConfig,
    n: usize,
    droplet_budget: usize,
    rng_seed: u64,
    params: ExploreParams,
    sink: &mut dyn TrialSink,
) -> Result<CombinedReport> {
    if n == 0 || droplet_budget == 0 {
        return Err(Error::InvalidConfig(
            "combined tuning needs N >= 1 and droplet_budget >= 1".into(),
        ));
    }
    cfg.validate()?;
    let mut session = Session::new(obj, *cfg);
    session.phase = Phase::Explore;
    let t0 = Instant::now();
    let mut explorer = Explorer::new(obj, params, rng_seed);
    let ex = run(&mut explorer, &mut session, n, sink)?;
    let explore_wall = t0.elapsed();
    let explore = ExploreReport::new(obj, SearchReport::from_run(&session, &ex, false)?);

    let (seed_sketch, seed) =
        droplet_seed(obj, &session.history[ex.start..ex.end], naive_sketch(obj));
    session.phase = Phase::Exploit;
    let t1 = Instant::now();
    let mut droplet = Droplet::new(seed_sketch, seed.clone(), cfg.alpha_converge);
    let dr = run(&mut droplet, &mut session, droplet_budget, sink)?;
    let exploit_wall = t1.elapsed();
    let droplet_report = SearchReport::from_run(&session, &dr, droplet.converged())?;

    let history = session.history.clone();
    let best = best_of(&history).cloned().ok_or(Error::EmptyPopulation)?;
    let report = SearchReport {
        sketch_id: best.sketch,
        best,
        trials_used: history.len(),
        history,
        converged: droplet.converged(),
    };
    Ok(CombinedReport {
        report,
        explore,
        droplet: droplet_report,
        seed_sketch,
        seed,
        explore_wall,
        exploit_wall,
    })
}

/// Strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Droplet,
    Random,
    Grid,
    Ga,
    Surrogate,
    Explore,
    Combined,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Droplet,
        Strategy::Random,
        Strategy::Grid,
        Strategy::Ga,
        Strategy::Surrogate,
        Strategy::Explore,
        Strategy::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Droplet => "droplet",
            Strategy::Random => "random",
            Strategy::Grid => "grid",
            Strategy::Ga => "ga",
            Strategy::Surrogate => "surrogate",
            Strategy::Explore => "explore",
            Strategy::Combined => "combined",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy `{s}`")))
    }
}

/// Hyperparameters of every strategy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyParams {
    pub ga: GaParams,
    pub surrogate: SurrogateParams,
    pub explore: ExploreParams,
}

/// A fresh tuner for any strategy but `combined`, which is two tuners in
/// sequence. Single-space strategies work in the full template sketch and
/// start from its origin (no optimization applied).
pub fn make_tuner(
    strategy: Strategy,
    obj: &dyn Objective,
    cfg: &MeasureConfig,
    params: &StrategyParams,
    rng_seed: u64,
) -> Result<Box<dyn Tuner>> {
    let sketch = full_template(obj);
    let origin = obj.space(sketch).origin();
    Ok(match strategy {
        Strategy::Droplet => Box::new(Droplet::new(sketch, origin, cfg.alpha_converge)),
        Strategy::Random => Box::new(RandomSearch::new(sketch, rng_seed)),
        Strategy::Grid => Box::new(Grid::new(sketch)),
        Strategy::Ga => Box::new(Genetic::new(obj, sketch, &[], params.ga, rng_seed)?),
        Strategy::Surrogate => Box::new(Surrogate::new(sketch, origin, params.surrogate, rng_seed)),
        Strategy::Explore => Box::new(Explorer::new(obj, params.explore, rng_seed)),
        Strategy::Combined => {
            return Err(Error::InvalidConfig(
                "combined is not a single tuner".into(),
            ));
        }
    })
}

/// A uniformly random point of `space` for which `seen` is false, or
/// `None` if every point is seen.
pub(crate) fn random_unseen(
    space: &SearchSpace,
    rng: &mut ChaCha8Rng,
    seen_count: usize,
    seen: impl Fn(&Coordinate) -> bool,
) -> Option<Coordinate> {
    let size = space.size();
    if seen_count as u128 >= size {
        return None;
    }
    // rejection sampling while at least half the space is free
    if (seen_count as u128) * 2 <= size {
        loop {
            let c = space.from_linear(rng.gen_range(0..size));
            if !seen(&c) {
                return Some(c);
            }
        }
    }
    let free: Vec<u128> = (0..size)
        .filter(|&i| !seen(&space.from_linear(i)))
        .collect();
    (!free.is_empty()).then(|| space.from_linear(free[rng.gen_range(0..free.len())]))
}

/// Seeded generator for a component of a strategy.
pub(crate) fn rng_for(seed: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(hash::combine(seed, [hash::hash_str(tag)]))
}

/// Median log-cost of the finite samples.
pub(crate) fn median_log_cost<'s>(samples: impl IntoIterator<Item = &'s Sample>) -> Option<f64> {
    let logs: Vec<f64> = samples
        .into_iter()
        .filter(|s| s.cost.is_finite() && s.cost > 0.0)
        .map(|s| s.cost.ln())
        .collect();
    (!logs.is_empty()).then(|| median(&logs))
}

/// De-duplicates in first-occurrence order.
pub(crate) fn dedup<T: Clone + Eq + std::hash::Hash>(xs: impl IntoIterator<Item = T>) -> Vec<T> {
    let mut seen = HashSet::new();
    xs.into_iter().filter(|x| seen.insert(x.clone())).collect()
}

#[cfg(test)]
mod tests;
