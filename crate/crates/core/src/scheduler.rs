//! Splitting one trial budget across the layers of a model.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{Target, Workload};
use crate::log::{Phase, TrialSink};
use crate::measure::{Backend, MeasureConfig};
use crate::search::{
    best_of, droplet_seed, make_tuner, naive_sketch, run, Droplet, Objective, Session, SketchSet,
    Strategy, StrategyParams, Trial, Tuner, DEFAULT_DROPLET_BUDGET,
};

/// Cap on the first, round-robin allocation per layer.
pub const MAX_INITIAL_QUOTA: usize = 64;
/// Trials granted per refocusing step.
pub const INCREMENT: usize = 16;
/// Layers whose weighted best cost falls below this share of the model
/// total stop receiving trials.
pub const DROP_FRACTION: f64 = 0.01;

/// `min(floor(K / L), 64)`, at least 1.
pub fn initial_quota(k: usize, l: usize) -> usize {
    (k / l.max(1)).clamp(1, MAX_INITIAL_QUOTA)
}

/// One kernel of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneTask {
    pub layer_id: String,
    pub workload: Workload,
    /// How often the kernel occurs in the model.
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

impl TuneTask {
    pub fn new(layer_id: impl Into<String>, workload: Workload, weight: f64) -> Self {
        Self {
            layer_id: layer_id.into(),
            workload,
            weight,
        }
    }
}

/// A layer bound to what measures it.
pub struct Layer<'a> {
    pub id: String,
    pub weight: f64,
    pub objective: &'a dyn Objective,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    /// Total trials.
    pub k: usize,
    /// Exploration trials of the combined strategy.
    #[serde(default)]
    pub n: Option<usize>,
    /// Droplet cap per layer.
    #[serde(default = "default_droplet_budget")]
    pub droplet_budget: usize,
}

fn default_droplet_budget() -> usize {
    DEFAULT_DROPLET_BUDGET
}

impl Budgets {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            n: None,
            droplet_budget: DEFAULT_DROPLET_BUDGET,
        }
    }

    pub fn combined(k: usize, n: usize) -> Self {
        Self {
            k,
            n: Some(n),
            droplet_budget: DEFAULT_DROPLET_BUDGET,
        }
    }

    pub fn validate(&self, strategy: Strategy) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("budgets.k must be at least 1".into()));
        }
        if self.droplet_budget == 0 {
            return Err(Error::InvalidConfig(
                "budgets.droplet_budget must be at least 1".into(),
            ));
        }
        if let Some(n) = self.n {
            if n == 0 {
                return Err(Error::InvalidConfig("budgets.n must be at least 1".into()));
            }
            if strategy == Strategy::Combined && n >= self.k {
                return Err(Error::InvalidConfig(format!(
                    "budgets.n ({n}) must be below budgets.k ({})",
                    self.k
                )));
            }
        } else if strategy == Strategy::Combined {
            return Err(Error::InvalidConfig(
                "budgets.n is required by the combined strategy".into(),
            ));
        }
        Ok(())
    }
}

/// Trials actually granted, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub initial_quota: usize,
    pub rounds: Vec<Round>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub layer_id: String,
    pub phase: Phase,
    /// 1 for the round-robin pass, 2 for refocusing, 3 for Droplet.
    pub stage: u8,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer_id: String,
    pub weight: f64,
    pub trials: usize,
    pub stage1_trials: usize,
    pub stage2_trials: usize,
    pub droplet_trials: usize,
    /// Left the refocusing worklist for being cheap.
    pub dropped: bool,
    pub converged: bool,
    pub best: Option<Trial>,
    pub best_sketch: Option<String>,
    /// Also in the trial log; left out of the JSON form.
    #[serde(skip)]
    pub history: Vec<Trial>,
}

impl LayerReport {
    pub fn best_cost(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |t| t.sample.cost)
    }

    pub fn weighted_cost(&self) -> f64 {
        self.weight * self.best_cost()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub strategy: Strategy,
    pub budgets: Budgets,
    pub layers: Vec<LayerReport>,
    pub plan: AllocationPlan,
    pub total_trials: usize,
    /// Sum of weight times best cost; infinite if a layer has no ok sample.
    pub weighted_cost_ns: f64,
    pub explore_wall: Duration,
    pub exploit_wall: Duration,
}

/// One CSV row per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub layer_id: String,
    pub weight: f64,
    pub trials: usize,
    pub droplet_trials: usize,
    pub best_cost_ns: Option<f64>,
    pub weighted_cost_ns: Option<f64>,
    pub best_sketch: String,
    pub best_coord: String,
    pub dropped: bool,
    pub converged: bool,
}

impl ModelReport {
    pub fn rows(&self) -> Vec<LayerRow> {
        self.layers
            .iter()
            .map(|l| LayerRow {
                layer_id: l.layer_id.clone(),
                weight: l.weight,
                trials: l.trials,
                droplet_trials: l.droplet_trials,
                best_cost_ns: l.best_cost().is_finite().then(|| l.best_cost()),
                weighted_cost_ns: l.weighted_cost().is_finite().then(|| l.weighted_cost()),
                best_sketch: l.best_sketch.clone().unwrap_or_default(),
                best_coord: l
                    .best
                    .as_ref()
                    .map(|t| t.sample.coordinate.to_string())
                    .unwrap_or_default(),
                dropped: l.dropped,
                converged: l.converged,
            })
            .collect()
    }
}

struct State<'a> {
    id: String,
    weight: f64,
    session: Session<'a>,
    tuner: Box<dyn Tuner>,
    active: bool,
    dropped: bool,
    stage: [usize; 3],
}

impl State<'_> {
    fn weighted(&self) -> f64 {
        best_of(self.session.history()).map_or(f64::INFINITY, |t| self.weight * t.sample.cost)
    }

    fn trials(&self) -> usize {
        self.session.history().len()
    }
}

struct Allocator<'a, 's> {
    states: Vec<State<'a>>,
    plan: AllocationPlan,
    spent: usize,
    sink: &'s mut dyn TrialSink,
}

impl Allocator<'_, '_> {
    fn grant(&mut self, i: usize, trials: usize, stage: u8) -> Result<()> {
        let st = &mut self.states[i];
        let out = run(st.tuner.as_mut(), &mut st.session, trials, self.sink)?;
        if out.exhausted {
            st.active = false;
        }
        st.stage[stage as usize - 1] += out.trials();
        self.spent += out.trials();
        self.plan.rounds.push(Round {
            layer_id: st.id.clone(),
            phase: st.session.phase,
            stage,
            trials: out.trials(),
        });
        Ok(())
    }

    /// Round-robin quota, then 16-trial grants to the most expensive layer.
    fn allocate(&mut self, budget: usize) -> Result<()> {
        let start = self.spent;
        let quota = self.plan.initial_quota;
        for i in 0..self.states.len() {
            let left = budget - (self.spent - start);
            if left == 0 {
                return Ok(());
            }
            self.grant(i, quota.min(left), 1)?;
        }
        while self.spent - start < budget {
            let total: f64 = self
                .states
                .iter()
                .map(State::weighted)
                .filter(|c| c.is_finite())
                .sum();
            for st in &mut self.states {
                let w = st.weighted();
                if st.active && w.is_finite() && w < DROP_FRACTION * total {
                    st.active = false;
                    st.dropped = true;
                }
            }
            // most expensive first; fewer trials, then lower index, on ties
            let pick = (0..self.states.len())
                .filter(|&i| self.states[i].active)
                .min_by(|&a, &b| {
                    let (x, y) = (&self.states[a], &self.states[b]);
                    y.weighted()
                        .total_cmp(&x.weighted())
                        .then(x.trials().cmp(&y.trials()))
                        .then(a.cmp(&b))
                });
            let Some(i) = pick else { break };
            let left = budget - (self.spent - start);
            self.grant(i, INCREMENT.min(left), 2)?;
        }
        Ok(())
    }
}

/// Tunes every layer under one budget of `budgets.k` trials.
///
/// Every layer first gets `initial_quota(K, L)` trials, then layers are
/// granted 16 trials at a time, always the one with the largest weighted
/// best cost. Layers below 1% of the model's weighted total are dropped,
/// as are layers whose tuner has nothing left to try. For `combined` the
/// allocation runs the explorer with `budgets.n` trials, then Droplet runs
/// in each layer from its best explored point, capped by
/// `budgets.droplet_budget` per layer and by `K` overall.
#[allow(clippy::too_many_arguments)]
pub fn tune_layers(
    layers: &[Layer<'_>],
    strategy: Strategy,
    budgets: Budgets,
    cfg: &MeasureConfig,
    params: &StrategyParams,
    rng_seed: u64,
    sink: &mut dyn TrialSink,
) -> Result<ModelReport> {
    if layers.is_empty() {
        return Err(Error::NoTasks);
    }
    budgets.validate(strategy)?;
    cfg.validate()?;
    if let Some(l) = layers
        .iter()
        .find(|l| !(l.weight >= 1.0 && l.weight.is_finite()))
    {
        return Err(Error::InvalidConfig(format!(
            "layer `{}`: weight must be at least 1, got {}",
            l.id, l.weight
        )));
    }
    let combined = strategy == Strategy::Combined;
    let first = if combined {
        Strategy::Explore
    } else {
        strategy
    };
    let phase = if first == Strategy::Explore {
        Phase::Explore
    } else {
        Phase::Exploit
    };
    let first_budget = if combined {
        budgets.n.expect("validated")
    } else {
        budgets.k
    };

    let states = layers
        .iter()
        .map(|l| {
            let mut session = Session::new(l.objective, *cfg).with_layer(l.id.clone());
            session.phase = phase;
            Ok(State {
                id: l.id.clone(),
                weight: l.weight,
                session,
                tuner: make_tuner(first, l.objective, cfg, params, rng_seed)?,
                active: true,
                dropped: false,
                stage: [0; 3],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let plan = AllocationPlan {
        initial_quota: initial_quota(first_budget, layers.len()),
        rounds: Vec::new(),
    };
    let mut alloc = Allocator {
        states,
        plan,
        spent: 0,
        sink,
    };

    let t0 = Instant::now();
    alloc.allocate(first_budget)?;
    let first_wall = t0.elapsed();
    let mut converged = vec![false; layers.len()];
    let mut exploit_wall = Duration::ZERO;
    if combined {
        let t1 = Instant::now();
        for (i, st) in alloc.states.iter_mut().enumerate() {
            let left = budgets.k - alloc.spent;
            if left == 0 {
                break;
            }
            let obj = st.session.objective;
            let (sketch, seed) = droplet_seed(obj, st.session.history(), naive_sketch(obj));
            let mut droplet = Droplet::new(sketch, seed, cfg.alpha_converge);
            st.session.phase = Phase::Exploit;
            let out = run(
                &mut droplet,
                &mut st.session,
                budgets.droplet_budget.min(left),
                alloc.sink,
            )?;
            converged[i] = droplet.converged();
            st.stage[2] += out.trials();
            alloc.spent += out.trials();
            alloc.plan.rounds.push(Round {
                layer_id: st.id.clone(),
                phase: Phase::Exploit,
                stage: 3,
                trials: out.trials(),
            });
        }
        exploit_wall = t1.elapsed();
    }
    let (explore_wall, exploit_wall) = if phase == Phase::Explore {
        (first_wall, exploit_wall)
    } else {
        (Duration::ZERO, first_wall)
    };

    let total_trials = alloc.spent;
    let layers_out: Vec<LayerReport> = alloc
        .states
        .iter()
        .enumerate()
        .map(|(i, st)| {
            let history = st.session.history().to_vec();
            let best = best_of(&history).cloned();
            LayerReport {
                layer_id: st.id.clone(),
                weight: st.weight,
                trials: history.len(),
                stage1_trials: st.stage[0],
                stage2_trials: st.stage[1],
                droplet_trials: st.stage[2],
                dropped: st.dropped,
                converged: converged[i] || st.tuner.converged(),
                best_sketch: best
                    .as_ref()
                    .map(|t| st.session.objective.sketch_name(t.sketch)),
                best,
                history,
            }
        })
        .collect();
    let weighted_cost_ns = layers_out.iter().map(LayerReport::weighted_cost).sum();
    Ok(ModelReport {
        strategy,
        budgets,
        layers: layers_out,
        plan: alloc.plan,
        total_trials,
        weighted_cost_ns,
        explore_wall,
        exploit_wall,
    })
}

/// [`tune_layers`] over the generated sketches of each task's workload.
#[allow(clippy::too_many_arguments)]
pub fn tune_model(
    tasks: &[TuneTask],
    strategy: Strategy,
    budgets: Budgets,
    backend: &dyn Backend,
    target: Target,
    cfg: &MeasureConfig,
    params: &StrategyParams,
    rng_seed: u64,
    sink: &mut dyn TrialSink,
) -> Result<ModelReport> {
    if tasks.is_empty() {
        return Err(Error::NoTasks);
    }
    for t in tasks {
        t.workload.validate()?;
    }
    let sets: Vec<SketchSet<'_>> = tasks
        .iter()
        .map(|t| SketchSet::generate(&t.workload, target, backend))
        .collect();
    let layers: Vec<Layer<'_>> = tasks
        .iter()
        .zip(&sets)
        .map(|(t, s)| Layer {
            id: t.layer_id.clone(),
            weight: t.weight,
            objective: s,
        })
        .collect();
    tune_layers(&layers, strategy, budgets, cfg, params, rng_seed, sink)
}
