use std::collections::HashSet;
use std::fmt;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nest::{AxisKind, Loop, LoopNest, Part};
use super::{Body, Workload};
use crate::error::{Error, Result};
use crate::hash;
use crate::space::{Coordinate, ParamDef, ParamKind, SearchSpace};

/// Worker counts offered by parallelization slots.
pub const WORKER_VALUES: [i64; 7] = [1, 2, 4, 8, 16, 32, 64];
/// Auto-unroll step bounds offered by unroll slots.
pub const UNROLL_STEPS: [i64; 4] = [0, 16, 64, 512];
/// Vector widths offered by vectorization slots.
pub const VECTOR_WIDTHS: [i64; 4] = [1, 4, 8, 16];

/// Environment variable capping native worker threads.
pub const MAX_WORKERS_ENV: &str = "DROPTUNE_MAX_WORKERS";

/// Machine model used when annotating and validating schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Target {
    /// Physical core count; one of the worker initialization choices.
    pub cores: usize,
    /// Schedules asking for more workers than this are invalid.
    pub max_workers: usize,
}

impl Target {
    pub fn fixed(cores: usize) -> Self {
        let cores = cores.max(1);
        Self {
            cores,
            max_workers: cores,
        }
    }

    /// The host machine, honoring `DROPTUNE_MAX_WORKERS`.
    pub fn host() -> Self {
        let cores = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1);
        let cap = std::env::var(MAX_WORKERS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&c| c > 0)
            .unwrap_or(cores);
        Self {
            cores: cores.min(cap),
            max_workers: cap,
        }
    }
}

impl Default for Target {
    fn default() -> Self {
        Self::fixed(8)
    }
}

/// Per-slot initialization distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationPolicy {
    /// Weights over [`UNROLL_STEPS`].
    pub unroll_weights: [f64; 4],
}

impl Default for AnnotationPolicy {
    fn default() -> Self {
        Self {
            unroll_weights: [0.4, 0.2, 0.2, 0.2],
        }
    }
}

impl AnnotationPolicy {
    /// Draws a value index for `param` from its initialization distribution.
    pub fn draw(&self, param: &ParamDef, target: &Target, rng: &mut impl Rng) -> usize {
        let card = param.cardinality();
        match param.kind() {
            ParamKind::Unroll if param.values() == UNROLL_STEPS => {
                WeightedIndex::new(self.unroll_weights)
                    .expect("positive unroll weights")
                    .sample(rng)
            }
            ParamKind::Parallel => {
                let choices = [1, 2, 4, target.cores as i64];
                let want = choices[rng.gen_range(0..choices.len())];
                // largest offered value not above the request
                param.values().iter().rposition(|&v| v <= want).unwrap_or(0)
            }
            _ => rng.gen_range(0..card),
        }
    }
}

/// Sketch generation rules, in the canonical order they are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    AlwaysInline,
    MultiLevelTiling,
    ParallelizeOuter,
    VectorizeInner,
    UnrollInner,
}

impl Rule {
    pub const ALL: [Rule; 5] = [
        Rule::AlwaysInline,
        Rule::MultiLevelTiling,
        Rule::ParallelizeOuter,
        Rule::VectorizeInner,
        Rule::UnrollInner,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Rule::AlwaysInline => "inline",
            Rule::MultiLevelTiling => "tile",
            Rule::ParallelizeOuter => "parallel",
            Rule::VectorizeInner => "vectorize",
            Rule::UnrollInner => "unroll",
        }
    }
}

/// One loop transformation. `slot` indexes the sketch's search space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Transformation {
    Inline {
        producer: String,
    },
    Tile {
        stage: String,
        axis: String,
        slot: usize,
    },
    Reorder {
        stage: String,
        order: Vec<String>,
    },
    Fuse {
        stage: String,
        first: String,
        second: String,
    },
    Parallelize {
        stage: String,
        target: String,
        slot: usize,
    },
    Unroll {
        stage: String,
        target: String,
        slot: usize,
    },
    Vectorize {
        stage: String,
        target: String,
        slot: usize,
    },
}

/// A workload plus a sequence of transformations with open parameter slots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sketch {
    workload: Workload,
    target: Target,
    rules: Vec<Rule>,
    steps: Vec<Transformation>,
    space: SearchSpace,
    #[serde(skip)]
    policy: AnnotationPolicy,
}

/// The naive implementation: no transformations, a single empty annotation.
pub fn naive_schedule(w: &Workload) -> Sketch {
    Sketch {
        workload: w.clone(),
        target: Target::default(),
        rules: Vec::new(),
        steps: Vec::new(),
        space: SearchSpace::empty(),
        policy: AnnotationPolicy::default(),
    }
}

/// Every sketch reachable with at most `max_depth` rule applications.
///
/// Rules are applied in canonical order, so a sketch is identified by the
/// set of rules it used. The naive sketch comes first; the list is ordered by
/// depth and then by rule order.
pub fn generate_sketches(w: &Workload, max_depth: usize, target: Target) -> Vec<Sketch> {
    let mut root = naive_schedule(w);
    root.target = target;
    let mut out = vec![root];
    let mut seen: HashSet<Vec<Rule>> = HashSet::from([Vec::new()]);
    let mut frontier = vec![0usize];
    for _ in 0..max_depth {
        let mut next = Vec::new();
        for &idx in &frontier {
            let base = out[idx].clone();
            let last = base.rules.last().copied();
            for rule in Rule::ALL {
                if last.is_some_and(|l| rule <= l) {
                    continue;
                }
                if let Some(sk) = base.with_rule(rule) {
                    if seen.insert(sk.rules.clone()) {
                        out.push(sk);
                        next.push(out.len() - 1);
                    }
                }
            }
        }
        frontier = next;
    }
    out
}

/// Outcome of binding a coordinate to a sketch.
#[derive(Debug, Clone)]
pub enum Applied<'a> {
    Schedule(Schedule<'a>),
    /// Structurally invalid for the target (e.g. too many workers).
    Invalid(String),
}

impl<'a> Applied<'a> {
    pub fn schedule(self) -> Option<Schedule<'a>> {
        match self {
            Applied::Schedule(s) => Some(s),
            Applied::Invalid(_) => None,
        }
    }
}

impl Sketch {
    pub fn workload(&self) -> &Workload {
        &self.workload
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn steps(&self) -> &[Transformation] {
        &self.steps
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn policy(&self) -> &AnnotationPolicy {
        &self.policy
    }

    pub fn with_policy(mut self, policy: AnnotationPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn is_naive(&self) -> bool {
        self.rules.is_empty()
    }

    /// `naive` or the applied rules joined with `+`.
    pub fn name(&self) -> String {
        if self.rules.is_empty() {
            "naive".to_string()
        } else {
            self.rules
                .iter()
                .map(|r| r.short_name())
                .collect::<Vec<_>>()
                .join("+")
        }
    }

    /// Stable identity of the sketch, independent of the host.
    pub fn fingerprint(&self) -> u64 {
        hash::hash_str(&format!("{}|{}", self.workload, self.name()))
    }

    /// Samples an initial annotation slot by slot; deterministic in `seed`.
    pub fn initialize_annotation(&self, seed: u64) -> Coordinate {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.random_annotation(&mut rng)
    }

    pub fn random_annotation(&self, rng: &mut impl Rng) -> Coordinate {
        let idx = self
            .space
            .params()
            .iter()
            .map(|p| self.policy.draw(p, &self.target, rng))
            .collect();
        Coordinate::new(idx)
    }

    /// Binds `c` and resolves the loop nest.
    pub fn apply(&self, c: &Coordinate) -> Result<Applied<'_>> {
        self.space.validate(c)?;
        let values = self.space.values_of(c)?;
        let nest = self.resolve(&values)?;
        for st in &nest.stages {
            for l in &st.loops {
                if l.annotations.parallel > self.target.max_workers {
                    return Ok(Applied::Invalid(format!(
                        "{} workers on `{}` exceeds the worker cap {}",
                        l.annotations.parallel, l.name, self.target.max_workers
                    )));
                }
            }
        }
        Ok(Applied::Schedule(Schedule {
            sketch: self,
            coordinate: c.clone(),
            nest,
        }))
    }

    fn resolve(&self, values: &[i64]) -> Result<LoopNest> {
        let mut nest = self.workload.naive_nest();
        for step in &self.steps {
            apply_step(&mut nest, step, values)?;
        }
        Ok(nest)
    }

    /// Structure of the nest with every slot at its first value.
    fn structure(&self) -> LoopNest {
        self.resolve(
            &self
                .space
                .params()
                .iter()
                .map(|p| p.values()[0])
                .collect::<Vec<_>>(),
        )
        .expect("rule-built sketches resolve")
    }

    fn push_param(&mut self, name: &str, kind: ParamKind, values: Vec<i64>) -> usize {
        let mut params = self.space.params().to_vec();
        params.push(ParamDef::new(name, kind, values).expect("rule parameters are well formed"));
        self.space = SearchSpace::new(params).expect("rule parameter names are unique");
        self.space.dimension() - 1
    }

    fn with_rule(&self, rule: Rule) -> Option<Sketch> {
        let nest = self.structure();
        let last = nest.stages.last()?;
        let stage = last.name.clone();
        let mut sk = self.clone();
        match rule {
            Rule::AlwaysInline => {
                if !matches!(self.workload.body, Body::ElementwiseChain { .. })
                    || nest.stages.len() < 2
                {
                    return None;
                }
                for st in &nest.stages[..nest.stages.len() - 1] {
                    sk.steps.push(Transformation::Inline {
                        producer: st.name.clone(),
                    });
                }
            }
            Rule::MultiLevelTiling => {
                let tileable: &[&str] = match self.workload.body {
                    Body::Matmul { .. } => &["i", "j", "k"],
                    Body::Conv2d { .. } => &["n", "f", "y", "x", "c"],
                    Body::Reduce { .. } => &["i"],
                    Body::ElementwiseChain { .. } => return None,
                };
                let mut spatial_o = vec![];
                let mut reduce_o = vec![];
                let mut spatial_i = vec![];
                let mut reduce_i = vec![];
                for a in &last.axes {
                    let tiled = tileable.contains(&a.name.as_str());
                    if tiled {
                        let factors = (0..)
                            .map(|e| 1i64 << e)
                            .take_while(|&f| f <= a.extent as i64)
                            .collect();
                        let slot =
                            sk.push_param(&format!("tile.{}", a.name), ParamKind::Tile, factors);
                        sk.steps.push(Transformation::Tile {
                            stage: stage.clone(),
                            axis: a.name.clone(),
                            slot,
                        });
                    }
                    let (o, i) = (format!("{}.o", a.name), format!("{}.i", a.name));
                    match (a.kind, tiled) {
                        (AxisKind::Spatial, true) => {
                            spatial_o.push(o);
                            spatial_i.push(i);
                        }
                        (AxisKind::Reduction, true) => {
                            reduce_o.push(o);
                            reduce_i.push(i);
                        }
                        (AxisKind::Spatial, false) => spatial_i.push(a.name.clone()),
                        (AxisKind::Reduction, false) => reduce_i.push(a.name.clone()),
                    }
                }
                // outers, then inner spatial loops around the reductions with
                // the last spatial loop innermost
                let innermost = spatial_i.pop();
                let mut order = spatial_o;
                order.extend(reduce_o);
                order.extend(spatial_i);
                order.extend(reduce_i);
                order.extend(innermost);
                sk.steps.push(Transformation::Reorder {
                    stage: stage.clone(),
                    order,
                });
            }
            Rule::ParallelizeOuter => {
                let run: Vec<&Loop> = last
                    .loops
                    .iter()
                    .take_while(|l| l.is_spatial(&last.axes))
                    .collect();
                if run.is_empty() {
                    return None;
                }
                let mut fused = run[0].name.clone();
                for l in &run[1..] {
                    sk.steps.push(Transformation::Fuse {
                        stage: stage.clone(),
                        first: fused.clone(),
                        second: l.name.clone(),
                    });
                    fused = format!("{fused}@{}", l.name);
                }
                let slot = sk.push_param("parallel", ParamKind::Parallel, WORKER_VALUES.to_vec());
                sk.steps.push(Transformation::Parallelize {
                    stage: stage.clone(),
                    target: fused,
                    slot,
                });
            }
            Rule::VectorizeInner => {
                let inner = last.loops.last()?;
                if !inner.is_spatial(&last.axes) {
                    return None;
                }
                let slot = sk.push_param("vector", ParamKind::Other, VECTOR_WIDTHS.to_vec());
                sk.steps.push(Transformation::Vectorize {
                    stage: stage.clone(),
                    target: inner.name.clone(),
                    slot,
                });
            }
            Rule::UnrollInner => {
                let target = last
                    .loops
                    .iter()
                    .rev()
                    .find(|l| l.is_reduction(&last.axes))
                    .or(last.loops.last())?
                    .name
                    .clone();
                let slot = sk.push_param("unroll", ParamKind::Unroll, UNROLL_STEPS.to_vec());
                sk.steps.push(Transformation::Unroll {
                    stage: stage.clone(),
                    target,
                    slot,
                });
            }
        }
        sk.rules.push(rule);
        Some(sk)
    }
}

fn bad(msg: String) -> Error {
    Error::InvalidWorkload {
        name: "sketch".into(),
        reason: msg,
    }
}

fn apply_step(nest: &mut LoopNest, step: &Transformation, values: &[i64]) -> Result<()> {
    let slot_value = |slot: usize| -> Result<usize> {
        values
            .get(slot)
            .map(|&v| v.max(0) as usize)
            .ok_or_else(|| bad(format!("unbound slot {slot}")))
    };
    let stage_mut = |nest: &mut LoopNest, name: &str| -> Result<usize> {
        nest.stages
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| bad(format!("no stage `{name}`")))
    };
    match step {
        Transformation::Inline { producer } => {
            let p = stage_mut(nest, producer)?;
            if p + 1 >= nest.stages.len() {
                return Err(bad(format!("stage `{producer}` has no consumer")));
            }
            let removed = nest.stages.remove(p);
            nest.stages[p].ops += removed.ops;
        }
        Transformation::Tile { stage, axis, slot } => {
            let factor = slot_value(*slot)?.max(1);
            let s = stage_mut(nest, stage)?;
            let st = &mut nest.stages[s];
            let pos = st
                .loop_position(axis)
                .ok_or_else(|| bad(format!("no loop `{axis}`")))?;
            let l = &st.loops[pos];
            let [part] = l.parts[..] else {
                return Err(bad(format!("loop `{axis}` is fused")));
            };
            let outer = Loop {
                name: format!("{axis}.o"),
                parts: vec![Part {
                    axis: part.axis,
                    stride: part.stride * factor,
                    extent: part.extent.div_ceil(factor),
                }],
                annotations: Default::default(),
            };
            let inner = Loop {
                name: format!("{axis}.i"),
                parts: vec![Part {
                    axis: part.axis,
                    stride: part.stride,
                    extent: factor,
                }],
                annotations: Default::default(),
            };
            st.loops.splice(pos..=pos, [outer, inner]);
        }
        Transformation::Reorder { stage, order } => {
            let s = stage_mut(nest, stage)?;
            let st = &mut nest.stages[s];
            if order.len() != st.loops.len() {
                return Err(bad("reorder is not a permutation".into()));
            }
            let mut loops = Vec::with_capacity(order.len());
            for name in order {
                let pos = st
                    .loop_position(name)
                    .ok_or_else(|| bad(format!("no loop `{name}`")))?;
                loops.push(st.loops[pos].clone());
            }
            st.loops = loops;
        }
        Transformation::Fuse {
            stage,
            first,
            second,
        } => {
            let s = stage_mut(nest, stage)?;
            let st = &mut nest.stages[s];
            let a = st
                .loop_position(first)
                .ok_or_else(|| bad(format!("no loop `{first}`")))?;
            if st.loops.get(a + 1).map(|l| l.name.as_str()) != Some(second.as_str()) {
                return Err(bad(format!("`{first}` and `{second}` are not adjacent")));
            }
            let b = st.loops.remove(a + 1);
            let l = &mut st.loops[a];
            l.name = format!("{}@{}", l.name, b.name);
            l.parts.extend(b.parts);
        }
        Transformation::Parallelize {
            stage,
            target,
            slot,
        }
        | Transformation::Unroll {
            stage,
            target,
            slot,
        }
        | Transformation::Vectorize {
            stage,
            target,
            slot,
        } => {
            let v = slot_value(*slot)?;
            let s = stage_mut(nest, stage)?;
            let st = &mut nest.stages[s];
            let pos = st
                .loop_position(target)
                .ok_or_else(|| bad(format!("no loop `{target}`")))?;
            let l = &mut st.loops[pos];
            let extent = l.extent();
            let a = &mut l.annotations;
            match step {
                Transformation::Parallelize { .. } => a.parallel = v.max(1),
                Transformation::Vectorize { .. } => a.vector = v.max(1),
                _ => {
                    a.unroll_max_step = Some(v);
                    a.unroll = unroll_factor(v, extent);
                }
            }
        }
    }
    Ok(())
}

/// Largest power of two not above `min(max_step, extent)`; 1 when disabled.
fn unroll_factor(max_step: usize, extent: usize) -> usize {
    let cap = max_step.min(extent);
    if cap == 0 {
        1
    } else {
        1 << (usize::BITS - 1 - cap.leading_zeros())
    }
}

/// A sketch with every slot bound: a concrete, runnable kernel.
#[derive(Debug, Clone)]
pub struct Schedule<'a> {
    pub sketch: &'a Sketch,
    pub coordinate: Coordinate,
    pub nest: LoopNest,
}

impl Schedule<'_> {
    /// Bound value of the named slot, if the sketch has it.
    pub fn slot(&self, name: &str) -> Option<i64> {
        let (d, p) = self.sketch.space.param(name)?;
        Some(p.values()[self.coordinate.indices()[d]])
    }
}

impl fmt::Display for Schedule<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "# {} / sketch {}",
            self.sketch.workload,
            self.sketch.name()
        )?;
        let values = self
            .sketch
            .space
            .values_of(&self.coordinate)
            .unwrap_or_default();
        for (p, v) in self.sketch.space.params().iter().zip(values) {
            writeln!(f, "#   {} = {v}", p.name())?;
        }
        write!(f, "{}", self.nest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(sks: &[Sketch]) -> Vec<String> {
        sks.iter().map(Sketch::name).collect()
    }

    #[test]
    fn naive_sketch_has_no_steps() {
        let mm = naive_schedule(&Workload::matmul(4, 4, 4));
        assert!(mm.steps().is_empty());
        assert_eq!(mm.space().size(), 1);
        assert_eq!(mm.workload().naive_nest().stages[0].loops.len(), 3);

        let ew = Workload::new(
            "e",
            Body::ElementwiseChain {
                length: 2,
                extent: 8,
            },
        )
        .unwrap();
        let nest = ew.naive_nest();
        assert_eq!(nest.stages.len(), 2);
        assert!(nest
            .stages
            .iter()
            .all(|s| s.loops.len() == 1 && s.loops[0].extent() == 8));

        let r = Workload::new("r", Body::Reduce { extent: 16 }).unwrap();
        let nest = naive_schedule(&r).workload().naive_nest();
        assert_eq!(nest.stages.len(), 1);
        assert_eq!(nest.stages[0].loops.len(), 1);
        assert_eq!(nest.stages[0].axes[0].kind, AxisKind::Reduction);
    }

    #[test]
    fn depth_zero_is_naive_only() {
        for w in [
            Workload::matmul(8, 8, 8),
            Workload::new(
                "e",
                Body::ElementwiseChain {
                    length: 3,
                    extent: 8,
                },
            )
            .unwrap(),
        ] {
            let sks = generate_sketches(&w, 0, Target::default());
            assert_eq!(sks.len(), 1);
            assert_eq!(sks[0], naive_schedule(&w));
        }
    }

    #[test]
    fn inline_rule_on_chain() {
        let w = Workload::new(
            "e",
            Body::ElementwiseChain {
                length: 2,
                extent: 8,
            },
        )
        .unwrap();
        let sks = generate_sketches(&w, 1, Target::default());
        let n = names(&sks);
        assert!(n.contains(&"naive".to_string()));
        assert!(n.contains(&"inline".to_string()));
        let inl = sks.iter().find(|s| s.name() == "inline").unwrap();
        let Applied::Schedule(s) = inl.apply(&inl.space().origin()).unwrap() else {
            panic!()
        };
        assert_eq!(s.nest.stages.len(), 1);
        assert_eq!(s.nest.stages[0].ops, 2);
    }

    #[test]
    fn matmul_sketch_list() {
        let sks = generate_sketches(&Workload::matmul(64, 64, 64), 3, Target::default());
        assert_eq!(
            names(&sks),
            vec![
                "naive",
                "tile",
                "parallel",
                "unroll",
                "tile+parallel",
                "tile+vectorize",
                "tile+unroll",
                "parallel+unroll",
                "tile+parallel+vectorize",
                "tile+parallel+unroll",
                "tile+vectorize+unroll",
            ]
        );
        assert_eq!(
            sks,
            generate_sketches(&Workload::matmul(64, 64, 64), 3, Target::default())
        );
    }

    #[test]
    fn tiled_matmul_structure() {
        let sks = generate_sketches(&Workload::matmul(4, 4, 4), 1, Target::default());
        let tile = sks.iter().find(|s| s.name() == "tile").unwrap();
        let c = tile.space().coordinate_of(&[2, 1, 1]).unwrap();
        let Applied::Schedule(s) = tile.apply(&c).unwrap() else {
            panic!()
        };
        let loops: Vec<(&str, usize)> = s.nest.stages[0]
            .loops
            .iter()
            .map(|l| (l.name.as_str(), l.extent()))
            .collect();
        assert_eq!(
            loops,
            vec![
                ("i.o", 2),
                ("j.o", 4),
                ("k.o", 4),
                ("i.i", 2),
                ("k.i", 1),
                ("j.i", 1)
            ]
        );
        assert_eq!(s.nest.body_executions(), 64);
    }

    #[test]
    fn tile_with_tail() {
        let w = Workload::new("m", Body::Matmul { m: 5, n: 4, k: 4 }).unwrap();
        let sks = generate_sketches(&w, 1, Target::default());
        let tile = sks.iter().find(|s| s.name() == "tile").unwrap();
        let c = tile.space().coordinate_of(&[2, 1, 1]).unwrap();
        let s = tile.apply(&c).unwrap().schedule().unwrap();
        assert_eq!(s.nest.stages[0].loops[0].extent(), 3);
        assert!(s.nest.stages[0].is_guarded());
        assert_eq!(s.nest.body_executions(), 80);
        assert!(s.nest.covers_each_point_once());
    }

    #[test]
    fn tile_factor_one_is_identity() {
        let w = Workload::matmul(3, 5, 2);
        let sks = generate_sketches(&w, 1, Target::default());
        let tile = sks.iter().find(|s| s.name() == "tile").unwrap();
        let s = tile
            .apply(&tile.space().origin())
            .unwrap()
            .schedule()
            .unwrap();
        let mut tiled = vec![];
        s.nest.stages[0].for_each_point(|v| tiled.push(v.to_vec()));
        let mut naive = vec![];
        w.naive_nest().stages[0].for_each_point(|v| naive.push(v.to_vec()));
        // same point set; order differs only by the reorder
        tiled.sort();
        naive.sort();
        assert_eq!(tiled, naive);
    }

    #[test]
    fn too_many_workers_is_invalid() {
        let target = Target {
            cores: 2,
            max_workers: 2,
        };
        let sks = generate_sketches(&Workload::matmul(8, 8, 8), 1, target);
        let par = sks.iter().find(|s| s.name() == "parallel").unwrap();
        let ok = par.space().coordinate_of(&[2]).unwrap();
        let bad = par.space().coordinate_of(&[4]).unwrap();
        assert!(matches!(par.apply(&ok).unwrap(), Applied::Schedule(_)));
        assert!(matches!(par.apply(&bad).unwrap(), Applied::Invalid(_)));
    }

    #[test]
    fn unroll_factor_resolution() {
        assert_eq!(unroll_factor(0, 64), 1);
        assert_eq!(unroll_factor(16, 64), 16);
        assert_eq!(unroll_factor(512, 64), 64);
        assert_eq!(unroll_factor(64, 5), 4);
    }

    #[test]
    fn initialize_annotation_is_deterministic() {
        let sks = generate_sketches(&Workload::matmul(64, 64, 64), 3, Target::default());
        let sk = sks.last().unwrap();
        assert_eq!(sk.initialize_annotation(42), sk.initialize_annotation(42));
        assert!(sk.space().contains(&sk.initialize_annotation(7)));
        assert_eq!(sks[0].initialize_annotation(3), Coordinate::new(vec![]));
    }

    #[test]
    fn printing_mentions_annotations() {
        let sks = generate_sketches(&Workload::matmul(16, 16, 16), 3, Target::fixed(4));
        let sk = sks
            .iter()
            .find(|s| s.name() == "tile+parallel+unroll")
            .unwrap();
        let c = sk.space().coordinate_of(&[4, 4, 4, 2, 16]).unwrap();
        let text = sk.apply(&c).unwrap().schedule().unwrap().to_string();
        assert!(text.contains("parallel(2) for i.o@j.o in 0..16:"), "{text}");
        assert!(
            text.contains("unroll(4, max_step=16) for k.i in 0..4:"),
            "{text}"
        );
    }
}
