//! Evolutionary exploration across the sketches of a workload.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dedup, median_log_cost, random_unseen, rng_for, Objective, Tuner};
use crate::error::Result;
use crate::measure::Sample;
use crate::space::Coordinate;
use crate::surrogate::{features, BoostParams, StumpEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExploreParams {
    /// Initial annotations drawn per sketch.
    pub init_per_sketch: usize,
    /// Mutants generated per sketch and round.
    pub population: usize,
    /// Measured best points per sketch kept as mutation parents.
    pub parents: usize,
    pub batch: usize,
    /// Chance that a batch slot goes to a random candidate instead of the
    /// next best prediction.
    pub eps_greedy: f64,
    pub boost: BoostParams,
}

impl Default for ExploreParams {
    fn default() -> Self {
        Self {
            init_per_sketch: 8,
            population: 64,
            parents: 16,
            batch: 8,
            eps_greedy: 0.05,
            boost: BoostParams::default(),
        }
    }
}

/// Evolutionary search over all sketches with one cost model per sketch.
///
/// Each round it mutates the initial annotations and the best measured
/// points of every sketch (a mutation re-draws one slot from its
/// initialization distribution), predicts every unmeasured candidate with
/// its sketch's model, and proposes the best-predicted batch. Sketches with
/// fewer than two finite samples have no model yet; their candidates are
/// predicted at the median log-cost measured so far. Candidates of
/// different sketches are interleaved, richest sketches first, so ties in
/// prediction (such as in the very first round) spread over sketches.
#[derive(Debug, Clone)]
pub struct Explorer {
    params: ExploreParams,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    initial: Vec<Vec<Coordinate>>,
    measured: Vec<Vec<Sample>>,
    seen: Vec<HashSet<Coordinate>>,
}

impl Explorer {
    pub fn new(obj: &dyn Objective, params: ExploreParams, seed: u64) -> Self {
        let count = obj.sketch_count();
        let mut rng = rng_for(seed, "explore");
        let mut order: Vec<usize> = (0..count).collect();
        order.sort_by_key(|&s| (std::cmp::Reverse(obj.rule_count(s)), s));
        let initial = (0..count)
            .map(|s| {
                dedup((0..params.init_per_sketch.max(1)).map(|_| obj.random_point(s, &mut rng)))
            })
            .collect();
        Self {
            params,
            rng,
            order,
            initial,
            measured: vec![Vec::new(); count],
            seen: vec![HashSet::new(); count],
        }
    }

    fn candidates(&mut self, obj: &dyn Objective, s: usize) -> Vec<Coordinate> {
        let space = obj.space(s);
        let mut out: Vec<Coordinate> = self.initial[s]
            .iter()
            .filter(|c| !self.seen[s].contains(*c))
            .cloned()
            .collect();
        let dim = space.dimension();
        if dim > 0 {
            let mut best: Vec<&Sample> = self.measured[s]
                .iter()
                .filter(|x| x.cost.is_finite())
                .collect();
            best.sort_by(|a, b| a.cost.total_cmp(&b.cost));
            let parents: Vec<Coordinate> = best
                .iter()
                .take(self.params.parents)
                .map(|x| x.coordinate.clone())
                .chain(self.initial[s].iter().cloned())
                .collect();
            for _ in 0..self.params.population {
                let p = &parents[self.rng.gen_range(0..parents.len())];
                let d = self.rng.gen_range(0..dim);
                let v = obj.draw_slot(s, d, &mut self.rng);
                out.push(p.with(d, v));
            }
        }
        let mut out: Vec<Coordinate> = dedup(out)
            .into_iter()
            .filter(|c| !self.seen[s].contains(c))
            .collect();
        if out.is_empty() {
            let seen = &self.seen[s];
            out.extend(random_unseen(space, &mut self.rng, seen.len(), |c| {
                seen.contains(c)
            }));
        }
        out
    }
}

impl Tuner for Explorer {
    fn propose(&mut self, obj: &dyn Objective) -> Result<Vec<(usize, Coordinate)>> {
        let fallback = median_log_cost(self.measured.iter().flatten()).unwrap_or(0.0);
        let mut per_sketch = Vec::with_capacity(self.order.len());
        for &s in &self.order.clone() {
            let finite: Vec<&Sample> = self.measured[s]
                .iter()
                .filter(|x| x.cost.is_finite())
                .collect();
            let model = if finite.len() >= 2 {
                Some(StumpEnsemble::fit_samples(
                    obj.space(s),
                    finite.iter().map(|x| (&x.coordinate, x.cost)),
                    self.params.boost,
                )?)
            } else {
                None
            };
            let scored = self
                .candidates(obj, s)
                .into_iter()
                .map(|c| {
                    let p = match &model {
                        Some(m) => m.predict(&features(obj.space(s), &c)?),
                        None => fallback,
                    };
                    Ok((s, c, p))
                })
                .collect::<Result<Vec<_>>>()?;
            per_sketch.push(scored);
        }
        let longest = per_sketch.iter().map(Vec::len).max().unwrap_or(0);
        let mut pool = Vec::new();
        for i in 0..longest {
            for list in &per_sketch {
                if let Some(x) = list.get(i) {
                    pool.push(x.clone());
                }
            }
        }
        // stable: interleaved order breaks ties
        pool.sort_by(|a, b| a.2.total_cmp(&b.2));

        let mut batch = Vec::new();
        while batch.len() < self.params.batch.max(1) && !pool.is_empty() {
            let i = if self.rng.gen_bool(self.params.eps_greedy.clamp(0.0, 1.0)) {
                self.rng.gen_range(0..pool.len())
            } else {
                0
            };
            let (s, c, _) = pool.remove(i);
            self.seen[s].insert(c.clone());
            batch.push((s, c));
        }
        Ok(batch)
    }

    fn observe(&mut self, results: &[(usize, Sample)]) {
        for (s, x) in results {
            self.seen[*s].insert(x.coordinate.clone());
            self.measured[*s].push(x.clone());
        }
    }
}
