//! Single-space baselines: random, grid, genetic and surrogate-guided search.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dedup, random_unseen, rng_for, Objective, Tuner};
use crate::error::{Error, Result};
use crate::measure::Sample;
use crate::space::Coordinate;
use crate::surrogate::{rank, BoostParams, StumpEnsemble};

/// Uniform sampling without replacement.
#[derive(Debug, Clone)]
pub struct RandomSearch {
    sketch: usize,
    rng: ChaCha8Rng,
    seen: HashSet<Coordinate>,
}

impl RandomSearch {
    pub fn new(sketch: usize, seed: u64) -> Self {
        Self {
            sketch,
            rng: rng_for(seed, "random"),
            seen: HashSet::new(),
        }
    }
}

impl Tuner for RandomSearch {
    fn propose(&mut self, obj: &dyn Objective) -> Result<Vec<(usize, Coordinate)>> {
        let seen = &self.seen;
        let next = random_unseen(obj.space(self.sketch), &mut self.rng, seen.len(), |c| {
            seen.contains(c)
        });
        Ok(next
            .map(|c| {
                self.seen.insert(c.clone());
                vec![(self.sketch, c)]
            })
            .unwrap_or_default())
    }

    fn observe(&mut self, _: &[(usize, Sample)]) {}
}

/// Row-major enumeration from the origin.
#[derive(Debug, Clone)]
pub struct Grid {
    sketch: usize,
    next: u128,
}

impl Grid {
    pub fn new(sketch: usize) -> Self {
        Self { sketch, next: 0 }
    }
}

impl Tuner for Grid {
    fn propose(&mut self, obj: &dyn Objective) -> Result<Vec<(usize, Coordinate)>> {
        let space = obj.space(self.sketch);
        if self.next >= space.size() {
            return Ok(Vec::new());
        }
        let c = space.from_linear(self.next);
        self.next += 1;
        Ok(vec![(self.sketch, c)])
    }

    fn observe(&mut self, _: &[(usize, Sample)]) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaParams {
    pub population: usize,
    pub tournament: usize,
    pub crossover: f64,
    pub mutation: f64,
    pub elitism: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population: 16,
            tournament: 2,
            crossover: 0.9,
            mutation: 0.1,
            elitism: 1,
        }
    }
}

/// Generational genetic algorithm; chromosomes are coordinates.
#[derive(Debug, Clone)]
pub struct Genetic {
    sketch: usize,
    params: GaParams,
    rng: ChaCha8Rng,
    population: Vec<Coordinate>,
    fitness: HashMap<Coordinate, f64>,
    started: bool,
}

impl Genetic {
    /// The initial population is `seeds` (truncated to the population size)
    /// topped up with uniform random points.
    pub fn new(
        obj: &dyn Objective,
        sketch: usize,
        seeds: &[Coordinate],
        params: GaParams,
        seed: u64,
    ) -> Result<Self> {
        if params.population == 0 {
            return Err(Error::EmptyPopulation);
        }
        let space = obj.space(sketch);
        for s in seeds {
            space.validate(s)?;
        }
        let mut rng = rng_for(seed, "ga");
        let mut population: Vec<Coordinate> =
            seeds.iter().take(params.population).cloned().collect();
        while population.len() < params.population {
            population.push(space.from_linear(rng.gen_range(0..space.size())));
        }
        Ok(Self {
            sketch,
            params,
            rng,
            population,
            fitness: HashMap::new(),
            started: false,
        })
    }

    fn cost(&self, c: &Coordinate) -> f64 {
        self.fitness.get(c).copied().unwrap_or(f64::INFINITY)
    }

    fn tournament(&mut self) -> Coordinate {
        let mut best: Option<usize> = None;
        for _ in 0..self.params.tournament.max(1) {
            let i = self.rng.gen_range(0..self.population.len());
            if best.is_none_or(|b| {
                (self.cost(&self.population[i]), i) < (self.cost(&self.population[b]), b)
            }) {
                best = Some(i);
            }
        }
        self.population[best.expect("tournament size >= 1")].clone()
    }

    fn breed(&mut self, obj: &dyn Objective) {
        let space = obj.space(self.sketch);
        let dim = space.dimension();
        let mut ranked: Vec<usize> = (0..self.population.len()).collect();
        ranked.sort_by(|&a, &b| {
            self.cost(&self.population[a])
                .total_cmp(&self.cost(&self.population[b]))
                .then(a.cmp(&b))
        });
        let mut next: Vec<Coordinate> = ranked
            .iter()
            .take(self.params.elitism.min(self.params.population))
            .map(|&i| self.population[i].clone())
            .collect();
        while next.len() < self.params.population {
            let a = self.tournament();
            let b = self.tournament();
            let mut genes = a.indices().to_vec();
            if dim >= 2 && self.rng.gen_bool(self.params.crossover.clamp(0.0, 1.0)) {
                let cut = self.rng.gen_range(1..dim);
                genes[cut..].copy_from_slice(&b.indices()[cut..]);
            }
            for (d, g) in genes.iter_mut().enumerate() {
                if self.rng.gen_bool(self.params.mutation.clamp(0.0, 1.0)) {
                    *g = self.rng.gen_range(0..space.params()[d].cardinality());
                }
            }
            next.push(Coordinate::new(genes));
        }
        self.population = next;
    }
}

impl Tuner for Genetic {
    fn propose(&mut self, obj: &dyn Objective) -> Result<Vec<(usize, Coordinate)>> {
        let evaluated = self.population.iter().all(|c| self.fitness.contains_key(c));
        if self.started && evaluated {
            self.breed(obj);
        }
        self.started = true;
        Ok(self
            .population
            .iter()
            .map(|c| (self.sketch, c.clone()))
            .collect())
    }

    fn observe(&mut self, results: &[(usize, Sample)]) {
        for (_, s) in results {
            self.fitness.insert(s.coordinate.clone(), s.cost);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateParams {
    pub batch: usize,
    /// Random candidates ranked per round, besides the best's neighbors.
    pub pool: usize,
    pub boost: BoostParams,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            batch: 8,
            pool: 64,
            boost: BoostParams::default(),
        }
    }
}

/// Model-guided batches: fit on everything measured, rank a random pool plus
/// the neighbors of the best point, measure the top of the ranking.
#[derive(Debug, Clone)]
pub struct Surrogate {
    sketch: usize,
    seed: Coordinate,
    params: SurrogateParams,
    rng: ChaCha8Rng,
    /// Observed samples in observation order.
    measured: Vec<Sample>,
    seen: HashSet<Coordinate>,
}

impl Surrogate {
    pub fn new(sketch: usize, seed: Coordinate, params: SurrogateParams, rng_seed: u64) -> Self {
        Self {
            sketch,
            seed,
            params,
            rng: rng_for(rng_seed, "surrogate"),
            measured: Vec::new(),
            seen: HashSet::new(),
        }
    }

    fn random_fill(&mut self, obj: &dyn Objective, batch: &mut Vec<Coordinate>) {
        let space = obj.space(self.sketch);
        while batch.len() < self.params.batch.max(1) {
            let taken = self.seen.len() + batch.len();
            let (seen, chosen) = (&self.seen, &*batch);
            match random_unseen(space, &mut self.rng, taken, |c| {
                seen.contains(c) || chosen.contains(c)
            }) {
                Some(c) => batch.push(c),
                None => break,
            }
        }
    }
}

impl Tuner for Surrogate {
    fn propose(&mut self, obj: &dyn Objective) -> Result<Vec<(usize, Coordinate)>> {
        let space = obj.space(self.sketch);
        let finite: Vec<&Sample> = self
            .measured
            .iter()
            .filter(|s| s.cost.is_finite())
            .collect();
        let mut batch = Vec::new();
        if finite.is_empty() {
            if !self.seen.contains(&self.seed) {
                batch.push(self.seed.clone());
            }
        } else {
            let model = StumpEnsemble::fit_samples(
                space,
                finite.iter().map(|s| (&s.coordinate, s.cost)),
                self.params.boost,
            )?;
            let best = finite
                .iter()
                .min_by(|a, b| a.cost.total_cmp(&b.cost))
                .expect("non-empty");
            let mut pool: Vec<Coordinate> = space.neighbors(&best.coordinate)?;
            for _ in 0..self.params.pool {
                pool.push(space.from_linear(self.rng.gen_range(0..space.size())));
            }
            let pool: Vec<Coordinate> = dedup(pool)
                .into_iter()
                .filter(|c| !self.seen.contains(c))
                .collect();
            let k = self.params.batch.max(1).min(pool.len());
            batch = rank(&model, &pool, space, k)?;
        }
        self.random_fill(obj, &mut batch);
        for c in &batch {
            self.seen.insert(c.clone());
        }
        Ok(batch.into_iter().map(|c| (self.sketch, c)).collect())
    }

    fn observe(&mut self, results: &[(usize, Sample)]) {
        self.measured.extend(results.iter().map(|(_, s)| s.clone()));
    }
}
