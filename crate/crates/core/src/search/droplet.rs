//! Droplet: coordinate descent with a rank-test acceptance rule.

use std::collections::HashMap;

use super::{Objective, Tuner};
use crate::error::Result;
use crate::measure::{compare, Comparison, Sample};
use crate::space::Coordinate;

/// Trial cap used when none is configured.
pub const DEFAULT_DROPLET_BUDGET: usize = 100;

/// Coordinate descent over one space.
///
/// Each iteration measures every unmeasured neighbor of the current best
/// and moves to the neighbor with the lowest median among those that are
/// significantly faster (earliest in neighbor order on ties). After a move
/// it keeps stepping in the same direction for as long as each step is
/// again significantly faster, then returns to full neighborhood sweeps.
/// It converges when no neighbor is significantly faster.
#[derive(Debug, Clone)]
pub struct Droplet {
    sketch: usize,
    alpha: f64,
    current: Coordinate,
    /// `(dim, +1?)` while extending a move along one axis.
    line: Option<(usize, bool)>,
    known: HashMap<Coordinate, Sample>,
    path: Vec<Coordinate>,
    converged: bool,
}

impl Droplet {
    pub fn new(sketch: usize, seed: Coordinate, alpha: f64) -> Self {
        Self {
            sketch,
            alpha,
            path: vec![seed.clone()],
            current: seed,
            line: None,
            known: HashMap::new(),
            converged: false,
        }
    }

    pub fn sketch(&self) -> usize {
        self.sketch
    }

    /// The current best point and its sample, once measured.
    pub fn incumbent(&self) -> (&Coordinate, Option<&Sample>) {
        (&self.current, self.known.get(&self.current))
    }

    /// Accepted points, starting with the seed.
    pub fn path(&self) -> &[Coordinate] {
        &self.path
    }

    fn accept(&mut self, c: Coordinate) {
        self.path.push(c.clone());
        self.current = c;
    }

    fn better(&self, candidate: &Sample, incumbent: &Sample) -> bool {
        compare(candidate, incumbent, self.alpha) == Comparison::FirstBetter
    }
}

fn step(c: &Coordinate, dim: usize, plus: bool, card: usize) -> Option<Coordinate> {
    let i = c.indices()[dim];
    match plus {
        true if i + 1 < card => Some(c.with(dim, i + 1)),
        false if i > 0 => Some(c.with(dim, i - 1)),
        _ => None,
    }
}

impl Tuner for Droplet {
    fn propose(&mut self, obj: &dyn Objective) -> Result<Vec<(usize, Coordinate)>> {
        let space = obj.space(self.sketch);
        loop {
            if self.converged {
                return Ok(Vec::new());
            }
            let Some(cur) = self.known.get(&self.current).cloned() else {
                return Ok(vec![(self.sketch, self.current.clone())]);
            };
            if let Some((dim, plus)) = self.line {
                let card = space.params()[dim].cardinality();
                match step(&self.current, dim, plus, card) {
                    Some(next) => match self.known.get(&next) {
                        None => return Ok(vec![(self.sketch, next)]),
                        Some(s) if self.better(s, &cur) => {
                            self.accept(next);
                            continue;
                        }
                        Some(_) => self.line = None,
                    },
                    None => self.line = None,
                }
                continue;
            }
            let ring = space.neighbors(&self.current)?;
            let missing: Vec<(usize, Coordinate)> = ring
                .iter()
                .filter(|n| !self.known.contains_key(*n))
                .map(|n| (self.sketch, n.clone()))
                .collect();
            if !missing.is_empty() {
                return Ok(missing);
            }
            let mut best: Option<&Coordinate> = None;
            for n in &ring {
                let s = &self.known[n];
                if self.better(s, &cur) && best.is_none_or(|b| s.cost < self.known[b].cost) {
                    best = Some(n);
                }
            }
            match best.cloned() {
                None => self.converged = true,
                Some(n) => {
                    let dim = (0..n.len())
                        .find(|&d| n.indices()[d] != self.current.indices()[d])
                        .expect("neighbor differs");
                    self.line = Some((dim, n.indices()[dim] > self.current.indices()[dim]));
                    self.accept(n);
                }
            }
        }
    }

    fn observe(&mut self, results: &[(usize, Sample)]) {
        for (_, s) in results {
            self.known.insert(s.coordinate.clone(), s.clone());
        }
    }

    fn converged(&self) -> bool {
        self.converged
    }
}
