//! A reproducible stand-in for hardware: one seeded landscape per sketch.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{Backend, Landscape, LandscapeFamily, MeasureConfig, Sample, Status};
use crate::error::Result;
use crate::hash;
use crate::ir::{Applied, Sketch};
use crate::space::Coordinate;

/// Each applied rule multiplies the attainable minimum by this.
pub const RULE_GAIN: f64 = 0.8;
/// Per-sketch minimum varies by up to this relative amount.
pub const SKETCH_SPREAD: f64 = 0.3;

/// Parameters of a [`SyntheticBackend`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub family: LandscapeFamily,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub invalid_fraction: f64,
    #[serde(default)]
    pub noise_rel: f64,
    /// Nanoseconds per floating-point operation of the naive schedule.
    #[serde(default = "default_ns_per_flop")]
    pub ns_per_flop: f64,
}

fn default_ns_per_flop() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn new(family: LandscapeFamily, seed: u64) -> Self {
        Self {
            family,
            seed,
            invalid_fraction: 0.0,
            noise_rel: 0.0,
            ns_per_flop: 1.0,
        }
    }
}

/// Simulated timing of sketches.
///
/// Sketch `s` of workload `w` gets its own landscape over `s.space()`,
/// seeded by the backend seed and the sketch fingerprint. Its minimum is
/// `flops(w) * ns_per_flop * RULE_GAIN^rules * (1 + SKETCH_SPREAD * u)`
/// for a seeded `u` in `[0, 1)`, so richer sketches can go faster but have
/// larger spaces to search.
#[derive(Debug)]
pub struct SyntheticBackend {
    spec: SyntheticSpec,
    cache: Mutex<HashMap<u64, Arc<Landscape>>>,
}

impl SyntheticBackend {
    pub fn new(spec: SyntheticSpec) -> Self {
        Self {
            spec,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    /// The landscape that times `sketch`.
    pub fn landscape(&self, sketch: &Sketch) -> Result<Arc<Landscape>> {
        let fp = sketch.fingerprint();
        if let Some(l) = self
            .cache
            .lock()
            .expect("landscape cache poisoned")
            .get(&fp)
        {
            return Ok(l.clone());
        }
        let seed = hash::combine(self.spec.seed, [fp]);
        let u = hash::unit(hash::combine(seed, [hash::hash_str("scale")]));
        let scale = sketch.workload().flops() as f64
            * self.spec.ns_per_flop
            * RULE_GAIN.powi(sketch.rules().len() as i32)
            * (1.0 + SKETCH_SPREAD * u);
        let l = Landscape::new(sketch.space().clone(), self.spec.family, seed)
            .with_scale(scale)
            .with_invalid_fraction(self.spec.invalid_fraction)?
            .with_noise(self.spec.noise_rel)?;
        let l = Arc::new(l);
        self.cache
            .lock()
            .expect("landscape cache poisoned")
            .insert(fp, l.clone());
        Ok(l)
    }
}

impl Backend for SyntheticBackend {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn evaluate(
        &self,
        sketch: &Sketch,
        c: &Coordinate,
        cfg: &MeasureConfig,
        call_index: u64,
    ) -> Result<Sample> {
        if let Applied::Invalid(_) = sketch.apply(c)? {
            return Ok(Sample::failed(c.clone(), Status::Invalid));
        }
        self.landscape(sketch)?.evaluate(c, cfg, call_index)
    }
}
