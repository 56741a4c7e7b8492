//! Wall-clock timing of the native kernels.

use std::collections::HashMap;
use std::hint::black_box;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use super::{Backend, MeasureConfig, Sample, Status};
use crate::error::{Error, Result};
use crate::exec::{lower, run_native, TensorSet};
use crate::ir::{Applied, Sketch};
use crate::space::Coordinate;

/// At most one timed evaluation runs at a time, process-wide.
static EXCLUSIVE: Mutex<()> = Mutex::new(());

/// Seed of the generated input tensors.
const DATA_SEED: u64 = 0x5eed;

/// Times schedules by running them on `f32` data on this machine.
///
/// Each evaluation runs `warmups` untimed passes and then `repeats` timed
/// passes back to back, holding a process-wide lock for the whole sequence.
#[derive(Debug, Default)]
pub struct NativeBackend {
    data: Mutex<HashMap<String, Arc<TensorSet<f32>>>>,
}

impl NativeBackend {
    pub fn new() -> Self {
        Self::default()
    }

    fn tensors(&self, sketch: &Sketch) -> Result<Arc<TensorSet<f32>>> {
        let key = sketch.workload().to_string();
        let mut data = self
            .data
            .lock()
            .map_err(|_| Error::Backend("tensor cache poisoned".into()))?;
        Ok(data
            .entry(key)
            .or_insert_with(|| Arc::new(TensorSet::generate(sketch.workload(), DATA_SEED)))
            .clone())
    }
}

impl Backend for NativeBackend {
    fn name(&self) -> &str {
        "native"
    }

    fn evaluate(
        &self,
        sketch: &Sketch,
        c: &Coordinate,
        cfg: &MeasureConfig,
        _call_index: u64,
    ) -> Result<Sample> {
        let schedule = match sketch.apply(c)? {
            Applied::Schedule(s) => s,
            Applied::Invalid(_) => return Ok(Sample::failed(c.clone(), Status::Invalid)),
        };
        let plan = lower(&schedule);
        let body = &sketch.workload().body;
        let data = self.tensors(sketch)?;
        let mut out = vec![0f32; data.output_len];
        let limit = cfg.timeout_ns();

        let _guard = EXCLUSIVE.lock().unwrap_or_else(|e| e.into_inner());
        for _ in 0..cfg.warmups {
            let t = Instant::now();
            run_native(&plan, body, &data, &mut out);
            if t.elapsed().as_nanos() as f64 > limit {
                return Ok(Sample::failed(c.clone(), Status::Timeout));
            }
        }
        let mut timings = Vec::with_capacity(cfg.repeats);
        for _ in 0..cfg.repeats {
            let t = Instant::now();
            run_native(&plan, body, &data, black_box(&mut out));
            let ns = t.elapsed().as_nanos() as f64;
            if ns > limit {
                return Ok(Sample::failed(c.clone(), Status::Timeout));
            }
            timings.push(ns.max(1.0));
        }
        black_box(&out);
        Ok(Sample::ok(c.clone(), timings))
    }
}
