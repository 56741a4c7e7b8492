//! A small loop-nest IR: workloads, resolved loop nests, sketches and the
//! rules that derive sketches from a workload's naive implementation.

mod nest;
mod sketch;

pub use nest::{Annotations, Axis, AxisKind, Loop, LoopNest, Part, Stage};
pub use sketch::{
    generate_sketches, naive_schedule, AnnotationPolicy, Applied, Rule, Schedule, Sketch, Target,
    Transformation, UNROLL_STEPS, VECTOR_WIDTHS, WORKER_VALUES,
};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tensor operation computed by a workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Body {
    /// `C[i,j] += A[i,k] * B[k,j]`.
    Matmul { m: usize, n: usize, k: usize },
    /// Valid (unpadded, unit-stride) convolution over `h x w` inputs with
    /// `f` filters of size `r x s`.
    Conv2d {
        n: usize,
        c: usize,
        h: usize,
        w: usize,
        f: usize,
        r: usize,
        s: usize,
    },
    /// `length` pointwise stages, each `t[x] = t[x] * 3 + stage`.
    ElementwiseChain { length: usize, extent: usize },
    /// Sum of `extent` elements.
    Reduce { extent: usize },
}

/// A kernel to schedule.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Workload {
    pub name: String,
    pub body: Body,
}

impl Workload {
    pub fn new(name: impl Into<String>, body: Body) -> Result<Self> {
        let w = Self {
            name: name.into(),
            body,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn matmul(m: usize, n: usize, k: usize) -> Self {
        Self::new(format!("matmul_{m}x{n}x{k}"), Body::Matmul { m, n, k })
            .expect("positive matmul shape")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidWorkload {
                name: self.name.clone(),
                reason: reason.into(),
            })
        };
        match self.body {
            Body::Matmul { m, n, k } if m == 0 || n == 0 || k == 0 => {
                bad("matmul extents must be positive")
            }
            Body::Conv2d {
                n,
                c,
                h,
                w,
                f,
                r,
                s,
            } if [n, c, h, w, f, r, s].contains(&0) => bad("conv2d extents must be positive"),
            Body::Conv2d { h, w, r, s, .. } if r > h || s > w => {
                bad("conv2d kernel larger than input")
            }
            Body::ElementwiseChain { length, extent } if length == 0 || extent == 0 => {
                bad("elementwise chain needs positive length and extent")
            }
            Body::Reduce { extent: 0 } => bad("reduce extent must be positive"),
            _ => Ok(()),
        }
    }

    /// Loop names and extents of the naive implementation, stage by stage.
    pub fn loop_extents(&self) -> Vec<(String, usize)> {
        self.naive_nest()
            .stages
            .iter()
            .flat_map(|st| st.axes.iter().map(|a| (a.name.clone(), a.extent)))
            .collect()
    }

    /// Multiply-add (or pointwise op) count of one execution.
    pub fn flops(&self) -> u64 {
        match self.body {
            Body::Matmul { m, n, k } => (m * n * k) as u64,
            Body::Conv2d {
                n,
                c,
                h,
                w,
                f,
                r,
                s,
            } => (n * f * (h - r + 1) * (w - s + 1) * c * r * s) as u64,
            Body::ElementwiseChain { length, extent } => (length * extent) as u64,
            Body::Reduce { extent } => extent as u64,
        }
    }

    /// The naive loop nest: one loop per index, in declaration order.
    pub fn naive_nest(&self) -> LoopNest {
        use AxisKind::{Reduction, Spatial};
        let stage = |name: &str, axes: &[(&str, usize, AxisKind)]| Stage::naive(name, axes);
        let stages = match self.body {
            Body::Matmul { m, n, k } => vec![stage(
                "C",
                &[("i", m, Spatial), ("j", n, Spatial), ("k", k, Reduction)],
            )],
            Body::Conv2d {
                n,
                c,
                h,
                w,
                f,
                r,
                s,
            } => vec![stage(
                "out",
                &[
                    ("n", n, Spatial),
                    ("f", f, Spatial),
                    ("y", h - r + 1, Spatial),
                    ("x", w - s + 1, Spatial),
                    ("c", c, Reduction),
                    ("r", r, Reduction),
                    ("s", s, Reduction),
                ],
            )],
            Body::ElementwiseChain { length, extent } => (1..=length)
                .map(|s| stage(&format!("t{s}"), &[("x", extent, Spatial)]))
                .collect(),
            Body::Reduce { extent } => vec![stage("acc", &[("i", extent, Reduction)])],
        };
        LoopNest { stages }
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.body {
            Body::Matmul { m, n, k } => write!(f, "{}: matmul{{{m},{n},{k}}}", self.name),
            Body::Conv2d {
                n,
                c,
                h,
                w,
                f: fl,
                r,
                s,
            } => {
                write!(f, "{}: conv2d{{{n},{c},{h},{w},{fl},{r},{s}}}", self.name)
            }
            Body::ElementwiseChain { length, extent } => {
                write!(f, "{}: elementwise-chain{{{length},{extent}}}", self.name)
            }
            Body::Reduce { extent } => write!(f, "{}: reduce{{{extent}}}", self.name),
        }
    }
}
