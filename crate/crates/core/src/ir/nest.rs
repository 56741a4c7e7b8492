use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    Spatial,
    Reduction,
}

/// An original index of the workload with its full extent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Axis {
    pub name: String,
    pub extent: usize,
    pub kind: AxisKind,
}

/// One mixed-radix digit of a loop variable: contributes `digit * stride`
/// to axis `axis`, with the digit ranging over `0..extent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Part {
    pub axis: usize,
    pub stride: usize,
    pub extent: usize,
}

/// Execution annotations of a loop. A value of 1 means "not applied".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Annotations {
    pub parallel: usize,
    pub unroll: usize,
    /// The auto-unroll step bound that produced `unroll`, if any.
    pub unroll_max_step: Option<usize>,
    pub vector: usize,
}

impl Default for Annotations {
    fn default() -> Self {
        Self {
            parallel: 1,
            unroll: 1,
            unroll_max_step: None,
            vector: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Loop {
    pub name: String,
    /// Outermost digit first.
    pub parts: Vec<Part>,
    pub annotations: Annotations,
}

impl Loop {
    pub fn extent(&self) -> usize {
        self.parts.iter().map(|p| p.extent).product()
    }

    /// True when every digit of the loop indexes a spatial axis.
    pub fn is_spatial(&self, axes: &[Axis]) -> bool {
        self.parts
            .iter()
            .all(|p| axes[p.axis].kind == AxisKind::Spatial)
    }

    pub fn is_reduction(&self, axes: &[Axis]) -> bool {
        self.parts
            .iter()
            .all(|p| axes[p.axis].kind == AxisKind::Reduction)
    }
}

/// A perfect loop nest around one compute statement group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stage {
    pub name: String,
    pub axes: Vec<Axis>,
    pub loops: Vec<Loop>,
    /// Primitive statements executed per body visit (grows when producers
    /// are inlined).
    pub ops: usize,
}

impl Stage {
    pub(crate) fn naive(name: &str, axes: &[(&str, usize, AxisKind)]) -> Self {
        let axes: Vec<Axis> = axes
            .iter()
            .map(|&(n, e, k)| Axis {
                name: n.to_string(),
                extent: e,
                kind: k,
            })
            .collect();
        let loops = axes
            .iter()
            .enumerate()
            .map(|(i, a)| Loop {
                name: a.name.clone(),
                parts: vec![Part {
                    axis: i,
                    stride: 1,
                    extent: a.extent,
                }],
                annotations: Annotations::default(),
            })
            .collect();
        Self {
            name: name.to_string(),
            axes,
            loops,
            ops: 1,
        }
    }

    pub fn loop_position(&self, name: &str) -> Option<usize> {
        self.loops.iter().position(|l| l.name == name)
    }

    pub fn axis_position(&self, name: &str) -> Option<usize> {
        self.axes.iter().position(|a| a.name == name)
    }

    /// Trip count of the nest, counting guarded-off tail points.
    pub fn trip_count(&self) -> u128 {
        self.loops.iter().map(|l| l.extent() as u128).product()
    }

    /// Whether some axis is covered by a padded range and needs a guard.
    pub fn is_guarded(&self) -> bool {
        self.trip_count() != self.axes.iter().map(|a| a.extent as u128).product::<u128>()
    }

    /// Visits every in-bounds body instance in nest order, passing the axis
    /// values. Points past an axis extent (tile tails) are skipped.
    pub fn for_each_point(&self, mut f: impl FnMut(&[usize])) {
        let extents: Vec<usize> = self.loops.iter().map(Loop::extent).collect();
        if extents.contains(&0) {
            return;
        }
        let mut vars = vec![0usize; self.loops.len()];
        let mut vals = vec![0usize; self.axes.len()];
        loop {
            vals.iter_mut().for_each(|v| *v = 0);
            for (l, &v) in self.loops.iter().zip(&vars) {
                let mut rest = v;
                for p in l.parts.iter().rev() {
                    vals[p.axis] += (rest % p.extent) * p.stride;
                    rest /= p.extent;
                }
            }
            if vals.iter().zip(&self.axes).all(|(&v, a)| v < a.extent) {
                f(&vals);
            }
            // odometer, innermost loop fastest
            let mut d = vars.len();
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                vars[d] += 1;
                if vars[d] < extents[d] {
                    break;
                }
                vars[d] = 0;
            }
        }
    }

    /// Body executions: in-bounds points times statements per body.
    pub fn body_executions(&self) -> u64 {
        let mut n = 0u64;
        self.for_each_point(|_| n += 1);
        n * self.ops as u64
    }
}

/// A resolved loop structure: concrete extents and annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoopNest {
    pub stages: Vec<Stage>,
}

impl LoopNest {
    pub fn stage(&self, name: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn body_executions(&self) -> u64 {
        self.stages.iter().map(Stage::body_executions).sum()
    }

    /// Checks that every stage visits each axis tuple exactly once.
    ///
    /// Exhaustive, so only meant for small nests.
    pub fn covers_each_point_once(&self) -> bool {
        self.stages.iter().all(|st| {
            let total: usize = st.axes.iter().map(|a| a.extent).product();
            let mut seen = vec![false; total];
            let mut ok = true;
            st.for_each_point(|vals| {
                let mut idx = 0;
                for (v, a) in vals.iter().zip(&st.axes) {
                    idx = idx * a.extent + v;
                }
                if std::mem::replace(&mut seen[idx], true) {
                    ok = false;
                }
            });
            ok && seen.iter().all(|&b| b)
        })
    }
}

impl fmt::Display for LoopNest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for st in &self.stages {
            writeln!(f, "stage {}:", st.name)?;
            for (depth, l) in st.loops.iter().enumerate() {
                let pad = "  ".repeat(depth + 1);
                let a = l.annotations;
                let mut prefix = String::new();
                if a.parallel > 1 {
                    prefix.push_str(&format!("parallel({}) ", a.parallel));
                }
                if let Some(step) = a.unroll_max_step {
                    prefix.push_str(&format!("unroll({}, max_step={step}) ", a.unroll));
                }
                if a.vector > 1 {
                    prefix.push_str(&format!("vectorize({}) ", a.vector));
                }
                writeln!(f, "{pad}{prefix}for {} in 0..{}:", l.name, l.extent())?;
            }
            let pad = "  ".repeat(st.loops.len() + 1);
            let idx: Vec<String> = st.axes.iter().map(|a| a.name.clone()).collect();
            let guard = if st.is_guarded() { " if in_bounds" } else { "" };
            writeln!(
                f,
                "{pad}{}[{}] <- body x{}{guard}",
                st.name,
                idx.join(", "),
                st.ops
            )?;
        }
        Ok(())
    }
}
