//! Executing schedules: a generic reference interpreter over resolved loop
//! nests, direct reference formulas, and native kernels specialized by the
//! schedule's tile, worker, vector and unroll choices.

mod kernels;

pub use kernels::{lower, run_native, ChainPlan, ConvPlan, MatmulPlan, Plan, ReducePlan};

use std::fmt::Debug;

use crate::hash;
use crate::ir::{Body, LoopNest, Workload};

/// Scalar types the kernels compute on. Integer arithmetic wraps.
pub trait Element: Copy + Send + Sync + PartialEq + Debug + 'static {
    const ZERO: Self;
    fn add(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
    fn from_i64(v: i64) -> Self;
}

macro_rules! int_element {
    ($($t:ty),*) => {$(
        impl Element for $t {
            const ZERO: Self = 0;
            #[inline(always)]
            fn add(self, o: Self) -> Self { self.wrapping_add(o) }
            #[inline(always)]
            fn mul(self, o: Self) -> Self { self.wrapping_mul(o) }
            fn from_i64(v: i64) -> Self { v as $t }
        }
    )*};
}

macro_rules! float_element {
    ($($t:ty),*) => {$(
        impl Element for $t {
            const ZERO: Self = 0.0;
            #[inline(always)]
            fn add(self, o: Self) -> Self { self + o }
            #[inline(always)]
            fn mul(self, o: Self) -> Self { self * o }
            fn from_i64(v: i64) -> Self { v as $t }
        }
    )*};
}

int_element!(i32, i64);
float_element!(f32, f64);

/// Multiplier and offset of pointwise stage `s` (1-based).
#[inline(always)]
pub(crate) fn chain_op<T: Element>(v: T, s: usize) -> T {
    v.mul(T::from_i64(3)).add(T::from_i64(s as i64))
}

/// Input tensors of a workload plus the output length.
#[derive(Debug, Clone)]
pub struct TensorSet<T> {
    pub inputs: Vec<Vec<T>>,
    pub output_len: usize,
}

impl<T: Element> TensorSet<T> {
    /// Deterministic small integers in `[-8, 8]`, converted to `T`.
    pub fn generate(w: &Workload, seed: u64) -> Self {
        let fill = |len: usize, tag: u64| -> Vec<T> {
            (0..len as u64)
                .map(|i| T::from_i64((hash::combine(seed, [tag, i]) % 17) as i64 - 8))
                .collect()
        };
        match w.body {
            Body::Matmul { m, n, k } => Self {
                inputs: vec![fill(m * k, 0), fill(k * n, 1)],
                output_len: m * n,
            },
            Body::Conv2d {
                n,
                c,
                h,
                w: wd,
                f,
                r,
                s,
            } => Self {
                inputs: vec![fill(n * c * h * wd, 0), fill(f * c * r * s, 1)],
                output_len: n * f * (h - r + 1) * (wd - s + 1),
            },
            Body::ElementwiseChain { extent, .. } => Self {
                inputs: vec![fill(extent, 0)],
                output_len: extent,
            },
            Body::Reduce { extent } => Self {
                inputs: vec![fill(extent, 0)],
                output_len: 1,
            },
        }
    }
}

/// Direct evaluation of the workload's defining formula.
pub fn reference_output<T: Element>(w: &Workload, t: &TensorSet<T>) -> Vec<T> {
    let mut out = vec![T::ZERO; t.output_len];
    match w.body {
        Body::Matmul { m, n, k } => {
            let (a, b) = (&t.inputs[0], &t.inputs[1]);
            for i in 0..m {
                for j in 0..n {
                    let mut acc = T::ZERO;
                    for kk in 0..k {
                        acc = acc.add(a[i * k + kk].mul(b[kk * n + j]));
                    }
                    out[i * n + j] = acc;
                }
            }
        }
        Body::Conv2d {
            n,
            c,
            h,
            w: wd,
            f,
            r,
            s,
        } => {
            let (oh, ow) = (h - r + 1, wd - s + 1);
            let (inp, wt) = (&t.inputs[0], &t.inputs[1]);
            for b in 0..n {
                for ff in 0..f {
                    for y in 0..oh {
                        for x in 0..ow {
                            let mut acc = T::ZERO;
                            for cc in 0..c {
                                for rr in 0..r {
                                    for ss in 0..s {
                                        let iv = inp[((b * c + cc) * h + y + rr) * wd + x + ss];
                                        let wv = wt[((ff * c + cc) * r + rr) * s + ss];
                                        acc = acc.add(iv.mul(wv));
                                    }
                                }
                            }
                            out[((b * f + ff) * oh + y) * ow + x] = acc;
                        }
                    }
                }
            }
        }
        Body::ElementwiseChain { length, extent } => {
            for (o, &x) in out.iter_mut().zip(&t.inputs[0][..extent]) {
                let mut v = x;
                for s in 1..=length {
                    v = chain_op(v, s);
                }
                *o = v;
            }
        }
        Body::Reduce { extent } => {
            out[0] = t.inputs[0][..extent]
                .iter()
                .fold(T::ZERO, |acc, &v| acc.add(v));
        }
    }
    out
}

/// Runs a resolved nest statement by statement, in nest order.
///
/// Slow, but independent of the native kernels: it only follows loop
/// digits, strides and guards.
pub fn interpret<T: Element>(w: &Workload, nest: &LoopNest, t: &TensorSet<T>) -> Vec<T> {
    let mut out = vec![T::ZERO; t.output_len];
    match w.body {
        Body::Matmul { n, k, .. } => {
            let (a, b) = (&t.inputs[0], &t.inputs[1]);
            nest.stages[0].for_each_point(|v| {
                let (i, j, kk) = (v[0], v[1], v[2]);
                out[i * n + j] = out[i * n + j].add(a[i * k + kk].mul(b[kk * n + j]));
            });
        }
        Body::Conv2d {
            c,
            h,
            w: wd,
            f,
            r,
            s,
            ..
        } => {
            let (oh, ow) = (h - r + 1, wd - s + 1);
            let (inp, wt) = (&t.inputs[0], &t.inputs[1]);
            nest.stages[0].for_each_point(|v| {
                let [b, ff, y, x, cc, rr, ss] = v[..] else {
                    unreachable!("conv has 7 axes")
                };
                let o = ((b * f + ff) * oh + y) * ow + x;
                let iv = inp[((b * c + cc) * h + y + rr) * wd + x + ss];
                let wv = wt[((ff * c + cc) * r + rr) * s + ss];
                out[o] = out[o].add(iv.mul(wv));
            });
        }
        Body::ElementwiseChain { .. } => {
            let mut cur = t.inputs[0].clone();
            for st in &nest.stages {
                let last: usize = st
                    .name
                    .trim_start_matches('t')
                    .parse()
                    .expect("chain stages are named t<k>");
                let first = last + 1 - st.ops;
                let mut next = cur.clone();
                st.for_each_point(|v| {
                    let mut x = cur[v[0]];
                    for s in first..=last {
                        x = chain_op(x, s);
                    }
                    next[v[0]] = x;
                });
                cur = next;
            }
            out = cur;
        }
        Body::Reduce { .. } => {
            let x = &t.inputs[0];
            nest.stages[0].for_each_point(|v| out[0] = out[0].add(x[v[0]]));
        }
    }
    out
}
