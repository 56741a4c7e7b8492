use std::marker::PhantomData;

use super::{chain_op, Element, TensorSet};
use crate::ir::{Body, LoopNest, Schedule, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatmulPlan {
    /// `(i, j, k)` tile sizes; `None` keeps the naive `i j k` order.
    pub tile: Option<[usize; 3]>,
    pub workers: usize,
    pub vector: usize,
    pub unroll: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvPlan {
    /// `(n, f, y, x, c)` tile sizes.
    pub tile: Option<[usize; 5]>,
    pub workers: usize,
    pub vector: usize,
    pub unroll: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainPlan {
    pub inlined: bool,
    pub workers: usize,
    pub vector: usize,
    pub unroll: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReducePlan {
    pub tile: Option<usize>,
    pub unroll: usize,
}

/// Kernel configuration recovered from a resolved loop nest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plan {
    Matmul(MatmulPlan),
    Conv(ConvPlan),
    Chain(ChainPlan),
    Reduce(ReducePlan),
}

fn tile_of(st: &Stage, axis: &str) -> Option<usize> {
    let l = &st.loops[st.loop_position(&format!("{axis}.i"))?];
    Some(l.extent())
}

fn annotation(st: &Stage, f: impl Fn(&crate::ir::Annotations) -> usize) -> usize {
    st.loops
        .iter()
        .map(|l| f(&l.annotations))
        .max()
        .unwrap_or(1)
}

fn plan_of(body: &Body, nest: &LoopNest) -> Plan {
    let st = nest.stages.last().expect("at least one stage");
    let workers = annotation(st, |a| a.parallel);
    let vector = annotation(st, |a| a.vector);
    let unroll = annotation(st, |a| a.unroll);
    match body {
        Body::Matmul { .. } => {
            let tile = tile_of(st, "k").map(|_| {
                ["i", "j", "k"].map(|a| tile_of(st, a).expect("matmul tiling splits i, j and k"))
            });
            Plan::Matmul(MatmulPlan {
                tile,
                workers,
                vector,
                unroll,
            })
        }
        Body::Conv2d { .. } => {
            let tile = tile_of(st, "c").map(|_| {
                ["n", "f", "y", "x", "c"]
                    .map(|a| tile_of(st, a).expect("conv tiling splits n, f, y, x and c"))
            });
            Plan::Conv(ConvPlan {
                tile,
                workers,
                vector,
                unroll,
            })
        }
        Body::ElementwiseChain { .. } => Plan::Chain(ChainPlan {
            inlined: nest.stages.len() == 1,
            workers,
            vector,
            unroll,
        }),
        Body::Reduce { .. } => Plan::Reduce(ReducePlan {
            tile: tile_of(st, "i"),
            unroll,
        }),
    }
}

/// Lowers a schedule to the native kernel configuration it describes.
pub fn lower(s: &Schedule<'_>) -> Plan {
    plan_of(&s.sketch.workload().body, &s.nest)
}

/// Runs the lowered kernel, writing the workload output into `out`.
pub fn run_native<T: Element>(plan: &Plan, body: &Body, t: &TensorSet<T>, out: &mut [T]) {
    match (plan, *body) {
        (Plan::Matmul(p), Body::Matmul { m, n, k }) => {
            matmul(p, m, n, k, &t.inputs[0], &t.inputs[1], out)
        }
        (
            Plan::Conv(p),
            Body::Conv2d {
                n,
                c,
                h,
                w,
                f,
                r,
                s,
            },
        ) => conv(
            p,
            ConvShape {
                n,
                c,
                h,
                w,
                f,
                r,
                s,
            },
            &t.inputs[0],
            &t.inputs[1],
            out,
        ),
        (Plan::Chain(p), Body::ElementwiseChain { length, .. }) => {
            chain(p, length, &t.inputs[0], out)
        }
        (Plan::Reduce(p), Body::Reduce { .. }) => out[0] = reduce(p, &t.inputs[0]),
        _ => panic!("plan does not match workload body"),
    }
}

/// Shared mutable output for workers that write disjoint elements.
struct Disjoint<'a, T> {
    ptr: *mut T,
    len: usize,
    _p: PhantomData<&'a mut [T]>,
}

unsafe impl<T: Send> Sync for Disjoint<'_, T> {}

impl<'a, T> Disjoint<'a, T> {
    fn new(s: &'a mut [T]) -> Self {
        Self {
            ptr: s.as_mut_ptr(),
            len: s.len(),
            _p: PhantomData,
        }
    }

    /// # Safety
    /// No two live slices handed out may overlap.
    #[allow(clippy::mut_from_ref)]
    unsafe fn slice(&self, start: usize, len: usize) -> &mut [T] {
        assert!(start + len <= self.len);
        std::slice::from_raw_parts_mut(self.ptr.add(start), len)
    }
}

/// Splits `0..total` into `workers` contiguous ranges and runs `f` on each.
fn parallel_ranges(total: usize, workers: usize, f: impl Fn(std::ops::Range<usize>) + Sync) {
    let workers = workers.clamp(1, total.max(1));
    if workers == 1 {
        f(0..total);
        return;
    }
    let chunk = total.div_ceil(workers);
    std::thread::scope(|scope| {
        for w in 0..workers {
            let range = (w * chunk).min(total)..((w + 1) * chunk).min(total);
            let f = &f;
            scope.spawn(move || f(range));
        }
    });
}

/// `c[j] += Σ_u a[u] * b[u][j]`, accumulating `u` in order for each `j`.
#[inline(always)]
fn axpy_rows<T: Element, const U: usize, const W: usize>(c: &mut [T], a: &[T; U], b: &[&[T]; U]) {
    let len = c.len();
    let mut j = 0;
    if W > 1 {
        while j + W <= len {
            let mut acc = [T::ZERO; W];
            acc.copy_from_slice(&c[j..j + W]);
            for u in 0..U {
                let bu = &b[u][j..j + W];
                for l in 0..W {
                    acc[l] = acc[l].add(a[u].mul(bu[l]));
                }
            }
            c[j..j + W].copy_from_slice(&acc);
            j += W;
        }
    }
    while j < len {
        let mut v = c[j];
        for u in 0..U {
            v = v.add(a[u].mul(b[u][j]));
        }
        c[j] = v;
        j += 1;
    }
}

macro_rules! dispatch_uw {
    ($unroll:expr, $vector:expr, $f:ident :: <$t:ty> ( $($arg:expr),* )) => {
        match ($unroll, $vector) {
            (1, 4) => $f::<$t, 1, 4>($($arg),*),
            (1, 8) => $f::<$t, 1, 8>($($arg),*),
            (1, 16) => $f::<$t, 1, 16>($($arg),*),
            (2, 1) => $f::<$t, 2, 1>($($arg),*),
            (2, 4) => $f::<$t, 2, 4>($($arg),*),
            (2, 8) => $f::<$t, 2, 8>($($arg),*),
            (2, 16) => $f::<$t, 2, 16>($($arg),*),
            (4, 1) => $f::<$t, 4, 1>($($arg),*),
            (4, 4) => $f::<$t, 4, 4>($($arg),*),
            (4, 8) => $f::<$t, 4, 8>($($arg),*),
            (4, 16) => $f::<$t, 4, 16>($($arg),*),
            (8, 1) => $f::<$t, 8, 1>($($arg),*),
            (8, 4) => $f::<$t, 8, 4>($($arg),*),
            (8, 8) => $f::<$t, 8, 8>($($arg),*),
            (8, 16) => $f::<$t, 8, 16>($($arg),*),
            (_, 4) => $f::<$t, 1, 4>($($arg),*),
            (_, 8) => $f::<$t, 1, 8>($($arg),*),
            (_, 16) => $f::<$t, 1, 16>($($arg),*),
            _ => $f::<$t, 1, 1>($($arg),*),
        }
    };
}

fn matmul<T: Element>(p: &MatmulPlan, m: usize, n: usize, k: usize, a: &[T], b: &[T], c: &mut [T]) {
    c.fill(T::ZERO);
    match p.tile {
        None => {
            // i j k with the i, j loops fused and split across workers
            let out = Disjoint::new(c);
            parallel_ranges(m * n, p.workers, |range| {
                let dst = unsafe { out.slice(range.start, range.len()) };
                for (idx, slot) in range.zip(dst.iter_mut()) {
                    let (i, j) = (idx / n, idx % n);
                    let row = &a[i * k..(i + 1) * k];
                    *slot = match p.unroll {
                        2 => dot_strided::<T, 2>(row, b, j, n),
                        4 => dot_strided::<T, 4>(row, b, j, n),
                        8 => dot_strided::<T, 8>(row, b, j, n),
                        u if u > 8 => dot_strided_dyn(row, b, j, n, u),
                        _ => dot_strided::<T, 1>(row, b, j, n),
                    };
                }
            });
        }
        Some([ti, tj, tk]) => {
            let (bi, bj) = (m.div_ceil(ti), n.div_ceil(tj));
            let out = Disjoint::new(c);
            parallel_ranges(bi * bj, p.workers, |range| {
                for tile in range {
                    let (i0, j0) = ((tile / bj) * ti, (tile % bj) * tj);
                    let (i1, j1) = ((i0 + ti).min(m), (j0 + tj).min(n));
                    for k0 in (0..k).step_by(tk) {
                        let k1 = (k0 + tk).min(k);
                        for i in i0..i1 {
                            // rows of distinct tiles never overlap
                            let crow = unsafe { out.slice(i * n + j0, j1 - j0) };
                            let arow = &a[i * k..(i + 1) * k];
                            let brow = |kk: usize| &b[kk * n + j0..kk * n + j1];
                            matmul_rows(crow, arow, brow, k0, k1, p.unroll, p.vector);
                        }
                    }
                }
            });
        }
    }
}

#[inline(always)]
fn matmul_rows<'b, T: Element>(
    crow: &mut [T],
    arow: &[T],
    brow: impl Fn(usize) -> &'b [T],
    k0: usize,
    k1: usize,
    unroll: usize,
    vector: usize,
) {
    fn go<'b, T: Element, const U: usize, const W: usize>(
        crow: &mut [T],
        arow: &[T],
        brow: &dyn Fn(usize) -> &'b [T],
        k0: usize,
        k1: usize,
    ) {
        let mut kk = k0;
        while kk + U <= k1 {
            let a: [T; U] = std::array::from_fn(|u| arow[kk + u]);
            let b: [&[T]; U] = std::array::from_fn(|u| brow(kk + u));
            axpy_rows::<T, U, W>(crow, &a, &b);
            kk += U;
        }
        while kk < k1 {
            axpy_rows::<T, 1, W>(crow, &[arow[kk]], &[brow(kk)]);
            kk += 1;
        }
    }
    let brow: &dyn Fn(usize) -> &'b [T] = &brow;
    dispatch_uw!(unroll, vector, go::<T>(crow, arow, brow, k0, k1))
}

#[inline(always)]
fn dot_strided<T: Element, const U: usize>(row: &[T], b: &[T], j: usize, n: usize) -> T {
    let k = row.len();
    let mut acc = T::ZERO;
    let mut kk = 0;
    while kk + U <= k {
        for u in 0..U {
            acc = acc.add(row[kk + u].mul(b[(kk + u) * n + j]));
        }
        kk += U;
    }
    while kk < k {
        acc = acc.add(row[kk].mul(b[kk * n + j]));
        kk += 1;
    }
    acc
}

fn dot_strided_dyn<T: Element>(row: &[T], b: &[T], j: usize, n: usize, unroll: usize) -> T {
    let mut acc = T::ZERO;
    let mut kk = 0;
    while kk < row.len() {
        let end = (kk + unroll).min(row.len());
        for (k, &a) in row[kk..end].iter().enumerate() {
            acc = acc.add(a.mul(b[(kk + k) * n + j]));
        }
        kk = end;
    }
    acc
}

#[derive(Debug, Clone, Copy)]
struct ConvShape {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    r: usize,
    s: usize,
}

fn conv<T: Element>(p: &ConvPlan, sh: ConvShape, inp: &[T], wt: &[T], out: &mut [T]) {
    let ConvShape {
        n,
        c,
        h,
        w,
        f,
        r,
        s,
    } = sh;
    let (oh, ow) = (h - r + 1, w - s + 1);
    out.fill(T::ZERO);
    let dst = Disjoint::new(out);
    match p.tile {
        None => {
            parallel_ranges(n * f * oh * ow, p.workers, |range| {
                let o = unsafe { dst.slice(range.start, range.len()) };
                for (idx, slot) in range.zip(o.iter_mut()) {
                    let x = idx % ow;
                    let y = (idx / ow) % oh;
                    let ff = (idx / (ow * oh)) % f;
                    let b = idx / (ow * oh * f);
                    let mut acc = T::ZERO;
                    for cc in 0..c {
                        for rr in 0..r {
                            let irow = &inp[((b * c + cc) * h + y + rr) * w + x..][..s];
                            let wrow = &wt[((ff * c + cc) * r + rr) * s..][..s];
                            acc = match p.unroll {
                                2 => dot_unit::<T, 2>(acc, irow, wrow),
                                4 => dot_unit::<T, 4>(acc, irow, wrow),
                                8 => dot_unit::<T, 8>(acc, irow, wrow),
                                _ => dot_unit::<T, 1>(acc, irow, wrow),
                            };
                        }
                    }
                    *slot = acc;
                }
            });
        }
        Some([tn, tf, ty, tx, tc]) => {
            let blocks = [
                n.div_ceil(tn),
                f.div_ceil(tf),
                oh.div_ceil(ty),
                ow.div_ceil(tx),
            ];
            let total: usize = blocks.iter().product();
            parallel_ranges(total, p.workers, |range| {
                for tile in range {
                    let bx = tile % blocks[3];
                    let by = (tile / blocks[3]) % blocks[2];
                    let bf = (tile / (blocks[3] * blocks[2])) % blocks[1];
                    let bn = tile / (blocks[3] * blocks[2] * blocks[1]);
                    let (x0, x1) = (bx * tx, (bx * tx + tx).min(ow));
                    for c0 in (0..c).step_by(tc) {
                        for b in bn * tn..(bn * tn + tn).min(n) {
                            for ff in bf * tf..(bf * tf + tf).min(f) {
                                for y in by * ty..(by * ty + ty).min(oh) {
                                    // disjoint: each tile owns its (b, ff, y, x0..x1) rows
                                    let orow = unsafe {
                                        dst.slice(((b * f + ff) * oh + y) * ow + x0, x1 - x0)
                                    };
                                    for cc in c0..(c0 + tc).min(c) {
                                        for rr in 0..r {
                                            let ibase = ((b * c + cc) * h + y + rr) * w;
                                            let wbase = ((ff * c + cc) * r + rr) * s;
                                            let brow =
                                                |ss: usize| &inp[ibase + x0 + ss..ibase + x1 + ss];
                                            matmul_rows(
                                                orow,
                                                &wt[wbase..wbase + s],
                                                brow,
                                                0,
                                                s,
                                                p.unroll,
                                                p.vector,
                                            );
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            });
        }
    }
}

#[inline(always)]
fn dot_unit<T: Element, const U: usize>(mut acc: T, x: &[T], y: &[T]) -> T {
    let len = x.len();
    let mut i = 0;
    while i + U <= len {
        for u in 0..U {
            acc = acc.add(x[i + u].mul(y[i + u]));
        }
        i += U;
    }
    while i < len {
        acc = acc.add(x[i].mul(y[i]));
        i += 1;
    }
    acc
}

fn chain<T: Element>(p: &ChainPlan, length: usize, input: &[T], out: &mut [T]) {
    fn stage_pass<T: Element, const U: usize, const W: usize>(
        src: &[T],
        dst: &mut [T],
        first: usize,
        last: usize,
    ) {
        let block = U * W;
        let len = dst.len();
        let mut x = 0;
        while x + block <= len {
            for u in 0..U {
                for l in 0..W {
                    let mut e = src[x + u * W + l];
                    for s in first..=last {
                        e = chain_op(e, s);
                    }
                    dst[x + u * W + l] = e;
                }
            }
            x += block;
        }
        while x < len {
            let mut e = src[x];
            for s in first..=last {
                e = chain_op(e, s);
            }
            dst[x] = e;
            x += 1;
        }
    }
    let run = |src: &[T], dst: &mut [T], first: usize, last: usize, workers: usize| {
        let d = Disjoint::new(dst);
        parallel_ranges(src.len(), workers, |range| {
            let o = unsafe { d.slice(range.start, range.len()) };
            let s = &src[range];
            dispatch_uw!(p.unroll, p.vector, stage_pass::<T>(s, o, first, last));
        });
    };
    if p.inlined {
        run(input, out, 1, length, p.workers);
    } else {
        let mut cur = input.to_vec();
        for s in 1..=length {
            // producers run serially; annotations apply to the final stage
            let workers = if s == length { p.workers } else { 1 };
            run(&cur, out, s, s, workers);
            if s < length {
                cur.copy_from_slice(out);
            }
        }
    }
}

fn reduce<T: Element>(p: &ReducePlan, x: &[T]) -> T {
    fn sum<T: Element, const U: usize>(x: &[T]) -> T {
        let mut acc = [T::ZERO; U];
        let mut i = 0;
        while i + U <= x.len() {
            for u in 0..U {
                acc[u] = acc[u].add(x[i + u]);
            }
            i += U;
        }
        let mut total = acc.iter().fold(T::ZERO, |a, &b| a.add(b));
        for &v in &x[i..] {
            total = total.add(v);
        }
        total
    }
    let sum_any = |x: &[T]| match p.unroll {
        2 => sum::<T, 2>(x),
        4 => sum::<T, 4>(x),
        8 => sum::<T, 8>(x),
        u if u > 8 => x.chunks(u).fold(T::ZERO, |a, c| a.add(sum::<T, 1>(c))),
        _ => sum::<T, 1>(x),
    };
    match p.tile {
        Some(t) => x.chunks(t).fold(T::ZERO, |acc, c| acc.add(sum_any(c))),
        None => sum_any(x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::reference_output;
    use crate::ir::{generate_sketches, Target, Workload};

    fn check_all_sketches<T: Element>(w: &Workload, seeds: u64) {
        let data = TensorSet::<T>::generate(w, 11);
        let want = reference_output(w, &data);
        let mut out = vec![T::ZERO; data.output_len];
        for sk in generate_sketches(w, 5, Target::fixed(4)) {
            for seed in 0..seeds {
                let c = sk.initialize_annotation(seed);
                let Some(s) = sk.apply(&c).unwrap().schedule() else {
                    continue;
                };
                let plan = lower(&s);
                run_native(&plan, &w.body, &data, &mut out);
                assert_eq!(out, want, "{plan:?}\n{s}");
            }
        }
    }

    #[test]
    fn native_matmul_matches_reference() {
        check_all_sketches::<i64>(&Workload::matmul(13, 17, 9), 12);
        check_all_sketches::<f64>(&Workload::matmul(8, 24, 33), 6);
    }

    #[test]
    fn native_conv_matches_reference() {
        let w = Workload::new(
            "c",
            Body::Conv2d {
                n: 2,
                c: 3,
                h: 9,
                w: 11,
                f: 4,
                r: 3,
                s: 3,
            },
        )
        .unwrap();
        check_all_sketches::<i32>(&w, 10);
    }

    #[test]
    fn native_chain_and_reduce_match_reference() {
        let e = Workload::new(
            "e",
            Body::ElementwiseChain {
                length: 4,
                extent: 77,
            },
        )
        .unwrap();
        check_all_sketches::<i64>(&e, 10);
        let r = Workload::new("r", Body::Reduce { extent: 1000 }).unwrap();
        check_all_sketches::<i64>(&r, 10);
    }

    #[test]
    fn lower_reads_tiles() {
        let sks = generate_sketches(&Workload::matmul(64, 64, 64), 3, Target::fixed(8));
        let sk = sks
            .iter()
            .find(|s| s.name() == "tile+parallel+vectorize")
            .unwrap();
        let c = sk.space().coordinate_of(&[8, 16, 4, 2, 8]).unwrap();
        let s = sk.apply(&c).unwrap().schedule().unwrap();
        assert_eq!(
            lower(&s),
            Plan::Matmul(MatmulPlan {
                tile: Some([8, 16, 4]),
                workers: 2,
                vector: 8,
                unroll: 1
            })
        );
    }
}
