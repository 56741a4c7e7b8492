//! Two-sided Wilcoxon rank-sum (Mann-Whitney) test.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Pooled sizes up to this use the exact permutation distribution.
pub const EXACT_LIMIT: usize = 16;

/// Midranks of the pooled sample, doubled so they stay integral.
fn doubled_midranks(pooled: &[f64]) -> (Vec<u64>, u64) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&x, &y| pooled[x].total_cmp(&pooled[y]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut tie_term = 0u64;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let doubled = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            ranks[i] = doubled;
        }
        let t = (end - start) as u64;
        tie_term += t * t * t - t;
        start = end;
    }
    (ranks, tie_term)
}

/// Two-sided p-value for the null hypothesis that `a` and `b` come from the
/// same distribution.
///
/// Ties receive midranks. For `|a| + |b| <= 16` the p-value is exact: the
/// probability, over all equally likely assignments of the pooled ranks to
/// `a`, that the rank sum deviates from its mean at least as much as the
/// observed one. Larger samples use the normal approximation with tie and
/// continuity corrections.
pub fn rank_sum_p(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 3 || b.len() < 3 {
        return Err(Error::TooFewSamples(a.len(), b.len()));
    }
    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, tie_term) = doubled_midranks(&pooled);
    let w2: u64 = ranks[..n1].iter().sum();
    // doubled mean of the rank sum: n1 (n + 1)
    let mean2 = (n1 * (n + 1)) as i64;
    let observed = (w2 as i64 - mean2).abs();

    if n <= EXACT_LIMIT {
        let max_sum = ranks.iter().sum::<u64>() as usize;
        // counts[k][s]: subsets of size k with doubled rank sum s
        let mut counts = vec![vec![0f64; max_sum + 1]; n1 + 1];
        counts[0][0] = 1.0;
        for &r in &ranks {
            let r = r as usize;
            for k in (1..=n1).rev() {
                let (lo, hi) = counts.split_at_mut(k);
                for s in (r..=max_sum).rev() {
                    hi[0][s] += lo[k - 1][s - r];
                }
            }
        }
        let total: f64 = counts[n1].iter().sum();
        let extreme: f64 = counts[n1]
            .iter()
            .enumerate()
            .filter(|&(s, _)| (s as i64 - mean2).abs() >= observed)
            .map(|(_, &c)| c)
            .sum();
        return Ok((extreme / total).clamp(0.0, 1.0));
    }

    let (n1f, n2f, nf) = (n1 as f64, n2 as f64, n as f64);
    let u = w2 as f64 / 2.0 - n1f * (n1f + 1.0) / 2.0;
    let mu = n1f * n2f / 2.0;
    let var = n1f * n2f / 12.0 * ((nf + 1.0) - tie_term as f64 / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Ok(1.0);
    }
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_populations() {
        assert_eq!(rank_sum_p(&[5.0; 3], &[5.0; 3]).unwrap(), 1.0);
        assert_eq!(rank_sum_p(&[5.0; 12], &[5.0; 12]).unwrap(), 1.0);
    }

    #[test]
    fn worked_exact_values() {
        let p = rank_sum_p(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((p - 0.1).abs() < 1e-12);
        // only the two extreme rank sums out of 70 assignments
        let p = rank_sum_p(&[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0, 7.0, 8.0]).unwrap();
        assert!((p - 2.0 / 70.0).abs() < 1e-12, "{p}");
    }

    /// Enumerates every way to pick `|a|` pooled positions.
    fn brute_force(a: &[f64], b: &[f64]) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let n = pooled.len();
        let rank = |i: usize| {
            let less = pooled.iter().filter(|&&x| x < pooled[i]).count() as f64;
            let eq = pooled.iter().filter(|&&x| x == pooled[i]).count() as f64;
            less + (eq + 1.0) / 2.0
        };
        let ranks: Vec<f64> = (0..n).map(rank).collect();
        let mean = a.len() as f64 * (n as f64 + 1.0) / 2.0;
        let obs = (ranks[..a.len()].iter().sum::<f64>() - mean).abs();
        let (mut hit, mut total) = (0u64, 0u64);
        for mask in 0u32..1 << n {
            if mask.count_ones() as usize == a.len() {
                total += 1;
                let w: f64 = (0..n)
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| ranks[i])
                    .sum();
                if (w - mean).abs() >= obs - 1e-9 {
                    hit += 1;
                }
            }
        }
        hit as f64 / total as f64
    }

    #[test]
    fn exact_branch_matches_enumeration() {
        let a = [3.0, 1.0, 4.0, 1.0, 5.0];
        let b = [9.0, 2.0, 6.0, 5.0];
        assert!((rank_sum_p(&a, &b).unwrap() - brute_force(&a, &b)).abs() < 1e-12);
        let a = [1.0, 2.0, 2.0];
        let b = [2.0, 3.0, 3.0, 7.0];
        assert!((rank_sum_p(&a, &b).unwrap() - brute_force(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            rank_sum_p(&[1.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::TooFewSamples(2, 3))
        ));
    }

    #[test]
    fn normal_branch_separated_groups() {
        let a: Vec<f64> = vec![1.0; 10];
        let b: Vec<f64> = vec![2.0; 10];
        let p = rank_sum_p(&a, &b).unwrap();
        assert!(p < 1e-4, "{p}");
        assert_eq!(p, rank_sum_p(&b, &a).unwrap());
    }

    #[test]
    fn midranks_are_doubled() {
        let (r, t) = doubled_midranks(&[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(r, vec![2, 5, 5, 8]);
        assert_eq!(t, 6);
    }
}
