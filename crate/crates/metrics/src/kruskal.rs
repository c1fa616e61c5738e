//! Kruskal-Wallis H test and Dunn's pairwise post-hoc test with Holm correction.

use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};
use crate::ranks::{average_ranks, tie_sum};
use crate::special::{chi_square_sf, normal_sf};
use crate::{Scalar, StatTestResult, TestMethod};

struct Pooled<T> {
    rank_sums: Vec<T>,
    sizes: Vec<usize>,
    total: usize,
    ties: T,
}

fn pool<T: Scalar>(groups: &[Vec<T>]) -> Result<Pooled<T>> {
    if groups.len() < 2 {
        return Err(MetricsError::InsufficientData { needed: 2, got: groups.len() });
    }
    if groups.iter().any(Vec::is_empty) {
        return Err(MetricsError::Input("every group needs at least one value".into()));
    }
    let all: Vec<T> = groups.iter().flatten().copied().collect();
    let (ranks, ties) = average_ranks(&all);
    let mut rank_sums = Vec::with_capacity(groups.len());
    let mut offset = 0;
    for g in groups {
        rank_sums.push(ranks[offset..offset + g.len()].iter().copied().sum());
        offset += g.len();
    }
    Ok(Pooled { rank_sums, sizes: groups.iter().map(Vec::len).collect(), total: all.len(), ties: tie_sum(&ties) })
}

/// H statistic with tie correction; p from the chi-square tail with `k - 1` df.
pub fn kruskal_wallis<T: Scalar>(groups: &[Vec<T>]) -> Result<StatTestResult<T>> {
    let p = pool(groups)?;
    let n = T::from_count(p.total);
    let correction = T::one() - p.ties / (n * n * n - n);
    if correction <= T::zero() {
        return Err(MetricsError::Degenerate("all values are identical"));
    }
    let sum_sq: T = p.rank_sums.iter().zip(&p.sizes).map(|(&r, &s)| r * r / T::from_count(s)).sum();
    let h = (T::lit(12.0) / (n * (n + T::one())) * sum_sq - T::lit(3.0) * (n + T::one())) / correction;
    let h = h.max(T::zero());
    let df = T::from_count(groups.len() - 1);
    Ok(StatTestResult { statistic: h, p_value: Some(chi_square_sf(h, df)), p_adjusted: None, method: TestMethod::KruskalWallis })
}

/// One Dunn comparison between groups `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult<T> {
    pub a: usize,
    pub b: usize,
    pub result: StatTestResult<T>,
}

/// Holm step-down adjustment; output is in input order.
pub fn holm_adjust<T: Scalar>(raw: &[T]) -> Vec<T> {
    let m = raw.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| raw[i].partial_cmp(&raw[j]).expect("p values must not be NaN"));
    let mut adjusted = vec![T::zero(); m];
    let mut running = T::zero();
    for (rank, &idx) in order.iter().enumerate() {
        let scaled = (T::from_count(m - rank) * raw[idx]).min(T::one());
        running = running.max(scaled);
        adjusted[idx] = running;
    }
    adjusted
}

/// All pairwise Dunn z tests (pairs in lexicographic `(a, b)` order).
pub fn dunn_posthoc_holm<T: Scalar>(groups: &[Vec<T>]) -> Result<Vec<PairwiseResult<T>>> {
    let p = pool(groups)?;
    let n = T::from_count(p.total);
    let base = n * (n + T::one()) / T::lit(12.0) - p.ties / (T::lit(12.0) * (n - T::one()));
    if base <= T::zero() {
        return Err(MetricsError::Degenerate("all values are identical"));
    }
    let means: Vec<T> = p.rank_sums.iter().zip(&p.sizes).map(|(&r, &s)| r / T::from_count(s)).collect();
    let mut pairs = Vec::new();
    let mut raw = Vec::new();
    for a in 0..groups.len() {
        for b in (a + 1)..groups.len() {
            let se = (base * (T::one() / T::from_count(p.sizes[a]) + T::one() / T::from_count(p.sizes[b]))).sqrt();
            let z = (means[a] - means[b]) / se;
            let pv = (T::lit(2.0) * normal_sf(z.abs())).min(T::one());
            pairs.push((a, b, z));
            raw.push(pv);
        }
    }
    let adjusted = holm_adjust(&raw);
    Ok(pairs
        .into_iter()
        .zip(raw.into_iter().zip(adjusted))
        .map(|((a, b, z), (pv, adj))| PairwiseResult {
            a,
            b,
            result: StatTestResult { statistic: z, p_value: Some(pv), p_adjusted: Some(adj), method: TestMethod::Dunn },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_triples() {
        let r = kruskal_wallis(&[vec![1.0_f64, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert!((r.statistic - 27.0 / 7.0).abs() < 1e-12);
        assert!((r.p_value.unwrap() - 0.049_534_613_435).abs() < 1e-9);
    }

    #[test]
    fn identical_values_are_degenerate() {
        assert!(matches!(kruskal_wallis(&[vec![2.0, 2.0], vec![2.0, 2.0]]), Err(MetricsError::Degenerate(_))));
    }

    #[test]
    fn permutation_within_group_is_invisible() {
        let a = kruskal_wallis(&[vec![1.0, 7.0, 3.0], vec![4.0, 2.0, 6.0, 6.0]]).unwrap();
        let b = kruskal_wallis(&[vec![3.0, 1.0, 7.0], vec![6.0, 6.0, 2.0, 4.0]]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn holm_examples() {
        let adj = holm_adjust(&[0.01_f64, 0.04, 0.03]);
        // sorted 0.01,0.03,0.04 -> 0.03, 0.06, 0.06
        assert!((adj[0] - 0.03).abs() < 1e-15);
        assert!((adj[2] - 0.06).abs() < 1e-15);
        assert!((adj[1] - 0.06).abs() < 1e-15);
        assert_eq!(holm_adjust(&[0.9, 0.8]), vec![1.0, 1.0]);
    }

    #[test]
    fn two_groups_single_comparison() {
        let r = dunn_posthoc_holm(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].result.p_value, r[0].result.p_adjusted);
    }
}
