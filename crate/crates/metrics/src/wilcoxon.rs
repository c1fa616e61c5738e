//! Wilcoxon signed-rank test against a hypothesized median.
//!
//! Zero differences are dropped, tied magnitudes receive average ranks, and
//! the reported statistic is `T = min(W+, W-)`. For up to
//! [`EXACT_LIMIT`] non-zero differences the two-sided p value is the exact
//! null probability `P(min(W+, W-) <= T)`; larger samples use the normal
//! approximation with tie correction.

use crate::error::{MetricsError, Result};
use crate::ranks::{average_ranks, tie_sum};
use crate::{Scalar, StatTestResult, TestMethod};

pub const EXACT_LIMIT: usize = 25;

pub fn wilcoxon_signed_rank<T: Scalar>(samples: &[T], median: T) -> Result<StatTestResult<T>> {
    let diffs: Vec<T> = samples.iter().map(|&x| x - median).filter(|d| *d != T::zero()).collect();
    if diffs.is_empty() {
        return Err(MetricsError::Degenerate("all differences from the median are zero"));
    }
    let n = diffs.len();
    let magnitudes: Vec<T> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = average_ranks(&magnitudes);

    if n <= EXACT_LIMIT {
        // Average ranks are multiples of 1/2, so doubled ranks are integers.
        let doubled: Vec<usize> = ranks.iter().map(|r| (*r * T::lit(2.0)).round().to_usize().expect("rank fits usize")).collect();
        let w_plus2: usize = doubled.iter().zip(&diffs).filter(|(_, d)| **d > T::zero()).map(|(r, _)| *r).sum();
        let total2: usize = doubled.iter().sum();
        let t2 = w_plus2.min(total2 - w_plus2);
        let p = exact_two_sided(&doubled, t2);
        return Ok(StatTestResult {
            statistic: T::from_count(t2) / T::lit(2.0),
            p_value: Some(T::lit(p)),
            p_adjusted: None,
            method: TestMethod::WilcoxonExact,
        });
    }

    let w_plus: T = ranks.iter().zip(&diffs).filter(|(_, d)| **d > T::zero()).map(|(r, _)| *r).sum();
    let total: T = ranks.iter().copied().sum();
    let t = w_plus.min(total - w_plus);
    let nf = T::from_count(n);
    let mean = nf * (nf + T::one()) / T::lit(4.0);
    let var = nf * (nf + T::one()) * (T::lit(2.0) * nf + T::one()) / T::lit(24.0) - tie_sum::<T>(&ties) / T::lit(48.0);
    if var <= T::zero() {
        return Err(MetricsError::Degenerate("zero variance under the null"));
    }
    let z = (t - mean) / var.sqrt();
    let p = (T::lit(2.0) * crate::special::normal_cdf(z)).min(T::one());
    Ok(StatTestResult { statistic: t, p_value: Some(p), p_adjusted: None, method: TestMethod::WilcoxonNormal })
}

/// `P(min(W+, W-) <= t2 / 2)` for the given doubled ranks, by counting sign
/// assignments with a subset-sum table.
fn exact_two_sided(doubled: &[usize], t2: usize) -> f64 {
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0_f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let all = 2.0_f64.powi(doubled.len() as i32);
    let lower: f64 = counts[..=t2].iter().sum();
    (2.0 * lower / all).min(1.0)
}
