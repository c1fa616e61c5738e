use crate::error::{MetricsError, Result};
use crate::Scalar;

fn mean_var<T: Scalar>(xs: &[T]) -> (T, T) {
    let n = T::from_count(xs.len());
    let mean = xs.iter().copied().sum::<T>() / n;
    let ss: T = xs.iter().map(|&x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - T::one()))
}

/// Cohen's d with the pooled standard deviation over `n_a + n_b - 2` degrees of freedom.
pub fn cohens_d<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() < 2 || b.len() < 2 {
        return Err(MetricsError::InsufficientData { needed: 2, got: a.len().min(b.len()) });
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let na = T::from_count(a.len());
    let nb = T::from_count(b.len());
    let pooled = (((na - T::one()) * va + (nb - T::one()) * vb) / (na + nb - T::lit(2.0))).sqrt();
    if pooled == T::zero() {
        return Err(MetricsError::Degenerate("pooled standard deviation is zero"));
    }
    Ok((ma - mb) / pooled)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_groups() {
        assert_eq!(cohens_d(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap(), -1.0);
        assert_eq!(cohens_d(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_and_short_inputs() {
        assert!(matches!(cohens_d(&[1.0, 1.0], &[1.0, 1.0]), Err(MetricsError::Degenerate(_))));
        assert!(cohens_d(&[1.0], &[1.0, 2.0]).is_err());
    }
}
