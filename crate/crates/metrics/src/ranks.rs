use crate::Scalar;

/// Average (mid) ranks, 1-based, plus the sizes of every tie group.
pub fn average_ranks<T: Scalar>(values: &[T]) -> (Vec<T>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("ranked values must not be NaN"));
    let mut ranks = vec![T::zero(); values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j share rank (i+1 + j) / 2
        let rank = T::from_count(i + 1 + j) / T::lit(2.0);
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Σ (t³ − t) over tie groups.
pub fn tie_sum<T: Scalar>(ties: &[usize]) -> T {
    ties.iter()
        .map(|&t| {
            let t = T::from_count(t);
            t * t * t - t
        })
        .fold(T::zero(), |a, b| a + b)
}
