//! Personality-change and behavioral-change summaries.

use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};
use crate::Scalar;

/// Per-dimension daily score series. All dimensions share the same day count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries<T> {
    dimensions: Vec<Vec<T>>,
}

impl<T: Scalar> ScoreSeries<T> {
    pub fn new(dimensions: Vec<Vec<T>>) -> Result<Self> {
        if dimensions.is_empty() {
            return Err(MetricsError::Shape("score series has no dimensions".into()));
        }
        let n = dimensions[0].len();
        if let Some(bad) = dimensions.iter().position(|d| d.len() != n) {
            return Err(MetricsError::Shape(format!("dimension {bad} has {} days, expected {n}", dimensions[bad].len())));
        }
        Ok(Self { dimensions })
    }

    /// Builds a series from day-major rows (one row of dimension scores per day).
    pub fn from_days<R: AsRef<[T]>>(days: &[R]) -> Result<Self> {
        let width = days.first().map(|d| d.as_ref().len()).unwrap_or(0);
        let mut dims = vec![Vec::with_capacity(days.len()); width];
        for (i, day) in days.iter().enumerate() {
            let day = day.as_ref();
            if day.len() != width {
                return Err(MetricsError::Shape(format!("day {i} has {} dimensions, expected {width}", day.len())));
            }
            for (d, &v) in day.iter().enumerate() {
                dims[d].push(v);
            }
        }
        Self::new(dims)
    }

    pub fn days(&self) -> usize {
        self.dimensions[0].len()
    }

    pub fn dimensions(&self) -> &[Vec<T>] {
        &self.dimensions
    }
}

/// Mean absolute day-over-day change, averaged over dimensions and day pairs.
pub fn delta_overall<T: Scalar>(series: &ScoreSeries<T>) -> Result<T> {
    let n = series.days();
    if n < 2 {
        return Err(MetricsError::InsufficientData { needed: 2, got: n });
    }
    let total: T = series.dimensions.iter().flat_map(|d| d.windows(2).map(|w| (w[0] - w[1]).abs())).sum();
    let denom = T::from_count(series.dimensions.len()) * T::from_count(n - 1);
    Ok(total / denom)
}

/// Per-day goal counts over a fixed goal axis; absent goals count zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalCountVector<T> {
    counts: Vec<T>,
}

impl<T: Scalar> GoalCountVector<T> {
    pub fn new(counts: Vec<T>) -> Result<Self> {
        if counts.iter().any(|&c| c < T::zero() || !c.is_finite()) {
            return Err(MetricsError::Input("goal counts must be finite and non-negative".into()));
        }
        Ok(Self { counts })
    }

    pub fn zeros(axis_len: usize) -> Self {
        Self { counts: vec![T::zero(); axis_len] }
    }

    pub fn counts(&self) -> &[T] {
        &self.counts
    }

    pub fn increment(&mut self, axis: usize) {
        self.counts[axis] = self.counts[axis] + T::one();
    }
}

pub fn euclid_distance<T: Scalar>(a: &GoalCountVector<T>, b: &GoalCountVector<T>) -> Result<T> {
    if a.counts.len() != b.counts.len() {
        return Err(MetricsError::Shape(format!("goal axes differ: {} vs {}", a.counts.len(), b.counts.len())));
    }
    let sq: T = a.counts.iter().zip(&b.counts).map(|(&x, &y)| (x - y) * (x - y)).sum();
    Ok(sq.sqrt())
}

/// Symmetric day-pair distance matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix<T> {
    n: usize,
    cells: Vec<T>,
}

impl<T: Scalar> DistanceMatrix<T> {
    /// Wraps a row-major `n × n` matrix after checking the metric invariants.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        let mut cells = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(MetricsError::Shape(format!("row {i} has {} columns, expected {n}", row.len())));
            }
            cells.extend_from_slice(row);
        }
        let m = Self { n, cells };
        for i in 0..n {
            if m.get(i, i) != T::zero() {
                return Err(MetricsError::Input(format!("diagonal entry {i} is non-zero")));
            }
            for j in 0..n {
                if m.get(i, j) < T::zero() || m.get(i, j) != m.get(j, i) {
                    return Err(MetricsError::Input(format!("entry ({i},{j}) breaks symmetry or sign")));
                }
            }
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.cells[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.cells.chunks(self.n.max(1)).map(<[T]>::to_vec).collect()
    }
}

pub fn distance_matrix<T: Scalar>(days: &[GoalCountVector<T>]) -> Result<DistanceMatrix<T>> {
    let n = days.len();
    let mut cells = vec![T::zero(); n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = euclid_distance(&days[i], &days[j])?;
            cells[i * n + j] = d;
            cells[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, cells })
}

/// Mean of the strict upper triangle of a distance matrix.
pub fn activity_level<T: Scalar>(d: &DistanceMatrix<T>) -> Result<T> {
    let n = d.n;
    if n < 2 {
        return Err(MetricsError::InsufficientData { needed: 2, got: n });
    }
    let mut sum = T::zero();
    for i in 0..n - 1 {
        for j in (i + 1)..n {
            sum = sum + d.get(i, j);
        }
    }
    Ok(sum / T::from_count(n * (n - 1) / 2))
}
