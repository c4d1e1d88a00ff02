//! Dense row-stochastic matrices for the follower's random walk.

use serde::{Deserialize, Serialize};

use super::SecurityError;

const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    /// Validated construction from explicit rows.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, SecurityError> {
        let n = rows.len();
        if n == 0 {
            return Err(SecurityError::Domain("empty matrix".into()));
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(SecurityError::Domain(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(SecurityError::Domain(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(SecurityError::Domain(format!("row {i} sums to {sum}")));
            }
            data.extend(row);
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "dimension mismatch");
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let src = &other.data[k * n..(k + 1) * n];
                let dst = &mut data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Self { n, data }
    }

    /// Row vector times matrix.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "dimension mismatch");
        let mut out = vec![0.0; self.n];
        for (i, vi) in v.iter().enumerate() {
            if *vi == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(self.row(i)) {
                *o += vi * p;
            }
        }
        out
    }

    pub fn pow(&self, mut k: usize) -> Self {
        let mut result = Self::identity(self.n);
        let mut base = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                result = result.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.n)
            .map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// The lazy reflecting walk: interior states move left, stay or move right
/// with probability 1/3 each; the two end states stay or step inward with
/// probability 1/2.
pub fn build_transition_matrix(n: usize) -> Result<TransitionMatrix, SecurityError> {
    if n < 2 {
        return Err(SecurityError::Domain(format!("need at least 2 states, got {n}")));
    }
    let mut data = vec![0.0; n * n];
    data[0] = 0.5;
    data[1] = 0.5;
    data[(n - 1) * n + n - 1] = 0.5;
    data[(n - 1) * n + n - 2] = 0.5;
    for i in 1..n - 1 {
        for j in [i - 1, i, i + 1] {
            data[i * n + j] = 1.0 / 3.0;
        }
    }
    Ok(TransitionMatrix { n, data })
}

pub fn n_step_matrix(p: &TransitionMatrix, n: usize) -> TransitionMatrix {
    p.pow(n)
}
