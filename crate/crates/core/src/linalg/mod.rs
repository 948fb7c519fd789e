//! Set-level statistics and the symmetric eigensolver.

mod eigen;
mod stats;

pub use eigen::{top_eigenpairs, top_eigenpairs_with, Decomposition, EigenPair, SolverOptions};
pub use stats::{compute_statistics, SetStatistics};

/// Dense symmetric matrix, stored in full row-major form.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Builds from row-major data, averaging the two triangles.
    pub fn from_row_major(n: usize, mut data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n, "expected {n}x{n} entries");
        for i in 0..n {
            for j in i + 1..n {
                let avg = 0.5 * (data[i * n + j] + data[j * n + i]);
                data[i * n + j] = avg;
                data[j * n + i] = avg;
            }
        }
        Self { n, data }
    }

    /// Builds from a matrix whose upper triangle is authoritative.
    pub(crate) fn from_upper(n: usize, mut data: Vec<f64>) -> Self {
        for i in 0..n {
            for j in i + 1..n {
                data[j * n + i] = data[i * n + j];
            }
        }
        Self { n, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.n)) {
            *o = dot(row, x);
        }
    }

    /// `self -= alpha * v vᵀ`
    pub fn rank_one_sub(&mut self, alpha: f64, v: &[f64]) {
        for (row, &vi) in self.data.chunks_exact_mut(self.n).zip(v) {
            let s = alpha * vi;
            for (a, &vj) in row.iter_mut().zip(v) {
                *a -= s * vj;
            }
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators so the loop vectorizes
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
