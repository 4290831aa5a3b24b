//! Minimal compressed-row operator on the many-spin Hilbert space.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Square CSR matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOp {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseOp {
    /// Build from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(dim: usize, mut trip: Vec<(usize, usize, Complex64)>) -> Self {
        trip.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; dim + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside dimension {dim}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            indptr[r + 1] += indptr[r];
        }
        let mut op = Self {
            dim,
            indptr,
            indices,
            values,
        };
        op.prune();
        op
    }

    fn prune(&mut self) {
        let mut indptr = vec![0; self.dim + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.dim {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] != Complex64::new(0.0, 0.0) {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzeros of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    fn triplets(&self) -> Vec<(usize, usize, Complex64)> {
        (0..self.dim).flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v))).collect()
    }

    pub fn adjoint(&self) -> Self {
        let trip = self.triplets().into_iter().map(|(r, c, v)| (c, r, v.conj())).collect();
        Self::from_triplets(self.dim, trip)
    }

    pub fn scale(&self, k: Complex64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= k);
        out.prune();
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut trip = self.triplets();
        trip.extend(other.triplets());
        Self::from_triplets(self.dim, trip)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut trip = Vec::new();
        for r in 0..self.dim {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    trip.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.dim, trip)
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).add(&other.matmul(self).scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `Tr(rho A)` for a row-major dense `rho`.
    pub fn expect(&self, rho: &[Complex64]) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                s += v * rho[c * self.dim + r];
            }
        }
        s
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }
}
