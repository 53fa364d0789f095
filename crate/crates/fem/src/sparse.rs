//! Minimal compressed-sparse-row matrices for the discrete operators and
//! assembled forms.

use crate::{FemError, Result};
use nalgebra::DMatrix;

/// Coordinate-format accumulator used during assembly.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Triplets {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, val));
    }

    pub fn extend(&mut self, other: Vec<(usize, usize, f64)>) {
        self.entries.extend(other);
    }

    /// Duplicate entries are summed (assembly semantics).
    pub fn to_csr_sum(&self) -> CsrMatrix {
        self.to_csr(true)
    }

    /// Duplicate entries overwrite; used for operators whose columns are DOF
    /// evaluations shared by several cells. Duplicates must agree.
    pub fn to_csr_set(&self) -> CsrMatrix {
        self.to_csr(false)
    }

    fn to_csr(&self, sum: bool) -> CsrMatrix {
        let mut sorted = self.entries.clone();
        sorted.sort_by_key(|(r, c, _)| (*r, *c));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                if sum {
                    *vals.last_mut().unwrap() += v;
                } else {
                    debug_assert!(
                        (vals.last().unwrap() - v).abs() <= 1e-9 * (1.0 + v.abs()),
                        "conflicting duplicate at ({r},{c}): {} vs {v}",
                        vals.last().unwrap()
                    );
                    *vals.last_mut().unwrap() = v;
                }
            } else {
                indices.push(c);
                vals.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            vals,
            symmetric: false,
        }
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    vals: Vec<f64>,
    /// Marks matrices assembled from symmetric forms.
    pub symmetric: bool,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            vals: Vec::new(),
            symmetric: false,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[r]..self.indptr[r + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r)
            .find(|(j, _)| *j == c)
            .map(|(_, v)| v)
            .unwrap_or(0.0)
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, v) in self.row(r) {
                acc += v * x[c];
            }
            *yr = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(FemError::DimensionMismatch(self.nrows, self.ncols, x.len()));
        }
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    /// `y += s * A^T x`.
    pub fn matvec_transpose_add(&self, x: &[f64], s: f64, y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for r in 0..self.nrows {
            let xr = s * x[r];
            if xr == 0.0 {
                continue;
            }
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Triplets::new(self.ncols, self.nrows);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                t.push(c, r, v);
            }
        }
        let mut out = t.to_csr_sum();
        out.symmetric = self.symmetric;
        out
    }

    /// Sparse product `self * other` via a dense accumulator per row.
    pub fn matmul(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.ncols != other.nrows {
            return Err(FemError::DimensionMismatch(
                self.nrows,
                self.ncols,
                other.nrows,
            ));
        }
        let mut acc = vec![0.0f64; other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut t = Triplets::new(self.nrows, other.ncols);
        for r in 0..self.nrows {
            let mut active: Vec<usize> = Vec::new();
            for (k, v) in self.row(r) {
                for (c, w) in other.row(k) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = 0.0;
                        active.push(c);
                    }
                    acc[c] += v * w;
                }
            }
            active.sort_unstable();
            for c in active {
                t.push(r, c, acc[c]);
            }
        }
        Ok(t.to_csr_sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// `max_ij |A_ij - A_ji|` (square matrices).
    pub fn symmetry_deviation(&self) -> f64 {
        debug_assert_eq!(self.nrows, self.ncols);
        let t = self.transpose();
        let mut dev: f64 = 0.0;
        for r in 0..self.nrows {
            let mut it_a = self.row(r).peekable();
            let mut it_b = t.row(r).peekable();
            loop {
                match (it_a.peek().copied(), it_b.peek().copied()) {
                    (Some((ca, va)), Some((cb, vb))) => {
                        if ca == cb {
                            dev = dev.max((va - vb).abs());
                            it_a.next();
                            it_b.next();
                        } else if ca < cb {
                            dev = dev.max(va.abs());
                            it_a.next();
                        } else {
                            dev = dev.max(vb.abs());
                            it_b.next();
                        }
                    }
                    (Some((_, va)), None) => {
                        dev = dev.max(va.abs());
                        it_a.next();
                    }
                    (None, Some((_, vb))) => {
                        dev = dev.max(vb.abs());
                        it_b.next();
                    }
                    (None, None) => break,
                }
            }
        }
        dev
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }
}
