//! Minimal compressed-row sparse matrices over `f64` or complex scalars.

use nalgebra::ComplexField;

use crate::grid::C64;

/// Scalar type accepted by the sparse and banded kernels.
pub trait Scalar: ComplexField<RealField = f64> + Copy {}

impl Scalar for f64 {}
impl Scalar for C64 {}

#[derive(Debug, Clone, PartialEq)]
pub struct Csr<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> Csr<T> {
    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn diagonal(d: &[T]) -> Self {
        let mut m = Self::identity(d.len());
        m.values.copy_from_slice(d);
        m
    }

    /// Builds a matrix row by row. Each row is sorted by column, duplicate
    /// columns are summed and exact zeros dropped.
    pub fn from_rows(ncols: usize, rows: impl IntoIterator<Item = Vec<(usize, T)>>) -> Self {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let col = row[k].0;
                debug_assert!(col < ncols);
                let mut v = row[k].1;
                k += 1;
                while k < row.len() && row[k].0 == col {
                    v += row[k].1;
                    k += 1;
                }
                if v != T::zero() {
                    indices.push(col);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows: indptr.len() - 1,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    /// `y = A x` for a complex vector `x`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64>
    where
        C64: std::ops::Mul<T, Output = C64>,
    {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                let mut acc = C64::new(0.0, 0.0);
                for (&c, &v) in cols.iter().zip(vals) {
                    acc += x[c] * v;
                }
                acc
            })
            .collect()
    }

    /// `diag(d) * A`.
    pub fn scale_rows(&self, d: &[T]) -> Self {
        assert_eq!(d.len(), self.nrows);
        let mut out = self.clone();
        for i in 0..self.nrows {
            for v in &mut out.values[self.indptr[i]..self.indptr[i + 1]] {
                *v *= d[i];
            }
        }
        out
    }

    /// Rows `rows` of `A`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self::from_rows(
            self.ncols,
            rows.iter().map(|&i| {
                let (c, v) = self.row(i);
                c.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>()
            }),
        )
    }

    /// `A * B`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut acc = vec![T::zero(); other.ncols];
        let mut touched = vec![false; other.ncols];
        let mut cols: Vec<usize> = Vec::new();
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.nrows {
            let (ac, av) = self.row(i);
            for (&k, &a) in ac.iter().zip(av) {
                let (bc, bv) = other.row(k);
                for (&j, &b) in bc.iter().zip(bv) {
                    if !touched[j] {
                        touched[j] = true;
                        cols.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            cols.sort_unstable();
            for &j in &cols {
                if acc[j] != T::zero() {
                    indices.push(j);
                    values.push(acc[j]);
                }
                acc[j] = T::zero();
                touched[j] = false;
            }
            cols.clear();
            indptr.push(indices.len());
        }
        Self {
            nrows: self.nrows,
            ncols: other.ncols,
            indptr,
            indices,
            values,
        }
    }

    /// `sum_k alpha_k * A_k` for matrices of equal shape.
    pub fn linear_combination(terms: &[(T, &Self)]) -> Self {
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        Self::from_rows(
            ncols,
            (0..nrows).map(|i| {
                let mut row = Vec::new();
                for (alpha, m) in terms {
                    assert_eq!((m.nrows, m.ncols), (nrows, ncols));
                    let (c, v) = m.row(i);
                    row.extend(c.iter().zip(v).map(|(&c, &v)| (c, *alpha * v)));
                }
                row
            }),
        )
    }
}

impl Csr<f64> {
    pub fn to_complex(&self) -> Csr<C64> {
        Csr {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|&v| C64::new(v, 0.0)).collect(),
        }
    }
}

impl Csr<C64> {
    /// `A^H diag(w) y`.
    pub fn apply_adjoint_weighted(&self, w: &[f64], y: &[C64]) -> Vec<C64> {
        assert_eq!((w.len(), y.len()), (self.nrows, self.nrows));
        let mut out = vec![C64::new(0.0, 0.0); self.ncols];
        for i in 0..self.nrows {
            let wy = y[i] * w[i];
            let (cols, vals) = self.row(i);
            for (&c, v) in cols.iter().zip(vals) {
                out[c] += v.conj() * wy;
            }
        }
        out
    }

    /// Real part, if every entry is real.
    pub fn try_real(&self) -> Option<Csr<f64>> {
        if self.values.iter().any(|v| v.im != 0.0) {
            return None;
        }
        Some(Csr {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v.re).collect(),
        })
    }
}
