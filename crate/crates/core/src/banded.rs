//! Hermitian block-banded matrices and their block Cholesky factorization.
//!
//! Unknowns are grouped ring by ring, so every operator built from the polar
//! stencils couples only a few neighbouring rings. The normal matrix of the
//! continuation least-squares problem is therefore block banded with dense
//! `ntheta x ntheta` blocks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::C64;
use crate::sparse::{Csr, Scalar};

/// Lower half of a Hermitian block-banded matrix: `low[i][d]` is block `(i + d, i)`.
#[derive(Debug, Clone)]
pub struct BlockBanded<T: Scalar> {
    nblocks: usize,
    bs: usize,
    bw: usize,
    low: Vec<Vec<DMatrix<T>>>,
}

impl<T: Scalar> BlockBanded<T> {
    pub fn zeros(nblocks: usize, block_size: usize, bandwidth: usize) -> Self {
        let low = (0..nblocks)
            .map(|i| {
                (0..=bandwidth)
                    .take_while(|d| i + d < nblocks)
                    .map(|_| DMatrix::zeros(block_size, block_size))
                    .collect()
            })
            .collect();
        Self {
            nblocks,
            bs: block_size,
            bw: bandwidth,
            low,
        }
    }

    pub fn dim(&self) -> usize {
        self.nblocks * self.bs
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Number of blocks a row of `a` spans, minus one.
    pub fn row_block_span(a: &Csr<T>, block_size: usize) -> usize {
        (0..a.nrows())
            .filter_map(|i| {
                let (c, _) = a.row(i);
                Some(c.last()? / block_size - c.first()? / block_size)
            })
            .max()
            .unwrap_or(0)
    }

    /// `self += A^H diag(w) A`.
    ///
    /// Rows are processed in chunks of one block height; each chunk is
    /// densified and its Gram blocks formed by matrix products.
    pub fn add_normal_rows(&mut self, a: &Csr<T>, weights: &[f64]) -> Result<()> {
        assert_eq!(a.ncols(), self.dim());
        assert_eq!(a.nrows(), weights.len());
        let bs = self.bs;
        let mut start = 0;
        while start < a.nrows() {
            let end = (start + bs).min(a.nrows());
            let (mut bmin, mut bmax) = (usize::MAX, 0);
            for r in start..end {
                let (cols, _) = a.row(r);
                if weights[r] == 0.0 || cols.is_empty() {
                    continue;
                }
                let span = cols[cols.len() - 1] / bs - cols[0] / bs;
                if span > self.bw {
                    return Err(Error::InvalidParams(format!(
                        "row {r} spans {span} blocks, bandwidth is {}",
                        self.bw
                    )));
                }
                bmin = bmin.min(cols[0] / bs);
                bmax = bmax.max(cols[cols.len() - 1] / bs);
            }
            if bmin == usize::MAX {
                start = end;
                continue;
            }
            if bmax - bmin > self.bw {
                self.add_rows_one_by_one(a, weights, start..end);
                start = end;
                continue;
            }
            let span = bmax - bmin;
            let mut dense = DMatrix::<T>::zeros(end - start, (span + 1) * bs);
            let mut weighted = dense.clone();
            for r in start..end {
                if weights[r] == 0.0 {
                    continue;
                }
                let w = T::from_real(weights[r]);
                let (cols, vals) = a.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    dense[(r - start, c - bmin * bs)] = v;
                    weighted[(r - start, c - bmin * bs)] = v * w;
                }
            }
            for ia in 0..=span {
                let right = weighted.columns(ia * bs, bs);
                for ib in ia..=span {
                    let update = dense.columns(ib * bs, bs).adjoint() * right;
                    self.low[bmin + ia][ib - ia] += update;
                }
            }
            start = end;
        }
        Ok(())
    }

    fn add_rows_one_by_one(&mut self, a: &Csr<T>, weights: &[f64], rows: std::ops::Range<usize>) {
        let bs = self.bs;
        for r in rows {
            let w = weights[r];
            if w == 0.0 {
                continue;
            }
            let (cols, vals) = a.row(r);
            let mut ring_start = 0;
            for ka in 0..cols.len() {
                let (ia, ja) = (cols[ka] / bs, cols[ka] % bs);
                if cols[ring_start] / bs != ia {
                    ring_start = ka;
                }
                let va = vals[ka] * T::from_real(w);
                for kb in ring_start..cols.len() {
                    let (ib, jb) = (cols[kb] / bs, cols[kb] % bs);
                    self.low[ia][ib - ia][(jb, ja)] += vals[kb].conjugate() * va;
                }
            }
        }
    }

    /// Dense copy with both triangles filled.
    pub fn to_dense(&self) -> DMatrix<T> {
        let bs = self.bs;
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for i in 0..self.nblocks {
            for (d, blk) in self.low[i].iter().enumerate() {
                let k = i + d;
                m.view_mut((k * bs, i * bs), (bs, bs)).copy_from(blk);
                if d > 0 {
                    m.view_mut((i * bs, k * bs), (bs, bs)).copy_from(&blk.adjoint());
                }
            }
        }
        m
    }

    /// `self += alpha * other` for a real matrix of the same layout.
    pub fn add_real_scaled(&mut self, other: &BlockBanded<f64>, alpha: f64) {
        assert_eq!((self.nblocks, self.bs), (other.nblocks, other.bs));
        assert!(other.bw <= self.bw);
        for i in 0..self.nblocks {
            for (d, blk) in other.low[i].iter().enumerate() {
                let dst = &mut self.low[i][d];
                for (x, &y) in dst.iter_mut().zip(blk.iter()) {
                    *x += T::from_real(alpha * y);
                }
            }
        }
    }

    /// Replaces `N` by `D N D` with `D = diag(N)^{-1/2}` and returns `D`.
    pub fn jacobi_scale(&mut self) -> Vec<f64> {
        let bs = self.bs;
        let d: Vec<f64> = (0..self.dim())
            .map(|k| {
                let v = self.low[k / bs][0][(k % bs, k % bs)].real();
                if v > 0.0 {
                    1.0 / v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        for i in 0..self.nblocks {
            for (off, blk) in self.low[i].iter_mut().enumerate() {
                let k = i + off;
                for c in 0..bs {
                    for r in 0..bs {
                        blk[(r, c)] *= T::from_real(d[k * bs + r] * d[i * bs + c]);
                    }
                }
            }
        }
        d
    }

    /// `y = N x` using both triangles.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let bs = self.bs;
        let mut y = vec![T::zero(); self.dim()];
        for i in 0..self.nblocks {
            let xi = DVector::from_column_slice(&x[i * bs..(i + 1) * bs]);
            for (d, blk) in self.low[i].iter().enumerate() {
                let k = i + d;
                let xk = DVector::from_column_slice(&x[k * bs..(k + 1) * bs]);
                let lower = blk * &xi;
                for (t, v) in lower.iter().enumerate() {
                    y[k * bs + t] += *v;
                }
                if d > 0 {
                    let upper = blk.adjoint() * &xk;
                    for (t, v) in upper.iter().enumerate() {
                        y[i * bs + t] += *v;
                    }
                }
            }
        }
        y
    }

    /// Block Cholesky `N = L L^H`, consuming the matrix.
    pub fn cholesky(mut self) -> Result<BlockCholesky<T>> {
        let nb = self.nblocks;
        let mut diag_min = f64::INFINITY;
        let mut diag_max: f64 = 0.0;
        for i in 0..nb {
            let aii = std::mem::replace(&mut self.low[i][0], DMatrix::zeros(0, 0));
            let lii = match aii.cholesky() {
                Some(c) => c.unpack(),
                None => {
                    return Err(Error::SolverFailure {
                        reason: format!("normal matrix lost positive definiteness at block {i}"),
                        condition: condition_estimate(diag_min, diag_max).max(1e16),
                    })
                }
            };
            for t in 0..self.bs {
                let p = lii[(t, t)].modulus();
                diag_min = diag_min.min(p);
                diag_max = diag_max.max(p);
            }
            let width = self.low[i].len();
            for d in 1..width {
                let a = std::mem::replace(&mut self.low[i][d], DMatrix::zeros(0, 0));
                let xh = lii
                    .solve_lower_triangular(&a.adjoint())
                    .ok_or_else(|| Error::SolverFailure {
                        reason: format!("singular diagonal block {i}"),
                        condition: f64::INFINITY,
                    })?;
                self.low[i][d] = xh.adjoint();
            }
            for d1 in 1..width {
                for d2 in 1..=d1 {
                    let (l1, l2) = (&self.low[i][d1], &self.low[i][d2]);
                    let update = l1 * l2.adjoint();
                    self.low[i + d2][d1 - d2] -= update;
                }
            }
            self.low[i][0] = lii;
        }
        let condition = condition_estimate(diag_min, diag_max);
        if !condition.is_finite() {
            return Err(Error::SolverFailure {
                reason: "zero pivot".into(),
                condition,
            });
        }
        Ok(BlockCholesky {
            factor: self,
            condition,
        })
    }
}

fn condition_estimate(min: f64, max: f64) -> f64 {
    if min > 0.0 {
        (max / min).powi(2)
    } else {
        f64::INFINITY
    }
}

/// Factor of a [`BlockBanded`] matrix.
#[derive(Debug, Clone)]
pub struct BlockCholesky<T: Scalar> {
    factor: BlockBanded<T>,
    condition: f64,
}

impl<T: Scalar> BlockCholesky<T> {
    /// Squared ratio of the extreme pivots of `L`; a lower bound on the
    /// condition number of `N`.
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let f = &self.factor;
        let (nb, bs) = (f.nblocks, f.bs);
        assert_eq!(b.len(), nb * bs);
        let mut y: Vec<DVector<T>> = Vec::with_capacity(nb);
        for i in 0..nb {
            let mut rhs = DVector::from_column_slice(&b[i * bs..(i + 1) * bs]);
            for d in 1..=f.bw.min(i) {
                rhs -= &f.low[i - d][d] * &y[i - d];
            }
            let yi = f.low[i][0]
                .solve_lower_triangular(&rhs)
                .expect("factor has a nonzero diagonal");
            y.push(yi);
        }
        let mut x: Vec<DVector<T>> = vec![DVector::zeros(0); nb];
        for i in (0..nb).rev() {
            let mut rhs = y[i].clone();
            for d in 1..f.low[i].len() {
                rhs -= f.low[i][d].ad_mul(&x[i + d]);
            }
            x[i] = f.low[i][0]
                .ad_solve_lower_triangular(&rhs)
                .expect("factor has a nonzero diagonal");
        }
        x.into_iter().flat_map(|v| v.iter().copied().collect::<Vec<_>>()).collect()
    }
}

impl BlockCholesky<f64> {
    /// Solves a real system for a complex right-hand side.
    pub fn solve_complex(&self, b: &[C64]) -> Vec<C64> {
        let re: Vec<f64> = b.iter().map(|z| z.re).collect();
        let im: Vec<f64> = b.iter().map(|z| z.im).collect();
        let (xr, xi) = (self.solve(&re), self.solve(&im));
        xr.into_iter().zip(xi).map(|(a, b)| C64::new(a, b)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_sparse(n_rows: usize, n: usize, bs: usize, seed: u64) -> Csr<C64> {
        // Rows spanning at most two consecutive blocks.
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64) / (1u64 << 31) as f64 - 0.5
        };
        let nb = n / bs;
        Csr::from_rows(
            n,
            (0..n_rows).map(|r| {
                let b0 = r % (nb - 1);
                (b0 * bs..(b0 + 2) * bs)
                    .filter(|c| (c + r) % 3 != 0)
                    .map(|c| (c, C64::new(next(), next())))
                    .collect()
            }),
        )
    }

    #[test]
    fn cholesky_solves_normal_equations() {
        let (nb, bs) = (5, 4);
        let n = nb * bs;
        let a = random_sparse(3 * n, n, bs, 7);
        let w: Vec<f64> = (0..a.nrows()).map(|r| 1.0 + (r % 5) as f64).collect();
        let mut m = BlockBanded::<C64>::zeros(nb, bs, 1);
        m.add_normal_rows(&a, &w).unwrap();
        let x_true: Vec<C64> = (0..n).map(|k| C64::new(k as f64 * 0.1, 1.0 - k as f64 * 0.05)).collect();
        let b = m.apply(&x_true);
        let x = m.clone().cholesky().unwrap().solve(&b);
        let err = x.iter().zip(&x_true).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn real_factor_with_complex_rhs() {
        let (nb, bs) = (4, 3);
        let n = nb * bs;
        let a = Csr::from_rows(
            n,
            (0..n).map(|i| {
                let mut row = vec![(i, 3.0)];
                if i + bs < n {
                    row.push((i + bs, -1.0));
                }
                row
            }),
        );
        let mut m = BlockBanded::<f64>::zeros(nb, bs, 1);
        m.add_normal_rows(&a, &vec![1.0; n]).unwrap();
        let x_true: Vec<C64> = (0..n).map(|k| C64::new(k as f64, -(k as f64))).collect();
        let re: Vec<f64> = x_true.iter().map(|z| z.re).collect();
        let im: Vec<f64> = x_true.iter().map(|z| z.im).collect();
        let b: Vec<C64> = m.apply(&re).into_iter().zip(m.apply(&im)).map(|(a, b)| C64::new(a, b)).collect();
        let x = m.cholesky().unwrap().solve_complex(&b);
        for (a, b) in x.iter().zip(&x_true) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        let mut m = BlockBanded::<f64>::zeros(2, 2, 1);
        let a = Csr::from_rows(4, vec![vec![(0, 1.0)], vec![(3, 1.0)]]);
        m.add_normal_rows(&a, &[1.0, 1.0]).unwrap();
        assert!(matches!(m.cholesky(), Err(Error::SolverFailure { .. })));
    }

    #[test]
    fn chunked_and_rowwise_assembly_agree() {
        let (nb, bs) = (5, 4);
        let n = nb * bs;
        let a = random_sparse(2 * n + 3, n, bs, 11);
        let w: Vec<f64> = (0..a.nrows()).map(|r| 0.5 + (r % 3) as f64).collect();
        let mut chunked = BlockBanded::<C64>::zeros(nb, bs, 4);
        chunked.add_normal_rows(&a, &w).unwrap();
        let mut rowwise = BlockBanded::<C64>::zeros(nb, bs, 4);
        rowwise.add_rows_one_by_one(&a, &w, 0..a.nrows());
        let d = chunked.to_dense() - rowwise.to_dense();
        assert!(d.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn rows_wider_than_the_band_are_rejected() {
        let mut m = BlockBanded::<f64>::zeros(3, 2, 1);
        let a = Csr::from_rows(6, vec![vec![(0, 1.0), (5, 1.0)]]);
        assert!(m.add_normal_rows(&a, &[1.0]).is_err());
    }
}
