//! Sparse-matrix forms of the grid stencils, cached per grid.
//!
//! The matrices reproduce the field-level stencils in `grid::stencil` entry for
//! entry; the continuation solver assembles its least-squares system from them.

use std::sync::{Arc, OnceLock};

use crate::banded::BlockBanded;
use crate::error::Result;
use crate::grid::{stencil, PolarGrid};
use crate::sparse::Csr;

#[derive(Debug)]
pub struct GridOperators {
    pub d1: Csr<f64>,
    pub d2: Csr<f64>,
    pub d11: Csr<f64>,
    /// Symmetrized mixed partial.
    pub d12: Csr<f64>,
    pub d22: Csr<f64>,
    /// Angular derivative `∂_θ`.
    pub dtheta: Csr<f64>,
    h2_normal: OnceLock<Arc<BlockBanded<f64>>>,
}

impl GridOperators {
    pub fn for_grid(grid: &PolarGrid) -> Arc<GridOperators> {
        grid.operator_cache()
            .get_or_init(|| Arc::new(Self::build(grid)))
            .clone()
    }

    fn build(grid: &PolarGrid) -> Self {
        let n = grid.len();
        let nt = grid.ntheta();
        let dr = Csr::from_rows(
            n,
            (0..n).map(|k| {
                let (i, j) = grid.ring_of(k);
                stencil::radial_stencil(grid, i)
                    .iter()
                    .map(|&(ring, c)| (ring * nt + j, c))
                    .collect()
            }),
        );
        let c = grid.angular_stencil().to_vec();
        let dtheta = Csr::from_rows(
            n,
            (0..n).map(|k| {
                let (i, j) = grid.ring_of(k);
                (1..nt).map(|s| (i * nt + (j + s) % nt, c[s])).collect()
            }),
        );
        let mut cos = Vec::with_capacity(n);
        let mut sin = Vec::with_capacity(n);
        let mut sin_over_r = Vec::with_capacity(n);
        let mut cos_over_r = Vec::with_capacity(n);
        for k in 0..n {
            let (i, j) = grid.ring_of(k);
            let r = grid.radius(i);
            cos.push(grid.cos_theta()[j]);
            sin.push(grid.sin_theta()[j]);
            sin_over_r.push(-grid.sin_theta()[j] / r);
            cos_over_r.push(grid.cos_theta()[j] / r);
        }
        let d1 = Csr::linear_combination(&[
            (1.0, &dr.scale_rows(&cos)),
            (1.0, &dtheta.scale_rows(&sin_over_r)),
        ]);
        let d2 = Csr::linear_combination(&[
            (1.0, &dr.scale_rows(&sin)),
            (1.0, &dtheta.scale_rows(&cos_over_r)),
        ]);
        let d11 = d1.matmul(&d1);
        let d22 = d2.matmul(&d2);
        let d12 = Csr::linear_combination(&[(0.5, &d1.matmul(&d2)), (0.5, &d2.matmul(&d1))]);
        Self {
            d1,
            d2,
            d11,
            d12,
            d22,
            dtheta,
            h2_normal: OnceLock::new(),
        }
    }

    /// Ring bandwidth of every operator built from at most two stencil applications.
    pub fn bandwidth(&self, grid: &PolarGrid) -> usize {
        [&self.d11, &self.d12, &self.d22]
            .iter()
            .map(|m| BlockBanded::row_block_span(m, grid.ntheta()))
            .max()
            .unwrap_or(0)
    }

    /// Matrix of the discrete H² form, `sum_D D^T W D` over
    /// `D ∈ {I, ∂₁, ∂₂, ∂₁₁, √2 ∂₁₂, ∂₂₂}`.
    pub fn h2_normal(&self, grid: &PolarGrid) -> Result<Arc<BlockBanded<f64>>> {
        if let Some(m) = self.h2_normal.get() {
            return Ok(m.clone());
        }
        let w = grid.volume_weights();
        let w2: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
        let mut m = BlockBanded::zeros(grid.nr(), grid.ntheta(), self.bandwidth(grid));
        m.add_normal_rows(&Csr::identity(grid.len()), w)?;
        m.add_normal_rows(&self.d1, w)?;
        m.add_normal_rows(&self.d2, w)?;
        m.add_normal_rows(&self.d11, w)?;
        m.add_normal_rows(&self.d12, &w2)?;
        m.add_normal_rows(&self.d22, w)?;
        Ok(self.h2_normal.get_or_init(|| Arc::new(m)).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{partial_derivatives, second_derivatives, GridField, C64};

    fn diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn matrices_match_field_stencils() {
        let g = PolarGrid::new(1.0, 2.0, 9, 16).unwrap();
        let u = GridField::from_fn(&g, "u", |x| C64::new((x[0] * x[1]).sin(), x[0].exp() * 0.1));
        let ops = GridOperators::for_grid(&g);
        let (d1, d2) = partial_derivatives(&g, &u);
        assert!(diff(&ops.d1.apply(&u.values), &d1.values) < 1e-12);
        assert!(diff(&ops.d2.apply(&u.values), &d2.values) < 1e-12);
        let s = second_derivatives(&g, &u);
        assert!(diff(&ops.d11.apply(&u.values), &s.d11.values) < 1e-10);
        assert!(diff(&ops.d12.apply(&u.values), &s.d12.values) < 1e-10);
        assert!(diff(&ops.d22.apply(&u.values), &s.d22.values) < 1e-10);
    }

    #[test]
    fn second_order_operators_span_five_rings() {
        let g = PolarGrid::new(1.0, 2.0, 9, 8).unwrap();
        assert_eq!(GridOperators::for_grid(&g).bandwidth(&g), 4);
    }
}
