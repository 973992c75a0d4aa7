//! Metric gradients, boundary derivatives, the Cauchy functional `C(u)`, the
//! discrete `H²` norm and the spectral interpolation norm `H^η`.
//!
//! Volume integrals use `dV_g = √|g| dx`, boundary integrals `dS_g = √|g| dS`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{apply_p, CoefficientSet, MetricField, MetricSamples};
use crate::grid::{
    angular_derivative, partial_derivatives, second_derivatives, BoundaryTag, GridField, PolarGrid,
    C64,
};
use crate::operators::GridOperators;

/// Round-off allowance in the tangential identity, relative to `|∇_g u|²`.
pub const TANGENTIAL_TOL: f64 = 1e-12;

fn metric_grad_sq_at(ginv: &nalgebra::Matrix2<f64>, d1: C64, d2: C64) -> f64 {
    let v = ginv[(0, 0)] * d1.norm_sqr()
        + ginv[(1, 1)] * d2.norm_sqr()
        + 2.0 * ginv[(0, 1)] * (d1 * d2.conj()).re;
    v.max(0.0)
}

/// `|∇_g u|² = g^{kℓ} ∂_k u conj(∂_ℓ u)` at every node.
pub fn metric_gradient_sq(grid: &PolarGrid, u: &GridField, g: &MetricField) -> Result<Vec<f64>> {
    u.check_on(grid)?;
    let m = g.sample(grid)?;
    let (d1, d2) = partial_derivatives(grid, u);
    Ok((0..u.len())
        .map(|k| metric_grad_sq_at(&m.ginv[k], d1[k], d2[k]))
        .collect())
}

/// Boundary quantities of one field on one circle, sharing a single set of
/// derivative evaluations.
#[derive(Debug, Clone)]
pub struct BoundaryDerivatives {
    pub tag: BoundaryTag,
    pub trace: Vec<C64>,
    /// `∂_{ν_g} u`.
    pub normal: Vec<C64>,
    /// `|∇_g u|²_g`.
    pub grad_sq: Vec<f64>,
    /// `√|g|` at the boundary nodes.
    pub sqrt_det: Vec<f64>,
    /// `|∇_{τ_g} u|²_g` by the subtraction identity.
    pub tangential_sq: Vec<f64>,
    /// `|∂_t u|² / g(t, t)` with `t` the Euclidean unit tangent.
    pub tangential_intrinsic_sq: Vec<f64>,
}

/// Covariant unit normal of `D` on the circle, `ν = ±(cosθ, sinθ)`.
fn outward(grid: &PolarGrid, tag: BoundaryTag, j: usize) -> [f64; 2] {
    let s = match tag {
        BoundaryTag::Inner => -1.0,
        BoundaryTag::Outer => 1.0,
    };
    [s * grid.cos_theta()[j], s * grid.sin_theta()[j]]
}

/// Coefficients `ν_g^k = g^{kℓ} ν_ℓ / √(g^{αβ} ν_α ν_β)` at boundary node `j`.
pub(crate) fn metric_normal(ginv: &nalgebra::Matrix2<f64>, nu: [f64; 2]) -> [f64; 2] {
    let a = ginv[(0, 0)] * nu[0] + ginv[(0, 1)] * nu[1];
    let b = ginv[(1, 0)] * nu[0] + ginv[(1, 1)] * nu[1];
    let len = (a * nu[0] + b * nu[1]).sqrt();
    [a / len, b / len]
}

pub fn boundary_derivatives(
    grid: &PolarGrid,
    u: &GridField,
    g: &MetricField,
    tag: BoundaryTag,
) -> Result<BoundaryDerivatives> {
    u.check_on(grid)?;
    let m = g.sample(grid)?;
    boundary_derivatives_with(grid, u, &m, tag)
}

pub(crate) fn boundary_derivatives_with(
    grid: &PolarGrid,
    u: &GridField,
    m: &MetricSamples,
    tag: BoundaryTag,
) -> Result<BoundaryDerivatives> {
    let (d1, d2) = partial_derivatives(grid, u);
    let dtheta = angular_derivative(grid, &u.values);
    let r = grid.boundary_radius(tag);
    let nodes = grid.boundary_nodes(tag);
    let n = nodes.len();
    let mut out = BoundaryDerivatives {
        tag,
        trace: Vec::with_capacity(n),
        normal: Vec::with_capacity(n),
        grad_sq: Vec::with_capacity(n),
        sqrt_det: Vec::with_capacity(n),
        tangential_sq: Vec::with_capacity(n),
        tangential_intrinsic_sq: Vec::with_capacity(n),
    };
    for (j, &k) in nodes.iter().enumerate() {
        let ginv = &m.ginv[k];
        let nu_g = metric_normal(ginv, outward(grid, tag, j));
        let dn = d1[k] * nu_g[0] + d2[k] * nu_g[1];
        let grad = metric_grad_sq_at(ginv, d1[k], d2[k]);
        let diff = grad - dn.norm_sqr();
        let tangential = if diff >= 0.0 {
            diff
        } else if -diff <= TANGENTIAL_TOL * grad.max(1.0) {
            0.0
        } else {
            return Err(Error::NegativeTangentialEnergy { node: k, value: diff });
        };
        let t = [-grid.sin_theta()[j], grid.cos_theta()[j]];
        let gtt = {
            let gm = &m.g[k];
            gm[(0, 0)] * t[0] * t[0] + 2.0 * gm[(0, 1)] * t[0] * t[1] + gm[(1, 1)] * t[1] * t[1]
        };
        out.trace.push(u[k]);
        out.normal.push(dn);
        out.grad_sq.push(grad);
        out.sqrt_det.push(m.sqrt_det[k]);
        out.tangential_sq.push(tangential);
        out.tangential_intrinsic_sq.push((dtheta[k] / r).norm_sqr() / gtt);
    }
    Ok(out)
}

/// `∂_{ν_g} u` at the nodes of one boundary circle.
pub fn normal_derivative(
    grid: &PolarGrid,
    u: &GridField,
    g: &MetricField,
    tag: BoundaryTag,
) -> Result<Vec<C64>> {
    Ok(boundary_derivatives(grid, u, g, tag)?.normal)
}

/// `|∇_{τ_g} u|²_g = |∇_g u|²_g − |∂_{ν_g} u|²` on one boundary circle. Small
/// negative round-off is clamped to zero; anything larger is an error.
pub fn tangential_gradient_sq(
    grid: &PolarGrid,
    u: &GridField,
    g: &MetricField,
    tag: BoundaryTag,
) -> Result<Vec<f64>> {
    Ok(boundary_derivatives(grid, u, g, tag)?.tangential_sq)
}

/// The three components of `C(u)` and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyNorm {
    /// `‖Pu‖_{L²(D)}`
    pub operator: f64,
    /// `‖u‖_{H¹(Γ)}`
    pub trace: f64,
    /// `‖∂_{ν_g} u‖_{L²(Γ)}`
    pub normal: f64,
    pub total: f64,
}

/// `‖w‖²_{H¹(Γ)}` and `‖∂_ν w‖²_{L²(Γ)}` from boundary derivatives.
pub(crate) fn boundary_energies(grid: &PolarGrid, b: &BoundaryDerivatives) -> Result<(f64, f64)> {
    let h1: Vec<f64> = (0..b.trace.len())
        .map(|j| (b.tangential_sq[j] + b.trace[j].norm_sqr()) * b.sqrt_det[j])
        .collect();
    let nn: Vec<f64> = (0..b.trace.len())
        .map(|j| b.normal[j].norm_sqr() * b.sqrt_det[j])
        .collect();
    Ok((grid.integrate_boundary(b.tag, &h1)?, grid.integrate_boundary(b.tag, &nn)?))
}

/// `C(u) = ‖Pu‖_{L²(D)} + ‖u‖_{H¹(Γ)} + ‖∂_{ν_g} u‖_{L²(Γ)}`.
pub fn cauchy_norm(
    grid: &PolarGrid,
    u: &GridField,
    g: &MetricField,
    coeffs: &CoefficientSet,
) -> Result<CauchyNorm> {
    u.check_on(grid)?;
    let m = g.sample(grid)?;
    let pu = apply_p(grid, u, g, coeffs)?;
    let vol: Vec<f64> = (0..u.len()).map(|k| pu[k].norm_sqr() * m.sqrt_det[k]).collect();
    let operator = grid.integrate_volume(&vol)?.sqrt();
    let b = boundary_derivatives_with(grid, u, &m, BoundaryTag::Outer)?;
    let (h1, nn) = boundary_energies(grid, &b)?;
    let (trace, normal) = (h1.sqrt(), nn.sqrt());
    Ok(CauchyNorm {
        operator,
        trace,
        normal,
        total: operator + trace + normal,
    })
}

/// Discrete `H²(D)` norm: `L²` norms of `u`, its first partials and its
/// Hessian (Frobenius, so the mixed partial counts twice), against `dx`.
pub fn h2_norm(grid: &PolarGrid, u: &GridField) -> Result<f64> {
    u.check_on(grid)?;
    let (d1, d2) = partial_derivatives(grid, u);
    let s = second_derivatives(grid, u);
    let integrand: Vec<f64> = (0..u.len())
        .map(|k| {
            u[k].norm_sqr()
                + d1[k].norm_sqr()
                + d2[k].norm_sqr()
                + s.d11[k].norm_sqr()
                + 2.0 * s.d12[k].norm_sqr()
                + s.d22[k].norm_sqr()
        })
        .collect();
    Ok(grid.integrate_volume(&integrand)?.sqrt())
}

/// Discrete `H¹(D)` norm against `dx`.
pub fn h1_norm(grid: &PolarGrid, u: &GridField) -> Result<f64> {
    u.check_on(grid)?;
    let (d1, d2) = partial_derivatives(grid, u);
    let integrand: Vec<f64> = (0..u.len())
        .map(|k| u[k].norm_sqr() + d1[k].norm_sqr() + d2[k].norm_sqr())
        .collect();
    Ok(grid.integrate_volume(&integrand)?.sqrt())
}

/// Generalized eigenpairs of the discrete `H²` form against the `L²` Gram
/// form `W = diag(volume weights)`.
///
/// With `B = W^{-1/2} N W^{-1/2} = V Λ Vᵀ`, the eigenfields are
/// `e_j = W^{-1/2} v_j` and the coefficients of `u` are `c = Vᵀ W^{1/2} u`.
#[derive(Debug)]
pub struct SpectralPair {
    lambdas: Vec<f64>,
    vectors: DMatrix<f64>,
    sqrt_w: Vec<f64>,
}

impl SpectralPair {
    /// Largest grid for which the dense eigensolve is attempted.
    pub const MAX_NODES: usize = 8320;

    /// Cached per grid; the first caller pays for the eigensolve.
    pub fn for_grid(grid: &PolarGrid) -> Result<Arc<SpectralPair>> {
        if let Some(s) = grid.spectral_cache().get() {
            return Ok(s.clone());
        }
        if grid.len() > Self::MAX_NODES {
            return Err(Error::InvalidParams(format!(
                "spectral norm needs a dense eigensolve; grid has {} nodes, limit is {}",
                grid.len(),
                Self::MAX_NODES
            )));
        }
        let pair = Self::build(grid)?;
        Ok(grid.spectral_cache().get_or_init(|| Arc::new(pair)).clone())
    }

    fn build(grid: &PolarGrid) -> Result<Self> {
        let ops = GridOperators::for_grid(grid);
        let mut b = ops.h2_normal(grid)?.to_dense();
        let sqrt_w: Vec<f64> = grid.volume_weights().iter().map(|w| w.sqrt()).collect();
        let n = grid.len();
        for c in 0..n {
            for r in 0..n {
                b[(r, c)] /= sqrt_w[r] * sqrt_w[c];
            }
        }
        // Symmetrize away assembly round-off before the eigensolve.
        let b = (&b + b.transpose()) * 0.5;
        let eig = SymmetricEigen::new(b);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let lambdas = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(Self {
            lambdas,
            vectors,
            sqrt_w,
        })
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Ascending generalized eigenvalues.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambdas
    }

    /// `e_j`, orthonormal in the `L²` Gram form.
    pub fn eigenfield(&self, j: usize) -> GridField {
        let v = self.vectors.column(j);
        GridField::new(
            format!("e_{j}"),
            (0..self.len())
                .map(|k| C64::new(v[k] / self.sqrt_w[k], 0.0))
                .collect(),
        )
    }

    /// Coefficients of `u` in the eigenbasis.
    pub fn coefficients(&self, u: &GridField) -> Result<Vec<C64>> {
        if u.len() != self.len() {
            return Err(Error::InvalidParams(format!(
                "field has {} values, spectral basis has {}",
                u.len(),
                self.len()
            )));
        }
        u.ensure_finite()?;
        let re = nalgebra::DVector::from_iterator(
            self.len(),
            (0..self.len()).map(|k| u[k].re * self.sqrt_w[k]),
        );
        let im = nalgebra::DVector::from_iterator(
            self.len(),
            (0..self.len()).map(|k| u[k].im * self.sqrt_w[k]),
        );
        let cr = self.vectors.tr_mul(&re);
        let ci = self.vectors.tr_mul(&im);
        Ok(cr.iter().zip(ci.iter()).map(|(&a, &b)| C64::new(a, b)).collect())
    }

    /// `Σ λ_j^{η/2} |c_j|²` for any `η ≥ 0`, including the endpoint `η = 2`.
    pub fn weighted_sum(&self, coeffs: &[C64], eta: f64) -> f64 {
        coeffs
            .iter()
            .zip(&self.lambdas)
            .map(|(c, &l)| l.powf(0.5 * eta) * c.norm_sqr())
            .sum()
    }
}

pub fn check_eta(eta: f64) -> Result<()> {
    if (0.0..2.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::InvalidEta(eta))
    }
}

/// `‖u‖_{H^η} = (Σ λ_j^{η/2} |c_j|²)^{1/2}`, for `0 ≤ η < 2`.
pub fn sobolev_eta_norm(grid: &PolarGrid, u: &GridField, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    u.check_on(grid)?;
    let sp = SpectralPair::for_grid(grid)?;
    let c = sp.coefficients(u)?;
    Ok(sp.weighted_sum(&c, eta).sqrt())
}
