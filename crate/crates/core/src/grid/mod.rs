//! Annular polar grid: nodes, quadrature, and boundary slices.
//!
//! Nodes are laid out ring by ring: index `i * ntheta + j` is the node at
//! radius `r0 + i * hr` and angle `j * htheta`. Ring `0` is the inner circle
//! `S` and ring `nr - 1` the outer circle `Gamma`.

mod field;
pub(crate) mod stencil;

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::SpectralPair;
use crate::operators::GridOperators;

pub use field::{GridField, C64};
pub use stencil::{
    angular_derivative, partial_derivatives, polar_derivatives, radial_derivative,
    second_derivatives, SecondDerivatives,
};

/// A point of the plane.
pub type Point = [f64; 2];

pub const MIN_RADIAL_NODES: usize = 8;
pub const MIN_ANGULAR_NODES: usize = 8;

/// Boundary component of the annulus `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    /// Inner circle `S = ∂B`.
    Inner,
    /// Outer circle `Gamma = ∂Ω`, where Cauchy data live.
    Outer,
}

/// Nodes of one boundary circle with outward normals and arc weights.
#[derive(Debug, Clone)]
pub struct BoundarySlice {
    pub tag: BoundaryTag,
    pub nodes: Vec<usize>,
    /// Outward unit normal of `D` (`-x/|x|` on the inner circle, `+x/|x|` on the outer).
    pub normals: Vec<Point>,
    pub weights: Vec<f64>,
}

/// Tensor discretization of the annulus `{r0 <= |x| <= r1}`.
#[derive(Clone)]
pub struct PolarGrid {
    r0: f64,
    r1: f64,
    nr: usize,
    ntheta: usize,
    hr: f64,
    htheta: f64,
    radii: Vec<f64>,
    cos_t: Vec<f64>,
    sin_t: Vec<f64>,
    radial_weights: Vec<f64>,
    volume_weights: Vec<f64>,
    angular_stencil: Vec<f64>,
    spectral: Arc<OnceLock<Arc<SpectralPair>>>,
    operators: Arc<OnceLock<Arc<GridOperators>>>,
}

impl fmt::Debug for PolarGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PolarGrid")
            .field("r0", &self.r0)
            .field("r1", &self.r1)
            .field("nr", &self.nr)
            .field("ntheta", &self.ntheta)
            .finish()
    }
}

impl PartialEq for PolarGrid {
    fn eq(&self, other: &Self) -> bool {
        self.r0 == other.r0
            && self.r1 == other.r1
            && self.nr == other.nr
            && self.ntheta == other.ntheta
    }
}

impl PolarGrid {
    /// Builds the grid. Radial quadrature is composite Simpson; when the number
    /// of radial intervals is odd the last three intervals use Simpson's 3/8
    /// rule, which keeps exactness on cubics. Angular quadrature is the periodic
    /// trapezoid rule.
    pub fn new(r0: f64, r1: f64, nr: usize, ntheta: usize) -> Result<Self> {
        if !(r0.is_finite() && r1.is_finite()) || r0 <= 0.0 || r0 >= r1 {
            return Err(Error::InvalidGeometry(format!(
                "radii must satisfy 0 < r0 < r1, got r0 = {r0}, r1 = {r1}"
            )));
        }
        if nr < MIN_RADIAL_NODES {
            return Err(Error::InvalidGeometry(format!(
                "need at least {MIN_RADIAL_NODES} radial nodes, got {nr}"
            )));
        }
        if ntheta < MIN_ANGULAR_NODES || ntheta % 2 != 0 {
            return Err(Error::InvalidGeometry(format!(
                "angular node count must be even and at least {MIN_ANGULAR_NODES}, got {ntheta}"
            )));
        }

        let intervals = nr - 1;
        let hr = (r1 - r0) / intervals as f64;
        let htheta = 2.0 * PI / ntheta as f64;
        let mut radii: Vec<f64> = (0..nr).map(|i| r0 + i as f64 * hr).collect();
        radii[nr - 1] = r1;
        let thetas: Vec<f64> = (0..ntheta).map(|j| j as f64 * htheta).collect();
        let cos_t = thetas.iter().map(|t| t.cos()).collect();
        let sin_t = thetas.iter().map(|t| t.sin()).collect();

        let radial_weights = simpson_weights(intervals, hr);
        let mut volume_weights = Vec::with_capacity(nr * ntheta);
        for i in 0..nr {
            let w = radial_weights[i] * radii[i] * htheta;
            volume_weights.extend(std::iter::repeat_n(w, ntheta));
        }

        Ok(Self {
            r0,
            r1,
            nr,
            ntheta,
            hr,
            htheta,
            radii,
            cos_t,
            sin_t,
            radial_weights,
            volume_weights,
            angular_stencil: stencil::spectral_angular_stencil(ntheta),
            spectral: Arc::new(OnceLock::new()),
            operators: Arc::new(OnceLock::new()),
        })
    }

    /// Same annulus with the mesh width halved in both directions.
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.r0, self.r1, 2 * self.nr - 1, 2 * self.ntheta)
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn r1(&self) -> f64 {
        self.r1
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn ntheta(&self) -> usize {
        self.ntheta
    }

    pub fn hr(&self) -> f64 {
        self.hr
    }

    pub fn htheta(&self) -> f64 {
        self.htheta
    }

    pub fn len(&self) -> usize {
        self.nr * self.ntheta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ntheta + j
    }

    /// `(ring, angle)` of a node index.
    #[inline]
    pub fn ring_of(&self, idx: usize) -> (usize, usize) {
        (idx / self.ntheta, idx % self.ntheta)
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.radii[i]
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.htheta
    }

    pub fn cos_theta(&self) -> &[f64] {
        &self.cos_t
    }

    pub fn sin_theta(&self) -> &[f64] {
        &self.sin_t
    }

    #[inline]
    pub fn node(&self, idx: usize) -> Point {
        let (i, j) = self.ring_of(idx);
        let r = self.radii[i];
        [r * self.cos_t[j], r * self.sin_t[j]]
    }

    pub fn nodes(&self) -> Vec<Point> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    /// Radial Simpson weights (no Jacobian).
    pub fn radial_weights(&self) -> &[f64] {
        &self.radial_weights
    }

    /// Per-node volume weights `w_r(i) * r_i * htheta`.
    pub fn volume_weights(&self) -> &[f64] {
        &self.volume_weights
    }

    pub(crate) fn angular_stencil(&self) -> &[f64] {
        &self.angular_stencil
    }

    pub fn ring(&self, tag: BoundaryTag) -> usize {
        match tag {
            BoundaryTag::Inner => 0,
            BoundaryTag::Outer => self.nr - 1,
        }
    }

    pub fn boundary_radius(&self, tag: BoundaryTag) -> f64 {
        self.radii[self.ring(tag)]
    }

    /// Node indices of a boundary circle, in angular order.
    pub fn boundary_nodes(&self, tag: BoundaryTag) -> Vec<usize> {
        let i = self.ring(tag);
        (0..self.ntheta).map(|j| self.index(i, j)).collect()
    }

    pub fn boundary(&self, tag: BoundaryTag) -> BoundarySlice {
        let r = self.boundary_radius(tag);
        let sign = match tag {
            BoundaryTag::Inner => -1.0,
            BoundaryTag::Outer => 1.0,
        };
        BoundarySlice {
            tag,
            nodes: self.boundary_nodes(tag),
            normals: (0..self.ntheta)
                .map(|j| [sign * self.cos_t[j], sign * self.sin_t[j]])
                .collect(),
            weights: vec![r * self.htheta; self.ntheta],
        }
    }

    /// `∫_D f dx` with the Simpson x trapezoid rule. Summation runs ring by
    /// ring, each ring summed in angular order, so results are reproducible.
    pub fn integrate_volume(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.len() {
            return Err(Error::InvalidParams(format!(
                "field has {} values, grid has {} nodes",
                f.len(),
                self.len()
            )));
        }
        let mut total = 0.0;
        for i in 0..self.nr {
            let row = &f[i * self.ntheta..(i + 1) * self.ntheta];
            let mut ring = 0.0;
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::NonFinite("integrate_volume".into()));
                }
                ring += v;
            }
            total += self.radial_weights[i] * self.radii[i] * ring;
        }
        Ok(total * self.htheta)
    }

    /// `∫ f dS` over one boundary circle; `f` holds one value per boundary node.
    pub fn integrate_boundary(&self, tag: BoundaryTag, f: &[f64]) -> Result<f64> {
        if f.len() != self.ntheta {
            return Err(Error::InvalidParams(format!(
                "boundary field has {} values, circle has {} nodes",
                f.len(),
                self.ntheta
            )));
        }
        let mut total = 0.0;
        for &v in f {
            if !v.is_finite() {
                return Err(Error::NonFinite("integrate_boundary".into()));
            }
            total += v;
        }
        Ok(total * self.boundary_radius(tag) * self.htheta)
    }

    /// Boundary values of a full grid field.
    pub fn trace<T: Copy>(&self, tag: BoundaryTag, values: &[T]) -> Vec<T> {
        let i = self.ring(tag);
        values[i * self.ntheta..(i + 1) * self.ntheta].to_vec()
    }

    pub(crate) fn spectral_cache(&self) -> &OnceLock<Arc<SpectralPair>> {
        &self.spectral
    }

    pub(crate) fn operator_cache(&self) -> &OnceLock<Arc<GridOperators>> {
        &self.operators
    }
}

fn simpson_weights(intervals: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; intervals + 1];
    let simpson_end = if intervals % 2 == 0 {
        intervals
    } else {
        intervals - 3
    };
    for k in (0..simpson_end).step_by(2) {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
    }
    if simpson_end < intervals {
        let k = simpson_end;
        let c = 3.0 * h / 8.0;
        w[k] += c;
        w[k + 1] += 3.0 * c;
        w[k + 2] += 3.0 * c;
        w[k + 3] += c;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(matches!(PolarGrid::new(2.0, 1.0, 9, 16), Err(Error::InvalidGeometry(_))));
        assert!(matches!(PolarGrid::new(0.0, 1.0, 9, 16), Err(Error::InvalidGeometry(_))));
        assert!(matches!(PolarGrid::new(1.0, 2.0, 7, 16), Err(Error::InvalidGeometry(_))));
        assert!(matches!(PolarGrid::new(1.0, 2.0, 9, 15), Err(Error::InvalidGeometry(_))));
        assert!(matches!(PolarGrid::new(1.0, 2.0, 9, 6), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn node_count_and_radii() {
        let g = PolarGrid::new(1.0, 2.0, 65, 128).unwrap();
        assert_eq!(g.len(), 8320);
        for k in 0..g.len() {
            let [x, y] = g.node(k);
            let r = x.hypot(y);
            assert!(r >= 1.0 - 1e-14 && r <= 2.0 + 1e-14);
        }
    }

    #[test]
    fn annulus_area_is_exact() {
        for &(nr, nt) in &[(9, 8), (10, 16), (17, 32), (33, 64), (65, 128), (12, 10)] {
            let g = PolarGrid::new(1.0, 2.0, nr, nt).unwrap();
            let ones = vec![1.0; g.len()];
            let area = g.integrate_volume(&ones).unwrap();
            assert!(rel(area, 3.0 * PI) < 1e-12, "{nr}x{nt}: {area}");
            assert!(g.volume_weights().iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn volume_integral_of_r_squared() {
        for &(nr, nt) in &[(9, 8), (10, 16), (65, 128)] {
            let g = PolarGrid::new(1.0, 2.0, nr, nt).unwrap();
            let f: Vec<f64> = g.nodes().iter().map(|p| p[0] * p[0] + p[1] * p[1]).collect();
            let v = g.integrate_volume(&f).unwrap();
            assert!(rel(v, 7.5 * PI) < 1e-12, "{v}");
        }
    }

    #[test]
    fn zero_integrand() {
        let g = PolarGrid::new(1.0, 2.0, 9, 8).unwrap();
        assert_eq!(g.integrate_volume(&vec![0.0; g.len()]).unwrap(), 0.0);
    }

    #[test]
    fn boundary_circumferences() {
        let g = PolarGrid::new(1.0, 2.0, 17, 32).unwrap();
        let ones = vec![1.0; g.ntheta()];
        assert!(rel(g.integrate_boundary(BoundaryTag::Outer, &ones).unwrap(), 4.0 * PI) < 1e-12);
        assert!(rel(g.integrate_boundary(BoundaryTag::Inner, &ones).unwrap(), 2.0 * PI) < 1e-12);

        let g = PolarGrid::new(0.5, 1.5, 33, 64).unwrap();
        let s: f64 = g.boundary(BoundaryTag::Outer).weights.iter().sum();
        assert!(rel(s, 2.0 * PI * 1.5) < 1e-12);
        let s: f64 = g.boundary(BoundaryTag::Inner).weights.iter().sum();
        assert!(rel(s, 2.0 * PI * 0.5) < 1e-12);
    }

    #[test]
    fn cos_squared_on_outer_circle() {
        let g = PolarGrid::new(1.0, 2.0, 9, 16).unwrap();
        let f: Vec<f64> = (0..g.ntheta()).map(|j| g.theta(j).cos().powi(2)).collect();
        let v = g.integrate_boundary(BoundaryTag::Outer, &f).unwrap();
        assert!(rel(v, 2.0 * PI) < 1e-12);
    }

    #[test]
    fn boundary_normals_point_out_of_the_annulus() {
        let g = PolarGrid::new(1.0, 2.0, 9, 16).unwrap();
        for tag in [BoundaryTag::Inner, BoundaryTag::Outer] {
            let b = g.boundary(tag);
            for (k, n) in b.nodes.iter().zip(&b.normals) {
                assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-15);
                let x = g.node(*k);
                let radial = (n[0] * x[0] + n[1] * x[1]) / x[0].hypot(x[1]);
                let expect = if tag == BoundaryTag::Inner { -1.0 } else { 1.0 };
                assert!((radial - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let g = PolarGrid::new(1.0, 2.0, 9, 8).unwrap();
        let mut f = vec![1.0; g.len()];
        f[3] = f64::NAN;
        assert!(matches!(g.integrate_volume(&f), Err(Error::NonFinite(_))));
    }
}
