//! Metric `g`, drift `X`, potential `p` and magnetic potential `a`, plus the
//! operators built from them: the Laplace–Beltrami operator `Δ_g`, the
//! elliptic operator `P u = −Δ_g u + ⟨X, ∇_g u⟩ + p u`, and the magnetic
//! Laplace–Beltrami operator `L`.
//!
//! Coefficients are closed-form callables so that derivative information is
//! available to the oracles. Presets are registered by name.

use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::grid::{partial_derivatives, GridField, Point, PolarGrid, C64};

pub type Mat2 = Matrix2<f64>;

type MatFn = Arc<dyn Fn(Point) -> Mat2 + Send + Sync>;
type MatPartialsFn = Arc<dyn Fn(Point) -> [Mat2; 2] + Send + Sync>;

const I: C64 = C64::new(0.0, 1.0);

pub const METRIC_PRESETS: &[&str] = &["identity", "anisotropic", "bump"];
pub const COEFFICIENT_PRESETS: &[&str] = &["zero", "complex-drift", "potential"];
pub const MAGNETIC_PRESETS: &[&str] = &["zero", "constant", "smooth"];

fn unknown(name: &str, known: &[&str]) -> Error {
    Error::UnknownPreset {
        name: name.to_string(),
        known: known.join(", "),
    }
}

/// Symmetric, uniformly elliptic metric `g_{kℓ}(x)`.
#[derive(Clone)]
pub struct MetricField {
    name: String,
    value: MatFn,
    partials: Option<MatPartialsFn>,
    rho: f64,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("name", &self.name)
            .field("rho", &self.rho)
            .field("analytic_partials", &self.partials.is_some())
            .finish()
    }
}

impl MetricField {
    pub fn new(
        name: impl Into<String>,
        rho: f64,
        value: impl Fn(Point) -> Mat2 + Send + Sync + 'static,
        partials: Option<MatPartialsFn>,
    ) -> Self {
        Self {
            name: name.into(),
            value: Arc::new(value),
            partials,
            rho,
        }
    }

    pub fn identity() -> Self {
        Self::constant("identity", Mat2::identity(), 1.0)
    }

    pub fn constant(name: impl Into<String>, g: Mat2, rho: f64) -> Self {
        Self::new(
            name,
            rho,
            move |_| g,
            Some(Arc::new(|_| [Mat2::zeros(), Mat2::zeros()])),
        )
    }

    /// `diag(2, 1/2)`.
    pub fn anisotropic() -> Self {
        Self::constant("anisotropic", Mat2::new(2.0, 0.0, 0.0, 0.5), 0.5)
    }

    /// `g = I + 0.3 b(x) S` with `b = sin x₁ cos x₂` and `S = [[1, 1/2], [1/2, −1/2]]`.
    pub fn bump() -> Self {
        let s = Mat2::new(1.0, 0.5, 0.5, -0.5);
        Self::new(
            "bump",
            0.6,
            move |x| Mat2::identity() + s * (0.3 * x[0].sin() * x[1].cos()),
            Some(Arc::new(move |x: Point| {
                [
                    s * (0.3 * x[0].cos() * x[1].cos()),
                    s * (-0.3 * x[0].sin() * x[1].sin()),
                ]
            })),
        )
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(Self::identity()),
            "anisotropic" => Ok(Self::anisotropic()),
            "bump" => Ok(Self::bump()),
            _ => Err(unknown(name, METRIC_PRESETS)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Declared ellipticity constant `ρ`.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn at(&self, x: Point) -> Mat2 {
        (self.value)(x)
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.partials.is_some()
    }

    /// `(∂₁g, ∂₂g)`, analytic when available, else central differences.
    pub fn partials_at(&self, x: Point) -> [Mat2; 2] {
        match &self.partials {
            Some(p) => p(x),
            None => {
                let h = 1e-5;
                let d = |e: Point| {
                    ((self.value)([x[0] + h * e[0], x[1] + h * e[1]])
                        - (self.value)([x[0] - h * e[0], x[1] - h * e[1]]))
                        / (2.0 * h)
                };
                [d([1.0, 0.0]), d([0.0, 1.0])]
            }
        }
    }

    /// Symmetry, ellipticity against `ξ ∈ {e₁, e₂, e₁+e₂}`, and `det g > 0` at every node.
    pub fn check_ellipticity(&self, grid: &PolarGrid) -> Result<()> {
        let probes = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        for k in 0..grid.len() {
            let x = grid.node(k);
            let g = self.at(x);
            if (g[(0, 1)] - g[(1, 0)]).abs() > 1e-14 * g.norm() {
                return Err(Error::InvalidParams(format!(
                    "metric '{}' is not symmetric at {x:?}",
                    self.name
                )));
            }
            for xi in probes {
                let q = g[(0, 0)] * xi[0] * xi[0]
                    + 2.0 * g[(0, 1)] * xi[0] * xi[1]
                    + g[(1, 1)] * xi[1] * xi[1];
                let n2 = xi[0] * xi[0] + xi[1] * xi[1];
                if q < self.rho * n2 {
                    return Err(Error::InvalidParams(format!(
                        "metric '{}' violates the ellipticity bound rho = {} at {x:?}",
                        self.name, self.rho
                    )));
                }
            }
            metric_inverse_det(self, x)?;
        }
        Ok(())
    }

    pub fn sample(&self, grid: &PolarGrid) -> Result<MetricSamples> {
        let mut out = MetricSamples {
            g: Vec::with_capacity(grid.len()),
            ginv: Vec::with_capacity(grid.len()),
            sqrt_det: Vec::with_capacity(grid.len()),
        };
        for k in 0..grid.len() {
            let x = grid.node(k);
            let (ginv, det) = metric_inverse_det(self, x)?;
            out.g.push(self.at(x));
            out.ginv.push(ginv);
            out.sqrt_det.push(det.sqrt());
        }
        Ok(out)
    }
}

/// Nodal values of `g`, `g⁻¹` and `√|g|`.
#[derive(Debug, Clone)]
pub struct MetricSamples {
    pub g: Vec<Mat2>,
    pub ginv: Vec<Mat2>,
    pub sqrt_det: Vec<f64>,
}

/// `(g^{kℓ}, det g)` at `x`.
pub fn metric_inverse_det(g: &MetricField, x: Point) -> Result<(Mat2, f64)> {
    let m = g.at(x);
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::SingularMetric {
            x: x[0],
            y: x[1],
            det,
        });
    }
    let inv = Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det;
    Ok((inv, det))
}

/// `Δ_g u = (1/√|g|) ∂_k(√|g| g^{kℓ} ∂_ℓ u)`; the flux is differentiated numerically.
pub fn laplace_beltrami(grid: &PolarGrid, u: &GridField, g: &MetricField) -> Result<GridField> {
    u.check_on(grid)?;
    let m = g.sample(grid)?;
    let (d1, d2) = partial_derivatives(grid, u);
    let mut f1 = Vec::with_capacity(u.len());
    let mut f2 = Vec::with_capacity(u.len());
    for k in 0..u.len() {
        let a = &m.ginv[k];
        let s = m.sqrt_det[k];
        f1.push((d1[k] * a[(0, 0)] + d2[k] * a[(0, 1)]) * s);
        f2.push((d1[k] * a[(1, 0)] + d2[k] * a[(1, 1)]) * s);
    }
    let (df1, _) = partial_derivatives(grid, &GridField::new("F1", f1));
    let (_, df2) = partial_derivatives(grid, &GridField::new("F2", f2));
    let values = (0..u.len())
        .map(|k| (df1[k] + df2[k]) / m.sqrt_det[k])
        .collect();
    let out = GridField::new(format!("Delta_g {}", u.name), values);
    out.ensure_finite()?;
    Ok(out)
}

type DriftFn = Arc<dyn Fn(Point) -> [C64; 2] + Send + Sync>;
type PotentialFn = Arc<dyn Fn(Point) -> C64 + Send + Sync>;

/// Lower-order coefficients of `P`: drift `X` and potential `p`.
#[derive(Clone)]
pub struct CoefficientSet {
    name: String,
    drift: DriftFn,
    potential: PotentialFn,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet").field("name", &self.name).finish()
    }
}

impl CoefficientSet {
    pub fn new(
        name: impl Into<String>,
        drift: impl Fn(Point) -> [C64; 2] + Send + Sync + 'static,
        potential: impl Fn(Point) -> C64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            drift: Arc::new(drift),
            potential: Arc::new(potential),
        }
    }

    pub fn zero() -> Self {
        Self::new("zero", |_| [C64::new(0.0, 0.0); 2], |_| C64::new(0.0, 0.0))
    }

    pub fn constant(name: impl Into<String>, x: [C64; 2], p: C64) -> Self {
        Self::new(name, move |_| x, move |_| p)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "zero" => Ok(Self::zero()),
            "complex-drift" => Ok(Self::constant(
                "complex-drift",
                [C64::new(1.0, 0.5), C64::new(-0.5, 0.25)],
                C64::new(1.0, 0.0),
            )),
            "potential" => Ok(Self::constant(
                "potential",
                [C64::new(0.0, 0.0); 2],
                C64::new(1.0, 0.0),
            )),
            _ => Err(unknown(name, COEFFICIENT_PRESETS)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn drift_at(&self, x: Point) -> [C64; 2] {
        (self.drift)(x)
    }

    pub fn potential_at(&self, x: Point) -> C64 {
        (self.potential)(x)
    }

    /// `(max |X|, max |p|)` over the grid nodes.
    pub fn sup_bounds(&self, grid: &PolarGrid) -> Result<(f64, f64)> {
        let mut bx: f64 = 0.0;
        let mut bp: f64 = 0.0;
        for k in 0..grid.len() {
            let x = grid.node(k);
            let [x1, x2] = self.drift_at(x);
            bx = bx.max((x1.norm_sqr() + x2.norm_sqr()).sqrt());
            bp = bp.max(self.potential_at(x).norm());
        }
        if !(bx.is_finite() && bp.is_finite()) {
            return Err(Error::NonFinite(format!("coefficients '{}'", self.name)));
        }
        Ok((bx, bp))
    }

    /// Nodal drift and potential.
    pub fn sample(&self, grid: &PolarGrid) -> (Vec<[C64; 2]>, Vec<C64>) {
        let nodes = grid.nodes();
        (
            nodes.iter().map(|&x| self.drift_at(x)).collect(),
            nodes.iter().map(|&x| self.potential_at(x)).collect(),
        )
    }

    /// True if `X` and `p` are real at every node.
    pub fn is_real_on(&self, grid: &PolarGrid) -> bool {
        (0..grid.len()).all(|k| {
            let x = grid.node(k);
            let [a, b] = self.drift_at(x);
            a.im == 0.0 && b.im == 0.0 && self.potential_at(x).im == 0.0
        })
    }
}

/// `P u = −Δ_g u + X^k ∂_k u + p u`.
///
/// `⟨X, ∇_g u⟩ = g_{kℓ} X^k g^{ℓm} ∂_m u = X^k ∂_k u`, so the drift term needs
/// no metric factors.
pub fn apply_p(
    grid: &PolarGrid,
    u: &GridField,
    g: &MetricField,
    coeffs: &CoefficientSet,
) -> Result<GridField> {
    let lap = laplace_beltrami(grid, u, g)?;
    let (d1, d2) = partial_derivatives(grid, u);
    let values = (0..u.len())
        .map(|k| {
            let x = grid.node(k);
            let [x1, x2] = coeffs.drift_at(x);
            -lap[k] + x1 * d1[k] + x2 * d2[k] + coeffs.potential_at(x) * u[k]
        })
        .collect();
    let out = GridField::new(format!("P {}", u.name), values);
    out.ensure_finite()?;
    Ok(out)
}

type VecFn = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;
type JacFn = Arc<dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync>;

/// Real magnetic potential `a = (a₁, a₂)` with partials `∂_m a_k` (indexed `[m][k]`).
#[derive(Clone)]
pub struct MagneticPotential {
    name: String,
    value: VecFn,
    partials: JacFn,
}

impl fmt::Debug for MagneticPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MagneticPotential").field("name", &self.name).finish()
    }
}

impl MagneticPotential {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static,
        partials: impl Fn(Point) -> [[f64; 2]; 2] + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            value: Arc::new(value),
            partials: Arc::new(partials),
        }
    }

    pub fn constant(name: impl Into<String>, a: [f64; 2]) -> Self {
        Self::new(name, move |_| a, |_| [[0.0; 2]; 2])
    }

    /// `a = (0.5 sin x₂, 0.3 cos x₁ + 0.2 x₁ x₂)`.
    pub fn smooth() -> Self {
        Self::new(
            "smooth",
            |x| [0.5 * x[1].sin(), 0.3 * x[0].cos() + 0.2 * x[0] * x[1]],
            |x| {
                [
                    [0.0, -0.3 * x[0].sin() + 0.2 * x[1]],
                    [0.5 * x[1].cos(), 0.2 * x[0]],
                ]
            },
        )
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "zero" => Ok(Self::constant("zero", [0.0, 0.0])),
            "constant" => Ok(Self::constant("constant", [0.7, -0.4])),
            "smooth" => Ok(Self::smooth()),
            _ => Err(unknown(name, MAGNETIC_PRESETS)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn at(&self, x: Point) -> [f64; 2] {
        (self.value)(x)
    }

    pub fn partials_at(&self, x: Point) -> [[f64; 2]; 2] {
        (self.partials)(x)
    }
}

/// Rewrites `−L` in the form `P`:
/// `X^ℓ = −2i g^{kℓ} a_k` and
/// `p = −(i/√|g|) ∂_k(√|g| g^{kℓ} a_ℓ) + g^{kℓ} a_k a_ℓ`.
pub fn magnetic_to_drift(a: &MagneticPotential, g: &MetricField) -> CoefficientSet {
    let (a_x, a_p, g_x, g_p) = (a.clone(), a.clone(), g.clone(), g.clone());
    CoefficientSet::new(
        format!("magnetic({}, {})", a.name, g.name),
        move |x| {
            let (ginv, _) = metric_inverse_det(&g_x, x).expect("metric validated by caller");
            let av = a_x.at(x);
            let mut out = [C64::new(0.0, 0.0); 2];
            for (l, o) in out.iter_mut().enumerate() {
                let s = ginv[(0, l)] * av[0] + ginv[(1, l)] * av[1];
                *o = -2.0 * I * s;
            }
            out
        },
        move |x| {
            let (ginv, det) = metric_inverse_det(&g_p, x).expect("metric validated by caller");
            let sq = det.sqrt();
            let dg = g_p.partials_at(x);
            let av = a_p.at(x);
            let da = a_p.partials_at(x);
            // ∂_k(√|g| g^{kℓ} a_ℓ)
            let mut div = 0.0;
            for k in 0..2 {
                let dginv = -(ginv * dg[k] * ginv);
                let dsq = 0.5 * sq * (ginv * dg[k]).trace();
                for l in 0..2 {
                    let flux_deriv = dsq * ginv[(k, l)] + sq * dginv[(k, l)];
                    div += flux_deriv * av[l] + sq * ginv[(k, l)] * da[k][l];
                }
            }
            let quad = (0..2)
                .flat_map(|k| (0..2).map(move |l| (k, l)))
                .map(|(k, l)| ginv[(k, l)] * av[k] * av[l])
                .sum::<f64>();
            -I * (div / sq) + quad
        },
    )
}

/// `L u = (1/√|g|)(∂_k + i a_k) √|g| g^{kℓ} (∂_ℓ + i a_ℓ) u`, evaluated in
/// its literal product form.
pub fn apply_magnetic(
    grid: &PolarGrid,
    u: &GridField,
    g: &MetricField,
    a: &MagneticPotential,
) -> Result<GridField> {
    u.check_on(grid)?;
    let m = g.sample(grid)?;
    let nodes = grid.nodes();
    let av: Vec<[f64; 2]> = nodes.iter().map(|&x| a.at(x)).collect();
    let (d1, d2) = partial_derivatives(grid, u);
    let mut f1 = Vec::with_capacity(u.len());
    let mut f2 = Vec::with_capacity(u.len());
    for k in 0..u.len() {
        let w1 = d1[k] + I * av[k][0] * u[k];
        let w2 = d2[k] + I * av[k][1] * u[k];
        let gi = &m.ginv[k];
        let s = m.sqrt_det[k];
        f1.push((w1 * gi[(0, 0)] + w2 * gi[(0, 1)]) * s);
        f2.push((w1 * gi[(1, 0)] + w2 * gi[(1, 1)]) * s);
    }
    let (df1, _) = partial_derivatives(grid, &GridField::new("F1", f1.clone()));
    let (_, df2) = partial_derivatives(grid, &GridField::new("F2", f2.clone()));
    let values = (0..u.len())
        .map(|k| (df1[k] + df2[k] + I * (av[k][0] * f1[k] + av[k][1] * f2[k])) / m.sqrt_det[k])
        .collect();
    Ok(GridField::new(format!("L {}", u.name), values))
}
