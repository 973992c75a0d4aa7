//! Base weight `ψ` and the Carleman factors `φ = e^{γψ}`, `σ = sγφ`.
//!
//! A valid base weight is positive in `D`, vanishes on the inner circle `S`,
//! and has a gradient bounded away from zero on `D̄`. The weights `e^{2sφ}`
//! overflow `f64` at modest parameters, so weighted quantities are carried as
//! [`LogScaled`] values sharing the offset `2s max φ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{BoundaryTag, Point, PolarGrid};

pub const WEIGHT_PRESETS: &[&str] = &["quadratic", "radial-linear", "custom"];

/// Largest admissible `γψ` before exponentiation.
pub const MAX_GAMMA_PSI: f64 = 700.0;

/// Tolerance for `ψ = 0` on the inner circle.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
enum WeightKind {
    /// `|x|² − r0²`
    Quadratic { r0: f64 },
    /// `|x| − r0`
    RadialLinear { r0: f64 },
    Custom(Expr),
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseWeight {
    name: String,
    kind: WeightKind,
    delta: f64,
}

impl BaseWeight {
    /// `ψ = |x|² − r0²`, `∇ψ = 2x`, `δ = 2 r0`.
    pub fn quadratic(r0: f64) -> Self {
        Self {
            name: "quadratic".into(),
            kind: WeightKind::Quadratic { r0 },
            delta: 2.0 * r0,
        }
    }

    /// `ψ = |x| − r0`, `δ = 1`.
    pub fn radial_linear(r0: f64) -> Self {
        Self {
            name: "radial-linear".into(),
            kind: WeightKind::RadialLinear { r0 },
            delta: 1.0,
        }
    }

    /// User expression with a declared gradient floor `δ`.
    pub fn custom(expr: &str, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidParams(format!(
                "declared gradient floor must be positive, got {delta}"
            )));
        }
        Ok(Self {
            name: format!("custom({expr})"),
            kind: WeightKind::Custom(Expr::parse(expr)?),
            delta,
        })
    }

    /// Constant weight; never valid, used as a degenerate test double.
    pub fn constant(c: f64) -> Self {
        Self {
            name: format!("constant({c})"),
            kind: WeightKind::Constant(c),
            delta: 0.0,
        }
    }

    pub fn preset(name: &str, r0: f64, expr: Option<&str>, delta: Option<f64>) -> Result<Self> {
        match name {
            "quadratic" => Ok(Self::quadratic(r0)),
            "radial-linear" => Ok(Self::radial_linear(r0)),
            "custom" => {
                let expr = expr.ok_or_else(|| {
                    Error::InvalidParams("custom weight needs an expression".into())
                })?;
                Self::custom(expr, delta.unwrap_or(1e-6))
            }
            _ => Err(Error::UnknownPreset {
                name: name.into(),
                known: WEIGHT_PRESETS.join(", "),
            }),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Declared `δ`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn value(&self, x: Point) -> f64 {
        match &self.kind {
            WeightKind::Quadratic { r0 } => x[0] * x[0] + x[1] * x[1] - r0 * r0,
            WeightKind::RadialLinear { r0 } => x[0].hypot(x[1]) - r0,
            WeightKind::Custom(e) => e.eval(x),
            WeightKind::Constant(c) => *c,
        }
    }

    pub fn gradient(&self, x: Point) -> [f64; 2] {
        match &self.kind {
            WeightKind::Quadratic { .. } => [2.0 * x[0], 2.0 * x[1]],
            WeightKind::RadialLinear { .. } => {
                let r = x[0].hypot(x[1]);
                [x[0] / r, x[1] / r]
            }
            WeightKind::Custom(e) => e.eval_dual(x).d,
            WeightKind::Constant(_) => [0.0, 0.0],
        }
    }

    /// Nodal values. Radial presets are evaluated from the exact ring radius so
    /// that `ψ` vanishes exactly on the inner circle.
    pub fn sample(&self, grid: &PolarGrid) -> Vec<f64> {
        (0..grid.len())
            .map(|k| {
                let r = grid.radius(grid.ring_of(k).0);
                match &self.kind {
                    WeightKind::Quadratic { r0 } => (r - r0) * (r + r0),
                    WeightKind::RadialLinear { r0 } => r - r0,
                    _ => self.value(grid.node(k)),
                }
            })
            .collect()
    }
}

/// Outcome of checking the three weight conditions on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub weight: String,
    pub min_interior_psi: f64,
    pub max_inner_abs_psi: f64,
    pub min_grad_norm: f64,
    pub declared_delta: f64,
    pub positive_in_domain: bool,
    pub vanishes_on_inner: bool,
    pub gradient_bounded_below: bool,
    pub pass: bool,
}

/// Checks `ψ > 0` off the inner circle, `|ψ| ≤ 1e−12` on it, and
/// `min |∇ψ| ≥ δ − 1e−12` with `min |∇ψ| > 0`.
pub fn validate_weight(psi: &BaseWeight, grid: &PolarGrid) -> ValidationReport {
    let values = psi.sample(grid);
    let inner = grid.ring(BoundaryTag::Inner);
    let mut min_interior = f64::INFINITY;
    let mut max_inner: f64 = 0.0;
    let mut min_grad = f64::INFINITY;
    for (k, &v) in values.iter().enumerate() {
        if grid.ring_of(k).0 == inner {
            max_inner = max_inner.max(if v.is_finite() { v.abs() } else { f64::INFINITY });
        } else {
            min_interior = min_interior.min(if v.is_finite() { v } else { f64::NEG_INFINITY });
        }
        let [a, b] = psi.gradient(grid.node(k));
        let n = a.hypot(b);
        min_grad = min_grad.min(if n.is_finite() { n } else { 0.0 });
    }
    let positive_in_domain = min_interior > 0.0;
    let vanishes_on_inner = max_inner <= BOUNDARY_TOL;
    let gradient_bounded_below = min_grad > 0.0 && min_grad >= psi.delta() - 1e-12;
    ValidationReport {
        weight: psi.name().to_string(),
        min_interior_psi: min_interior,
        max_inner_abs_psi: max_inner,
        min_grad_norm: min_grad,
        declared_delta: psi.delta(),
        positive_in_domain,
        vanishes_on_inner,
        gradient_bounded_below,
        pass: positive_in_domain && vanishes_on_inner && gradient_bounded_below,
    }
}

/// Large parameters `(γ, s)` of the Carleman weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlemanParams {
    pub gamma: f64,
    pub s: f64,
}

impl CarlemanParams {
    pub fn new(gamma: f64, s: f64) -> Result<Self> {
        if !(gamma.is_finite() && s.is_finite()) || gamma < 1.0 || s < 1.0 {
            return Err(Error::InvalidParams(format!(
                "Carleman parameters must be finite and >= 1, got gamma = {gamma}, s = {s}"
            )));
        }
        Ok(Self { gamma, s })
    }
}

fn factors_from_psi(psi: f64, params: CarlemanParams) -> Result<(f64, f64)> {
    let e = params.gamma * psi;
    if !(e <= MAX_GAMMA_PSI) {
        return Err(Error::InvalidParams(format!(
            "gamma * psi = {e} exceeds {MAX_GAMMA_PSI}"
        )));
    }
    let phi = e.exp();
    Ok((phi, params.s * params.gamma * phi))
}

/// `(φ, σ) = (e^{γψ(x)}, sγφ)`.
pub fn carleman_factors(psi: &BaseWeight, params: CarlemanParams, x: Point) -> Result<(f64, f64)> {
    factors_from_psi(psi.value(x), params)
}

/// A nonnegative quantity stored as `mantissa · e^{log_offset}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogScaled {
    pub log_offset: f64,
    pub mantissa: f64,
}

impl LogScaled {
    pub fn new(log_offset: f64, mantissa: f64) -> Self {
        Self {
            log_offset,
            mantissa,
        }
    }

    pub fn zero(log_offset: f64) -> Self {
        Self::new(log_offset, 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == 0.0
    }

    /// Sum of two values with the same offset.
    pub fn add(self, other: LogScaled) -> Result<LogScaled> {
        if self.log_offset != other.log_offset {
            return Err(Error::InvalidParams(format!(
                "offset mismatch: {} vs {}",
                self.log_offset, other.log_offset
            )));
        }
        Ok(Self::new(self.log_offset, self.mantissa + other.mantissa))
    }

    pub fn scale(self, factor: f64) -> LogScaled {
        Self::new(self.log_offset, self.mantissa * factor)
    }

    /// `self / other`; offset-free when the offsets agree.
    pub fn ratio(&self, other: &LogScaled) -> f64 {
        let r = self.mantissa / other.mantissa;
        if self.log_offset == other.log_offset {
            r
        } else {
            r * (self.log_offset - other.log_offset).exp()
        }
    }

    /// Plain value; overflows to infinity for large offsets.
    pub fn value(&self) -> f64 {
        self.mantissa * self.log_offset.exp()
    }

    pub fn log10(&self) -> f64 {
        (self.log_offset + self.mantissa.ln()) / std::f64::consts::LN_10
    }
}

/// `e^{2sφ}` on the grid as a common offset `2s φ_max` and nodal mantissas
/// `e^{2s(φ − φ_max)} ∈ (0, 1]`, together with `φ` and `σ`.
#[derive(Debug, Clone)]
pub struct WeightField {
    pub params: CarlemanParams,
    pub log_offset: f64,
    pub mantissa: Vec<f64>,
    pub phi: Vec<f64>,
    pub sigma: Vec<f64>,
}

pub fn stabilized_weight(psi: &BaseWeight, params: CarlemanParams, grid: &PolarGrid) -> Result<WeightField> {
    let mut phi = Vec::with_capacity(grid.len());
    let mut sigma = Vec::with_capacity(grid.len());
    for v in psi.sample(grid) {
        let (p, s) = factors_from_psi(v, params)?;
        phi.push(p);
        sigma.push(s);
    }
    let phi_max = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let two_s = 2.0 * params.s;
    let mantissa = phi.iter().map(|p| (two_s * (p - phi_max)).exp()).collect();
    Ok(WeightField {
        params,
        log_offset: two_s * phi_max,
        mantissa,
        phi,
        sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn annulus() -> PolarGrid {
        PolarGrid::new(1.0, 2.0, 17, 32).unwrap()
    }

    #[test]
    fn quadratic_values() {
        let w = BaseWeight::quadratic(1.0);
        assert_eq!(w.value([1.0, 0.0]), 0.0);
        assert_eq!(w.value([2.0, 0.0]), 3.0);
        let [a, b] = w.gradient([2.0, 0.0]);
        assert_eq!(a.hypot(b), 4.0);
    }

    #[test]
    fn quadratic_preset_validates() {
        let r = validate_weight(&BaseWeight::quadratic(1.0), &annulus());
        assert!(r.pass, "{r:?}");
        assert!(r.max_inner_abs_psi <= 1e-12);
        assert!((r.min_grad_norm - 2.0).abs() < 1e-10);
    }

    #[test]
    fn radial_linear_validates_with_unit_delta() {
        let r = validate_weight(&BaseWeight::radial_linear(1.0), &annulus());
        assert!(r.pass, "{r:?}");
        assert!((r.min_grad_norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_controls_fail() {
        let g = annulus();
        let r = validate_weight(&BaseWeight::custom("sin(x1)", 1e-6).unwrap(), &g);
        assert!(!r.pass);
        assert!(!r.vanishes_on_inner && !r.positive_in_domain);
        assert!(r.min_grad_norm < 0.1);
        assert!(!validate_weight(&BaseWeight::constant(0.5), &g).pass);
    }

    #[test]
    fn custom_expression_matches_preset() {
        let g = annulus();
        let r = validate_weight(&BaseWeight::custom("|x|^2 - 1", 2.0).unwrap(), &g);
        assert!(r.positive_in_domain && r.gradient_bounded_below);
        // Evaluated from Cartesian coordinates, so only round-off on S.
        assert!(r.max_inner_abs_psi < 1e-14);
    }

    #[test]
    fn factors() {
        let w = BaseWeight::quadratic(1.0);
        let (phi, sigma) = carleman_factors(&w, CarlemanParams::new(3.0, 2.0).unwrap(), [1.0, 0.0]).unwrap();
        assert_eq!((phi, sigma), (1.0, 6.0));
        let c = BaseWeight::constant(1.0);
        let (phi, sigma) = carleman_factors(&c, CarlemanParams::new(1.0, 1.0).unwrap(), [0.0, 0.0]).unwrap();
        assert_eq!((phi, sigma), (std::f64::consts::E, std::f64::consts::E));
        let c = BaseWeight::constant(3.0);
        let (phi, sigma) = carleman_factors(&c, CarlemanParams::new(2.0, 5.0).unwrap(), [0.0, 0.0]).unwrap();
        // e^6 = 403.428793492735122608...
        assert!((phi - 403.428_793_492_735_1).abs() < 1e-12);
        assert!((sigma - 4034.287_934_927_351).abs() < 1e-10);
    }

    #[test]
    fn overflow_guard() {
        let c = BaseWeight::constant(400.0);
        assert!(carleman_factors(&c, CarlemanParams::new(2.0, 1.0).unwrap(), [0.0, 0.0]).is_err());
        assert!(CarlemanParams::new(0.5, 2.0).is_err());
        assert!(CarlemanParams::new(2.0, f64::NAN).is_err());
    }

    #[test]
    fn phi_is_one_on_inner_circle() {
        let g = annulus();
        let f = stabilized_weight(&BaseWeight::quadratic(1.0), CarlemanParams::new(2.0, 3.0).unwrap(), &g).unwrap();
        for k in g.boundary_nodes(BoundaryTag::Inner) {
            assert_eq!(f.phi[k], 1.0);
        }
    }

    #[test]
    fn stabilized_mantissas() {
        let g = annulus();
        let f = stabilized_weight(&BaseWeight::quadratic(1.0), CarlemanParams::new(2.0, 500.0).unwrap(), &g).unwrap();
        assert!(f.mantissa.iter().all(|m| m.is_finite() && *m >= 0.0 && *m <= 1.0));
        assert_eq!(f.mantissa.iter().copied().fold(0.0, f64::max), 1.0);

        let f = stabilized_weight(&BaseWeight::constant(0.3), CarlemanParams::new(2.0, 50.0).unwrap(), &g).unwrap();
        assert!(f.mantissa.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn phi_increases_along_rays_and_sigma_is_linear_in_s() {
        let g = annulus();
        let w = BaseWeight::quadratic(1.0);
        let a = stabilized_weight(&w, CarlemanParams::new(2.0, 3.0).unwrap(), &g).unwrap();
        let b = stabilized_weight(&w, CarlemanParams::new(2.0, 12.0).unwrap(), &g).unwrap();
        for j in 0..g.ntheta() {
            for i in 1..g.nr() {
                assert!(a.phi[g.index(i, j)] > a.phi[g.index(i - 1, j)]);
            }
        }
        for k in 0..g.len() {
            assert_eq!(b.sigma[k] / a.sigma[k], 4.0);
        }
    }

    #[test]
    fn log_scaled_ratio_matches_plain_arithmetic_at_small_s() {
        let g = annulus();
        let w = BaseWeight::quadratic(1.0);
        let params = CarlemanParams::new(1.0, 2.0).unwrap();
        let f = stabilized_weight(&w, params, &g).unwrap();
        let a: Vec<f64> = g.nodes().iter().map(|x| 1.0 + x[0] * x[0]).collect();
        let b: Vec<f64> = g.nodes().iter().map(|x| 2.0 + x[1].sin()).collect();
        let scaled = |v: &[f64]| {
            let m: Vec<f64> = v.iter().zip(&f.mantissa).map(|(x, m)| x * m).collect();
            LogScaled::new(f.log_offset, g.integrate_volume(&m).unwrap())
        };
        let plain = |v: &[f64]| {
            let m: Vec<f64> = v.iter().zip(&f.phi).map(|(x, p)| x * (2.0 * params.s * p).exp()).collect();
            g.integrate_volume(&m).unwrap()
        };
        let r1 = scaled(&a).ratio(&scaled(&b));
        let r2 = plain(&a) / plain(&b);
        assert!((r1 - r2).abs() <= 1e-12 * r2);
        assert!((scaled(&a).value() - plain(&a)).abs() <= 1e-10 * plain(&a));
    }

    #[test]
    fn log_scaled_arithmetic() {
        let a = LogScaled::new(1000.0, 2.0);
        let b = LogScaled::new(1000.0, 0.5);
        assert_eq!(a.ratio(&b), 4.0);
        assert_eq!(a.add(b).unwrap().mantissa, 2.5);
        assert!(a.add(LogScaled::new(3.0, 1.0)).is_err());
        assert!((a.log10() - (1000.0 + 2f64.ln()) / std::f64::consts::LN_10).abs() < 1e-12);
        assert!(a.value().is_infinite());
        assert!((LogScaled::new(2.0, 1.0).ratio(&LogScaled::new(1.0, 1.0)) - std::f64::consts::E).abs() < 1e-15);
    }
}
