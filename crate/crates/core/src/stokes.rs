//! Stokes system with drift, in the plane:
//!
//! ```text
//! −Δu + (a·∇)u + ∇p = 0,    div u = 0
//! ```
//!
//! For `v = (u¹, u², p)` a solution satisfies
//! `Δv = ((a·∇)u + ∇p, −∂_k a^j ∂_j u^k)`, and every component is then
//! treated as a scalar problem with `g = I` and `P = −Δ`.
//!
//! No Stokes solver is built. Inputs come from closed-form solutions
//! ([`manufactured`]) and a seeded family of exact solutions
//! ([`random_states`]).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carleman::{CarlemanIntegrands, CarlemanTerms, STABILITY_FACTOR};
use crate::continuation::{CauchyData, CauchyProblem, CauchySolution};
use crate::error::{Error, Result};
use crate::fields::{CoefficientSet, MetricField};
use crate::grid::{partial_derivatives, second_derivatives, BoundaryTag, GridField, Point, PolarGrid, C64};
use crate::norms::{boundary_derivatives, boundary_energies};
use crate::weight::{stabilized_weight, BaseWeight, CarlemanParams};

pub const MANUFACTURED_PRESETS: [&str; 4] = [
    "poiseuille-like",
    "quadratic-pressure",
    "rotational",
    "exponential-stream",
];

/// Rings closer to `S` or `Γ` than this fraction of the annulus width are
/// left out of interior defect measurements.
pub const INTERIOR_BAND: f64 = 0.125;

/// Tolerance on the pointwise domination inequality.
pub const DOMINATION_TOL: f64 = 1e-8;

/// Velocity and pressure on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesState {
    pub u: [GridField; 2],
    pub p: GridField,
}

impl StokesState {
    pub fn new(u1: GridField, u2: GridField, p: GridField) -> Result<Self> {
        if u1.len() != u2.len() || u1.len() != p.len() {
            return Err(Error::InvalidParams("Stokes components differ in length".into()));
        }
        Ok(Self { u: [u1, u2], p })
    }

    pub fn zeros(grid: &PolarGrid) -> Self {
        Self {
            u: [GridField::zeros(grid, "u1"), GridField::zeros(grid, "u2")],
            p: GridField::zeros(grid, "p"),
        }
    }

    /// `v = (u¹, u², p)`.
    pub fn components(&self) -> [&GridField; 3] {
        [&self.u[0], &self.u[1], &self.p]
    }

    pub fn scaled(&self, alpha: C64) -> Self {
        Self {
            u: [self.u[0].scaled(alpha), self.u[1].scaled(alpha)],
            p: self.p.scaled(alpha),
        }
    }

    fn check_on(&self, grid: &PolarGrid) -> Result<()> {
        for c in self.components() {
            c.check_on(grid)?;
            c.ensure_finite()?;
        }
        Ok(())
    }
}

type VecFn = Arc<dyn Fn(Point) -> [C64; 2] + Send + Sync>;
type JacFn = Arc<dyn Fn(Point) -> [[C64; 2]; 2] + Send + Sync>;

/// Drift `a` with its Jacobian `jac[j][k] = ∂_k a^j`.
#[derive(Clone)]
pub struct DriftCoefficient {
    name: String,
    value: VecFn,
    jac: JacFn,
}

impl fmt::Debug for DriftCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftCoefficient").field("name", &self.name).finish()
    }
}

/// `(max |a|, max |∇a|_F)` over the grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftBounds {
    pub sup_a: f64,
    pub sup_grad_a: f64,
}

impl DriftBounds {
    /// Pointwise, `|(a·∇)u|² ≤ |a|²|∇u|²` and `|∂_k a^j ∂_j u^k|² ≤ |∇a|²|∇u|²`
    /// (Cauchy–Schwarz), so
    /// `|Δv|² ≤ 2|a|²|∇u|² + 2|∇p|² + |∇a|²|∇u|² ≤ max(2A² + G², 2) |∇v|²`.
    pub fn c0(&self) -> f64 {
        1.0 / (2.0 * self.sup_a * self.sup_a + self.sup_grad_a * self.sup_grad_a).max(2.0)
    }
}

impl DriftCoefficient {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(Point) -> [C64; 2] + Send + Sync + 'static,
        jac: impl Fn(Point) -> [[C64; 2]; 2] + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            value: Arc::new(value),
            jac: Arc::new(jac),
        }
    }

    pub fn zero() -> Self {
        Self::constant("zero", [C64::new(0.0, 0.0); 2])
    }

    pub fn constant(name: impl Into<String>, a: [C64; 2]) -> Self {
        Self::new(name, move |_| a, |_| [[C64::new(0.0, 0.0); 2]; 2])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn at(&self, x: Point) -> [C64; 2] {
        (self.value)(x)
    }

    pub fn jacobian_at(&self, x: Point) -> [[C64; 2]; 2] {
        (self.jac)(x)
    }

    pub fn bounds(&self, grid: &PolarGrid) -> Result<DriftBounds> {
        let mut b = DriftBounds {
            sup_a: 0.0,
            sup_grad_a: 0.0,
        };
        for k in 0..grid.len() {
            let x = grid.node(k);
            let a = self.at(x);
            let j = self.jacobian_at(x);
            b.sup_a = b.sup_a.max((a[0].norm_sqr() + a[1].norm_sqr()).sqrt());
            let fro: f64 = j.iter().flatten().map(|z| z.norm_sqr()).sum();
            b.sup_grad_a = b.sup_grad_a.max(fro.sqrt());
        }
        if !(b.sup_a.is_finite() && b.sup_grad_a.is_finite()) {
            return Err(Error::NonFinite(format!("drift '{}'", self.name)));
        }
        Ok(b)
    }
}

type ScalarFn = Arc<dyn Fn(Point) -> C64 + Send + Sync>;

/// A closed-form solution `(u, p)` with its drift.
#[derive(Clone)]
pub struct ManufacturedSolution {
    pub name: String,
    /// How the solution was checked by hand.
    pub note: &'static str,
    pub drift: DriftCoefficient,
    u1: ScalarFn,
    u2: ScalarFn,
    p: ScalarFn,
}

impl fmt::Debug for ManufacturedSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManufacturedSolution")
            .field("name", &self.name)
            .field("drift", &self.drift)
            .finish()
    }
}

impl ManufacturedSolution {
    pub fn state(&self, grid: &PolarGrid) -> StokesState {
        StokesState {
            u: [
                GridField::from_fn(grid, "u1", |x| (self.u1)(x)),
                GridField::from_fn(grid, "u2", |x| (self.u2)(x)),
            ],
            p: GridField::from_fn(grid, "p", |x| (self.p)(x)),
        }
    }
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Registry lookup.
pub fn manufactured(name: &str) -> Result<ManufacturedSolution> {
    let sol = match name {
        "poiseuille-like" => ManufacturedSolution {
            name: name.into(),
            note: "Δu = (1, 0) = ∇p, div u = x₁/2 − x₁/2 = 0, a = 0",
            drift: DriftCoefficient::zero(),
            u1: Arc::new(|x| c((x[0] * x[0] + x[1] * x[1]) / 4.0)),
            u2: Arc::new(|x| c(-x[0] * x[1] / 2.0)),
            p: Arc::new(|x| c(x[0])),
        },
        "quadratic-pressure" => {
            // u = ∇q with q = x₁³ − 3x₁x₂² harmonic; for constant a,
            // (a·∇)u = ∇(a·u), so p = −a·u.
            let a = [C64::new(1.0, 0.5), C64::new(-0.5, 0.25)];
            let u1 = |x: Point| c(3.0 * (x[0] * x[0] - x[1] * x[1]));
            let u2 = |x: Point| c(-6.0 * x[0] * x[1]);
            ManufacturedSolution {
                name: name.into(),
                note: "u = ∇(x₁³ − 3x₁x₂²), Δu = 0, div u = 0, ∇p = −(a·∇)u for constant complex a",
                drift: DriftCoefficient::constant("constant-complex", a),
                u1: Arc::new(u1),
                u2: Arc::new(u2),
                p: Arc::new(move |x| -(a[0] * u1(x) + a[1] * u2(x))),
            }
        }
        "rotational" => {
            // a = (∂₂f, −∂₁f) with f = sin x₁ cos x₂ gives (a·∇)u = ∇f.
            let drift = DriftCoefficient::new(
                "rotational",
                |x: Point| {
                    [
                        c(-x[0].sin() * x[1].sin()),
                        c(-x[0].cos() * x[1].cos()),
                    ]
                },
                |x: Point| {
                    let (s1, c1, s2, c2) = (x[0].sin(), x[0].cos(), x[1].sin(), x[1].cos());
                    [[c(-c1 * s2), c(-s1 * c2)], [c(s1 * c2), c(c1 * s2)]]
                },
            );
            ManufacturedSolution {
                name: name.into(),
                note: "u = (−x₂, x₁), (a·∇)u = ∇f, p = −f, Δp = 2f = −∂_k a^j ∂_j u^k",
                drift,
                u1: Arc::new(|x| c(-x[1])),
                u2: Arc::new(|x| c(x[0])),
                p: Arc::new(|x| c(-x[0].sin() * x[1].cos())),
            }
        }
        "exponential-stream" => ManufacturedSolution {
            name: name.into(),
            note: "u = (∂₂ψ, −∂₁ψ), ψ = x₁e^{x₁}cos x₂ / 2, Δψ = e^{x₁}cos x₂, ∇p = Δu, a = 0",
            drift: DriftCoefficient::zero(),
            u1: Arc::new(|x| c(-x[0] * x[0].exp() * x[1].sin() / 2.0)),
            u2: Arc::new(|x| c(-(1.0 + x[0]) * x[0].exp() * x[1].cos() / 2.0)),
            p: Arc::new(|x| c(-x[0].exp() * x[1].sin())),
        },
        _ => {
            return Err(Error::UnknownPreset {
                name: name.into(),
                known: MANUFACTURED_PRESETS.join(", "),
            })
        }
    };
    Ok(sol)
}

/// Seeded exact solutions: `u = ∇q` for a complex combination `q` of
/// `Re zᵏ, Im zᵏ` (`k = 2..4`), `a = λu + b`, `p = −λ(u·u)/2 − b·u`.
/// Since `u` is a gradient, `(u·∇)u = ∇(u·u/2)` with the bilinear product.
pub fn random_states(count: usize, seed: u64) -> Vec<ManufacturedSolution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cn = move || C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    (0..count)
        .map(|n| {
            // Coefficients of Re zᵏ and Im zᵏ, damped so that |u| = O(1) on |x| ≤ 2.
            let coef: Vec<(C64, C64)> = (2..=4)
                .map(|k| {
                    let d = 0.5 / 2f64.powi(k - 1);
                    (cn() * d, cn() * d)
                })
                .collect();
            let lambda = cn() * 0.5;
            let b = [cn() * 0.5, cn() * 0.5];
            let coef = Arc::new(coef);
            let grad = {
                let coef = coef.clone();
                move |x: Point| -> [C64; 2] {
                    let z = C64::new(x[0], x[1]);
                    let mut g = [C64::new(0.0, 0.0); 2];
                    for (i, (alpha, beta)) in coef.iter().enumerate() {
                        let k = (i + 2) as f64;
                        let w = k * z.powu(i as u32 + 1);
                        // ∇Re zᵏ = (Re w, −Im w), ∇Im zᵏ = (Im w, Re w)
                        g[0] += alpha * w.re + beta * w.im;
                        g[1] += -alpha * w.im + beta * w.re;
                    }
                    g
                }
            };
            let hess = {
                let coef = coef.clone();
                move |x: Point| -> [[C64; 2]; 2] {
                    let z = C64::new(x[0], x[1]);
                    let mut h = [[C64::new(0.0, 0.0); 2]; 2];
                    for (i, (alpha, beta)) in coef.iter().enumerate() {
                        let k = (i + 2) as f64;
                        let w = k * (k - 1.0) * z.powu(i as u32);
                        let (h11, h12) = (alpha * w.re + beta * w.im, -alpha * w.im + beta * w.re);
                        h[0][0] += h11;
                        h[0][1] += h12;
                        h[1][0] += h12;
                        h[1][1] -= h11;
                    }
                    h
                }
            };
            let (g1, g2, g3) = (grad.clone(), grad.clone(), grad.clone());
            let drift = DriftCoefficient::new(
                format!("random-{n}"),
                move |x| {
                    let u = g1(x);
                    [lambda * u[0] + b[0], lambda * u[1] + b[1]]
                },
                move |x| {
                    let h = hess(x);
                    [[lambda * h[0][0], lambda * h[0][1]], [lambda * h[1][0], lambda * h[1][1]]]
                },
            );
            let g4 = grad.clone();
            ManufacturedSolution {
                name: format!("random-{n}"),
                note: "u = ∇q, q harmonic, a = λu + b, p = −λ(u·u)/2 − b·u",
                drift,
                u1: Arc::new(move |x| g2(x)[0]),
                u2: Arc::new(move |x| g3(x)[1]),
                p: Arc::new(move |x| {
                    let u = g4(x);
                    -lambda * (u[0] * u[0] + u[1] * u[1]) / 2.0 - b[0] * u[0] - b[1] * u[1]
                }),
            }
        })
        .collect()
}

/// Nodal momentum residuals `−Δu^k + a^j∂_j u^k + ∂_k p` and divergence.
#[derive(Debug, Clone)]
pub struct StokesResidual {
    pub momentum: [GridField; 2],
    pub divergence: GridField,
}

impl StokesResidual {
    /// Max modulus over rings outside the boundary bands.
    pub fn interior_max(&self, grid: &PolarGrid) -> (f64, f64) {
        let m = self
            .momentum
            .iter()
            .map(|f| interior_max_abs(grid, &f.values))
            .fold(0.0, f64::max);
        (m, interior_max_abs(grid, &self.divergence.values))
    }
}

/// Nodes whose ring lies at least `INTERIOR_BAND · (r1 − r0)` from both circles.
pub fn interior_mask(grid: &PolarGrid) -> Vec<bool> {
    let w = INTERIOR_BAND * (grid.r1() - grid.r0());
    let tol = 1e-12 * (grid.r1() - grid.r0());
    (0..grid.len())
        .map(|k| {
            let r = grid.radius(grid.ring_of(k).0);
            r >= grid.r0() + w - tol && r <= grid.r1() - w + tol
        })
        .collect()
}

fn interior_max_abs(grid: &PolarGrid, v: &[C64]) -> f64 {
    interior_mask(grid)
        .iter()
        .zip(v)
        .filter(|(m, _)| **m)
        .map(|(_, z)| z.norm())
        .fold(0.0, f64::max)
}

fn sample_drift(grid: &PolarGrid, a: &DriftCoefficient) -> (Vec<[C64; 2]>, Vec<[[C64; 2]; 2]>) {
    (0..grid.len())
        .map(|k| {
            let x = grid.node(k);
            (a.at(x), a.jacobian_at(x))
        })
        .unzip()
}

pub fn stokes_residual(grid: &PolarGrid, state: &StokesState, a: &DriftCoefficient) -> Result<StokesResidual> {
    state.check_on(grid)?;
    let (av, _) = sample_drift(grid, a);
    let du: Vec<(GridField, GridField)> = state.u.iter().map(|u| partial_derivatives(grid, u)).collect();
    let (p1, p2) = partial_derivatives(grid, &state.p);
    let dp = [&p1, &p2];
    let momentum: Vec<GridField> = (0..2)
        .map(|k| {
            let lap = second_derivatives(grid, &state.u[k]).laplacian();
            let (d1, d2) = &du[k];
            let vals = (0..grid.len())
                .map(|n| -lap[n] + av[n][0] * d1[n] + av[n][1] * d2[n] + dp[k][n])
                .collect();
            GridField::new(format!("momentum {}", k + 1), vals)
        })
        .collect();
    let divergence = GridField::new("divergence", (0..grid.len()).map(|n| du[0].0[n] + du[1].1[n]).collect());
    let [m1, m2]: [GridField; 2] = momentum.try_into().expect("two components");
    Ok(StokesResidual {
        momentum: [m1, m2],
        divergence,
    })
}

/// Right-hand side of the `Δv` identity, from stencil derivatives of `u`, `p`
/// and the exact drift.
fn claimed_laplacian(grid: &PolarGrid, state: &StokesState, a: &DriftCoefficient) -> [Vec<C64>; 3] {
    let (av, jac) = sample_drift(grid, a);
    let du: Vec<(GridField, GridField)> = state.u.iter().map(|u| partial_derivatives(grid, u)).collect();
    let (p1, p2) = partial_derivatives(grid, &state.p);
    let n = grid.len();
    let grad_u = |k: usize, j: usize, m: usize| if j == 0 { du[k].0[m] } else { du[k].1[m] };
    let mut out = [vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n]];
    for m in 0..n {
        for k in 0..2 {
            let dp = if k == 0 { p1[m] } else { p2[m] };
            out[k][m] = av[m][0] * grad_u(k, 0, m) + av[m][1] * grad_u(k, 1, m) + dp;
        }
        let mut s = C64::new(0.0, 0.0);
        for j in 0..2 {
            for k in 0..2 {
                s += jac[m][j][k] * grad_u(k, j, m);
            }
        }
        out[2][m] = -s;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityDefect {
    /// Max over components and interior nodes.
    pub defect: f64,
    pub per_component: [f64; 3],
}

/// Interior max of `|Δv − ((a·∇)u + ∇p, −∂_k a^j ∂_j u^k)|`.
pub fn laplacian_identity_check(
    grid: &PolarGrid,
    state: &StokesState,
    a: &DriftCoefficient,
) -> Result<IdentityDefect> {
    state.check_on(grid)?;
    let claimed = claimed_laplacian(grid, state, a);
    let mut per_component = [0.0; 3];
    for (i, comp) in state.components().into_iter().enumerate() {
        let lap = second_derivatives(grid, comp).laplacian();
        let diff: Vec<C64> = lap.values.iter().zip(&claimed[i]).map(|(x, y)| x - y).collect();
        per_component[i] = interior_max_abs(grid, &diff);
    }
    Ok(IdentityDefect {
        defect: per_component.iter().copied().fold(0.0, f64::max),
        per_component,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub c0: f64,
    pub bounds: DriftBounds,
    /// `max (c0 |Δv|² − |∇v|²)` over all nodes; negative means margin.
    pub worst: f64,
    /// Nodes where `c0 |Δv|² > |∇v|² + DOMINATION_TOL`.
    pub violations: usize,
}

/// Checks `c0 |Δv|² ≤ |∇v|²` at every node with stencil `Δv` and `∇v`.
pub fn gradient_domination_check(
    grid: &PolarGrid,
    state: &StokesState,
    a: &DriftCoefficient,
) -> Result<DominationReport> {
    state.check_on(grid)?;
    let bounds = a.bounds(grid)?;
    let c0 = bounds.c0();
    let n = grid.len();
    let mut lap_sq = vec![0.0; n];
    let mut grad_sq = vec![0.0; n];
    for comp in state.components() {
        let lap = second_derivatives(grid, comp).laplacian();
        let (d1, d2) = partial_derivatives(grid, comp);
        for m in 0..n {
            lap_sq[m] += lap[m].norm_sqr();
            grad_sq[m] += d1[m].norm_sqr() + d2[m].norm_sqr();
        }
    }
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for m in 0..n {
        let gap = c0 * lap_sq[m] - grad_sq[m];
        worst = worst.max(gap);
        if gap > DOMINATION_TOL {
            violations += 1;
        }
    }
    Ok(DominationReport {
        c0,
        bounds,
        worst,
        violations,
    })
}

/// Boundary terms of the Stokes Cauchy functional on `Γ`, flat metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesCauchyNorm {
    pub velocity_trace: f64,
    pub pressure_trace: f64,
    pub velocity_normal: f64,
    pub pressure_normal: f64,
    pub total: f64,
}

/// `‖u‖_{H¹(Γ)²} + ‖p‖_{H¹(Γ)} + ‖∂_ν u‖_{L²(Γ)²} + ‖∂_ν p‖_{L²(Γ)}`.
pub fn stokes_cauchy_norm(grid: &PolarGrid, state: &StokesState) -> Result<StokesCauchyNorm> {
    state.check_on(grid)?;
    let id = MetricField::identity();
    let mut e = [(0.0, 0.0); 3];
    for (i, comp) in state.components().into_iter().enumerate() {
        let b = boundary_derivatives(grid, comp, &id, BoundaryTag::Outer)?;
        e[i] = boundary_energies(grid, &b)?;
    }
    let velocity_trace = (e[0].0 + e[1].0).sqrt();
    let pressure_trace = e[2].0.sqrt();
    let velocity_normal = (e[0].1 + e[1].1).sqrt();
    let pressure_normal = e[2].1.sqrt();
    Ok(StokesCauchyNorm {
        velocity_trace,
        pressure_trace,
        velocity_normal,
        pressure_normal,
        total: velocity_trace + pressure_trace + velocity_normal + pressure_normal,
    })
}

/// `√(2π R₁)`: the `H¹(Γ)` norm of the constant 1.
pub fn unit_pressure_norm(grid: &PolarGrid) -> f64 {
    (2.0 * PI * grid.r1()).sqrt()
}

/// Carleman terms of the three components with `g = I`, `P = −Δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StokesCarlemanTerms {
    pub components: [CarlemanTerms; 3],
    pub total: CarlemanTerms,
    /// Mantissa of `∫ e^{2sφ} |∇v|²` at the same offset.
    pub weighted_gradient: f64,
}

impl StokesCarlemanTerms {
    /// `∫ e^{2sφ}|∇v|² / LHS volume`.
    pub fn absorption_ratio(&self) -> f64 {
        if self.total.lhs_volume == 0.0 {
            0.0
        } else {
            self.weighted_gradient / self.total.lhs_volume
        }
    }

    /// LHS volume left after moving `(1/c0) ∫ e^{2sφ}|∇v|²` (the bound on
    /// `∫ e^{2sφ}|Δv|²`) across; positive means absorption succeeded.
    pub fn absorbed_lhs(&self, c0: f64) -> f64 {
        self.total.lhs_volume - self.weighted_gradient / c0
    }
}

struct StokesIntegrands {
    parts: [CarlemanIntegrands; 3],
    c0: f64,
}

impl StokesIntegrands {
    fn new(grid: &PolarGrid, state: &StokesState, a: &DriftCoefficient) -> Result<Self> {
        state.check_on(grid)?;
        let id = MetricField::identity();
        let zero = CoefficientSet::zero();
        let parts = state
            .components()
            .map(|c| CarlemanIntegrands::new(grid, c, &id, &zero));
        let [p0, p1, p2] = parts;
        Ok(Self {
            parts: [p0?, p1?, p2?],
            c0: a.bounds(grid)?.c0(),
        })
    }

    fn terms(&self, grid: &PolarGrid, psi: &BaseWeight, params: CarlemanParams) -> Result<(StokesCarlemanTerms, usize)> {
        let wf = stabilized_weight(psi, params, grid)?;
        let mut comps = [CarlemanTerms::zero(wf.log_offset); 3];
        let mut total = CarlemanTerms::zero(wf.log_offset);
        let mut dens = vec![0.0; grid.len()];
        for (i, part) in self.parts.iter().enumerate() {
            comps[i] = part.terms(grid, &wf)?;
            total = total.add(&comps[i])?;
            for (d, g) in dens.iter_mut().zip(part.gradient_density()) {
                *d += g;
            }
        }
        let weighted: Vec<f64> = dens.iter().zip(&wf.mantissa).map(|(d, m)| d * m).collect();
        let active = wf
            .mantissa
            .chunks(grid.ntheta())
            .filter(|ring| ring.iter().any(|&m| m > f64::EPSILON))
            .count();
        Ok((
            StokesCarlemanTerms {
                components: comps,
                total,
                weighted_gradient: grid.integrate_volume(&weighted)?,
            },
            active,
        ))
    }
}

pub fn stokes_carleman_terms(
    grid: &PolarGrid,
    state: &StokesState,
    psi: &BaseWeight,
    params: CarlemanParams,
) -> Result<StokesCarlemanTerms> {
    Ok(StokesIntegrands::new(grid, state, &DriftCoefficient::zero())?
        .terms(grid, psi, params)?
        .0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StokesCarlemanRow {
    pub gamma: f64,
    pub s: f64,
    /// Min over states of aggregate `RHS / LHS`.
    pub c_emp: f64,
    pub argmin_state: String,
    /// Max over states of `∫ e^{2sφ}|∇v|² / LHS volume`.
    pub absorption_ratio: f64,
    /// Every state keeps a positive LHS volume after absorption.
    pub absorbed_positive: bool,
    pub active_rings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StokesCarlemanReport {
    pub states: Vec<String>,
    /// Smallest `c0` over the states.
    pub c0: f64,
    /// `2 / c0`: the proof's sufficient condition `c0 s − 1 ≥ c0 s / 2`.
    pub s_threshold: f64,
    pub rows: Vec<StokesCarlemanRow>,
    /// `c_emp(s) ≥ 0.5 c_emp(s_min)` along each `γ`.
    pub non_degenerate: bool,
    /// Absorption ratio `≤ 1/2` at every swept `s ≥ 2`.
    pub absorption_holds: bool,
}

/// Componentwise Carleman evaluation over a set of exact states.
pub fn stokes_carleman_run(
    grid: &PolarGrid,
    states: &[(String, StokesState, DriftCoefficient)],
    psi: &BaseWeight,
    gammas: &[f64],
    ss: &[f64],
) -> Result<StokesCarlemanReport> {
    if states.is_empty() || gammas.is_empty() || ss.is_empty() {
        return Err(Error::InvalidConfig("states, gamma and s lists must be nonempty".into()));
    }
    let mut gammas = gammas.to_vec();
    let mut ss = ss.to_vec();
    for v in [&mut gammas, &mut ss] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let integrands = states
        .iter()
        .map(|(_, st, a)| StokesIntegrands::new(grid, st, a))
        .collect::<Result<Vec<_>>>()?;
    let c0 = integrands.iter().map(|i| i.c0).fold(f64::INFINITY, f64::min);
    let cells: Vec<(f64, f64)> = gammas.iter().flat_map(|&g| ss.iter().map(move |&s| (g, s))).collect();
    let rows = cells
        .par_iter()
        .map(|&(gamma, s)| -> Result<StokesCarlemanRow> {
            let params = CarlemanParams::new(gamma, s)?;
            let mut best: Option<(f64, usize)> = None;
            let mut absorption: f64 = 0.0;
            let mut positive = true;
            let mut active = 0;
            for (n, integ) in integrands.iter().enumerate() {
                let (t, act) = integ.terms(grid, psi, params)?;
                active = act;
                let (l, r) = (t.total.lhs(), t.total.rhs());
                if l.is_zero() && r.is_zero() {
                    continue;
                }
                let ratio = r.ratio(&l);
                if best.is_none_or(|(b, _)| ratio < b) {
                    best = Some((ratio, n));
                }
                absorption = absorption.max(t.absorption_ratio());
                positive &= t.absorbed_lhs(integ.c0) > 0.0;
            }
            let (c_emp, arg) = best.ok_or(Error::DegenerateFamilyMember { excluded: (0..states.len()).collect() })?;
            Ok(StokesCarlemanRow {
                gamma,
                s,
                c_emp,
                argmin_state: states[arg].0.clone(),
                absorption_ratio: absorption,
                absorbed_positive: positive,
                active_rings: active,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let non_degenerate = rows
        .chunks(ss.len())
        .all(|line| line.iter().all(|r| r.c_emp >= STABILITY_FACTOR * line[0].c_emp));
    let absorption_holds = rows.iter().filter(|r| r.s >= 2.0).all(|r| r.absorption_ratio <= 0.5);
    Ok(StokesCarlemanReport {
        states: states.iter().map(|s| s.0.clone()).collect(),
        c0,
        s_threshold: 2.0 / c0,
        rows,
        non_degenerate,
        absorption_holds,
    })
}

/// Componentwise reconstruction of `v` from noisy `(v|_Γ, ∂_ν v|_Γ)`.
#[derive(Debug, Clone)]
pub struct StokesContinuation {
    pub components: Vec<CauchySolution>,
    /// Relative `L²` errors of `u¹, u², p`; NaN for a zero target.
    pub relative_errors: [f64; 3],
}

impl StokesContinuation {
    pub fn state(&self) -> Result<StokesState> {
        StokesState::new(
            self.components[0].field.clone().with_name("u1"),
            self.components[1].field.clone().with_name("u2"),
            self.components[2].field.clone().with_name("p"),
        )
    }
}

pub fn stokes_continuation(
    grid: &PolarGrid,
    state: &StokesState,
    delta: f64,
    eps: f64,
    seed: u64,
) -> Result<StokesContinuation> {
    state.check_on(grid)?;
    let id = MetricField::identity();
    let problem = CauchyProblem::new(grid, &id, &CoefficientSet::zero())?;
    let mut components = Vec::with_capacity(3);
    let mut relative_errors = [f64::NAN; 3];
    for (i, comp) in state.components().into_iter().enumerate() {
        let data = CauchyData::from_field(grid, comp, &id, delta, seed + i as u64)?;
        let sol = problem.solve(&data, eps)?;
        let norm = comp.l2_norm(grid)?;
        if norm > 0.0 {
            relative_errors[i] = (&sol.field - comp).l2_norm(grid)? / norm;
        }
        components.push(sol);
    }
    Ok(StokesContinuation {
        components,
        relative_errors,
    })
}
