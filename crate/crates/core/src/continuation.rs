//! Stability modulus, minimization over `s`, Tikhonov continuation from
//! Cauchy data on `Γ`, and logarithmic rate fits.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::BlockBanded;
use crate::error::{Error, Result};
use crate::fields::{CoefficientSet, MetricField};
use crate::grid::{BoundaryTag, GridField, PolarGrid, C64};
use crate::norms::{boundary_derivatives, check_eta, h1_norm, metric_normal, SpectralPair};
use crate::operators::GridOperators;
use crate::sparse::Csr;

/// `Φ_{η,c}(r) = 1/r` on `]0, e^c]` and `(log r)^{−(2−η)/2}` beyond.
pub fn phi_modulus(eta: f64, c: f64, r: f64) -> Result<f64> {
    if !(0.0..2.0).contains(&eta) {
        return Err(Error::InvalidParams(format!("eta must lie in [0, 2), got {eta}")));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidParams(format!("c must be positive, got {c}")));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParams(format!("r must be positive, got {r}")));
    }
    if r.ln() <= c {
        Ok(1.0 / r)
    } else {
        Ok(r.ln().powf(-(2.0 - eta) / 2.0))
    }
}

/// Minimizer and minimum of `F(s) = e^{cs} C + s^{−(2−η)/2} M` over `s ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SMinimum {
    pub s_opt: f64,
    pub value: f64,
}

/// `F(s)` evaluated without forming `e^{cs}` on its own.
pub fn s_objective(big_c: f64, big_m: f64, c: f64, eta: f64, s: f64) -> f64 {
    (c * s + big_c.ln()).exp() + s.powf(-(2.0 - eta) / 2.0) * big_m
}

/// `F` is convex with `F'` increasing, so the minimizer is the root of
/// `ln(cC) + cs − ln(qM) + (q+1) ln s`, found by bracketing and bisection.
/// When `F'(1) ≥ 0` the minimizer is `s = 1`.
pub fn minimize_over_s(big_c: f64, big_m: f64, c: f64, eta: f64) -> Result<SMinimum> {
    check_eta(eta)?;
    for (name, v) in [("C", big_c), ("M", big_m), ("c", c)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let q = (2.0 - eta) / 2.0;
    let slope = |s: f64| (c * big_c).ln() + c * s - (q * big_m).ln() + (q + 1.0) * s.ln();
    let f = |s: f64| s_objective(big_c, big_m, c, eta, s);
    if slope(1.0) >= 0.0 {
        return Ok(SMinimum {
            s_opt: 1.0,
            value: f(1.0),
        });
    }
    let (mut lo, mut hi) = (1.0, 2.0);
    while slope(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SMinimum {
        s_opt: hi,
        value: f(hi),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorollaryRow {
    pub k: u32,
    pub s_opt: f64,
    pub min_value: f64,
    pub modulus: f64,
    pub ratio: f64,
    /// Same ratio against `(log log(M/C))^{−(2−η)/2}`.
    pub double_log_ratio: f64,
}

/// Ratios `min_s F / (Φ_{η,c'}(M/C) M)` over `C/M = e^{−k}` with `M = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollaryShape {
    pub eta: f64,
    pub c: f64,
    pub c_prime: f64,
    pub rows: Vec<CorollaryRow>,
    /// `K = max ratio`.
    pub k_const: f64,
    /// `max ratio / min ratio`.
    pub spread: f64,
    pub double_log_spread: f64,
}

pub fn corollary_shape(eta: f64, c: f64, c_prime: f64, ks: &[u32]) -> Result<CorollaryShape> {
    if ks.is_empty() {
        return Err(Error::InvalidParams("need at least one k".into()));
    }
    let q = (2.0 - eta) / 2.0;
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let big_c = (-(k as f64)).exp();
        let m = minimize_over_s(big_c, 1.0, c, eta)?;
        let modulus = phi_modulus(eta, c_prime, 1.0 / big_c)?;
        let ll = (k as f64).ln();
        rows.push(CorollaryRow {
            k,
            s_opt: m.s_opt,
            min_value: m.value,
            modulus,
            ratio: m.value / modulus,
            double_log_ratio: if ll > 0.0 { m.value / ll.powf(-q) } else { f64::NAN },
        });
    }
    let spread_of = |f: &dyn Fn(&CorollaryRow) -> f64| {
        let v: Vec<f64> = rows.iter().map(f).filter(|x| x.is_finite()).collect();
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        (hi, hi / lo)
    };
    let (k_const, spread) = spread_of(&|r| r.ratio);
    let (_, double_log_spread) = spread_of(&|r| r.double_log_ratio);
    Ok(CorollaryShape {
        eta,
        c,
        c_prime,
        rows,
        k_const,
        spread,
        double_log_spread,
    })
}

/// Cauchy data on `Γ`: trace `f` and conormal derivative `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyData {
    pub f: Vec<C64>,
    pub h: Vec<C64>,
    /// Relative noise level.
    pub delta: f64,
    pub seed: u64,
}

impl CauchyData {
    pub fn new(f: Vec<C64>, h: Vec<C64>) -> Self {
        Self {
            f,
            h,
            delta: 0.0,
            seed: 0,
        }
    }

    /// Data of the discrete field `u`, perturbed by complex Gaussian noise
    /// whose Euclidean norm is `delta` times that of the clean `(f, h)`.
    pub fn from_field(
        grid: &PolarGrid,
        u: &GridField,
        g: &MetricField,
        delta: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidParams(format!("noise level must be >= 0, got {delta}")));
        }
        let b = boundary_derivatives(grid, u, g, BoundaryTag::Outer)?;
        let mut data = Self {
            f: b.trace,
            h: b.normal,
            delta,
            seed,
        };
        if delta > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = data.f.len() + data.h.len();
            let noise: Vec<C64> = (0..n)
                .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            let clean: f64 = data.f.iter().chain(&data.h).map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let nn: f64 = noise.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let scale = delta * clean / nn;
            let (nf, nh) = noise.split_at(data.f.len());
            for (z, e) in data.f.iter_mut().zip(nf) {
                *z += e * scale;
            }
            for (z, e) in data.h.iter_mut().zip(nh) {
                *z += e * scale;
            }
        }
        Ok(data)
    }

    fn check(&self, grid: &PolarGrid) -> Result<()> {
        if self.f.len() != grid.ntheta() || self.h.len() != grid.ntheta() {
            return Err(Error::InvalidParams(format!(
                "Cauchy data need {} values per component",
                grid.ntheta()
            )));
        }
        if self.f.iter().chain(&self.h).any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite("Cauchy data".into()));
        }
        Ok(())
    }
}

enum DataNormal {
    Real(BlockBanded<f64>),
    Complex(BlockBanded<C64>),
}

/// Discretized Tikhonov functional
///
/// ```text
/// J(u) = ‖Pu‖²_{L²(D)} + ‖u − f‖²_{H¹(Γ)} + ‖∂_{ν_g} u − h‖²_{L²(Γ)} + ε ‖u‖²_{H²}
/// ```
///
/// with `dV_g`, `dS_g` weights. Every term is a weighted sum of squares of a
/// sparse linear map, so the minimizer solves block-banded normal equations.
/// The tangential part of the `H¹(Γ)` term uses `|∂_t w|² / g(t, t)`, which
/// equals `|∇_g w|² − |∂_{ν_g} w|²` and needs only boundary values of `w`.
pub struct CauchyProblem {
    grid: PolarGrid,
    p_op: Csr<C64>,
    p_w: Vec<f64>,
    trace_op: Csr<C64>,
    tangent_op: Csr<C64>,
    normal_op: Csr<C64>,
    b_w: Vec<f64>,
    data_normal: DataNormal,
    h2: Arc<BlockBanded<f64>>,
}

/// Reconstruction and diagnostics.
#[derive(Debug, Clone)]
pub struct CauchySolution {
    pub field: GridField,
    pub objective: f64,
    pub objective_at_zero: f64,
    pub condition_estimate: f64,
}

impl CauchyProblem {
    pub fn new(grid: &PolarGrid, g: &MetricField, coeffs: &CoefficientSet) -> Result<Self> {
        g.check_ellipticity(grid)?;
        let ops = GridOperators::for_grid(grid);
        let m = g.sample(grid)?;
        let n = grid.len();

        // −Δ_g = −S⁻¹ (D1 S (g¹¹ D1 + g¹² D2) + D2 S (g²¹ D1 + g²² D2)).
        let coef = |a: usize, b: usize| -> Vec<f64> {
            (0..n).map(|k| m.sqrt_det[k] * m.ginv[k][(a, b)]).collect()
        };
        let f1 = Csr::linear_combination(&[
            (1.0, &ops.d1.scale_rows(&coef(0, 0))),
            (1.0, &ops.d2.scale_rows(&coef(0, 1))),
        ]);
        let f2 = Csr::linear_combination(&[
            (1.0, &ops.d1.scale_rows(&coef(1, 0))),
            (1.0, &ops.d2.scale_rows(&coef(1, 1))),
        ]);
        let inv_s: Vec<f64> = m.sqrt_det.iter().map(|s| -1.0 / s).collect();
        let neg_lap = Csr::linear_combination(&[(1.0, &ops.d1.matmul(&f1)), (1.0, &ops.d2.matmul(&f2))])
            .scale_rows(&inv_s);
        let (drift, potential) = coeffs.sample(grid);
        let x1: Vec<C64> = drift.iter().map(|d| d[0]).collect();
        let x2: Vec<C64> = drift.iter().map(|d| d[1]).collect();
        let one = C64::new(1.0, 0.0);
        let p_op = Csr::linear_combination(&[
            (one, &neg_lap.to_complex()),
            (one, &ops.d1.to_complex().scale_rows(&x1)),
            (one, &ops.d2.to_complex().scale_rows(&x2)),
            (one, &Csr::diagonal(&potential)),
        ]);
        let p_w: Vec<f64> = (0..n).map(|k| grid.volume_weights()[k] * m.sqrt_det[k]).collect();

        let outer = grid.boundary_nodes(BoundaryTag::Outer);
        let r = grid.boundary_radius(BoundaryTag::Outer);
        let mut nu1 = Vec::with_capacity(outer.len());
        let mut nu2 = Vec::with_capacity(outer.len());
        let mut tan_scale = Vec::with_capacity(outer.len());
        let mut b_w = Vec::with_capacity(outer.len());
        for (j, &k) in outer.iter().enumerate() {
            let (c, s) = (grid.cos_theta()[j], grid.sin_theta()[j]);
            let nu = metric_normal(&m.ginv[k], [c, s]);
            nu1.push(nu[0]);
            nu2.push(nu[1]);
            let gm = &m.g[k];
            let gtt = gm[(0, 0)] * s * s - 2.0 * gm[(0, 1)] * s * c + gm[(1, 1)] * c * c;
            tan_scale.push(1.0 / (r * gtt.sqrt()));
            b_w.push(r * grid.htheta() * m.sqrt_det[k]);
        }
        let trace_op = Csr::<f64>::identity(n).select_rows(&outer);
        let tangent_op = ops.dtheta.select_rows(&outer).scale_rows(&tan_scale);
        let normal_op = Csr::linear_combination(&[
            (1.0, &ops.d1.select_rows(&outer).scale_rows(&nu1)),
            (1.0, &ops.d2.select_rows(&outer).scale_rows(&nu2)),
        ]);

        let bw = ops.bandwidth(grid);
        let (nb, bs) = (grid.nr(), grid.ntheta());
        let data_normal = match p_op.try_real() {
            Some(p_real) => {
                let mut nm = BlockBanded::<f64>::zeros(nb, bs, bw);
                nm.add_normal_rows(&p_real, &p_w)?;
                nm.add_normal_rows(&trace_op, &b_w)?;
                nm.add_normal_rows(&tangent_op, &b_w)?;
                nm.add_normal_rows(&normal_op, &b_w)?;
                DataNormal::Real(nm)
            }
            None => {
                let mut nm = BlockBanded::<C64>::zeros(nb, bs, bw);
                nm.add_normal_rows(&p_op, &p_w)?;
                nm.add_normal_rows(&trace_op.to_complex(), &b_w)?;
                nm.add_normal_rows(&tangent_op.to_complex(), &b_w)?;
                nm.add_normal_rows(&normal_op.to_complex(), &b_w)?;
                DataNormal::Complex(nm)
            }
        };
        Ok(Self {
            grid: grid.clone(),
            p_op,
            p_w,
            trace_op: trace_op.to_complex(),
            tangent_op: tangent_op.to_complex(),
            normal_op: normal_op.to_complex(),
            b_w,
            data_normal,
            h2: ops.h2_normal(grid)?,
        })
    }

    pub fn grid(&self) -> &PolarGrid {
        &self.grid
    }

    /// True when the normal matrix is real (real coefficients).
    pub fn is_real(&self) -> bool {
        matches!(self.data_normal, DataNormal::Real(_))
    }

    /// `f` placed on the outer ring of an otherwise zero field.
    fn embed(&self, f: &[C64]) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); self.grid.len()];
        for (k, z) in self.grid.boundary_nodes(BoundaryTag::Outer).into_iter().zip(f) {
            v[k] = *z;
        }
        v
    }

    fn weighted_sq(w: &[f64], r: &[C64]) -> f64 {
        w.iter().zip(r).map(|(w, z)| w * z.norm_sqr()).sum()
    }

    /// `J(u)` for the given data and regularization weight.
    pub fn objective(&self, u: &[C64], data: &CauchyData, eps: f64) -> Result<f64> {
        data.check(&self.grid)?;
        if u.len() != self.grid.len() {
            return Err(Error::InvalidParams("field length does not match grid".into()));
        }
        let ef = self.embed(&data.f);
        let diff: Vec<C64> = u.iter().zip(&ef).map(|(a, b)| a - b).collect();
        let pu = self.p_op.apply(u);
        let tr = self.trace_op.apply(&diff);
        let tg = self.tangent_op.apply(&diff);
        let nr: Vec<C64> = self.normal_op.apply(u).iter().zip(&data.h).map(|(a, b)| a - b).collect();
        let re: Vec<f64> = u.iter().map(|z| z.re).collect();
        let im: Vec<f64> = u.iter().map(|z| z.im).collect();
        let h2: f64 = [re, im]
            .iter()
            .map(|v| self.h2.apply(v).iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        Ok(Self::weighted_sq(&self.p_w, &pu)
            + Self::weighted_sq(&self.b_w, &tr)
            + Self::weighted_sq(&self.b_w, &tg)
            + Self::weighted_sq(&self.b_w, &nr)
            + eps * h2)
    }

    /// Minimizes `J`. The normal matrix is symmetrically scaled by its
    /// diagonal before the block Cholesky factorization.
    pub fn solve(&self, data: &CauchyData, eps: f64) -> Result<CauchySolution> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "regularization weight must be positive, got {eps}"
            )));
        }
        data.check(&self.grid)?;
        let ef = self.embed(&data.f);
        let mut rhs = self.trace_op.apply_adjoint_weighted(&self.b_w, &self.trace_op.apply(&ef));
        let tan_f = self.tangent_op.apply(&ef);
        for (a, b) in rhs.iter_mut().zip(self.tangent_op.apply_adjoint_weighted(&self.b_w, &tan_f)) {
            *a += b;
        }
        for (a, b) in rhs.iter_mut().zip(self.normal_op.apply_adjoint_weighted(&self.b_w, &data.h)) {
            *a += b;
        }
        let (values, condition) = match &self.data_normal {
            DataNormal::Real(nm) => {
                let mut m = nm.clone();
                m.add_real_scaled(&self.h2, eps);
                let d = m.jacobi_scale();
                let chol = m.cholesky()?;
                let scaled: Vec<C64> = rhs.iter().zip(&d).map(|(b, d)| b * d).collect();
                let y = chol.solve_complex(&scaled);
                (
                    y.iter().zip(&d).map(|(y, d)| y * d).collect::<Vec<_>>(),
                    chol.condition_estimate(),
                )
            }
            DataNormal::Complex(nm) => {
                let mut m = nm.clone();
                m.add_real_scaled(&self.h2, eps);
                let d = m.jacobi_scale();
                let chol = m.cholesky()?;
                let scaled: Vec<C64> = rhs.iter().zip(&d).map(|(b, d)| b * d).collect();
                let y = chol.solve(&scaled);
                (
                    y.iter().zip(&d).map(|(y, d)| y * d).collect::<Vec<_>>(),
                    chol.condition_estimate(),
                )
            }
        };
        let field = GridField::new("u_rec", values);
        if field.ensure_finite().is_err() {
            return Err(Error::SolverFailure {
                reason: "non-finite reconstruction".into(),
                condition,
            });
        }
        let objective = self.objective(&field.values, data, eps)?;
        let objective_at_zero = self.objective(&vec![C64::new(0.0, 0.0); self.grid.len()], data, eps)?;
        Ok(CauchySolution {
            field,
            objective,
            objective_at_zero,
            condition_estimate: condition,
        })
    }
}

pub fn solve_cauchy(
    grid: &PolarGrid,
    data: &CauchyData,
    g: &MetricField,
    coeffs: &CoefficientSet,
    eps: f64,
) -> Result<CauchySolution> {
    CauchyProblem::new(grid, g, coeffs)?.solve(data, eps)
}

/// Fitted `β` in `error ≈ A (log(1/δ))^{−β}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityFit {
    pub points: Vec<(f64, f64)>,
    pub beta: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    /// `(2 − η) / 2`.
    pub target: f64,
}

/// Least-squares line through `(log log(1/δ), log error)`; `β` is minus its slope.
pub fn fit_log_rate(points: &[(f64, f64)], eta: f64) -> Result<StabilityFit> {
    check_eta(eta)?;
    fit_points(points, 4, eta)
}

fn fit_points(points: &[(f64, f64)], min_points: usize, eta: f64) -> Result<StabilityFit> {
    if points.len() < min_points {
        return Err(Error::InvalidParams(format!(
            "rate fit needs at least {min_points} points, got {}",
            points.len()
        )));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(d, e) in points {
        if !(d > 0.0 && d < 1.0) || !(e > 0.0) || !e.is_finite() {
            return Err(Error::InvalidParams(format!(
                "rate fit needs 0 < delta < 1 and positive errors, got ({d}, {e})"
            )));
        }
        xs.push((1.0 / d).ln().ln());
        ys.push(e.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidParams("noise levels must be distinct".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(StabilityFit {
        points: points.to_vec(),
        beta: -slope,
        intercept,
        residual,
        target: (2.0 - eta) / 2.0,
    })
}

/// Regularization rule `ε = scale · δ^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRule {
    pub exponent: f64,
    pub scale: f64,
}

impl Default for EpsilonRule {
    fn default() -> Self {
        Self {
            exponent: 2.0,
            scale: 1.0,
        }
    }
}

impl EpsilonRule {
    pub fn epsilon(&self, delta: f64) -> f64 {
        self.scale * delta.powf(self.exponent)
    }
}

/// Grids above this size measure `η = 1` errors with the direct `H¹` norm
/// instead of the spectral one.
pub const SPECTRAL_ERROR_MAX_NODES: usize = 2112;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub delta: f64,
    pub epsilon: f64,
    /// Relative `L²(D)` error.
    pub error_l2: f64,
    /// Relative error in the `η` norm.
    pub error_eta: f64,
    /// `β` fitted on this and all smaller noise levels; NaN below two points.
    pub beta_partial: f64,
    pub condition_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweep {
    pub rows: Vec<NoiseRow>,
    pub fit: StabilityFit,
    /// Errors strictly increase with `δ`.
    pub monotone: bool,
    pub eta: f64,
    pub eta_norm: String,
}

fn eta_error(grid: &PolarGrid, diff: &GridField, target: &GridField, eta: f64) -> Result<(f64, String)> {
    if eta == 0.0 {
        return Ok((diff.l2_norm(grid)? / target.l2_norm(grid)?, "L2".into()));
    }
    if grid.len() <= SPECTRAL_ERROR_MAX_NODES {
        let sp = SpectralPair::for_grid(grid)?;
        let a = sp.weighted_sum(&sp.coefficients(diff)?, eta).sqrt();
        let b = sp.weighted_sum(&sp.coefficients(target)?, eta).sqrt();
        return Ok((a / b, "spectral".into()));
    }
    if eta == 1.0 {
        return Ok((h1_norm(grid, diff)? / h1_norm(grid, target)?, "H1-direct".into()));
    }
    Err(Error::InvalidParams(format!(
        "eta = {eta} needs the spectral norm, limited to grids of {SPECTRAL_ERROR_MAX_NODES} nodes"
    )))
}

/// Reconstructs `u_target` from noisy Cauchy data at each `δ` (seed
/// `seed + index`) and fits the logarithmic rate of the error.
#[allow(clippy::too_many_arguments)]
pub fn noise_sweep_fit(
    grid: &PolarGrid,
    u_target: &GridField,
    g: &MetricField,
    coeffs: &CoefficientSet,
    deltas: &[f64],
    rule: EpsilonRule,
    eta: f64,
    seed: u64,
) -> Result<NoiseSweep> {
    check_eta(eta)?;
    if deltas.len() < 4 {
        return Err(Error::InvalidParams(format!(
            "noise sweep needs at least 4 levels, got {}",
            deltas.len()
        )));
    }
    let (lo, hi) = deltas
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &d| (a.min(d), b.max(d)));
    if !(lo > 0.0) || hi / lo < 1e3 * (1.0 - 1e-12) {
        return Err(Error::InvalidParams("noise levels must be positive and span 3 decades".into()));
    }
    u_target.check_on(grid)?;
    let problem = CauchyProblem::new(grid, g, coeffs)?;
    let mut order: Vec<usize> = (0..deltas.len()).collect();
    order.sort_by(|&a, &b| deltas[a].total_cmp(&deltas[b]));
    let results: Vec<Result<(f64, f64, f64, f64, String)>> = order
        .par_iter()
        .map(|&i| {
            let delta = deltas[i];
            let eps = rule.epsilon(delta);
            let data = CauchyData::from_field(grid, u_target, g, delta, seed + i as u64)?;
            let sol = problem.solve(&data, eps)?;
            let diff = &sol.field - u_target;
            let l2 = diff.l2_norm(grid)? / u_target.l2_norm(grid)?;
            let (e_eta, name) = eta_error(grid, &diff, u_target, eta)?;
            Ok((eps, l2, e_eta, sol.condition_estimate, name))
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut pts = Vec::new();
    let mut eta_norm = String::new();
    let mut failures = Vec::new();
    for (&i, res) in order.iter().zip(results) {
        let (eps, l2, e_eta, cond, name) = match res {
            Ok(v) => v,
            Err(e) => {
                log::warn!("noise level {:e} failed: {e}", deltas[i]);
                failures.push((deltas[i], e.to_string()));
                continue;
            }
        };
        pts.push((deltas[i], e_eta));
        let beta_partial = fit_points(&pts, 2, eta).map(|f| f.beta).unwrap_or(f64::NAN);
        rows.push(NoiseRow {
            delta: deltas[i],
            epsilon: eps,
            error_l2: l2,
            error_eta: e_eta,
            beta_partial,
            condition_estimate: cond,
        });
        eta_norm = name;
    }
    if !failures.is_empty() {
        return Err(Error::SolverFailure {
            reason: format!(
                "{} of {} noise levels failed (completed: {:?}); first: {}",
                failures.len(),
                deltas.len(),
                rows.iter().map(|r| r.delta).collect::<Vec<_>>(),
                failures[0].1
            ),
            condition: rows.iter().map(|r| r.condition_estimate).fold(f64::NAN, f64::max),
        });
    }
    let fit = fit_log_rate(&pts, eta)?;
    let monotone = rows.windows(2).all(|w| w[1].error_eta > w[0].error_eta);
    Ok(NoiseSweep {
        rows,
        fit,
        monotone,
        eta,
        eta_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn modulus_examples() {
        assert!((phi_modulus(0.0, 1.0, 0.5f64.exp()).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        assert!((phi_modulus(1.0, 2.0, 4.0f64.exp()).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(phi_modulus(0.0, 1.0, E).unwrap(), 1.0 / E);
        assert!(phi_modulus(2.0, 1.0, 3.0).is_err());
        assert!(phi_modulus(0.0, 0.0, 3.0).is_err());
        assert!(phi_modulus(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn data_dominated_minimum_is_at_one() {
        let m = minimize_over_s(2.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(m.s_opt, 1.0);
        assert!((m.value - (E * 2.0 + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn minimizer_is_a_stationary_point() {
        let m = minimize_over_s((-10.0f64).exp(), 1.0, 1.0, 0.0).unwrap();
        assert!(m.s_opt > 1.0);
        let f = |s| s_objective((-10.0f64).exp(), 1.0, 1.0, 0.0, s);
        assert!(f(m.s_opt) <= f(m.s_opt * (1.0 + 1e-6)));
        assert!(f(m.s_opt) <= f(m.s_opt * (1.0 - 1e-6)));
    }

    #[test]
    fn fitter_on_exact_rates() {
        let deltas = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
        for beta in [1.0, 0.5, 0.75] {
            let pts: Vec<(f64, f64)> = deltas.iter().map(|&d| (d, (1.0f64 / d).ln().powf(-beta))).collect();
            let f = fit_log_rate(&pts, 0.0).unwrap();
            assert!((f.beta - beta).abs() < 1e-6);
            assert!(f.residual < 1e-12);
        }
        assert!(fit_log_rate(&[(1e-2, 1.0), (1e-3, 0.5), (1e-4, 0.3)], 0.0).is_err());
        assert!(fit_log_rate(&[(1e-2, 1.0), (1e-3, 0.5), (1e-4, 0.3), (2.0, 0.1)], 0.0).is_err());
    }

    #[test]
    fn epsilon_rule() {
        let r = EpsilonRule::default();
        assert!((r.epsilon(1e-3) - 1e-6).abs() < 1e-20);
    }
}
