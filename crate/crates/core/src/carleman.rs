//! Both sides of the Carleman estimate and empirical constants.
//!
//! With `φ = e^{γψ}` and `σ = sγφ`:
//!
//! ```text
//! LHS = ∫_D e^{2sφ} σ (γ|∇_g u|² + γσ²|u|²) dV_g + ∫_S e^{2sφ} σ (|∂_{ν_g} u|² + σ²|u|²) dS_g
//! RHS = ∫_D e^{2sφ} |Pu|² dV_g + ∫_Γ e^{2sφ} σ (|∇_g u|² + σ²|u|²) dS_g + ∫_S e^{2sφ} σ |∇_{τ_g} u|² dS_g
//! ```
//!
//! All terms share the offset `2s max φ`, so `RHS / LHS` never touches it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{apply_p, CoefficientSet, MetricField};
use crate::grid::{partial_derivatives, BoundaryTag, GridField, PolarGrid, C64};
use crate::norms::{boundary_derivatives_with, h2_norm};
use crate::weight::{stabilized_weight, BaseWeight, CarlemanParams, LogScaled, WeightField};

/// Factor in the non-decay convention for `(γ*, s*)`.
pub const STABILITY_FACTOR: f64 = 0.5;

/// Seeded probe family: band-limited fields `Σ c_{jm} T_j(ξ(r)) e^{imθ}` with
/// complex Gaussian coefficients, optionally followed by boundary-layer
/// fields concentrated near `S` and `Γ`. Every member has unit discrete `H²`
/// norm.
#[derive(Debug, Clone)]
pub struct TestFamily {
    pub seed: u64,
    pub count: usize,
    pub max_degree: usize,
    pub max_frequency: usize,
    pub members: Vec<GridField>,
}

impl TestFamily {
    pub fn band_limited(
        grid: &PolarGrid,
        seed: u64,
        count: usize,
        max_degree: usize,
        max_frequency: usize,
    ) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidParams("test family must not be empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r0, r1) = (grid.r0(), grid.r1());
        let nt = grid.ntheta();
        let m_max = max_frequency as i64;
        let mut members = Vec::with_capacity(count);
        for n in 0..count {
            let mut coeffs = Vec::new();
            for j in 0..=max_degree {
                for m in -m_max..=m_max {
                    let decay = 1.0 / (1.0 + j as f64 + m.unsigned_abs() as f64).powi(2);
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    coeffs.push((j, m, C64::new(re, im) * decay));
                }
            }
            let mut values = vec![C64::new(0.0, 0.0); grid.len()];
            let mut cheb = vec![0.0; max_degree + 1];
            for i in 0..grid.nr() {
                let xi = 2.0 * (grid.radius(i) - r0) / (r1 - r0) - 1.0;
                chebyshev(xi, &mut cheb);
                for jt in 0..nt {
                    let theta = grid.theta(jt);
                    let mut acc = C64::new(0.0, 0.0);
                    for &(j, m, c) in &coeffs {
                        acc += c * cheb[j] * C64::from_polar(1.0, m as f64 * theta);
                    }
                    values[i * nt + jt] = acc;
                }
            }
            members.push(normalized(grid, GridField::new(format!("band-{n}"), values))?);
        }
        Ok(Self {
            seed,
            count,
            max_degree,
            max_frequency,
            members,
        })
    }

    /// Band-limited family followed by four boundary-layer fields.
    pub fn with_adversaries(
        grid: &PolarGrid,
        seed: u64,
        count: usize,
        max_degree: usize,
        max_frequency: usize,
    ) -> Result<Self> {
        let mut fam = Self::band_limited(grid, seed, count, max_degree, max_frequency)?;
        fam.members.extend(boundary_layers(grid)?);
        Ok(fam)
    }

    /// Family built from explicit fields, normalized to unit `H²` norm.
    pub fn from_fields(grid: &PolarGrid, fields: Vec<GridField>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::InvalidParams("test family must not be empty".into()));
        }
        let count = fields.len();
        let members = fields
            .into_iter()
            .map(|f| normalized(grid, f))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            seed: 0,
            count,
            max_degree: 0,
            max_frequency: 0,
            members,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

fn chebyshev(xi: f64, out: &mut [f64]) {
    for j in 0..out.len() {
        out[j] = match j {
            0 => 1.0,
            1 => xi,
            _ => 2.0 * xi * out[j - 1] - out[j - 2],
        };
    }
}

fn normalized(grid: &PolarGrid, u: GridField) -> Result<GridField> {
    let n = h2_norm(grid, &u)?;
    if !(n > 0.0) {
        return Err(Error::InvalidParams(format!("family member '{}' is zero", u.name)));
    }
    Ok(u.scaled(C64::new(1.0 / n, 0.0)))
}

/// Fields of width `(r1 − r0) / 10` hugging each boundary circle.
fn boundary_layers(grid: &PolarGrid) -> Result<Vec<GridField>> {
    let (r0, r1) = (grid.r0(), grid.r1());
    let w = 0.1 * (r1 - r0);
    let layer = |name: &str, near_inner: bool, m: f64| {
        GridField::from_fn(grid, name, move |x| {
            let r = x[0].hypot(x[1]);
            let t = x[1].atan2(x[0]);
            let d = if near_inner { r - r0 } else { r1 - r };
            C64::from_polar((-d / w).exp(), m * t)
        })
    };
    [
        layer("inner-layer-m0", true, 0.0),
        layer("inner-layer-m3", true, 3.0),
        layer("outer-layer-m0", false, 0.0),
        layer("outer-layer-m3", false, 3.0),
    ]
    .into_iter()
    .map(|f| normalized(grid, f))
    .collect()
}

/// Parameter-free integrands of one field, each already multiplied by `√|g|`.
#[derive(Debug, Clone)]
pub struct CarlemanIntegrands {
    vol_grad: Vec<f64>,
    vol_u: Vec<f64>,
    vol_pu: Vec<f64>,
    inner_normal: Vec<f64>,
    inner_u: Vec<f64>,
    inner_tangential: Vec<f64>,
    outer_grad: Vec<f64>,
    outer_u: Vec<f64>,
}

impl CarlemanIntegrands {
    pub fn new(
        grid: &PolarGrid,
        u: &GridField,
        g: &MetricField,
        coeffs: &CoefficientSet,
    ) -> Result<Self> {
        u.check_on(grid)?;
        let m = g.sample(grid)?;
        let (d1, d2) = partial_derivatives(grid, u);
        let pu = apply_p(grid, u, g, coeffs)?;
        let mut vol_grad = Vec::with_capacity(u.len());
        let mut vol_u = Vec::with_capacity(u.len());
        let mut vol_pu = Vec::with_capacity(u.len());
        for k in 0..u.len() {
            let a = &m.ginv[k];
            let grad = (a[(0, 0)] * d1[k].norm_sqr()
                + a[(1, 1)] * d2[k].norm_sqr()
                + 2.0 * a[(0, 1)] * (d1[k] * d2[k].conj()).re)
                .max(0.0);
            vol_grad.push(grad * m.sqrt_det[k]);
            vol_u.push(u[k].norm_sqr() * m.sqrt_det[k]);
            vol_pu.push(pu[k].norm_sqr() * m.sqrt_det[k]);
        }
        let inner = boundary_derivatives_with(grid, u, &m, BoundaryTag::Inner)?;
        let outer = boundary_derivatives_with(grid, u, &m, BoundaryTag::Outer)?;
        let w = |v: &[f64], s: &[f64]| v.iter().zip(s).map(|(a, b)| a * b).collect::<Vec<_>>();
        let sq = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>();
        Ok(Self {
            vol_grad,
            vol_u,
            vol_pu,
            inner_normal: w(&sq(&inner.normal), &inner.sqrt_det),
            inner_u: w(&sq(&inner.trace), &inner.sqrt_det),
            inner_tangential: w(&inner.tangential_sq, &inner.sqrt_det),
            outer_grad: w(&outer.grad_sq, &outer.sqrt_det),
            outer_u: w(&sq(&outer.trace), &outer.sqrt_det),
        })
    }

    /// Volume integrand `|∇_g u|² √|g|`.
    pub fn gradient_density(&self) -> &[f64] {
        &self.vol_grad
    }

    pub fn terms(&self, grid: &PolarGrid, wf: &WeightField) -> Result<CarlemanTerms> {
        let gamma = wf.params.gamma;
        let (m, sig) = (&wf.mantissa, &wf.sigma);
        let n = m.len();
        let lhs_vol: Vec<f64> = (0..n)
            .map(|k| m[k] * sig[k] * gamma * (self.vol_grad[k] + sig[k] * sig[k] * self.vol_u[k]))
            .collect();
        let rhs_vol: Vec<f64> = (0..n).map(|k| m[k] * self.vol_pu[k]).collect();
        let (mi, si) = (grid.trace(BoundaryTag::Inner, m), grid.trace(BoundaryTag::Inner, sig));
        let (mo, so) = (grid.trace(BoundaryTag::Outer, m), grid.trace(BoundaryTag::Outer, sig));
        let nt = mi.len();
        let lhs_in: Vec<f64> = (0..nt)
            .map(|j| mi[j] * si[j] * (self.inner_normal[j] + si[j] * si[j] * self.inner_u[j]))
            .collect();
        let rhs_in: Vec<f64> = (0..nt).map(|j| mi[j] * si[j] * self.inner_tangential[j]).collect();
        let rhs_out: Vec<f64> = (0..nt)
            .map(|j| mo[j] * so[j] * (self.outer_grad[j] + so[j] * so[j] * self.outer_u[j]))
            .collect();
        Ok(CarlemanTerms {
            log_offset: wf.log_offset,
            lhs_volume: grid.integrate_volume(&lhs_vol)?,
            lhs_inner: grid.integrate_boundary(BoundaryTag::Inner, &lhs_in)?,
            rhs_volume: grid.integrate_volume(&rhs_vol)?,
            rhs_outer: grid.integrate_boundary(BoundaryTag::Outer, &rhs_out)?,
            rhs_inner: grid.integrate_boundary(BoundaryTag::Inner, &rhs_in)?,
        })
    }
}

/// Mantissas of the five Carleman terms, all relative to `e^{log_offset}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlemanTerms {
    pub log_offset: f64,
    pub lhs_volume: f64,
    pub lhs_inner: f64,
    pub rhs_volume: f64,
    pub rhs_outer: f64,
    /// Tangential term on `S`.
    pub rhs_inner: f64,
}

impl CarlemanTerms {
    pub fn zero(log_offset: f64) -> Self {
        Self {
            log_offset,
            lhs_volume: 0.0,
            lhs_inner: 0.0,
            rhs_volume: 0.0,
            rhs_outer: 0.0,
            rhs_inner: 0.0,
        }
    }

    pub fn lhs(&self) -> LogScaled {
        LogScaled::new(self.log_offset, self.lhs_volume + self.lhs_inner)
    }

    pub fn rhs(&self) -> LogScaled {
        LogScaled::new(self.log_offset, self.rhs_volume + self.rhs_outer + self.rhs_inner)
    }

    /// Termwise sum; offsets must agree.
    pub fn add(&self, other: &CarlemanTerms) -> Result<CarlemanTerms> {
        if self.log_offset != other.log_offset {
            return Err(Error::InvalidParams("Carleman terms with different offsets".into()));
        }
        Ok(CarlemanTerms {
            log_offset: self.log_offset,
            lhs_volume: self.lhs_volume + other.lhs_volume,
            lhs_inner: self.lhs_inner + other.lhs_inner,
            rhs_volume: self.rhs_volume + other.rhs_volume,
            rhs_outer: self.rhs_outer + other.rhs_outer,
            rhs_inner: self.rhs_inner + other.rhs_inner,
        })
    }
}

pub fn carleman_terms(
    grid: &PolarGrid,
    u: &GridField,
    g: &MetricField,
    coeffs: &CoefficientSet,
    psi: &BaseWeight,
    params: CarlemanParams,
) -> Result<CarlemanTerms> {
    let wf = stabilized_weight(psi, params, grid)?;
    CarlemanIntegrands::new(grid, u, g, coeffs)?.terms(grid, &wf)
}

/// Left-hand side; independent of the lower-order coefficients.
pub fn carleman_lhs(
    grid: &PolarGrid,
    u: &GridField,
    g: &MetricField,
    psi: &BaseWeight,
    params: CarlemanParams,
) -> Result<LogScaled> {
    Ok(carleman_terms(grid, u, g, &CoefficientSet::zero(), psi, params)?.lhs())
}

pub fn carleman_rhs(
    grid: &PolarGrid,
    u: &GridField,
    g: &MetricField,
    coeffs: &CoefficientSet,
    psi: &BaseWeight,
    params: CarlemanParams,
) -> Result<LogScaled> {
    Ok(carleman_terms(grid, u, g, coeffs, psi, params)?.rhs())
}

/// One `(γ, s)` cell: `c_emp = min over members of RHS / LHS`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCell {
    pub gamma: f64,
    pub s: f64,
    pub c_emp: f64,
    pub argmin_member: usize,
    pub argmin_label: String,
    pub lhs_log10: f64,
    pub rhs_log10: f64,
    /// Members with `LHS = RHS = 0`, left out of the minimum.
    pub excluded: Vec<usize>,
    /// Radial rings where the normalized weight `e^{2sφ}` is above machine
    /// epsilon. A value of 1 or 2 means the quadrature only sees `Γ`.
    pub active_rings: usize,
}

/// Integrands of a whole family, computed once and reused across `(γ, s)`.
#[derive(Debug, Clone)]
pub struct CarlemanProbe {
    grid: PolarGrid,
    psi: BaseWeight,
    labels: Vec<String>,
    integrands: Vec<CarlemanIntegrands>,
}

impl CarlemanProbe {
    pub fn new(
        grid: &PolarGrid,
        family: &TestFamily,
        g: &MetricField,
        coeffs: &CoefficientSet,
        psi: &BaseWeight,
    ) -> Result<Self> {
        if family.is_empty() {
            return Err(Error::InvalidParams("test family must not be empty".into()));
        }
        g.check_ellipticity(grid)?;
        let integrands = family
            .members
            .iter()
            .map(|u| CarlemanIntegrands::new(grid, u, g, coeffs))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: grid.clone(),
            psi: psi.clone(),
            labels: family.members.iter().map(|u| u.name.clone()).collect(),
            integrands,
        })
    }

    pub fn member_terms(&self, params: CarlemanParams) -> Result<Vec<CarlemanTerms>> {
        let wf = stabilized_weight(&self.psi, params, &self.grid)?;
        self.integrands.iter().map(|i| i.terms(&self.grid, &wf)).collect()
    }

    pub fn cell(&self, params: CarlemanParams) -> Result<EmpiricalCell> {
        let wf = stabilized_weight(&self.psi, params, &self.grid)?;
        let terms = self
            .integrands
            .iter()
            .map(|i| i.terms(&self.grid, &wf))
            .collect::<Result<Vec<_>>>()?;
        let nt = self.grid.ntheta();
        let active_rings = wf
            .mantissa
            .chunks(nt)
            .filter(|ring| ring.iter().any(|&m| m > f64::EPSILON))
            .count();
        let mut excluded = Vec::new();
        let mut best: Option<(f64, usize)> = None;
        for (n, t) in terms.iter().enumerate() {
            let (l, r) = (t.lhs(), t.rhs());
            if l.is_zero() && r.is_zero() {
                excluded.push(n);
                continue;
            }
            let ratio = r.ratio(&l);
            if best.is_none_or(|(b, _)| ratio < b) {
                best = Some((ratio, n));
            }
        }
        let (c_emp, argmin) = best.ok_or(Error::DegenerateFamilyMember {
            excluded: excluded.clone(),
        })?;
        let t = &terms[argmin];
        Ok(EmpiricalCell {
            gamma: params.gamma,
            s: params.s,
            c_emp,
            argmin_member: argmin,
            argmin_label: self.labels[argmin].clone(),
            lhs_log10: t.lhs().log10(),
            rhs_log10: t.rhs().log10(),
            excluded,
            active_rings,
        })
    }

    /// Full `(γ, s)` table, evaluated cell-parallel and returned in
    /// `γ`-major, `s`-minor order.
    pub fn sweep(&self, gammas: &[f64], ss: &[f64]) -> Result<SweepReport> {
        if gammas.is_empty() || ss.is_empty() {
            return Err(Error::InvalidConfig("gamma and s lists must be nonempty".into()));
        }
        let mut gs = gammas.to_vec();
        let mut svals = ss.to_vec();
        gs.sort_by(f64::total_cmp);
        gs.dedup();
        svals.sort_by(f64::total_cmp);
        svals.dedup();
        let params = gs
            .iter()
            .flat_map(|&g| svals.iter().map(move |&s| CarlemanParams::new(g, s)))
            .collect::<Result<Vec<_>>>()?;
        let rows = params
            .par_iter()
            .map(|&p| self.cell(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepReport::from_rows(rows, gs.len(), svals.len()))
    }
}

pub fn empirical_constant(
    grid: &PolarGrid,
    family: &TestFamily,
    g: &MetricField,
    coeffs: &CoefficientSet,
    psi: &BaseWeight,
    params: CarlemanParams,
) -> Result<EmpiricalCell> {
    CarlemanProbe::new(grid, family, g, coeffs, psi)?.cell(params)
}

pub fn sweep(
    grid: &PolarGrid,
    family: &TestFamily,
    g: &MetricField,
    coeffs: &CoefficientSet,
    psi: &BaseWeight,
    gammas: &[f64],
    ss: &[f64],
) -> Result<SweepReport> {
    CarlemanProbe::new(grid, family, g, coeffs, psi)?.sweep(gammas, ss)
}

/// Sweep table with the conventional `(γ*, s*)`: the smallest swept `γ` for
/// which `c_emp(γ, s') ≥ 0.5 c_emp(γ, s_min)` for every swept `s'`, and for
/// that `γ` the smallest `s` after which the same holds relative to `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<EmpiricalCell>,
    pub gamma_star: Option<f64>,
    pub s_star: Option<f64>,
    pub unstable: bool,
    pub convention: String,
}

impl SweepReport {
    fn from_rows(rows: Vec<EmpiricalCell>, ng: usize, ns: usize) -> Self {
        let mut gamma_star = None;
        let mut s_star = None;
        for gi in 0..ng {
            let line = &rows[gi * ns..(gi + 1) * ns];
            if non_decaying(line, 0) {
                gamma_star = Some(line[0].gamma);
                s_star = (0..ns).find(|&si| non_decaying(line, si)).map(|si| line[si].s);
                break;
            }
        }
        Self {
            rows,
            unstable: gamma_star.is_none(),
            gamma_star,
            s_star,
            convention: format!(
                "(gamma*, s*) = smallest swept values with c_emp(gamma, s') >= {STABILITY_FACTOR} c_emp(gamma, s) for all larger swept s'"
            ),
        }
    }
}

fn non_decaying(line: &[EmpiricalCell], from: usize) -> bool {
    let base = line[from].c_emp;
    line[from..].iter().all(|c| c.c_emp >= STABILITY_FACTOR * base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> PolarGrid {
        PolarGrid::new(1.0, 2.0, 33, 64).unwrap()
    }

    #[test]
    fn family_is_deterministic_and_normalized() {
        let g = PolarGrid::new(1.0, 2.0, 17, 32).unwrap();
        let a = TestFamily::with_adversaries(&g, 42, 5, 6, 6).unwrap();
        let b = TestFamily::with_adversaries(&g, 42, 5, 6, 6).unwrap();
        assert_eq!(a.members, b.members);
        assert_eq!(a.len(), 9);
        for u in &a.members {
            assert!((h2_norm(&g, u).unwrap() - 1.0).abs() < 1e-10);
        }
        let c = TestFamily::band_limited(&g, 43, 5, 6, 6).unwrap();
        assert_ne!(a.members[0], c.members[0]);
        assert!(TestFamily::from_fields(&g, vec![GridField::zeros(&g, "0")]).is_err());
    }

    #[test]
    fn zero_field_has_zero_sides() {
        let g = grid();
        let z = GridField::zeros(&g, "0");
        let p = CarlemanParams::new(2.0, 8.0).unwrap();
        let w = BaseWeight::quadratic(1.0);
        let id = MetricField::identity();
        assert_eq!(carleman_lhs(&g, &z, &id, &w, p).unwrap().mantissa, 0.0);
        assert_eq!(carleman_rhs(&g, &z, &id, &CoefficientSet::zero(), &w, p).unwrap().mantissa, 0.0);
    }

    #[test]
    fn both_sides_are_quadratic() {
        let g = grid();
        let u = GridField::from_fn(&g, "u", |x| C64::new(x[0] * x[1].sin(), x[0] - x[1]));
        let p = CarlemanParams::new(2.0, 16.0).unwrap();
        let w = BaseWeight::quadratic(1.0);
        let m = MetricField::bump();
        let c = CoefficientSet::preset("complex-drift").unwrap();
        let a = carleman_terms(&g, &u, &m, &c, &w, p).unwrap();
        let b = carleman_terms(&g, &u.scaled(C64::new(2.0, 0.0)), &m, &c, &w, p).unwrap();
        assert_eq!(a.log_offset, b.log_offset);
        assert_eq!(b.lhs().mantissa, 4.0 * a.lhs().mantissa);
        assert_eq!(b.rhs().mantissa, 4.0 * a.rhs().mantissa);
    }

    #[test]
    fn constant_field_rhs_matches_circle_integral() {
        // u ≡ 1, p = 0: only the Γ term survives, with integrand σ³ and
        // constant φ on the circle.
        let g = grid();
        let one = GridField::from_real_fn(&g, "1", |_| 1.0);
        let (gamma, s) = (1.0, 1.0);
        let p = CarlemanParams::new(gamma, s).unwrap();
        let w = BaseWeight::quadratic(1.0);
        let rhs = carleman_rhs(&g, &one, &MetricField::identity(), &CoefficientSet::zero(), &w, p).unwrap();
        let phi = (gamma * 3.0f64).exp();
        let sigma = s * gamma * phi;
        let expected = (2.0 * s * phi).exp() * sigma.powi(3) * 2.0 * PI * 2.0;
        assert!((rhs.value() - expected).abs() < 5e-3 * expected);
        // Large parameters: compare in log form.
        let p = CarlemanParams::new(2.0, 64.0).unwrap();
        let rhs = carleman_rhs(&g, &one, &MetricField::identity(), &CoefficientSet::zero(), &w, p).unwrap();
        let phi = 6.0f64.exp();
        let log_expected = 2.0 * 64.0 * phi + 3.0 * (128.0 * phi).ln() + (4.0 * PI).ln();
        assert!((rhs.log10() * std::f64::consts::LN_10 - log_expected).abs() < 5e-3);
    }

    #[test]
    fn constant_field_lhs_matches_refined_oracle() {
        // At γ = s = 1 the weight e^{2φ} varies on a length 1/160 near Γ, so the
        // base grid must resolve that layer before refinement can agree.
        let coarse = PolarGrid::new(1.0, 2.0, 257, 16).unwrap();
        let fine = PolarGrid::new(1.0, 2.0, 1025, 16).unwrap();
        let p = CarlemanParams::new(1.0, 1.0).unwrap();
        let w = BaseWeight::quadratic(1.0);
        let id = MetricField::identity();
        let l = |g: &PolarGrid| {
            let one = GridField::from_real_fn(g, "1", |_| 1.0);
            carleman_lhs(g, &one, &id, &w, p).unwrap().value()
        };
        let (a, b) = (l(&coarse), l(&fine));
        assert!((a - b).abs() < 5e-3 * b, "{a} vs {b}");
    }

    #[test]
    fn radial_field_has_no_tangential_term() {
        let g = grid();
        let u = GridField::from_real_fn(&g, "r2", |x| x[0] * x[0] + x[1] * x[1]);
        let t = carleman_terms(
            &g,
            &u,
            &MetricField::identity(),
            &CoefficientSet::zero(),
            &BaseWeight::quadratic(1.0),
            CarlemanParams::new(2.0, 4.0).unwrap(),
        )
        .unwrap();
        assert!(t.rhs_inner <= 1e-12 * t.rhs().mantissa);
    }

    #[test]
    fn single_member_cell_is_reproducible() {
        let g = grid();
        let fam = TestFamily::from_fields(&g, vec![GridField::from_real_fn(&g, "1", |_| 1.0)]).unwrap();
        let run = || {
            empirical_constant(
                &g,
                &fam,
                &MetricField::identity(),
                &CoefficientSet::zero(),
                &BaseWeight::quadratic(1.0),
                CarlemanParams::new(2.0, 8.0).unwrap(),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert!(a.c_emp.is_finite() && a.c_emp > 0.0);
        assert_eq!(a.c_emp.to_bits(), b.c_emp.to_bits());
    }

    #[test]
    fn doubling_the_family_keeps_ratios() {
        let g = PolarGrid::new(1.0, 2.0, 17, 32).unwrap();
        let fam = TestFamily::band_limited(&g, 42, 4, 6, 6).unwrap();
        let doubled = TestFamily {
            members: fam.members.iter().map(|u| u.scaled(C64::new(2.0, 0.0))).collect(),
            ..fam.clone()
        };
        let id = MetricField::identity();
        let zero = CoefficientSet::zero();
        let w = BaseWeight::quadratic(1.0);
        let p = CarlemanParams::new(2.0, 8.0).unwrap();
        let a = CarlemanProbe::new(&g, &fam, &id, &zero, &w).unwrap().cell(p).unwrap();
        let b = CarlemanProbe::new(&g, &doubled, &id, &zero, &w).unwrap().cell(p).unwrap();
        assert_eq!(a.c_emp, b.c_emp);
        assert_eq!(a.argmin_member, b.argmin_member);
    }

    #[test]
    fn degenerate_members_are_excluded() {
        let g = PolarGrid::new(1.0, 2.0, 17, 32).unwrap();
        let one = GridField::from_real_fn(&g, "1", |_| 1.0);
        let fam = TestFamily {
            seed: 0,
            count: 2,
            max_degree: 0,
            max_frequency: 0,
            members: vec![GridField::zeros(&g, "0"), one],
        };
        let probe = CarlemanProbe::new(
            &g,
            &fam,
            &MetricField::identity(),
            &CoefficientSet::zero(),
            &BaseWeight::quadratic(1.0),
        )
        .unwrap();
        let cell = probe.cell(CarlemanParams::new(2.0, 8.0).unwrap()).unwrap();
        assert_eq!(cell.excluded, vec![0]);
        assert_eq!(cell.argmin_member, 1);
        let only_zero = TestFamily {
            members: vec![GridField::zeros(&g, "0")],
            ..fam
        };
        let probe = CarlemanProbe::new(
            &g,
            &only_zero,
            &MetricField::identity(),
            &CoefficientSet::zero(),
            &BaseWeight::quadratic(1.0),
        )
        .unwrap();
        assert!(matches!(
            probe.cell(CarlemanParams::new(2.0, 8.0).unwrap()),
            Err(Error::DegenerateFamilyMember { .. })
        ));
    }

    #[test]
    fn sweep_shapes() {
        let g = PolarGrid::new(1.0, 2.0, 17, 32).unwrap();
        let fam = TestFamily::band_limited(&g, 42, 3, 6, 6).unwrap();
        let probe = CarlemanProbe::new(
            &g,
            &fam,
            &MetricField::identity(),
            &CoefficientSet::zero(),
            &BaseWeight::quadratic(1.0),
        )
        .unwrap();
        assert!(matches!(probe.sweep(&[2.0], &[]), Err(Error::InvalidConfig(_))));
        let one = probe.sweep(&[2.0], &[8.0]).unwrap();
        assert_eq!(one.rows.len(), 1);
        assert_eq!(one.rows[0], probe.cell(CarlemanParams::new(2.0, 8.0).unwrap()).unwrap());
        let full = probe.sweep(&[4.0, 1.0, 2.0], &[64.0, 8.0, 16.0, 32.0]).unwrap();
        assert_eq!(full.rows.len(), 12);
        assert_eq!((full.rows[0].gamma, full.rows[0].s), (1.0, 8.0));
        assert_eq!((full.rows[11].gamma, full.rows[11].s), (4.0, 64.0));
    }

    #[test]
    fn star_convention() {
        let cell = |gamma: f64, s: f64, c: f64| EmpiricalCell {
            gamma,
            s,
            c_emp: c,
            argmin_member: 0,
            argmin_label: String::new(),
            lhs_log10: 0.0,
            rhs_log10: 0.0,
            excluded: vec![],
            active_rings: 0,
        };
        let decaying = vec![cell(1.0, 8.0, 1.0), cell(1.0, 16.0, 0.1)];
        assert!(SweepReport::from_rows(decaying, 1, 2).unstable);
        let rows = vec![
            cell(1.0, 8.0, 1.0),
            cell(1.0, 16.0, 0.1),
            cell(1.0, 32.0, 0.1),
            cell(2.0, 8.0, 1.0),
            cell(2.0, 16.0, 0.6),
            cell(2.0, 32.0, 0.7),
        ];
        let r = SweepReport::from_rows(rows, 2, 3);
        assert!(!r.unstable);
        assert_eq!((r.gamma_star, r.s_star), (Some(2.0), Some(8.0)));
        let late = vec![cell(1.0, 8.0, 1.0), cell(1.0, 16.0, 0.2), cell(1.0, 32.0, 0.15)];
        let r = SweepReport::from_rows(late, 1, 3);
        assert!(r.unstable);
    }
}
