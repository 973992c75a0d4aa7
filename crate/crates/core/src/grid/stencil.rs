//! Finite-difference stencils on the polar grid.
//!
//! Radial derivatives use second-order central differences in the interior and
//! second-order one-sided differences on the two boundary rings. Angular
//! derivatives use the periodic spectral differentiation stencil, an
//! antisymmetric circulant that is exact on trigonometric polynomials of degree
//! below `ntheta / 2` (so Cartesian polynomials of low degree are differentiated
//! exactly in `theta`). Both stencils are applied in a fixed relative order, so
//! an angular shift of the input commutes bitwise with differentiation.

use super::{GridField, PolarGrid, C64};

/// Coefficients `c_k`, `k = 1..ntheta-1`, with `u'_j = sum_k c_k u_{j+k}`.
pub(crate) fn spectral_angular_stencil(ntheta: usize) -> Vec<f64> {
    let h = 2.0 * std::f64::consts::PI / ntheta as f64;
    let mut c = vec![0.0; ntheta];
    for (k, ck) in c.iter_mut().enumerate().skip(1) {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        *ck = -0.5 * sign / (0.5 * k as f64 * h).tan();
    }
    c
}

/// Radial stencil for ring `i`: `(ring, coefficient)` pairs.
pub(crate) fn radial_stencil(grid: &PolarGrid, i: usize) -> [(usize, f64); 3] {
    let n = grid.nr();
    let inv = 1.0 / (2.0 * grid.hr());
    if i == 0 {
        [(0, -3.0 * inv), (1, 4.0 * inv), (2, -inv)]
    } else if i == n - 1 {
        [(n - 3, inv), (n - 2, -4.0 * inv), (n - 1, 3.0 * inv)]
    } else {
        [(i - 1, -inv), (i, 0.0), (i + 1, inv)]
    }
}

/// `∂_r u` nodewise.
pub fn radial_derivative(grid: &PolarGrid, u: &[C64]) -> Vec<C64> {
    let nt = grid.ntheta();
    let mut out = vec![C64::new(0.0, 0.0); u.len()];
    for i in 0..grid.nr() {
        let st = radial_stencil(grid, i);
        for j in 0..nt {
            let mut acc = C64::new(0.0, 0.0);
            for &(ring, c) in &st {
                acc += u[ring * nt + j] * c;
            }
            out[i * nt + j] = acc;
        }
    }
    out
}

/// `∂_θ u` nodewise.
pub fn angular_derivative(grid: &PolarGrid, u: &[C64]) -> Vec<C64> {
    let nt = grid.ntheta();
    let c = grid.angular_stencil();
    let mut out = vec![C64::new(0.0, 0.0); u.len()];
    for i in 0..grid.nr() {
        let ring = &u[i * nt..(i + 1) * nt];
        for j in 0..nt {
            let mut acc = C64::new(0.0, 0.0);
            for (k, &ck) in c.iter().enumerate().skip(1) {
                let idx = if j + k >= nt { j + k - nt } else { j + k };
                acc += ring[idx] * ck;
            }
            out[i * nt + j] = acc;
        }
    }
    out
}

/// `(∂_r u, ∂_θ u)`.
pub fn polar_derivatives(grid: &PolarGrid, u: &GridField) -> (GridField, GridField) {
    (
        GridField::new(format!("d_r {}", u.name), radial_derivative(grid, &u.values)),
        GridField::new(format!("d_theta {}", u.name), angular_derivative(grid, &u.values)),
    )
}

/// Cartesian partials `(∂₁u, ∂₂u)` via the chain rule
/// `∂₁ = cosθ ∂_r − (sinθ / r) ∂_θ`, `∂₂ = sinθ ∂_r + (cosθ / r) ∂_θ`.
pub fn partial_derivatives(grid: &PolarGrid, u: &GridField) -> (GridField, GridField) {
    let dr = radial_derivative(grid, &u.values);
    let dt = angular_derivative(grid, &u.values);
    let nt = grid.ntheta();
    let (cos, sin) = (grid.cos_theta(), grid.sin_theta());
    let mut d1 = Vec::with_capacity(u.len());
    let mut d2 = Vec::with_capacity(u.len());
    for i in 0..grid.nr() {
        let inv_r = 1.0 / grid.radius(i);
        for j in 0..nt {
            let k = i * nt + j;
            d1.push(dr[k] * cos[j] - dt[k] * (sin[j] * inv_r));
            d2.push(dr[k] * sin[j] + dt[k] * (cos[j] * inv_r));
        }
    }
    (
        GridField::new(format!("d1 {}", u.name), d1),
        GridField::new(format!("d2 {}", u.name), d2),
    )
}

/// Second partials by composing the first-derivative stencils.
#[derive(Debug, Clone)]
pub struct SecondDerivatives {
    pub d11: GridField,
    /// Symmetrized mixed partial `(∂₁∂₂u + ∂₂∂₁u) / 2`.
    pub d12: GridField,
    pub d22: GridField,
}

impl SecondDerivatives {
    pub fn laplacian(&self) -> GridField {
        &self.d11 + &self.d22
    }
}

/// Interior accuracy is O(h²); the two rings nearest each boundary are O(h)
/// because the one-sided stencil is differentiated once more.
pub fn second_derivatives(grid: &PolarGrid, u: &GridField) -> SecondDerivatives {
    let (d1, d2) = partial_derivatives(grid, u);
    let (d11, d21) = partial_derivatives(grid, &d1);
    let (d12, d22) = partial_derivatives(grid, &d2);
    let mixed = d21
        .values
        .iter()
        .zip(&d12.values)
        .map(|(a, b)| (a + b) * 0.5)
        .collect();
    SecondDerivatives {
        d11: d11.with_name(format!("d11 {}", u.name)),
        d12: GridField::new(format!("d12 {}", u.name), mixed),
        d22: d22.with_name(format!("d22 {}", u.name)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(nr: usize, nt: usize) -> PolarGrid {
        PolarGrid::new(1.0, 2.0, nr, nt).unwrap()
    }

    fn max_err(a: &GridField, f: impl Fn([f64; 2]) -> f64, g: &PolarGrid, rings: std::ops::Range<usize>) -> f64 {
        let mut m: f64 = 0.0;
        for i in rings {
            for j in 0..g.ntheta() {
                let k = g.index(i, j);
                m = m.max((a[k] - C64::new(f(g.node(k)), 0.0)).norm());
            }
        }
        m
    }

    #[test]
    fn exact_on_linear_functions() {
        let g = grid(17, 32);
        let u = GridField::from_real_fn(&g, "x1", |x| x[0]);
        let (d1, d2) = partial_derivatives(&g, &u);
        assert!(max_err(&d1, |_| 1.0, &g, 0..g.nr()) < 1e-12);
        assert!(max_err(&d2, |_| 0.0, &g, 0..g.nr()) < 1e-12);
    }

    #[test]
    fn constants_have_zero_partials() {
        let g = grid(17, 32);
        let u = GridField::from_real_fn(&g, "c", |_| 3.5);
        let (d1, d2) = partial_derivatives(&g, &u);
        assert!(d1.max_abs() < 1e-12 && d2.max_abs() < 1e-12);
    }

    #[test]
    fn product_x1_x2_is_resolved() {
        // Quadratic in r and degree-2 trigonometric in theta: both stencils are exact.
        let g = grid(17, 32);
        let u = GridField::from_real_fn(&g, "x1x2", |x| x[0] * x[1]);
        let (d1, _) = partial_derivatives(&g, &u);
        assert!(max_err(&d1, |x| x[1], &g, 0..g.nr()) < 1e-11);
    }

    #[test]
    fn first_derivatives_converge_at_second_order() {
        let f = |x: [f64; 2]| x[0].sin() * x[1].cos();
        let f1 = |x: [f64; 2]| x[0].cos() * x[1].cos();
        let f2 = |x: [f64; 2]| -x[0].sin() * x[1].sin();
        let mut coarse = grid(17, 32);
        for _ in 0..2 {
            let fine = coarse.refined().unwrap();
            let errs: Vec<(f64, f64)> = [&coarse, &fine]
                .iter()
                .map(|g| {
                    let u = GridField::from_real_fn(g, "u", f);
                    let (d1, d2) = partial_derivatives(g, &u);
                    (max_err(&d1, f1, g, 0..g.nr()), max_err(&d2, f2, g, 0..g.nr()))
                })
                .collect();
            let r1 = errs[0].0 / errs[1].0;
            let r2 = errs[0].1 / errs[1].1;
            assert!((3.5..=4.5).contains(&r1), "ratio {r1}");
            assert!((3.5..=4.5).contains(&r2), "ratio {r2}");
            coarse = fine;
        }
    }

    #[test]
    fn second_derivatives_of_polynomials() {
        let g = grid(17, 32);
        let u = GridField::from_real_fn(&g, "x1^2", |x| x[0] * x[0]);
        let s = second_derivatives(&g, &u);
        assert!(max_err(&s.d11, |_| 2.0, &g, 2..g.nr() - 2) < 1e-10);
        let lin = GridField::from_real_fn(&g, "lin", |x| 2.0 * x[0] - x[1] + 1.0);
        let s = second_derivatives(&g, &lin);
        for f in [&s.d11, &s.d12, &s.d22] {
            assert!(f.max_abs() < 1e-10);
        }
        let r2 = GridField::from_real_fn(&g, "r2", |x| x[0] * x[0] + x[1] * x[1]);
        let lap = second_derivatives(&g, &r2).laplacian();
        assert!(max_err(&lap, |_| 4.0, &g, 0..g.nr()) < 1e-10);
    }

    #[test]
    fn second_derivatives_converge_in_the_interior() {
        let f = |x: [f64; 2]| (0.7 * x[0]).exp() * x[1].sin();
        let f11 = |x: [f64; 2]| 0.49 * (0.7 * x[0]).exp() * x[1].sin();
        let g0 = grid(17, 32);
        let g1 = g0.refined().unwrap();
        let e: Vec<f64> = [&g0, &g1]
            .iter()
            .map(|g| {
                let s = second_derivatives(g, &GridField::from_real_fn(g, "u", f));
                max_err(&s.d11, f11, g, 2..g.nr() - 2)
            })
            .collect();
        let ratio = e[0] / e[1];
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn angular_shift_commutes_with_polar_derivatives() {
        let g = grid(9, 16);
        let u = GridField::from_fn(&g, "u", |x| C64::new((x[0] * 1.3).sin(), x[1].cos() * x[0]));
        let shifted = u.rotated(&g, 1);
        let (dr, dt) = polar_derivatives(&g, &u);
        let (dr_s, dt_s) = polar_derivatives(&g, &shifted);
        assert_eq!(dr.rotated(&g, 1).values, dr_s.values);
        assert_eq!(dt.rotated(&g, 1).values, dt_s.values);
    }
}
