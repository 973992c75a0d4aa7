use ucbench_core::carleman::carleman_terms;
use ucbench_core::stokes::*;
use ucbench_core::*;

fn grids() -> [PolarGrid; 2] {
    [
        PolarGrid::new(1.0, 2.0, 33, 64).unwrap(),
        PolarGrid::new(1.0, 2.0, 65, 128).unwrap(),
    ]
}

/// Round-off floor below which no order can be measured.
const FLOOR: f64 = 1e-9;

#[test]
fn manufactured_residuals_are_second_order() {
    let [coarse, fine] = grids();
    let mut measured = 0;
    for name in MANUFACTURED_PRESETS {
        let m = manufactured(name).unwrap();
        let (mc, dc) = stokes_residual(&coarse, &m.state(&coarse), &m.drift).unwrap().interior_max(&coarse);
        let (mf, df) = stokes_residual(&fine, &m.state(&fine), &m.drift).unwrap().interior_max(&fine);
        for (c, f) in [(mc, mf), (dc, df)] {
            if c < FLOOR {
                // polynomial in r: the stencils are exact
                assert!(f < FLOOR, "{name}: {f}");
            } else {
                let ratio = c / f;
                assert!((3.5..=4.5).contains(&ratio), "{name}: ratio {ratio}");
                measured += 1;
            }
        }
    }
    assert!(measured >= 3);
}

#[test]
fn residual_is_linear() {
    let g = PolarGrid::new(1.0, 2.0, 17, 32).unwrap();
    let m = manufactured("exponential-stream").unwrap();
    let st = m.state(&g);
    let alpha = C64::new(0.3, -2.0);
    let r1 = stokes_residual(&g, &st, &m.drift).unwrap();
    let r2 = stokes_residual(&g, &st.scaled(alpha), &m.drift).unwrap();
    for k in 0..2 {
        for n in 0..g.len() {
            assert!((r2.momentum[k][n] - alpha * r1.momentum[k][n]).norm() < 1e-10);
        }
    }
}

#[test]
fn laplacian_identity_defect_is_second_order() {
    let [coarse, fine] = grids();
    for name in MANUFACTURED_PRESETS {
        let m = manufactured(name).unwrap();
        let c = laplacian_identity_check(&coarse, &m.state(&coarse), &m.drift).unwrap().defect;
        let f = laplacian_identity_check(&fine, &m.state(&fine), &m.drift).unwrap().defect;
        if c < FLOOR {
            assert!(f < FLOOR, "{name}");
        } else {
            let ratio = c / f;
            assert!((3.5..=4.5).contains(&ratio), "{name}: ratio {ratio}");
        }
    }
}

#[test]
fn pressure_row_of_the_identity() {
    // Δp = −∂_k a^j ∂_j u^k, checked on its own for the rotational drift.
    let [coarse, fine] = grids();
    let m = manufactured("rotational").unwrap();
    let c = laplacian_identity_check(&coarse, &m.state(&coarse), &m.drift).unwrap().per_component[2];
    let f = laplacian_identity_check(&fine, &m.state(&fine), &m.drift).unwrap().per_component[2];
    assert!(c > FLOOR);
    assert!((3.5..=4.5).contains(&(c / f)));
}

#[test]
fn non_solution_is_flagged() {
    let g = PolarGrid::new(1.0, 2.0, 33, 64).unwrap();
    let st = StokesState::new(
        GridField::from_real_fn(&g, "u1", |x| x[0].sin() * x[1]),
        GridField::from_real_fn(&g, "u2", |x| x[0] * x[0]),
        GridField::from_real_fn(&g, "p", |x| (x[0] * x[1]).cos()),
    )
    .unwrap();
    let d = laplacian_identity_check(&g, &st, &DriftCoefficient::zero()).unwrap();
    assert!(d.defect > 0.1, "{d:?}");
}

#[test]
fn pointwise_domination_holds() {
    let g = &grids()[1];
    let mut cases: Vec<ManufacturedSolution> = MANUFACTURED_PRESETS
        .iter()
        .map(|n| manufactured(n).unwrap())
        .collect();
    cases.extend(random_states(10, 42));
    for m in &cases {
        let r = gradient_domination_check(g, &m.state(g), &m.drift).unwrap();
        assert_eq!(r.violations, 0, "{}: {r:?}", m.name);
        assert!(r.worst <= DOMINATION_TOL);
    }
    let zero = manufactured("poiseuille-like").unwrap();
    let r = gradient_domination_check(g, &zero.state(g), &zero.drift).unwrap();
    assert_eq!(r.c0, 0.5);
}

#[test]
fn constant_state_has_no_terms() {
    let g = PolarGrid::new(1.0, 2.0, 17, 32).unwrap();
    let st = StokesState::new(
        GridField::from_real_fn(&g, "u1", |_| 1.0),
        GridField::from_real_fn(&g, "u2", |_| -2.0),
        GridField::from_real_fn(&g, "p", |_| 0.5),
    )
    .unwrap();
    let r = gradient_domination_check(&g, &st, &DriftCoefficient::zero()).unwrap();
    assert!(r.worst.abs() < 1e-20);
}

#[test]
fn cauchy_functional_is_homogeneous() {
    let g = &grids()[0];
    let m = manufactured("quadratic-pressure").unwrap();
    let st = m.state(g);
    let alpha = C64::new(-0.4, 1.1);
    let a = stokes_cauchy_norm(g, &st).unwrap().total;
    let b = stokes_cauchy_norm(g, &st.scaled(alpha)).unwrap().total;
    assert!((b - alpha.norm() * a).abs() <= 1e-12 * b);
}

#[test]
fn componentwise_terms_add_up() {
    let g = &grids()[0];
    let psi = BaseWeight::quadratic(1.0);
    let params = CarlemanParams::new(2.0, 4.0).unwrap();
    let st = manufactured("rotational").unwrap().state(g);
    let agg = stokes_carleman_terms(g, &st, &psi, params).unwrap();
    let id = MetricField::identity();
    let zero = CoefficientSet::zero();
    let mut sum = None::<ucbench_core::carleman::CarlemanTerms>;
    for c in st.components() {
        let t = carleman_terms(g, c, &id, &zero, &psi, params).unwrap();
        sum = Some(match sum {
            None => t,
            Some(s) => s.add(&t).unwrap(),
        });
    }
    let sum = sum.unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300);
    assert!(close(agg.total.lhs_volume, sum.lhs_volume));
    assert!(close(agg.total.lhs_inner, sum.lhs_inner));
    assert!(close(agg.total.rhs_volume, sum.rhs_volume));
    assert!(close(agg.total.rhs_outer, sum.rhs_outer));
    assert!(close(agg.total.rhs_inner, sum.rhs_inner));
}

#[test]
fn zero_state_has_zero_terms() {
    let g = &grids()[0];
    let t = stokes_carleman_terms(
        g,
        &StokesState::zeros(g),
        &BaseWeight::quadratic(1.0),
        CarlemanParams::new(2.0, 8.0).unwrap(),
    )
    .unwrap();
    assert!(t.total.lhs().is_zero() && t.total.rhs().is_zero());
    assert_eq!(t.weighted_gradient, 0.0);
}

#[test]
fn aggregate_ratio_and_absorption() {
    let g = &grids()[1];
    let states: Vec<_> = MANUFACTURED_PRESETS
        .iter()
        .map(|n| {
            let m = manufactured(n).unwrap();
            (m.name.clone(), m.state(g), m.drift.clone())
        })
        .collect();
    let r = stokes_carleman_run(
        g,
        &states,
        &BaseWeight::quadratic(1.0),
        &[2.0],
        &[2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
    )
    .unwrap();
    let base = r.rows.iter().find(|row| row.s == 8.0).unwrap().c_emp;
    for row in r.rows.iter().filter(|row| row.s > 8.0) {
        assert!(row.c_emp >= 0.5 * base, "{row:?}");
    }
    assert!(r.absorption_holds, "{r:?}");
    assert!(r.rows.iter().all(|row| row.absorbed_positive));
    assert!((r.s_threshold - 2.0 / r.c0).abs() < 1e-12);
}

#[test]
fn zero_data_reconstructs_zero_state() {
    let g = &grids()[0];
    let out = stokes_continuation(g, &StokesState::zeros(g), 0.0, 1e-8, 3).unwrap();
    for c in &out.components {
        assert!(c.field.l2_norm(g).unwrap() <= 1e-10);
    }
    assert_eq!(stokes_cauchy_norm(g, &out.state().unwrap()).unwrap().total, 0.0);
}

#[test]
fn componentwise_recovery_of_a_solution() {
    let g = &grids()[0];
    let st = manufactured("rotational").unwrap().state(g);
    let out = stokes_continuation(g, &st, 0.0, 1e-10, 3).unwrap();
    // u is linear and recovered to round-off; p = −sin x₁ cos x₂ is not
    // harmonic, so P = −Δ data only determine it up to the regularized bias.
    assert!(out.relative_errors[0] < 1e-6 && out.relative_errors[1] < 1e-6, "{:?}", out.relative_errors);
    assert!(out.relative_errors[2].is_finite());
}
