use ucbench_core::carleman::{CarlemanProbe, TestFamily};
use ucbench_core::{BaseWeight, CarlemanParams, CoefficientSet, MetricField, PolarGrid};

fn probe(grid: &PolarGrid, metric: &str, coeffs: &str) -> CarlemanProbe {
    let fam = TestFamily::with_adversaries(grid, 42, 20, 6, 6).unwrap();
    CarlemanProbe::new(
        grid,
        &fam,
        &MetricField::preset(metric).unwrap(),
        &CoefficientSet::preset(coeffs).unwrap(),
        &BaseWeight::quadratic(1.0),
    )
    .unwrap()
}

#[test]
fn empirical_constant_does_not_degenerate_in_s() {
    let grid = PolarGrid::new(1.0, 2.0, 65, 128).unwrap();
    for (m, c) in [("identity", "zero"), ("anisotropic", "complex-drift")] {
        let report = probe(&grid, m, c).sweep(&[2.0], &[8.0, 16.0, 32.0, 64.0]).unwrap();
        let base = report.rows[0].c_emp;
        assert!(base > 0.0 && base.is_finite());
        for row in &report.rows[1..] {
            println!("{m}/{c} s={} c_emp={:.6e} active_rings={}", row.s, row.c_emp, row.active_rings);
            assert!(row.c_emp >= 0.5 * base, "{m}/{c}: s = {} gives {} < 0.5 * {}", row.s, row.c_emp, base);
        }
        assert!(!report.unstable);
        assert_eq!(report.gamma_star, Some(2.0));
    }
}

#[test]
fn active_rings_track_weight_concentration() {
    let grid = PolarGrid::new(1.0, 2.0, 65, 32).unwrap();
    let p = probe(&grid, "identity", "zero");
    let mild = p.cell(CarlemanParams::new(1.0, 1.0).unwrap()).unwrap();
    let steep = p.cell(CarlemanParams::new(2.0, 64.0).unwrap()).unwrap();
    assert!(mild.active_rings > steep.active_rings);
    assert!(mild.active_rings <= grid.nr());
    assert!(steep.active_rings >= 1);
}
