//! Acceptance run: one `criterion N: PASS|FAIL` line per criterion.
//!
//! Criterion 8 is a known failure of the discretized problem; see the
//! README. The test asserts that every other criterion passes and that 8
//! still fails the same way, so a change in either direction is noticed.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ucbench_cli::report::{ExperimentReport, SuiteReport};
use ucbench_cli::{run_from_path, RunOptions};
use ucbench_core::fields::{apply_magnetic, apply_p, laplace_beltrami, magnetic_to_drift};
use ucbench_core::grid::partial_derivatives;
use ucbench_core::{GridField, MagneticPotential, MetricField, Point, PolarGrid, C64};

const EXPECTED_FAILURES: &[u32] = &[8];

struct Line {
    pass: bool,
    detail: String,
}

fn suite_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/paper-suite.toml")
}

fn run_suite(out: &Path) -> (SuiteReport, f64) {
    let t = Instant::now();
    let opts = RunOptions {
        out: out.to_path_buf(),
        ..Default::default()
    };
    let r = run_from_path(&suite_path(), &opts).expect("suite runs");
    (r, t.elapsed().as_secs_f64())
}

fn checks(e: &ExperimentReport, names: &[&str]) -> Line {
    let mut pass = e.error.is_none();
    let mut parts = Vec::new();
    for n in names {
        let matching: Vec<_> = e.checks.iter().filter(|c| c.name.starts_with(n)).collect();
        pass &= !matching.is_empty();
        for c in matching {
            pass &= c.pass;
            parts.push(format!("{}: {}", c.name, c.detail));
        }
    }
    if let Some(err) = &e.error {
        parts.push(format!("error: {err}"));
    }
    Line {
        pass,
        detail: parts.join("; "),
    }
}

fn whole(e: &ExperimentReport) -> Line {
    let failed: Vec<_> = e.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    Line {
        pass: e.pass,
        detail: format!(
            "{} checks in {:.1}s{}",
            e.checks.len(),
            e.wall_clock_s,
            if failed.is_empty() { String::new() } else { format!(", failed {failed:?}") }
        ),
    }
}

fn grid(nr: usize, nt: usize) -> PolarGrid {
    PolarGrid::new(1.0, 2.0, nr, nt).unwrap()
}

/// Max error over rings whose radius lies in `[1.25, 1.75]`.
fn interior_err(g: &PolarGrid, f: &GridField, exact: impl Fn(Point) -> f64) -> f64 {
    (0..g.len())
        .filter(|&k| {
            let r = g.radius(g.ring_of(k).0);
            (1.25..=1.75).contains(&r)
        })
        .map(|k| (f[k] - C64::new(exact(g.node(k)), 0.0)).norm())
        .fold(0.0, f64::max)
}

fn quadrature_and_derivatives() -> Line {
    let g = grid(65, 128);
    let area = g.integrate_volume(&vec![1.0; g.len()]).unwrap();
    let area_err = (area - 3.0 * PI).abs() / (3.0 * PI);

    let u = |x: Point| x[0].sin() * x[1].cos();
    let u1 = |x: Point| x[0].cos() * x[1].cos();
    let u2 = |x: Point| -x[0].sin() * x[1].sin();
    let aniso = MetricField::anisotropic();
    let ginv = aniso.at([1.5, 0.0]).try_inverse().unwrap();
    // Constant metric: the operator reduces to g^{ij} ∂_i∂_j.
    let lap_aniso = move |x: Point| {
        let (h11, h12, h22) = (-u(x), -x[0].cos() * -x[1].sin(), -u(x));
        ginv[(0, 0)] * h11 + 2.0 * ginv[(0, 1)] * h12 + ginv[(1, 1)] * h22
    };
    let errs = |g: &PolarGrid| {
        let f = GridField::from_real_fn(g, "u", u);
        let (d1, d2) = partial_derivatives(g, &f);
        let li = laplace_beltrami(g, &f, &MetricField::identity()).unwrap();
        let la = laplace_beltrami(g, &f, &aniso).unwrap();
        [
            interior_err(g, &d1, u1),
            interior_err(g, &d2, u2),
            interior_err(g, &li, |x| -2.0 * u(x)),
            interior_err(g, &la, lap_aniso),
        ]
    };
    let coarse = grid(33, 64);
    let (e0, e1) = (errs(&coarse), errs(&coarse.refined().unwrap()));
    let ratios: Vec<f64> = e0.iter().zip(&e1).map(|(a, b)| a / b).collect();
    let pass = area_err <= 1e-12 && ratios.iter().all(|r| (3.5..=4.5).contains(r));
    Line {
        pass,
        detail: format!(
            "area rel. error {area_err:.2e}; ratios d1 {:.3}, d2 {:.3}, LB identity {:.3}, LB anisotropic {:.3}",
            ratios[0], ratios[1], ratios[2], ratios[3]
        ),
    }
}

fn magnetic_reduction() -> Line {
    let u = |x: Point| C64::new(x[0].exp() * x[1].sin(), 0.0);
    let mut pass = true;
    let mut parts = Vec::new();
    // Smooth a is paired with a variable metric so its defect is not round-off.
    for (a, metric) in [
        (MagneticPotential::preset("constant").unwrap(), MetricField::bump()),
        (MagneticPotential::preset("smooth").unwrap(), MetricField::bump()),
    ] {
        let coeffs = magnetic_to_drift(&a, &metric);
        let defect = |g: &PolarGrid| {
            let f = GridField::from_fn(g, "u", u);
            let l = apply_magnetic(g, &f, &metric, &a).unwrap();
            let p = apply_p(g, &f, &metric, &coeffs).unwrap();
            (0..g.len()).map(|k| (l[k] + p[k]).norm()).fold(0.0, f64::max)
        };
        let g0 = grid(33, 64);
        let (e0, e1) = (defect(&g0), defect(&g0.refined().unwrap()));
        let order = (e0 / e1).log2();
        pass &= order >= 1.8;
        parts.push(format!("{} a: order {order:.3} ({e0:.2e} -> {e1:.2e})", a.name()));
    }
    Line {
        pass,
        detail: parts.join("; "),
    }
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let (report, secs) = run_suite(&a);
    let (_, secs_b) = run_suite(&b);
    let exp = |n: &str| report.experiment(n).unwrap_or_else(|| panic!("experiment {n}"));

    let mut lines: Vec<(u32, Line)> = Vec::new();
    lines.push((1, whole(exp("weights"))));
    lines.push((2, quadrature_and_derivatives()));
    lines.push((3, magnetic_reduction()));
    lines.push((4, checks(exp("norms"), &["tangential identity"])));
    lines.push((5, checks(exp("norms"), &["interpolation inequality"])));
    let c6a = checks(exp("carleman-identity"), &["non-decay"]);
    let c6b = checks(exp("carleman-anisotropic"), &["non-decay"]);
    lines.push((
        6,
        Line {
            pass: c6a.pass && c6b.pass,
            detail: format!("g = I: {}; anisotropic: {}", c6a.detail, c6b.detail),
        },
    ));
    lines.push((7, checks(exp("stability"), &["single-log shape", "minimization vs brute force"])));
    lines.push((
        8,
        checks(exp("stability"), &["fitted beta in window", "errors increase", "fitter calibration"]),
    ));
    let c9a = checks(exp("stability"), &["zero data"]);
    let c9b = checks(exp("stokes"), &["zero data"]);
    lines.push((
        9,
        Line {
            pass: c9a.pass && c9b.pass,
            detail: format!("{}; {}", c9a.detail, c9b.detail),
        },
    ));
    lines.push((10, whole(exp("stokes"))));

    let (ca, cb) = (csv_files(&a), csv_files(&b));
    let golden = csv_files(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/paper-suite"));
    let differing: Vec<_> = ca.keys().filter(|k| ca.get(*k) != cb.get(*k)).cloned().collect();
    let off_golden: Vec<_> = ca.keys().filter(|k| ca.get(*k) != golden.get(*k)).cloned().collect();
    lines.push((
        11,
        Line {
            pass: !ca.is_empty() && ca.len() == cb.len() && differing.is_empty() && off_golden.is_empty(),
            detail: format!(
                "{} CSVs, {} differ between runs, {} differ from golden; runs took {secs:.1}s and {secs_b:.1}s",
                ca.len(),
                differing.len(),
                off_golden.len()
            ),
        },
    ));

    for (n, l) in &lines {
        let tag = if EXPECTED_FAILURES.contains(n) { " (known)" } else { "" };
        println!("criterion {n}: {}{tag} {}", if l.pass { "PASS" } else { "FAIL" }, l.detail);
    }
    let unexpected: Vec<u32> = lines
        .iter()
        .filter(|(n, l)| l.pass == EXPECTED_FAILURES.contains(n))
        .map(|(n, _)| *n)
        .collect();
    assert!(unexpected.is_empty(), "criteria with unexpected status: {unexpected:?}");

    // The parts of 8 that do hold must keep holding.
    let st = exp("stability");
    for name in ["errors increase with delta", "fitter calibration beta = 1", "fitter calibration beta = 0.5", "noise-free recovery"] {
        assert!(st.check_named(name).is_some_and(|c| c.pass), "{name}");
    }
}
