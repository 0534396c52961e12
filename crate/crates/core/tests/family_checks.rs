mod common;

use bergman_ke::curve::Sheet;
use bergman_ke::family::{model_metric, positivity_suite, psh_check, superharmonic_control};
use bergman_ke::{CurveFamily, DirectImageMetric, Engine, FamilyConfig, FamilySweep, IterationConfig, PolarGrid};
use common::{c, reference_config};
use nalgebra::DMatrix;
use num_complex::Complex64;

fn small() -> FamilyConfig {
    FamilyConfig {
        levels: vec![4],
        candidate_level: 4,
        sample_points: 12,
        lines: 3,
        sections: 4,
        ..FamilyConfig::default()
    }
}

fn iteration() -> IterationConfig {
    IterationConfig { residual_grid: 0, ..reference_config() }
}

#[test]
fn grid_has_forty_one_points() {
    let g = FamilyConfig::default().grid().unwrap();
    assert_eq!(g.len(), 41);
    assert!(g.points().iter().all(|t| t.norm() <= 0.2 + 1e-15));
    assert!(PolarGrid::new(0.2, 1, 8).is_err() || PolarGrid::new(0.2, 0, 8).is_err());
}

#[test]
fn central_fiber_matches_a_standalone_run() {
    let family = CurveFamily::sextic_reference();
    let sweep = FamilySweep::new(&family, &iteration(), &small()).unwrap();
    let curve = family.fiber_curve(Complex64::new(0.0, 0.0)).unwrap();
    let engine = Engine::new(&curve, IterationConfig { final_level: 4, ..iteration() }).unwrap();
    let state = engine.run().unwrap();
    let chart = engine.atlas.bulk_chart(Sheet::Plus);
    for k in 0..10 {
        let x = Complex64::from_polar(0.2 + 0.05 * k as f64, 1.1 * k as f64);
        let a = state.kernel.log_density_at(&engine.atlas, chart, x).unwrap();
        let b = sweep.fibers[0][0].kernel.log_density_at(&sweep.engines[0].atlas, chart, x).unwrap();
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn reference_family_at_level_four_is_positive() {
    let cfg = small();
    let sweep = FamilySweep::new(&CurveFamily::sextic_reference(), &iteration(), &cfg).unwrap();
    let field = sweep.relative_kernel_field(4, &cfg).unwrap();
    assert!(!field.points.is_empty() && !field.lines.is_empty());
    let psh = psh_check(&field, cfg.tolerance);
    assert!(psh.passed, "{:?}", psh.violations.first());
    let metric = sweep.direct_image_metric(4).unwrap();
    let pos = positivity_suite(&metric, cfg.tolerance, cfg.sections, cfg.seed).unwrap();
    assert!(pos.passed, "{:?}", pos.violations.first());
    assert!(pos.det_min > 0.0);

    // A holomorphic change of frame multiplies det H by a constant and
    // leaves the determinant Laplacian unchanged.
    let b = DMatrix::from_fn(metric.h[0].nrows(), metric.h[0].ncols(), |i, j| {
        Complex64::new(if i == j { 2.0 } else { 0.0 }, if i < j { 0.3 } else { 0.0 })
    });
    let moved = DirectImageMetric {
        level: metric.level,
        grid: metric.grid,
        h: metric.h.iter().map(|h| &b * h * b.adjoint()).collect(),
    };
    let pos2 = positivity_suite(&moved, cfg.tolerance, cfg.sections, cfg.seed).unwrap();
    for (r1, r2) in pos.rows.iter().zip(&pos2.rows).filter(|(r, _)| r.det_laplacian.is_finite()) {
        assert!(
            (r1.det_laplacian - r2.det_laplacian).abs() < 1e-6 * (1.0 + r1.det_laplacian.abs()),
            "{} vs {}",
            r1.det_laplacian,
            r2.det_laplacian
        );
    }
    assert!(pos2.passed);
}

#[test]
fn constant_family_is_flat() {
    let mut coeffs = vec![vec![]; 7];
    coeffs[0] = vec![c(-1.0)];
    coeffs[6] = vec![c(1.0)];
    let family = CurveFamily { coeffs, separation_guard: 1e-3 };
    let cfg = small();
    let sweep = FamilySweep::new(&family, &iteration(), &cfg).unwrap();
    let psh = psh_check(&sweep.relative_kernel_field(4, &cfg).unwrap(), cfg.tolerance);
    assert!(psh.passed && psh.min_scaled_laplacian.abs() < 1e-9);
    let pos = positivity_suite(&sweep.direct_image_metric(4).unwrap(), cfg.tolerance, 4, 1).unwrap();
    assert!(pos.passed && pos.det_min.abs() < 1e-9 && pos.section_max.abs() < 1e-9);
}

#[test]
fn negative_controls_fail() {
    let g = FamilyConfig::default().grid().unwrap();
    assert!(!psh_check(&superharmonic_control(g, 0.5, 1), 1e-4).passed);
    assert!(!positivity_suite(&model_metric(g, 2, 1.0, 1), 1e-4, 4, 3).unwrap().passed);
    // The mirrored fields are subharmonic and positively curved.
    assert!(psh_check(&superharmonic_control(g, -0.5, 1), 1e-4).passed);
    assert!(positivity_suite(&model_metric(g, 2, -1.0, 1), 1e-4, 4, 3).unwrap().passed);
}

#[test]
fn level_zero_is_rejected() {
    let zero = FamilyConfig { levels: vec![0], ..small() };
    assert!(FamilySweep::new(&CurveFamily::sextic_reference(), &iteration(), &zero).is_err());
}
