mod common;

use bergman_ke::checkpoint::{verify_candidate, CandidateBody};
use bergman_ke::curve::Sheet;
use bergman_ke::einstein::{compare_log_densities, convergence_slope, poincare_residual, STENCIL_ORDER};
use bergman_ke::iteration::EinsteinCandidate;
use bergman_ke::{CandidateFile, Engine, Error, IterationConfig};
use common::{reference_config, sextic};
use num_complex::Complex64;

fn fixture(name: &str) -> CandidateFile {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    CandidateFile::load(&path).unwrap()
}

#[test]
fn poincare_fixture_passes_and_converges_at_stencil_order() {
    let report = verify_candidate(&fixture("poincare.json"), 0).unwrap();
    assert!(report.relative_sup < 1e-5, "{}", report.relative_sup);
    let (r1, r2) = (poincare_residual(0.5, 40), poincare_residual(0.5, 80));
    let slope = convergence_slope(&[(0.5 / 40.0, r1.sup), (0.5 / 80.0, r2.sup)]);
    assert!((slope - STENCIL_ORDER).abs() <= 0.2 * STENCIL_ORDER, "slope {slope}");
}

#[test]
fn constant_fixture_fails_with_unit_relative_residual() {
    let report = verify_candidate(&fixture("constant.json"), 0).unwrap();
    assert!((report.relative_sup - 1.0).abs() < 1e-9);
    assert!(report.gauss_bonnet.is_none());
}

#[test]
fn candidate_is_symmetric_between_the_bulk_sheets() {
    let engine =
        Engine::new(&sextic(), IterationConfig { final_level: 6, residual_grid: 0, ..reference_config() }).unwrap();
    let state = engine.run().unwrap();
    let cand = EinsteinCandidate::from_state(&state);
    let (plus, minus) = (engine.atlas.bulk_chart(Sheet::Plus), engine.atlas.bulk_chart(Sheet::Minus));
    for k in 0..40 {
        let z = Complex64::from_polar(0.3 + 0.02 * k as f64, 0.37 * k as f64);
        if !engine.atlas.contains(plus, z) {
            continue;
        }
        let a = cand.log_density_at(&engine.atlas, plus, z).unwrap();
        let b = cand.log_density_at(&engine.atlas, minus, z).unwrap();
        assert!((a - b).abs() < 1e-10, "z = {z}: {a} vs {b}");
    }
}

#[test]
fn exported_candidate_reproduces_the_engine_residual() {
    let config = IterationConfig { final_level: 8, residual_grid: 48, ..reference_config() };
    let engine = Engine::new(&sextic(), config).unwrap();
    let state = engine.run().unwrap();
    let direct = engine.residual(&state).unwrap();
    let file = CandidateFile::from_json(&CandidateFile::export(&engine, &state).unwrap().to_json().unwrap()).unwrap();
    let verified = verify_candidate(&file, 48).unwrap();
    assert!((direct.relative_sup - verified.relative_sup).abs() < 1e-9);
    let gb = verified.gauss_bonnet.unwrap();
    assert_eq!(gb.candidate_target, 2.0);
    assert!((gb.volume - 2.0 * std::f64::consts::PI * gb.candidate_mass).abs() < 1e-12);
}

#[test]
fn residual_shrinks_with_level() {
    let run = |m| {
        let engine =
            Engine::new(&sextic(), IterationConfig { final_level: m, residual_grid: 48, ..reference_config() })
                .unwrap();
        engine.residual(&engine.run().unwrap()).unwrap().relative_sup
    };
    let (r6, r14) = (run(6), run(14));
    assert!(r14 < r6, "{r6} -> {r14}");
}

#[test]
fn mismatched_curves_are_rejected() {
    let engine =
        Engine::new(&sextic(), IterationConfig { final_level: 4, residual_grid: 0, ..reference_config() }).unwrap();
    let state = engine.run().unwrap();
    let mut file = CandidateFile::export(&engine, &state).unwrap();
    if let CandidateBody::Curve(c) = &mut file.body {
        c.curve = "0000".into();
    }
    assert!(matches!(verify_candidate(&file, 32), Err(Error::Checkpoint(_))));
    assert!(compare_log_densities("a", "b", &[0.0], &[0.0]).is_err());
    assert_eq!(compare_log_densities("a", "a", &[0.0, 1.0], &[0.5, 1.0]).unwrap().sup_log_difference, 0.5);
}
