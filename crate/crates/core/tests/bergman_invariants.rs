mod common;

use bergman_ke::Engine;
use common::{bergman_invariants, reference_config, sextic};

#[test]
fn invariants_hold_at_every_level_of_a_short_run() {
    let config = bergman_ke::IterationConfig { final_level: 8, residual_grid: 0, ..reference_config() };
    let engine = Engine::new(&sextic(), config).unwrap();
    let mut state = engine.seed().unwrap();
    while state.level < 8 {
        let previous = state.field.clone();
        engine.step(&mut state).unwrap();
        let check = bergman_invariants(&engine, &previous, &state, 17, 1000, 100);
        assert!(check.basis_change <= 1e-10, "{check:?}");
        assert!(check.extremal_excess <= 1e-10, "{check:?}");
        assert!(check.maximizer <= 1e-10, "{check:?}");
        assert!(check.direct_solve <= 1e-10, "{check:?}");
        assert!(check.min_log_k.is_finite(), "{check:?}");
        let row = state.trace.last().unwrap();
        assert!((row.trace_integral / (row.n_m as f64 + 1.0) - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn kernel_is_positive_at_every_node() {
    let engine =
        Engine::new(&sextic(), bergman_ke::IterationConfig { residual_grid: 0, ..reference_config() }).unwrap();
    let mut state = engine.seed().unwrap();
    engine.step(&mut state).unwrap();
    assert!(state.field.log_k.iter().all(|v| v.is_finite()));
    assert_eq!(state.field.log_k.iter().copied().fold(f64::NEG_INFINITY, f64::max), 0.0);
}
