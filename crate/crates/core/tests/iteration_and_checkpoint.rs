mod common;

use bergman_ke::iteration::{decreasing_over_final_third, holder_bound, IterationConfig};
use bergman_ke::{Checkpoint, Engine, Error, SeedChoice};
use common::{reference_config, sextic};

fn short(final_level: u32) -> IterationConfig {
    IterationConfig { final_level, residual_grid: 0, ..reference_config() }
}

#[test]
fn trace_has_one_row_per_level_and_the_holder_chain_holds() {
    let engine = Engine::new(&sextic(), short(10)).unwrap();
    let state = engine.run().unwrap();
    assert_eq!(state.trace.len(), 10 - 3 + 1);
    for (row, m) in state.trace.iter().zip(3..) {
        assert_eq!(row.m, m);
        let bound = holder_bound(&state.trace, m).unwrap();
        assert!(row.log_integral <= bound.ln() + 1e-6, "m = {m}");
    }
    // The normalized integral is bounded by the normalized Hölder bound.
    for row in &state.trace {
        let scale = row.normalized_integral / row.log_integral.exp();
        assert!(row.normalized_integral <= row.holder_bound * scale * (1.0 + 1e-6));
    }
}

#[test]
fn two_steps_from_a_checkpoint_equal_an_uninterrupted_double_step() {
    let engine = Engine::new(&sextic(), short(7)).unwrap();
    let mut state = engine.seed().unwrap();
    engine.step(&mut state).unwrap();
    let text = Checkpoint::capture(&engine, &state).unwrap().to_json().unwrap();
    engine.step(&mut state).unwrap();
    engine.step(&mut state).unwrap();

    let mut resumed = Checkpoint::from_json(&text).unwrap().restore(&engine).unwrap();
    engine.step(&mut resumed).unwrap();
    engine.step(&mut resumed).unwrap();
    assert_eq!(resumed.level, state.level);
    assert_eq!(resumed.field, state.field);
    assert_eq!(resumed.envelope_min, state.envelope_min);
    assert_eq!(
        Checkpoint::capture(&engine, &resumed).unwrap().to_json().unwrap(),
        Checkpoint::capture(&engine, &state).unwrap().to_json().unwrap()
    );
}

#[test]
fn seed_level_checkpoint_restores() {
    let engine = Engine::new(&sextic(), short(5)).unwrap();
    let seed = engine.seed().unwrap();
    let cp = Checkpoint::capture(&engine, &seed).unwrap();
    let restored = cp.restore(&engine).unwrap();
    assert_eq!(restored.field, seed.field);
    assert!(restored.gram.is_none());
    // NaN entries of the seed trace row survive the round trip.
    let again = Checkpoint::from_json(&cp.to_json().unwrap()).unwrap();
    assert!(again.payload.trace[0].sup_change.is_nan());
}

#[test]
fn tampered_or_foreign_checkpoints_are_rejected() {
    let engine = Engine::new(&sextic(), short(5)).unwrap();
    let mut state = engine.seed().unwrap();
    engine.step(&mut state).unwrap();
    let text = Checkpoint::capture(&engine, &state).unwrap().to_json().unwrap();

    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["payload"]["metric"]["scale_log"] = serde_json::json!(1.0);
    assert!(matches!(Checkpoint::from_json(&value.to_string()), Err(Error::Checkpoint(_))));

    let other = Engine::new(&sextic(), IterationConfig { seed: SeedChoice::Sheared, ..short(5) }).unwrap();
    let cp = Checkpoint::from_json(&text).unwrap();
    assert!(matches!(cp.restore(&other), Err(Error::Checkpoint(_))));

    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["version"] = serde_json::json!(99);
    assert!(Checkpoint::from_json(&value.to_string()).is_err());
}

#[test]
fn sup_change_decreases_and_gain_increases_over_the_final_third() {
    let engine = Engine::new(&sextic(), short(18)).unwrap();
    let state = engine.run().unwrap();
    let changes: Vec<f64> = state.trace.iter().skip(1).map(|r| r.sup_change).collect();
    let gains: Vec<f64> = state.trace.iter().skip(1).map(|r| r.log_gain).collect();
    assert!(decreasing_over_final_third(&changes), "{changes:?}");
    let neg: Vec<f64> = gains.iter().map(|g| -g).collect();
    assert!(decreasing_over_final_third(&neg), "{gains:?}");
    assert!(gains.iter().all(|g| *g < 0.0));
}

#[test]
fn twisted_iteration_runs_from_level_zero() {
    let config = IterationConfig { m0: 0, twist: 1, ..short(4) };
    let engine = Engine::new(&sextic(), config).unwrap();
    let state = engine.run().unwrap();
    assert_eq!(state.trace.len(), 5);
    for row in state.trace.iter().skip(1) {
        assert!((row.trace_integral / (row.n_m as f64 + 1.0) - 1.0).abs() < 1e-6);
    }
}

#[test]
fn invalid_configurations_name_their_key() {
    let bad = IterationConfig { m0: 2, ..short(5) };
    match Engine::new(&sextic(), bad) {
        Err(Error::Config { key, .. }) => assert_eq!(key, "iteration.m0"),
        other => panic!("{other:?}"),
    }
    let bad = IterationConfig { final_level: 2, ..short(5) };
    assert!(matches!(Engine::new(&sextic(), bad), Err(Error::Config { .. })));
}
