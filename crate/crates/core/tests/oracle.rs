//! Cross-checks between the library and the scalar reference in `common::oracle`.

mod common;

use common::oracle;
use flycap::converter::ModeVector;
use flycap::sim::{run_scenario, ScenarioConfig};
use flycap::switching::PwmConfig;

#[test]
fn oracle_modulator_matches_library() {
    let pwm = PwmConfig::default_for(3);
    for k in 0..400 {
        let t = k as f64 * oracle::SAMPLE;
        let want = ModeVector::from_switches(&oracle::switches(k)).unwrap();
        assert_eq!(pwm.mode_at(t), want, "sample {k}");
        // held between samples
        assert_eq!(pwm.mode_at(t + 0.7 * oracle::SAMPLE), want, "inside sample {k}");
    }
}

#[test]
fn library_tracks_oracle_at_the_same_step() {
    let cfg = ScenarioConfig {
        luenberger: None,
        ..ScenarioConfig::nominal()
    };
    let ts = run_scenario(&cfg).unwrap();
    let ch = ts.sosml.as_ref().unwrap();
    let run = oracle::nominal(1, cfg.t_end);
    assert_eq!(run.t.len(), ts.len());
    for k in (0..ts.len()).step_by(97) {
        let scale = 1.0 + run.e2[k].abs().max(run.e3[k].abs());
        assert!((ch.e2[k] - run.e2[k]).abs() < 1e-6 * scale, "e2 at step {k}");
        assert!((ch.e3[k] - run.e3[k]).abs() < 1e-6 * scale, "e3 at step {k}");
        assert!((ch.l[k] - run.l[k]).abs() < 1e-6 * run.l[k], "l at step {k}");
    }
    let plant = ts.final_plant_state().unwrap();
    for (a, b) in plant.iter().zip(&run.plant) {
        assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
    }
}

#[test]
fn oracle_pins_are_current() {
    // the values pinned in tests/acceptance.rs
    let run = oracle::nominal(10, 0.1);
    let t2 = oracle::settle_time(&run.t, &run.e2, 0.5).unwrap();
    let t3 = oracle::settle_time(&run.t, &run.e3, 0.5).unwrap();
    assert!((t2 - 0.028259).abs() < 1e-9, "{t2}");
    assert!((t3 - 0.028271).abs() < 1e-9, "{t3}");
}
