//! End-to-end runs: log layout, CSV round trip, determinism and config
//! handling.

use dcee_mtpa::observer::TorqueSource;
use dcee_mtpa::scenario::{export_csv, read_csv, run_scenario, to_csv_bytes, Mode, ScenarioConfig, ScenarioError, Segment};
use proptest::prelude::*;

/// 0.1 s at rated speed: DCEE from t = 0 with a 20 N·m load after 0.05 s.
fn short_config() -> ScenarioConfig<f64> {
    let mut cfg = ScenarioConfig::<f64>::default();
    let seg = |t0: f64, t1: f64, load: f64| Segment {
        t_start: t0,
        t_end: t1,
        speed_ref: 3000.0,
        load,
        mode: Mode::Dcee,
        torque_source: TorqueSource::Ideal,
    };
    cfg.timeline.segments = vec![seg(0.0, 0.05, 0.0), seg(0.05, 0.1, 20.0)];
    cfg
}

#[test]
fn one_second_run_logs_one_line_per_tick() {
    let run = run_scenario(&ScenarioConfig::<f64>::default()).unwrap();
    assert_eq!(run.summary.ticks, 10_000);
    assert_eq!(run.summary.plant_steps, 1_000_000);
    let bytes = to_csv_bytes(&run.log);
    let lines = bytes.split(|&b| b == b'\n').filter(|l| !l.is_empty()).count();
    assert_eq!(lines, 10_001);
    assert!(run.log.windows(2).all(|w| w[1].t > w[0].t));
}

#[test]
fn csv_round_trip_is_byte_stable() {
    let run = run_scenario(&short_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    export_csv(&run.log, &path).unwrap();
    let back = read_csv(&path).unwrap();
    assert_eq!(back.len(), run.log.len());
    assert_eq!(to_csv_bytes(&back), std::fs::read(&path).unwrap());
    for (a, b) in run.log.iter().zip(&back) {
        assert_eq!((a.segment, a.mode, a.torque_source), (b.segment, b.mode, b.torque_source));
        assert!((a.i_q - b.i_q).abs() <= 1e-12 * a.i_q.abs().max(1.0));
        assert_eq!(a.estimates.len(), b.estimates.len());
    }
}

#[test]
fn reruns_are_byte_identical_and_seed_matters() {
    let mut cfg = short_config();
    cfg.noise.current_std = 0.05;
    cfg.noise.seed = 9;
    let a = to_csv_bytes(&run_scenario(&cfg).unwrap().log);
    let b = to_csv_bytes(&run_scenario(&cfg).unwrap().log);
    assert_eq!(a, b);
    cfg.noise.seed = 10;
    let c = to_csv_bytes(&run_scenario(&cfg).unwrap().log);
    assert_ne!(a, c);
}

#[test]
fn f32_scalar_runs_the_same_scenario() {
    let text = short_config().to_toml_string().unwrap();
    let cfg32 = ScenarioConfig::<f32>::from_toml_str(&text).unwrap();
    let run32 = run_scenario(&cfg32).unwrap();
    let run64 = run_scenario(&short_config()).unwrap();
    assert_eq!(run32.log.len(), run64.log.len());
    let (s32, s64) = (&run32.summary.segments[1], &run64.summary.segments[1]);
    assert!((s32.i_s - s64.i_s).abs() < 0.01 * s64.i_s, "{} vs {}", s32.i_s, s64.i_s);
}

#[test]
fn dcee_settles_on_the_mtpa_curve() {
    let run = run_scenario(&short_config()).unwrap();
    let last = run.log.last().unwrap();
    let beta = (-last.i_d).atan2(last.i_q);
    let mtpa = dcee_mtpa::mtpa::mtpa_point(last.i_s, 0.12, 1.2e-3).unwrap().beta;
    assert!((beta - mtpa).abs() < 0.01, "beta {beta} vs {mtpa} at i_s = {}", last.i_s);
    assert!((last.psi_f_hat - 0.12).abs() < 1e-3 * 0.12);
}

#[test]
fn invalid_config_is_a_config_error() {
    let mut cfg = short_config();
    cfg.sim.t_s = 1.5e-6;
    let err = run_scenario(&cfg).unwrap_err();
    assert!(matches!(err, ScenarioError::Config(_)));
    assert_eq!(err.exit_code(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips_through_toml(
        k_x in 0.01..1.0f64,
        delta_x in 1e-3..1.0f64,
        seed in any::<u64>(),
        count in 1usize..10,
        load in 0.0..40.0f64,
    ) {
        let mut cfg = ScenarioConfig::<f64>::default();
        cfg.dcee.k_x = k_x;
        cfg.dcee.delta_x = delta_x;
        cfg.noise.seed = seed;
        cfg.bank.count = count;
        cfg.timeline.segments[3].load = load;
        let text = cfg.to_toml_string().unwrap();
        prop_assert_eq!(ScenarioConfig::<f64>::from_toml_str(&text).unwrap(), cfg);
    }
}
