use spshds::certificates::{CheckSettings, GridSpec, TheoremCheckConfig, TheoremId};
use spshds::executor::ExecConfig;
use spshds::expr::Expr;
use spshds::hybrid::{BundleSpec, JumpDistribution, SystemConfig};
use spshds::library::make_example;
use spshds::montecarlo::{
    check_level_set_nonstationarity, estimate_recurrence, estimate_stability_in_probability,
    sweep_epsilon, Empirical, LevelSetConfig, RecurrenceConfig, StabilityConfig,
};
use spshds::sets::SetSpec;
use spshds::Error;

fn tracker() -> spshds::library::NamedExample {
    make_example("linear-tracker").unwrap()
}

fn stability(delta: f64, eps_ball: f64, trials: usize) -> StabilityConfig {
    StabilityConfig {
        delta,
        eps_ball,
        t_attract: 5.0,
        trials,
        ..StabilityConfig::default()
    }
}

#[test]
fn start_at_equilibrium_succeeds() {
    let ex = tracker();
    let (sys, cert) = (ex.system().unwrap(), ex.certificate().unwrap());
    let r = estimate_stability_in_probability(&sys, &cert, 0.1, &stability(1e-12, 0.5, 1), &ex.config.execution, 0, 1)
        .unwrap();
    assert_eq!(r.estimate.n_success, 1);
    assert!((r.estimate.lower_bound - 0.05).abs() < 1e-12);
}

#[test]
fn ball_smaller_than_start_box_records_failures() {
    let ex = tracker();
    let (sys, cert) = (ex.system().unwrap(), ex.certificate().unwrap());
    let r = estimate_stability_in_probability(&sys, &cert, 0.1, &stability(2.0, 0.3, 40), &ex.config.execution, 5, 0)
        .unwrap();
    assert!(r.estimate.point_estimate < 1.0);
    assert!(r.trials.iter().any(|t| !t.success));
}

#[test]
fn success_count_shrinks_with_the_ball() {
    let ex = tracker();
    let (sys, cert) = (ex.system().unwrap(), ex.certificate().unwrap());
    let counts: Vec<usize> = [2.0, 1.0, 0.6, 0.3]
        .iter()
        .map(|&b| {
            estimate_stability_in_probability(&sys, &cert, 0.1, &stability(0.5, b, 60), &ex.config.execution, 11, 0)
                .unwrap()
                .estimate
                .n_success
        })
        .collect();
    assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
}

#[test]
fn estimates_do_not_depend_on_workers() {
    let ex = make_example("noisy-reset").unwrap();
    let (sys, cert) = (ex.system().unwrap(), ex.certificate().unwrap());
    let cfg = RecurrenceConfig {
        trials: 64,
        ..RecurrenceConfig::default()
    };
    let runs: Vec<_> = [1, 3, 8]
        .iter()
        .map(|&w| estimate_recurrence(&sys, Some(&cert), &cfg, 0.05, &ex.config.execution, 7, w).unwrap())
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[1], runs[2]);
}

#[test]
fn target_covering_the_ball_is_hit_at_once() {
    let ex = make_example("noisy-reset").unwrap();
    let sys = ex.system().unwrap();
    let cfg = RecurrenceConfig {
        o_slow: Some(SetSpec::Box {
            coords: None,
            lo: vec![-6.0],
            hi: vec![6.0],
            open: true,
        }),
        delta_o: 100.0,
        trials: 50,
        ..RecurrenceConfig::default()
    };
    let r = estimate_recurrence(&sys, None, &cfg, 0.05, &ex.config.execution, 0, 0).unwrap();
    assert_eq!(r.estimate.point_estimate, 1.0);
    assert!(r.trials.iter().all(|t| t.hitting_time == Some(0.0)));
}

#[test]
fn empty_horizon_misses_a_distant_target() {
    let ex = make_example("noisy-reset").unwrap();
    let sys = ex.system().unwrap();
    let cfg = RecurrenceConfig {
        o_slow: Some(SetSpec::Box {
            coords: None,
            lo: vec![10.0],
            hi: vec![11.0],
            open: true,
        }),
        tau: 0.0,
        trials: 30,
        ..RecurrenceConfig::default()
    };
    let r = estimate_recurrence(&sys, None, &cfg, 0.05, &ex.config.execution, 0, 0).unwrap();
    assert_eq!(r.estimate.n_success, 0);
}

#[test]
fn recurrence_without_open_set_is_a_config_error() {
    let ex = tracker();
    let sys = ex.system().unwrap();
    let r = estimate_recurrence(&sys, None, &RecurrenceConfig::default(), 0.1, &ExecConfig::default(), 0, 0);
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn sweep_rows_follow_the_threshold() {
    let ex = tracker();
    let (sys, cert) = (ex.system().unwrap(), ex.certificate().unwrap());
    let check = TheoremCheckConfig {
        grid: GridSpec::cube(2, -3.0, 3.0, 21),
        settings: CheckSettings::default(),
        level_set: None,
    };
    let rows = sweep_epsilon(
        &sys,
        &cert,
        &[0.75, 0.1, 0.5, 0.25],
        TheoremId::T1,
        &check,
        &LevelSetConfig::default(),
        &Empirical::Stability(stability(0.25, 0.5, 10)),
        &ex.config.execution,
        0,
        0,
    )
    .unwrap();
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let verdicts: Vec<bool> = rows.iter().map(|r| r.verdict).collect();
    assert_eq!(eps, [0.1, 0.25, 0.5, 0.75]);
    assert_eq!(verdicts, [true, true, false, false]);
    assert!(rows.iter().all(|r| r.estimate.n_trials == 10));
    assert_eq!(rows[2].failing, ["epsilon in (0, eps*)"]);
}

#[test]
fn tracker_levels_are_not_stationary() {
    let ex = tracker();
    let sys = ex.system().unwrap();
    let e = |y: &[f64]| 0.25 * y[0] * y[0] + 0.25 * (y[1] - y[0]).powi(2);
    let r = check_level_set_nonstationarity(
        &sys,
        &e,
        &LevelSetConfig::default(),
        &[-3.0, -3.0],
        &[3.0, 3.0],
        None,
        0.1,
        &ExecConfig::default(),
        0,
    )
    .unwrap();
    assert!(r.passed, "{r:?}");
}

#[test]
fn frozen_flow_is_stationary_everywhere() {
    let sys = SystemConfig {
        n1: 1,
        n2: 1,
        flow_x: BundleSpec::single(vec![Expr::c(0.0)]),
        flow_z: BundleSpec::single(vec![Expr::c(0.0)]),
        jump: BundleSpec::single(vec![Expr::var(0), Expr::var(1)]),
        flow_set: SetSpec::All,
        jump_set: SetSpec::Empty,
        jump_input: JumpDistribution::scalar_atoms(&[(0.0, 1.0)]),
        quasi_steady_state: BundleSpec::single(vec![Expr::var(0)]),
    }
    .build()
    .unwrap();
    let e = |y: &[f64]| 0.5 * y[0] * y[0];
    let cfg = LevelSetConfig {
        duration: 1.0,
        ..LevelSetConfig::default()
    };
    let r = check_level_set_nonstationarity(&sys, &e, &cfg, &[-3.0, -3.0], &[3.0, 3.0], None, 0.1, &ExecConfig::default(), 0)
        .unwrap();
    assert!(!r.passed);
    assert_eq!(r.stationary_levels, cfg.levels);

    let too_high = LevelSetConfig {
        levels: vec![100.0],
        ..cfg
    };
    let err = check_level_set_nonstationarity(&sys, &e, &too_high, &[-3.0, -3.0], &[3.0, 3.0], None, 0.1, &ExecConfig::default(), 0);
    assert!(matches!(err, Err(Error::EmptyLevelSet { .. })));
}
