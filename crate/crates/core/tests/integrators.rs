use std::convert::Infallible;
use std::ops::ControlFlow;

use approx::assert_abs_diff_eq;
use pcmsim::models::{analytic_system, linear_system, AnalyticModel};
use pcmsim::*;

fn settings() -> NewtonSettings {
    NewtonSettings::default()
}

fn xs(trace: &SimulationTrace) -> Vec<f64> {
    trace.records.iter().map(|r| r.state.x[0]).collect()
}

fn steps(trace: &SimulationTrace) -> Vec<f64> {
    trace.records.iter().skip(1).map(|r| r.state.h).collect()
}

/// x' = -x with a no-op event action.
#[derive(Clone)]
struct Decay;

impl Dae for Decay {
    type Action = ();
    fn n_diff(&self) -> usize {
        1
    }
    fn n_alg(&self) -> usize {
        0
    }
    fn f(&self, x: &[f64], _y: &[f64], _t: f64) -> Vec<f64> {
        vec![-x[0]]
    }
    fn g(&self, _x: &[f64], _y: &[f64], _t: f64) -> Vec<f64> {
        Vec::new()
    }
    fn apply(&mut self, _action: &()) {}
}

/// x' = 0 with one algebraic variable pinned to x.
#[derive(Clone)]
struct Frozen;

impl Dae for Frozen {
    type Action = ();
    fn n_diff(&self) -> usize {
        2
    }
    fn n_alg(&self) -> usize {
        1
    }
    fn f(&self, _x: &[f64], _y: &[f64], _t: f64) -> Vec<f64> {
        vec![0.0, 0.0]
    }
    fn g(&self, x: &[f64], y: &[f64], _t: f64) -> Vec<f64> {
        vec![y[0] - x[0]]
    }
    fn apply(&mut self, _action: &()) {}
}

/// Consistent at t = 0, after which the algebraic equation y^2 + 1 = 0 has
/// no real root and every Newton solve fails.
#[derive(Clone)]
struct Hopeless;

impl Dae for Hopeless {
    type Action = Infallible;
    fn n_diff(&self) -> usize {
        1
    }
    fn n_alg(&self) -> usize {
        1
    }
    fn f(&self, _x: &[f64], _y: &[f64], _t: f64) -> Vec<f64> {
        vec![0.0]
    }
    fn g(&self, _x: &[f64], y: &[f64], t: f64) -> Vec<f64> {
        // consistent at t = 0 only
        vec![if t == 0.0 { y[0] } else { y[0] * y[0] + 1.0 }]
    }
    fn apply(&mut self, action: &Infallible) {
        match *action {}
    }
}

fn frozen_system() -> DaeSystem<Frozen> {
    DaeSystem::new(Frozen, DaeState::new(0.0, vec![1.0, -2.0], vec![1.0]))
}

#[test]
fn fixed_itm_states() {
    let sys = DaeSystem::new(Decay, DaeState::new(0.0, vec![1.0], vec![]));
    let trace = fixed_step_integrate(Method::Fitm, &sys, 0.2, 0.1, &settings()).unwrap();
    let got = xs(&trace);
    assert_eq!(got.len(), 3);
    for (g, w) in got.iter().zip([1.0, 0.904762, 0.818594]) {
        assert_abs_diff_eq!(*g, w, epsilon = 1e-6);
    }
}

#[test]
fn fixed_am2_bootstraps_with_itm() {
    let sys = DaeSystem::new(Decay, DaeState::new(0.0, vec![1.0], vec![]));
    let trace = fixed_step_integrate(Method::Fam2, &sys, 0.2, 0.1, &settings()).unwrap();
    for (g, w) in xs(&trace).iter().zip([1.0, 0.904762, 0.818667]) {
        assert_abs_diff_eq!(*g, w, epsilon = 1e-6);
    }
    let kernels: Vec<_> = trace.records.iter().map(|r| r.kernel).collect();
    assert_eq!(kernels, [None, Some(Kernel::Itm), Some(Kernel::Am2)]);
}

#[test]
fn empty_interval_keeps_initial_record() {
    let sys = analytic_system();
    for method in Method::ALL {
        let trace = match method {
            Method::Fitm | Method::Fam2 => fixed_step_integrate(method, &sys, 0.0, 0.01, &settings()),
            Method::Vitm => vitm_integrate(&sys, 0.0, &ControllerConfig::default(), &settings()),
            Method::Vam2 => vam2_integrate(&sys, 0.0, &ControllerConfig::default(), &settings()),
            Method::Pcm => pcm_integrate(&sys, 0.0, &ControllerConfig::default(), &settings()),
        }
        .unwrap();
        assert_eq!(trace.records.len(), 1, "{method}");
        assert_eq!(trace.accepted_steps, 0);
    }
}

#[test]
fn uniform_grid_without_drift() {
    let trace = fixed_step_integrate(Method::Fitm, &analytic_system(), 10.0, 0.01, &settings()).unwrap();
    assert_eq!(trace.records.len(), 1001);
    assert_eq!(trace.last().state.t, 10.0);
    for (k, r) in trace.records.iter().enumerate() {
        assert!((r.state.t - k as f64 * 0.01).abs() < 1e-12, "t[{k}] = {}", r.state.t);
    }
}

/// Error at t = 1 on x' = -x for the given method and step.
fn error_at_one(method: Method, h: f64) -> f64 {
    let trace = fixed_step_integrate(method, &linear_system(-1.0), 1.0, h, &settings()).unwrap();
    assert_eq!(trace.last().state.t, 1.0);
    (trace.last().state.x[0] - (-1.0f64).exp()).abs()
}

#[test]
fn order_of_accuracy() {
    for (a, b) in [(0.02, 0.01), (0.01, 0.005)] {
        let itm = error_at_one(Method::Fitm, a) / error_at_one(Method::Fitm, b);
        assert!((3.6..=4.4).contains(&itm), "ITM ratio {itm} for {a} -> {b}");
        let am2 = error_at_one(Method::Fam2, a) / error_at_one(Method::Fam2, b);
        assert!((6.8..=9.2).contains(&am2), "AM-2 ratio {am2} for {a} -> {b}");
    }
}

#[test]
fn analytic_sum_converges_at_method_order() {
    let exact = AnalyticModel::default().exact_sum(1.0);
    let err = |method, h| {
        let t = fixed_step_integrate(method, &analytic_system(), 1.0, h, &settings()).unwrap();
        (t.last().state.x.iter().sum::<f64>() - exact).abs()
    };
    for (a, b) in [(0.02, 0.01), (0.01, 0.005)] {
        let ratio = err(Method::Fitm, a) / err(Method::Fitm, b);
        assert!((3.6..=4.4).contains(&ratio), "ITM {ratio}");
    }
}

#[test]
fn pcm_on_constant_dynamics_doubles_to_the_clamp() {
    let cfg = ControllerConfig::default();
    let trace = pcm_integrate(&frozen_system(), 3.0, &cfg, &settings()).unwrap();
    let estimates: Vec<f64> = trace.records.iter().filter_map(|r| r.g_max).collect();
    assert!(estimates.len() > 5);
    assert!(estimates.iter().all(|&g| g == 0.0));
    // each new step length first rebuilds a uniform history, then the
    // estimate doubles it
    let hs = steps(&trace);
    assert_eq!(&hs[..9], &[0.01, 0.01, 0.02, 0.02, 0.04, 0.04, 0.08, 0.08, 0.16]);
    assert!(hs[8..hs.len() - 1].iter().all(|&h| h == 0.16));
    assert_eq!(trace.last().state.x, vec![1.0, -2.0]);
}

#[test]
fn pcm_lands_on_event_then_restarts_at_h_min() {
    let sys = DaeSystem::new(Decay, DaeState::new(0.0, vec![1.0], vec![])).with_event(1.0, ());
    let cfg = ControllerConfig::default();
    let frozen = DaeSystem::new(Frozen, frozen_system().initial).with_event(1.0, ());
    for trace in [
        pcm_integrate(&frozen, 2.0, &cfg, &settings()).unwrap(),
        pcm_integrate(&sys, 2.0, &cfg, &settings()).unwrap(),
    ] {
        let at: Vec<usize> = (0..trace.records.len()).filter(|&i| trace.records[i].state.t == 1.0).collect();
        assert_eq!(at.len(), 2, "pre- and post-event records");
        let next = &trace.records[at[1] + 1];
        assert_eq!(next.state.h, cfg.h_min);
        assert_eq!(next.kernel, Some(Kernel::Itm));
    }
    // the frozen system reaches h_max before the event
    let trace = pcm_integrate(&frozen, 2.0, &cfg, &settings()).unwrap();
    let before: Vec<f64> = trace.records.iter().filter(|r| r.state.t < 1.0).map(|r| r.state.h).collect();
    assert!(before.contains(&0.16));
}

#[test]
fn pcm_on_analytic_system_grows_to_h_max() {
    let cfg = ControllerConfig::default();
    let trace = pcm_integrate(&analytic_system(), 10.0, &cfg, &settings()).unwrap();
    assert_eq!(trace.records[1].state.h, 0.01);
    let hs: Vec<(f64, f64)> = trace.records.iter().skip(1).map(|r| (r.state.t, r.state.h)).collect();
    assert!(hs.iter().any(|&(_, h)| h == 0.16));
    // non-decreasing after the fast transients, apart from the landing step
    let late: Vec<f64> = hs.iter().filter(|&&(t, _)| t > 1.0).map(|&(_, h)| h).collect();
    for w in late[..late.len() - 1].windows(2) {
        assert!(w[1] >= w[0], "{late:?}");
    }
    for r in &trace.records[1..] {
        assert!(r.h_next >= cfg.h_min && r.h_next <= cfg.h_max);
    }
}

#[test]
fn pcm_records_are_the_predictor_solves() {
    let cfg = ControllerConfig::default();
    let mut checked = 0;
    let trace = integrate_observed(Method::Pcm, &analytic_system(), 10.0, 0.01, &cfg, &settings(), |rep| {
        assert_eq!(rep.record.state, rep.outcome.state);
        checked += 1;
        ControlFlow::Continue(())
    })
    .unwrap();
    assert_eq!(checked, trace.accepted_steps);
}

#[test]
fn vitm_grows_geometrically_on_affine_problems() {
    let cfg = ControllerConfig::default();
    let trace = vitm_integrate(&linear_system(-1.0), 5.0, &cfg, &settings()).unwrap();
    let hs = steps(&trace);
    let mut expected = cfg.h_min;
    for &h in &hs[..6] {
        assert_abs_diff_eq!(h, expected, epsilon = 1e-15);
        expected = (expected * 1.3).min(cfg.h_max);
    }
    let first_max = hs.iter().position(|&h| h == cfg.h_max).unwrap();
    assert!(first_max < 20);
}

#[test]
fn vitm_on_analytic_system_reaches_h_max_quickly() {
    let cfg = ControllerConfig::default();
    let trace = vitm_integrate(&analytic_system(), 10.0, &cfg, &settings()).unwrap();
    assert!(trace.records.iter().skip(1).all(|r| r.newton_iterations <= 2));
    let first_max = steps(&trace).iter().position(|&h| h == cfg.h_max).unwrap();
    assert!(first_max < 20, "h_max first used at step {first_max}");
}

#[test]
fn vitm_exhaustion_ends_in_step_failure() {
    let sys = DaeSystem::new(Hopeless, DaeState::new(0.0, vec![0.0], vec![0.0]));
    let settings = NewtonSettings {
        max_iterations: 3,
        ..NewtonSettings::default()
    };
    let cfg = ControllerConfig {
        h_min: 0.01,
        h_max: 0.16,
        ..ControllerConfig::default()
    };
    for method in [Method::Vitm, Method::Vam2, Method::Pcm] {
        let err = match method {
            Method::Vitm => vitm_integrate(&sys, 1.0, &cfg, &settings),
            Method::Vam2 => vam2_integrate(&sys, 1.0, &cfg, &settings),
            _ => pcm_integrate(&sys, 1.0, &cfg, &settings),
        }
        .unwrap_err();
        match err {
            IntegrationError::StepFailure { method: m, time, h, .. } => {
                assert_eq!(m, method);
                assert_eq!(time, 0.0);
                assert!(h >= cfg.h_min * (1.0 - 1e-12), "{method}: h {h}");
            }
            other => panic!("{method}: {other}"),
        }
    }
    let err = fixed_step_integrate(Method::Fitm, &sys, 1.0, 0.01, &settings).unwrap_err();
    assert!(matches!(err, IntegrationError::StepFailure { .. }));
}

#[test]
fn vam2_matches_vitm_on_constant_dynamics() {
    let cfg = ControllerConfig::default();
    let a = vitm_integrate(&frozen_system(), 3.0, &cfg, &settings()).unwrap();
    let b = vam2_integrate(&frozen_system(), 3.0, &cfg, &settings()).unwrap();
    let states = |t: &SimulationTrace| t.records.iter().map(|r| r.state.clone()).collect::<Vec<_>>();
    assert_eq!(states(&a), states(&b));
}

#[test]
fn vam2_with_pinned_step_matches_fixed_am2() {
    let cfg = ControllerConfig {
        h_min: 0.1,
        h_max: 0.1,
        ..ControllerConfig::default()
    };
    let sys = linear_system(-1.0);
    let v = vam2_integrate(&sys, 2.0, &cfg, &settings()).unwrap();
    let f = fixed_step_integrate(Method::Fam2, &sys, 2.0, 0.1, &settings()).unwrap();
    assert_eq!(v.records.len(), f.records.len());
    for (a, b) in v.records.iter().zip(&f.records) {
        assert_abs_diff_eq!(a.state.t, b.state.t, epsilon = 1e-12);
        assert_abs_diff_eq!(a.state.x[0], b.state.x[0], epsilon = 1e-12);
    }
}

#[test]
fn vam2_bootstraps_after_every_step_change() {
    let cfg = ControllerConfig::default();
    let trace = vam2_integrate(&analytic_system(), 10.0, &cfg, &settings()).unwrap();
    let recs = &trace.records;
    let mut changes = 0;
    for i in 2..recs.len() {
        if (recs[i].state.h - recs[i - 1].state.h).abs() > 1e-9 * recs[i].state.h {
            assert_eq!(recs[i].kernel, Some(Kernel::Itm), "step {i} at t = {}", recs[i].state.t);
            changes += 1;
        }
    }
    assert!(changes > 5);
    assert!(recs.iter().any(|r| r.kernel == Some(Kernel::Am2)));
}

#[test]
fn every_variable_step_lies_in_the_clamp() {
    let cfg = ControllerConfig::default();
    for trace in [
        pcm_integrate(&analytic_system(), 10.0, &cfg, &settings()).unwrap(),
        vitm_integrate(&analytic_system(), 10.0, &cfg, &settings()).unwrap(),
        vam2_integrate(&analytic_system(), 10.0, &cfg, &settings()).unwrap(),
    ] {
        let n = trace.records.len();
        // the final step may be shortened to land on t_end
        for r in &trace.records[1..n - 1] {
            assert!(r.state.h >= cfg.h_min && r.state.h <= cfg.h_max, "{}: {}", trace.method, r.state.h);
        }
        assert!(trace.last().state.h <= cfg.h_max);
        assert_eq!(trace.last().state.t, 10.0);
    }
}

/// Where the local error dominates the Newton tolerance, `g_max` estimates
/// the one-step trapezoidal error `|x_n ((1 + z/2)/(1 - z/2) - e^z)|`.
#[test]
fn estimator_tracks_the_local_itm_error() {
    let cfg = ControllerConfig::default();
    let tight = NewtonSettings {
        tolerance: 1e-13,
        ..NewtonSettings::default()
    };
    for lambda in [-0.5, -2.0, -3.0] {
        let sys = linear_system(lambda);
        let mut seen = 0;
        integrate_observed(Method::Pcm, &sys, 10.0, cfg.h_min, &cfg, &tight, |rep| {
            let z = rep.h * lambda;
            if let (Some(g), true) = (rep.record.g_max, z.abs() <= 0.5) {
                let x_n = rep.from.x[0];
                let true_local = (x_n * ((1.0 + z / 2.0) / (1.0 - z / 2.0) - z.exp())).abs();
                if true_local > 1e-10 {
                    let ratio = g / true_local;
                    assert!((0.5..=2.0).contains(&ratio), "lambda {lambda}, h {}: ratio {ratio}", rep.h);
                    seen += 1;
                }
            }
            ControlFlow::Continue(())
        })
        .unwrap();
        assert!(seen > 10, "lambda {lambda}: only {seen} estimates checked");
    }
}

#[test]
fn states_stay_on_the_algebraic_manifold() {
    let cfg = ControllerConfig::default();
    let sys = DaeSystem::new(Frozen, frozen_system().initial).with_event(0.5, ());
    for trace in [
        pcm_integrate(&sys, 2.0, &cfg, &settings()).unwrap(),
        fixed_step_integrate(Method::Fam2, &sys, 2.0, 0.05, &settings()).unwrap(),
    ] {
        for r in &trace.records {
            assert!((r.state.y[0] - r.state.x[0]).abs() <= 1e-8);
        }
    }
}

#[test]
fn observer_can_stop_a_run() {
    let mut calls = 0;
    let trace = integrate_observed(
        Method::Fitm,
        &linear_system(-1.0),
        10.0,
        0.1,
        &ControllerConfig::default(),
        &settings(),
        |_| {
            calls += 1;
            if calls == 5 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        },
    )
    .unwrap();
    assert_eq!(trace.accepted_steps, 5);
    assert_abs_diff_eq!(trace.last().state.t, 0.5, epsilon = 1e-12);
}
