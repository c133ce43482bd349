//! Problem definition for semi-explicit DAEs `x' = f(x, y, t)`, `0 = g(x, y, t)`,
//! plus the snapshot and configuration types shared by every integrator.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// A semi-explicit DAE model.
///
/// `f` returns the derivative of the differential variables and `g` the
/// residual of the algebraic constraints. Parameters that events mutate live
/// inside the implementor; integrators work on a run-local clone.
pub trait Dae: Clone + Send + Sync {
    /// Parameter mutation carried by an [`Event`].
    type Action: Clone + fmt::Debug + Send + Sync;

    fn n_diff(&self) -> usize;
    fn n_alg(&self) -> usize;
    fn f(&self, x: &[f64], y: &[f64], t: f64) -> Vec<f64>;
    fn g(&self, x: &[f64], y: &[f64], t: f64) -> Vec<f64>;

    /// Applies an event action to the model parameters.
    fn apply(&mut self, action: &Self::Action);

    /// Maps a freshly re-solved algebraic vector onto the representative
    /// closest to `previous` when the algebraic equations have equivalent
    /// roots (e.g. angles modulo a full turn). Called after event re-solves.
    fn reconcile_algebraic(&self, _previous: &[f64], _y: &mut [f64]) {}

    /// Column names for the differential then algebraic variables.
    fn variable_names(&self) -> Vec<String> {
        (0..self.n_diff())
            .map(|i| format!("x_{i}"))
            .chain((0..self.n_alg()).map(|k| format!("y_{k}")))
            .collect()
    }
}

/// Time-stamped snapshot of all differential and algebraic variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaeState {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Step length used to reach this state; zero at the initial point.
    pub h: f64,
}

impl DaeState {
    pub fn new(t: f64, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { t, x, y, h: 0.0 }
    }

    /// All variables in `(x, y)` order.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.x.iter().chain(self.y.iter()).copied()
    }

    pub fn value(&self, index: usize) -> f64 {
        if index < self.x.len() {
            self.x[index]
        } else {
            self.y[index - self.x.len()]
        }
    }
}

#[derive(Debug, Clone)]
pub struct Event<A> {
    pub time: f64,
    pub action: A,
}

/// A model together with its initial point and event schedule.
#[derive(Debug, Clone)]
pub struct DaeSystem<M: Dae> {
    pub model: M,
    pub events: Vec<Event<M::Action>>,
    pub initial: DaeState,
}

impl<M: Dae> DaeSystem<M> {
    pub fn new(model: M, initial: DaeState) -> Self {
        Self {
            model,
            events: Vec::new(),
            initial,
        }
    }

    pub fn with_event(mut self, time: f64, action: M::Action) -> Self {
        self.events.push(Event { time, action });
        self
    }

    pub fn n_diff(&self) -> usize {
        self.model.n_diff()
    }

    pub fn n_alg(&self) -> usize {
        self.model.n_alg()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    InconsistentInitialCondition {
        residual: f64,
    },
    EventsUnordered {
        index: usize,
    },
    EventOutOfRange {
        index: usize,
        time: f64,
    },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DimensionMismatch {
                what,
                expected,
                actual,
            } => write!(f, "dimension mismatch in {what}: expected {expected}, got {actual}"),
            Self::InconsistentInitialCondition { residual } => {
                write!(f, "inconsistent initial condition (max|g| = {residual:e})")
            }
            Self::EventsUnordered { index } => write!(f, "events unordered at index {index}"),
            Self::EventOutOfRange { index, time } => {
                write!(f, "event {index} at t={time} outside the integration interval")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "ok");
        }
        let joined: Vec<String> = self.issues.iter().map(ToString::to_string).collect();
        write!(f, "{}", joined.join("; "))
    }
}

/// Checks dimensions, algebraic consistency of the initial point and the
/// event schedule. Never fails; problems are collected in the report.
pub fn validate_system<M: Dae>(
    system: &DaeSystem<M>,
    tolerance: f64,
    t_end: Option<f64>,
) -> ValidationReport {
    let mut issues = Vec::new();
    let model = &system.model;
    let init = &system.initial;
    let (nx, ny) = (model.n_diff(), model.n_alg());

    if init.x.len() != nx {
        issues.push(ValidationIssue::DimensionMismatch {
            what: "initial x",
            expected: nx,
            actual: init.x.len(),
        });
    }
    if init.y.len() != ny {
        issues.push(ValidationIssue::DimensionMismatch {
            what: "initial y",
            expected: ny,
            actual: init.y.len(),
        });
    }
    if issues.is_empty() {
        let fx = model.f(&init.x, &init.y, init.t);
        if fx.len() != nx {
            issues.push(ValidationIssue::DimensionMismatch {
                what: "f output",
                expected: nx,
                actual: fx.len(),
            });
        }
        let gx = model.g(&init.x, &init.y, init.t);
        if gx.len() != ny {
            issues.push(ValidationIssue::DimensionMismatch {
                what: "g output",
                expected: ny,
                actual: gx.len(),
            });
        } else {
            let residual = inf_norm(&gx);
            if residual > tolerance || !residual.is_finite() {
                issues.push(ValidationIssue::InconsistentInitialCondition { residual });
            }
        }
    }

    for (index, pair) in system.events.windows(2).enumerate() {
        if pair[1].time <= pair[0].time {
            issues.push(ValidationIssue::EventsUnordered { index: index + 1 });
        }
    }
    for (index, event) in system.events.iter().enumerate() {
        let above = t_end.is_some_and(|end| event.time > end);
        if event.time < init.t || above || !event.time.is_finite() {
            issues.push(ValidationIssue::EventOutOfRange {
                index,
                time: event.time,
            });
        }
    }
    ValidationReport { issues }
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, &e| {
        if e.is_nan() {
            f64::NAN
        } else {
            acc.max(e.abs())
        }
    })
}

/// Thresholds and clamps for the truncation-error and iteration-count step
/// policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub h_min: f64,
    pub h_max: f64,
    pub g_low: f64,
    pub g_high: f64,
    pub iters_low: usize,
    pub iters_high: usize,
    pub grow_factor: f64,
    pub shrink_factor: f64,
    /// Redo a step at half length when its error estimate exceeds `g_high`.
    pub reject_on_high_error: bool,
    /// Number of corrector applications per predictor-corrector step.
    pub corrector_iterations: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            h_min: 0.01,
            h_max: 0.16,
            g_low: 5e-5,
            g_high: 5e-4,
            iters_low: 10,
            iters_high: 15,
            grow_factor: 1.3,
            shrink_factor: 0.9,
            reject_on_high_error: false,
            corrector_iterations: 1,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if !(self.h_min > 0.0 && self.h_min <= self.h_max && self.h_max.is_finite()) {
            return bad("require 0 < h_min <= h_max");
        }
        if !(self.g_low > 0.0 && self.g_low < self.g_high) {
            return bad("require 0 < g_low < g_high");
        }
        if self.iters_low >= self.iters_high {
            return bad("require iters_low < iters_high");
        }
        if !(self.shrink_factor > 0.0 && self.shrink_factor < 1.0 && self.grow_factor > 1.0) {
            return bad("require 0 < shrink_factor < 1 < grow_factor");
        }
        if self.corrector_iterations == 0 {
            return bad("corrector_iterations must be at least 1");
        }
        Ok(())
    }

    pub fn clamp(&self, h: f64) -> f64 {
        h.clamp(self.h_min, self.h_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[derive(Clone)]
    struct Decay;

    impl Dae for Decay {
        type Action = Infallible;
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
        fn apply(&mut self, action: &Infallible) {
            match *action {}
        }
    }

    /// x' = -x, 0 = y - x
    #[derive(Clone)]
    struct Tracking;

    impl Dae for Tracking {
        type Action = f64;
        fn n_diff(&self) -> usize {
            1
        }
        fn n_alg(&self) -> usize {
            1
        }
        fn f(&self, x: &[f64], _y: &[f64], _t: f64) -> Vec<f64> {
            vec![-x[0]]
        }
        fn g(&self, x: &[f64], y: &[f64], _t: f64) -> Vec<f64> {
            vec![y[0] - x[0]]
        }
        fn apply(&mut self, _action: &f64) {}
    }

    #[test]
    fn well_formed_ode_has_empty_report() {
        let sys = DaeSystem::new(Decay, DaeState::new(0.0, vec![1.0], vec![]));
        let report = validate_system(&sys, 1e-8, Some(1.0));
        assert!(report.is_ok(), "{report}");
    }

    #[test]
    fn inconsistent_initial_condition_is_reported() {
        let sys = DaeSystem::new(Tracking, DaeState::new(0.0, vec![1.0], vec![1.1]));
        let report = validate_system(&sys, 1e-8, None);
        assert_eq!(report.issues.len(), 1);
        match report.issues[0] {
            ValidationIssue::InconsistentInitialCondition { residual } => {
                assert!((residual - 0.1).abs() < 1e-12)
            }
            ref other => panic!("unexpected {other:?}"),
        }
        assert!(report.to_string().contains("inconsistent initial condition"));
    }

    #[test]
    fn unordered_events_are_reported() {
        let sys = DaeSystem::new(Tracking, DaeState::new(0.0, vec![1.0], vec![1.0]))
            .with_event(2.0, 0.0)
            .with_event(1.0, 0.0);
        let report = validate_system(&sys, 1e-8, Some(5.0));
        assert_eq!(report.issues, vec![ValidationIssue::EventsUnordered { index: 1 }]);
        assert!(report.to_string().contains("events unordered"));
    }

    #[test]
    fn dimension_mismatch_and_out_of_range_event() {
        let sys = DaeSystem::new(Tracking, DaeState::new(0.0, vec![1.0, 2.0], vec![1.0]))
            .with_event(7.0, 0.0);
        let report = validate_system(&sys, 1e-8, Some(5.0));
        assert!(matches!(
            report.issues[0],
            ValidationIssue::DimensionMismatch { expected: 1, actual: 2, .. }
        ));
        assert!(matches!(report.issues[1], ValidationIssue::EventOutOfRange { index: 0, .. }));
    }

    #[test]
    fn default_controller_config_is_valid() {
        let cfg = ControllerConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.h_min, 0.01);
        assert_eq!(cfg.h_max, 0.16);
        assert_eq!(cfg.g_low, 5e-5);
        assert_eq!(cfg.g_high, 5e-4);
        assert_eq!((cfg.iters_low, cfg.iters_high), (10, 15));
        assert_eq!((cfg.grow_factor, cfg.shrink_factor), (1.3, 0.9));
    }

    #[test]
    fn invalid_controller_configs_are_rejected() {
        let base = ControllerConfig::default();
        let cases = [
            ControllerConfig { h_min: 0.0, ..base },
            ControllerConfig { h_min: 0.2, ..base },
            ControllerConfig { g_low: 1e-3, ..base },
            ControllerConfig { iters_low: 15, ..base },
            ControllerConfig { shrink_factor: 1.0, ..base },
            ControllerConfig { grow_factor: 0.9, ..base },
        ];
        for cfg in cases {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
