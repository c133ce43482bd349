//! Step-length policies and the integration drivers.
//!
//! Five methods share one driver loop:
//!
//! * `Fitm` / `Fam2`: fixed step, trapezoidal or two-step Adams-Moulton (the
//!   latter bootstrapped with a trapezoidal step wherever history is missing).
//! * `Vitm` / `Vam2`: step length scaled by the Newton iteration count.
//! * `Pcm`: trapezoidal predictor, Adams-Moulton corrector; their difference
//!   drives the step length while the predictor alone is recorded.
//!
//! All drivers land exactly on event times and `t_end`. After an event the
//! algebraic variables are re-solved, multistep history is dropped and the
//! variable-step methods restart from `h_min`.

use std::fmt;
use std::ops::ControlFlow;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, IntegrationError, StepError};
use crate::newton::{self, NewtonSettings};
use crate::steppers::{
    am2_corrector_iterated, am2_implicit_step_to, itm_step_to, Kernel, MultistepHistory,
    StepOutcome,
};
use crate::system::{inf_norm, validate_system, ControllerConfig, Dae, DaeState, DaeSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fitm,
    Fam2,
    Vitm,
    Vam2,
    Pcm,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Fitm, Method::Fam2, Method::Vitm, Method::Vam2, Method::Pcm];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fitm => "fitm",
            Method::Fam2 => "fam2",
            Method::Vitm => "vitm",
            Method::Vam2 => "vam2",
            Method::Pcm => "pcm",
        }
    }

    pub fn is_fixed_step(self) -> bool {
        matches!(self, Method::Fitm | Method::Fam2)
    }

    fn uses_am2(self) -> bool {
        matches!(self, Method::Fam2 | Method::Vam2)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ConfigError::Invalid(format!("unknown method `{s}`")))
    }
}

/// One accepted step (or the initial point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// The recorded result; for the predictor-corrector method this is always
    /// the trapezoidal predictor.
    pub state: DaeState,
    /// Corrector minus predictor, empty when no estimate was formed.
    pub error_estimate: Vec<f64>,
    pub g_max: Option<f64>,
    pub newton_iterations: usize,
    /// Step length chosen for the following step.
    pub h_next: f64,
    /// Formula that produced the state; `None` for the initial record and for
    /// the post-event record that follows the pre-event one at an event time.
    pub kernel: Option<Kernel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub method: Method,
    pub records: Vec<StepRecord>,
    pub total_newton_iterations: usize,
    pub accepted_steps: usize,
    pub variable_names: Vec<String>,
}

impl SimulationTrace {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.state.t)
    }

    pub fn last(&self) -> &StepRecord {
        self.records.last().expect("trace always holds the initial record")
    }
}

/// Truncation-error step rule: double below `g_low`, halve above `g_high`,
/// otherwise keep; the result is clamped to `[h_min, h_max]`.
pub fn pcm_decide(g_max: f64, h: f64, cfg: &ControllerConfig) -> f64 {
    if g_max < cfg.g_low {
        (2.0 * h).min(cfg.h_max)
    } else if g_max <= cfg.g_high {
        h
    } else {
        // also taken for NaN
        (0.5 * h).max(cfg.h_min)
    }
}

/// Newton-iteration step rule: grow below `iters_low`, shrink above
/// `iters_high`, otherwise keep; clamped to `[h_min, h_max]`.
pub fn iteration_decide(iterations: usize, h: f64, cfg: &ControllerConfig) -> f64 {
    if iterations < cfg.iters_low {
        (cfg.grow_factor * h).min(cfg.h_max)
    } else if iterations > cfg.iters_high {
        (cfg.shrink_factor * h).max(cfg.h_min)
    } else {
        h
    }
}

/// Per-step data handed to a driver observer.
#[derive(Debug)]
pub struct StepReport<'a> {
    pub from: &'a DaeState,
    /// `f` at `from`.
    pub f_from: &'a [f64],
    /// History as it stood before this step.
    pub history: &'a MultistepHistory,
    pub h: f64,
    pub kernel: Kernel,
    pub outcome: &'a StepOutcome,
    pub corrector: Option<&'a [f64]>,
    pub record: &'a StepRecord,
}

/// Kahan-compensated simulation clock.
#[derive(Debug, Clone, Copy)]
struct Clock {
    sum: f64,
    carry: f64,
}

impl Clock {
    fn new(t: f64) -> Self {
        Self { sum: t, carry: 0.0 }
    }

    fn peek(&self, h: f64) -> (f64, f64) {
        let y = h - self.carry;
        let t = self.sum + y;
        (t, (t - self.sum) - y)
    }

    fn advance(&mut self, h: f64) {
        let (t, carry) = self.peek(h);
        self.sum = t;
        self.carry = carry;
    }

    fn set(&mut self, t: f64) {
        self.sum = t;
        self.carry = 0.0;
    }
}

/// Relative slack under which a step that would land just past a target is
/// shortened to hit it.
const LANDING_RTOL: f64 = 1e-9;

fn observe_none(_: &StepReport<'_>) -> ControlFlow<()> {
    ControlFlow::Continue(())
}

/// Fixed-step trapezoidal (`Method::Fitm`) or two-step Adams-Moulton
/// (`Method::Fam2`) integration over `[t0, t_end]`.
pub fn fixed_step_integrate<M: Dae>(
    method: Method,
    system: &DaeSystem<M>,
    t_end: f64,
    h: f64,
    settings: &NewtonSettings,
) -> Result<SimulationTrace, IntegrationError> {
    if !method.is_fixed_step() {
        return Err(ConfigError::Invalid(format!("{method} is not a fixed-step method")).into());
    }
    let cfg = ControllerConfig {
        h_min: h,
        h_max: h,
        ..ControllerConfig::default()
    };
    integrate_observed(method, system, t_end, h, &cfg, settings, observe_none)
}

pub fn pcm_integrate<M: Dae>(
    system: &DaeSystem<M>,
    t_end: f64,
    cfg: &ControllerConfig,
    settings: &NewtonSettings,
) -> Result<SimulationTrace, IntegrationError> {
    integrate_observed(Method::Pcm, system, t_end, cfg.h_min, cfg, settings, observe_none)
}

pub fn vitm_integrate<M: Dae>(
    system: &DaeSystem<M>,
    t_end: f64,
    cfg: &ControllerConfig,
    settings: &NewtonSettings,
) -> Result<SimulationTrace, IntegrationError> {
    integrate_observed(Method::Vitm, system, t_end, cfg.h_min, cfg, settings, observe_none)
}

pub fn vam2_integrate<M: Dae>(
    system: &DaeSystem<M>,
    t_end: f64,
    cfg: &ControllerConfig,
    settings: &NewtonSettings,
) -> Result<SimulationTrace, IntegrationError> {
    integrate_observed(Method::Vam2, system, t_end, cfg.h_min, cfg, settings, observe_none)
}

/// Runs `method` from `system.initial` to `t_end`.
///
/// `h0` is the fixed step for the fixed-step methods and the initial step
/// (clamped to `[h_min, h_max]`) otherwise. `observer` sees every accepted
/// step and may stop the run early by returning `Break`, in which case the
/// trace so far is returned.
pub fn integrate_observed<M, O>(
    method: Method,
    system: &DaeSystem<M>,
    t_end: f64,
    h0: f64,
    cfg: &ControllerConfig,
    settings: &NewtonSettings,
    mut observer: O,
) -> Result<SimulationTrace, IntegrationError>
where
    M: Dae,
    O: FnMut(&StepReport<'_>) -> ControlFlow<()>,
{
    let fixed = method.is_fixed_step();
    if fixed {
        if !(h0 > 0.0 && h0.is_finite()) {
            return Err(ConfigError::Invalid(format!("fixed step must be positive, got {h0}")).into());
        }
    } else {
        cfg.validate()?;
    }
    if !settings.is_valid() {
        return Err(ConfigError::Invalid(format!("invalid Newton settings {settings:?}")).into());
    }
    let t0 = system.initial.t;
    if !(t_end >= t0) {
        return Err(ConfigError::Invalid(format!("t_end {t_end} precedes t0 {t0}")).into());
    }
    let report = validate_system(system, settings.tolerance, Some(t_end));
    if !report.is_ok() {
        return Err(IntegrationError::InvalidSystem(report.to_string()));
    }

    let mut model = system.model.clone();
    let nx = model.n_diff();
    let mut state = system.initial.clone();
    let mut f_cur = model.f(&state.x, &state.y, state.t);
    let mut h = if fixed { h0 } else { cfg.clamp(h0) };
    let mut history = MultistepHistory::invalid();
    let mut clock = Clock::new(t0);
    let mut next_event = 0;
    let mut total_iters = 0;

    let mut records = vec![StepRecord {
        state: state.clone(),
        error_estimate: Vec::new(),
        g_max: None,
        newton_iterations: 0,
        h_next: h,
        kernel: None,
    }];

    let fail = |time: f64, h: f64, source: StepError| IntegrationError::StepFailure {
        method,
        time,
        h,
        source,
    };

    'outer: loop {
        let mut fired = false;
        while let Some(event) = system.events.get(next_event) {
            if event.time > state.t {
                break;
            }
            model.apply(&event.action);
            next_event += 1;
            fired = true;
        }
        if fired {
            let mut iterations = 0;
            if model.n_alg() > 0 {
                let result = reinit_algebraic(&model, &state, settings)
                    .map_err(|e| fail(state.t, 0.0, e.into()))?;
                iterations = result.iterations;
                let mut y = result.solution;
                model.reconcile_algebraic(&state.y, &mut y);
                state.y = y;
            }
            total_iters += iterations;
            f_cur = model.f(&state.x, &state.y, state.t);
            history.invalidate();
            if !fixed {
                h = cfg.h_min;
            }
            // the post-event state shares the event time with the pre-event record
            records.push(StepRecord {
                state: DaeState { h: 0.0, ..state.clone() },
                error_estimate: Vec::new(),
                g_max: None,
                newton_iterations: iterations,
                h_next: h,
                kernel: None,
            });
        }
        if state.t >= t_end {
            break;
        }

        let target = system
            .events
            .get(next_event)
            .map_or(t_end, |e| e.time.min(t_end));
        let mut retried = false;

        loop {
            let remaining = target - state.t;
            let landing = remaining <= h * (1.0 + LANDING_RTOL);
            // a landing step within the tolerance of h keeps the nominal length
            let h_step = if landing && (h - remaining).abs() > LANDING_RTOL * h {
                remaining
            } else {
                h
            };
            let t_next = if landing { target } else { clock.peek(h_step).0 };

            let kernel = if method.uses_am2() && history.matches(h_step) {
                Kernel::Am2
            } else {
                Kernel::Itm
            };
            let attempt = match kernel {
                Kernel::Itm => itm_step_to(&model, &state, &f_cur, t_next, h_step, settings),
                Kernel::Am2 => am2_implicit_step_to(&model, &state, &history, t_next, h_step, settings),
            };

            let outcome = match attempt {
                Ok(outcome) => outcome,
                Err(err) => {
                    let can_shrink = h > cfg.h_min && !fixed;
                    match method {
                        Method::Pcm if can_shrink && !retried => {
                            retried = true;
                            h = (0.5 * h).max(cfg.h_min);
                        }
                        Method::Vitm | Method::Vam2 if can_shrink => {
                            h = (cfg.shrink_factor * h).max(cfg.h_min);
                        }
                        _ => return Err(fail(state.t, h_step, err)),
                    }
                    history.invalidate();
                    continue;
                }
            };
            total_iters += outcome.newton.iterations;

            let mut corrector = None;
            let mut error_estimate = Vec::new();
            let mut g_max = None;
            let h_next = match method {
                Method::Fitm | Method::Fam2 => h,
                Method::Vitm | Method::Vam2 => iteration_decide(outcome.newton.iterations, h, cfg),
                Method::Pcm => {
                    if history.matches(h_step) {
                        let corrected = am2_corrector_iterated(
                            &model,
                            &outcome,
                            &history,
                            h_step,
                            cfg.corrector_iterations,
                        )
                        .map_err(|e| fail(state.t, h_step, e))?;
                        let (g, gm) = truncation_error(&outcome.state.x, &corrected);
                        error_estimate = g;
                        g_max = Some(gm);
                        corrector = Some(corrected);
                        if cfg.reject_on_high_error && !landing && gm > cfg.g_high && h > cfg.h_min {
                            h = (0.5 * h).max(cfg.h_min);
                            history.invalidate();
                            continue;
                        }
                        pcm_decide(gm, h, cfg)
                    } else {
                        h
                    }
                }
            };

            let mut new_state = outcome.state.clone();
            new_state.t = t_next;
            let record = StepRecord {
                state: new_state,
                error_estimate,
                g_max,
                newton_iterations: outcome.newton.iterations,
                h_next,
                kernel: Some(kernel),
            };

            let flow = observer(&StepReport {
                from: &state,
                f_from: &f_cur,
                history: &history,
                h: h_step,
                kernel,
                outcome: &outcome,
                corrector: corrector.as_deref(),
                record: &record,
            });

            history.push(&f_cur, &outcome.f_new, h_step);
            if h_next != h {
                history.invalidate();
            }
            h = h_next;
            if landing {
                clock.set(target);
            } else {
                clock.advance(h_step);
            }
            state = record.state.clone();
            f_cur = outcome.f_new;
            debug_assert_eq!(f_cur.len(), nx);
            records.push(record);

            if flow.is_break() {
                break 'outer;
            }
            break;
        }
    }

    Ok(SimulationTrace {
        method,
        accepted_steps: records.iter().filter(|r| r.kernel.is_some()).count(),
        records,
        total_newton_iterations: total_iters,
        variable_names: model.variable_names(),
    })
}

/// Re-solves `g(x, y, t) = 0` for `y` with `x` held fixed.
fn reinit_algebraic<M: Dae>(
    model: &M,
    state: &DaeState,
    settings: &NewtonSettings,
) -> Result<newton::NewtonResult, crate::error::NewtonError> {
    newton::solve(|y: &[f64]| model.g(&state.x, y, state.t), &state.y, settings)
}

/// Corrector minus predictor, and its infinity norm.
pub fn truncation_error(predictor_x: &[f64], corrector_x: &[f64]) -> (Vec<f64>, f64) {
    assert_eq!(
        predictor_x.len(),
        corrector_x.len(),
        "predictor and corrector lengths differ"
    );
    let g: Vec<f64> = corrector_x.iter().zip(predictor_x).map(|(c, p)| c - p).collect();
    let norm = inf_norm(&g);
    (g, norm)
}
