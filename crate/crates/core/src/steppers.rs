//! Single-step kernels: the implicit trapezoidal method, the two-step
//! Adams-Moulton formula solved implicitly, and the explicit Adams-Moulton
//! corrector applied on top of a trapezoidal predictor.

use crate::error::StepError;
use crate::newton::{self, NewtonResult, NewtonSettings};
use crate::system::{Dae, DaeState};

/// Derivatives at the two most recent accepted points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultistepHistory {
    /// `f` at the current point.
    pub f_n: Vec<f64>,
    /// `f` at the previous point.
    pub f_nm1: Vec<f64>,
    /// Step length between the previous and current point.
    pub h_prev: f64,
    pub valid: bool,
}

/// Relative tolerance used when deciding whether two step lengths are equal.
pub const STEP_MATCH_RTOL: f64 = 1e-9;

impl MultistepHistory {
    pub fn invalid() -> Self {
        Self::default()
    }

    pub fn new(f_nm1: Vec<f64>, f_n: Vec<f64>, h_prev: f64) -> Self {
        Self {
            f_n,
            f_nm1,
            h_prev,
            valid: h_prev > 0.0,
        }
    }

    pub fn invalidate(&mut self) {
        self.valid = false;
    }

    /// Whether the uniform-step formula applies for a step of length `h`.
    pub fn matches(&self, h: f64) -> bool {
        self.valid && same_step(self.h_prev, h)
    }

    /// Shifts the history forward after an accepted step of length `h`.
    pub fn push(&mut self, f_from: &[f64], f_new: &[f64], h: f64) {
        self.f_nm1.clear();
        self.f_nm1.extend_from_slice(f_from);
        self.f_n.clear();
        self.f_n.extend_from_slice(f_new);
        self.h_prev = h;
        self.valid = true;
    }

    fn check(&self, h: f64, n_diff: usize) -> Result<(), StepError> {
        if !self.valid {
            return Err(StepError::InvalidHistory("history not initialised"));
        }
        if self.f_n.len() != n_diff || self.f_nm1.len() != n_diff {
            return Err(StepError::InvalidHistory("derivative length mismatch"));
        }
        if !same_step(self.h_prev, h) {
            return Err(StepError::InvalidHistory("step length differs from history"));
        }
        Ok(())
    }
}

pub(crate) fn same_step(a: f64, b: f64) -> bool {
    (a - b).abs() <= STEP_MATCH_RTOL * a.abs().max(b.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: DaeState,
    pub newton: NewtonResult,
    /// `f` evaluated at the new state.
    pub f_new: Vec<f64>,
}

/// Which implicit formula produced a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Itm,
    Am2,
}

/// One implicit trapezoidal step of length `h` from `from`.
pub fn itm_step<M: Dae>(
    model: &M,
    from: &DaeState,
    h: f64,
    settings: &NewtonSettings,
) -> Result<StepOutcome, StepError> {
    let f_from = model.f(&from.x, &from.y, from.t);
    itm_step_to(model, from, &f_from, from.t + h, h, settings)
}

/// Trapezoidal step whose end time is supplied by the caller, so drivers can
/// keep a compensated clock.
pub(crate) fn itm_step_to<M: Dae>(
    model: &M,
    from: &DaeState,
    f_from: &[f64],
    t_next: f64,
    h: f64,
    settings: &NewtonSettings,
) -> Result<StepOutcome, StepError> {
    let half = 0.5 * h;
    implicit_step(model, from, t_next, h, settings, |x_new, f_new, x_n, i| {
        x_new - x_n - half * (f_new + f_from[i])
    })
}

/// One implicit two-step Adams-Moulton step of length `h`; `history` must
/// hold `f` at `from` and at the point before it, spaced by `h`.
pub fn am2_implicit_step<M: Dae>(
    model: &M,
    from: &DaeState,
    history: &MultistepHistory,
    h: f64,
    settings: &NewtonSettings,
) -> Result<StepOutcome, StepError> {
    am2_implicit_step_to(model, from, history, from.t + h, h, settings)
}

pub(crate) fn am2_implicit_step_to<M: Dae>(
    model: &M,
    from: &DaeState,
    history: &MultistepHistory,
    t_next: f64,
    h: f64,
    settings: &NewtonSettings,
) -> Result<StepOutcome, StepError> {
    history.check(h, model.n_diff())?;
    let c = h / 12.0;
    let (f_n, f_nm1) = (&history.f_n, &history.f_nm1);
    implicit_step(model, from, t_next, h, settings, |x_new, f_new, x_n, i| {
        x_new - x_n - c * (5.0 * f_new + 8.0 * f_n[i] - f_nm1[i])
    })
}

/// Newton solve on the stacked unknown `(x_{n+1}, y_{n+1})`, guessed as the
/// previous state. `diff_residual(x_new_i, f_new_i, x_n_i, i)` is the
/// difference equation for component `i`.
fn implicit_step<M, R>(
    model: &M,
    from: &DaeState,
    t_next: f64,
    h: f64,
    settings: &NewtonSettings,
    diff_residual: R,
) -> Result<StepOutcome, StepError>
where
    M: Dae,
    R: Fn(f64, f64, f64, usize) -> f64,
{
    let nx = model.n_diff();
    let residual = |z: &[f64]| {
        let (x, y) = z.split_at(nx);
        let fx = model.f(x, y, t_next);
        let mut r: Vec<f64> = (0..nx).map(|i| diff_residual(x[i], fx[i], from.x[i], i)).collect();
        r.extend(model.g(x, y, t_next));
        r
    };
    let guess: Vec<f64> = from.values().collect();
    let result = newton::solve(residual, &guess, settings)?;
    let (x, y) = result.solution.split_at(nx);
    let state = DaeState {
        t: t_next,
        x: x.to_vec(),
        y: y.to_vec(),
        h,
    };
    let f_new = model.f(&state.x, &state.y, t_next);
    Ok(StepOutcome {
        state,
        newton: result,
        f_new,
    })
}

/// Adams-Moulton corrector for a trapezoidal predictor.
///
/// Evaluates `x_n + h[5 f(pred) + 8 f_n - f_{n-1}]/12`, written relative to the
/// predictor as `x_pred - h[f(pred) - 2 f_n + f_{n-1}]/12`. The two forms agree
/// to within the predictor's Newton residual; the second keeps the difference
/// `corrected - predicted` free of that residual.
pub fn am2_corrector(
    predictor: &StepOutcome,
    history: &MultistepHistory,
    h: f64,
) -> Result<Vec<f64>, StepError> {
    history.check(h, predictor.state.x.len())?;
    let c = h / 12.0;
    Ok(predictor
        .state
        .x
        .iter()
        .enumerate()
        .map(|(i, &xp)| xp - c * (predictor.f_new[i] - 2.0 * history.f_n[i] + history.f_nm1[i]))
        .collect())
}

/// Applies the corrector `iterations` times, re-evaluating `f` at each new
/// corrected value with the predictor's algebraic variables.
pub fn am2_corrector_iterated<M: Dae>(
    model: &M,
    predictor: &StepOutcome,
    history: &MultistepHistory,
    h: f64,
    iterations: usize,
) -> Result<Vec<f64>, StepError> {
    let mut current = am2_corrector(predictor, history, h)?;
    let mut f_prev = predictor.f_new.clone();
    let (y, t) = (&predictor.state.y, predictor.state.t);
    let c = 5.0 * h / 12.0;
    for _ in 1..iterations {
        let f_cur = model.f(&current, y, t);
        for (i, xi) in current.iter_mut().enumerate() {
            *xi += c * (f_cur[i] - f_prev[i]);
        }
        f_prev = f_cur;
    }
    Ok(current)
}
