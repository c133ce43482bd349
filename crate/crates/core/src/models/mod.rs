//! Built-in test systems.

mod fixture;
mod swing;

use std::convert::Infallible;

pub use fixture::{BusData, BusKind, Fixture, LineData, LoadData, MachineData};
pub use swing::{swing_system, FaultAction, FaultSpec, SwingModel, DEFAULT_FAULT_ADMITTANCE};

use crate::system::{Dae, DaeState, DaeSystem};

/// Time constants of the four decoupled decays, slowest first.
pub const ANALYTIC_TIME_CONSTANTS: [f64; 4] = [10.0, 1.0, 0.1, 0.01];

/// Four decoupled decays `x_i' = -x_i / tau_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticModel {
    pub time_constants: [f64; 4],
}

impl AnalyticModel {
    pub fn exact_solution(&self, t: f64) -> [f64; 4] {
        self.time_constants.map(|tau| (-t / tau).exp())
    }

    pub fn exact_sum(&self, t: f64) -> f64 {
        self.exact_solution(t).iter().sum()
    }
}

impl Default for AnalyticModel {
    fn default() -> Self {
        Self {
            time_constants: ANALYTIC_TIME_CONSTANTS,
        }
    }
}

impl Dae for AnalyticModel {
    type Action = Infallible;

    fn n_diff(&self) -> usize {
        4
    }

    fn n_alg(&self) -> usize {
        0
    }

    fn f(&self, x: &[f64], _y: &[f64], _t: f64) -> Vec<f64> {
        x.iter().zip(&self.time_constants).map(|(xi, tau)| -xi / tau).collect()
    }

    fn g(&self, _x: &[f64], _y: &[f64], _t: f64) -> Vec<f64> {
        Vec::new()
    }

    fn apply(&mut self, action: &Infallible) {
        match *action {}
    }
}

/// The sum-of-exponentials test problem, all components starting at 1.
pub fn analytic_system() -> DaeSystem<AnalyticModel> {
    DaeSystem::new(AnalyticModel::default(), DaeState::new(0.0, vec![1.0; 4], Vec::new()))
}

/// Scalar `x' = lambda x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub lambda: f64,
}

impl LinearModel {
    pub fn new(lambda: f64) -> Self {
        Self { lambda }
    }

    pub fn exact(&self, x0: f64, t: f64) -> f64 {
        x0 * (self.lambda * t).exp()
    }
}

impl Dae for LinearModel {
    type Action = Infallible;

    fn n_diff(&self) -> usize {
        1
    }

    fn n_alg(&self) -> usize {
        0
    }

    fn f(&self, x: &[f64], _y: &[f64], _t: f64) -> Vec<f64> {
        vec![self.lambda * x[0]]
    }

    fn g(&self, _x: &[f64], _y: &[f64], _t: f64) -> Vec<f64> {
        Vec::new()
    }

    fn apply(&mut self, action: &Infallible) {
        match *action {}
    }
}

/// `x' = lambda x`, `x(0) = 1`.
pub fn linear_system(lambda: f64) -> DaeSystem<LinearModel> {
    DaeSystem::new(LinearModel::new(lambda), DaeState::new(0.0, vec![1.0], Vec::new()))
}

/// Any of the built-in models behind one type, for the harness.
#[derive(Debug, Clone)]
pub enum BuiltinModel {
    Analytic(AnalyticModel),
    Linear(LinearModel),
    Swing(SwingModel),
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            BuiltinModel::Analytic($m) => $body,
            BuiltinModel::Linear($m) => $body,
            BuiltinModel::Swing($m) => $body,
        }
    };
}

impl Dae for BuiltinModel {
    type Action = FaultAction;

    fn n_diff(&self) -> usize {
        dispatch!(self, m => m.n_diff())
    }

    fn n_alg(&self) -> usize {
        dispatch!(self, m => m.n_alg())
    }

    fn f(&self, x: &[f64], y: &[f64], t: f64) -> Vec<f64> {
        dispatch!(self, m => m.f(x, y, t))
    }

    fn g(&self, x: &[f64], y: &[f64], t: f64) -> Vec<f64> {
        dispatch!(self, m => m.g(x, y, t))
    }

    fn apply(&mut self, action: &FaultAction) {
        if let BuiltinModel::Swing(m) = self {
            m.apply(action);
        }
    }

    fn reconcile_algebraic(&self, previous: &[f64], y: &mut [f64]) {
        dispatch!(self, m => m.reconcile_algebraic(previous, y))
    }

    fn variable_names(&self) -> Vec<String> {
        dispatch!(self, m => m.variable_names())
    }
}

impl From<DaeSystem<AnalyticModel>> for DaeSystem<BuiltinModel> {
    fn from(sys: DaeSystem<AnalyticModel>) -> Self {
        DaeSystem::new(BuiltinModel::Analytic(sys.model), sys.initial)
    }
}

impl From<DaeSystem<LinearModel>> for DaeSystem<BuiltinModel> {
    fn from(sys: DaeSystem<LinearModel>) -> Self {
        DaeSystem::new(BuiltinModel::Linear(sys.model), sys.initial)
    }
}

impl From<DaeSystem<SwingModel>> for DaeSystem<BuiltinModel> {
    fn from(sys: DaeSystem<SwingModel>) -> Self {
        DaeSystem {
            model: BuiltinModel::Swing(sys.model),
            events: sys.events,
            initial: sys.initial,
        }
    }
}
