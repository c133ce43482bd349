//! Variable-step integration of semi-explicit differential-algebraic
//! equations with a trapezoidal predictor and a two-step Adams-Moulton
//! corrector, together with the fixed-step and iteration-controlled
//! baselines and an experiment harness.

pub mod error;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod newton;
pub mod step_control;
pub mod steppers;
pub mod system;

pub use error::{HarnessError, IntegrationError, ModelError, NewtonError, StepError};
pub use newton::{NewtonResult, NewtonSettings};
pub use step_control::{
    fixed_step_integrate, integrate_observed, iteration_decide, pcm_decide, pcm_integrate,
    truncation_error, vam2_integrate, vitm_integrate, Method, SimulationTrace, StepRecord,
    StepReport,
};
pub use steppers::{
    am2_corrector, am2_corrector_iterated, am2_implicit_step, itm_step, Kernel, MultistepHistory,
    StepOutcome,
};
pub use system::{validate_system, ControllerConfig, Dae, DaeState, DaeSystem, Event};
