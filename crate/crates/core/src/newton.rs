//! Full Newton iteration with a forward-difference Jacobian, used by every
//! implicit step. The iteration count is the control signal for the
//! iteration-based step policies, so the Jacobian is rebuilt at every update.

use serde::{Deserialize, Serialize};

use crate::error::NewtonError;
use crate::linalg::{lu_solve, Matrix};
use crate::system::inf_norm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonSettings {
    /// Convergence threshold on the residual infinity norm.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relative finite-difference perturbation.
    pub fd_epsilon: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 20,
            fd_epsilon: 1e-7,
        }
    }
}

impl NewtonSettings {
    pub fn is_valid(&self) -> bool {
        self.tolerance > 0.0 && self.max_iterations >= 1 && self.fd_epsilon > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonResult {
    pub solution: Vec<f64>,
    /// Completed Newton updates.
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
}

/// Forward-difference Jacobian of `residual` at `point`.
///
/// Column `i` uses the perturbation `fd_epsilon * max(1, |point_i|)`. `base`
/// is the residual at `point` when the caller already has it.
pub fn numeric_jacobian<F>(
    residual: &mut F,
    point: &[f64],
    base: Option<&[f64]>,
    fd_epsilon: f64,
) -> Matrix
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = point.len();
    let owned;
    let r0 = match base {
        Some(r) => r,
        None => {
            owned = residual(point);
            &owned
        }
    };
    let mut jac = Matrix::zeros(n);
    let mut probe = point.to_vec();
    for col in 0..n {
        let step = fd_epsilon * point[col].abs().max(1.0);
        probe[col] = point[col] + step;
        // the representable perturbation, not the requested one
        let actual = probe[col] - point[col];
        let r = residual(&probe);
        for row in 0..n {
            jac.set(row, col, (r[row] - r0[row]) / actual);
        }
        probe[col] = point[col];
    }
    jac
}

/// Solves `residual(z) = 0` starting from `guess`.
///
/// Convergence is tested before every update, so a guess that already
/// satisfies the tolerance returns with zero iterations.
pub fn solve<F>(
    mut residual: F,
    guess: &[f64],
    settings: &NewtonSettings,
) -> Result<NewtonResult, NewtonError>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = guess.len();
    let mut z = guess.to_vec();
    let mut r = residual(&z);
    if r.len() != n {
        return Err(NewtonError::DimensionMismatch {
            expected: n,
            actual: r.len(),
        });
    }
    let mut norm = inf_norm(&r);
    let mut best = NewtonResult {
        solution: z.clone(),
        iterations: 0,
        converged: false,
        final_residual: norm,
    };

    let mut iterations = 0;
    loop {
        if norm <= settings.tolerance {
            return Ok(NewtonResult {
                solution: z,
                iterations,
                converged: true,
                final_residual: norm,
            });
        }
        if iterations >= settings.max_iterations || !norm.is_finite() {
            best.iterations = iterations;
            return Err(NewtonError::NonConvergence { best });
        }

        let jac = numeric_jacobian(&mut residual, &z, Some(&r), settings.fd_epsilon);
        let delta = lu_solve(&jac, &r).map_err(|_| NewtonError::SingularJacobian { iterations })?;
        for (zi, di) in z.iter_mut().zip(&delta) {
            *zi -= di;
        }
        iterations += 1;
        r = residual(&z);
        norm = inf_norm(&r);
        if norm < best.final_residual {
            best.solution.clone_from(&z);
            best.final_residual = norm;
        }
    }
}
