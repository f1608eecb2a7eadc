use super::{Matrix, NumericError};
use crate::math;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    /// Standard moment decay rates (0.9, 0.999) and ε = 1e-8.
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for one parameter matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Matrix,
    v: Matrix,
    t: u64,
    config: AdamConfig,
}

impl AdamState {
    pub fn new(shape: (usize, usize), config: AdamConfig) -> Self {
        Self {
            m: Matrix::zeros(shape.0, shape.1),
            v: Matrix::zeros(shape.0, shape.1),
            t: 0,
            config,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &Matrix {
        &self.m
    }

    pub fn second_moment(&self) -> &Matrix {
        &self.v
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }
}

/// One bias-corrected Adam update of `param` in place.
pub fn adam_step(
    param: &mut Matrix,
    grad: &Matrix,
    state: &mut AdamState,
) -> Result<(), NumericError> {
    for (op, other) in [("adam_grad", grad), ("adam_state", &state.m)] {
        if param.shape() != other.shape() {
            return Err(NumericError::ShapeMismatch {
                op,
                left: param.shape(),
                right: other.shape(),
            });
        }
    }
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.t += 1;
    let correction1 = 1.0 - math::powi(beta1, state.t);
    let correction2 = 1.0 - math::powi(beta2, state.t);

    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for (i, p) in param.data_mut().iter_mut().enumerate() {
        let g = grad.data()[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / correction1;
        let v_hat = v[i] / correction2;
        *p -= learning_rate * m_hat / (math::sqrt(v_hat) + epsilon);
    }
    Ok(())
}
