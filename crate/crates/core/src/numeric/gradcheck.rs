use super::{Matrix, NumericError, Tape, Var};

/// Compares tape gradients of a scalar function against central differences.
///
/// `f` receives a fresh tape and the recorded input and must return a scalar
/// node. The result is the largest `|analytic - numeric| / max(1, |analytic|)`
/// over the entries of `x`.
pub fn grad_check<F>(f: F, x: &Matrix, eps: f64) -> Result<f64, NumericError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, NumericError>,
{
    if !(eps > 0.0) {
        return Err(NumericError::InvalidStep(eps));
    }
    let mut tape = Tape::new();
    let input = tape.param(x.clone());
    let loss = f(&mut tape, input)?;
    let grads = tape.backward(loss)?;
    let analytic = grads
        .get(input)
        .cloned()
        .unwrap_or_else(|| Matrix::zeros(x.rows(), x.cols()));

    let eval = |probe: Matrix| -> Result<f64, NumericError> {
        let mut tape = Tape::new();
        let input = tape.param(probe);
        let loss = f(&mut tape, input)?;
        let value = tape.value(loss);
        value
            .as_scalar()
            .ok_or(NumericError::NonScalarLoss { shape: value.shape() })
    };

    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}
