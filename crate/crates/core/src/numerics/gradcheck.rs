use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `theta`.
pub fn finite_diff_grad<F>(mut f: F, theta: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(step > 0.0) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {step}")));
    }
    let mut point = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = point[i];
        point[i] = orig + step;
        let up = f(&point);
        point[i] = orig - step;
        let down = f(&point);
        point[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFiniteValue(format!("objective at coordinate {i}")));
        }
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}
