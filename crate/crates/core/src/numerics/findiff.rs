//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

/// Compares analytic gradients against central differences of `f`.
///
/// `f` maps a full parameter set to a scalar. Every coordinate of every
/// parameter is perturbed by `+h` and `-h`; the relative error against the
/// analytic value uses a `max(1, |analytic|)` denominator. Returns the
/// largest relative error seen.
pub fn finite_diff_check<F>(
    mut f: F,
    params: &[Matrix],
    analytic: &[Matrix],
    h: f64,
) -> Result<f64>
where
    F: FnMut(&[Matrix]) -> Result<f64>,
{
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::InvalidParameter { what: "h", value: h });
    }
    if params.len() != analytic.len() {
        return Err(Error::InvalidConfig(format!(
            "{} parameters but {} gradient tensors",
            params.len(),
            analytic.len()
        )));
    }
    let mut worst = 0.0f64;
    let mut work: Vec<Matrix> = params.to_vec();
    for (pi, grad) in analytic.iter().enumerate() {
        if params[pi].shape() != grad.shape() {
            return Err(Error::ShapeMismatch {
                op: "finite_diff_check",
                left: params[pi].shape(),
                right: grad.shape(),
            });
        }
        for idx in 0..params[pi].data().len() {
            let base = params[pi].data()[idx];

            let mut bumped = params[pi].data().to_vec();
            bumped[idx] = base + h;
            work[pi] = Matrix::from_vec(params[pi].rows(), params[pi].cols(), bumped)?;
            let up = f(&work)?;

            let mut bumped = params[pi].data().to_vec();
            bumped[idx] = base - h;
            work[pi] = Matrix::from_vec(params[pi].rows(), params[pi].cols(), bumped)?;
            let down = f(&work)?;

            work[pi] = params[pi].clone();

            let fd = (up - down) / (2.0 * h);
            let an = grad.data()[idx];
            let err = (fd - an).abs() / an.abs().max(1.0);
            if err > worst {
                worst = err;
            }
        }
    }
    Ok(worst)
}
