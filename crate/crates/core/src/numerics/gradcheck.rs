use crate::error::{Error, Result};

use super::{ParamStore, Tensor};

/// Central-difference estimate of `d loss / d w` for every element of every
/// parameter in `params`. Values are restored bit-for-bit afterwards.
pub fn finite_difference_gradient<F>(
    mut loss_fn: F,
    params: &mut ParamStore,
    h: f64,
) -> Result<Vec<Tensor>>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut out = Vec::with_capacity(params.len());
    for pi in 0..params.len() {
        let shape = params.by_index(pi).shape().to_vec();
        let mut grad = Tensor::zeros(&shape);
        for e in 0..grad.len() {
            let orig = params.by_index(pi).value.data()[e];
            params.by_index_mut(pi).value.data_mut()[e] = orig + h;
            let plus = loss_fn(params);
            params.by_index_mut(pi).value.data_mut()[e] = orig - h;
            let minus = loss_fn(params);
            params.by_index_mut(pi).value.data_mut()[e] = orig;
            let (plus, minus) = (plus?, minus?);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at perturbed element {e} of `{}`",
                    params.by_index(pi).name()
                )));
            }
            grad.data_mut()[e] = (plus - minus) / (2.0 * h);
        }
        out.push(grad);
    }
    Ok(out)
}

/// `|a - b| / (|a| + |b| + 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs() + 1e-8)
}
