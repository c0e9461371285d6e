//! Central finite differences, the independent oracle for every analytic gradient.

use crate::autodiff::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::parallel::{self, Execution};
use crate::tensor::Tensor;

/// `|a - b| / max(1, |a|, |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Largest [`relative_error`] over paired elements.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter()
        .zip(b)
        .map(|(&x, &y)| relative_error(x, y))
        .fold(0.0, f64::max)
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numeric(format!("{what} returned {v}")))
    }
}

/// `(f(x + eps e_i) - f(x - eps e_i)) / 2 eps` for every coordinate `i`.
pub fn finite_diff_grad<F>(f: F, x: &Tensor, eps: f64) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<f64> + Sync + Send,
{
    finite_diff_grad_with(Execution::Sequential, f, x, eps)
}

/// [`finite_diff_grad`] with coordinates spread according to `exec`.
pub fn finite_diff_grad_with<F>(exec: Execution, f: F, x: &Tensor, eps: f64) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<f64> + Sync + Send,
{
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::contract("eps must be positive"));
    }
    let coords = parallel::map_range(exec, x.len(), |i| -> Result<f64> {
        let mut probe = x.clone();
        let base = probe.data()[i];
        probe.data_mut()[i] = base + eps;
        let hi = finite(f(&probe)?, "objective")?;
        probe.data_mut()[i] = base - eps;
        let lo = finite(f(&probe)?, "objective")?;
        Ok((hi - lo) / (2.0 * eps))
    });
    let data = coords.into_iter().collect::<Result<Vec<_>>>()?;
    Tensor::new(x.shape().to_vec(), data)
}

/// Finite-difference gradient of `loss` with respect to one parameter of `store`.
pub fn param_finite_diff<F>(
    exec: Execution,
    store: &ParamStore,
    id: ParamId,
    loss: F,
    eps: f64,
) -> Result<Tensor>
where
    F: Fn(&ParamStore) -> Result<f64> + Sync + Send,
{
    let value = store.value(id).clone();
    finite_diff_grad_with(
        exec,
        |probe| {
            let mut perturbed = store.clone();
            *perturbed.value_mut(id) = probe.clone();
            loss(&perturbed)
        },
        &value,
        eps,
    )
}
