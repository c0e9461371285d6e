use crate::autodiff::ParamStore;
use crate::error::{Error, Result};

/// L2 norm over every parameter gradient.
pub fn global_grad_norm(store: &ParamStore) -> f64 {
    store
        .iter()
        .map(|p| p.grad.squared_norm())
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their global norm is at most `clip_norm`.
/// A `clip_norm` of zero disables clipping. Returns the norm before clipping.
pub fn clip_gradients(store: &mut ParamStore, clip_norm: f64) -> Result<f64> {
    let norm = global_grad_norm(store);
    if !norm.is_finite() {
        return Err(Error::numeric(format!("gradient norm is {norm}")));
    }
    if clip_norm > 0.0 && norm > clip_norm {
        let factor = clip_norm / norm;
        for p in store.iter_mut() {
            p.grad.scale(factor);
        }
    }
    Ok(norm)
}

/// Clips, then applies `p -= lr * grad`. Nothing is updated on a non-finite gradient.
pub fn sgd_step(store: &mut ParamStore, lr: f64, clip_norm: f64) -> Result<f64> {
    let norm = clip_gradients(store, clip_norm)?;
    for p in store.iter_mut() {
        for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
            *v -= lr * g;
        }
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn one(grad: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::vector(vec![0.0; grad.len()]));
        s.get_mut(id).grad.data_mut().copy_from_slice(grad);
        s
    }

    fn values(s: &ParamStore) -> Vec<f64> {
        s.iter().next().unwrap().value.data().to_vec()
    }

    #[test]
    fn under_threshold() {
        let mut s = one(&[3.0, 4.0]);
        sgd_step(&mut s, 1.0, 10.0).unwrap();
        assert_eq!(values(&s), vec![-3.0, -4.0]);
    }

    #[test]
    fn clipped_to_unit_norm() {
        let mut s = one(&[3.0, 4.0]);
        assert_eq!(sgd_step(&mut s, 1.0, 1.0).unwrap(), 5.0);
        let v = values(&s);
        assert!((v[0] + 0.6).abs() < 1e-15 && (v[1] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_grads_leave_params() {
        let mut s = one(&[0.0, 0.0]);
        sgd_step(&mut s, 20.0, 0.25).unwrap();
        assert_eq!(values(&s), vec![0.0, 0.0]);
    }

    #[test]
    fn non_finite_aborts() {
        let mut s = one(&[f64::NAN, 1.0]);
        assert!(matches!(sgd_step(&mut s, 1.0, 1.0), Err(Error::Numeric(_))));
        assert_eq!(values(&s), vec![0.0, 0.0]);
    }
}
