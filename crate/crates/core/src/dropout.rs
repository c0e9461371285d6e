//! Standard (inverted) dropout.

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DropoutMode {
    Train,
    #[default]
    Eval,
}

/// Drop probability and mode. Evaluation mode is always the identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutSpec {
    pub p: f64,
    pub mode: DropoutMode,
}

impl DropoutSpec {
    pub fn new(p: f64, mode: DropoutMode) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::config(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        Ok(DropoutSpec { p, mode })
    }

    pub fn eval() -> Self {
        DropoutSpec {
            p: 0.0,
            mode: DropoutMode::Eval,
        }
    }

    pub fn train(p: f64) -> Result<Self> {
        Self::new(p, DropoutMode::Train)
    }

    pub fn with_mode(self, mode: DropoutMode) -> Self {
        DropoutSpec { mode, ..self }
    }

    /// True when this dropout leaves values unchanged.
    pub fn is_identity(&self) -> bool {
        self.mode == DropoutMode::Eval || self.p == 0.0
    }

    /// Draws a keep mask already scaled by `1 / (1 - p)`.
    fn mask(&self, len: usize, rng: &mut impl Rng) -> Vec<f64> {
        let keep = 1.0 - self.p;
        let scale = 1.0 / keep;
        (0..len)
            .map(|_| {
                if rng.random::<f64>() < keep {
                    scale
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Zeroes each element with probability `p` and rescales survivors by `1 / (1 - p)`.
pub fn dropout_apply(spec: &DropoutSpec, x: &Tensor, rng: &mut impl Rng) -> Tensor {
    if spec.is_identity() {
        return x.clone();
    }
    let mask = spec.mask(x.len(), rng);
    let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Dropout on a recorded value; the mask is a constant on the tape.
pub fn dropout_var(tape: &mut Tape, spec: &DropoutSpec, x: Var, rng: &mut impl Rng) -> Result<Var> {
    if spec.is_identity() {
        return Ok(x);
    }
    let shape = tape.value(x).shape().to_vec();
    let mask = Tensor::new(shape.clone(), spec.mask(shape.iter().product(), rng))?;
    let m = tape.constant(mask);
    tape.mul(x, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn zero_probability_and_eval_are_identity() {
        let x = Tensor::vector(vec![1.0, -2.0, 3.5]);
        let mut rng = seeded_rng(1);
        assert_eq!(
            dropout_apply(&DropoutSpec::train(0.0).unwrap(), &x, &mut rng),
            x
        );
        let eval = DropoutSpec::new(0.5, DropoutMode::Eval).unwrap();
        assert_eq!(dropout_apply(&eval, &x, &mut rng), x);
    }

    #[test]
    fn rejects_p_of_one() {
        assert!(DropoutSpec::train(1.0).is_err());
        assert!(DropoutSpec::train(-0.1).is_err());
    }

    #[test]
    fn survivors_are_rescaled() {
        let x = Tensor::vector(vec![1.0; 64]);
        let mut rng = seeded_rng(2);
        let y = dropout_apply(&DropoutSpec::train(0.75).unwrap(), &x, &mut rng);
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 4.0));
    }
}
