//! A plain LSTM step written directly over dense matrices.
//!
//! This module deliberately shares no code with the tape or the transforms;
//! it is the oracle the PRU cell is checked against when `g = K = 1`.

use rand::Rng;

use crate::error::{Error, Result};

/// Gate order used throughout: forget, input, content, output.
pub const GATE_NAMES: [&str; 4] = ["f", "i", "c", "o"];

/// Dense LSTM weights, one set per gate in [`GATE_NAMES`] order.
///
/// `input[g]` is `[hidden x input]` and `recurrent[g]` is `[hidden x hidden]`,
/// both row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmWeights {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub input: [Vec<f64>; 4],
    pub recurrent: [Vec<f64>; 4],
    pub bias: [Vec<f64>; 4],
}

impl LstmWeights {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let wi = vec![0.0; input_dim * hidden_dim];
        let wh = vec![0.0; hidden_dim * hidden_dim];
        let b = vec![0.0; hidden_dim];
        LstmWeights {
            input_dim,
            hidden_dim,
            input: [wi.clone(), wi.clone(), wi.clone(), wi],
            recurrent: [wh.clone(), wh.clone(), wh.clone(), wh],
            bias: [b.clone(), b.clone(), b.clone(), b],
        }
    }

    /// Weights uniform in `[-scale, scale]`.
    pub fn random(input_dim: usize, hidden_dim: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut w = Self::zeros(input_dim, hidden_dim);
        for g in 0..4 {
            for v in w.input[g]
                .iter_mut()
                .chain(w.recurrent[g].iter_mut())
                .chain(w.bias[g].iter_mut())
            {
                *v = rng.random_range(-scale..=scale);
            }
        }
        w
    }
}

fn logistic(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

fn dot(row: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 0..v.len() {
        acc += row[j] * v[j];
    }
    acc
}

/// One LSTM step: returns `(h_t, c_t)`.
pub fn lstm_reference_step(
    w: &LstmWeights,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, m) = (w.input_dim, w.hidden_dim);
    if x.len() != n || h_prev.len() != m || c_prev.len() != m {
        return Err(Error::shape(format!(
            "lstm step expects x[{n}], h[{m}], c[{m}], got x[{}], h[{}], c[{}]",
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let mut pre = [vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]];
    for g in 0..4 {
        for j in 0..m {
            let from_input = dot(&w.input[g][j * n..(j + 1) * n], x) + w.bias[g][j];
            let from_context = dot(&w.recurrent[g][j * m..(j + 1) * m], h_prev);
            pre[g][j] = from_input + from_context;
        }
    }
    let mut h = vec![0.0; m];
    let mut c = vec![0.0; m];
    for j in 0..m {
        let f = logistic(pre[0][j]);
        let i = logistic(pre[1][j]);
        let cand = pre[2][j].tanh();
        let o = logistic(pre[3][j]);
        c[j] = f * c_prev[j] + i * cand;
        h[j] = o * c[j].tanh();
    }
    Ok((h, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_zero_state() {
        let w = LstmWeights::zeros(3, 2);
        let (h, c) = lstm_reference_step(&w, &[1.0, -1.0, 0.5], &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(h, vec![0.0; 2]);
        assert_eq!(c, vec![0.0; 2]);
    }

    #[test]
    fn scalar_all_ones() {
        let mut w = LstmWeights::zeros(1, 1);
        for g in 0..4 {
            w.input[g] = vec![1.0];
            w.recurrent[g] = vec![1.0];
        }
        let (h, c) = lstm_reference_step(&w, &[1.0], &[0.0], &[0.0]).unwrap();
        // sigma(1) = 0.7310585786, tanh(1) = 0.7615941560
        assert!((c[0] - 0.5567699411).abs() < 1e-9);
        assert!((h[0] - 0.3696063529).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        let w = LstmWeights::zeros(3, 2);
        assert!(lstm_reference_step(&w, &[1.0], &[0.0; 2], &[0.0; 2]).is_err());
    }
}
