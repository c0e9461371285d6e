#![allow(dead_code)]

use std::path::PathBuf;

use pru_core::autodiff::{ParamStore, Tape};
use pru_core::gradcheck::{finite_diff_grad_with, max_relative_error, param_finite_diff};
use pru_core::lstm_reference::lstm_reference_step;
use pru_core::recurrent::{CellConfig, CellState, PruCell};
use pru_core::training::{build_vocab, read_corpus, Vocab};
use pru_core::transforms::SubsampleMode;
use pru_core::{seeded_rng, Execution, Result, Tensor};
use rand::Rng;

pub fn random_inputs(n: usize, steps: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = seeded_rng(seed);
    (0..steps)
        .map(|_| Tensor::vector((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect()
}

/// Sum of `h` over all steps, starting from a zero state.
pub fn sum_h(cell: &PruCell, store: &ParamStore, xs: &[Tensor]) -> Result<f64> {
    let mut tape = Tape::new(store);
    let mut s = CellState::zeros(cell.hidden_dim()).detached(&mut tape);
    let mut total = 0.0;
    for x in xs {
        let xv = tape.constant(x.clone());
        s = cell.step(&mut tape, xv, s)?;
        total += tape.value(s.h).sum();
    }
    Ok(total)
}

/// Largest relative error between analytic and central-difference gradients
/// of `sum_h` over every parameter and every input coordinate.
pub fn cell_gradcheck(config: CellConfig, steps: usize, eps: f64, seed: u64) -> Result<f64> {
    let mut rng = seeded_rng(seed);
    let mut store = ParamStore::new();
    let cell = PruCell::new(&mut store, "cell", config, &mut rng)?;
    // move biases off zero so every gate sees a generic operating point
    for id in cell.bias_params() {
        for v in store.value_mut(id).data_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    let xs = random_inputs(config.input_dim, steps, seed ^ 0x5eed);

    let mut tape = Tape::new(&store);
    let mut s = CellState::zeros(cell.hidden_dim()).detached(&mut tape);
    let mut xvars = Vec::new();
    let mut hs = Vec::new();
    for x in &xs {
        let xv = tape.input(x.clone());
        xvars.push(xv);
        s = cell.step(&mut tape, xv, s)?;
        hs.push(tape.sum(s.h));
    }
    let all = tape.concat(&hs)?;
    let loss = tape.sum(all);
    let grads = tape.backward(loss)?;

    let mut worst: f64 = 0.0;
    for id in store.ids().collect::<Vec<_>>() {
        let numeric = param_finite_diff(
            Execution::Parallel,
            &store,
            id,
            |p| sum_h(&cell, p, &xs),
            eps,
        )?;
        let analytic = grads
            .param(id)
            .map(|t| t.data().to_vec())
            .unwrap_or_else(|| vec![0.0; numeric.len()]);
        worst = worst.max(max_relative_error(&analytic, numeric.data()));
    }
    for (t, &xv) in xvars.iter().enumerate() {
        let numeric = finite_diff_grad_with(
            Execution::Parallel,
            |probe| {
                let mut xs2 = xs.clone();
                xs2[t] = probe.clone();
                sum_h(&cell, &store, &xs2)
            },
            &xs[t],
            eps,
        )?;
        let analytic = grads
            .wrt(xv)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; numeric.len()]);
        worst = worst.max(max_relative_error(&analytic, numeric.data()));
    }
    Ok(worst)
}

/// Runs a `K = g = 1`, residual-free cell and the reference LSTM with the
/// same weights for `steps` steps; true when every `h` and `c` is bit-identical.
pub fn lstm_trajectories_identical(n: usize, steps: usize, seed: u64) -> Result<bool> {
    let mut rng = seeded_rng(seed);
    let mut store = ParamStore::new();
    let config = CellConfig::pru(n, n, 1, 1, SubsampleMode::AvgPool).with_residual(false);
    let cell = PruCell::new(&mut store, "cell", config, &mut rng)?;
    for id in cell.bias_params() {
        for v in store.value_mut(id).data_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    let weights = cell.to_lstm_weights(&store)?;
    let xs = random_inputs(n, steps, seed.wrapping_add(1000));
    let mut state = CellState::zeros(n);
    let (mut h, mut c) = (vec![0.0; n], vec![0.0; n]);
    for x in &xs {
        state = pru_core::recurrent::pru_step(&cell, &store, x, &state)?;
        let (h2, c2) = lstm_reference_step(&weights, x.data(), &h, &c)?;
        h = h2;
        c = c2;
        let same = state
            .h
            .data()
            .iter()
            .zip(&h)
            .all(|(a, b)| a.to_bits() == b.to_bits())
            && state
                .c
                .data()
                .iter()
                .zip(&c)
                .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("data")
}

/// The bundled public-domain text, tokenized, with a vocabulary of tokens
/// seen at least `min_count` times in the training split.
pub fn alice(min_count: usize) -> (Vocab, Vec<usize>, Vec<usize>) {
    let dir = data_dir().join("alice");
    let train = read_corpus(&dir.join("train.txt")).expect("bundled corpus");
    let valid = read_corpus(&dir.join("valid.txt")).expect("bundled corpus");
    let vocab = build_vocab(&train, min_count).expect("non-empty corpus");
    let (t, v) = (vocab.encode(&train), vocab.encode(&valid));
    (vocab, t, v)
}
