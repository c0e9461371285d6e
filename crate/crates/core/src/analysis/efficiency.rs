use std::time::Instant;

use rand::Rng;

use crate::autodiff::{ParamStore, Tape};
use crate::config::ModelConfig;
use crate::error::Result;
use crate::recurrent::{CellState, PruCell, StackedRnn};
use crate::tensor::Tensor;
use crate::{derive_seed, seeded_rng};

/// Multiply-accumulates per timestep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MacCount {
    pub recurrent: usize,
    pub decoder: usize,
}

impl MacCount {
    pub fn total(&self) -> usize {
        self.recurrent + self.decoder
    }
}

pub fn mac_count(config: &ModelConfig) -> MacCount {
    let recurrent = config
        .cell_configs()
        .iter()
        .map(|c| c.macs_per_step())
        .sum();
    let (v, d, top) = (config.vocab_size, config.embed_dim, config.top_dim());
    let decoder = match (config.tie_weights, top == d) {
        (true, true) => v * d,
        (true, false) => top * d + v * d,
        (false, _) => v * top,
    };
    MacCount { recurrent, decoder }
}

/// Wall-clock seconds of repeated forward runs.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub steps: usize,
    pub seconds: Vec<f64>,
}

impl BenchResult {
    pub fn mean(&self) -> f64 {
        self.seconds.iter().sum::<f64>() / self.seconds.len() as f64
    }

    /// Sample standard deviation over the mean.
    pub fn coefficient_of_variation(&self) -> f64 {
        let n = self.seconds.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        let var = self.seconds.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (n - 1) as f64;
        var.sqrt() / m
    }

    pub fn steps_per_second(&self) -> f64 {
        self.steps as f64 / self.mean()
    }
}

fn build_stack(config: &ModelConfig, seed: u64) -> Result<(ParamStore, StackedRnn)> {
    let mut rng = seeded_rng(seed);
    let mut store = ParamStore::new();
    let layers = config
        .cell_configs()
        .into_iter()
        .enumerate()
        .map(|(l, c)| PruCell::new(&mut store, &format!("layer{l}"), c, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok((store, StackedRnn::new(layers)?))
}

fn run_steps(store: &ParamStore, stack: &StackedRnn, inputs: &[Tensor]) -> Result<Vec<CellState>> {
    let mut states = stack.zero_states();
    let mut tape = Tape::new(store);
    for x in inputs {
        tape.clear();
        let mut below = tape.constant(x.clone());
        for (cell, state) in stack.layers().iter().zip(states.iter_mut()) {
            let prev = state.detached(&mut tape);
            let next = cell.step(&mut tape, below, prev)?;
            *state = CellState::read(&tape, next);
            below = next.h;
        }
    }
    Ok(states)
}

/// Times `runs` forward passes of `steps` steps through the recurrent stack
/// after `warmup` untimed steps.
pub fn bench_stack(
    config: &ModelConfig,
    steps: usize,
    warmup: usize,
    runs: usize,
    seed: u64,
) -> Result<BenchResult> {
    let (store, stack) = build_stack(config, seed)?;
    let mut rng = seeded_rng(derive_seed(seed, &[1]));
    let inputs: Vec<Tensor> = (0..steps.max(warmup))
        .map(|_| {
            Tensor::vector(
                (0..config.embed_dim)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
            )
        })
        .collect();
    run_steps(&store, &stack, &inputs[..warmup])?;
    let mut seconds = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        std::hint::black_box(run_steps(&store, &stack, &inputs[..steps])?);
        seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(BenchResult { steps, seconds })
}

/// The configured model and its same-shape LSTM, timed alike.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub pru: BenchResult,
    pub lstm: BenchResult,
    pub pru_macs: MacCount,
    pub lstm_macs: MacCount,
}

pub fn bench(config: &ModelConfig, steps: usize, runs: usize, seed: u64) -> Result<BenchReport> {
    let warmup = (steps / 4).max(1);
    let lstm_config = config.as_lstm();
    Ok(BenchReport {
        pru: bench_stack(config, steps, warmup, runs, seed)?,
        lstm: bench_stack(&lstm_config, steps, warmup, runs, seed)?,
        pru_macs: mac_count(config),
        lstm_macs: mac_count(&lstm_config),
    })
}

impl BenchReport {
    /// Columns: `model,recurrent_macs,steps,mean_seconds,cv,steps_per_second`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,recurrent_macs,steps,mean_seconds,cv,steps_per_second\n");
        for (name, r, m) in [
            ("pru", &self.pru, &self.pru_macs),
            ("lstm", &self.lstm, &self.lstm_macs),
        ] {
            s.push_str(&format!(
                "{name},{},{},{:.6},{:.4},{:.1}\n",
                m.recurrent,
                r.steps,
                r.mean(),
                r.coefficient_of_variation(),
                r.steps_per_second()
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recurrent::CellConfig;
    use crate::transforms::SubsampleMode;

    #[test]
    fn cell_macs() {
        assert_eq!(CellConfig::lstm(400, 1400).macs_per_step(), 10_080_000);
        let pru = CellConfig::pru(400, 1400, 2, 4, SubsampleMode::AvgPool);
        assert_eq!(pru.macs_per_step(), 3_642_400);
        let skip = CellConfig::pru(400, 1400, 2, 4, SubsampleMode::Skip);
        assert_eq!(skip.macs_per_step(), 3_640_000);
    }

    #[test]
    fn bench_runs() {
        let mut mc = ModelConfig::pru(10, 8, 8, 2, 2);
        mc.layers = 2;
        let r = bench(&mc, 4, 3, 0).unwrap();
        assert_eq!(r.pru.seconds.len(), 3);
        assert!(r.pru_macs.recurrent < r.lstm_macs.recurrent);
    }
}
