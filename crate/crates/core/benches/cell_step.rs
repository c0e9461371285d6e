use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pru_core::lstm_reference::{lstm_reference_step, LstmWeights};
use pru_core::recurrent::{pru_step, CellConfig, CellState, PruCell};
use pru_core::transforms::SubsampleMode;
use pru_core::{seeded_rng, ParamStore, Tensor};

// one step of a PRU cell against an LSTM of the same width
fn step(c: &mut Criterion) {
    let mut group = c.benchmark_group("cell_step");
    for &(n, m) in &[(64, 64), (200, 400)] {
        let mut rng = seeded_rng(1);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();

        let mut store = ParamStore::new();
        let cell = PruCell::new(
            &mut store,
            "pru",
            CellConfig::pru(n, m, 2, 4, SubsampleMode::AvgPool),
            &mut rng,
        )
        .unwrap();
        let xt = Tensor::vector(x.clone());
        let state = CellState::zeros(m);
        group.bench_function(BenchmarkId::new("pru", format!("{n}x{m}")), |b| {
            b.iter(|| pru_step(&cell, &store, &xt, &state).unwrap())
        });

        let lstm = LstmWeights::random(n, m, 0.1, &mut rng);
        let (h, cs) = (vec![0.0; m], vec![0.0; m]);
        group.bench_function(BenchmarkId::new("lstm", format!("{n}x{m}")), |b| {
            b.iter(|| lstm_reference_step(&lstm, &x, &h, &cs).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, step);
criterion_main!(benches);
