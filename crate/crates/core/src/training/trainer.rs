use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::autodiff::{Gradients, Tape};
use crate::config::TrainConfig;
use crate::dropout::DropoutSpec;
use crate::error::{Error, Result};
use crate::lm::{perplexity, LanguageModel};
use crate::parallel::{self, Execution};
use crate::recurrent::CellState;
use crate::training::batch::{batchify, Batch};
use crate::training::sgd::sgd_step;
use crate::{derive_seed, seeded_rng};

pub const LOG_HEADER: &str = "epoch,train_ppl,valid_ppl,lr,wall_seconds";

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_ppl: f64,
    pub valid_ppl: f64,
    pub lr: f64,
    pub wall_seconds: f64,
}

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{},{:.3}",
            self.epoch, self.train_ppl, self.valid_ppl, self.lr, self.wall_seconds
        )
    }
}

/// The effective config as `#` comment lines followed by the column header.
pub fn log_preamble(config: &TrainConfig) -> String {
    let mut s = String::new();
    for line in config.canonical_text().lines() {
        let _ = writeln!(s, "# {line}");
    }
    let _ = writeln!(s, "{LOG_HEADER}");
    s
}

/// Writes a full training log.
pub fn write_log(path: &Path, config: &TrainConfig, records: &[EpochRecord]) -> Result<()> {
    let mut text = log_preamble(config);
    for r in records {
        let _ = writeln!(text, "{}", r.csv_row());
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Appends rows to a log as epochs finish.
pub struct LogWriter {
    file: std::fs::File,
    path: std::path::PathBuf,
}

impl LogWriter {
    pub fn create(path: &Path, config: &TrainConfig) -> Result<Self> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(log_preamble(config).as_bytes())
            .map_err(|e| Error::io(path, e))?;
        Ok(LogWriter {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, record: &EpochRecord) -> Result<()> {
        writeln!(self.file, "{}", record.csv_row()).map_err(|e| Error::io(&self.path, e))
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    /// The model with the lowest validation loss (the initial model when no epoch ran).
    pub best: LanguageModel,
    pub last: LanguageModel,
}

struct StreamResult {
    nll: f64,
    grads: Gradients,
    states: Vec<CellState>,
}

fn stream_step(
    model: &LanguageModel,
    batch: &Batch,
    s: usize,
    states: &[CellState],
    dropout: &DropoutSpec,
    seed: u64,
) -> Result<StreamResult> {
    let mut rng = seeded_rng(seed);
    let mut tape = Tape::new(model.store());
    let out = model.loss_and_logits(
        &mut tape,
        &batch.inputs[s],
        &batch.targets[s],
        states,
        dropout,
        &mut rng,
    )?;
    let nll = tape.value(out.loss).data()[0];
    if !nll.is_finite() {
        return Err(Error::numeric(format!("training loss became {nll}")));
    }
    let grads = tape.backward(out.loss)?;
    let states = out
        .states
        .iter()
        .map(|&v| CellState::read(&tape, v))
        .collect();
    Ok(StreamResult { nll, grads, states })
}

/// One pass over the training streams. Returns the mean training NLL.
pub fn train_epoch(
    model: &mut LanguageModel,
    config: &TrainConfig,
    ids: &[usize],
    lr: f64,
    epoch: usize,
    exec: Execution,
) -> Result<f64> {
    let plan = batchify(ids, config.batch_size, config.bptt)?;
    let b = plan.batch_size();
    let dropout = DropoutSpec::train(config.dropout)?;
    let mut states: Vec<Vec<CellState>> = vec![model.zero_states(); b];
    let mut total = 0.0;
    let mut count = 0usize;
    for (step, batch) in plan.batches().enumerate() {
        let results = {
            let m = &*model;
            let st = &states;
            let batch = &batch;
            parallel::map_range(exec, b, |s| {
                let seed = derive_seed(config.seed, &[epoch as u64, step as u64, s as u64]);
                stream_step(m, batch, s, &st[s], &dropout, seed)
            })
        };
        let mut merged: Option<Gradients> = None;
        for (s, r) in results.into_iter().enumerate() {
            let r = r.map_err(|e| match e {
                Error::Numeric(msg) => Error::numeric(format!("epoch {epoch}, step {step}: {msg}")),
                other => other,
            })?;
            total += r.nll * batch.seq_len() as f64;
            count += batch.seq_len();
            states[s] = r.states;
            match merged.as_mut() {
                Some(g) => g.merge(&r.grads)?,
                None => merged = Some(r.grads),
            }
        }
        let mut grads = merged.expect("at least one stream");
        grads.scale(1.0 / b as f64);
        let store = model.store_mut();
        store.zero_grads();
        grads.accumulate_into(store)?;
        sgd_step(store, lr, config.clip)
            .map_err(|e| Error::numeric(format!("epoch {epoch}, step {step}: {e}")))?;
    }
    Ok(total / count as f64)
}

/// Trains with plain SGD, dividing the learning rate by `lr_decay` whenever
/// validation loss fails to improve, and keeps the best validation model.
pub fn train(
    config: &TrainConfig,
    vocab_size: usize,
    train_ids: &[usize],
    valid_ids: &[usize],
    exec: Execution,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    let model_config = config.model(vocab_size)?;
    let mut rng = seeded_rng(config.seed);
    let mut model = LanguageModel::new(&model_config, &mut rng)?;
    train_from(
        config,
        &mut model,
        train_ids,
        valid_ids,
        exec,
        &mut on_epoch,
    )
}

/// Continues training an existing model.
pub fn train_from(
    config: &TrainConfig,
    model: &mut LanguageModel,
    train_ids: &[usize],
    valid_ids: &[usize],
    exec: Execution,
    on_epoch: &mut impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    if let Some(&bad) = train_ids
        .iter()
        .chain(valid_ids)
        .find(|&&t| t >= model.vocab_size())
    {
        return Err(Error::Vocabulary {
            id: bad,
            size: model.vocab_size(),
        });
    }
    let mut best = model.clone();
    let mut best_valid = f64::INFINITY;
    let mut lr = config.lr;
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let train_nll = train_epoch(model, config, train_ids, lr, epoch, exec)?;
        let valid_nll = model.evaluate(exec, valid_ids, config.eval_batch_size, config.bptt)?;
        let (train_ppl, valid_ppl) = (perplexity(train_nll), perplexity(valid_nll));
        // a finite loss past ~709 nats still overflows the perplexity
        if !train_ppl.is_finite() || !valid_ppl.is_finite() {
            return Err(Error::numeric(format!(
                "diverged in epoch {epoch}: train loss {train_nll}, validation loss {valid_nll}"
            )));
        }
        let record = EpochRecord {
            epoch,
            train_ppl,
            valid_ppl,
            lr,
            wall_seconds: if config.record_wall_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        if valid_nll < best_valid {
            best_valid = valid_nll;
            best = model.clone();
        } else {
            lr /= config.lr_decay;
        }
        on_epoch(&record)?;
        log.push(record);
    }
    Ok(TrainOutcome {
        log,
        best,
        last: model.clone(),
    })
}
