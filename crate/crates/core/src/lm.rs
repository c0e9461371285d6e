//! Word-level language model: embedding, stacked recurrent layers and a decoder.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::autodiff::{log_softmax, ParamId, ParamStore, Tape, Var};
use crate::config::ModelConfig;
use crate::dropout::{dropout_var, DropoutSpec};
use crate::error::{Error, Result};
use crate::parallel::{self, Execution};
use crate::recurrent::{CellState, PruCell, StackedRnn, StateVars};
use crate::tensor::Tensor;
use crate::transforms::LinearTransform;

pub const EMBEDDING_INIT: f64 = 0.1;

/// Row lookup into a `[V x D]` table.
#[derive(Clone, Debug)]
pub struct Embedding {
    table: ParamId,
    vocab_size: usize,
    dim: usize,
}

impl Embedding {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        vocab_size: usize,
        dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let dist = Uniform::new_inclusive(-EMBEDDING_INIT, EMBEDDING_INIT).expect("finite bound");
        let data = (0..vocab_size * dim).map(|_| dist.sample(rng)).collect();
        let table = store.add(
            format!("{name}.table"),
            Tensor::matrix(vocab_size, dim, data).expect("sized"),
        );
        Embedding {
            table,
            vocab_size,
            dim,
        }
    }

    pub fn table(&self) -> ParamId {
        self.table
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn forward(&self, tape: &mut Tape, token: usize) -> Result<Var> {
        let t = tape.param(self.table);
        tape.row(t, token)
    }

    /// The row for `token`, copied out of the store.
    pub fn lookup(&self, store: &ParamStore, token: usize) -> Result<Tensor> {
        if token >= self.vocab_size {
            return Err(Error::Vocabulary {
                id: token,
                size: self.vocab_size,
            });
        }
        Ok(Tensor::vector(store.value(self.table).row(token).to_vec()))
    }
}

/// Maps the top hidden state to logits.
#[derive(Clone, Debug)]
pub enum Decoder {
    /// Reuses the embedding table, optionally after a `[D x M]` projection.
    Tied {
        projection: Option<LinearTransform>,
        bias: ParamId,
    },
    Untied(LinearTransform),
}

impl Decoder {
    pub fn bias(&self) -> ParamId {
        match self {
            Decoder::Tied { bias, .. } => *bias,
            Decoder::Untied(l) => l.bias().expect("untied decoder has a bias"),
        }
    }
}

/// Output of running the model over one segment.
pub struct SegmentOutput {
    /// Mean negative log-likelihood over the segment (a scalar on the tape).
    pub loss: Var,
    pub logits: Vec<Var>,
    pub states: Vec<StateVars>,
}

#[derive(Clone, Debug)]
pub struct LanguageModel {
    config: ModelConfig,
    store: ParamStore,
    embedding: Embedding,
    rnn: StackedRnn,
    decoder: Decoder,
}

impl LanguageModel {
    pub fn new(config: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let embedding = Embedding::new(
            &mut store,
            "embedding",
            config.vocab_size,
            config.embed_dim,
            rng,
        );
        let layers = config
            .cell_configs()
            .into_iter()
            .enumerate()
            .map(|(l, c)| PruCell::new(&mut store, &format!("rnn.layer{l}"), c, rng))
            .collect::<Result<Vec<_>>>()?;
        let rnn = StackedRnn::new(layers)?;
        let top = rnn.output_dim();
        let decoder = if config.tie_weights {
            let projection = if top != config.embed_dim {
                Some(LinearTransform::new(
                    &mut store,
                    "decoder.projection",
                    top,
                    config.embed_dim,
                    false,
                    rng,
                )?)
            } else {
                None
            };
            let bias = store.add("decoder.bias", Tensor::zeros(&[config.vocab_size]));
            Decoder::Tied { projection, bias }
        } else {
            Decoder::Untied(LinearTransform::new(
                &mut store,
                "decoder",
                top,
                config.vocab_size,
                true,
                rng,
            )?)
        };
        Ok(LanguageModel {
            config: *config,
            store,
            embedding,
            rnn,
            decoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    pub fn rnn(&self) -> &StackedRnn {
        &self.rnn
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    pub fn zero_states(&self) -> Vec<CellState> {
        self.rnn.zero_states()
    }

    /// Logits for the top hidden state `h`.
    pub fn decode(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        match &self.decoder {
            Decoder::Tied { projection, bias } => {
                let z = match projection {
                    Some(p) => p.forward(tape, h)?,
                    None => h,
                };
                let e = tape.param(self.embedding.table);
                let raw = tape.matvec(e, z)?;
                let b = tape.param(*bias);
                tape.add(raw, b)
            }
            Decoder::Untied(l) => l.forward(tape, h),
        }
    }

    /// Runs embedded inputs through the recurrent stack and decoder.
    ///
    /// Dropout is applied after the embedding, between layers and on the top
    /// layer's output.
    pub fn forward_embedded(
        &self,
        tape: &mut Tape,
        embedded: &[Var],
        init: &[StateVars],
        dropout: &DropoutSpec,
        rng: &mut impl Rng,
    ) -> Result<(Vec<Var>, Vec<StateVars>)> {
        let inputs = embedded
            .iter()
            .map(|&e| dropout_var(tape, dropout, e, rng))
            .collect::<Result<Vec<_>>>()?;
        let (tops, states) = self.rnn.unroll(tape, &inputs, init, dropout, rng)?;
        let logits = tops
            .into_iter()
            .map(|h| {
                let d = dropout_var(tape, dropout, h, rng)?;
                self.decode(tape, d)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((logits, states))
    }

    /// Mean cross-entropy of predicting `targets` from `tokens`.
    pub fn loss_and_logits(
        &self,
        tape: &mut Tape,
        tokens: &[usize],
        targets: &[usize],
        states: &[CellState],
        dropout: &DropoutSpec,
        rng: &mut impl Rng,
    ) -> Result<SegmentOutput> {
        if tokens.is_empty() {
            return Err(Error::contract("empty segment"));
        }
        if tokens.len() != targets.len() {
            return Err(Error::contract(format!(
                "{} tokens but {} targets",
                tokens.len(),
                targets.len()
            )));
        }
        let embedded = tokens
            .iter()
            .map(|&t| self.embedding.forward(tape, t))
            .collect::<Result<Vec<_>>>()?;
        let init: Vec<_> = states.iter().map(|s| s.detached(tape)).collect();
        let (logits, states) = self.forward_embedded(tape, &embedded, &init, dropout, rng)?;
        let nlls = logits
            .iter()
            .zip(targets)
            .map(|(&l, &t)| tape.nll(l, t))
            .collect::<Result<Vec<_>>>()?;
        let all = tape.concat(&nlls)?;
        let total = tape.sum(all);
        let loss = tape.scale(total, 1.0 / tokens.len() as f64);
        Ok(SegmentOutput {
            loss,
            logits,
            states,
        })
    }

    /// Log-probabilities of the next token after each position of `tokens`,
    /// continuing from `states` (updated in place).
    pub fn next_log_probs(
        &self,
        tokens: &[usize],
        states: &mut Vec<CellState>,
    ) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new(&self.store);
        let embedded = tokens
            .iter()
            .map(|&t| self.embedding.forward(&mut tape, t))
            .collect::<Result<Vec<_>>>()?;
        let init: Vec<_> = states.iter().map(|s| s.detached(&mut tape)).collect();
        let mut rng = crate::seeded_rng(0);
        let (logits, fin) =
            self.forward_embedded(&mut tape, &embedded, &init, &DropoutSpec::eval(), &mut rng)?;
        *states = fin.iter().map(|&s| CellState::read(&tape, s)).collect();
        Ok(logits
            .iter()
            .map(|&l| log_softmax(tape.value(l).data()))
            .collect())
    }

    /// Summed negative log-likelihood and token count over one stream,
    /// processed in segments of `bptt` with carried state.
    pub fn stream_nll(&self, stream: &[usize], bptt: usize) -> Result<(f64, usize)> {
        if stream.len() < 2 {
            return Ok((0.0, 0));
        }
        let mut states = self.zero_states();
        let mut total = 0.0;
        let mut count = 0;
        let mut i = 0;
        while i + 1 < stream.len() {
            let len = bptt.max(1).min(stream.len() - 1 - i);
            let lp = self.next_log_probs(&stream[i..i + len], &mut states)?;
            for (t, row) in lp.iter().enumerate() {
                let target = stream[i + t + 1];
                if target >= row.len() {
                    return Err(Error::Vocabulary {
                        id: target,
                        size: row.len(),
                    });
                }
                total -= row[target];
            }
            count += len;
            i += len;
        }
        Ok((total, count))
    }

    /// Mean negative log-likelihood over `ids`, split into `streams`
    /// contiguous streams evaluated independently and summed in order.
    pub fn evaluate(
        &self,
        exec: Execution,
        ids: &[usize],
        streams: usize,
        bptt: usize,
    ) -> Result<f64> {
        let streams = streams.max(1).min(ids.len() / 2).max(1);
        let len = ids.len() / streams;
        let parts = parallel::map_range(exec, streams, |s| {
            self.stream_nll(&ids[s * len..(s + 1) * len], bptt)
        });
        let mut total = 0.0;
        let mut count = 0;
        for p in parts {
            let (t, c) = p?;
            total += t;
            count += c;
        }
        if count == 0 {
            return Err(Error::contract(
                "evaluation corpus has fewer than two tokens",
            ));
        }
        Ok(total / count as f64)
    }

    /// Number of allocated scalars in each part of the model.
    pub fn allocated(&self) -> AllocatedCounts {
        let count = |ids: &[ParamId]| {
            ids.iter()
                .map(|&id| self.store.value(id).len())
                .sum::<usize>()
        };
        let layers = self.rnn.layers();
        let ru_weights = layers.iter().map(|l| count(&l.weight_params())).sum();
        let ru_biases = layers.iter().map(|l| count(&l.bias_params())).sum();
        let ru_kernels = layers.iter().map(|l| count(&l.kernel_params())).sum();
        let embedding = self.store.value(self.embedding.table).len();
        let decoder = self.store.num_elements() - embedding - ru_weights - ru_biases - ru_kernels;
        AllocatedCounts {
            embedding,
            ru_weights,
            ru_biases,
            ru_kernels,
            decoder,
            total: self.store.num_elements(),
        }
    }
}

/// Scalar counts per part, read off a live model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AllocatedCounts {
    pub embedding: usize,
    pub ru_weights: usize,
    pub ru_biases: usize,
    pub ru_kernels: usize,
    pub decoder: usize,
    pub total: usize,
}

pub fn perplexity(mean_nll: f64) -> f64 {
    mean_nll.exp()
}
