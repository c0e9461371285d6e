use std::fmt::Write as _;

use crate::config::ModelConfig;
use crate::lm::AllocatedCounts;
use crate::transforms::{grouped_weight_count, linear_weight_count, pyramidal_weight_count};

/// Closed-form counts for one recurrent layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerCounts {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub input_weights: usize,
    pub context_weights: usize,
    pub biases: usize,
    pub kernels: usize,
    /// The same layer with linear transforms, biases included.
    pub lstm_total: usize,
}

impl LayerCounts {
    pub fn total(&self) -> usize {
        self.input_weights + self.context_weights + self.biases + self.kernels
    }
}

/// Parameter accounting for a whole model.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamReport {
    pub layers: Vec<LayerCounts>,
    pub embedding: usize,
    pub decoder: usize,
    pub ru_total: usize,
    pub lstm_ru_total: usize,
    pub total: usize,
    /// `1 - ru_total / lstm_ru_total`.
    pub reduction: f64,
}

pub fn param_report(config: &ModelConfig) -> ParamReport {
    let layers: Vec<LayerCounts> = config
        .cell_configs()
        .iter()
        .map(|c| LayerCounts {
            input_dim: c.input_dim,
            hidden_dim: c.hidden_dim,
            input_weights: 4 * c.input.weight_count(c.input_dim, c.hidden_dim),
            context_weights: 4 * c.context.weight_count(c.hidden_dim, c.hidden_dim),
            biases: c.bias_count(),
            kernels: c.kernel_count(),
            lstm_total: 4
                * (linear_weight_count(c.input_dim, c.hidden_dim)
                    + linear_weight_count(c.hidden_dim, c.hidden_dim)
                    + c.hidden_dim),
        })
        .collect();
    let v = config.vocab_size;
    let embedding = v * config.embed_dim;
    let top = config.top_dim();
    let decoder = match (config.tie_weights, top == config.embed_dim) {
        (true, true) => v,
        (true, false) => v + top * config.embed_dim,
        (false, _) => v + v * top,
    };
    let ru_total: usize = layers.iter().map(LayerCounts::total).sum();
    let lstm_ru_total: usize = layers.iter().map(|l| l.lstm_total).sum();
    ParamReport {
        embedding,
        decoder,
        ru_total,
        lstm_ru_total,
        total: embedding + ru_total + decoder,
        reduction: 1.0 - ru_total as f64 / lstm_ru_total as f64,
        layers,
    }
}

impl ParamReport {
    pub fn matches(&self, live: &AllocatedCounts) -> bool {
        let w: usize = self
            .layers
            .iter()
            .map(|l| l.input_weights + l.context_weights)
            .sum();
        let b: usize = self.layers.iter().map(|l| l.biases).sum();
        let k: usize = self.layers.iter().map(|l| l.kernels).sum();
        live.embedding == self.embedding
            && live.ru_weights == w
            && live.ru_biases == b
            && live.ru_kernels == k
            && live.decoder == self.decoder
            && live.total == self.total
    }

    /// Columns: `part,count`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("part,count\n");
        for (l, c) in self.layers.iter().enumerate() {
            let _ = writeln!(s, "layer{l}.input_weights,{}", c.input_weights);
            let _ = writeln!(s, "layer{l}.context_weights,{}", c.context_weights);
            let _ = writeln!(s, "layer{l}.biases,{}", c.biases);
            let _ = writeln!(s, "layer{l}.kernels,{}", c.kernels);
        }
        let _ = writeln!(s, "embedding,{}", self.embedding);
        let _ = writeln!(s, "decoder,{}", self.decoder);
        let _ = writeln!(s, "ru_total,{}", self.ru_total);
        let _ = writeln!(s, "lstm_ru_total,{}", self.lstm_ru_total);
        let _ = writeln!(s, "total,{}", self.total);
        let _ = writeln!(s, "ru_reduction,{:.4}", self.reduction);
        s
    }
}

/// Weight counts of the three transforms for a single `n -> m` map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformReport {
    pub linear: usize,
    pub grouped: usize,
    pub pyramidal: usize,
}

impl TransformReport {
    pub fn new(n: usize, m: usize, k: usize, g: usize) -> Self {
        TransformReport {
            linear: linear_weight_count(n, m),
            grouped: grouped_weight_count(n, m, g),
            pyramidal: pyramidal_weight_count(n, m, k),
        }
    }

    pub fn pyramidal_reduction(&self) -> f64 {
        1.0 - self.pyramidal as f64 / self.linear as f64
    }

    pub fn grouped_reduction(&self) -> f64 {
        1.0 - self.grouped as f64 / self.linear as f64
    }
}
