use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::parallel::{self, Execution};

pub const DEFAULT_BIN_WIDTH: f64 = 0.23;
pub const DEFAULT_MAX_CONTEXTS: usize = 3687;

/// `-sum p ln p` of a distribution given as log-probabilities, clamped to `[0, ln V]`.
pub fn entropy_from_log_probs(log_probs: &[f64]) -> f64 {
    let h: f64 = log_probs
        .iter()
        .filter(|lp| lp.is_finite())
        .map(|&lp| -lp.exp() * lp)
        .sum();
    h.clamp(0.0, (log_probs.len() as f64).ln())
}

/// `-sum p ln p` with `0 ln 0 = 0`, clamped to `[0, ln V]`.
pub fn entropy(probs: &[f64]) -> f64 {
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    h.clamp(0.0, (probs.len() as f64).ln())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntropyHistogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub contexts: usize,
}

impl EntropyHistogram {
    /// Bins cover `[0, ln V]`; the top value falls in the last bin.
    pub fn from_entropies(entropies: &[f64], bin_width: f64, vocab_size: usize) -> Result<Self> {
        if !(bin_width > 0.0) {
            return Err(Error::config("bin width must be positive"));
        }
        if entropies.is_empty() {
            return Err(Error::contract(
                "entropy histogram needs at least one context",
            ));
        }
        let max = (vocab_size as f64).ln();
        let bins = ((max / bin_width).ceil() as usize).max(1);
        let mut counts = vec![0; bins];
        for &h in entropies {
            let b = ((h / bin_width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Ok(EntropyHistogram {
            bin_width,
            counts,
            mean: entropies.iter().sum::<f64>() / entropies.len() as f64,
            contexts: entropies.len(),
        })
    }

    /// Columns: `bin_start,bin_end,count`, then a `# mean=` trailer.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_start,bin_end,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let lo = i as f64 * self.bin_width;
            let _ = writeln!(s, "{lo:.2},{:.2},{c}", lo + self.bin_width);
        }
        let _ = writeln!(s, "# contexts={} mean={:.6}", self.contexts, self.mean);
        s
    }
}

/// Entropy of the next-token distribution after each context, each run from
/// a zero state.
pub fn next_token_entropy(
    model: &LanguageModel,
    contexts: &[Vec<usize>],
    exec: Execution,
) -> Result<Vec<f64>> {
    parallel::map(exec, contexts, |ctx| {
        if ctx.is_empty() {
            return Err(Error::contract("empty context"));
        }
        let mut states = model.zero_states();
        let lp = model.next_log_probs(ctx, &mut states)?;
        Ok(entropy_from_log_probs(lp.last().expect("non-empty")))
    })
    .into_iter()
    .collect()
}

/// Entropies at the first `max_contexts` positions of a corpus, reading it
/// as one stream in segments of `bptt` with carried state.
pub fn corpus_entropies(
    model: &LanguageModel,
    ids: &[usize],
    max_contexts: usize,
    bptt: usize,
) -> Result<Vec<f64>> {
    let ids = &ids[..ids.len().min(max_contexts)];
    let mut states = model.zero_states();
    let mut out = Vec::with_capacity(ids.len());
    for seg in ids.chunks(bptt.max(1)) {
        for lp in model.next_log_probs(seg, &mut states)? {
            out.push(entropy_from_log_probs(&lp));
        }
    }
    Ok(out)
}
