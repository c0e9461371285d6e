//! Synthetic corpora with known statistics.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seeded_rng;

/// A first-order Markov chain where each token moves to one of a fixed set
/// of successors, chosen uniformly.
#[derive(Clone, Debug, PartialEq)]
pub struct BigramChain {
    /// `transitions[i]` lists `(successor, probability)` pairs.
    pub transitions: Vec<Vec<(usize, f64)>>,
}

impl BigramChain {
    /// `fanout` distinct successors per token, drawn with a seeded generator.
    /// Token `i + 1 (mod V)` is always among them, which keeps the chain irreducible.
    pub fn random(vocab_size: usize, fanout: usize, seed: u64) -> Result<Self> {
        if fanout == 0 || fanout > vocab_size {
            return Err(Error::config(format!(
                "fanout {fanout} for {vocab_size} tokens"
            )));
        }
        let mut rng = seeded_rng(seed);
        let p = 1.0 / fanout as f64;
        let transitions = (0..vocab_size)
            .map(|i| {
                let next = (i + 1) % vocab_size;
                let mut succ = vec![next];
                for j in sample(&mut rng, vocab_size - 1, vocab_size - 1).into_iter() {
                    if succ.len() == fanout {
                        break;
                    }
                    let t = if j >= next { j + 1 } else { j };
                    succ.push(t);
                }
                succ.sort_unstable();
                succ.into_iter().map(|t| (t, p)).collect()
            })
            .collect();
        Ok(BigramChain { transitions })
    }

    /// A deterministic cycle `0 -> 1 -> ... -> V-1 -> 0`.
    pub fn cycle(vocab_size: usize) -> Self {
        BigramChain {
            transitions: (0..vocab_size)
                .map(|i| vec![((i + 1) % vocab_size, 1.0)])
                .collect(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.transitions.len()
    }

    pub fn sample(&self, len: usize, rng: &mut impl Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(len);
        let mut cur = 0;
        for _ in 0..len {
            out.push(cur);
            let u: f64 = rng.random();
            let row = &self.transitions[cur];
            let mut acc = 0.0;
            cur = row[row.len() - 1].0;
            for &(t, p) in row {
                acc += p;
                if u < acc {
                    cur = t;
                    break;
                }
            }
        }
        out
    }

    /// Stationary distribution by power iteration on the lazy chain.
    pub fn stationary(&self) -> Vec<f64> {
        let v = self.vocab_size();
        let mut pi = vec![1.0 / v as f64; v];
        for _ in 0..100_000 {
            let mut next = vec![0.0; v];
            for (i, row) in self.transitions.iter().enumerate() {
                next[i] += 0.5 * pi[i];
                for &(t, p) in row {
                    next[t] += 0.5 * pi[i] * p;
                }
            }
            let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if diff < 1e-15 {
                break;
            }
        }
        pi
    }

    /// `sum_i pi_i H(P_i)` in nats.
    pub fn entropy_rate(&self) -> f64 {
        let pi = self.stationary();
        self.transitions
            .iter()
            .zip(&pi)
            .map(|(row, w)| {
                w * row
                    .iter()
                    .filter(|(_, p)| *p > 0.0)
                    .map(|(_, p)| -p * p.ln())
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn perplexity(&self) -> f64 {
        self.entropy_rate().exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_fanout_rate() {
        let c = BigramChain::random(50, 2, 7).unwrap();
        assert!(c
            .transitions
            .iter()
            .all(|r| r.len() == 2 && r[0].0 != r[1].0));
        assert!((c.perplexity() - 2.0).abs() < 1e-9);
        let s: f64 = c.stationary().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn samples_follow_transitions() {
        let c = BigramChain::random(20, 3, 1).unwrap();
        let ids = c.sample(500, &mut seeded_rng(2));
        for w in ids.windows(2) {
            assert!(c.transitions[w[0]].iter().any(|&(t, _)| t == w[1]));
        }
    }

    #[test]
    fn cycle_is_certain() {
        let c = BigramChain::cycle(10);
        assert_eq!(
            c.sample(12, &mut seeded_rng(0)),
            vec![0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 0, 1]
        );
        assert!((c.perplexity() - 1.0).abs() < 1e-12);
    }
}
