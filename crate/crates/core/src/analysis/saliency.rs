use serde::Serialize;

use crate::autodiff::{ParamStore, Tape, Var};
use crate::dropout::DropoutSpec;
use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::seeded_rng;
use crate::tensor::Tensor;
use crate::training::Vocab;

/// Relevance of each input position for the top-1 prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub tokens: Vec<usize>,
    pub predicted: usize,
    /// Squared L2 norm of the gradient of `log p(predicted)` per position.
    pub scores: Vec<f64>,
    /// The raw gradients, one vector per position.
    pub gradients: Vec<Vec<f64>>,
}

/// Feeds `embedded` to `forward` as differentiable inputs, picks the
/// arg-max of the returned logits and differentiates its log-probability.
pub fn saliency_scores<F>(
    store: &ParamStore,
    embedded: &[Tensor],
    forward: F,
) -> Result<(usize, Vec<Vec<f64>>)>
where
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new(store);
    let inputs: Vec<Var> = embedded.iter().map(|e| tape.input(e.clone())).collect();
    let logits = forward(&mut tape, &inputs)?;
    let values = tape.value(logits).data();
    let mut top = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[top] {
            top = i;
        }
    }
    let nll = tape.nll(logits, top)?;
    let grads = tape.backward(nll)?;
    let per_input = inputs
        .iter()
        .zip(embedded)
        .map(|(&v, e)| {
            grads
                .wrt(v)
                .map_or_else(|| vec![0.0; e.len()], |g| g.iter().map(|x| -x).collect())
        })
        .collect();
    Ok((top, per_input))
}

/// Saliency of `context[..=position]` for the model's prediction after `position`.
pub fn saliency(model: &LanguageModel, context: &[usize], position: usize) -> Result<SaliencyMap> {
    saliency_shifted(model, context, position, 0.0)
}

/// As [`saliency`], with `shift` added to every logit before the softmax.
pub fn saliency_shifted(
    model: &LanguageModel,
    context: &[usize],
    position: usize,
    shift: f64,
) -> Result<SaliencyMap> {
    if position >= context.len() {
        return Err(Error::contract(format!(
            "position {position} outside a context of {} tokens",
            context.len()
        )));
    }
    let tokens = context[..=position].to_vec();
    let embedded = tokens
        .iter()
        .map(|&t| model.embedding().lookup(model.store(), t))
        .collect::<Result<Vec<_>>>()?;
    let (predicted, gradients) = saliency_scores(model.store(), &embedded, |tape, inputs| {
        let init: Vec<_> = model
            .zero_states()
            .iter()
            .map(|s| s.detached(tape))
            .collect();
        let (logits, _) = model.forward_embedded(
            tape,
            inputs,
            &init,
            &DropoutSpec::eval(),
            &mut seeded_rng(0),
        )?;
        let last = *logits.last().expect("non-empty context");
        if shift == 0.0 {
            return Ok(last);
        }
        let s = tape.constant(Tensor::filled(&[model.vocab_size()], shift));
        tape.add(last, s)
    })?;
    let scores = gradients
        .iter()
        .map(|g| g.iter().map(|x| x * x).sum())
        .collect();
    Ok(SaliencyMap {
        tokens,
        predicted,
        scores,
        gradients,
    })
}

#[derive(Serialize)]
struct TokenScore<'a> {
    token: &'a str,
    score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    gradient: Option<&'a [f64]>,
}

#[derive(Serialize)]
struct SaliencyJson<'a> {
    predicted: &'a str,
    tokens: Vec<TokenScore<'a>>,
}

impl SaliencyMap {
    /// `{"predicted": w, "tokens": [{"token": t, "score": s}, ...]}`, with a
    /// per-token `gradient` array when `with_gradients` is set.
    pub fn to_json(&self, vocab: &Vocab, with_gradients: bool) -> Result<String> {
        let tokens = self
            .tokens
            .iter()
            .zip(&self.scores)
            .zip(&self.gradients)
            .map(|((&t, &score), g)| {
                Ok(TokenScore {
                    token: vocab.token(t)?,
                    score,
                    gradient: with_gradients.then_some(g.as_slice()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let doc = SaliencyJson {
            predicted: vocab.token(self.predicted)?,
            tokens,
        };
        serde_json::to_string_pretty(&doc)
            .map_err(|e| Error::contract(format!("json encoding: {e}")))
    }
}
