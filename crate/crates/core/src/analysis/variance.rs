use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::tensor::Tensor;
use crate::training::Vocab;
use crate::transforms::{AnyTransform, SubsampleKernel};

/// Mean squared distance of the vectors to their mean; `None` when empty.
pub fn category_variance(vectors: &[&[f64]]) -> Option<f64> {
    let first = vectors.first()?;
    let d = first.len();
    let n = vectors.len() as f64;
    let mut mean = vec![0.0; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v.iter()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let total: f64 = vectors
        .iter()
        .map(|v| {
            v.iter()
                .zip(&mean)
                .map(|(x, m)| (x - m) * (x - m))
                .sum::<f64>()
        })
        .sum();
    Some(total / n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategoryVariance {
    pub category: String,
    pub members: usize,
    pub variance: f64,
}

/// Parses `token<TAB>category` lines; blank lines and `#` comments are skipped.
pub fn parse_category_map(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (tok, cat) = line.split_once('\t').ok_or_else(|| {
            Error::Ingestion(format!(
                "category map line {}: expected token<TAB>category",
                n + 1
            ))
        })?;
        out.push((tok.trim().to_string(), cat.trim().to_string()));
    }
    Ok(out)
}

/// Groups vocabulary ids by category. Tokens missing from the vocabulary
/// are dropped; categories left empty are reported in the second value.
pub fn group_by_category(
    vocab: &Vocab,
    map: &[(String, String)],
) -> (BTreeMap<String, Vec<usize>>, Vec<String>) {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (tok, cat) in map {
        let entry = groups.entry(cat.clone()).or_default();
        if let Some(id) = vocab.get(tok) {
            if !entry.contains(&id) {
                entry.push(id);
            }
        }
    }
    let empty: Vec<String> = groups
        .iter()
        .filter(|(_, ids)| ids.is_empty())
        .map(|(c, _)| c.clone())
        .collect();
    groups.retain(|_, ids| !ids.is_empty());
    (groups, empty)
}

/// Per-category variance of the given rows.
pub fn variance_by_category(
    rows: &[Vec<f64>],
    groups: &BTreeMap<String, Vec<usize>>,
) -> Result<Vec<CategoryVariance>> {
    groups
        .iter()
        .map(|(cat, ids)| {
            let members = ids
                .iter()
                .map(|&i| {
                    rows.get(i).map(Vec::as_slice).ok_or(Error::Vocabulary {
                        id: i,
                        size: rows.len(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CategoryVariance {
                category: cat.clone(),
                members: members.len(),
                variance: category_variance(&members).unwrap_or(0.0),
            })
        })
        .collect()
}

/// Embedding rows, optionally pushed `level - 1` times through the
/// subsampling kernel of the first layer's forget-gate pyramid.
pub fn embedding_rows(model: &LanguageModel, level: usize) -> Result<Vec<Vec<f64>>> {
    let store: &ParamStore = model.store();
    let table = store.value(model.embedding().table());
    let (v, _) = table.dims2()?;
    let mut rows: Vec<Vec<f64>> = (0..v).map(|i| table.row(i).to_vec()).collect();
    if level <= 1 {
        return Ok(rows);
    }
    let kernel: SubsampleKernel = match model.rnn().layers()[0].input_transform(0) {
        AnyTransform::Pyramidal(p) if p.levels() >= level => p.kernel().clone(),
        _ => {
            return Err(Error::config(format!(
                "pyramid level {level} requested but the first layer has no such level"
            )))
        }
    };
    for _ in 1..level {
        rows = rows
            .into_iter()
            .map(|r| {
                kernel
                    .apply_values(store, &Tensor::vector(r))
                    .map(Tensor::into_data)
            })
            .collect::<Result<_>>()?;
    }
    Ok(rows)
}

/// Columns: `category,members,variance`.
pub fn variance_csv(rows: &[CategoryVariance]) -> String {
    let mut s = String::from("category,members,variance\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:.9}", r.category, r.members, r.variance);
    }
    s
}
