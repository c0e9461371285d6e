//! Flat `key = value` configuration shared by training, checkpoints and the CLI.
//!
//! Lines starting with `#` are comments. Unknown keys are rejected. A
//! `preset` key (`small`, `medium`, `large`) sets `groups` and `hidden_dim`
//! before any other key is applied, so explicit keys win over the preset.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::recurrent::CellConfig;
use crate::transforms::{SubsampleMode, TransformKind, TransformSpec};

/// Every accepted key, in canonical order.
pub const KEYS: &[&str] = &[
    "batch_size",
    "bptt",
    "checkpoint_path",
    "clip",
    "context_transform",
    "dropout",
    "embed_dim",
    "epochs",
    "eval_batch_size",
    "groups",
    "hidden_dim",
    "input_transform",
    "last_layer_to_embed",
    "layers",
    "levels",
    "log_path",
    "lr",
    "lr_decay",
    "min_count",
    "record_wall_time",
    "residual",
    "seed",
    "subsample",
    "tie_weights",
    "train_path",
    "valid_path",
];

/// Keys that fix the shape of the parameters.
pub const MODEL_KEYS: &[&str] = &[
    "context_transform",
    "embed_dim",
    "groups",
    "hidden_dim",
    "input_transform",
    "last_layer_to_embed",
    "layers",
    "levels",
    "residual",
    "subsample",
    "tie_weights",
];

/// `(groups, hidden_dim)` for a named preset.
pub fn preset(name: &str) -> Result<(usize, usize)> {
    match name {
        "small" => Ok((1, 1000)),
        "medium" => Ok((2, 1200)),
        "large" => Ok((4, 1400)),
        other => Err(Error::config(format!(
            "unknown preset `{other}` (expected small, medium or large)"
        ))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub layers: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub levels: usize,
    pub groups: usize,
    pub subsample: SubsampleMode,
    pub input_transform: TransformKind,
    pub context_transform: TransformKind,
    pub residual: bool,
    pub tie_weights: bool,
    /// The top layer maps back to `embed_dim`, so a tied decoder needs no
    /// projection. Off by default: every layer keeps `hidden_dim`.
    pub last_layer_to_embed: bool,
    pub dropout: f64,
    pub min_count: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub clip: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub bptt: usize,
    pub seed: u64,
    pub record_wall_time: bool,
    pub train_path: String,
    pub valid_path: String,
    pub log_path: String,
    pub checkpoint_path: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layers: 3,
            embed_dim: 400,
            hidden_dim: 1000,
            levels: 2,
            groups: 1,
            subsample: SubsampleMode::AvgPool,
            input_transform: TransformKind::Pyramidal,
            context_transform: TransformKind::Grouped,
            residual: true,
            tie_weights: true,
            last_layer_to_embed: false,
            dropout: 0.5,
            min_count: 1,
            lr: 20.0,
            lr_decay: 4.0,
            clip: 0.25,
            epochs: 10,
            batch_size: 20,
            eval_batch_size: 10,
            bptt: 35,
            seed: 1,
            record_wall_time: true,
            train_path: String::new(),
            valid_path: String::new(),
            log_path: "train_log.csv".to_string(),
            checkpoint_path: "model.pru".to_string(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::config(format!(
            "`{key}`: expected a boolean, got `{value}`"
        ))),
    }
}

/// Splits `key=value` text into pairs, skipping blanks and `#` comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("line {}: expected key=value, got `{line}`", n + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl TrainConfig {
    /// Applies pairs in order after resolving a `preset`, later pairs winning.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        if let Some((_, name)) = pairs.iter().rev().find(|(k, _)| k == "preset") {
            let (g, m) = preset(name)?;
            cfg.groups = g;
            cfg.hidden_dim = m;
        }
        for (k, v) in pairs {
            if k != "preset" {
                cfg.set(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a file, then applies `overrides` on top of it.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = parse_pairs(&text)?;
        pairs.extend(overrides.iter().cloned());
        Self::from_pairs(&pairs)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "layers" => self.layers = parse_num(key, v)?,
            "embed_dim" => self.embed_dim = parse_num(key, v)?,
            "hidden_dim" => self.hidden_dim = parse_num(key, v)?,
            "levels" => self.levels = parse_num(key, v)?,
            "groups" => self.groups = parse_num(key, v)?,
            "subsample" => self.subsample = v.parse()?,
            "input_transform" => self.input_transform = v.parse()?,
            "context_transform" => self.context_transform = v.parse()?,
            "residual" => self.residual = parse_bool(key, v)?,
            "tie_weights" => self.tie_weights = parse_bool(key, v)?,
            "last_layer_to_embed" => self.last_layer_to_embed = parse_bool(key, v)?,
            "dropout" => self.dropout = parse_num(key, v)?,
            "min_count" => self.min_count = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "lr_decay" => self.lr_decay = parse_num(key, v)?,
            "clip" => self.clip = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "eval_batch_size" => self.eval_batch_size = parse_num(key, v)?,
            "bptt" => self.bptt = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "record_wall_time" => self.record_wall_time = parse_bool(key, v)?,
            "train_path" => self.train_path = v.to_string(),
            "valid_path" => self.valid_path = v.to_string(),
            "log_path" => self.log_path = v.to_string(),
            "checkpoint_path" => self.checkpoint_path = v.to_string(),
            "preset" => {
                let (g, m) = preset(v)?;
                self.groups = g;
                self.hidden_dim = m;
            }
            other => return Err(Error::config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "layers" => self.layers.to_string(),
            "embed_dim" => self.embed_dim.to_string(),
            "hidden_dim" => self.hidden_dim.to_string(),
            "levels" => self.levels.to_string(),
            "groups" => self.groups.to_string(),
            "subsample" => self.subsample.to_string(),
            "input_transform" => self.input_transform.to_string(),
            "context_transform" => self.context_transform.to_string(),
            "residual" => self.residual.to_string(),
            "tie_weights" => self.tie_weights.to_string(),
            "last_layer_to_embed" => self.last_layer_to_embed.to_string(),
            "dropout" => format!("{:?}", self.dropout),
            "min_count" => self.min_count.to_string(),
            "lr" => format!("{:?}", self.lr),
            "lr_decay" => format!("{:?}", self.lr_decay),
            "clip" => format!("{:?}", self.clip),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "eval_batch_size" => self.eval_batch_size.to_string(),
            "bptt" => self.bptt.to_string(),
            "seed" => self.seed.to_string(),
            "record_wall_time" => self.record_wall_time.to_string(),
            "train_path" => self.train_path.clone(),
            "valid_path" => self.valid_path.clone(),
            "log_path" => self.log_path.clone(),
            "checkpoint_path" => self.checkpoint_path.clone(),
            _ => return None,
        })
    }

    /// Sorted `key=value` lines; parsing them back gives an equal config.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            let _ = writeln!(s, "{k}={}", self.get(k).expect("listed key"));
        }
        s
    }

    pub fn model_pairs(&self) -> BTreeMap<&'static str, String> {
        MODEL_KEYS
            .iter()
            .map(|&k| (k, self.get(k).expect("listed key")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr must be positive"));
        }
        if self.lr_decay < 1.0 {
            return Err(Error::config("lr_decay must be at least 1"));
        }
        if self.clip < 0.0 {
            return Err(Error::config(
                "clip must be non-negative (0 disables clipping)",
            ));
        }
        if self.batch_size == 0 || self.eval_batch_size == 0 || self.bptt == 0 {
            return Err(Error::config(
                "batch_size, eval_batch_size and bptt must be positive",
            ));
        }
        self.model(2).map(|_| ())
    }

    /// Model shape for a vocabulary of `vocab_size` tokens.
    pub fn model(&self, vocab_size: usize) -> Result<ModelConfig> {
        let spec = |kind| TransformSpec {
            kind,
            levels: if kind == TransformKind::Pyramidal {
                self.levels
            } else {
                1
            },
            groups: if kind == TransformKind::Grouped {
                self.groups
            } else {
                1
            },
            mode: self.subsample,
            residual: self.residual,
        };
        let mc = ModelConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            layers: self.layers,
            input: spec(self.input_transform),
            context: spec(self.context_transform),
            tie_weights: self.tie_weights,
            last_layer_to_embed: self.last_layer_to_embed,
            dropout: self.dropout,
        };
        mc.validate()?;
        Ok(mc)
    }
}

/// Everything needed to allocate a language model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub input: TransformSpec,
    pub context: TransformSpec,
    pub tie_weights: bool,
    pub last_layer_to_embed: bool,
    pub dropout: f64,
}

impl ModelConfig {
    /// The three-layer shape with pyramidal inputs and grouped contexts.
    pub fn pru(
        vocab_size: usize,
        embed_dim: usize,
        hidden_dim: usize,
        levels: usize,
        groups: usize,
    ) -> Self {
        let cell = CellConfig::pru(
            embed_dim,
            hidden_dim,
            levels,
            groups,
            SubsampleMode::AvgPool,
        );
        ModelConfig {
            vocab_size,
            embed_dim,
            hidden_dim,
            layers: 3,
            input: cell.input,
            context: cell.context,
            tie_weights: true,
            last_layer_to_embed: false,
            dropout: 0.0,
        }
    }

    /// Same layer shapes with plain linear transforms.
    pub fn as_lstm(&self) -> Self {
        let cell = CellConfig::lstm(self.embed_dim, self.hidden_dim);
        ModelConfig {
            input: cell.input,
            context: cell.context,
            ..*self
        }
    }

    /// Output width of the top recurrent layer.
    pub fn top_dim(&self) -> usize {
        if self.last_layer_to_embed {
            self.embed_dim
        } else {
            self.hidden_dim
        }
    }

    pub fn cell_configs(&self) -> Vec<CellConfig> {
        (0..self.layers)
            .map(|l| {
                let input_dim = if l == 0 {
                    self.embed_dim
                } else {
                    self.hidden_dim
                };
                let hidden_dim = if l + 1 == self.layers {
                    self.top_dim()
                } else {
                    self.hidden_dim
                };
                CellConfig {
                    input_dim,
                    hidden_dim,
                    input: self.input,
                    context: self.context,
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::config("vocabulary needs at least two tokens"));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.layers == 0 {
            return Err(Error::config(
                "embed_dim, hidden_dim and layers must be positive",
            ));
        }
        for spec in [&self.input, &self.context] {
            if spec.levels == 0 || spec.groups == 0 {
                return Err(Error::config("levels and groups must be positive"));
            }
        }
        for (l, c) in self.cell_configs().iter().enumerate() {
            check_transform(&c.input, c.input_dim, c.hidden_dim, l, "input")?;
            check_transform(&c.context, c.hidden_dim, c.hidden_dim, l, "context")?;
        }
        Ok(())
    }
}

fn check_transform(
    spec: &TransformSpec,
    n: usize,
    m: usize,
    layer: usize,
    side: &str,
) -> Result<()> {
    let ok = match spec.kind {
        TransformKind::Linear => true,
        TransformKind::Grouped => n.is_multiple_of(spec.groups) && m.is_multiple_of(spec.groups),
        TransformKind::Pyramidal => {
            spec.levels <= usize::BITS as usize
                && n.is_multiple_of(1 << (spec.levels - 1))
                && m.is_multiple_of(spec.levels)
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Error::config(format!(
            "layer {layer} {side} transform {} cannot map {n} -> {m} with K={}, g={}",
            spec.kind, spec.levels, spec.groups
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(text: &str) -> Vec<(String, String)> {
        parse_pairs(text).unwrap()
    }

    #[test]
    fn canonical_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.groups = 4;
        cfg.hidden_dim = 1400;
        cfg.dropout = 0.3;
        let back = TrainConfig::from_pairs(&pairs(&cfg.canonical_text())).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = TrainConfig::from_pairs(&pairs("hiden_dim = 10")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn preset_then_explicit_keys() {
        let cfg =
            TrainConfig::from_pairs(&pairs("hidden_dim=1600\npreset=large\n# comment")).unwrap();
        assert_eq!((cfg.groups, cfg.hidden_dim), (4, 1600));
    }

    #[test]
    fn later_pairs_win() {
        let cfg = TrainConfig::from_pairs(&pairs("lr=5\nlr=2.5")).unwrap();
        assert_eq!(cfg.lr, 2.5);
    }

    #[test]
    fn indivisible_shapes_rejected() {
        assert!(TrainConfig::from_pairs(&pairs("groups=3")).is_err());
        assert!(TrainConfig::from_pairs(&pairs("levels=3")).is_err());
    }

    #[test]
    fn layer_chaining() {
        let mc = ModelConfig::pru(10, 400, 1000, 2, 1);
        let dims: Vec<_> = mc
            .cell_configs()
            .iter()
            .map(|c| (c.input_dim, c.hidden_dim))
            .collect();
        assert_eq!(dims, vec![(400, 1000), (1000, 1000), (1000, 1000)]);
        let narrow = ModelConfig {
            last_layer_to_embed: true,
            ..mc
        };
        assert_eq!(narrow.cell_configs()[2].hidden_dim, 400);
    }
}
