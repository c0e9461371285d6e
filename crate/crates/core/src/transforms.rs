//! Linear, grouped linear and pyramidal transforms.
//!
//! Weights are stored `[out x in]` and applied as `W · x`. Grouped and
//! pyramidal transforms split their output into contiguous blocks, one per
//! group or pyramid level, and concatenate the per-block products.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::autodiff::{ParamId, ParamStore, Reducer, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weights of `y = W x` for `x` of length `n` and `y` of length `m`.
pub fn linear_weight_count(n: usize, m: usize) -> usize {
    n * m
}

/// Weights of a grouped linear transform: `n m / g`.
pub fn grouped_weight_count(n: usize, m: usize, g: usize) -> usize {
    n * m / g
}

/// Weights of a `k`-level pyramidal transform: `(n m / k) Σ_{l=1..k} 2^(1-l)`.
///
/// Evaluated as `n m (2^k - 1) / (k 2^(k-1))`, exact whenever the
/// transform's divisibility constraints hold.
pub fn pyramidal_weight_count(n: usize, m: usize, k: usize) -> usize {
    let pow = 1usize << (k - 1);
    n * m * (2 * pow - 1) / (k * pow)
}

fn uniform_tensor(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let n = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

fn add_bias(tape: &mut Tape, y: Var, bias: Option<ParamId>) -> Result<Var> {
    match bias {
        Some(b) => {
            let bv = tape.param(b);
            tape.add(y, bv)
        }
        None => Ok(y),
    }
}

fn check_input(tape: &Tape, x: Var, expected: usize, what: &str) -> Result<()> {
    let t = tape.value(x);
    if t.rank() != 1 || t.len() != expected {
        return Err(Error::shape(format!(
            "{what} expects a vector of length {expected}, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

/// `y = W x + b`.
#[derive(Clone, Debug)]
pub struct LinearTransform {
    weight: ParamId,
    bias: Option<ParamId>,
    in_dim: usize,
    out_dim: usize,
}

impl LinearTransform {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::config(format!("{name}: zero dimension")));
        }
        let w = uniform_tensor(&[out_dim, in_dim], in_dim, rng);
        let weight = store.add(format!("{name}.weight"), w);
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim])));
        Ok(LinearTransform {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    /// Builds a transform around explicit weights `[out x in]`.
    pub fn from_weights(
        store: &mut ParamStore,
        name: &str,
        weight: Tensor,
        bias: Option<Tensor>,
    ) -> Result<Self> {
        let (out_dim, in_dim) = weight.dims2()?;
        if let Some(b) = &bias {
            if b.shape() != [out_dim] {
                return Err(Error::shape(format!("{name}: bias shape {:?}", b.shape())));
            }
        }
        let weight = store.add(format!("{name}.weight"), weight);
        let bias = bias.map(|b| store.add(format!("{name}.bias"), b));
        Ok(LinearTransform {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        check_input(tape, x, self.in_dim, "linear transform")?;
        let w = tape.param(self.weight);
        let y = tape.matvec(w, x)?;
        add_bias(tape, y, self.bias)
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> Option<ParamId> {
        self.bias
    }

    pub fn weight_param_count(&self) -> usize {
        linear_weight_count(self.in_dim, self.out_dim)
    }

    pub fn weight_params(&self) -> Vec<ParamId> {
        vec![self.weight]
    }
}

/// Splits the input into `g` contiguous groups, maps each with its own
/// `[(m/g) x (n/g)]` matrix and concatenates the results.
#[derive(Clone, Debug)]
pub struct GroupedLinear {
    groups: Vec<ParamId>,
    bias: Option<ParamId>,
    in_dim: usize,
    out_dim: usize,
}

impl GroupedLinear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        groups: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        check_grouping(name, in_dim, out_dim, groups)?;
        let (gi, go) = (in_dim / groups, out_dim / groups);
        let ids = (0..groups)
            .map(|i| {
                store.add(
                    format!("{name}.group{i}"),
                    uniform_tensor(&[go, gi], gi, rng),
                )
            })
            .collect();
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim])));
        Ok(GroupedLinear {
            groups: ids,
            bias,
            in_dim,
            out_dim,
        })
    }

    /// Builds a grouped transform around explicit per-group weights.
    pub fn from_weights(
        store: &mut ParamStore,
        name: &str,
        weights: Vec<Tensor>,
        bias: Option<Tensor>,
    ) -> Result<Self> {
        let g = weights.len();
        if g == 0 {
            return Err(Error::config(format!("{name}: no groups")));
        }
        let (go, gi) = weights[0].dims2()?;
        for w in &weights {
            if w.dims2()? != (go, gi) {
                return Err(Error::shape(format!("{name}: groups differ in shape")));
            }
        }
        let (in_dim, out_dim) = (gi * g, go * g);
        if let Some(b) = &bias {
            if b.shape() != [out_dim] {
                return Err(Error::shape(format!("{name}: bias shape {:?}", b.shape())));
            }
        }
        let groups = weights
            .into_iter()
            .enumerate()
            .map(|(i, w)| store.add(format!("{name}.group{i}"), w))
            .collect();
        let bias = bias.map(|b| store.add(format!("{name}.bias"), b));
        Ok(GroupedLinear {
            groups,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        check_input(tape, h, self.in_dim, "grouped linear transform")?;
        let chunk = self.in_dim / self.groups.len();
        let mut parts = Vec::with_capacity(self.groups.len());
        for (i, &id) in self.groups.iter().enumerate() {
            let hi = tape.slice(h, i * chunk, chunk)?;
            let w = tape.param(id);
            parts.push(tape.matvec(w, hi)?);
        }
        let y = tape.concat(&parts)?;
        add_bias(tape, y, self.bias)
    }

    pub fn groups(&self) -> usize {
        self.groups.len()
    }

    pub fn bias(&self) -> Option<ParamId> {
        self.bias
    }

    pub fn weight_param_count(&self) -> usize {
        grouped_weight_count(self.in_dim, self.out_dim, self.groups.len())
    }

    pub fn weight_params(&self) -> Vec<ParamId> {
        self.groups.clone()
    }
}

fn check_grouping(name: &str, n: usize, m: usize, g: usize) -> Result<()> {
    if g == 0 || n == 0 || m == 0 {
        return Err(Error::config(format!(
            "{name}: zero dimension or group count"
        )));
    }
    if !n.is_multiple_of(g) || !m.is_multiple_of(g) {
        return Err(Error::config(format!(
            "{name}: dimensions {n} -> {m} not divisible into {g} groups"
        )));
    }
    Ok(())
}

/// How one pyramid level is reduced to the next.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SubsampleMode {
    Skip,
    AvgPool,
    MaxPool,
    LearnedConv,
}

impl SubsampleMode {
    pub const ALL: [SubsampleMode; 4] = [
        SubsampleMode::Skip,
        SubsampleMode::AvgPool,
        SubsampleMode::MaxPool,
        SubsampleMode::LearnedConv,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SubsampleMode::Skip => "skip",
            SubsampleMode::AvgPool => "avg_pool",
            SubsampleMode::MaxPool => "max_pool",
            SubsampleMode::LearnedConv => "learned_conv",
        }
    }
}

impl fmt::Display for SubsampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SubsampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SubsampleMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown subsample mode `{s}`")))
    }
}

/// Stride-2 width-3 subsampling kernel.
///
/// Skip and average pooling use the fixed taps `[0, 1, 0]` and
/// `[1/3, 1/3, 1/3]`. The learned variant owns a trainable three-tap
/// kernel and squashes its output through `tanh`.
#[derive(Clone, Debug)]
pub struct SubsampleKernel {
    mode: SubsampleMode,
    kappa: Option<ParamId>,
}

impl SubsampleKernel {
    pub const SKIP_TAPS: [f64; 3] = [0.0, 1.0, 0.0];
    pub const AVG_TAPS: [f64; 3] = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
    /// Standard deviation of the learned kernel's initial taps.
    pub const LEARNED_INIT_STD: f64 = 0.1;

    pub fn new(
        store: &mut ParamStore,
        name: &str,
        mode: SubsampleMode,
        rng: &mut impl Rng,
    ) -> Self {
        let kappa = (mode == SubsampleMode::LearnedConv).then(|| {
            let normal = Normal::new(0.0, Self::LEARNED_INIT_STD).expect("valid std");
            let taps = (0..3).map(|_| normal.sample(rng)).collect();
            store.add(format!("{name}.kappa"), Tensor::vector(taps))
        });
        SubsampleKernel { mode, kappa }
    }

    /// A kernel without trainable state. Fails for the learned mode.
    pub fn fixed(mode: SubsampleMode) -> Result<Self> {
        if mode == SubsampleMode::LearnedConv {
            return Err(Error::config("learned_conv kernel needs a parameter store"));
        }
        Ok(SubsampleKernel { mode, kappa: None })
    }

    pub fn mode(&self) -> SubsampleMode {
        self.mode
    }

    pub fn kappa(&self) -> Option<ParamId> {
        self.kappa
    }

    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self.mode {
            SubsampleMode::Skip => tape.subsample(x, &Reducer::Kernel(Self::SKIP_TAPS)),
            SubsampleMode::AvgPool => tape.subsample(x, &Reducer::Kernel(Self::AVG_TAPS)),
            SubsampleMode::MaxPool => tape.subsample(x, &Reducer::Max),
            SubsampleMode::LearnedConv => {
                let k = tape.param(self.kappa.expect("learned kernel has taps"));
                let y = tape.subsample(x, &Reducer::Learned(k))?;
                Ok(tape.tanh(y))
            }
        }
    }

    /// Subsamples a plain vector outside of any training tape.
    pub fn apply_values(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new(store);
        let xv = tape.constant(x.clone());
        let y = self.apply(&mut tape, xv)?;
        Ok(tape.value(y).clone())
    }
}

/// `K`-level pyramidal transform with optional residual connection.
///
/// Level `k` (1-based) sees the input subsampled `k-1` times, i.e. a vector
/// of length `n / 2^(k-1)`, and maps it to `m / K` outputs. The residual sum
/// with the input is applied only when `n == m`.
#[derive(Clone, Debug)]
pub struct PyramidalTransform {
    levels: Vec<ParamId>,
    bias: Option<ParamId>,
    kernel: SubsampleKernel,
    residual: bool,
    in_dim: usize,
    out_dim: usize,
}

impl PyramidalTransform {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        levels: usize,
        mode: SubsampleMode,
        residual: bool,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        check_pyramid(name, in_dim, out_dim, levels)?;
        let chunk = out_dim / levels;
        let ids = (0..levels)
            .map(|k| {
                let n_k = in_dim >> k;
                store.add(
                    format!("{name}.level{}", k + 1),
                    uniform_tensor(&[chunk, n_k], n_k, rng),
                )
            })
            .collect();
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim])));
        // a single level never subsamples, so it carries no kernel taps
        let kernel = if levels > 1 {
            SubsampleKernel::new(store, name, mode, rng)
        } else {
            SubsampleKernel { mode, kappa: None }
        };
        Ok(PyramidalTransform {
            levels: ids,
            bias,
            kernel,
            residual,
            in_dim,
            out_dim,
        })
    }

    /// Builds a pyramid around explicit per-level weights.
    pub fn from_weights(
        store: &mut ParamStore,
        name: &str,
        weights: Vec<Tensor>,
        bias: Option<Tensor>,
        kernel: SubsampleKernel,
        residual: bool,
    ) -> Result<Self> {
        let levels = weights.len();
        if levels == 0 {
            return Err(Error::config(format!("{name}: no pyramid levels")));
        }
        let (chunk, in_dim) = weights[0].dims2()?;
        let out_dim = chunk * levels;
        check_pyramid(name, in_dim, out_dim, levels)?;
        for (k, w) in weights.iter().enumerate() {
            if w.dims2()? != (chunk, in_dim >> k) {
                return Err(Error::shape(format!(
                    "{name}: level {} has shape {:?}",
                    k + 1,
                    w.shape()
                )));
            }
        }
        if let Some(b) = &bias {
            if b.shape() != [out_dim] {
                return Err(Error::shape(format!("{name}: bias shape {:?}", b.shape())));
            }
        }
        let ids = weights
            .into_iter()
            .enumerate()
            .map(|(k, w)| store.add(format!("{name}.level{}", k + 1), w))
            .collect();
        let bias = bias.map(|b| store.add(format!("{name}.bias"), b));
        Ok(PyramidalTransform {
            levels: ids,
            bias,
            kernel,
            residual,
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        check_input(tape, x, self.in_dim, "pyramidal transform")?;
        let mut level_input = x;
        let mut parts = Vec::with_capacity(self.levels.len());
        for (k, &id) in self.levels.iter().enumerate() {
            if k > 0 {
                level_input = self.kernel.apply(tape, level_input)?;
            }
            let w = tape.param(id);
            parts.push(tape.matvec(w, level_input)?);
        }
        let y = tape.concat(&parts)?;
        let y = add_bias(tape, y, self.bias)?;
        if self.has_residual() {
            tape.add(y, x)
        } else {
            Ok(y)
        }
    }

    /// Whether the residual sum is actually applied.
    pub fn has_residual(&self) -> bool {
        self.residual && self.in_dim == self.out_dim
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    pub fn kernel(&self) -> &SubsampleKernel {
        &self.kernel
    }

    pub fn bias(&self) -> Option<ParamId> {
        self.bias
    }

    pub fn weight_param_count(&self) -> usize {
        pyramidal_weight_count(self.in_dim, self.out_dim, self.levels.len())
    }

    pub fn weight_params(&self) -> Vec<ParamId> {
        self.levels.clone()
    }
}

fn check_pyramid(name: &str, n: usize, m: usize, k: usize) -> Result<()> {
    if k == 0 || n == 0 || m == 0 {
        return Err(Error::config(format!(
            "{name}: zero dimension or level count"
        )));
    }
    if k > 16 {
        return Err(Error::config(format!("{name}: {k} pyramid levels")));
    }
    if !n.is_multiple_of(1 << (k - 1)) || !m.is_multiple_of(k) {
        return Err(Error::config(format!(
            "{name}: {n} -> {m} incompatible with {k} pyramid levels"
        )));
    }
    Ok(())
}

/// Which transform family to use for a gate input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TransformKind {
    Linear,
    Grouped,
    Pyramidal,
}

impl TransformKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::Linear => "lt",
            TransformKind::Grouped => "glt",
            TransformKind::Pyramidal => "pt",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lt" | "linear" => Ok(TransformKind::Linear),
            "glt" | "grouped" => Ok(TransformKind::Grouped),
            "pt" | "pyramidal" => Ok(TransformKind::Pyramidal),
            other => Err(Error::config(format!("unknown transform `{other}`"))),
        }
    }
}

/// Shape settings shared by the transforms of one recurrent layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub levels: usize,
    pub groups: usize,
    pub mode: SubsampleMode,
    pub residual: bool,
}

impl TransformSpec {
    /// Closed-form weight count for an `n -> m` transform of this kind.
    pub fn weight_count(&self, n: usize, m: usize) -> usize {
        match self.kind {
            TransformKind::Linear => linear_weight_count(n, m),
            TransformKind::Grouped => grouped_weight_count(n, m, self.groups),
            TransformKind::Pyramidal => pyramidal_weight_count(n, m, self.levels),
        }
    }

    /// Trainable kernel taps carried by an `n -> m` transform of this kind.
    pub fn kernel_count(&self) -> usize {
        match (self.kind, self.mode) {
            (TransformKind::Pyramidal, SubsampleMode::LearnedConv) if self.levels > 1 => 3,
            _ => 0,
        }
    }

    /// Multiply-accumulates of the kernel applications in an `n`-input pyramid.
    pub fn kernel_macs(&self, n: usize) -> usize {
        let per_output = match self.mode {
            SubsampleMode::AvgPool | SubsampleMode::LearnedConv => 3,
            SubsampleMode::Skip | SubsampleMode::MaxPool => 0,
        };
        if self.kind != TransformKind::Pyramidal {
            return 0;
        }
        (1..self.levels).map(|k| (n >> k) * per_output).sum()
    }
}

/// Any of the three transforms behind one interface.
#[derive(Clone, Debug)]
pub enum AnyTransform {
    Linear(LinearTransform),
    Grouped(GroupedLinear),
    Pyramidal(PyramidalTransform),
}

impl AnyTransform {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        spec: &TransformSpec,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(match spec.kind {
            TransformKind::Linear => AnyTransform::Linear(LinearTransform::new(
                store, name, in_dim, out_dim, bias, rng,
            )?),
            TransformKind::Grouped => AnyTransform::Grouped(GroupedLinear::new(
                store,
                name,
                in_dim,
                out_dim,
                spec.groups,
                bias,
                rng,
            )?),
            TransformKind::Pyramidal => AnyTransform::Pyramidal(PyramidalTransform::new(
                store,
                name,
                in_dim,
                out_dim,
                spec.levels,
                spec.mode,
                spec.residual,
                bias,
                rng,
            )?),
        })
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            AnyTransform::Linear(t) => t.forward(tape, x),
            AnyTransform::Grouped(t) => t.forward(tape, x),
            AnyTransform::Pyramidal(t) => t.forward(tape, x),
        }
    }

    pub fn weight_param_count(&self) -> usize {
        match self {
            AnyTransform::Linear(t) => t.weight_param_count(),
            AnyTransform::Grouped(t) => t.weight_param_count(),
            AnyTransform::Pyramidal(t) => t.weight_param_count(),
        }
    }

    pub fn weight_params(&self) -> Vec<ParamId> {
        match self {
            AnyTransform::Linear(t) => t.weight_params(),
            AnyTransform::Grouped(t) => t.weight_params(),
            AnyTransform::Pyramidal(t) => t.weight_params(),
        }
    }

    pub fn bias(&self) -> Option<ParamId> {
        match self {
            AnyTransform::Linear(t) => t.bias(),
            AnyTransform::Grouped(t) => t.bias(),
            AnyTransform::Pyramidal(t) => t.bias(),
        }
    }

    pub fn kernel_param(&self) -> Option<ParamId> {
        match self {
            AnyTransform::Pyramidal(t) if t.levels() > 1 => t.kernel().kappa(),
            _ => None,
        }
    }
}
