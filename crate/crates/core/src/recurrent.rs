//! The pyramidal recurrent unit and stacks of it.
//!
//! Each of the four gates (forget, input, content, output) computes
//! `G(x, h) = F_in(x) + F_ctx(h)`, where the input transform carries the
//! gate's only bias. With the default transforms `F_in` is pyramidal and
//! `F_ctx` is grouped linear; both degenerate to plain matrices at
//! `K = g = 1`, where the cell is exactly an LSTM.

use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::dropout::{dropout_var, DropoutSpec};
use crate::error::{Error, Result};
use crate::lstm_reference::{LstmWeights, GATE_NAMES};
use crate::tensor::Tensor;
use crate::transforms::{AnyTransform, SubsampleMode, TransformKind, TransformSpec};

/// Shape of one recurrent layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub input: TransformSpec,
    pub context: TransformSpec,
}

impl CellConfig {
    /// Pyramidal input transform and grouped context transform.
    pub fn pru(
        input_dim: usize,
        hidden_dim: usize,
        levels: usize,
        groups: usize,
        mode: SubsampleMode,
    ) -> Self {
        CellConfig {
            input_dim,
            hidden_dim,
            input: TransformSpec {
                kind: TransformKind::Pyramidal,
                levels,
                groups: 1,
                mode,
                residual: true,
            },
            context: TransformSpec {
                kind: TransformKind::Grouped,
                levels: 1,
                groups,
                mode,
                residual: false,
            },
        }
    }

    /// Linear input and context transforms.
    pub fn lstm(input_dim: usize, hidden_dim: usize) -> Self {
        let lin = TransformSpec {
            kind: TransformKind::Linear,
            levels: 1,
            groups: 1,
            mode: SubsampleMode::AvgPool,
            residual: false,
        };
        CellConfig {
            input_dim,
            hidden_dim,
            input: lin,
            context: lin,
        }
    }

    pub fn with_residual(mut self, residual: bool) -> Self {
        self.input.residual = residual;
        self
    }

    /// Closed-form weight count: four gates, each `F_in(N->M) + F_ctx(M->M)`.
    pub fn weight_count(&self) -> usize {
        4 * (self.input.weight_count(self.input_dim, self.hidden_dim)
            + self.context.weight_count(self.hidden_dim, self.hidden_dim))
    }

    pub fn bias_count(&self) -> usize {
        4 * self.hidden_dim
    }

    pub fn kernel_count(&self) -> usize {
        4 * (self.input.kernel_count() + self.context.kernel_count())
    }

    /// Multiply-accumulates of one step: matrix products plus kernel taps.
    pub fn macs_per_step(&self) -> usize {
        4 * (self.input.weight_count(self.input_dim, self.hidden_dim)
            + self.input.kernel_macs(self.input_dim)
            + self.context.weight_count(self.hidden_dim, self.hidden_dim)
            + self.context.kernel_macs(self.hidden_dim))
    }
}

#[derive(Clone, Debug)]
struct Gate {
    input: AnyTransform,
    context: AnyTransform,
}

/// One recurrent layer.
#[derive(Clone, Debug)]
pub struct PruCell {
    config: CellConfig,
    gates: Vec<Gate>,
}

/// Hidden and cell state as recorded tape values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateVars {
    pub h: Var,
    pub c: Var,
}

/// Hidden and cell state values.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub h: Tensor,
    pub c: Tensor,
}

impl CellState {
    pub fn zeros(hidden_dim: usize) -> Self {
        CellState {
            h: Tensor::zeros(&[hidden_dim]),
            c: Tensor::zeros(&[hidden_dim]),
        }
    }

    /// Records the state as constants, cutting gradient flow.
    pub fn detached(&self, tape: &mut Tape) -> StateVars {
        StateVars {
            h: tape.constant(self.h.clone()),
            c: tape.constant(self.c.clone()),
        }
    }

    /// Records the state as differentiable inputs.
    pub fn as_inputs(&self, tape: &mut Tape) -> StateVars {
        StateVars {
            h: tape.input(self.h.clone()),
            c: tape.input(self.c.clone()),
        }
    }

    pub fn read(tape: &Tape, vars: StateVars) -> Self {
        CellState {
            h: tape.value(vars.h).clone(),
            c: tape.value(vars.c).clone(),
        }
    }
}

impl PruCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        config: CellConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let gates = GATE_NAMES
            .iter()
            .map(|g| {
                Ok(Gate {
                    input: AnyTransform::new(
                        store,
                        &format!("{name}.{g}.input"),
                        config.input_dim,
                        config.hidden_dim,
                        &config.input,
                        true,
                        rng,
                    )?,
                    context: AnyTransform::new(
                        store,
                        &format!("{name}.{g}.context"),
                        config.hidden_dim,
                        config.hidden_dim,
                        &config.context,
                        false,
                        rng,
                    )?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PruCell { config, gates })
    }

    pub fn config(&self) -> &CellConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    /// Advances the cell by one step.
    pub fn step(&self, tape: &mut Tape, x: Var, prev: StateVars) -> Result<StateVars> {
        let m = self.config.hidden_dim;
        if tape.value(prev.h).len() != m || tape.value(prev.c).len() != m {
            return Err(Error::shape(format!(
                "state of sizes {}/{} for a cell of width {m}",
                tape.value(prev.h).len(),
                tape.value(prev.c).len()
            )));
        }
        let mut pre = [x; 4];
        for (slot, gate) in pre.iter_mut().zip(&self.gates) {
            let a = gate.input.forward(tape, x)?;
            let b = gate.context.forward(tape, prev.h)?;
            *slot = tape.add(a, b)?;
        }
        let f = tape.sigmoid(pre[0]);
        let i = tape.sigmoid(pre[1]);
        let cand = tape.tanh(pre[2]);
        let o = tape.sigmoid(pre[3]);
        let keep = tape.mul(f, prev.c)?;
        let write = tape.mul(i, cand)?;
        let c = tape.add(keep, write)?;
        let squashed = tape.tanh(c);
        let h = tape.mul(o, squashed)?;
        Ok(StateVars { h, c })
    }

    /// Input transform of gate `g` (in f, i, c, o order).
    pub fn input_transform(&self, g: usize) -> &AnyTransform {
        &self.gates[g].input
    }

    pub fn context_transform(&self, g: usize) -> &AnyTransform {
        &self.gates[g].context
    }

    /// Parameters that hold transform weights (no biases or kernels).
    pub fn weight_params(&self) -> Vec<ParamId> {
        self.gates
            .iter()
            .flat_map(|g| {
                let mut ids = g.input.weight_params();
                ids.extend(g.context.weight_params());
                ids
            })
            .collect()
    }

    pub fn bias_params(&self) -> Vec<ParamId> {
        self.gates.iter().filter_map(|g| g.input.bias()).collect()
    }

    pub fn kernel_params(&self) -> Vec<ParamId> {
        self.gates
            .iter()
            .flat_map(|g| [g.input.kernel_param(), g.context.kernel_param()])
            .flatten()
            .collect()
    }

    pub fn weight_param_count(&self) -> usize {
        self.gates
            .iter()
            .map(|g| g.input.weight_param_count() + g.context.weight_param_count())
            .sum()
    }

    /// Copies the weights into dense LSTM form. Only valid when every
    /// transform is a single matrix (`K = g = 1`) and no residual is applied.
    pub fn to_lstm_weights(&self, store: &ParamStore) -> Result<LstmWeights> {
        let (n, m) = (self.config.input_dim, self.config.hidden_dim);
        let mut w = LstmWeights::zeros(n, m);
        for (k, gate) in self.gates.iter().enumerate() {
            if let AnyTransform::Pyramidal(p) = &gate.input {
                if p.has_residual() {
                    return Err(Error::config("residual pyramid has no LSTM equivalent"));
                }
            }
            let single = |t: &AnyTransform| -> Result<Vec<f64>> {
                match t.weight_params().as_slice() {
                    [id] => Ok(store.value(*id).data().to_vec()),
                    _ => Err(Error::config(
                        "cell is not LSTM-equivalent (needs K = g = 1)",
                    )),
                }
            };
            w.input[k] = single(&gate.input)?;
            w.recurrent[k] = single(&gate.context)?;
            w.bias[k] = match gate.input.bias() {
                Some(b) => store.value(b).data().to_vec(),
                None => vec![0.0; m],
            };
        }
        Ok(w)
    }
}

/// One cell step on plain values.
pub fn pru_step(
    cell: &PruCell,
    store: &ParamStore,
    x: &Tensor,
    prev: &CellState,
) -> Result<CellState> {
    let mut tape = Tape::new(store);
    let xv = tape.constant(x.clone());
    let s = prev.detached(&mut tape);
    let next = cell.step(&mut tape, xv, s)?;
    Ok(CellState::read(&tape, next))
}

/// Layers applied in sequence; layer `l + 1` reads layer `l`'s hidden state.
#[derive(Clone, Debug)]
pub struct StackedRnn {
    layers: Vec<PruCell>,
}

impl StackedRnn {
    pub fn new(layers: Vec<PruCell>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("a stack needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].hidden_dim() != pair[1].input_dim() {
                return Err(Error::config(format!(
                    "layer of width {} feeds a layer expecting {}",
                    pair[0].hidden_dim(),
                    pair[1].input_dim()
                )));
            }
        }
        Ok(StackedRnn { layers })
    }

    pub fn layers(&self) -> &[PruCell] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].hidden_dim()
    }

    pub fn zero_states(&self) -> Vec<CellState> {
        self.layers
            .iter()
            .map(|l| CellState::zeros(l.hidden_dim()))
            .collect()
    }

    /// Runs the stack over a sequence, time-major.
    ///
    /// Dropout is applied to each layer's output before it feeds the next
    /// layer; the top layer's output is returned undropped. Returns the top
    /// hidden state for every step and the final state of every layer.
    pub fn unroll(
        &self,
        tape: &mut Tape,
        inputs: &[Var],
        init: &[StateVars],
        inter_layer_dropout: &DropoutSpec,
        rng: &mut impl Rng,
    ) -> Result<(Vec<Var>, Vec<StateVars>)> {
        if inputs.is_empty() {
            return Err(Error::contract("unroll over an empty sequence"));
        }
        if init.len() != self.layers.len() {
            return Err(Error::shape(format!(
                "{} initial states for {} layers",
                init.len(),
                self.layers.len()
            )));
        }
        let mut states = init.to_vec();
        let mut outputs = Vec::with_capacity(inputs.len());
        let last = self.layers.len() - 1;
        for &x in inputs {
            let mut below = x;
            for (l, cell) in self.layers.iter().enumerate() {
                states[l] = cell.step(tape, below, states[l])?;
                below = if l < last {
                    dropout_var(tape, inter_layer_dropout, states[l].h, rng)?
                } else {
                    states[l].h
                };
            }
            outputs.push(below);
        }
        Ok((outputs, states))
    }

    pub fn weight_param_count(&self) -> usize {
        self.layers.iter().map(PruCell::weight_param_count).sum()
    }
}
