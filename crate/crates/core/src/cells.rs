//! Vanilla RNN, LSTM and GRU cells, stacked into `l` fully connected
//! recurrent layers of `c` cells whose top-layer outputs are summed.
//!
//! Every layer is a list of gates; each gate owns `W` (n×m), `U` (n×n) and
//! `b` (n). The gate order is fixed and is also the flat parameter order
//! used by gradients, checkpoints and the C API:
//!
//! * RNN: `[h]`
//! * LSTM: `[i, f, o, c̃]`
//! * GRU: `[z, r, h̃]`

use crate::error::{dim_check, Error, Result};
use crate::linalg::Mat;
use crate::rng::Prng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Rnn,
    Lstm,
    Gru,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::Rnn, CellKind::Lstm, CellKind::Gru];

    pub fn gate_count(self) -> usize {
        match self {
            CellKind::Rnn => 1,
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Rnn => "rnn",
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }

    /// Closed-form parameter count of one layer with input width `m` and `n` cells.
    pub fn layer_params(self, m: usize, n: usize) -> usize {
        self.gate_count() * (m * n + n * n + n)
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rnn" => Ok(CellKind::Rnn),
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::InvalidArgument(format!(
                "unknown model '{other}' (expected rnn, lstm or gru)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub w: Mat,
    pub u: Mat,
    pub b: Vec<f64>,
}

impl Gate {
    fn zeros(m: usize, n: usize) -> Self {
        Gate {
            w: Mat::zeros(n, m),
            u: Mat::zeros(n, n),
            b: vec![0.0; n],
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.w.data().iter().chain(self.u.data()).chain(&self.b)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w
            .data_mut()
            .iter_mut()
            .chain(self.u.data_mut().iter_mut())
            .chain(self.b.iter_mut())
    }
}

/// One recurrent layer: `cells` units fed by an input of width `input_width`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    input_width: usize,
    cells: usize,
    pub gates: Vec<Gate>,
}

impl Layer {
    pub fn zeros(kind: CellKind, input_width: usize, cells: usize) -> Self {
        Layer {
            input_width,
            cells,
            gates: (0..kind.gate_count())
                .map(|_| Gate::zeros(input_width, cells))
                .collect(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.gates.iter().flat_map(Gate::values)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.gates.iter_mut().flat_map(Gate::values_mut)
    }

    fn check_step(&self, gates: usize, x: &[f64], h_prev: &[f64]) -> Result<()> {
        dim_check(self.gates.len() == gates, || {
            format!("layer has {} gates, cell needs {gates}", self.gates.len())
        })?;
        dim_check(x.len() == self.input_width, || {
            format!("input of length {} for input width {}", x.len(), self.input_width)
        })?;
        dim_check(h_prev.len() == self.cells, || {
            format!("state of length {} for {} cells", h_prev.len(), self.cells)
        })
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out = b + W x + U h`
#[inline]
fn affine(gate: &Gate, x: &[f64], h: &[f64], out: &mut [f64]) {
    out.copy_from_slice(&gate.b);
    gate.w.matvec_add(x, out);
    gate.u.matvec_add(h, out);
}

/// `h_t = tanh(W x_t + U h_{t-1} + b)`
pub fn rnn_step(layer: &Layer, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    layer.check_step(1, x, h_prev)?;
    let mut h = vec![0.0; layer.cells];
    rnn_forward(layer, x, h_prev, &mut h);
    Ok(h)
}

/// Standard LSTM step without peepholes.
pub fn lstm_step(layer: &Layer, x: &[f64], state: (&[f64], &[f64])) -> Result<(Vec<f64>, Vec<f64>)> {
    let (h_prev, c_prev) = state;
    layer.check_step(4, x, h_prev)?;
    dim_check(c_prev.len() == layer.cells, || "cell memory length".to_string())?;
    let n = layer.cells;
    let (mut acts, mut h, mut c) = (vec![0.0; 4 * n], vec![0.0; n], vec![0.0; n]);
    lstm_forward(layer, x, h_prev, c_prev, &mut acts, &mut h, &mut c);
    Ok((h, c))
}

/// GRU step: `h_t = (1 − z) ⊙ h_{t-1} + z ⊙ h̃`.
pub fn gru_step(layer: &Layer, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    layer.check_step(3, x, h_prev)?;
    let n = layer.cells;
    let (mut acts, mut rh, mut h) = (vec![0.0; 3 * n], vec![0.0; n], vec![0.0; n]);
    gru_forward(layer, x, h_prev, &mut acts, &mut rh, &mut h);
    Ok(h)
}

#[inline]
fn rnn_forward(layer: &Layer, x: &[f64], h_prev: &[f64], h: &mut [f64]) {
    affine(&layer.gates[0], x, h_prev, h);
    h.iter_mut().for_each(|v| *v = v.tanh());
}

#[inline]
fn lstm_forward(
    layer: &Layer,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    acts: &mut [f64],
    h: &mut [f64],
    c: &mut [f64],
) {
    let n = layer.cells;
    for (g, chunk) in acts.chunks_exact_mut(n).enumerate() {
        affine(&layer.gates[g], x, h_prev, chunk);
        if g == 3 {
            chunk.iter_mut().for_each(|v| *v = v.tanh());
        } else {
            chunk.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
    }
    let (i, rest) = acts.split_at(n);
    let (f, rest) = rest.split_at(n);
    let (o, cand) = rest.split_at(n);
    for k in 0..n {
        c[k] = f[k] * c_prev[k] + i[k] * cand[k];
        h[k] = o[k] * c[k].tanh();
    }
}

#[inline]
fn gru_forward(layer: &Layer, x: &[f64], h_prev: &[f64], acts: &mut [f64], rh: &mut [f64], h: &mut [f64]) {
    let n = layer.cells;
    let (zr, cand) = acts.split_at_mut(2 * n);
    for (g, chunk) in zr.chunks_exact_mut(n).enumerate() {
        affine(&layer.gates[g], x, h_prev, chunk);
        chunk.iter_mut().for_each(|v| *v = sigmoid(*v));
    }
    let (z, r) = zr.split_at(n);
    for k in 0..n {
        rh[k] = r[k] * h_prev[k];
    }
    affine(&layer.gates[2], x, rh, cand);
    for k in 0..n {
        cand[k] = cand[k].tanh();
        h[k] = (1.0 - z[k]) * h_prev[k] + z[k] * cand[k];
    }
}

/// An `l`-layer network of `c` cells per layer with a summed readout.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedNet {
    kind: CellKind,
    layers: Vec<Layer>,
}

impl StackedNet {
    /// All-zero network.
    pub fn zeros(kind: CellKind, layers: usize, cells: usize) -> Result<Self> {
        if layers < 1 || cells < 1 {
            return Err(Error::InvalidArgument(format!(
                "need at least one layer and one cell, got l={layers}, c={cells}"
            )));
        }
        Ok(StackedNet {
            kind,
            layers: (0..layers)
                .map(|j| Layer::zeros(kind, if j == 0 { 1 } else { cells }, cells))
                .collect(),
        })
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn width(&self) -> usize {
        self.layers[0].cells
    }

    /// Closed-form trainable parameter count.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| self.kind.layer_params(l.input_width, l.cells))
            .sum()
    }

    /// Parameters in canonical flat order (layer, gate, W, U, b).
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Layer::values)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Layer::values_mut)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let count = self.param_count();
        dim_check(flat.len() == count, || {
            format!("{} values for {count} parameters", flat.len())
        })?;
        for (dst, src) in self.values_mut().zip(flat) {
            *dst = *src;
        }
        Ok(())
    }

    /// Output and tape for one input sequence.
    pub fn forward(&self, x: &[f64]) -> Result<(f64, ForwardTape)> {
        let mut tape = ForwardTape::default();
        let out = self.forward_into(x, &mut tape)?;
        Ok((out, tape))
    }

    /// Like [`forward`](Self::forward), reusing the buffers of `tape`.
    pub fn forward_into(&self, x: &[f64], tape: &mut ForwardTape) -> Result<f64> {
        if x.is_empty() {
            return Err(Error::InvalidArgument("empty input sequence".into()));
        }
        tape.reset(self, x);
        let q = x.len();
        for j in 0..self.layers.len() {
            let layer = &self.layers[j];
            let n = layer.cells;
            let (below, rest) = tape.h.split_at_mut(j);
            let hbuf = &mut rest[0];
            let cbuf = &mut tape.c[j];
            let acts = &mut tape.acts[j];
            let rh = &mut tape.rh[j];
            let gates = self.kind.gate_count();
            for t in 0..q {
                let input: &[f64] = if j == 0 {
                    &tape.x[t..t + 1]
                } else {
                    let nb = self.layers[j - 1].cells;
                    &below[j - 1][(t + 1) * nb..(t + 2) * nb]
                };
                let (hp, hn) = hbuf.split_at_mut((t + 1) * n);
                let h_prev = &hp[t * n..];
                let h = &mut hn[..n];
                let a = &mut acts[t * gates * n..(t + 1) * gates * n];
                match self.kind {
                    CellKind::Rnn => rnn_forward(layer, input, h_prev, h),
                    CellKind::Lstm => {
                        let (cp, cn) = cbuf.split_at_mut((t + 1) * n);
                        lstm_forward(layer, input, h_prev, &cp[t * n..], a, h, &mut cn[..n]);
                    }
                    CellKind::Gru => {
                        gru_forward(layer, input, h_prev, a, &mut rh[t * n..(t + 1) * n], h)
                    }
                }
            }
        }
        Ok(tape.output())
    }

    /// Convenience: output only.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.forward(x).map(|(y, _)| y)
    }
}

/// Uniform `[-1/√fan_in, 1/√fan_in]` weights (fan-in taken per matrix:
/// `m` for `W`, `n` for `U`), zero biases.
pub fn init_net(kind: CellKind, layers: usize, cells: usize, prng: &mut Prng) -> Result<StackedNet> {
    let mut net = StackedNet::zeros(kind, layers, cells)?;
    for layer in &mut net.layers {
        for gate in &mut layer.gates {
            let bound = 1.0 / (gate.w.cols() as f64).sqrt();
            gate.w
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = prng.uniform_unchecked(-bound, bound));
            let bound = 1.0 / (gate.u.cols() as f64).sqrt();
            gate.u
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = prng.uniform_unchecked(-bound, bound));
        }
    }
    Ok(net)
}

/// Per-timestep, per-layer activations recorded by a forward pass.
#[derive(Clone, Debug, Default)]
pub struct ForwardTape {
    pub(crate) kind: Option<CellKind>,
    pub(crate) widths: Vec<usize>,
    pub(crate) x: Vec<f64>,
    /// per layer, `(q+1)·n`; slot 0 is the zero initial state
    pub(crate) h: Vec<Vec<f64>>,
    /// LSTM cell memory, same layout as `h`
    pub(crate) c: Vec<Vec<f64>>,
    /// gate activations, `q·gates·n`
    pub(crate) acts: Vec<Vec<f64>>,
    /// GRU `r ⊙ h_{t-1}`, `q·n`
    pub(crate) rh: Vec<Vec<f64>>,
}

impl ForwardTape {
    fn reset(&mut self, net: &StackedNet, x: &[f64]) {
        let q = x.len();
        let l = net.layers.len();
        let g = net.kind.gate_count();
        self.kind = Some(net.kind);
        self.widths.clear();
        self.widths.extend(net.layers.iter().map(|layer| layer.cells));
        self.x.clear();
        self.x.extend_from_slice(x);
        for buf in [&mut self.h, &mut self.c, &mut self.acts, &mut self.rh] {
            buf.resize_with(l, Vec::new);
        }
        for (j, &n) in self.widths.iter().enumerate() {
            self.h[j].clear();
            self.h[j].resize((q + 1) * n, 0.0);
            self.acts[j].resize(q * g * n, 0.0);
            if net.kind == CellKind::Lstm {
                self.c[j].clear();
                self.c[j].resize((q + 1) * n, 0.0);
            }
            if net.kind == CellKind::Gru {
                self.rh[j].resize(q * n, 0.0);
            }
        }
    }

    /// Sequence length `q`.
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn inputs(&self) -> &[f64] {
        &self.x
    }

    /// Hidden state of `layer` after consuming step `t` (0-based).
    pub fn hidden(&self, t: usize, layer: usize) -> &[f64] {
        let n = self.widths[layer];
        &self.h[layer][(t + 1) * n..(t + 2) * n]
    }

    /// LSTM cell memory of `layer` after step `t`; empty for other kinds.
    pub fn cell_memory(&self, t: usize, layer: usize) -> &[f64] {
        let n = self.widths[layer];
        self.c[layer].get((t + 1) * n..(t + 2) * n).unwrap_or(&[])
    }

    /// Gate activations of `layer` at step `t`, in gate order.
    pub fn gates(&self, t: usize, layer: usize) -> &[f64] {
        let n = self.widths[layer];
        let g = self.kind.map_or(1, CellKind::gate_count);
        &self.acts[layer][t * g * n..(t + 1) * g * n]
    }

    /// Sum of the top layer's hidden units at the final step.
    pub fn output(&self) -> f64 {
        match self.widths.len() {
            0 => 0.0,
            l => self.hidden(self.len() - 1, l - 1).iter().sum(),
        }
    }
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// On-disk model: weights are `layer → gate → [W row-major, U row-major, b]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: CellKind,
    pub l: usize,
    pub c: usize,
    pub seed: u32,
    pub weights: Vec<Vec<Vec<f64>>>,
}

impl Checkpoint {
    pub fn from_net(net: &StackedNet, seed: u32) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            kind: net.kind,
            l: net.depth(),
            c: net.width(),
            seed,
            weights: net
                .layers
                .iter()
                .map(|layer| {
                    layer
                        .gates
                        .iter()
                        .map(|g| g.values().copied().collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn to_net(&self) -> Result<StackedNet> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "checkpoint format_version {} (supported: {CHECKPOINT_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let mut net = StackedNet::zeros(self.kind, self.l, self.c)?;
        dim_check(self.weights.len() == self.l, || {
            format!("{} weight layers for l={}", self.weights.len(), self.l)
        })?;
        for (layer, stored) in net.layers.iter_mut().zip(&self.weights) {
            dim_check(stored.len() == layer.gates.len(), || {
                format!("{} gates stored, {} expected", stored.len(), layer.gates.len())
            })?;
            for (gate, values) in layer.gates.iter_mut().zip(stored) {
                let expected = gate.w.data().len() + gate.u.data().len() + gate.b.len();
                dim_check(values.len() == expected, || {
                    format!("gate has {} values, {expected} expected", values.len())
                })?;
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Parse("non-finite weight in checkpoint".into()));
                }
                for (dst, src) in gate.values_mut().zip(values) {
                    *dst = *src;
                }
            }
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
