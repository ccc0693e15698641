//! Backpropagation through time, plain SGD and the single-run training loop.

use crate::cells::{init_net, CellKind, ForwardTape, Layer, StackedNet};
use crate::error::{dim_check, Error, Result};
use crate::rng::Prng;
use crate::tasks::{fill_episode, mae, Episode, TaskKind, TaskSpec};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// MAE reported for a run whose loss became non-finite.
pub const DIVERGED_SENTINEL_MAE: f64 = 0.25;

/// XOR mask turning a run seed into the seed of its evaluation stream.
const EVAL_STREAM_MASK: u32 = 0x5eed_e7a1;

/// Gradients laid out exactly like the parameters of a [`StackedNet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &StackedNet) -> Self {
        Gradients {
            layers: net
                .layers()
                .iter()
                .map(|l| Layer::zeros(net.kind(), l.input_width(), l.cells()))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Layer::values)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    pub fn zero(&mut self) {
        for layer in &mut self.layers {
            layer.values_mut().for_each(|v| *v = 0.0);
        }
    }

    fn matches(&self, net: &StackedNet) -> bool {
        self.layers.len() == net.depth()
            && self.layers.iter().zip(net.layers()).all(|(g, l)| {
                g.gates.len() == l.gates.len()
                    && g.input_width() == l.input_width()
                    && g.cells() == l.cells()
            })
    }
}

/// Scratch buffers for [`backward_into`], reusable across calls.
#[derive(Clone, Debug, Default)]
pub struct BackpropScratch {
    carry_h: Vec<Vec<f64>>,
    carry_c: Vec<Vec<f64>>,
    dh: Vec<f64>,
    da: Vec<f64>,
    dx: Vec<f64>,
    from_above: Vec<f64>,
    drh: Vec<f64>,
}

/// Exact gradient of the network output w.r.t. every parameter, scaled by
/// `d_output`.
pub fn backward(net: &StackedNet, tape: &ForwardTape, d_output: f64) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(net);
    backward_into(net, tape, d_output, None, &mut grads, &mut BackpropScratch::default())?;
    Ok(grads)
}

/// Accumulate `d_output · ∂output/∂θ` into `grads`.
///
/// With `truncation = Some(k)` the gradient only flows through the last `k`
/// timesteps; `None` is full BPTT over the whole sequence.
pub fn backward_into(
    net: &StackedNet,
    tape: &ForwardTape,
    d_output: f64,
    truncation: Option<usize>,
    grads: &mut Gradients,
    scratch: &mut BackpropScratch,
) -> Result<()> {
    let depth = net.depth();
    dim_check(
        tape.kind == Some(net.kind())
            && tape.widths.len() == depth
            && tape.widths.iter().zip(net.layers()).all(|(&w, l)| w == l.cells()),
        || "tape was not produced by this network".to_string(),
    )?;
    dim_check(grads.matches(net), || "gradient buffer does not match network".to_string())?;
    let q = tape.len();
    if q == 0 || d_output == 0.0 {
        return Ok(());
    }

    let kind = net.kind();
    let gates = kind.gate_count();
    scratch.carry_h.resize_with(depth, Vec::new);
    scratch.carry_c.resize_with(depth, Vec::new);
    for (j, layer) in net.layers().iter().enumerate() {
        let n = layer.cells();
        scratch.carry_h[j].clear();
        scratch.carry_h[j].resize(n, 0.0);
        scratch.carry_c[j].clear();
        scratch.carry_c[j].resize(n, 0.0);
    }

    let first = truncation.map_or(0, |k| q.saturating_sub(k));
    for t in (first..q).rev() {
        for j in (0..depth).rev() {
            let layer = &net.layers()[j];
            let glayer = &mut grads.layers[j];
            let n = layer.cells();
            let m = layer.input_width();

            // total gradient arriving at h_t of this layer
            scratch.dh.clear();
            scratch.dh.extend_from_slice(&scratch.carry_h[j]);
            if j == depth - 1 {
                if t == q - 1 {
                    scratch.dh.iter_mut().for_each(|v| *v += d_output);
                }
            } else {
                for (d, a) in scratch.dh.iter_mut().zip(&scratch.from_above) {
                    *d += a;
                }
            }

            let input: &[f64] = if j == 0 {
                &tape.x[t..t + 1]
            } else {
                tape.hidden(t, j - 1)
            };
            let h_prev = &tape.h[j][t * n..(t + 1) * n];
            let h = &tape.h[j][(t + 1) * n..(t + 2) * n];
            let acts = &tape.acts[j][t * gates * n..(t + 1) * gates * n];

            scratch.da.clear();
            scratch.da.resize(gates * n, 0.0);
            let dh_prev = &mut scratch.carry_h[j];
            dh_prev.iter_mut().for_each(|v| *v = 0.0);

            match kind {
                CellKind::Rnn => {
                    for k in 0..n {
                        scratch.da[k] = scratch.dh[k] * (1.0 - h[k] * h[k]);
                    }
                }
                CellKind::Lstm => {
                    let c = &tape.c[j][(t + 1) * n..(t + 2) * n];
                    let c_prev = &tape.c[j][t * n..(t + 1) * n];
                    let carry_c = &mut scratch.carry_c[j];
                    for k in 0..n {
                        let (i, f, o, g) = (acts[k], acts[n + k], acts[2 * n + k], acts[3 * n + k]);
                        let tc = c[k].tanh();
                        let dc = carry_c[k] + scratch.dh[k] * o * (1.0 - tc * tc);
                        scratch.da[k] = dc * g * i * (1.0 - i);
                        scratch.da[n + k] = dc * c_prev[k] * f * (1.0 - f);
                        scratch.da[2 * n + k] = scratch.dh[k] * tc * o * (1.0 - o);
                        scratch.da[3 * n + k] = dc * i * (1.0 - g * g);
                        carry_c[k] = dc * f;
                    }
                }
                CellKind::Gru => {
                    let rh = &tape.rh[j][t * n..(t + 1) * n];
                    for k in 0..n {
                        let (z, g) = (acts[k], acts[2 * n + k]);
                        scratch.da[k] = scratch.dh[k] * (g - h_prev[k]) * z * (1.0 - z);
                        scratch.da[2 * n + k] = scratch.dh[k] * z * (1.0 - g * g);
                        dh_prev[k] = scratch.dh[k] * (1.0 - z);
                    }
                    // candidate gate sees r ⊙ h_prev instead of h_prev
                    let cand = &scratch.da[2 * n..];
                    scratch.drh.clear();
                    scratch.drh.resize(n, 0.0);
                    layer.gates[2].u.matvec_t_add(cand, &mut scratch.drh);
                    let gc = &mut glayer.gates[2];
                    gc.u.add_outer(cand, rh);
                    for k in 0..n {
                        let r = acts[n + k];
                        dh_prev[k] += scratch.drh[k] * r;
                        scratch.da[n + k] = scratch.drh[k] * h_prev[k] * r * (1.0 - r);
                    }
                }
            }

            scratch.dx.clear();
            scratch.dx.resize(m, 0.0);
            for g in 0..gates {
                let da = &scratch.da[g * n..(g + 1) * n];
                let (param, grad) = (&layer.gates[g], &mut glayer.gates[g]);
                grad.w.add_outer(da, input);
                for (b, d) in grad.b.iter_mut().zip(da) {
                    *b += d;
                }
                if j > 0 {
                    param.w.matvec_t_add(da, &mut scratch.dx);
                }
                if !(kind == CellKind::Gru && g == 2) {
                    grad.u.add_outer(da, h_prev);
                    param.u.matvec_t_add(da, dh_prev);
                }
            }
            std::mem::swap(&mut scratch.from_above, &mut scratch.dx);
        }
    }
    Ok(())
}

/// Derivative of `|target − pred|` w.r.t. `pred`, with 0 at the kink.
pub fn loss_grad(pred: f64, target: f64) -> f64 {
    let diff = target - pred;
    if diff > 0.0 {
        -1.0
    } else if diff < 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `θ ← θ − lr · g`. Rejects non-finite gradients without touching `net`.
pub fn sgd_step(net: &mut StackedNet, grads: &Gradients, lr: f64) -> Result<()> {
    dim_check(grads.matches(net), || "gradient shape does not match network".to_string())?;
    if grads.values().any(|g| !g.is_finite()) {
        return Err(Error::Diverged("non-finite gradient".into()));
    }
    if lr == 0.0 {
        return Ok(());
    }
    for (p, g) in net.values_mut().zip(grads.values()) {
        *p -= lr * g;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub episodes_per_epoch: usize,
    pub max_epochs: usize,
    pub eval_episodes: usize,
    pub eval_every: usize,
    pub early_stop_mae: f64,
    pub seed: u32,
    /// Backpropagate through at most this many trailing steps.
    pub truncation: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.005,
            episodes_per_epoch: 100,
            max_epochs: 5000,
            eval_episodes: 1000,
            eval_every: 10,
            early_stop_mae: 0.01,
            seed: 1,
            truncation: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("episodes_per_epoch", self.episodes_per_epoch),
            ("max_epochs", self.max_epochs),
            ("eval_episodes", self.eval_episodes),
            ("eval_every", self.eval_every),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if !(self.early_stop_mae >= 0.0) {
            return Err(Error::InvalidArgument("early_stop_mae must be >= 0".into()));
        }
        if self.truncation == Some(0) {
            return Err(Error::InvalidArgument("truncation must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    /// `(epoch, eval MAE)` in chronological order
    pub loss_curve: Vec<(usize, f64)>,
    pub final_eval_mae: f64,
    pub best_eval_mae: f64,
    pub epochs_run: usize,
    pub diverged: bool,
    pub wall_ms: u64,
}

/// Trained network plus its history.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub net: StackedNet,
    pub result: TrainResult,
}

/// Mean absolute error of `net` over `episodes` fresh draws.
pub fn evaluate(net: &StackedNet, task: &TaskSpec, episodes: usize, prng: &mut Prng) -> Result<f64> {
    task.validate()?;
    let mut tape = ForwardTape::default();
    let mut episode = Episode::default();
    let mut total = 0.0;
    for _ in 0..episodes.max(1) {
        fill_episode(task, prng, &mut episode);
        let y = net.forward_into(&episode.x, &mut tape)?;
        total += mae(y, episode.target);
    }
    Ok(total / episodes.max(1) as f64)
}

/// Train one network from scratch with online SGD (batch size 1).
pub fn train_run(
    kind: CellKind,
    layers: usize,
    cells: usize,
    task: &TaskSpec,
    config: &TrainConfig,
) -> Result<TrainResult> {
    train_model(kind, layers, cells, task, config).map(|o| o.result)
}

/// [`train_run`], also returning the trained weights.
pub fn train_model(
    kind: CellKind,
    layers: usize,
    cells: usize,
    task: &TaskSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    task.validate()?;
    let started = Instant::now();
    let mut prng = Prng::new(config.seed);
    let mut eval_prng = Prng::new(config.seed ^ EVAL_STREAM_MASK);
    let mut net = init_net(kind, layers, cells, &mut prng)?;

    let mut tape = ForwardTape::default();
    let mut grads = Gradients::zeros_like(&net);
    let mut scratch = BackpropScratch::default();
    let mut episode = Episode::default();

    let mut curve = Vec::new();
    let mut best = f64::INFINITY;
    let mut diverged = false;
    let mut epochs_run = 0;

    'epochs: for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        for _ in 0..config.episodes_per_epoch {
            fill_episode(task, &mut prng, &mut episode);
            let y = net.forward_into(&episode.x, &mut tape)?;
            if !y.is_finite() {
                diverged = true;
                break 'epochs;
            }
            let d = loss_grad(y, episode.target);
            if d == 0.0 {
                continue;
            }
            grads.zero();
            backward_into(&net, &tape, d, config.truncation, &mut grads, &mut scratch)?;
            match sgd_step(&mut net, &grads, config.learning_rate) {
                Ok(()) => {}
                Err(Error::Diverged(_)) => {
                    diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        if epoch % config.eval_every == 0 || epoch == config.max_epochs {
            let score = evaluate(&net, task, config.eval_episodes, &mut eval_prng)?;
            if !score.is_finite() {
                diverged = true;
                break;
            }
            curve.push((epoch, score));
            best = best.min(score);
            if score <= config.early_stop_mae {
                break;
            }
        }
    }

    let final_eval_mae = if diverged {
        DIVERGED_SENTINEL_MAE
    } else {
        curve.last().map_or(DIVERGED_SENTINEL_MAE, |&(_, v)| v)
    };
    Ok(TrainOutcome {
        net,
        result: TrainResult {
            loss_curve: curve,
            final_eval_mae,
            best_eval_mae: best.min(final_eval_mae),
            epochs_run,
            diverged,
            wall_ms: started.elapsed().as_millis() as u64,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockError {
    pub layer: usize,
    pub gate: usize,
    /// `"W"`, `"U"` or `"b"`
    pub block: &'static str,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub kind: CellKind,
    pub layers: usize,
    pub cells: usize,
    pub q: usize,
    pub seed: u32,
    pub blocks: Vec<BlockError>,
    pub max_rel_error: f64,
}

pub const GRADCHECK_STEP: f64 = 1e-5;

/// Relative error with a floor on the denominator so that two gradients that
/// are both numerically zero compare equal.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compare BPTT against central finite differences of the MAE loss on one
/// episode of length `q` (target: last element).
pub fn gradcheck(kind: CellKind, layers: usize, cells: usize, q: usize, seed: u32) -> Result<GradcheckReport> {
    if q == 0 {
        return Err(Error::InvalidArgument("gradcheck needs q >= 1".into()));
    }
    let mut prng = Prng::new(seed);
    let mut net = init_net(kind, layers, cells, &mut prng)?;
    // random biases so bias paths are not trivially symmetric
    for v in net.layers_mut().iter_mut().flat_map(|l| l.gates.iter_mut()).flat_map(|g| g.b.iter_mut()) {
        *v = prng.uniform_unchecked(-0.5, 0.5);
    }
    let x: Vec<f64> = (0..q).map(|_| prng.next_f64()).collect();
    let target = prng.next_f64();

    let loss = |net: &StackedNet| -> Result<f64> { Ok(mae(net.predict(&x)?, target)) };
    let (y, tape) = net.forward(&x)?;
    let analytic = backward(&net, &tape, loss_grad(y, target))?.to_flat();

    let mut flat = net.to_flat();
    let mut numeric = vec![0.0; flat.len()];
    for i in 0..flat.len() {
        let orig = flat[i];
        flat[i] = orig + GRADCHECK_STEP;
        net.set_flat(&flat)?;
        let plus = loss(&net)?;
        flat[i] = orig - GRADCHECK_STEP;
        net.set_flat(&flat)?;
        let minus = loss(&net)?;
        flat[i] = orig;
        numeric[i] = (plus - minus) / (2.0 * GRADCHECK_STEP);
    }
    net.set_flat(&flat)?;

    let mut blocks = Vec::new();
    let mut offset = 0;
    for (li, layer) in net.layers().iter().enumerate() {
        for (gi, gate) in layer.gates.iter().enumerate() {
            for (name, len) in [("W", gate.w.data().len()), ("U", gate.u.data().len()), ("b", gate.b.len())] {
                let max_rel_error = (offset..offset + len)
                    .map(|i| relative_error(analytic[i], numeric[i]))
                    .fold(0.0, f64::max);
                blocks.push(BlockError { layer: li, gate: gi, block: name, max_rel_error });
                offset += len;
            }
        }
    }
    let max_rel_error = blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport { kind, layers, cells, q, seed, blocks, max_rel_error })
}

pub const RUN_LOG_HEADER: &str =
    "model,task,layers,cells,position,seed,lr,epochs_run,final_eval_mae,best_eval_mae,diverged,wall_ms";

/// One row of the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: CellKind,
    pub task: TaskKind,
    pub layers: usize,
    pub cells: usize,
    pub position: usize,
    pub seed: u32,
    pub lr: f64,
    pub epochs_run: usize,
    pub final_eval_mae: f64,
    pub best_eval_mae: f64,
    pub diverged: bool,
    pub wall_ms: u64,
}

impl RunRecord {
    pub fn new(
        model: CellKind,
        task: &TaskSpec,
        layers: usize,
        cells: usize,
        seed: u32,
        config: &TrainConfig,
        result: &TrainResult,
    ) -> Self {
        RunRecord {
            model,
            task: task.kind,
            layers,
            cells,
            position: task.p,
            seed,
            lr: config.learning_rate,
            epochs_run: result.epochs_run,
            final_eval_mae: result.final_eval_mae,
            best_eval_mae: result.best_eval_mae,
            diverged: result.diverged,
            wall_ms: result.wall_ms,
        }
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.model,
            self.task,
            self.layers,
            self.cells,
            self.position,
            self.seed,
            self.lr,
            self.epochs_run,
            self.final_eval_mae,
            self.best_eval_mae,
            self.diverged,
            self.wall_ms
        )
    }

    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 12 {
            return Err(Error::Parse(format!("run row has {} fields, expected 12: {line}", fields.len())));
        }
        fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Parse(format!("bad {what} '{s}'")))
        }
        Ok(RunRecord {
            model: fields[0].parse()?,
            task: fields[1].parse()?,
            layers: num(fields[2], "layers")?,
            cells: num(fields[3], "cells")?,
            position: num(fields[4], "position")?,
            seed: num(fields[5], "seed")?,
            lr: num(fields[6], "lr")?,
            epochs_run: num(fields[7], "epochs_run")?,
            final_eval_mae: num(fields[8], "final_eval_mae")?,
            best_eval_mae: num(fields[9], "best_eval_mae")?,
            diverged: num(fields[10], "diverged")?,
            wall_ms: num(fields[11], "wall_ms")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;

    fn setup(kind: CellKind, l: usize, c: usize, seed: u32) -> (StackedNet, Vec<f64>) {
        let mut prng = Prng::new(seed);
        let net = init_net(kind, l, c, &mut prng).unwrap();
        let x = (0..12).map(|_| prng.next_f64()).collect();
        (net, x)
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        for kind in CellKind::ALL {
            let (net, x) = setup(kind, 2, 3, 1);
            let (_, tape) = net.forward(&x).unwrap();
            let g = backward(&net, &tape, 0.0).unwrap();
            assert!(g.values().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn backward_matches_finite_differences_of_output() {
        let h = 1e-5;
        for kind in CellKind::ALL {
            for (l, c) in [(1, 1), (1, 3), (2, 2)] {
                let (mut net, x) = setup(kind, l, c, 40 + c as u32);
                let (_, tape) = net.forward(&x).unwrap();
                let g = backward(&net, &tape, 1.0).unwrap().to_flat();
                let mut flat = net.to_flat();
                for i in 0..flat.len() {
                    let orig = flat[i];
                    flat[i] = orig + h;
                    net.set_flat(&flat).unwrap();
                    let plus = net.predict(&x).unwrap();
                    flat[i] = orig - h;
                    net.set_flat(&flat).unwrap();
                    let minus = net.predict(&x).unwrap();
                    flat[i] = orig;
                    net.set_flat(&flat).unwrap();
                    let fd = (plus - minus) / (2.0 * h);
                    assert!(relative_error(g[i], fd) < 1e-4, "{kind} l={l} c={c} param {i}: {} vs {fd}", g[i]);
                }
            }
        }
    }

    #[test]
    fn no_recurrence_no_gradient_through_time() {
        let (mut net, x) = setup(CellKind::Rnn, 1, 1, 3);
        net.layers_mut()[0].gates[0].u = Mat::zeros(1, 1);
        let (_, tape) = net.forward(&x).unwrap();
        let g = backward(&net, &tape, 1.0).unwrap();
        // dW only sees the final input when nothing is carried over
        let h_last = tape.hidden(x.len() - 1, 0)[0];
        let expected = (1.0 - h_last * h_last) * x[x.len() - 1];
        assert!((g.layers()[0].gates[0].w.get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn truncation_limits_reach() {
        let (net, x) = setup(CellKind::Rnn, 1, 2, 4);
        let (_, tape) = net.forward(&x).unwrap();
        let full = backward(&net, &tape, 1.0).unwrap();
        let mut short = Gradients::zeros_like(&net);
        backward_into(&net, &tape, 1.0, Some(1), &mut short, &mut BackpropScratch::default()).unwrap();
        assert_ne!(full, short);
        let mut whole = Gradients::zeros_like(&net);
        backward_into(&net, &tape, 1.0, Some(x.len()), &mut whole, &mut BackpropScratch::default()).unwrap();
        assert_eq!(full, whole);
    }

    #[test]
    fn backward_rejects_foreign_tape() {
        let (net, x) = setup(CellKind::Rnn, 1, 2, 4);
        let (other, _) = setup(CellKind::Gru, 1, 2, 4);
        let (_, tape) = other.forward(&x).unwrap();
        assert!(backward(&net, &tape, 1.0).is_err());
    }

    #[test]
    fn loss_grad_signs() {
        assert_eq!(loss_grad(0.2, 0.7), -1.0);
        assert_eq!(loss_grad(0.5, 0.5), 0.0);
        assert_eq!(loss_grad(0.9, 0.1), 1.0);
    }

    #[test]
    fn sgd_examples() {
        let (mut net, _) = setup(CellKind::Rnn, 1, 1, 5);
        let before = net.clone();
        let zero = Gradients::zeros_like(&net);
        sgd_step(&mut net, &zero, 0.1).unwrap();
        assert_eq!(net, before);

        let mut g = Gradients::zeros_like(&net);
        g.layers[0].gates[0].b[0] = 2.0;
        sgd_step(&mut net, &g, 0.0).unwrap();
        assert_eq!(net, before);

        net.layers_mut()[0].gates[0].b[0] = 1.0;
        sgd_step(&mut net, &g, 0.1).unwrap();
        assert!((net.layers()[0].gates[0].b[0] - 0.8).abs() < 1e-15);

        g.layers[0].gates[0].b[0] = f64::NAN;
        let snapshot = net.clone();
        assert!(matches!(sgd_step(&mut net, &g, 0.1), Err(Error::Diverged(_))));
        assert_eq!(net, snapshot);
    }

    #[test]
    fn gradcheck_examples() {
        for (kind, l, c) in [(CellKind::Rnn, 1, 2), (CellKind::Lstm, 2, 2), (CellKind::Gru, 1, 3)] {
            let report = gradcheck(kind, l, c, 12, 7).unwrap();
            assert!(report.max_rel_error < 1e-4, "{kind}: {}", report.max_rel_error);
            assert_eq!(report.blocks.len(), l * kind.gate_count() * 3);
        }
    }

    #[test]
    fn train_config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { max_epochs: 0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { learning_rate: -1.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let parsed: TrainConfig = serde_json::from_str(r#"{"learning_rate": 0.01}"#).unwrap();
        assert_eq!(parsed.max_epochs, 5000);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"lr": 0.01}"#).is_err());
    }

    #[test]
    fn short_training_is_deterministic_and_learns_last_value() {
        let task = TaskSpec::new(TaskKind::Random, 1).unwrap();
        let config = TrainConfig {
            max_epochs: 60,
            eval_every: 20,
            eval_episodes: 200,
            seed: 3,
            early_stop_mae: 0.0,
            ..TrainConfig::default()
        };
        let a = train_run(CellKind::Rnn, 1, 2, &task, &config).unwrap();
        let b = train_run(CellKind::Rnn, 1, 2, &task, &config).unwrap();
        assert_eq!(a.loss_curve, b.loss_curve);
        assert_eq!(a.loss_curve.iter().map(|p| p.0).collect::<Vec<_>>(), vec![20, 40, 60]);
        assert!(!a.diverged);
        assert!(a.final_eval_mae < 0.25, "{}", a.final_eval_mae);
        assert!(a.best_eval_mae <= a.final_eval_mae);
    }

    #[test]
    fn huge_learning_rate_is_recorded_not_raised() {
        let task = TaskSpec::new(TaskKind::Random, 1).unwrap();
        let config = TrainConfig {
            learning_rate: 1e300,
            max_epochs: 5,
            eval_every: 1,
            eval_episodes: 10,
            ..TrainConfig::default()
        };
        let r = train_run(CellKind::Lstm, 1, 2, &task, &config).unwrap();
        assert!(r.final_eval_mae.is_finite());
        if r.diverged {
            assert_eq!(r.final_eval_mae, DIVERGED_SENTINEL_MAE);
        }
    }

    #[test]
    fn run_record_round_trip() {
        let rec = RunRecord {
            model: CellKind::Gru,
            task: TaskKind::Correlated,
            layers: 2,
            cells: 3,
            position: 4,
            seed: 5,
            lr: 0.05,
            epochs_run: 100,
            final_eval_mae: 0.123456789,
            best_eval_mae: 0.1,
            diverged: false,
            wall_ms: 17,
        };
        let row = rec.to_csv_row();
        assert_eq!(RunRecord::parse_csv_row(&row).unwrap(), rec);
        assert_eq!(RUN_LOG_HEADER.split(',').count(), 12);
        assert!(RunRecord::parse_csv_row("rnn,random,1").is_err());
    }
}
