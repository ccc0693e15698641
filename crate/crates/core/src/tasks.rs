//! Memorization task generators.
//!
//! Every task draws a length `q`, then a sequence `x_1..x_q`, and asks for
//! the `p`th-from-last element `x_{q+1-p}`. The draw order (q first, then
//! the values) is fixed so a seed always maps to the same episodes.

use crate::error::{Error, Result};
use crate::rng::Prng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// i.i.d. uniform values, random length
    Random,
    /// i.i.d. uniform values, length fixed at 10
    Fixed,
    /// `x_i = α_i x_{i-1} + (1 − α_i) y_i` with `α_i = i/q`
    Correlated,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Random => "random",
            TaskKind::Fixed => "fixed",
            TaskKind::Correlated => "correlated",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(TaskKind::Random),
            "fixed" => Ok(TaskKind::Fixed),
            "correlated" => Ok(TaskKind::Correlated),
            other => Err(Error::InvalidArgument(format!(
                "unknown task '{other}' (expected random, fixed or correlated)"
            ))),
        }
    }
}

pub const DEFAULT_Q_MIN: usize = 10;
pub const DEFAULT_Q_MAX: usize = 15;
pub const FIXED_Q: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub q_min: usize,
    pub q_max: usize,
    pub p: usize,
}

impl TaskSpec {
    /// Default lengths for `kind`: 10..=15, or exactly 10 for the fixed task.
    pub fn new(kind: TaskKind, p: usize) -> Result<Self> {
        let (q_min, q_max) = match kind {
            TaskKind::Fixed => (FIXED_Q, FIXED_Q),
            _ => (DEFAULT_Q_MIN, DEFAULT_Q_MAX),
        };
        TaskSpec::with_lengths(kind, q_min, q_max, p)
    }

    pub fn with_lengths(kind: TaskKind, q_min: usize, q_max: usize, p: usize) -> Result<Self> {
        let spec = TaskSpec { kind, q_min, q_max, p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == TaskKind::Fixed && (self.q_min != FIXED_Q || self.q_max != FIXED_Q) {
            return Err(Error::InvalidArgument(format!(
                "fixed task requires q = {FIXED_Q}, got {}..={}",
                self.q_min, self.q_max
            )));
        }
        if self.q_min < DEFAULT_Q_MIN || self.q_min > self.q_max {
            return Err(Error::InvalidArgument(format!(
                "need 10 <= q_min <= q_max, got {}..={}",
                self.q_min, self.q_max
            )));
        }
        if self.p < 1 || self.p > self.q_min {
            return Err(Error::InvalidArgument(format!(
                "position p={} must lie in 1..={}",
                self.p, self.q_min
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Episode {
    pub x: Vec<f64>,
    pub q: usize,
    pub p: usize,
    pub target: f64,
}

fn draw_length(spec: &TaskSpec, prng: &mut Prng) -> usize {
    // validated specs keep both bounds far below u32::MAX
    prng.uniform_int(spec.q_min as u32, spec.q_max as u32)
        .expect("validated length range") as usize
}

fn finish(episode: &mut Episode, p: usize) {
    episode.q = episode.x.len();
    episode.p = p;
    episode.target = episode.x[episode.q - p];
}

fn fill_iid(spec: &TaskSpec, prng: &mut Prng, episode: &mut Episode) {
    let q = draw_length(spec, prng);
    episode.x.clear();
    episode.x.extend((0..q).map(|_| prng.next_f64()));
    finish(episode, spec.p);
}

fn fill_correlated(spec: &TaskSpec, prng: &mut Prng, episode: &mut Episode) {
    let q = draw_length(spec, prng);
    episode.x.clear();
    let mut prev = 0.0;
    for i in 1..=q {
        let y = prng.next_f64();
        let value = if i == 1 {
            y
        } else {
            let alpha = i as f64 / q as f64;
            alpha * prev + (1.0 - alpha) * y
        };
        episode.x.push(value);
        prev = value;
    }
    finish(episode, spec.p);
}

fn expect_kind(spec: &TaskSpec, kind: TaskKind) -> Result<()> {
    spec.validate()?;
    if spec.kind != kind {
        return Err(Error::InvalidArgument(format!(
            "{kind} generator called with a {} task",
            spec.kind
        )));
    }
    Ok(())
}

pub fn gen_random(spec: &TaskSpec, prng: &mut Prng) -> Result<Episode> {
    expect_kind(spec, TaskKind::Random)?;
    let mut e = Episode::default();
    fill_iid(spec, prng, &mut e);
    Ok(e)
}

pub fn gen_fixed(spec: &TaskSpec, prng: &mut Prng) -> Result<Episode> {
    expect_kind(spec, TaskKind::Fixed)?;
    let mut e = Episode::default();
    fill_iid(spec, prng, &mut e);
    Ok(e)
}

pub fn gen_correlated(spec: &TaskSpec, prng: &mut Prng) -> Result<Episode> {
    expect_kind(spec, TaskKind::Correlated)?;
    let mut e = Episode::default();
    fill_correlated(spec, prng, &mut e);
    Ok(e)
}

/// Draw an episode of whatever kind `spec` names into `episode`'s buffers.
/// The spec must already be validated.
pub fn fill_episode(spec: &TaskSpec, prng: &mut Prng, episode: &mut Episode) {
    match spec.kind {
        TaskKind::Random | TaskKind::Fixed => fill_iid(spec, prng, episode),
        TaskKind::Correlated => fill_correlated(spec, prng, episode),
    }
}

pub fn generate(spec: &TaskSpec, prng: &mut Prng) -> Result<Episode> {
    spec.validate()?;
    let mut e = Episode::default();
    fill_episode(spec, prng, &mut e);
    Ok(e)
}

pub fn mae(pred: f64, target: f64) -> f64 {
    (target - pred).abs()
}

/// Mean absolute error of the constant 0.5 predictor on fresh episodes.
pub fn baseline_mae(spec: &TaskSpec, episodes: usize, prng: &mut Prng) -> Result<f64> {
    spec.validate()?;
    let mut e = Episode::default();
    baseline_mae_with(episodes, || {
        fill_episode(spec, prng, &mut e);
        e.target
    })
}

/// Constant-0.5 baseline over any target source.
pub fn baseline_mae_with(episodes: usize, mut next_target: impl FnMut() -> f64) -> Result<f64> {
    if episodes < 1 {
        return Err(Error::InvalidArgument("baseline needs at least one episode".into()));
    }
    let total: f64 = (0..episodes).map(|_| mae(0.5, next_target())).sum();
    Ok(total / episodes as f64)
}

/// Episode dump: `episode_id,q,p,target,x_1,...,x_q` with a ragged tail.
pub fn write_episodes_csv<W: Write>(out: &mut W, episodes: &[Episode]) -> std::io::Result<()> {
    let width = episodes.iter().map(|e| e.q).max().unwrap_or(0);
    write!(out, "episode_id,q,p,target")?;
    for i in 1..=width {
        write!(out, ",x_{i}")?;
    }
    writeln!(out)?;
    for (id, e) in episodes.iter().enumerate() {
        write!(out, "{id},{},{},{}", e.q, e.p, e.target)?;
        for v in &e.x {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
