//! Echo state networks: sparse random reservoirs, ridge readouts and
//! Jaeger's short-term memory capacity.

use crate::error::{dim_check, Error, Result};
use crate::linalg::{spectral_radius, Cholesky, Mat, SparseMat, DEFAULT_SPECTRAL_ITERS};
use crate::rng::Prng;
use crate::sweep::SweepGrid;
use crate::cells::CellKind;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

pub const MC_CSV_HEADER: &str = "N,connectivity,rho,seed,k,mc_k";
pub const DEFAULT_LEARNED_THRESHOLD: f64 = 0.05;

/// Reservoir draws that come out nilpotent are redrawn from the same
/// generator up to this many times before the config is rejected.
pub const MAX_RESERVOIR_ATTEMPTS: usize = 1000;

const STREAM_SEED_MASK: u32 = 0x00e5_0a11;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsnConfig {
    pub neurons: usize,
    pub connectivity: f64,
    pub spectral_radius: f64,
    pub input_scaling: f64,
    pub ridge_lambda: f64,
    pub washout: usize,
    pub stream_len: usize,
    /// Largest delay probed; `None` means `2 * neurons`.
    pub max_delay: Option<usize>,
    pub seed: u32,
}

impl Default for EsnConfig {
    fn default() -> Self {
        EsnConfig {
            neurons: 50,
            connectivity: 0.01,
            spectral_radius: 0.9,
            input_scaling: 1.0,
            ridge_lambda: 1e-6,
            washout: 100,
            stream_len: 2000,
            max_delay: None,
            seed: 1,
        }
    }
}

impl EsnConfig {
    pub fn with_neurons(neurons: usize, seed: u32) -> Self {
        EsnConfig {
            neurons,
            seed,
            ..EsnConfig::default()
        }
    }

    pub fn delays(&self) -> usize {
        self.max_delay.unwrap_or(2 * self.neurons)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.neurons == 0 {
            return bad("neurons must be >= 1".into());
        }
        if !(self.connectivity > 0.0 && self.connectivity <= 1.0) {
            return bad(format!("connectivity {} not in (0, 1]", self.connectivity));
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius < 1.0) {
            return bad(format!("spectral radius {} not in (0, 1)", self.spectral_radius));
        }
        if !(self.input_scaling.is_finite() && self.input_scaling > 0.0) {
            return bad(format!("input scaling {} must be > 0", self.input_scaling));
        }
        if !(self.ridge_lambda.is_finite() && self.ridge_lambda >= 0.0) {
            return bad(format!("ridge lambda {} must be >= 0", self.ridge_lambda));
        }
        if self.washout >= self.stream_len {
            return bad(format!(
                "washout {} must be below stream length {}",
                self.washout, self.stream_len
            ));
        }
        let k = self.delays();
        if k == 0 {
            return bad("max delay must be >= 1".into());
        }
        if k >= self.stream_len {
            return bad(format!("max delay {k} must be below stream length {}", self.stream_len));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    /// Identity update; only meaningful for hand-built oracle reservoirs.
    Linear,
}

#[derive(Clone, Debug)]
pub struct Reservoir {
    pub w_in: Mat,
    pub w_res: SparseMat,
    pub activation: Activation,
    /// Ridge readouts (bias last) by delay, filled by [`memory_capacity`].
    pub readouts: Vec<Vec<f64>>,
}

impl Reservoir {
    pub fn from_parts(w_in: Mat, w_res: SparseMat, activation: Activation) -> Result<Self> {
        let n = w_res.rows();
        dim_check(w_res.cols() == n, || format!("reservoir matrix is {}x{}", n, w_res.cols()))?;
        dim_check(w_in.rows() == n && w_in.cols() == 1, || {
            format!("input weights are {}x{}, need {n}x1", w_in.rows(), w_in.cols())
        })?;
        Ok(Reservoir {
            w_in,
            w_res,
            activation,
            readouts: Vec::new(),
        })
    }

    pub fn neurons(&self) -> usize {
        self.w_res.rows()
    }

    fn step(&self, x: f64, prev: &[f64], next: &mut [f64]) {
        for (i, v) in next.iter_mut().enumerate() {
            *v = self.w_in.get(i, 0) * x;
        }
        self.w_res.matvec_add(prev, next);
        if self.activation == Activation::Tanh {
            for v in next.iter_mut() {
                *v = v.tanh();
            }
        }
    }
}

/// Samples `W_res` entry-wise (row-major, probability `connectivity`,
/// values Uniform[-1, 1]), rescales it to the configured spectral radius,
/// then samples `W_in` from Uniform[-input_scaling, input_scaling].
pub fn build_reservoir(config: &EsnConfig) -> Result<Reservoir> {
    config.validate()?;
    let n = config.neurons;
    let mut prng = Prng::new(config.seed);
    for _ in 0..MAX_RESERVOIR_ATTEMPTS {
        let mut entries = Vec::new();
        for r in 0..n {
            for c in 0..n {
                if prng.next_f64() < config.connectivity {
                    entries.push((r, c, prng.uniform_unchecked(-1.0, 1.0)));
                }
            }
        }
        let mut w_res = SparseMat::new(n, n, entries)?;
        let rho = spectral_radius(&w_res, DEFAULT_SPECTRAL_ITERS)?;
        if rho <= 1e-12 {
            continue;
        }
        w_res.scale(config.spectral_radius / rho);
        let s = config.input_scaling;
        let w_in: Vec<f64> = (0..n).map(|_| prng.uniform_unchecked(-s, s)).collect();
        return Reservoir::from_parts(Mat::new(n, 1, w_in)?, w_res, Activation::Tanh);
    }
    Err(Error::InvalidArgument(format!(
        "no reservoir with nonzero spectral radius in {MAX_RESERVOIR_ATTEMPTS} draws \
         (N={n}, connectivity={}); raise connectivity",
        config.connectivity
    )))
}

/// Reservoir trajectory, one row per input step.
#[derive(Clone, Debug)]
pub struct States {
    pub matrix: Mat,
    /// Leading rows to exclude from readout training.
    pub washout: usize,
}

impl States {
    pub fn post_washout(&self) -> impl Iterator<Item = &[f64]> {
        (self.washout..self.matrix.rows()).map(|t| self.matrix.row(t))
    }
}

/// `h_t = f(W_in x_t + W_res h_{t-1})` from `h_0 = 0`.
pub fn run_states(reservoir: &Reservoir, input: &[f64], washout: usize) -> Result<States> {
    run_states_from(reservoir, input, &vec![0.0; reservoir.neurons()], washout)
}

pub fn run_states_from(reservoir: &Reservoir, input: &[f64], h0: &[f64], washout: usize) -> Result<States> {
    let n = reservoir.neurons();
    dim_check(h0.len() == n, || format!("initial state of length {} for {n} neurons", h0.len()))?;
    let mut matrix = Mat::zeros(input.len(), n);
    let mut prev = h0.to_vec();
    for (t, &x) in input.iter().enumerate() {
        let row = matrix.row_mut(t);
        reservoir.step(x, &prev, row);
        prev.copy_from_slice(row);
    }
    Ok(States {
        matrix,
        washout: washout.min(input.len()),
    })
}

fn with_bias(row: &[f64]) -> impl Iterator<Item = f64> + '_ {
    row.iter().copied().chain(std::iter::once(1.0))
}

fn gram(rows: &[&[f64]], lambda: f64) -> Mat {
    let d = rows.first().map_or(1, |r| r.len() + 1);
    let mut g = Mat::zeros(d, d);
    let mut a = vec![0.0; d];
    for row in rows {
        for (dst, v) in a.iter_mut().zip(with_bias(row)) {
            *dst = v;
        }
        g.add_outer(&a, &a);
    }
    for i in 0..d {
        g.set(i, i, g.get(i, i) + lambda);
    }
    g
}

fn rhs(rows: &[&[f64]], targets: &[f64]) -> Vec<f64> {
    let d = rows.first().map_or(1, |r| r.len() + 1);
    let mut b = vec![0.0; d];
    for (row, &y) in rows.iter().zip(targets) {
        for (dst, v) in b.iter_mut().zip(with_bias(row)) {
            *dst += v * y;
        }
    }
    b
}

/// Solves `(AᵀA + λI) w = Aᵀy` where `A` is `states` with a ones column
/// appended; the returned weights end with the bias.
pub fn ridge_readout(states: &Mat, targets: &[f64], lambda: f64) -> Result<Vec<f64>> {
    dim_check(states.rows() == targets.len(), || {
        format!("{} state rows for {} targets", states.rows(), targets.len())
    })?;
    if states.rows() == 0 {
        return Err(Error::InvalidArgument("ridge readout needs at least one row".into()));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge lambda {lambda} must be >= 0")));
    }
    let rows: Vec<&[f64]> = (0..states.rows()).map(|t| states.row(t)).collect();
    Cholesky::new(&gram(&rows, lambda))?.solve(&rhs(&rows, targets))
}

pub fn readout(weights: &[f64], state: &[f64]) -> f64 {
    with_bias(state).zip(weights).map(|(a, w)| a * w).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    /// `mc_k[i]` is the capacity at delay `i + 1`.
    pub mc_k: Vec<f64>,
    pub total: f64,
}

/// Squared correlation; 0 when either side has no variance.
pub fn squared_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let ma = a[..n].iter().sum::<f64>() / nf;
    let mb = b[..n].iter().sum::<f64>() / nf;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a[..n].iter().zip(&b[..n]) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    let tiny = 1e-24 * nf;
    if va <= tiny || vb <= tiny {
        return 0.0;
    }
    cov * cov / (va * vb)
}

/// Builds the reservoir from `config` and measures its memory capacity.
pub fn memory_capacity(config: &EsnConfig) -> Result<McResult> {
    let mut reservoir = build_reservoir(config)?;
    memory_capacity_of(&mut reservoir, config)
}

/// Drives `reservoir` with an i.i.d. Uniform[-0.5, 0.5] stream of length
/// `washout + 2T`. For each delay k the readout is fit on rows
/// `[max(washout, K), washout + T)` and scored on the next `T` rows.
/// Only the stream, washout, ridge and delay settings of `config` are used.
pub fn memory_capacity_of(reservoir: &mut Reservoir, config: &EsnConfig) -> Result<McResult> {
    config.validate()?;
    let k_max = config.delays();
    let t_len = config.stream_len;
    let fit_end = config.washout + t_len;
    let fit_start = config.washout.max(k_max);
    let total_len = fit_end + t_len;

    let mut prng = Prng::new(config.seed ^ STREAM_SEED_MASK);
    let input: Vec<f64> = (0..total_len).map(|_| prng.uniform_unchecked(-0.5, 0.5)).collect();
    let states = run_states(reservoir, &input, config.washout)?;
    let m = &states.matrix;

    let fit_rows: Vec<&[f64]> = (fit_start..fit_end).map(|t| m.row(t)).collect();
    let chol = Cholesky::new(&gram(&fit_rows, config.ridge_lambda))?;

    let mut mc_k = Vec::with_capacity(k_max);
    let mut readouts = Vec::with_capacity(k_max);
    let mut y = vec![0.0; t_len];
    for k in 1..=k_max {
        let fit_targets = &input[fit_start - k..fit_end - k];
        let w = chol.solve(&rhs(&fit_rows, fit_targets))?;
        for (dst, t) in y.iter_mut().zip(fit_end..total_len) {
            *dst = readout(&w, m.row(t));
        }
        mc_k.push(squared_correlation(&input[fit_end - k..total_len - k], &y));
        readouts.push(w);
    }
    reservoir.readouts = readouts;
    let total = mc_k.iter().sum();
    Ok(McResult { mc_k, total })
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// One row per delay followed by a `total` row.
pub fn write_mc_csv<W: Write>(mut out: W, config: &EsnConfig, result: &McResult) -> std::io::Result<()> {
    writeln!(out, "{MC_CSV_HEADER}")?;
    write_mc_rows(&mut out, config, result)
}

/// Like [`write_mc_csv`] without the header, for concatenating seeds.
pub fn write_mc_rows<W: Write>(mut out: W, config: &EsnConfig, result: &McResult) -> std::io::Result<()> {
    let prefix = format!(
        "{},{},{},{}",
        config.neurons,
        fmt_f64(config.connectivity),
        fmt_f64(config.spectral_radius),
        config.seed
    );
    for (i, v) in result.mc_k.iter().enumerate() {
        writeln!(out, "{prefix},{},{}", i + 1, fmt_f64(*v))?;
    }
    writeln!(out, "{prefix},total,{}", fmt_f64(result.total))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConfigKey {
    pub model: CellKind,
    pub layers: usize,
    pub cells: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnedPositions {
    /// Positions whose mean MAE is below the threshold.
    pub count: usize,
    /// `c·l − (l − 1)`.
    pub bound: usize,
}

/// Per (model, l, c): how many swept positions were learned.
pub fn learned_positions(grid: &SweepGrid, threshold: f64) -> Result<BTreeMap<ConfigKey, LearnedPositions>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("learned positions of an empty grid".into()));
    }
    let mut out = BTreeMap::new();
    for (key, cell) in grid.iter() {
        let ck = ConfigKey {
            model: key.model,
            layers: key.layers,
            cells: key.cells,
        };
        let entry = out.entry(ck).or_insert(LearnedPositions {
            count: 0,
            bound: key.cells * key.layers - (key.layers - 1),
        });
        if cell.mean_mae < threshold {
            entry.count += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::{GridCell, GridKey};

    fn small(n: usize, seed: u32) -> EsnConfig {
        EsnConfig {
            neurons: n,
            connectivity: 0.2,
            stream_len: 1000,
            ..EsnConfig::with_neurons(n, seed)
        }
    }

    fn delay_line(n: usize) -> Reservoir {
        let shift: Vec<_> = (1..n).map(|i| (i, i - 1, 1.0)).collect();
        let mut w_in = vec![0.0; n];
        w_in[0] = 1.0;
        Reservoir::from_parts(
            Mat::new(n, 1, w_in).unwrap(),
            SparseMat::new(n, n, shift).unwrap(),
            Activation::Linear,
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(EsnConfig::default().validate().is_ok());
        let bad = [
            EsnConfig { neurons: 0, ..Default::default() },
            EsnConfig { connectivity: 0.0, ..Default::default() },
            EsnConfig { connectivity: 1.5, ..Default::default() },
            EsnConfig { spectral_radius: 1.0, ..Default::default() },
            EsnConfig { washout: 2000, ..Default::default() },
            EsnConfig { ridge_lambda: -1.0, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::InvalidArgument(_))), "{c:?}");
        }
        assert_eq!(EsnConfig::default().delays(), 100);
    }

    #[test]
    fn config_json_defaults() {
        let c: EsnConfig = serde_json::from_str(r#"{"neurons": 20, "seed": 4}"#).unwrap();
        assert_eq!(c.connectivity, 0.01);
        assert_eq!(c.delays(), 40);
        assert!(serde_json::from_str::<EsnConfig>(r#"{"neuron": 20}"#).is_err());
    }

    #[test]
    fn nnz_is_binomial() {
        for seed in 0..5 {
            let r = build_reservoir(&EsnConfig::with_neurons(100, seed)).unwrap();
            let nnz = r.w_res.nnz();
            assert!((70..=130).contains(&nnz), "seed {seed}: nnz {nnz}");
        }
    }

    #[test]
    fn density_near_configured() {
        for seed in 0..3 {
            let c = EsnConfig {
                connectivity: 0.1,
                ..EsnConfig::with_neurons(100, seed)
            };
            let d = build_reservoir(&c).unwrap().w_res.density();
            assert!((d - 0.1).abs() <= 0.02, "density {d}");
        }
    }

    #[test]
    fn spectral_radius_is_rescaled() {
        for seed in 0..10 {
            let r = build_reservoir(&EsnConfig::with_neurons(50, seed)).unwrap();
            let rho = spectral_radius(&r.w_res, DEFAULT_SPECTRAL_ITERS).unwrap();
            assert!((rho - 0.9).abs() <= 0.01, "seed {seed}: rho {rho}");
        }
    }

    #[test]
    fn input_weights_in_range() {
        let c = EsnConfig {
            input_scaling: 0.3,
            ..EsnConfig::with_neurons(40, 2)
        };
        let r = build_reservoir(&c).unwrap();
        assert!(r.w_in.data().iter().all(|v| v.abs() <= 0.3));
    }

    #[test]
    fn build_is_deterministic() {
        let c = EsnConfig::with_neurons(60, 9);
        let a = build_reservoir(&c).unwrap();
        let b = build_reservoir(&c).unwrap();
        assert_eq!(a.w_res, b.w_res);
        assert_eq!(a.w_in, b.w_in);
    }

    #[test]
    fn zero_input_zero_states() {
        let r = build_reservoir(&small(20, 1)).unwrap();
        let s = run_states(&r, &[0.0; 50], 0).unwrap();
        assert!(s.matrix.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn echo_state_property() {
        for seed in 0..10 {
            let c = small(30, seed);
            let r = build_reservoir(&c).unwrap();
            let mut prng = Prng::new(seed + 100);
            let input: Vec<f64> = (0..400).map(|_| prng.uniform_unchecked(-0.5, 0.5)).collect();
            let h0: Vec<f64> = (0..30).map(|_| prng.uniform_unchecked(-1.0, 1.0)).collect();
            let a = run_states(&r, &input, 0).unwrap();
            let b = run_states_from(&r, &input, &h0, 0).unwrap();
            let diff = (0..30)
                .map(|i| (a.matrix.get(399, i) - b.matrix.get(399, i)).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-6, "seed {seed}: diff {diff}");
        }
    }

    #[test]
    fn constant_input_fixed_point() {
        let r = build_reservoir(&small(25, 3)).unwrap();
        let s = run_states(&r, &[0.3; 2000], 0).unwrap();
        let diff = (0..25)
            .map(|i| (s.matrix.get(1999, i) - s.matrix.get(1998, i)).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-9, "diff {diff}");
    }

    #[test]
    fn washout_rows_are_skipped() {
        let r = build_reservoir(&small(10, 1)).unwrap();
        let s = run_states(&r, &[0.1; 30], 12).unwrap();
        assert_eq!(s.post_washout().count(), 18);
        assert_eq!(s.post_washout().next().unwrap(), s.matrix.row(12));
    }

    #[test]
    fn ridge_recovers_linear_map() {
        let mut prng = Prng::new(5);
        let s = Mat::new(200, 6, (0..1200).map(|_| prng.uniform_unchecked(-1.0, 1.0)).collect()).unwrap();
        let w = [0.5, -1.0, 2.0, 0.0, 0.25, -0.75, 0.1];
        let y: Vec<f64> = (0..200).map(|t| readout(&w, s.row(t))).collect();
        let got = ridge_readout(&s, &y, 1e-12).unwrap();
        for (a, b) in got.iter().zip(&w) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        let resid: f64 = (0..200).map(|t| (readout(&got, s.row(t)) - y[t]).powi(2)).sum();
        assert!(resid.sqrt() < 1e-8);
    }

    #[test]
    fn ridge_zero_targets() {
        let mut prng = Prng::new(6);
        let s = Mat::new(50, 4, (0..200).map(|_| prng.next_f64()).collect()).unwrap();
        let w = ridge_readout(&s, &[0.0; 50], 1e-6).unwrap();
        assert!(w.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn ridge_singular_without_penalty() {
        let s = Mat::new(10, 2, vec![1.0; 20]).unwrap();
        match ridge_readout(&s, &[1.0; 10], 0.0) {
            Err(Error::Singular(m)) => assert!(m.contains("ridge")),
            other => panic!("{other:?}"),
        }
        assert!(ridge_readout(&s, &[1.0; 10], 1e-3).is_ok());
    }

    #[test]
    fn ridge_matches_dense_oracle() {
        use nalgebra::{DMatrix, DVector};
        for seed in 0..5 {
            let mut prng = Prng::new(seed);
            let (t, n, lambda) = (40, 5, 0.1);
            let s = Mat::new(t, n, (0..t * n).map(|_| prng.uniform_unchecked(-1.0, 1.0)).collect()).unwrap();
            let y: Vec<f64> = (0..t).map(|_| prng.next_f64()).collect();
            let a = DMatrix::from_fn(t, n + 1, |r, c| if c == n { 1.0 } else { s.get(r, c) });
            let lhs = a.transpose() * &a + DMatrix::identity(n + 1, n + 1) * lambda;
            let b = a.transpose() * DVector::from_vec(y.clone());
            let want = lhs.lu().solve(&b).unwrap();
            let got = ridge_readout(&s, &y, lambda).unwrap();
            for i in 0..=n {
                assert!((got[i] - want[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ridge_is_locally_optimal() {
        let mut prng = Prng::new(8);
        let (t, n, lambda) = (60, 4, 0.05);
        let s = Mat::new(t, n, (0..t * n).map(|_| prng.uniform_unchecked(-1.0, 1.0)).collect()).unwrap();
        let y: Vec<f64> = (0..t).map(|_| prng.next_f64()).collect();
        let objective = |w: &[f64]| {
            let r: f64 = (0..t).map(|i| (readout(w, s.row(i)) - y[i]).powi(2)).sum();
            r + lambda * w.iter().map(|v| v * v).sum::<f64>()
        };
        let w = ridge_readout(&s, &y, lambda).unwrap();
        let best = objective(&w);
        for _ in 0..100 {
            let p: Vec<f64> = w.iter().map(|v| v + prng.uniform_unchecked(-1e-3, 1e-3)).collect();
            assert!(objective(&p) >= best);
        }
    }

    #[test]
    fn squared_correlation_examples() {
        assert!((squared_correlation(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-12);
        assert!((squared_correlation(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) - 1.0).abs() < 1e-12);
        assert_eq!(squared_correlation(&[1.0, 2.0, 3.0], &[5.0; 3]), 0.0);
        assert_eq!(squared_correlation(&[], &[]), 0.0);
    }

    #[test]
    fn delay_line_remembers_exactly_its_length() {
        let n = 10;
        let config = EsnConfig {
            max_delay: Some(2 * n),
            stream_len: 500,
            ..EsnConfig::with_neurons(n, 3)
        };
        let mut r = delay_line(n);
        let mc = memory_capacity_of(&mut r, &config).unwrap();
        // the state at t holds x(t), ..., x(t-n+1)
        for k in 1..n {
            assert!(mc.mc_k[k - 1] > 0.99, "k={k}: {}", mc.mc_k[k - 1]);
        }
        for k in n..=2 * n {
            assert!(mc.mc_k[k - 1] < 0.05, "k={k}: {}", mc.mc_k[k - 1]);
        }
        assert_eq!(r.readouts.len(), 2 * n);
    }

    #[test]
    fn bias_only_readout_has_no_memory() {
        let n = 8;
        let mut r = Reservoir::from_parts(
            Mat::zeros(n, 1),
            SparseMat::new(n, n, vec![]).unwrap(),
            Activation::Tanh,
        )
        .unwrap();
        let config = EsnConfig {
            stream_len: 300,
            ..EsnConfig::with_neurons(n, 1)
        };
        let mc = memory_capacity_of(&mut r, &config).unwrap();
        assert!(mc.mc_k.iter().all(|&v| v < 1e-9));
        assert_eq!(mc.total, mc.mc_k.iter().sum::<f64>());
    }

    #[test]
    fn capacity_bounded_and_decays() {
        for seed in 0..3 {
            let config = EsnConfig {
                connectivity: 0.1,
                stream_len: 1000,
                ..EsnConfig::with_neurons(20, seed)
            };
            let mc = memory_capacity(&config).unwrap();
            assert_eq!(mc.mc_k.len(), 40);
            assert!(mc.mc_k.iter().all(|&v| (0.0..=1.05).contains(&v)));
            assert!(mc.total <= 21.0, "total {}", mc.total);
            assert!(mc.total > 1.0, "total {}", mc.total);
            let early = mc.mc_k[..10].iter().sum::<f64>() / 10.0;
            let late = mc.mc_k[10..].iter().sum::<f64>() / 30.0;
            assert!(early >= late);
        }
    }

    #[test]
    fn mc_csv_layout() {
        let config = EsnConfig::with_neurons(3, 7);
        let result = McResult {
            mc_k: vec![0.5, 0.25],
            total: 0.75,
        };
        let mut buf = Vec::new();
        write_mc_csv(&mut buf, &config, &result).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "N,connectivity,rho,seed,k,mc_k\n3,0.01,0.9,7,1,0.5\n3,0.01,0.9,7,2,0.25\n3,0.01,0.9,7,total,0.75\n"
        );
    }

    fn grid_with(maes: &[(usize, usize, usize, f64)]) -> SweepGrid {
        let mut g = SweepGrid::default();
        for &(l, c, p, mean_mae) in maes {
            g.insert(
                GridKey { model: CellKind::Rnn, layers: l, cells: c, position: p },
                GridCell { mean_mae, std_mae: 0.0, n_runs: 1, n_diverged: 0 },
            );
        }
        g
    }

    #[test]
    fn learned_positions_counts() {
        let g = grid_with(&[(1, 1, 1, 0.01), (1, 1, 2, 0.2), (2, 3, 1, 0.0), (2, 3, 2, 0.049), (2, 3, 3, 0.05)]);
        let lp = learned_positions(&g, DEFAULT_LEARNED_THRESHOLD).unwrap();
        let k = |l, c| ConfigKey { model: CellKind::Rnn, layers: l, cells: c };
        assert_eq!(lp[&k(1, 1)], LearnedPositions { count: 1, bound: 1 });
        assert_eq!(lp[&k(2, 3)], LearnedPositions { count: 2, bound: 5 });
    }

    #[test]
    fn learned_positions_flat_grid() {
        let g = grid_with(&[(1, 2, 1, 0.25), (1, 2, 2, 0.25)]);
        let lp = learned_positions(&g, DEFAULT_LEARNED_THRESHOLD).unwrap();
        assert!(lp.values().all(|v| v.count == 0));
        assert!(learned_positions(&SweepGrid::default(), 0.05).is_err());
    }
}
