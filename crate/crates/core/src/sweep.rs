//! Grid experiments over (model × layers × cells × position × seed).
//!
//! Each finished run is appended to `runs.csv` (and its eval curve to
//! `curves.csv`) as soon as it completes; the log is the single source of
//! truth. Aggregation always re-reads the log, and resuming skips every
//! (cell, seed) pair that already has a row.

use crate::cells::CellKind;
use crate::error::{Error, Result};
use crate::tasks::{TaskKind, TaskSpec, DEFAULT_Q_MAX, DEFAULT_Q_MIN, FIXED_Q};
use crate::training::{train_run, RunRecord, TrainConfig, TrainResult, RUN_LOG_HEADER};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

pub const RUNS_FILE: &str = "runs.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const GRID_FILE: &str = "grid.csv";
pub const CURVE_HEADER: &str = "model,task,layers,cells,position,seed,epoch,eval_mae";
pub const GRID_HEADER: &str = "model,layers,cells,position,mean_mae,std_mae,n_runs,n_diverged";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub models: Vec<CellKind>,
    pub task: TaskKind,
    /// inclusive `[lo, hi]`
    pub layers: [usize; 2],
    pub cells: [usize; 2],
    pub positions: [usize; 2],
    pub seeds: Vec<u32>,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub q_min: Option<usize>,
    #[serde(default)]
    pub q_max: Option<usize>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SweepSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SweepSpec::from_json(&text)
    }

    pub fn q_range(&self) -> (usize, usize) {
        let (lo, hi) = match self.task {
            TaskKind::Fixed => (FIXED_Q, FIXED_Q),
            _ => (DEFAULT_Q_MIN, DEFAULT_Q_MAX),
        };
        (self.q_min.unwrap_or(lo), self.q_max.unwrap_or(hi))
    }

    pub fn task_spec(&self, p: usize) -> Result<TaskSpec> {
        let (lo, hi) = self.q_range();
        TaskSpec::with_lengths(self.task, lo, hi, p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.models.is_empty() {
            return bad("sweep needs at least one model".into());
        }
        if self.seeds.is_empty() {
            return bad("sweep needs at least one seed".into());
        }
        for (name, [lo, hi]) in [("layers", self.layers), ("cells", self.cells), ("positions", self.positions)] {
            if lo < 1 || lo > hi {
                return bad(format!("{name} range [{lo}, {hi}] is empty or starts below 1"));
            }
        }
        let unique: HashSet<_> = self.seeds.iter().collect();
        if unique.len() != self.seeds.len() {
            return bad("duplicate seeds".into());
        }
        // every position must be reachable
        self.task_spec(self.positions[1])?;
        self.train.validate()
    }

    /// Every (cell, seed) pair in canonical order.
    pub fn work_items(&self) -> Vec<WorkItem> {
        let mut models = self.models.clone();
        models.sort();
        models.dedup();
        let mut items = Vec::new();
        for &model in &models {
            for layers in self.layers[0]..=self.layers[1] {
                for cells in self.cells[0]..=self.cells[1] {
                    for position in self.positions[0]..=self.positions[1] {
                        for &seed in &self.seeds {
                            items.push(WorkItem {
                                model,
                                layers,
                                cells,
                                position,
                                seed,
                                run_seed: run_seed(self.base_seed, model, layers, cells, position, seed),
                            });
                        }
                    }
                }
            }
        }
        items
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WorkItem {
    pub model: CellKind,
    pub layers: usize,
    pub cells: usize,
    pub position: usize,
    /// seed as listed in the spec
    pub seed: u32,
    /// MT19937 seed actually used for the run
    pub run_seed: u32,
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Per-run generator seed: FNV-1a over the little-endian tuple
/// `(base_seed: u64, model: u8, layers: u32, cells: u32, position: u32,
/// seed: u32)`, folded to 32 bits by xoring the halves. Adding grid cells
/// never changes the seed of an existing run.
pub fn run_seed(base_seed: u64, model: CellKind, layers: usize, cells: usize, position: usize, seed: u32) -> u32 {
    let mut bytes = Vec::with_capacity(25);
    bytes.extend_from_slice(&base_seed.to_le_bytes());
    bytes.push(match model {
        CellKind::Rnn => 0,
        CellKind::Lstm => 1,
        CellKind::Gru => 2,
    });
    for v in [layers as u32, cells as u32, position as u32, seed] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let h = fnv1a64(&bytes);
    (h ^ (h >> 32)) as u32
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridKey {
    pub model: CellKind,
    pub layers: usize,
    pub cells: usize,
    pub position: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub mean_mae: f64,
    pub std_mae: f64,
    pub n_runs: usize,
    pub n_diverged: usize,
}

/// Mean/std final loss per (model, l, c, p).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepGrid {
    cells: BTreeMap<GridKey, GridCell>,
}

impl SweepGrid {
    pub fn insert(&mut self, key: GridKey, cell: GridCell) {
        self.cells.insert(key, cell);
    }

    pub fn get(&self, key: &GridKey) -> Option<&GridCell> {
        self.cells.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GridKey, &GridCell)> {
        self.cells.iter()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn models(&self) -> BTreeSet<CellKind> {
        self.cells.keys().map(|k| k.model).collect()
    }

    /// Sub-grid of one model.
    pub fn for_model(&self, model: CellKind) -> SweepGrid {
        SweepGrid {
            cells: self
                .cells
                .iter()
                .filter(|(k, _)| k.model == model)
                .map(|(k, v)| (*k, *v))
                .collect(),
        }
    }

    /// CSV with [`GRID_HEADER`], rows ordered by (model, l, c, p).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(GRID_HEADER);
        out.push('\n');
        for (k, v) in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                k.model, k.layers, k.cells, k.position, v.mean_mae, v.std_mae, v.n_runs, v.n_diverged
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim_end() == GRID_HEADER => {}
            other => {
                return Err(Error::Parse(format!(
                    "grid CSV header {:?}, expected {GRID_HEADER:?}",
                    other.unwrap_or("")
                )))
            }
        }
        let mut grid = SweepGrid::default();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.trim_end().split(',').collect();
            if f.len() != 8 {
                return Err(Error::Parse(format!("grid row with {} fields: {line}", f.len())));
            }
            let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Parse(format!("bad number '{s}'"))) };
            let int = |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::Parse(format!("bad integer '{s}'"))) };
            grid.insert(
                GridKey { model: f[0].parse()?, layers: int(f[1])?, cells: int(f[2])?, position: int(f[3])? },
                GridCell { mean_mae: num(f[4])?, std_mae: num(f[5])?, n_runs: int(f[6])?, n_diverged: int(f[7])? },
            );
        }
        Ok(grid)
    }
}

/// Mean and population standard deviation of `final_eval_mae` per cell.
/// Values are summed in sorted order so the result does not depend on the
/// order of `records`.
pub fn aggregate(records: &[RunRecord]) -> SweepGrid {
    let mut groups: BTreeMap<GridKey, (Vec<f64>, usize)> = BTreeMap::new();
    for r in records {
        let key = GridKey { model: r.model, layers: r.layers, cells: r.cells, position: r.position };
        let entry = groups.entry(key).or_default();
        entry.0.push(r.final_eval_mae);
        entry.1 += r.diverged as usize;
    }
    let mut grid = SweepGrid::default();
    for (key, (mut values, diverged)) in groups {
        values.sort_by(f64::total_cmp);
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let mut sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        sq.sort_by(f64::total_cmp);
        let std = (sq.iter().sum::<f64>() / n).sqrt();
        grid.insert(key, GridCell { mean_mae: mean, std_mae: std, n_runs: values.len(), n_diverged: diverged });
    }
    grid
}

/// Read a run log, rejecting files whose header is not the current schema.
pub fn load_run_log(path: &Path) -> Result<Vec<RunRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if i == 0 {
            if line.trim_end() != RUN_LOG_HEADER {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    message: format!("header {line:?} does not match {RUN_LOG_HEADER:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        // a torn final line from a killed process is skipped, not fatal
        match RunRecord::parse_csv_row(&line) {
            Ok(r) => records.push(r),
            Err(_) if line.split(',').count() < 12 => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(records)
}

/// Work items of `spec` that have no row in `log`.
pub fn resume(spec: &SweepSpec, log: &[RunRecord]) -> Vec<WorkItem> {
    let done: HashSet<(CellKind, usize, usize, usize, u32)> = log
        .iter()
        .filter(|r| r.task == spec.task)
        .map(|r| (r.model, r.layers, r.cells, r.position, r.seed))
        .collect();
    spec.work_items()
        .into_iter()
        .filter(|w| !done.contains(&(w.model, w.layers, w.cells, w.position, w.seed)))
        .collect()
}

/// Records belonging to `spec`'s grid (the log may hold other experiments).
pub fn records_for(spec: &SweepSpec, log: &[RunRecord]) -> Vec<RunRecord> {
    let wanted: HashSet<(CellKind, usize, usize, usize, u32)> = spec
        .work_items()
        .iter()
        .map(|w| (w.model, w.layers, w.cells, w.position, w.seed))
        .collect();
    log.iter()
        .filter(|r| r.task == spec.task && wanted.contains(&(r.model, r.layers, r.cells, r.position, r.seed)))
        .cloned()
        .collect()
}

/// One eval point of one run, as stored in `curves.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub model: CellKind,
    pub task: TaskKind,
    pub layers: usize,
    pub cells: usize,
    pub position: usize,
    pub seed: u32,
    pub epoch: usize,
    pub eval_mae: f64,
}

pub fn curve_rows(item: &WorkItem, task: TaskKind, result: &TrainResult) -> String {
    let mut out = String::new();
    for (epoch, v) in &result.loss_curve {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            item.model, task, item.layers, item.cells, item.position, item.seed, epoch, v
        ));
    }
    out
}

pub fn load_curves(path: &Path) -> Result<Vec<CurvePoint>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim_end) != Some(CURVE_HEADER) {
        return Err(Error::Schema { path: path.to_path_buf(), message: "unexpected curves header".into() });
    }
    let mut points = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            continue;
        }
        let parse_err = |s: &str| Error::Parse(format!("bad curve field '{s}'"));
        points.push(CurvePoint {
            model: f[0].parse()?,
            task: f[1].parse()?,
            layers: f[2].parse().map_err(|_| parse_err(f[2]))?,
            cells: f[3].parse().map_err(|_| parse_err(f[3]))?,
            position: f[4].parse().map_err(|_| parse_err(f[4]))?,
            seed: f[5].parse().map_err(|_| parse_err(f[5]))?,
            epoch: f[6].parse().map_err(|_| parse_err(f[6]))?,
            eval_mae: f[7].parse().map_err(|_| parse_err(f[7]))?,
        });
    }
    Ok(points)
}

fn open_log(path: &Path, header: &str) -> Result<File> {
    let fresh = !path.exists() || fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    if fresh {
        writeln!(file, "{header}").map_err(|e| Error::io(path, e))?;
    } else {
        // a killed writer can leave a torn last line; start on a fresh one
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.last() != Some(&b'\n') {
            writeln!(file).map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(file)
}

pub fn train_config_for(spec: &SweepSpec, item: &WorkItem) -> TrainConfig {
    TrainConfig { seed: item.run_seed, ..spec.train.clone() }
}

/// Run (or finish) the sweep in `out_dir` with `jobs` parallel workers.
/// Returns the grid aggregated from the complete log and writes it to
/// `grid.csv`.
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path, jobs: usize) -> Result<SweepGrid> {
    run_sweep_with(spec, out_dir, jobs, |_, _| {})
}

/// [`run_sweep`] with a callback after every finished run.
pub fn run_sweep_with(
    spec: &SweepSpec,
    out_dir: &Path,
    jobs: usize,
    on_done: impl Fn(&WorkItem, &TrainResult) + Sync,
) -> Result<SweepGrid> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let runs_path = out_dir.join(RUNS_FILE);
    let curves_path = out_dir.join(CURVES_FILE);
    let existing = if runs_path.exists() { load_run_log(&runs_path)? } else { Vec::new() };
    let todo = resume(spec, &existing);

    if !todo.is_empty() {
        let writers = Mutex::new((open_log(&curves_path, CURVE_HEADER)?, open_log(&runs_path, RUN_LOG_HEADER)?));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| {
            todo.par_iter().try_for_each(|item| -> Result<()> {
                let task = spec.task_spec(item.position)?;
                let config = train_config_for(spec, item);
                let result = train_run(item.model, item.layers, item.cells, &task, &config)?;
                let record = RunRecord::new(item.model, &task, item.layers, item.cells, item.seed, &config, &result);
                {
                    let mut guard = writers.lock().unwrap_or_else(|p| p.into_inner());
                    let (curves, runs) = &mut *guard;
                    curves
                        .write_all(curve_rows(item, spec.task, &result).as_bytes())
                        .and_then(|_| curves.flush())
                        .map_err(|e| Error::io(&curves_path, e))?;
                    writeln!(runs, "{}", record.to_csv_row())
                        .and_then(|_| runs.flush())
                        .map_err(|e| Error::io(&runs_path, e))?;
                }
                on_done(item, &result);
                Ok(())
            })
        })?;
    }

    let log = load_run_log(&runs_path)?;
    let grid = aggregate(&records_for(spec, &log));
    let grid_path = out_dir.join(GRID_FILE);
    fs::write(&grid_path, grid.to_csv()).map_err(|e| Error::io(&grid_path, e))?;
    Ok(grid)
}

/// Which model wins a single (l, c, p) cell.
#[derive(Clone, Debug, PartialEq)]
pub enum CellWinner {
    Model(CellKind),
    Tie(Vec<CellKind>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelComparison {
    pub winners: BTreeMap<(usize, usize, usize), CellWinner>,
    pub wins: BTreeMap<CellKind, usize>,
    pub ties: usize,
}

impl ModelComparison {
    pub fn wins_of(&self, model: CellKind) -> usize {
        self.wins.get(&model).copied().unwrap_or(0)
    }
}

/// Per (l, c, p), the model with the lowest mean MAE across `grids`.
pub fn compare_models(grids: &BTreeMap<CellKind, SweepGrid>) -> Result<ModelComparison> {
    let axes = |g: &SweepGrid| -> BTreeSet<(usize, usize, usize)> {
        g.iter().map(|(k, _)| (k.layers, k.cells, k.position)).collect()
    };
    let mut iter = grids.iter();
    let Some((_, first)) = iter.next() else {
        return Err(Error::InvalidArgument("no grids to compare".into()));
    };
    let shared = axes(first);
    for (model, g) in iter {
        if axes(g) != shared {
            return Err(Error::InvalidArgument(format!("grid of {model} has different axes")));
        }
    }
    let mut winners = BTreeMap::new();
    let mut wins: BTreeMap<CellKind, usize> = grids.keys().map(|&m| (m, 0)).collect();
    let mut ties = 0;
    for &(layers, cells, position) in &shared {
        let scores: Vec<(CellKind, f64)> = grids
            .iter()
            .map(|(&model, g)| {
                let key = GridKey { model, layers, cells, position };
                (model, g.get(&key).map_or(f64::INFINITY, |c| c.mean_mae))
            })
            .collect();
        let best = scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        let leaders: Vec<CellKind> = scores.iter().filter(|s| s.1 == best).map(|s| s.0).collect();
        let winner = if leaders.len() == 1 {
            *wins.get_mut(&leaders[0]).expect("model present") += 1;
            CellWinner::Model(leaders[0])
        } else {
            ties += 1;
            CellWinner::Tie(leaders)
        };
        winners.insert((layers, cells, position), winner);
    }
    Ok(ModelComparison { winners, wins, ties })
}
