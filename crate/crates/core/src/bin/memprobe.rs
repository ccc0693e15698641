use clap::{Args, Parser, Subcommand};
use memprobe::esn::{memory_capacity, write_mc_rows, EsnConfig, MC_CSV_HEADER};
use memprobe::report::{figure_name, losscurves_svg, write_report, HeatmapStyle};
use memprobe::sweep::{run_sweep_with, SweepSpec, GRID_FILE, RUNS_FILE};
use memprobe::tasks::{baseline_mae, DEFAULT_Q_MAX, DEFAULT_Q_MIN, FIXED_Q};
use memprobe::training::{gradcheck, train_model, RunRecord, GRADCHECK_STEP, RUN_LOG_HEADER};
use memprobe::{CellKind, Checkpoint, Error, Prng, TaskKind, TaskSpec, TrainConfig};
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "memprobe", version, about = "Memorization-distance benchmarks for RNN, LSTM and GRU networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare BPTT gradients with central finite differences
    Gradcheck(GradcheckArgs),
    /// Train one network and write its record, eval curve and checkpoint
    Train(TrainArgs),
    /// Run a (model x layers x cells x position x seed) grid, resuming from the run log
    Sweep(SweepArgs),
    /// Render heatmaps and loss curves from a sweep directory
    Report(ReportArgs),
    /// Measure echo state network memory capacity
    EsnMc(EsnArgs),
    /// Score the constant 0.5 predictor
    Baseline(BaselineArgs),
}

#[derive(Args, Serialize)]
struct GradcheckArgs {
    #[arg(long, default_value = "rnn")]
    model: CellKind,
    #[arg(long, default_value_t = 1)]
    layers: usize,
    #[arg(long, default_value_t = 2)]
    cells: usize,
    /// Sequence length of the probe episode
    #[arg(long, default_value_t = 12)]
    q: usize,
    #[arg(long, default_value_t = 1)]
    seed: u32,
}

/// Training hyperparameters; unset flags fall back to the config file,
/// then to built-in defaults.
#[derive(Args, Default)]
struct TrainOverrides {
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    episodes_per_epoch: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    early_stop_mae: Option<f64>,
    /// Backpropagate through at most this many trailing steps
    #[arg(long)]
    truncation: Option<usize>,
}

impl TrainOverrides {
    fn apply(&self, c: &mut TrainConfig) {
        set(&mut c.learning_rate, self.learning_rate);
        set(&mut c.episodes_per_epoch, self.episodes_per_epoch);
        set(&mut c.max_epochs, self.max_epochs);
        set(&mut c.eval_episodes, self.eval_episodes);
        set(&mut c.eval_every, self.eval_every);
        set(&mut c.early_stop_mae, self.early_stop_mae);
        if self.truncation.is_some() {
            c.truncation = self.truncation;
        }
    }
}

fn set<T>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

#[derive(Args)]
struct TrainArgs {
    /// JSON file with training hyperparameters (TrainConfig keys)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "rnn")]
    model: CellKind,
    #[arg(long, default_value = "random")]
    task: TaskKind,
    #[arg(long, default_value_t = 1)]
    layers: usize,
    #[arg(long, default_value_t = 5)]
    cells: usize,
    #[arg(long, default_value_t = 1)]
    position: usize,
    #[arg(long)]
    q_min: Option<usize>,
    #[arg(long)]
    q_max: Option<usize>,
    #[arg(long)]
    seed: Option<u32>,
    #[command(flatten)]
    train: TrainOverrides,
    #[arg(long, env = "MEMPROBE_OUT", default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep spec JSON
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parallel training runs (default: available cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory (default: spec output_dir, then $MEMPROBE_OUT, then ./results)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<CellKind>>,
    #[arg(long)]
    task: Option<TaskKind>,
    /// Inclusive range "lo,hi" or a single value
    #[arg(long, value_parser = parse_range)]
    layers: Option<[usize; 2]>,
    #[arg(long, value_parser = parse_range)]
    cells: Option<[usize; 2]>,
    #[arg(long, value_parser = parse_range)]
    positions: Option<[usize; 2]>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u32>>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    q_min: Option<usize>,
    #[arg(long)]
    q_max: Option<usize>,
    #[command(flatten)]
    train: TrainOverrides,
}

#[derive(Args)]
struct ReportArgs {
    /// Sweep output directory containing runs.csv
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, env = "MEMPROBE_OUT", default_value = "results")]
    out: PathBuf,
    /// Loss mapped to the top of the color ramp
    #[arg(long, default_value_t = 0.25)]
    loss_cap: f64,
}

#[derive(Args)]
struct EsnArgs {
    /// JSON file with reservoir settings (EsnConfig keys)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    neurons: Option<usize>,
    #[arg(long)]
    connectivity: Option<f64>,
    #[arg(long)]
    spectral_radius: Option<f64>,
    #[arg(long)]
    input_scaling: Option<f64>,
    #[arg(long)]
    ridge_lambda: Option<f64>,
    #[arg(long)]
    washout: Option<usize>,
    #[arg(long)]
    stream_len: Option<usize>,
    #[arg(long)]
    max_delay: Option<usize>,
    /// First seed
    #[arg(long)]
    seed: Option<u32>,
    /// Number of consecutive seeds to measure
    #[arg(long, default_value_t = 1)]
    seeds: u32,
    #[arg(long, env = "MEMPROBE_OUT", default_value = "results")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct BaselineArgs {
    #[arg(long, default_value = "random")]
    task: TaskKind,
    #[arg(long, default_value_t = 1)]
    position: usize,
    #[arg(long)]
    q_min: Option<usize>,
    #[arg(long)]
    q_max: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    episodes: usize,
    #[arg(long, default_value_t = 1)]
    seed: u32,
    /// Also write baseline.csv here
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<[usize; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |t: &str| t.parse::<usize>().map_err(|_| format!("'{t}' is not a non-negative integer"));
    match parts.as_slice() {
        [v] => Ok([num(v)?; 2]),
        [lo, hi] => Ok([num(lo)?, num(hi)?]),
        _ => Err(format!("expected 'lo,hi' or a single value, got '{s}'")),
    }
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn echo_config<T: Serialize>(value: &T) -> Result<(), Failure> {
    println!("{}", serde_json::to_string_pretty(value).map_err(Error::from)?);
    Ok(())
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure::Runtime(Error::Io { path: path.to_path_buf(), source: e }))
}

fn write_file(path: &Path, body: &str) -> Result<(), Failure> {
    fs::write(path, body).map_err(|e| Failure::Runtime(Error::Io { path: path.to_path_buf(), source: e }))
}

fn task_spec(task: TaskKind, position: usize, q_min: Option<usize>, q_max: Option<usize>) -> memprobe::Result<TaskSpec> {
    let (lo, hi) = match task {
        TaskKind::Fixed => (FIXED_Q, FIXED_Q),
        _ => (DEFAULT_Q_MIN, DEFAULT_Q_MAX),
    };
    TaskSpec::with_lengths(task, q_min.unwrap_or(lo), q_max.unwrap_or(hi), position)
}

fn run_gradcheck(args: GradcheckArgs) -> Result<(), Failure> {
    echo_config(&args)?;
    let report = gradcheck(args.model, args.layers, args.cells, args.q, args.seed).map_err(usage)?;
    for b in &report.blocks {
        println!("layer {} gate {} {}: {:.3e}", b.layer, b.gate, b.block, b.max_rel_error);
    }
    println!("max relative error: {:.3e} (h = {GRADCHECK_STEP:e})", report.max_rel_error);
    if report.max_rel_error < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(Failure::Runtime(Error::InvalidArgument(format!(
            "gradient check failed: {:.3e} >= {GRADCHECK_TOLERANCE:e}",
            report.max_rel_error
        ))))
    }
}

#[derive(Serialize)]
struct ResolvedTrain<'a> {
    model: CellKind,
    task: TaskKind,
    layers: usize,
    cells: usize,
    position: usize,
    q_min: usize,
    q_max: usize,
    train: &'a TrainConfig,
    out: &'a Path,
}

fn run_train(args: TrainArgs) -> Result<(), Failure> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<TrainConfig>(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    args.train.apply(&mut config);
    set(&mut config.seed, args.seed);
    config.validate().map_err(usage)?;
    let spec = task_spec(args.task, args.position, args.q_min, args.q_max).map_err(usage)?;
    if args.layers < 1 || args.cells < 1 {
        return Err(Failure::Usage("layers and cells must be >= 1".into()));
    }
    echo_config(&ResolvedTrain {
        model: args.model,
        task: args.task,
        layers: args.layers,
        cells: args.cells,
        position: args.position,
        q_min: spec.q_min,
        q_max: spec.q_max,
        train: &config,
        out: &args.out,
    })?;

    create_dir(&args.out)?;
    let outcome = train_model(args.model, args.layers, args.cells, &spec, &config)?;
    let r = &outcome.result;
    let record = RunRecord::new(args.model, &spec, args.layers, args.cells, config.seed, &config, r);
    write_file(&args.out.join("run.csv"), &format!("{RUN_LOG_HEADER}\n{}\n", record.to_csv_row()))?;
    let mut curve = String::from("epoch,eval_mae\n");
    for (e, v) in &r.loss_curve {
        curve.push_str(&format!("{e},{v}\n"));
    }
    write_file(&args.out.join("curve.csv"), &curve)?;
    write_file(
        &args.out.join(figure_name(args.task, args.model, "losscurves")),
        &losscurves_svg(&[(args.position, &r.loss_curve)]),
    )?;
    Checkpoint::from_net(&outcome.net, config.seed).save(&args.out.join("checkpoint.json"))?;
    println!(
        "final eval MAE {:.4}, best {:.4}, {} epochs{}",
        r.final_eval_mae,
        r.best_eval_mae,
        r.epochs_run,
        if r.diverged { ", diverged" } else { "" }
    );
    Ok(())
}

fn run_sweep_cmd(args: SweepArgs) -> Result<(), Failure> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<SweepSpec>(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => SweepSpec {
            models: vec![CellKind::Rnn],
            task: TaskKind::Random,
            layers: [1, 1],
            cells: [1, 5],
            positions: [1, 10],
            seeds: vec![1, 2, 3, 4, 5],
            base_seed: 0,
            q_min: None,
            q_max: None,
            train: TrainConfig::default(),
            output_dir: None,
        },
    };
    if let Some(m) = args.models {
        spec.models = m;
    }
    set(&mut spec.task, args.task);
    set(&mut spec.layers, args.layers);
    set(&mut spec.cells, args.cells);
    set(&mut spec.positions, args.positions);
    set(&mut spec.seeds, args.seeds);
    set(&mut spec.base_seed, args.base_seed);
    if args.q_min.is_some() {
        spec.q_min = args.q_min;
    }
    if args.q_max.is_some() {
        spec.q_max = args.q_max;
    }
    args.train.apply(&mut spec.train);
    let out = args
        .out
        .or_else(|| spec.output_dir.clone())
        .or_else(|| std::env::var_os("MEMPROBE_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    spec.output_dir = Some(out.clone());
    spec.validate().map_err(usage)?;
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(Failure::Usage("--jobs must be >= 1".into()));
    }
    echo_config(&spec)?;

    create_dir(&out)?;
    write_file(&out.join("spec.json"), &(serde_json::to_string_pretty(&spec).map_err(Error::from)? + "\n"))?;
    let total = spec.work_items().len();
    let done = AtomicUsize::new(0);
    let grid = run_sweep_with(&spec, &out, jobs, |item, record| {
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        eprintln!(
            "[{n}, grid {total}] {} l={} c={} p={} seed={}: {:.4}{}",
            item.model,
            item.layers,
            item.cells,
            item.position,
            item.seed,
            record.final_eval_mae,
            if record.diverged { " (diverged)" } else { "" }
        );
    })?;
    println!(
        "{} grid cells -> {}, run log {}",
        grid.len(),
        out.join(GRID_FILE).display(),
        out.join(RUNS_FILE).display()
    );
    Ok(())
}

fn run_report(args: ReportArgs) -> Result<(), Failure> {
    let style = HeatmapStyle {
        loss_cap: args.loss_cap,
        ..HeatmapStyle::default()
    };
    style.validate().map_err(usage)?;
    echo_config(&serde_json::json!({
        "in": args.input,
        "out": args.out,
        "style": style,
    }))?;
    for path in write_report(&args.input, &args.out, &style)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn run_esn(args: EsnArgs) -> Result<(), Failure> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<EsnConfig>(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => EsnConfig::default(),
    };
    set(&mut config.neurons, args.neurons);
    set(&mut config.connectivity, args.connectivity);
    set(&mut config.spectral_radius, args.spectral_radius);
    set(&mut config.input_scaling, args.input_scaling);
    set(&mut config.ridge_lambda, args.ridge_lambda);
    set(&mut config.washout, args.washout);
    set(&mut config.stream_len, args.stream_len);
    if args.max_delay.is_some() {
        config.max_delay = args.max_delay;
    }
    set(&mut config.seed, args.seed);
    config.validate().map_err(usage)?;
    if args.seeds == 0 {
        return Err(Failure::Usage("--seeds must be >= 1".into()));
    }
    echo_config(&serde_json::json!({ "esn": config, "seeds": args.seeds, "out": args.out }))?;

    create_dir(&args.out)?;
    let mut csv = Vec::new();
    writeln!(csv, "{MC_CSV_HEADER}").expect("write to Vec");
    let mut totals = Vec::new();
    for i in 0..args.seeds {
        let c = EsnConfig {
            seed: config.seed.wrapping_add(i),
            ..config.clone()
        };
        let mc = memory_capacity(&c)?;
        write_mc_rows(&mut csv, &c, &mc).expect("write to Vec");
        println!("seed {}: MC = {:.4} (N = {})", c.seed, mc.total, c.neurons);
        totals.push(mc.total);
    }
    let path = args.out.join("mc.csv");
    write_file(&path, &String::from_utf8(csv).expect("CSV is UTF-8"))?;
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    println!("mean MC = {mean:.4} over {} seeds -> {}", totals.len(), path.display());
    Ok(())
}

fn run_baseline(args: BaselineArgs) -> Result<(), Failure> {
    let spec = task_spec(args.task, args.position, args.q_min, args.q_max).map_err(usage)?;
    if args.episodes == 0 {
        return Err(Failure::Usage("--episodes must be >= 1".into()));
    }
    echo_config(&args)?;
    let mut prng = Prng::new(args.seed);
    let mae = baseline_mae(&spec, args.episodes, &mut prng)?;
    println!("baseline MAE {mae:.6}");
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_file(
            &out.join("baseline.csv"),
            &format!(
                "task,position,q_min,q_max,episodes,seed,mae\n{},{},{},{},{},{},{mae}\n",
                args.task, args.position, spec.q_min, spec.q_max, args.episodes, args.seed
            ),
        )?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gradcheck(a) => run_gradcheck(a),
        Command::Train(a) => run_train(a),
        Command::Sweep(a) => run_sweep_cmd(a),
        Command::Report(a) => run_report(a),
        Command::EsnMc(a) => run_esn(a),
        Command::Baseline(a) => run_baseline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
