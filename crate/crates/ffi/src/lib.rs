//! C ABI for memprobe.
//!
//! Every fallible function returns an [`MpStatus`] and writes results
//! through out-pointers. On failure, [`mp_last_error`] describes the most
//! recent error on the calling thread. Handles ([`MpPrng`], [`MpNet`]) are
//! opaque, created by `*_new`/`*_load` and released with `*_free`.
//! Panics never cross the boundary; they surface as `MP_STATUS_PANIC`.

use memprobe::esn::{memory_capacity, EsnConfig};
use memprobe::tasks::{baseline_mae, DEFAULT_Q_MAX, DEFAULT_Q_MIN, FIXED_Q};
use memprobe::training::{gradcheck, train_run};
use memprobe::{init_net, CellKind, Checkpoint, Error, Prng, StackedNet, TaskKind, TaskSpec, TrainConfig};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Diverged = 4,
    Singular = 5,
    Io = 6,
    Parse = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MpCellKind {
    Rnn = 0,
    Lstm = 1,
    Gru = 2,
}

impl From<MpCellKind> for CellKind {
    fn from(k: MpCellKind) -> Self {
        match k {
            MpCellKind::Rnn => CellKind::Rnn,
            MpCellKind::Lstm => CellKind::Lstm,
            MpCellKind::Gru => CellKind::Gru,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MpTaskKind {
    Random = 0,
    Fixed = 1,
    Correlated = 2,
}

impl From<MpTaskKind> for TaskKind {
    fn from(k: MpTaskKind) -> Self {
        match k {
            MpTaskKind::Random => TaskKind::Random,
            MpTaskKind::Fixed => TaskKind::Fixed,
            MpTaskKind::Correlated => TaskKind::Correlated,
        }
    }
}

/// Opaque Mersenne Twister generator.
pub struct MpPrng(Prng);

/// Opaque stacked recurrent network.
pub struct MpNet(StackedNet);

/// Training hyperparameters. `truncation = 0` means full BPTT.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MpTrainConfig {
    pub learning_rate: f64,
    pub episodes_per_epoch: usize,
    pub max_epochs: usize,
    pub eval_episodes: usize,
    pub eval_every: usize,
    pub early_stop_mae: f64,
    pub seed: u32,
    pub truncation: usize,
}

impl From<MpTrainConfig> for TrainConfig {
    fn from(c: MpTrainConfig) -> Self {
        TrainConfig {
            learning_rate: c.learning_rate,
            episodes_per_epoch: c.episodes_per_epoch,
            max_epochs: c.max_epochs,
            eval_episodes: c.eval_episodes,
            eval_every: c.eval_every,
            early_stop_mae: c.early_stop_mae,
            seed: c.seed,
            truncation: (c.truncation > 0).then_some(c.truncation),
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct MpTrainSummary {
    pub final_eval_mae: f64,
    pub best_eval_mae: f64,
    pub epochs_run: usize,
    pub diverged: bool,
    pub wall_ms: u64,
}

/// Reservoir settings. `max_delay = 0` means `2 * neurons`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MpEsnConfig {
    pub neurons: usize,
    pub connectivity: f64,
    pub spectral_radius: f64,
    pub input_scaling: f64,
    pub ridge_lambda: f64,
    pub washout: usize,
    pub stream_len: usize,
    pub max_delay: usize,
    pub seed: u32,
}

impl From<MpEsnConfig> for EsnConfig {
    fn from(c: MpEsnConfig) -> Self {
        EsnConfig {
            neurons: c.neurons,
            connectivity: c.connectivity,
            spectral_radius: c.spectral_radius,
            input_scaling: c.input_scaling,
            ridge_lambda: c.ridge_lambda,
            washout: c.washout,
            stream_len: c.stream_len,
            max_delay: (c.max_delay > 0).then_some(c.max_delay),
            seed: c.seed,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(MpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) => MpStatus::InvalidArgument,
            Error::DimensionMismatch(_) => MpStatus::DimensionMismatch,
            Error::Diverged(_) => MpStatus::Diverged,
            Error::Singular(_) => MpStatus::Singular,
            Error::Io { .. } => MpStatus::Io,
            Error::Schema { .. } | Error::Parse(_) | Error::Json(_) => MpStatus::Parse,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MpStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            MpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            MpStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| null(what))
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| Failure(MpStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn task_spec(task: MpTaskKind, position: usize, q_min: usize, q_max: usize) -> Result<TaskSpec, Failure> {
    let kind = TaskKind::from(task);
    let (lo, hi) = match kind {
        TaskKind::Fixed => (FIXED_Q, FIXED_Q),
        _ => (DEFAULT_Q_MIN, DEFAULT_Q_MAX),
    };
    let q_min = if q_min == 0 { lo } else { q_min };
    let q_max = if q_max == 0 { hi } else { q_max };
    Ok(TaskSpec::with_lengths(kind, q_min, q_max, position)?)
}

/// Copies the calling thread's last error message (NUL-terminated,
/// truncated to `len`) into `buf` and returns the full message length
/// excluding the terminator. Pass `buf = NULL` to query the length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn mp_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mp_prng_new(seed: u32, out: *mut *mut MpPrng) -> MpStatus {
    guard(|| {
        *self::out(out, "out")? = Box::into_raw(Box::new(MpPrng(Prng::new(seed))));
        Ok(())
    })
}

/// # Safety
/// `prng` must be null or a handle from [`mp_prng_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mp_prng_free(prng: *mut MpPrng) {
    if !prng.is_null() {
        drop(Box::from_raw(prng));
    }
}

/// # Safety
/// `prng` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mp_prng_next_u32(prng: *mut MpPrng, out: *mut u32) -> MpStatus {
    guard(|| {
        let p = self::out(prng, "prng")?;
        *self::out(out, "out")? = p.0.next_u32();
        Ok(())
    })
}

/// Uniform on `[0, 1)` with 53-bit resolution.
///
/// # Safety
/// `prng` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mp_prng_next_f64(prng: *mut MpPrng, out: *mut f64) -> MpStatus {
    guard(|| {
        let p = self::out(prng, "prng")?;
        *self::out(out, "out")? = p.0.next_f64();
        Ok(())
    })
}

/// Uniform on `[a, b)`; requires `a < b`.
///
/// # Safety
/// `prng` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mp_prng_uniform(prng: *mut MpPrng, a: f64, b: f64, out: *mut f64) -> MpStatus {
    guard(|| {
        let p = self::out(prng, "prng")?;
        let o = self::out(out, "out")?;
        *o = p.0.uniform(a, b)?;
        Ok(())
    })
}

/// Network with weights drawn from MT19937 seeded with `seed`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mp_net_new(
    kind: MpCellKind,
    layers: usize,
    cells: usize,
    seed: u32,
    out: *mut *mut MpNet,
) -> MpStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        let net = init_net(kind.into(), layers, cells, &mut Prng::new(seed))?;
        *o = Box::into_raw(Box::new(MpNet(net)));
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a handle from [`mp_net_new`]/[`mp_net_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mp_net_free(net: *mut MpNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mp_net_param_count(net: *const MpNet, out: *mut usize) -> MpStatus {
    guard(|| {
        let n = net.as_ref().ok_or_else(|| null("net"))?;
        *self::out(out, "out")? = n.0.param_count();
        Ok(())
    })
}

/// Runs the sequence `xs[0..len]` and writes the scalar readout.
///
/// # Safety
/// `net` must be a live handle, `xs` valid for `len` reads, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mp_net_forward(net: *const MpNet, xs: *const f64, len: usize, out: *mut f64) -> MpStatus {
    guard(|| {
        let n = net.as_ref().ok_or_else(|| null("net"))?;
        if xs.is_null() {
            return Err(null("xs"));
        }
        let o = self::out(out, "out")?;
        *o = n.0.predict(std::slice::from_raw_parts(xs, len))?;
        Ok(())
    })
}

/// Writes a JSON checkpoint; `seed` is recorded as metadata.
///
/// # Safety
/// `net` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mp_net_save(net: *const MpNet, path: *const c_char, seed: u32) -> MpStatus {
    guard(|| {
        let n = net.as_ref().ok_or_else(|| null("net"))?;
        Checkpoint::from_net(&n.0, seed).save(&path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mp_net_load(path: *const c_char, out: *mut *mut MpNet) -> MpStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        let net = Checkpoint::load(&path_arg(path)?)?.to_net()?;
        *o = Box::into_raw(Box::new(MpNet(net)));
        Ok(())
    })
}

/// Largest relative error between BPTT and central differences over all
/// parameters for one random episode of length `q`.
///
/// # Safety
/// `out_max_rel_error` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mp_gradcheck(
    kind: MpCellKind,
    layers: usize,
    cells: usize,
    q: usize,
    seed: u32,
    out_max_rel_error: *mut f64,
) -> MpStatus {
    guard(|| {
        let o = self::out(out_max_rel_error, "out_max_rel_error")?;
        *o = gradcheck(kind.into(), layers, cells, q, seed)?.max_rel_error;
        Ok(())
    })
}

/// MAE of the constant 0.5 predictor. `q_min`/`q_max` of 0 select the
/// task defaults.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mp_baseline_mae(
    task: MpTaskKind,
    position: usize,
    q_min: usize,
    q_max: usize,
    episodes: usize,
    seed: u32,
    out: *mut f64,
) -> MpStatus {
    guard(|| {
        let o = self::out(out, "out")?;
        let spec = task_spec(task, position, q_min, q_max)?;
        *o = baseline_mae(&spec, episodes, &mut Prng::new(seed))?;
        Ok(())
    })
}

/// Default training hyperparameters.
#[no_mangle]
pub extern "C" fn mp_train_config_default() -> MpTrainConfig {
    let d = TrainConfig::default();
    MpTrainConfig {
        learning_rate: d.learning_rate,
        episodes_per_epoch: d.episodes_per_epoch,
        max_epochs: d.max_epochs,
        eval_episodes: d.eval_episodes,
        eval_every: d.eval_every,
        early_stop_mae: d.early_stop_mae,
        seed: d.seed,
        truncation: d.truncation.unwrap_or(0),
    }
}

/// Trains one network. A diverged run still returns `MP_STATUS_OK` with
/// `diverged` set.
///
/// # Safety
/// `config` must be valid for reads and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mp_train_run(
    kind: MpCellKind,
    task: MpTaskKind,
    layers: usize,
    cells: usize,
    position: usize,
    config: *const MpTrainConfig,
    out: *mut MpTrainSummary,
) -> MpStatus {
    guard(|| {
        let c = *config.as_ref().ok_or_else(|| null("config"))?;
        let o = self::out(out, "out")?;
        let spec = task_spec(task, position, 0, 0)?;
        let r = train_run(kind.into(), layers, cells, &spec, &c.into())?;
        *o = MpTrainSummary {
            final_eval_mae: r.final_eval_mae,
            best_eval_mae: r.best_eval_mae,
            epochs_run: r.epochs_run,
            diverged: r.diverged,
            wall_ms: r.wall_ms,
        };
        Ok(())
    })
}

/// Default reservoir settings for `neurons` neurons.
#[no_mangle]
pub extern "C" fn mp_esn_config_default(neurons: usize) -> MpEsnConfig {
    let d = EsnConfig {
        neurons,
        ..EsnConfig::default()
    };
    MpEsnConfig {
        neurons: d.neurons,
        connectivity: d.connectivity,
        spectral_radius: d.spectral_radius,
        input_scaling: d.input_scaling,
        ridge_lambda: d.ridge_lambda,
        washout: d.washout,
        stream_len: d.stream_len,
        max_delay: 0,
        seed: d.seed,
    }
}

/// Memory capacity of the reservoir described by `config`. Writes the
/// total, and the first `min(mc_len, K)` per-delay values into `mc_k`
/// when it is non-null. `out_k` (optional) receives K.
///
/// # Safety
/// `config` must be valid for reads, `mc_k` null or valid for `mc_len`
/// writes, `out_total` valid for writes, `out_k` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mp_esn_memory_capacity(
    config: *const MpEsnConfig,
    mc_k: *mut f64,
    mc_len: usize,
    out_k: *mut usize,
    out_total: *mut f64,
) -> MpStatus {
    guard(|| {
        let c = *config.as_ref().ok_or_else(|| null("config"))?;
        let total = self::out(out_total, "out_total")?;
        let r = memory_capacity(&c.into())?;
        if !mc_k.is_null() {
            let n = mc_len.min(r.mc_k.len());
            std::slice::from_raw_parts_mut(mc_k, n).copy_from_slice(&r.mc_k[..n]);
        }
        if let Some(k) = out_k.as_mut() {
            *k = r.mc_k.len();
        }
        *total = r.total;
        Ok(())
    })
}
