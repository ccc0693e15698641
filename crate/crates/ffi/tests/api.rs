use memprobe_ffi::*;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        mp_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn prng_matches_reference_stream() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(mp_prng_new(5489, &mut p), MpStatus::Ok);
        let mut v = 0u32;
        assert_eq!(mp_prng_next_u32(p, &mut v), MpStatus::Ok);
        assert_eq!(v, 3499211612);
        let mut f = 0.0;
        assert_eq!(mp_prng_uniform(p, -1.0, 1.0, &mut f), MpStatus::Ok);
        assert!((-1.0..1.0).contains(&f));
        assert_eq!(mp_prng_uniform(p, 1.0, 1.0, &mut f), MpStatus::InvalidArgument);
        assert!(last_error().contains("invalid argument"));
        mp_prng_free(p);
        mp_prng_free(ptr::null_mut());
    }
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        assert_eq!(mp_prng_new(1, ptr::null_mut()), MpStatus::NullPointer);
        assert!(last_error().contains("null"));
        let mut v = 0u32;
        assert_eq!(mp_prng_next_u32(ptr::null_mut(), &mut v), MpStatus::NullPointer);
        let mut n = 0usize;
        assert_eq!(mp_net_param_count(ptr::null(), &mut n), MpStatus::NullPointer);
        assert_eq!(mp_net_load(ptr::null(), ptr::null_mut()), MpStatus::NullPointer);
    }
}

#[test]
fn error_length_query_and_truncation() {
    unsafe {
        let mut p = ptr::null_mut();
        mp_prng_new(1, &mut p);
        let mut f = 0.0;
        mp_prng_uniform(p, 2.0, 1.0, &mut f);
        mp_prng_free(p);
        let full = mp_last_error(ptr::null_mut(), 0);
        assert!(full > 10);
        let mut small = [0 as c_char; 5];
        assert_eq!(mp_last_error(small.as_mut_ptr(), small.len()), full);
        assert_eq!(CStr::from_ptr(small.as_ptr()).to_bytes().len(), 4);
    }
}

#[test]
fn net_lifecycle_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("net.json").to_str().unwrap()).unwrap();
    unsafe {
        let mut net = ptr::null_mut();
        assert_eq!(mp_net_new(MpCellKind::Lstm, 2, 3, 7, &mut net), MpStatus::Ok);
        let mut count = 0usize;
        mp_net_param_count(net, &mut count);
        assert_eq!(count, 4 * (3 + 9 + 3) + 4 * (9 + 9 + 3));

        let xs = [0.1, 0.7, 0.3, 0.9];
        let mut y = 0.0;
        assert_eq!(mp_net_forward(net, xs.as_ptr(), xs.len(), &mut y), MpStatus::Ok);
        assert!(y.abs() <= 3.0);
        assert_eq!(mp_net_forward(net, xs.as_ptr(), 0, &mut y), MpStatus::InvalidArgument);

        assert_eq!(mp_net_save(net, path.as_ptr(), 7), MpStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(mp_net_load(path.as_ptr(), &mut back), MpStatus::Ok);
        let mut y2 = 0.0;
        mp_net_forward(back, xs.as_ptr(), xs.len(), &mut y2);
        assert_eq!(y.to_bits(), y2.to_bits());
        mp_net_free(net);
        mp_net_free(back);

        let missing = CString::new(dir.path().join("none.json").to_str().unwrap()).unwrap();
        let mut none = ptr::null_mut();
        assert_eq!(mp_net_load(missing.as_ptr(), &mut none), MpStatus::Io);
        assert!(none.is_null());
        assert_eq!(mp_net_new(MpCellKind::Rnn, 0, 3, 1, &mut none), MpStatus::InvalidArgument);
    }
}

#[test]
fn gradcheck_and_baseline() {
    unsafe {
        let mut err = 1.0;
        assert_eq!(mp_gradcheck(MpCellKind::Gru, 1, 3, 10, 7, &mut err), MpStatus::Ok);
        assert!(err < 1e-4);
        let mut mae = 0.0;
        assert_eq!(mp_baseline_mae(MpTaskKind::Random, 1, 0, 0, 20_000, 1, &mut mae), MpStatus::Ok);
        assert!((mae - 0.25).abs() < 0.01);
        assert_eq!(mp_baseline_mae(MpTaskKind::Fixed, 11, 0, 0, 10, 1, &mut mae), MpStatus::InvalidArgument);
    }
}

#[test]
fn train_run_summary() {
    let mut config = mp_train_config_default();
    config.max_epochs = 20;
    config.seed = 4;
    let mut s = MpTrainSummary::default();
    unsafe {
        assert_eq!(
            mp_train_run(MpCellKind::Rnn, MpTaskKind::Random, 1, 2, 1, &config, &mut s),
            MpStatus::Ok
        );
    }
    assert!(s.epochs_run <= 20);
    assert!(s.best_eval_mae <= s.final_eval_mae);
    assert!(!s.diverged);
    config.learning_rate = -1.0;
    unsafe {
        assert_eq!(
            mp_train_run(MpCellKind::Rnn, MpTaskKind::Random, 1, 2, 1, &config, &mut s),
            MpStatus::InvalidArgument
        );
    }
}

#[test]
fn esn_memory_capacity() {
    let mut config = mp_esn_config_default(20);
    config.connectivity = 0.1;
    config.stream_len = 500;
    let mut mc = vec![0.0; 40];
    let (mut k, mut total) = (0usize, 0.0);
    unsafe {
        assert_eq!(
            mp_esn_memory_capacity(&config, mc.as_mut_ptr(), mc.len(), &mut k, &mut total),
            MpStatus::Ok
        );
    }
    assert_eq!(k, 40);
    assert!((mc.iter().sum::<f64>() - total).abs() < 1e-9);
    assert!(total > 0.0 && total <= 21.0);
    config.spectral_radius = 1.5;
    unsafe {
        assert_eq!(
            mp_esn_memory_capacity(&config, ptr::null_mut(), 0, ptr::null_mut(), &mut total),
            MpStatus::InvalidArgument
        );
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(mp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    // <target>/<profile>/deps/<test binary>
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

const C_PROGRAM: &str = r#"
#include "memprobe.h"
#include <stdio.h>

int main(void) {
    MpPrng *p = NULL;
    if (mp_prng_new(5489, &p) != MP_STATUS_OK) return 10;
    uint32_t v = 0;
    mp_prng_next_u32(p, &v);
    mp_prng_free(p);
    if (v != 3499211612u) return 11;

    MpNet *net = NULL;
    if (mp_net_new(MP_CELL_KIND_GRU, 1, 3, 1, &net) != MP_STATUS_OK) return 12;
    size_t count = 0;
    mp_net_param_count(net, &count);
    double xs[3] = {0.2, 0.4, 0.6};
    double y = 0.0;
    if (mp_net_forward(net, xs, 3, &y) != MP_STATUS_OK) return 13;
    mp_net_free(net);
    if (count != 3 * (3 + 9 + 3)) return 14;

    double mae = 0.0;
    if (mp_baseline_mae(MP_TASK_KIND_FIXED, 12, 0, 0, 10, 1, &mae) != MP_STATUS_INVALID_ARGUMENT) return 15;
    char msg[256];
    if (mp_last_error(msg, sizeof msg) == 0) return 16;

    printf("ok %s\n", mp_version());
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler on PATH; skipping");
        return;
    };
    let lib = target_dir().join("libmemprobe_ffi.a");
    assert!(lib.exists(), "static library not built at {}", lib.display());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    let exe = dir.path().join("probe");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
