use std::ffi::{c_char, CString};
use std::ptr;

use spikecodec_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    let n = unsafe { spk_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn signal(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / 8000.0;
            0.5 * (2.0 * std::f64::consts::PI * 440.0 * t).sin() + 0.3 * (2.0 * std::f64::consts::PI * 1250.0 * t).sin()
        })
        .collect()
}

#[test]
fn encode_decode_roundtrip_through_the_abi() {
    unsafe {
        let mut bank = ptr::null_mut();
        assert_eq!(spk_bank_default(8, 8000, &mut bank), SpkStatus::Ok);
        assert_eq!(spk_bank_len(bank), 8);
        assert_ne!(spk_bank_hash(bank), 0);

        let x = signal(2000);
        let mut train = ptr::null_mut();
        let st = spk_encode(bank, x.as_ptr(), x.len(), 1e-3, 0.05, 0.005, true, &mut train);
        assert_eq!(st, SpkStatus::Ok);
        let n = spk_train_len(train);
        assert!(n > 10);
        assert_eq!(spk_train_signal_len(train), 2000);

        let (mut k, mut t, mut thr) = (0u32, 0u64, 0.0f64);
        assert_eq!(spk_train_get(train, 0, &mut k, &mut t, &mut thr), SpkStatus::Ok);
        assert!(k < 8 && thr.is_finite());
        assert_eq!(spk_train_get(train, n, &mut k, &mut t, &mut thr), SpkStatus::Input);
        assert!(last_error().contains("out of range"));

        let mut batch = vec![0.0; 2000];
        assert_eq!(spk_decode_batch(bank, train, batch.as_mut_ptr(), batch.len()), SpkStatus::Ok);
        let mut win = vec![0.0; 2000];
        assert_eq!(spk_decode_window(bank, train, n, win.as_mut_ptr(), win.len()), SpkStatus::Ok);
        let diff: f64 = batch.iter().zip(&win).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = batch.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-6);
        assert_eq!(spk_decode_batch(bank, train, batch.as_mut_ptr(), 10), SpkStatus::Input);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("t.spk").to_str().unwrap()).unwrap();
        assert_eq!(spk_train_write(train, path.as_ptr()), SpkStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(spk_train_read(path.as_ptr(), &mut back), SpkStatus::Ok);
        assert_eq!(spk_train_len(back), n);
        let (mut t2, mut thr2) = (0u64, 0.0f64);
        spk_train_get(back, n - 1, ptr::null_mut(), &mut t2, &mut thr2);
        spk_train_get(train, n - 1, ptr::null_mut(), &mut t, &mut thr);
        assert_eq!((t, thr.to_bits()), (t2, thr2.to_bits()));

        spk_train_free(back);
        spk_train_free(train);
        spk_bank_free(bank);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut bank = ptr::null_mut();
        assert_eq!(spk_bank_default(4, 8000, ptr::null_mut()), SpkStatus::NullPointer);
        assert!(last_error().contains("null pointer"));
        let spec = CString::new("gammatone f=9000\n").unwrap();
        assert_eq!(spk_bank_from_spec(spec.as_ptr(), 8000, &mut bank), SpkStatus::Config);
        let spec = CString::new("sawtooth f=100\n").unwrap();
        assert_eq!(spk_bank_from_spec(spec.as_ptr(), 8000, &mut bank), SpkStatus::Format);
        let spec = CString::new("gammatone f=500\ngammatone f=1500 phase=1.57\n").unwrap();
        assert_eq!(spk_bank_from_spec(spec.as_ptr(), 8000, &mut bank), SpkStatus::Ok);
        assert_eq!(spk_bank_len(bank), 2);

        let mut train = ptr::null_mut();
        let x = [0.0; 10];
        assert_eq!(spk_encode(bank, x.as_ptr(), 10, -1.0, 0.1, 0.01, false, &mut train), SpkStatus::Config);
        assert_eq!(spk_encode(ptr::null(), x.as_ptr(), 10, 1.0, 0.1, 0.01, false, &mut train), SpkStatus::NullPointer);
        assert_eq!(spk_encode(bank, ptr::null(), 0, 1e-3, 0.1, 0.01, false, &mut train), SpkStatus::Ok);
        assert_eq!(spk_train_len(train), 0);

        // A train from another bank is refused.
        let mut other = ptr::null_mut();
        spk_bank_default(3, 8000, &mut other);
        let mut out = [0.0; 0];
        assert_eq!(spk_decode_batch(other, train, out.as_mut_ptr(), 0), SpkStatus::Compat);

        let missing = CString::new("/nonexistent/spikes.spk").unwrap();
        let mut t2 = ptr::null_mut();
        assert_eq!(spk_train_read(missing.as_ptr(), &mut t2), SpkStatus::Io);
        assert!(t2.is_null());

        assert_eq!(spk_bank_len(ptr::null()), 0);
        spk_train_free(ptr::null_mut());
        spk_train_free(train);
        spk_bank_free(other);
        spk_bank_free(bank);
    }
}

const C_PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "spikecodec.h"

int main(void) {
    SpkBank *bank = NULL;
    if (spk_bank_default(6, 8000, &bank) != SPK_STATUS_OK) return 1;
    double x[1000];
    for (int i = 0; i < 1000; i++) x[i] = 0.8 * sin(2.0 * 3.141592653589793 * 700.0 * i / 8000.0);
    SpkTrain *train = NULL;
    if (spk_encode(bank, x, 1000, 1e-3, 0.05, 0.005, true, &train) != SPK_STATUS_OK) return 2;
    double y[1000];
    if (spk_decode_window(bank, train, 50, y, 1000) != SPK_STATUS_OK) return 3;
    if (spk_bank_default(0, 8000, NULL) != SPK_STATUS_NULL_POINTER) return 4;
    char msg[64];
    if (spk_last_error_message(msg, sizeof msg) == 0) return 5;
    printf("%zu\n", spk_train_len(train));
    spk_train_free(train);
    spk_bank_free(bank);
    return 0;
}
"#;

/// Compiles a C client against the generated header and static library.
#[test]
fn c_client_links_against_static_library() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler on PATH; C client test not run");
        return;
    };
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    // The test binary sits in target/<profile>/deps next to the freshly built archive.
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().unwrap().join("libspikecodec_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let bin = dir.path().join("client");
    let status = std::process::Command::new(&cc)
        .args(["-std=c11", "-Wall", "-Werror", "-I", include])
        .arg(&src)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C client failed to compile");
    let out = std::process::Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C client exited with {:?}", out.status.code());
    let count: usize = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!(count > 0);
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if std::process::Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
