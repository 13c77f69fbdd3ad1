//! C ABI over the spikecodec library.
//!
//! Handles are opaque pointers created by `spk_*` constructors and released
//! with the matching `*_free`. Every fallible call returns a [`SpkStatus`];
//! on failure [`spk_last_error_message`] describes the error for the calling
//! thread. Panics are caught at the boundary and reported as `SPK_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use spikecodec::decode_batch::decode;
use spikecodec::decode_window::stream_decode;
use spikecodec::encoder::{encode_with, EncodeOptions, ThresholdParams};
use spikecodec::kernelbank::{build_bank, cross_corr_table, default_bank, parse_bank_spec, CorrTable, KernelBank};
use spikecodec::sigio::{read_spikes, SpikeFile};
use spikecodec::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpkStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Input = 3,
    Format = 4,
    Compat = 5,
    Numeric = 6,
    Io = 7,
    TooLarge = 8,
    Panic = 9,
}

impl From<&Error> for SpkStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) => SpkStatus::Config,
            Error::TooLarge { .. } => SpkStatus::TooLarge,
            Error::Input(_) | Error::Sequencing { .. } => SpkStatus::Input,
            Error::Format(_) | Error::UnsupportedFormat(_) => SpkStatus::Format,
            Error::Compat { .. } => SpkStatus::Compat,
            Error::Io { .. } => SpkStatus::Io,
            Error::Aliasing { .. } | Error::DegenerateKernel { .. } => SpkStatus::Config,
            Error::Domain(_) | Error::UndefinedSnr => SpkStatus::Numeric,
        }
    }
}

/// A kernel bank together with its correlation table.
pub struct SpkBank {
    bank: KernelBank,
    table: CorrTable,
}

/// A spike train plus the threshold parameters and gain it was encoded with.
pub struct SpkTrain {
    file: SpikeFile,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> SpkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpkStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            SpkStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            SpkStatus::from(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SpkStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::Input(format!("{what} is not valid UTF-8"))))
}

fn check_out<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure::Null("out"))
    } else {
        Ok(())
    }
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    check_out(out)?;
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn wrap_bank(bank: KernelBank) -> SpkBank {
    let table = cross_corr_table(&bank);
    SpkBank { bank, table }
}

/// Default ERB-spaced gammatone bank of `count` kernels at `fs`.
///
/// # Safety
/// `out` must be a valid pointer to write the handle into.
#[no_mangle]
pub unsafe extern "C" fn spk_bank_default(count: u32, fs: u32, out: *mut *mut SpkBank) -> SpkStatus {
    guard(|| {
        check_out(out)?;
        let bank = default_bank(count as usize, fs)?;
        put(out, wrap_bank(bank))
    })
}

/// Bank from spec text (`gammatone f=... n=... b=... phase=...` per line).
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spk_bank_from_spec(spec: *const c_char, fs: u32, out: *mut *mut SpkBank) -> SpkStatus {
    guard(|| {
        check_out(out)?;
        let text = c_str(spec, "spec")?;
        let bank = build_bank(&parse_bank_spec(text)?, fs)?;
        put(out, wrap_bank(bank))
    })
}

/// # Safety
/// `bank` must come from a `spk_bank_*` constructor, or be null.
#[no_mangle]
pub unsafe extern "C" fn spk_bank_free(bank: *mut SpkBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// Number of kernels, 0 for a null handle.
///
/// # Safety
/// `bank` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn spk_bank_len(bank: *const SpkBank) -> usize {
    bank.as_ref().map_or(0, |b| b.bank.len())
}

/// # Safety
/// `bank` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn spk_bank_hash(bank: *const SpkBank) -> u64 {
    bank.as_ref().map_or(0, |b| b.bank.bank_hash())
}

/// Encodes `len` samples.
///
/// # Safety
/// `signal` must point to `len` doubles (may be null when `len` is 0); `bank`
/// must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn spk_encode(
    bank: *const SpkBank,
    signal: *const f64,
    len: usize,
    baseline: f64,
    ahp_jump: f64,
    refractory: f64,
    store_measured: bool,
    out: *mut *mut SpkTrain,
) -> SpkStatus {
    guard(|| {
        check_out(out)?;
        let bank = deref(bank, "bank")?;
        let x: &[f64] = if len == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(deref(signal, "signal")?, len)
        };
        let params = ThresholdParams::new(baseline, ahp_jump, refractory)?;
        let train = encode_with(x, &bank.bank, &params, EncodeOptions { store_measured })?;
        put(
            out,
            SpkTrain {
                file: SpikeFile {
                    train,
                    params,
                    gain: 1.0,
                    thresholds_stored: store_measured,
                },
            },
        )
    })
}

/// # Safety
/// `train` must come from `spk_encode` or `spk_train_read`, or be null.
#[no_mangle]
pub unsafe extern "C" fn spk_train_free(train: *mut SpkTrain) {
    if !train.is_null() {
        drop(Box::from_raw(train));
    }
}

/// Spike count, 0 for a null handle.
///
/// # Safety
/// `train` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn spk_train_len(train: *const SpkTrain) -> usize {
    train.as_ref().map_or(0, |t| t.file.train.len())
}

/// Length of the encoded signal in samples.
///
/// # Safety
/// `train` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn spk_train_signal_len(train: *const SpkTrain) -> usize {
    train.as_ref().map_or(0, |t| t.file.train.signal_len)
}

/// Spike `index`. Any of the output pointers may be null.
///
/// # Safety
/// `train` must be live; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn spk_train_get(
    train: *const SpkTrain,
    index: usize,
    kernel_id: *mut u32,
    sample_index: *mut u64,
    threshold: *mut f64,
) -> SpkStatus {
    guard(|| {
        let t = deref(train, "train")?;
        let s = t.file.train.spikes.get(index).ok_or_else(|| {
            Error::Input(format!("spike index {index} out of range (len {})", t.file.train.len()))
        })?;
        if !kernel_id.is_null() {
            *kernel_id = s.kernel_id as u32;
        }
        if !sample_index.is_null() {
            *sample_index = s.sample_index;
        }
        if !threshold.is_null() {
            *threshold = s.threshold;
        }
        Ok(())
    })
}

unsafe fn decode_into(
    bank: *const SpkBank,
    train: *const SpkTrain,
    out: *mut f64,
    out_len: usize,
    window: Option<usize>,
) -> SpkStatus {
    guard(|| {
        let bank = deref(bank, "bank")?;
        let t = deref(train, "train")?;
        t.file.check_bank(&bank.bank)?;
        if out_len != t.file.train.signal_len {
            return Err(Error::Input(format!(
                "output buffer holds {out_len} samples, signal has {}",
                t.file.train.signal_len
            ))
            .into());
        }
        let recon = match window {
            Some(w) => stream_decode(&t.file.train, &bank.bank, &bank.table, w)?.0,
            None => decode(&t.file.train, &bank.bank, &bank.table)?,
        };
        if out_len > 0 {
            let dst = std::slice::from_raw_parts_mut(out.as_mut().ok_or(Failure::Null("out"))?, out_len);
            let inv = 1.0 / t.file.gain;
            for (d, s) in dst.iter_mut().zip(&recon.samples) {
                *d = s * inv;
            }
        }
        Ok(())
    })
}

/// Batch decode into `out`, which must hold exactly `spk_train_signal_len` samples.
///
/// # Safety
/// Handles must be live; `out` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn spk_decode_batch(
    bank: *const SpkBank,
    train: *const SpkTrain,
    out: *mut f64,
    out_len: usize,
) -> SpkStatus {
    decode_into(bank, train, out, out_len, None)
}

/// Windowed decode with window size `window`.
///
/// # Safety
/// As for [`spk_decode_batch`].
#[no_mangle]
pub unsafe extern "C" fn spk_decode_window(
    bank: *const SpkBank,
    train: *const SpkTrain,
    window: usize,
    out: *mut f64,
    out_len: usize,
) -> SpkStatus {
    decode_into(bank, train, out, out_len, Some(window))
}

/// Writes the train as a spike file.
///
/// # Safety
/// `train` must be live and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn spk_train_write(train: *const SpkTrain, path: *const c_char) -> SpkStatus {
    guard(|| {
        let t = deref(train, "train")?;
        let path = Path::new(c_str(path, "path")?);
        let bytes = t.file.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(())
    })
}

/// Reads a spike file; missing thresholds are replayed from the header parameters.
///
/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn spk_train_read(path: *const c_char, out: *mut *mut SpkTrain) -> SpkStatus {
    guard(|| {
        check_out(out)?;
        let path = c_str(path, "path")?;
        let file = read_spikes(Path::new(path))?;
        put(out, SpkTrain { file })
    })
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null with `len` 0.
#[no_mangle]
pub unsafe extern "C" fn spk_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}
