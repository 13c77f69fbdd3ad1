//! Encode/decode/evaluate over a corpus and a grid of refractory periods.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::corpus::Snippet;
use crate::decode_batch::decode;
use crate::decode_window::stream_decode;
use crate::encoder::{encode_with, EncodeOptions, ThresholdParams};
use crate::error::{Error, Result};
use crate::kernelbank::{build_bank, cross_corr_table, default_gammatones, CorrTable, KernelBank, KernelSpec};
use crate::metrics::snr;

pub const CSV_HEADER: &str = "snippet,refractory,C,M,w,snr_db,nyq_frac,enc_ms,dec_ms";
/// Refractory endpoints, in seconds.
pub const DEFAULT_GRID: [f64; 6] = [0.25, 0.1, 0.04, 0.02, 0.01, 0.005];
/// Window sizes above this need an explicit opt-in.
pub const DEFAULT_WINDOW_CAP: usize = 2000;
pub const HARD_WINDOW_MAX: usize = 15_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowRule {
    Fixed(usize),
    /// `w = round(k / δ)`, clamped to `[1, HARD_WINDOW_MAX]`.
    InverseRefractory(f64),
    Batch,
}

impl WindowRule {
    /// `None` means batch decoding.
    pub fn window_for(&self, refractory: f64) -> Option<usize> {
        match *self {
            WindowRule::Fixed(w) => Some(w),
            WindowRule::InverseRefractory(k) => Some(((k / refractory).round() as usize).clamp(1, HARD_WINDOW_MAX)),
            WindowRule::Batch => None,
        }
    }
}

/// Rejects windows beyond the default cap unless `allow_large` is set.
pub fn check_window(w: usize, allow_large: bool) -> Result<()> {
    let limit = if allow_large { HARD_WINDOW_MAX } else { DEFAULT_WINDOW_CAP };
    if w == 0 {
        return Err(Error::Config("window size must be >= 1".into()));
    }
    if w > limit {
        return Err(Error::TooLarge {
            what: "window size",
            size: w,
            limit,
            hint: "pass --large-window to allow windows up to 15000",
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub grid: Vec<f64>,
    pub baseline: f64,
    pub ahp_jump: f64,
    pub window: WindowRule,
    pub store_measured: bool,
    /// Zero the timing columns, making the CSV byte-identical across runs.
    pub timing: bool,
    /// Gammatone count for the default bank when `bank` is `None`.
    pub kernels: usize,
    pub bank: Option<Vec<KernelSpec>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grid: DEFAULT_GRID.to_vec(),
            baseline: 1e-3,
            ahp_jump: 0.05,
            window: WindowRule::Fixed(100),
            store_measured: false,
            timing: true,
            kernels: 32,
            bank: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub snippet: String,
    pub refractory: f64,
    pub baseline: f64,
    pub ahp_jump: f64,
    /// 0 for batch decoding.
    pub w: usize,
    pub snr_db: f64,
    pub nyq_frac: f64,
    pub enc_ms: f64,
    pub dec_ms: f64,
}

impl SweepRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6},{:.3},{:.3}",
            self.snippet,
            self.refractory,
            self.baseline,
            self.ahp_jump,
            self.w,
            fmt_db(self.snr_db),
            self.nyq_frac,
            self.enc_ms,
            self.dec_ms
        )
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.4}")
    }
}

struct Prepared {
    bank: KernelBank,
    table: CorrTable,
}

fn prepare_banks(corpus: &[Snippet], cfg: &SweepConfig) -> Result<BTreeMap<u32, Prepared>> {
    let mut out = BTreeMap::new();
    for s in corpus {
        if out.contains_key(&s.fs) {
            continue;
        }
        let specs = match &cfg.bank {
            Some(specs) => specs.clone(),
            None => default_gammatones(cfg.kernels, s.fs)
                .into_iter()
                .map(KernelSpec::Gammatone)
                .collect(),
        };
        let bank = build_bank(&specs, s.fs)?;
        let table = cross_corr_table(&bank);
        out.insert(s.fs, Prepared { bank, table });
    }
    Ok(out)
}

fn run_cell(s: &Snippet, refractory: f64, prep: &Prepared, cfg: &SweepConfig) -> Result<SweepRow> {
    let params = ThresholdParams::new(cfg.baseline, cfg.ahp_jump, refractory)?;
    let t0 = Instant::now();
    let train = encode_with(
        &s.samples,
        &prep.bank,
        &params,
        EncodeOptions {
            store_measured: cfg.store_measured,
        },
    )?;
    let enc_ms = t0.elapsed().as_secs_f64() * 1e3;
    let t1 = Instant::now();
    let w = cfg.window.window_for(refractory);
    let recon = match w {
        Some(w) => stream_decode(&train, &prep.bank, &prep.table, w)?.0,
        None => decode(&train, &prep.bank, &prep.table)?,
    };
    let dec_ms = t1.elapsed().as_secs_f64() * 1e3;
    let snr_db = match snr(&s.samples, &recon.samples) {
        Ok(v) => v,
        Err(Error::UndefinedSnr) => f64::NAN,
        Err(e) => return Err(e),
    };
    let (enc_ms, dec_ms) = if cfg.timing { (enc_ms, dec_ms) } else { (0.0, 0.0) };
    Ok(SweepRow {
        snippet: s.name.clone(),
        refractory,
        baseline: cfg.baseline,
        ahp_jump: cfg.ahp_jump,
        w: w.unwrap_or(0),
        snr_db,
        nyq_frac: train.len() as f64 / s.samples.len().max(1) as f64,
        enc_ms,
        dec_ms,
    })
}

/// Runs every `(snippet, δ)` cell. Failed cells are logged and left out. Rows
/// come back in corpus order, then by decreasing δ.
pub fn run_sweep(corpus: &[Snippet], cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.grid.is_empty() {
        return Err(Error::Config("empty refractory grid".into()));
    }
    let banks = prepare_banks(corpus, cfg)?;
    let mut grid = cfg.grid.clone();
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();
    let cells: Vec<(usize, usize)> = (0..corpus.len())
        .flat_map(|i| (0..grid.len()).map(move |g| (i, g)))
        .collect();
    let mut rows: Vec<((usize, usize), SweepRow)> = cells
        .par_iter()
        .filter_map(|&(i, g)| {
            let s = &corpus[i];
            match run_cell(s, grid[g], &banks[&s.fs], cfg) {
                Ok(row) => Some(((i, g), row)),
                Err(e) => {
                    log::warn!("{} at refractory {}: {e}", s.name, grid[g]);
                    None
                }
            }
        })
        .collect();
    rows.sort_by_key(|(k, _)| *k);
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn write_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

/// Median spike rate and SNR per refractory value, ordered by rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub refractory: f64,
    pub median_nyq_frac: f64,
    pub median_snr_db: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn rate_curve(rows: &[SweepRow]) -> Vec<CurvePoint> {
    let mut by_delta: BTreeMap<u64, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let e = by_delta.entry(r.refractory.to_bits()).or_insert((r.refractory, Vec::new(), Vec::new()));
        e.1.push(r.nyq_frac);
        if r.snr_db.is_finite() {
            e.2.push(r.snr_db);
        }
    }
    let mut pts: Vec<CurvePoint> = by_delta
        .into_values()
        .map(|(d, rates, snrs)| CurvePoint {
            refractory: d,
            median_nyq_frac: median(rates),
            median_snr_db: median(snrs),
        })
        .collect();
    pts.sort_by(|a, b| a.median_nyq_frac.total_cmp(&b.median_nyq_frac));
    pts
}

/// Spearman rank correlation between rate and SNR along the curve.
pub fn trend(curve: &[CurvePoint]) -> f64 {
    let x: Vec<f64> = curve.iter().map(|p| p.median_nyq_frac).collect();
    let y: Vec<f64> = curve.iter().map(|p| p.median_snr_db).collect();
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    };
    let (rx, ry) = (rank(&x), rank(&y));
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

/// Gnuplot data block: one `nyq_frac snr_db` pair per row, blank line between snippets.
pub fn gnuplot_summary(rows: &[SweepRow]) -> String {
    let mut out = String::from("# nyq_frac snr_db (one block per snippet)\n");
    let mut last: Option<&str> = None;
    for r in rows {
        if last.is_some_and(|l| l != r.snippet) {
            out.push_str("\n\n");
        }
        if last != Some(r.snippet.as_str()) {
            out.push_str(&format!("# {}\n", r.snippet));
        }
        out.push_str(&format!("{:.6} {}\n", r.nyq_frac, fmt_db(r.snr_db)));
        last = Some(&r.snippet);
    }
    out
}
