//! Command-line front end. `run` returns the process exit code:
//! 0 success, 1 usage or configuration, 2 format or I/O, 3 numeric or failed check.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::load_corpus;
use crate::decode_batch::{decode, Reconstruction};
use crate::decode_window::stream_decode_traced;
use crate::encoder::{encode_with, EncodeOptions, ThresholdParams};
use crate::error::{Error, Result};
use crate::kernelbank::{build_bank, cross_corr_table, default_gammatones, load_bank_spec, KernelBank, KernelSpec};
use crate::metrics::{evaluate, StageTimes};
use crate::sigio::{random_synth_spec, read_spikes, read_wav, synth_in_span, write_spikes, write_wav, SpikeFile};
use crate::sweep::{check_window, gnuplot_summary, rate_curve, run_sweep, trend, write_csv, SweepConfig, WindowRule};
use crate::validate::{format_report, random_bounded_signal, run_checks};

pub const THREADS_ENV: &str = "SPIKECODEC_THREADS";

pub const DEFAULT_C: f64 = 1e-3;
pub const DEFAULT_M: f64 = 0.05;
pub const DEFAULT_DELTA: f64 = 0.005;
pub const DEFAULT_WINDOW: usize = 100;
pub const DEFAULT_KERNELS: usize = 32;

#[derive(Debug, Parser)]
#[command(name = "spikecodec", version, about = "Spike-based audio codec: encode, decode, evaluate")]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct BankArgs {
    /// Kernel bank spec file (`gammatone f=... n=... b=... phase=...` lines).
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Size of the default ERB-spaced gammatone bank when --bank is absent.
    #[arg(long, default_value_t = DEFAULT_KERNELS)]
    pub kernels: usize,
}

impl BankArgs {
    fn specs(&self, fs: u32) -> Result<Vec<KernelSpec>> {
        match &self.bank {
            Some(path) => load_bank_spec(path),
            None => Ok(default_gammatones(self.kernels, fs).into_iter().map(KernelSpec::Gammatone).collect()),
        }
    }

    fn build(&self, fs: u32) -> Result<KernelBank> {
        build_bank(&self.specs(fs)?, fs)
    }
}

#[derive(Debug, Args, Clone, Copy)]
pub struct ThresholdArgs {
    /// Baseline threshold C.
    #[arg(long = "C", default_value_t = DEFAULT_C)]
    pub c: f64,
    /// After-hyperpolarization jump M.
    #[arg(long = "M", default_value_t = DEFAULT_M)]
    pub m: f64,
    /// Refractory period in seconds.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
}

impl ThresholdArgs {
    fn params(&self) -> Result<ThresholdParams> {
        ThresholdParams::new(self.c, self.m, self.delta)
    }
}

#[derive(Debug, Args, Clone)]
pub struct DecodeArgs {
    /// Window size of the streaming decoder.
    #[arg(long, default_value_t = DEFAULT_WINDOW, conflicts_with = "batch")]
    pub window: usize,
    /// Solve the full Gram system instead (at most 20000 spikes).
    #[arg(long)]
    pub batch: bool,
    /// Allow windows above 2000 (up to 15000).
    #[arg(long)]
    pub large_window: bool,
    /// Write one JSON line per decoded spike to this file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode a PCM16 mono WAV into a spike file.
    Encode {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        bank: BankArgs,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        /// Store measured convolution values as thresholds (flag bit 0).
        #[arg(long)]
        store_measured: bool,
        /// Skip peak normalization.
        #[arg(long)]
        no_normalize: bool,
    },
    /// Decode a spike file into a WAV.
    Decode {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        bank: BankArgs,
        #[command(flatten)]
        decode: DecodeArgs,
        /// Print the SNR against this reference WAV.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Encode, decode and print an evaluation report as JSON.
    Evaluate {
        input: PathBuf,
        #[command(flatten)]
        bank: BankArgs,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        #[command(flatten)]
        decode: DecodeArgs,
        #[arg(long)]
        store_measured: bool,
        /// Also write the report here.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Sweep refractory periods over a corpus and write a CSV.
    Sweep {
        /// Directory of WAVs; synthetic snippets fill the corpus up to 10.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        bank: BankArgs,
        /// Comma-separated refractory periods in seconds.
        #[arg(long, value_delimiter = ',', default_values_t = crate::sweep::DEFAULT_GRID.to_vec())]
        grid: Vec<f64>,
        #[arg(long = "C", default_value_t = DEFAULT_C)]
        c: f64,
        #[arg(long = "M", default_value_t = DEFAULT_M)]
        m: f64,
        /// `fixed:<w>`, `inverse:<k>` (w = k/δ) or `batch`.
        #[arg(long, default_value = "fixed:100")]
        window_rule: String,
        #[arg(long)]
        large_window: bool,
        #[arg(long)]
        store_measured: bool,
        /// Write zeros in the timing columns so reruns are byte-identical.
        #[arg(long)]
        no_timing: bool,
        /// Gnuplot data file of SNR against spike rate.
        #[arg(long)]
        gnuplot: Option<PathBuf>,
    },
    /// Write a random in-span signal and its forced-threshold spike file.
    Synth {
        #[arg(short, long)]
        output: PathBuf,
        /// Spike file with the forced thresholds.
        #[arg(long)]
        spikes: Option<PathBuf>,
        #[command(flatten)]
        bank: BankArgs,
        #[arg(long, default_value_t = 16_000)]
        fs: u32,
        #[arg(long, default_value_t = 50)]
        components: usize,
        /// Length in samples.
        #[arg(long, default_value_t = 16_000)]
        length: usize,
    },
    /// Run the numerical checks and print PASS/FAIL lines.
    Validate {
        /// Run only the named check (repeatable).
        #[arg(long)]
        only: Vec<String>,
    },
    /// Time encoding and windowed decoding across signal lengths.
    Bench {
        /// Comma-separated lengths in seconds.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0])]
        lengths: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        window: usize,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = 16_000)]
        fs: u32,
        #[command(flatten)]
        bank: BankArgs,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn out_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn decode_with(train_file: &SpikeFile, bank: &KernelBank, args: &DecodeArgs) -> Result<Reconstruction> {
    train_file.check_bank(bank)?;
    let table = cross_corr_table(bank);
    let mut recon = if args.batch {
        decode(&train_file.train, bank, &table)?
    } else {
        check_window(args.window, args.large_window)?;
        let mut trace_file = args.trace.as_deref().map(create).transpose()?;
        let (r, diag) = stream_decode_traced(
            &train_file.train,
            bank,
            &table,
            args.window,
            trace_file.as_mut().map(|f| f as &mut dyn Write),
        )?;
        if let Some(f) = trace_file.as_mut() {
            f.flush().map_err(|e| Error::io(args.trace.as_deref().unwrap(), e))?;
        }
        if diag.skipped > 0 {
            log::warn!("{} degenerate spike(s) skipped", diag.skipped);
        }
        r
    };
    let inv = 1.0 / train_file.gain;
    recon.samples.iter_mut().for_each(|v| *v *= inv);
    Ok(recon)
}

fn normalize(x: &mut [f64]) -> f64 {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return 1.0;
    }
    let gain = 1.0 / peak;
    x.iter_mut().for_each(|v| *v *= gain);
    gain
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Encode {
            input,
            output,
            bank,
            thresholds,
            store_measured,
            no_normalize,
        } => {
            let params = thresholds.params()?;
            let (mut x, fs) = read_wav(&input)?;
            let bank = bank.build(fs)?;
            let gain = if no_normalize { 1.0 } else { normalize(&mut x) };
            let t0 = Instant::now();
            let train = encode_with(&x, &bank, &params, EncodeOptions { store_measured })?;
            let ms = t0.elapsed().as_secs_f64() * 1e3;
            write_spikes(&output, &train, &params, gain, store_measured)?;
            let nyq = if x.is_empty() { 0.0 } else { train.len() as f64 / x.len() as f64 };
            writeln!(
                out,
                "spikes {}  nyquist_fraction {nyq:.4}  kernels {}  encode_ms {ms:.1}",
                train.len(),
                bank.len()
            )
            .map_err(out_err)?;
            Ok(0)
        }
        Command::Decode {
            input,
            output,
            bank,
            decode,
            reference,
        } => {
            let file = read_spikes(&input)?;
            let bank = bank.build(file.train.fs)?;
            let t0 = Instant::now();
            let recon = decode_with(&file, &bank, &decode)?;
            let ms = t0.elapsed().as_secs_f64() * 1e3;
            write_wav(&output, &recon.samples, file.train.fs)?;
            write!(
                out,
                "spikes {}  method {:?}  condition {:.3e}  decode_ms {ms:.1}",
                file.train.len(),
                recon.solver_report.method,
                recon.solver_report.condition_estimate
            )
            .map_err(out_err)?;
            if let Some(r) = reference {
                let (x, _) = read_wav(&r)?;
                if x.len() != recon.samples.len() {
                    return Err(Error::Input(format!(
                        "reference has {} samples, reconstruction {}",
                        x.len(),
                        recon.samples.len()
                    )));
                }
                match crate::metrics::snr(&x, &recon.samples) {
                    Ok(s) => write!(out, "  snr_db {s:.2}").map_err(out_err)?,
                    Err(Error::UndefinedSnr) => write!(out, "  snr_db undefined").map_err(out_err)?,
                    Err(e) => return Err(e),
                }
            }
            writeln!(out).map_err(out_err)?;
            Ok(0)
        }
        Command::Evaluate {
            input,
            bank,
            thresholds,
            decode,
            store_measured,
            output,
        } => {
            let params = thresholds.params()?;
            let (mut x, fs) = read_wav(&input)?;
            let bank = bank.build(fs)?;
            let gain = normalize(&mut x);
            let t0 = Instant::now();
            let train = encode_with(&x, &bank, &params, EncodeOptions { store_measured })?;
            let encode_ms = t0.elapsed().as_secs_f64() * 1e3;
            let file = SpikeFile {
                train,
                params,
                gain: 1.0,
                thresholds_stored: store_measured,
            };
            let t1 = Instant::now();
            let recon = decode_with(&file, &bank, &decode)?;
            let decode_ms = t1.elapsed().as_secs_f64() * 1e3;
            let report = evaluate(&x, &file.train, &recon.samples, &params, StageTimes { encode_ms, decode_ms })?;
            let json = serde_json::to_string(&report).expect("report serializes");
            writeln!(out, "{json}").map_err(out_err)?;
            if let Some(path) = output {
                std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
            }
            log::debug!("input gain {gain}");
            Ok(0)
        }
        Command::Sweep {
            corpus,
            output,
            bank,
            grid,
            c,
            m,
            window_rule,
            large_window,
            store_measured,
            no_timing,
            gnuplot,
        } => {
            let window = parse_window_rule(&window_rule)?;
            if let WindowRule::Fixed(w) = window {
                check_window(w, large_window)?;
            }
            let corpus = load_corpus(corpus.as_deref())?;
            let cfg = SweepConfig {
                grid,
                baseline: c,
                ahp_jump: m,
                window,
                store_measured,
                timing: !no_timing,
                kernels: bank.kernels,
                bank: bank.bank.as_deref().map(load_bank_spec).transpose()?,
            };
            let rows = run_sweep(&corpus, &cfg)?;
            let mut f = create(&output)?;
            write_csv(&rows, &mut f).map_err(|e| Error::io(&output, e))?;
            f.flush().map_err(|e| Error::io(&output, e))?;
            if let Some(path) = gnuplot {
                std::fs::write(&path, gnuplot_summary(&rows)).map_err(|e| Error::io(&path, e))?;
            }
            let curve = rate_curve(&rows);
            writeln!(out, "refractory  median_nyq_frac  median_snr_db").map_err(out_err)?;
            for p in &curve {
                writeln!(out, "{:>10}  {:>15.4}  {:>13.2}", p.refractory, p.median_nyq_frac, p.median_snr_db)
                    .map_err(out_err)?;
            }
            writeln!(out, "rows {}  rate/snr rank correlation {:.3}", rows.len(), trend(&curve)).map_err(out_err)?;
            Ok(0)
        }
        Command::Synth {
            output,
            spikes,
            bank,
            fs,
            components,
            length,
        } => {
            let bank = bank.build(fs)?;
            let table = cross_corr_table(&bank);
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            let spec = random_synth_spec(&mut rng, &bank, components, length);
            let (mut x, mut train) = synth_in_span(&spec, &bank, &table)?;
            // Scale into PCM range; thresholds are linear in the signal.
            let gain = normalize(&mut x) * 0.9;
            x.iter_mut().for_each(|v| *v *= 0.9);
            train.spikes.iter_mut().for_each(|s| s.threshold *= gain);
            write_wav(&output, &x, fs)?;
            if let Some(path) = spikes {
                let params = ThresholdParams::new(DEFAULT_C, DEFAULT_M, DEFAULT_DELTA)?;
                write_spikes(&path, &train, &params, 1.0, true)?;
            }
            writeln!(out, "components {}  samples {length}", train.len()).map_err(out_err)?;
            Ok(0)
        }
        Command::Validate { only } => {
            let only = if only.is_empty() { None } else { Some(only.as_slice()) };
            let results = run_checks(cli.seed, only)?;
            write!(out, "{}", format_report(&results)).map_err(out_err)?;
            Ok(if results.iter().all(|r| r.passed) { 0 } else { 3 })
        }
        Command::Bench {
            lengths,
            window,
            runs,
            fs,
            bank,
            thresholds,
        } => bench(&lengths, window, runs.max(1), fs, &bank, &thresholds, cli.seed, out),
    }
}

pub fn parse_window_rule(text: &str) -> Result<WindowRule> {
    let bad = || Error::Config(format!("bad window rule `{text}`; use fixed:<w>, inverse:<k> or batch"));
    if text == "batch" {
        return Ok(WindowRule::Batch);
    }
    let (kind, value) = text.split_once(':').ok_or_else(bad)?;
    match kind {
        "fixed" => Ok(WindowRule::Fixed(value.parse().map_err(|_| bad())?)),
        "inverse" => {
            let k: f64 = value.parse().map_err(|_| bad())?;
            if !(k > 0.0 && k.is_finite()) {
                return Err(bad());
            }
            Ok(WindowRule::InverseRefractory(k))
        }
        _ => Err(bad()),
    }
}

#[allow(clippy::too_many_arguments)]
fn bench(
    lengths: &[f64],
    window: usize,
    runs: usize,
    fs: u32,
    bank: &BankArgs,
    thresholds: &ThresholdArgs,
    seed: u64,
    out: &mut dyn Write,
) -> Result<i32> {
    if lengths.is_empty() || lengths.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Config("--lengths must be positive".into()));
    }
    check_window(window, false)?;
    let params = thresholds.params()?;
    let bank = bank.build(fs)?;
    let table = cross_corr_table(&bank);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let longest = (lengths.iter().fold(0.0f64, |m, &l| m.max(l)) * fs as f64) as usize;
    let x = random_bounded_signal(&mut rng, longest, fs, 0.9);
    writeln!(out, "seconds  spikes  encode_ms  decode_ms  decode_ms_per_spike").map_err(out_err)?;
    let mut rows = Vec::new();
    for &l in lengths {
        let n = (l * fs as f64) as usize;
        let (mut enc, mut dec, mut spikes) = (0.0, 0.0, 0);
        for _ in 0..runs {
            let t0 = Instant::now();
            let train = encode_with(&x[..n], &bank, &params, EncodeOptions { store_measured: true })?;
            enc += t0.elapsed().as_secs_f64() * 1e3;
            let t1 = Instant::now();
            stream_decode_traced(&train, &bank, &table, window, None)?;
            dec += t1.elapsed().as_secs_f64() * 1e3;
            spikes = train.len();
        }
        let (enc, dec) = (enc / runs as f64, dec / runs as f64);
        writeln!(
            out,
            "{l:>7}  {spikes:>6}  {enc:>9.1}  {dec:>9.1}  {:>19.4}",
            dec / spikes.max(1) as f64
        )
        .map_err(out_err)?;
        rows.push((l, dec));
    }
    // Near-linear: time ratio at most 1.25× the length ratio.
    let mut ok = true;
    for w in rows.windows(2) {
        let ratio = w[1].1 / w[0].1;
        let allowed = 1.25 * w[1].0 / w[0].0;
        let pass = ratio <= allowed;
        ok &= pass;
        writeln!(
            out,
            "{} {}s -> {}s decode time ratio {ratio:.2} (limit {allowed:.2})",
            if pass { "PASS" } else { "FAIL" },
            w[0].0,
            w[1].0
        )
        .map_err(out_err)?;
    }
    Ok(if ok { 0 } else { 3 })
}

/// Applies `SPIKECODEC_THREADS` to the global rayon pool.
pub fn configure_threads() -> Result<()> {
    if let Some(v) = std::env::var_os(THREADS_ENV) {
        let v = v.to_string_lossy();
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}
