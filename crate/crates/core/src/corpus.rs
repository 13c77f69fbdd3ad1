//! Evaluation corpus: user WAV files plus deterministic synthetic snippets.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sigio::read_wav;

pub const CORPUS_SIZE: usize = 10;
pub const SYNTH_FS: u32 = 16_000;
pub const SYNTH_SECONDS: f64 = 0.5;
/// Directory of extra PCM16 mono WAVs picked up by [`load_corpus`].
pub const CORPUS_ENV: &str = "SPIKECODEC_CORPUS_DIR";

const PEAK: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct Snippet {
    pub name: String,
    pub samples: Vec<f64>,
    pub fs: u32,
}

pub const SYNTH_NAMES: [&str; CORPUS_SIZE] = [
    "tone440", "harmonic220", "chirp", "am1k", "dyad", "plucks", "noiseband", "vowel", "fm", "clicks",
];

fn normalize(mut x: Vec<f64>) -> Vec<f64> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= PEAK / peak);
    }
    x
}

// 10 ms raised-cosine fades keep onsets from being pure discontinuities.
fn fade(x: &mut [f64], fs: u32) {
    let n = ((0.01 * fs as f64) as usize).min(x.len() / 2);
    let len = x.len();
    for i in 0..n {
        let g = 0.5 - 0.5 * (PI * i as f64 / n as f64).cos();
        x[i] *= g;
        x[len - 1 - i] *= g;
    }
}

/// Synthetic snippet `index` of [`SYNTH_NAMES`].
pub fn synth_snippet(index: usize, fs: u32, seconds: f64) -> Snippet {
    let n = (seconds * fs as f64).round() as usize;
    let f = fs as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + index as u64);
    let time = |i: usize| i as f64 / f;
    let mut x: Vec<f64> = match index {
        0 => (0..n).map(|i| (2.0 * PI * 440.0 * time(i)).sin()).collect(),
        1 => (0..n)
            .map(|i| (1..=8).map(|k| (2.0 * PI * 220.0 * k as f64 * time(i)).sin() / k as f64).sum())
            .collect(),
        2 => {
            let (f0, f1) = (200.0, 4000.0);
            (0..n)
                .map(|i| {
                    let t = time(i);
                    (2.0 * PI * (f0 * t + 0.5 * (f1 - f0) / seconds * t * t)).sin()
                })
                .collect()
        }
        3 => (0..n)
            .map(|i| {
                let t = time(i);
                (0.6 + 0.4 * (2.0 * PI * 8.0 * t).sin()) * (2.0 * PI * 1000.0 * t).sin()
            })
            .collect(),
        4 => (0..n)
            .map(|i| {
                let t = time(i);
                (2.0 * PI * 600.0 * t).sin() + 0.7 * (2.0 * PI * 1500.0 * t).sin()
            })
            .collect(),
        5 => {
            let notes = [330.0, 392.0, 494.0, 587.0];
            let step = n / notes.len();
            (0..n)
                .map(|i| {
                    let k = (i / step).min(notes.len() - 1);
                    let t = time(i - k * step);
                    (-t * 12.0).exp()
                        * ((2.0 * PI * notes[k] * t).sin() + 0.4 * (2.0 * PI * 2.0 * notes[k] * t).sin())
                })
                .collect()
        }
        6 => {
            let parts: Vec<(f64, f64, f64)> = (0..40)
                .map(|_| {
                    (
                        rng.random_range(300.0..3000.0),
                        rng.random_range(0.0..2.0 * PI),
                        rng.random_range(0.2..1.0),
                    )
                })
                .collect();
            (0..n)
                .map(|i| parts.iter().map(|&(fr, ph, a)| a * (2.0 * PI * fr * time(i) + ph).sin()).sum())
                .collect()
        }
        7 => {
            // Harmonics of 120 Hz shaped by formants near 700, 1200 and 2600 Hz.
            let formants = [(700.0, 130.0, 1.0), (1200.0, 150.0, 0.6), (2600.0, 200.0, 0.3)];
            let weights: Vec<f64> = (1..=30)
                .map(|k| {
                    let h = 120.0 * k as f64;
                    formants.iter().map(|&(fc, bw, g)| g / (1.0 + ((h - fc) / bw).powi(2))).sum()
                })
                .collect();
            (0..n)
                .map(|i| {
                    weights
                        .iter()
                        .enumerate()
                        .map(|(k, w)| w * (2.0 * PI * 120.0 * (k + 1) as f64 * time(i)).sin())
                        .sum()
                })
                .collect()
        }
        8 => (0..n)
            .map(|i| {
                let t = time(i);
                (2.0 * PI * 800.0 * t + 3.0 * (2.0 * PI * 5.0 * t).sin()).sin()
            })
            .collect(),
        9 => {
            let period = (0.1 * f) as usize;
            (0..n)
                .map(|i| {
                    let t = time(i % period);
                    (-t * 60.0).exp() * (2.0 * PI * 2000.0 * t).sin()
                })
                .collect()
        }
        _ => panic!("synthetic snippet index {index} out of range"),
    };
    fade(&mut x, fs);
    Snippet {
        name: SYNTH_NAMES[index].to_string(),
        samples: normalize(x),
        fs,
    }
}

pub fn synthetic_corpus() -> Vec<Snippet> {
    (0..CORPUS_SIZE).map(|i| synth_snippet(i, SYNTH_FS, SYNTH_SECONDS)).collect()
}

fn wav_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Up to [`CORPUS_SIZE`] WAVs from `dir` (or `$SPIKECODEC_CORPUS_DIR`), topped up
/// with synthetic snippets. Unreadable user files are skipped with a warning.
pub fn load_corpus(dir: Option<&Path>) -> Result<Vec<Snippet>> {
    let env_dir = std::env::var_os(CORPUS_ENV).map(PathBuf::from);
    let dir = dir.map(Path::to_path_buf).or(env_dir);
    let mut out = Vec::new();
    if let Some(dir) = dir {
        for path in wav_paths(&dir)? {
            if out.len() == CORPUS_SIZE {
                break;
            }
            match read_wav(&path) {
                Ok((samples, fs)) if !samples.is_empty() => out.push(Snippet {
                    name: path.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                    samples,
                    fs,
                }),
                Ok(_) => log::warn!("{}: empty, skipped", path.display()),
                Err(e) => log::warn!("{e}; skipped"),
            }
        }
    }
    let mut i = 0;
    while out.len() < CORPUS_SIZE {
        out.push(synth_snippet(i, SYNTH_FS, SYNTH_SECONDS));
        i += 1;
    }
    Ok(out)
}
