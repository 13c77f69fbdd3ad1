//! Spike container, little-endian throughout:
//!
//! ```text
//! magic "SPKC" | version u8 | flags u8 | fs u32 | signal_len u64 | bank_hash u64
//! | spike_count u64 | gain f64 | C f64 | M f64 | delta f64        (66 bytes)
//! records: kernel_id u16 | sample_index u64 [| threshold f64 if flags & 1]
//! ```
//!
//! Without stored thresholds the reader replays the threshold model from the
//! header parameters, which reproduces the encoder's values bit for bit.

use std::path::Path;

use crate::encoder::{replay_thresholds, Spike, SpikeTrain, ThresholdParams};
use crate::error::{Error, Result};
use crate::kernelbank::KernelBank;

pub const MAGIC: &[u8; 4] = b"SPKC";
pub const VERSION: u8 = 1;
pub const FLAG_THRESHOLDS: u8 = 1;
pub const HEADER_LEN: usize = 66;

pub const fn record_len(with_thresholds: bool) -> usize {
    if with_thresholds {
        18
    } else {
        10
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeFile {
    pub train: SpikeTrain,
    pub params: ThresholdParams,
    /// Scale applied to the signal before encoding; decoders divide by it.
    pub gain: f64,
    pub thresholds_stored: bool,
}

impl SpikeFile {
    pub fn check_bank(&self, bank: &KernelBank) -> Result<()> {
        if self.train.bank_hash != bank.bank_hash() {
            return Err(Error::Compat {
                expected: self.train.bank_hash,
                found: bank.bank_hash(),
            });
        }
        if self.train.fs != bank.fs() {
            return Err(Error::Format(format!(
                "spike file sampled at {} Hz, bank at {} Hz",
                self.train.fs,
                bank.fs()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let train = &self.train;
        if !train.is_sorted() {
            return Err(Error::Input("spike train is not sorted by (sample_index, kernel_id)".into()));
        }
        self.params.validate()?;
        let mut out = Vec::with_capacity(HEADER_LEN + train.len() * record_len(self.thresholds_stored));
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(if self.thresholds_stored { FLAG_THRESHOLDS } else { 0 });
        out.extend_from_slice(&train.fs.to_le_bytes());
        out.extend_from_slice(&(train.signal_len as u64).to_le_bytes());
        out.extend_from_slice(&train.bank_hash.to_le_bytes());
        out.extend_from_slice(&(train.len() as u64).to_le_bytes());
        for v in [self.gain, self.params.baseline, self.params.ahp_jump, self.params.refractory] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for s in &train.spikes {
            let id = u16::try_from(s.kernel_id)
                .map_err(|_| Error::Input(format!("kernel id {} does not fit in u16", s.kernel_id)))?;
            out.extend_from_slice(&id.to_le_bytes());
            out.extend_from_slice(&s.sample_index.to_le_bytes());
            if self.thresholds_stored {
                out.extend_from_slice(&s.threshold.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, not a spike file".into()));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported spike file version {version}")));
        }
        let flags = r.u8()?;
        if flags & !FLAG_THRESHOLDS != 0 {
            return Err(Error::Format(format!("unknown flag bits {flags:#04x}")));
        }
        let stored = flags & FLAG_THRESHOLDS != 0;
        let fs = r.u32()?;
        if fs == 0 {
            return Err(Error::Format("sample rate is zero".into()));
        }
        let signal_len = usize::try_from(r.u64()?).map_err(|_| Error::Format("signal length overflows".into()))?;
        let bank_hash = r.u64()?;
        let count = r.u64()?;
        let gain = r.f64()?;
        let params = ThresholdParams {
            baseline: r.f64()?,
            ahp_jump: r.f64()?,
            refractory: r.f64()?,
        };
        params
            .validate()
            .map_err(|e| Error::Format(format!("header threshold parameters: {e}")))?;
        if !(gain.is_finite() && gain > 0.0) {
            return Err(Error::Format(format!("gain {gain} is not positive")));
        }
        let expected = (count as u128) * record_len(stored) as u128;
        if expected != (bytes.len() - r.pos) as u128 {
            return Err(Error::Format(format!(
                "{count} records need {expected} bytes, file has {}",
                bytes.len() - r.pos
            )));
        }
        let mut spikes = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let kernel_id = r.u16()? as usize;
            let sample_index = r.u64()?;
            let threshold = if stored { r.f64()? } else { 0.0 };
            spikes.push(Spike {
                kernel_id,
                sample_index,
                threshold,
            });
        }
        let mut train = SpikeTrain {
            spikes,
            fs,
            signal_len,
            bank_hash,
        };
        if !train.is_sorted() {
            return Err(Error::Format("records are not sorted by (sample_index, kernel_id)".into()));
        }
        if !stored {
            let m = train.spikes.iter().map(|s| s.kernel_id + 1).max().unwrap_or(0);
            let thr = replay_thresholds(&train, m, &params);
            for (s, t) in train.spikes.iter_mut().zip(thr) {
                s.threshold = t;
            }
        } else if train.spikes.iter().any(|s| !s.threshold.is_finite()) {
            return Err(Error::Format("non-finite stored threshold".into()));
        }
        Ok(Self {
            train,
            params,
            gain,
            thresholds_stored: stored,
        })
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

pub fn write_spikes(
    path: &Path,
    train: &SpikeTrain,
    params: &ThresholdParams,
    gain: f64,
    store_thresholds: bool,
) -> Result<()> {
    let file = SpikeFile {
        train: train.clone(),
        params: *params,
        gain,
        thresholds_stored: store_thresholds,
    };
    std::fs::write(path, file.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn read_spikes(path: &Path) -> Result<SpikeFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    SpikeFile::from_bytes(&bytes)
}
