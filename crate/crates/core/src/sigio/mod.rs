//! WAV and spike-file I/O plus the synthetic in-span signal generator.

pub mod spikefile;
pub mod synth;
pub mod wav;

pub use spikefile::{read_spikes, write_spikes, SpikeFile};
pub use synth::{random_synth_spec, synth_in_span, SynthComponent, SynthSpec};
pub use wav::{read_wav, write_wav};
