//! Signal-processing frontend: STFT, inverse STFT, mel filterbank, log-mel
//! spectrogram, and WAV file I/O.
//!
//! The pipeline configuration is deliberately small: 8 kHz audio, one
//! second per model input (8000 samples), 256-sample Hann windows at a
//! 64-sample hop (exact overlap-add reconstruction), and 32 mel bands.

mod fft;
mod mel;
mod stft;
mod wav;

pub use fft::Fft;
pub use mel::{hz_to_mel, mel_filterbank, mel_spectrogram, mel_to_hz, MelSpec};
pub use stft::{
    frame_count, hann, istft, ola_norm, ola_norm_f32, stft, synthesis_bases, Spectrogram, Waveform,
};
pub use wav::{read_wav, write_wav};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Analysis parameters shared by every stage of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DspConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig { sample_rate: 8000, n_fft: 256, hop: 64, n_mels: 32 }
    }
}

impl DspConfig {
    /// Model input length in samples: one second at the configured rate.
    pub fn clip_len(&self) -> usize {
        self.sample_rate as usize
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn frames(&self) -> usize {
        frame_count(self.clip_len(), self.hop)
    }
}

#[derive(Debug, Error)]
pub enum DspError {
    #[error("input too short: {len} samples, need at least {need}")]
    InputTooShort { len: usize, need: usize },
    #[error("window {n_fft} with hop {hop} leaves overlap-add gaps; reconstruction impossible")]
    NonCola { n_fft: usize, hop: usize },
    #[error("degenerate mel band {0}: adjacent centers collide on the bin grid")]
    DegenerateBand(usize),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}
