//! Ideal-ratio-mask oracle: the reachable ceiling for any masking system
//! on this corpus.

use crate::corpus::MixtureExample;
use crate::dsp::{istft, stft, DspConfig, Spectrogram, Waveform};

use super::report::{EvalReport, SystemLabel};
use super::sdr::sdr;
use super::EvalError;

/// Separate each mixture with the oracle mask |S| / (|S| + |N|) per
/// time-frequency bin (mixture phase), then score like any other system.
pub fn ideal_mask_oracle(
    test_mixtures: &[MixtureExample],
    dsp: &DspConfig,
) -> Result<EvalReport, EvalError> {
    let mut scored = Vec::with_capacity(test_mixtures.len());
    for ex in test_mixtures {
        let estimate = apply_ideal_mask(ex, dsp)?;
        scored.push((ex.target_class, sdr(&ex.target, &estimate)?));
    }
    EvalReport::from_scored(scored, SystemLabel::Oracle, 0, 0)
}

/// One oracle pass: mask the mixture spectrum by the true target share.
pub fn apply_ideal_mask(ex: &MixtureExample, dsp: &DspConfig) -> Result<Waveform, EvalError> {
    let interferer: Vec<f32> =
        ex.mixture.samples.iter().zip(&ex.target.samples).map(|(&m, &t)| m - t).collect();
    let interferer = Waveform::new(interferer, ex.mixture.sample_rate);
    let spec_mix = stft(&ex.mixture, dsp.n_fft, dsp.hop)?;
    let spec_t = stft(&ex.target, dsp.n_fft, dsp.hop)?;
    // an all-zero interferer has no spectrogram; its magnitudes are zero
    let mag_i = match interferer {
        Ok(w) => stft(&w, dsp.n_fft, dsp.hop)?.magnitude(),
        Err(_) => vec![0.0; spec_t.real.len()],
    };
    let mag_t = spec_t.magnitude();

    let mut real = spec_mix.real.clone();
    let mut imag = spec_mix.imag.clone();
    for i in 0..real.len() {
        let mask = (mag_t[i] as f64 / (mag_t[i] as f64 + mag_i[i] as f64 + 1e-12)) as f32;
        real[i] *= mask;
        imag[i] *= mask;
    }
    let masked = Spectrogram { real, imag, ..spec_mix };
    Ok(istft(&masked, ex.target.len(), ex.target.sample_rate)?)
}
