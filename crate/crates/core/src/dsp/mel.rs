//! Mel filterbank and log-mel spectrogram.

use super::stft::{stft, Waveform};
use super::{DspConfig, DspError};

/// Log-compressed mel energies, frames x n_mels row-major.
#[derive(Debug, Clone)]
pub struct MelSpec {
    pub data: Vec<f32>,
    pub frames: usize,
    pub n_mels: usize,
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filterbank on the mel scale, n_mels x (n_fft/2 + 1)
/// row-major. Rows are unit-peak triangles spanning [0, sr/2].
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Result<Vec<f32>, DspError> {
    let bins = n_fft / 2 + 1;
    if n_mels == 0 || n_mels >= n_fft / 2 {
        return Err(DspError::DegenerateBand(0));
    }
    let nyquist = sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    // n_mels + 2 anchor points: left edge, n_mels centers, right edge
    let anchors: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / n_fft as f64;

    let mut fb = vec![0.0f32; n_mels * bins];
    for m in 0..n_mels {
        let (lo, center, hi) = (anchors[m], anchors[m + 1], anchors[m + 2]);
        if center - lo < bin_hz * 0.5 || hi - center < bin_hz * 0.5 {
            return Err(DspError::DegenerateBand(m));
        }
        let mut any = false;
        for b in 0..bins {
            let f = b as f64 * bin_hz;
            let rise = (f - lo) / (center - lo);
            let fall = (hi - f) / (hi - center);
            let v = rise.min(fall).max(0.0);
            if v > 0.0 {
                any = true;
            }
            fb[m * bins + b] = v as f32;
        }
        if !any {
            return Err(DspError::DegenerateBand(m));
        }
    }
    Ok(fb)
}

/// log(mel_filterbank · |stft|² + 1e-10), natural log.
pub fn mel_spectrogram(x: &Waveform, cfg: &DspConfig) -> Result<MelSpec, DspError> {
    let spec = stft(x, cfg.n_fft, cfg.hop)?;
    let fb = mel_filterbank(cfg.n_mels, cfg.n_fft, cfg.sample_rate)?;
    let bins = spec.bins;
    let mut data = vec![0.0f32; spec.frames * cfg.n_mels];
    for f in 0..spec.frames {
        for m in 0..cfg.n_mels {
            let mut acc = 0.0f64;
            for b in 0..bins {
                let re = spec.real[f * bins + b] as f64;
                let im = spec.imag[f * bins + b] as f64;
                acc += fb[m * bins + b] as f64 * (re * re + im * im);
            }
            data[f * cfg.n_mels + m] = (acc + 1e-10).ln() as f32;
        }
    }
    Ok(MelSpec { data, frames: spec.frames, n_mels: cfg.n_mels })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOG_FLOOR: f32 = -23.025851; // ln(1e-10)

    fn sine(freq: f64, len: usize, sr: u32, amp: f64) -> Waveform {
        let samples = (0..len)
            .map(|i| (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin()) as f32)
            .collect();
        Waveform::new(samples, sr).unwrap()
    }

    #[test]
    fn rows_are_nonnegative_and_nonzero() {
        let fb = mel_filterbank(32, 256, 8000).unwrap();
        let bins = 129;
        for m in 0..32 {
            let row = &fb[m * bins..(m + 1) * bins];
            assert!(row.iter().all(|&v| v >= 0.0));
            let sum: f32 = row.iter().sum();
            assert!(sum > 0.0, "row {m} is all-zero");
        }
    }

    #[test]
    fn filter_peaks_increase_monotonically() {
        let fb = mel_filterbank(32, 256, 8000).unwrap();
        let bins = 129;
        let mut last_peak = 0usize;
        for m in 0..32 {
            let row = &fb[m * bins..(m + 1) * bins];
            let peak = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            if m > 0 {
                assert!(peak > last_peak, "filter {m} peak {peak} <= {last_peak}");
            }
            last_peak = peak;
        }
    }

    #[test]
    fn tone_energy_concentrates_in_overlapping_filters() {
        let cfg = DspConfig::default();
        let x = sine(1200.0, 8000, 8000, 0.5);
        let mel = mel_spectrogram(&x, &cfg).unwrap();
        // average linear-domain mel energy per filter over interior frames
        let mut energy = vec![0.0f64; cfg.n_mels];
        for f in 4..mel.frames - 4 {
            for (m, e) in energy.iter_mut().enumerate() {
                *e += (mel.data[f * cfg.n_mels + m] as f64).exp();
            }
        }
        let total: f64 = energy.iter().sum();
        let mut sorted = energy.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let top2 = sorted[0] + sorted[1];
        assert!(top2 / total > 0.9, "top-2 filters hold {:.3} of energy", top2 / total);
    }

    #[test]
    fn degenerate_band_rejected() {
        match mel_filterbank(120, 256, 8000) {
            Err(DspError::DegenerateBand(_)) => {}
            other => panic!("expected DegenerateBand, got {other:?}"),
        }
    }

    #[test]
    fn silence_hits_log_floor() {
        let cfg = DspConfig::default();
        let x = Waveform::new(vec![0.0; 8000], 8000).unwrap();
        let mel = mel_spectrogram(&x, &cfg).unwrap();
        assert_eq!(mel.frames, 126);
        for &v in &mel.data {
            assert!((v - LOG_FLOOR).abs() < 1e-4, "{v}");
        }
    }

    #[test]
    fn tenfold_amplitude_raises_log_energy_by_ln_100() {
        let cfg = DspConfig::default();
        let quiet = sine(1000.0, 8000, 8000, 0.05);
        let loud = sine(1000.0, 8000, 8000, 0.5);
        let mq = mel_spectrogram(&quiet, &cfg).unwrap();
        let ml = mel_spectrogram(&loud, &cfg).unwrap();
        let expected = 100f32.ln();
        // check cells where the signal clearly dominates the 1e-10 floor
        let mut checked = 0;
        for i in 0..mq.data.len() {
            if mq.data[i] > -12.0 {
                let delta = ml.data[i] - mq.data[i];
                assert!((delta - expected).abs() < 0.05, "delta {delta} vs {expected}");
                checked += 1;
            }
        }
        assert!(checked > 100, "too few cells above the floor: {checked}");
    }

    #[test]
    fn shape_is_frames_by_mels() {
        let cfg = DspConfig::default();
        let x = sine(500.0, 8000, 8000, 0.3);
        let mel = mel_spectrogram(&x, &cfg).unwrap();
        assert_eq!(mel.frames, 1 + 8000 / cfg.hop);
        assert_eq!(mel.n_mels, cfg.n_mels);
        assert_eq!(mel.data.len(), mel.frames * mel.n_mels);
    }

    #[test]
    fn mel_spectrogram_ignores_input_phase() {
        let sr = 8000;
        let f = 1000.0;
        let a: Vec<f32> = (0..8000)
            .map(|i| (0.5 * (2.0 * std::f64::consts::PI * f * i as f64 / sr as f64).sin()) as f32)
            .collect();
        let b: Vec<f32> = (0..8000)
            .map(|i| (0.5 * (2.0 * std::f64::consts::PI * f * i as f64 / sr as f64 + 1.1).sin()) as f32)
            .collect();
        let cfg = DspConfig::default();
        let ma = mel_spectrogram(&Waveform::new(a, sr).unwrap(), &cfg).unwrap();
        let mb = mel_spectrogram(&Waveform::new(b, sr).unwrap(), &cfg).unwrap();
        // compare interior frames, away from edge effects
        for fr in 8..ma.frames - 8 {
            for m in 0..cfg.n_mels {
                let va = ma.data[fr * cfg.n_mels + m];
                let vb = mb.data[fr * cfg.n_mels + m];
                if va > -12.0 {
                    assert!((va - vb).abs() < 0.2, "frame {fr} mel {m}: {va} vs {vb}");
                }
            }
        }
    }
}
