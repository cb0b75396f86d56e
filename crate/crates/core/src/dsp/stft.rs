//! Short-time Fourier analysis and overlap-add synthesis.
//!
//! Frames are Hann-windowed with reflection padding of n_fft/2 on both
//! ends (center framing), giving 1 + floor(len/hop) frames. Synthesis
//! overlap-adds windowed inverse transforms and divides by the summed
//! squared window, which reconstructs exactly for any configuration whose
//! squared-window overlap stays bounded away from zero.

use super::fft::Fft;
use super::DspError;

/// Mono audio at a fixed sample rate; samples are finite f32 in [-1, 1]
/// by convention (mixtures may exceed unit range slightly).
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, DspError> {
        if samples.is_empty() {
            return Err(DspError::InputTooShort { len: 0, need: 1 });
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(DspError::NonFinite(i));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// One-sided complex spectrogram, frames x bins row-major.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub real: Vec<f32>,
    pub imag: Vec<f32>,
    pub frames: usize,
    pub bins: usize,
    pub n_fft: usize,
    pub hop: usize,
}

impl Spectrogram {
    pub fn magnitude(&self) -> Vec<f32> {
        self.real
            .iter()
            .zip(&self.imag)
            .map(|(&r, &i)| ((r as f64 * r as f64 + i as f64 * i as f64).sqrt()) as f32)
            .collect()
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

fn reflect_padded(x: &[f32], pad: usize) -> Vec<f64> {
    let n = x.len();
    debug_assert!(pad < n);
    let mut out = Vec::with_capacity(n + 2 * pad);
    for i in 0..pad {
        out.push(x[pad - i] as f64);
    }
    out.extend(x.iter().map(|&v| v as f64));
    for i in 0..pad {
        out.push(x[n - 2 - i] as f64);
    }
    out
}

/// Number of frames produced for a given input length under center padding.
pub fn frame_count(len: usize, hop: usize) -> usize {
    1 + len / hop
}

/// Squared-window overlap profile over the padded timeline.
pub fn ola_norm(window: &[f64], hop: usize, frames: usize, padded_len: usize) -> Vec<f64> {
    let mut norm = vec![0.0f64; padded_len];
    for f in 0..frames {
        let base = f * hop;
        for (j, &w) in window.iter().enumerate() {
            if base + j < padded_len {
                norm[base + j] += w * w;
            }
        }
    }
    norm
}

pub fn stft(x: &Waveform, n_fft: usize, hop: usize) -> Result<Spectrogram, DspError> {
    let len = x.len();
    if len < n_fft {
        return Err(DspError::InputTooShort { len, need: n_fft });
    }
    let pad = n_fft / 2;
    let padded = reflect_padded(&x.samples, pad);
    let frames = frame_count(len, hop);
    let bins = n_fft / 2 + 1;
    let window = hann(n_fft);
    let fft = Fft::new(n_fft);

    let mut real = vec![0.0f32; frames * bins];
    let mut imag = vec![0.0f32; frames * bins];
    let mut re = vec![0.0f64; n_fft];
    let mut im = vec![0.0f64; n_fft];
    for f in 0..frames {
        let base = f * hop;
        for j in 0..n_fft {
            re[j] = padded[base + j] * window[j];
            im[j] = 0.0;
        }
        fft.forward(&mut re, &mut im);
        for b in 0..bins {
            real[f * bins + b] = re[b] as f32;
            imag[f * bins + b] = im[b] as f32;
        }
    }
    Ok(Spectrogram { real, imag, frames, bins, n_fft, hop })
}

pub fn istft(spec: &Spectrogram, expected_len: usize, sample_rate: u32) -> Result<Waveform, DspError> {
    let (n_fft, hop, frames, bins) = (spec.n_fft, spec.hop, spec.frames, spec.bins);
    let pad = n_fft / 2;
    let padded_len = (frames - 1) * hop + n_fft;
    let window = hann(n_fft);
    let norm = ola_norm(&window, hop, frames, padded_len);
    // reconstruction needs healthy squared-window coverage over the slice
    let slice_end = (pad + expected_len).min(padded_len);
    if norm[pad..slice_end].iter().any(|&v| v < 1e-4) {
        return Err(DspError::NonCola { n_fft, hop });
    }

    let fft = Fft::new(n_fft);
    let mut ola = vec![0.0f64; padded_len];
    let mut re = vec![0.0f64; n_fft];
    let mut im = vec![0.0f64; n_fft];
    for f in 0..frames {
        // rebuild the full Hermitian spectrum from the one-sided half
        for b in 0..bins {
            re[b] = spec.real[f * bins + b] as f64;
            im[b] = spec.imag[f * bins + b] as f64;
        }
        for b in bins..n_fft {
            re[b] = re[n_fft - b];
            im[b] = -im[n_fft - b];
        }
        fft.inverse(&mut re, &mut im);
        let base = f * hop;
        for j in 0..n_fft {
            ola[base + j] += re[j] * window[j];
        }
    }

    let mut out = vec![0.0f32; expected_len];
    for (i, o) in out.iter_mut().enumerate() {
        let t = pad + i;
        if t < padded_len {
            *o = (ola[t] / norm[t]) as f32;
        }
    }
    Waveform::new(out, sample_rate)
}

/// Windowed inverse-DFT synthesis bases for the differentiable
/// reconstruction path: given one-sided (Re, Im) rows of a frame,
/// `frame = Re·A + Im·B` reproduces the windowed time-domain frame that
/// `istft` overlap-adds. Both matrices are bins x n_fft.
pub fn synthesis_bases(n_fft: usize) -> (Vec<f32>, Vec<f32>) {
    let bins = n_fft / 2 + 1;
    let window = hann(n_fft);
    let mut a = vec![0.0f32; bins * n_fft];
    let mut b = vec![0.0f32; bins * n_fft];
    for bin in 0..bins {
        // one-sided weights: DC and Nyquist appear once, others twice
        let alpha = if bin == 0 || bin == n_fft / 2 { 1.0 } else { 2.0 };
        for t in 0..n_fft {
            let ang = 2.0 * std::f64::consts::PI * (bin * t) as f64 / n_fft as f64;
            let scale = alpha / n_fft as f64 * window[t];
            a[bin * n_fft + t] = (scale * ang.cos()) as f32;
            b[bin * n_fft + t] = (-scale * ang.sin()) as f32;
        }
    }
    (a, b)
}

/// f32 overlap norm for the differentiable reconstruction path.
pub fn ola_norm_f32(n_fft: usize, hop: usize, frames: usize) -> Vec<f32> {
    let padded_len = (frames - 1) * hop + n_fft;
    ola_norm(&hann(n_fft), hop, frames, padded_len)
        .into_iter()
        .map(|v| v as f32)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_wave(rng: &mut Rng, len: usize) -> Waveform {
        Waveform::new((0..len).map(|_| rng.uniform(-1.0, 1.0) as f32).collect(), 8000).unwrap()
    }

    #[test]
    fn zero_input_gives_zero_spectrogram_with_expected_frames() {
        let x = Waveform::new(vec![0.0; 8000], 8000).unwrap();
        let s = stft(&x, 256, 64).unwrap();
        assert_eq!(s.frames, 1 + 8000 / 64);
        assert_eq!(s.bins, 129);
        assert!(s.real.iter().chain(&s.imag).all(|&v| v == 0.0));
    }

    #[test]
    fn sine_peak_lands_in_expected_bin() {
        // 1 kHz at 8 kHz with n_fft 256: bin = 1000·256/8000 = 32
        let sr = 8000u32;
        let samples: Vec<f32> = (0..8000)
            .map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / sr as f64).sin() as f32)
            .collect();
        let x = Waveform::new(samples, sr).unwrap();
        let s = stft(&x, 256, 64).unwrap();
        let mag = s.magnitude();
        // skip edge frames, where reflection padding bends the spectrum
        for f in 4..s.frames - 4 {
            let row = &mag[f * s.bins..(f + 1) * s.bins];
            let peak = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            assert_eq!(peak, 32, "frame {f}");
        }
    }

    #[test]
    fn parseval_energy_agreement() {
        // sum over frames of |X|^2 must equal n_fft times the windowed
        // frame energy (real transform, one-sided with Hermitian mirror)
        let mut rng = Rng::new(21);
        let x = random_wave(&mut rng, 4096);
        let (n_fft, hop) = (256, 64);
        let s = stft(&x, n_fft, hop).unwrap();

        let padded = reflect_padded(&x.samples, n_fft / 2);
        let window = hann(n_fft);
        let mut frame_energy = 0.0f64;
        for f in 0..s.frames {
            for j in 0..n_fft {
                let v = padded[f * hop + j] * window[j];
                frame_energy += v * v;
            }
        }
        let mut spec_energy = 0.0f64;
        for f in 0..s.frames {
            for b in 0..s.bins {
                let re = s.real[f * s.bins + b] as f64;
                let im = s.imag[f * s.bins + b] as f64;
                let alpha = if b == 0 || b == n_fft / 2 { 1.0 } else { 2.0 };
                spec_energy += alpha * (re * re + im * im);
            }
        }
        spec_energy /= n_fft as f64;
        let rel = (spec_energy - frame_energy).abs() / frame_energy;
        assert!(rel < 0.01, "relative energy mismatch {rel}");
    }

    #[test]
    fn round_trip_recovers_input() {
        let mut rng = Rng::new(9);
        for &len in &[1024usize, 4096, 8000] {
            let x = random_wave(&mut rng, len);
            let s = stft(&x, 256, 64).unwrap();
            let y = istft(&s, len, 8000).unwrap();
            let worst = x
                .samples
                .iter()
                .zip(&y.samples)
                .map(|(&a, &b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            assert!(worst < 1e-5, "len {len}: worst {worst}");
        }
    }

    #[test]
    fn zero_spectrogram_inverts_to_silence() {
        let s = Spectrogram { real: vec![0.0; 5 * 129], imag: vec![0.0; 5 * 129], frames: 5, bins: 129, n_fft: 256, hop: 64 };
        let y = istft(&s, 256, 8000).unwrap();
        assert!(y.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sine_round_trip_preserves_energy() {
        let sr = 8000u32;
        let samples: Vec<f32> = (0..8000)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / sr as f64).sin() as f32)
            .collect();
        let x = Waveform::new(samples, sr).unwrap();
        let s = stft(&x, 256, 64).unwrap();
        let y = istft(&s, 8000, sr).unwrap();
        let ex: f64 = x.samples.iter().map(|&v| (v as f64).powi(2)).sum();
        let ey: f64 = y.samples.iter().map(|&v| (v as f64).powi(2)).sum();
        assert!((ex - ey).abs() / ex < 1e-3, "energy drift {}", (ex - ey).abs() / ex);
    }

    #[test]
    fn too_short_input_is_rejected() {
        let x = Waveform::new(vec![0.1; 100], 8000).unwrap();
        match stft(&x, 256, 64) {
            Err(DspError::InputTooShort { len: 100, need: 256 }) => {}
            other => panic!("expected InputTooShort, got {other:?}"),
        }
    }

    #[test]
    fn hop_beyond_window_fails_cola_check() {
        let x = Waveform::new(vec![0.5; 4096], 8000).unwrap();
        let mut s = stft(&x, 256, 64).unwrap();
        s.hop = 300; // pretend synthesis at a gap-producing hop
        s.frames = 8;
        s.real.truncate(8 * 129);
        s.imag.truncate(8 * 129);
        match istft(&s, 2048, 8000) {
            Err(DspError::NonCola { .. }) => {}
            other => panic!("expected NonCola, got {other:?}"),
        }
    }

    #[test]
    fn stft_is_linear_in_amplitude() {
        let mut rng = Rng::new(33);
        let x = random_wave(&mut rng, 2048);
        let scaled = Waveform::new(x.samples.iter().map(|&v| 0.25 * v).collect(), 8000).unwrap();
        let a = stft(&x, 256, 64).unwrap();
        let b = stft(&scaled, 256, 64).unwrap();
        for (&va, &vb) in a.real.iter().zip(&b.real) {
            assert!((0.25 * va - vb).abs() <= 1e-6 * va.abs().max(1.0));
        }
    }

    #[test]
    fn synthesis_bases_match_istft_frame() {
        // one frame of random spectrum: Re·A + Im·B must equal the
        // windowed inverse transform istft would overlap-add
        let n_fft = 64;
        let bins = n_fft / 2 + 1;
        let mut rng = Rng::new(13);
        let mut re = vec![0.0f64; n_fft];
        let mut im = vec![0.0f64; n_fft];
        let mut half_re = vec![0.0f32; bins];
        let mut half_im = vec![0.0f32; bins];
        for b in 0..bins {
            half_re[b] = rng.uniform(-1.0, 1.0) as f32;
            // DC and Nyquist of a real signal's spectrum are purely real
            half_im[b] = if b == 0 || b == n_fft / 2 { 0.0 } else { rng.uniform(-1.0, 1.0) as f32 };
        }
        for b in 0..bins {
            re[b] = half_re[b] as f64;
            im[b] = half_im[b] as f64;
        }
        for b in bins..n_fft {
            re[b] = re[n_fft - b];
            im[b] = -im[n_fft - b];
        }
        let fft = Fft::new(n_fft);
        fft.inverse(&mut re, &mut im);
        let window = hann(n_fft);
        let oracle: Vec<f64> = (0..n_fft).map(|t| re[t] * window[t]).collect();

        let (a, b) = synthesis_bases(n_fft);
        for t in 0..n_fft {
            let mut acc = 0.0f64;
            for bin in 0..bins {
                acc += half_re[bin] as f64 * a[bin * n_fft + t] as f64
                    + half_im[bin] as f64 * b[bin * n_fft + t] as f64;
            }
            assert!((acc - oracle[t]).abs() < 1e-6, "t={t}: {acc} vs {}", oracle[t]);
        }
    }
}
