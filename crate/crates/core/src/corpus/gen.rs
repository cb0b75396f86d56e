//! Deterministic per-sample waveform synthesis.

use std::f64::consts::PI;

use crate::dsp::Waveform;
use crate::rng::Rng;

use super::spec::GeneratorKind;

/// Number of sinusoids used to approximate band-limited noise.
const NOISE_PARTIALS: usize = 48;

/// Synthesize one corpus sample: `clip_len` samples at `sample_rate`,
/// fully determined by `(spec, seed)`, peak-normalized to 0.5.
pub fn gen_class_sample(
    kind: &GeneratorKind,
    seed: u64,
    clip_len: usize,
    sample_rate: u32,
) -> Waveform {
    let mut rng = Rng::new(seed);
    let sr = sample_rate as f64;
    let nyquist_cap = 0.95 * sr / 2.0;
    let mut x = vec![0.0f64; clip_len];

    match *kind {
        GeneratorKind::HarmonicTone { f0_lo, f0_hi, harmonics } => {
            let f0 = rng.uniform(f0_lo, f0_hi);
            for h in 1..=harmonics {
                let f = f0 * h as f64;
                if f > nyquist_cap {
                    break;
                }
                let amp = 1.0 / h as f64;
                let phase = rng.uniform(0.0, 2.0 * PI);
                let w = 2.0 * PI * f / sr;
                for (t, v) in x.iter_mut().enumerate() {
                    *v += amp * (w * t as f64 + phase).sin();
                }
            }
        }
        GeneratorKind::BandpassNoise { f_lo, f_hi } => {
            add_noise_band(&mut rng, &mut x, sr, f_lo, f_hi);
        }
        GeneratorKind::AmNoise { f_lo, f_hi, rate_lo, rate_hi } => {
            add_noise_band(&mut rng, &mut x, sr, f_lo, f_hi);
            let rate = rng.uniform(rate_lo, rate_hi);
            let phase = rng.uniform(0.0, 2.0 * PI);
            let w = 2.0 * PI * rate / sr;
            for (t, v) in x.iter_mut().enumerate() {
                *v *= 1.0 + 0.8 * (w * t as f64 + phase).sin();
            }
        }
        GeneratorKind::Chirp { start_lo, start_hi, end_lo, end_hi } => {
            let f_start = rng.uniform(start_lo, start_hi);
            let f_end = rng.uniform(end_lo, end_hi);
            let phase0 = rng.uniform(0.0, 2.0 * PI);
            let dur = clip_len as f64 / sr;
            for (t, v) in x.iter_mut().enumerate() {
                let tt = t as f64 / sr;
                let phase = 2.0 * PI * (f_start * tt + 0.5 * (f_end - f_start) * tt * tt / dur);
                *v = (phase + phase0).sin();
            }
        }
        GeneratorKind::ClickTrain { rate_lo, rate_hi, tone_lo, tone_hi } => {
            let rate = rng.uniform(rate_lo, rate_hi);
            let tone = rng.uniform(tone_lo, tone_hi);
            let period = sr / rate;
            let offset = rng.uniform(0.0, period);
            let decay = 0.004 * sr; // 4 ms ring-down
            let click_len = (0.030 * sr) as usize;
            let w = 2.0 * PI * tone / sr;
            let mut start = offset;
            while (start as usize) < clip_len {
                let s = start as usize;
                for dt in 0..click_len.min(clip_len - s) {
                    let env = (-(dt as f64) / decay).exp();
                    x[s + dt] += env * (w * dt as f64).sin();
                }
                start += period;
            }
        }
    }

    let peak = x.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let scale = if peak > 0.0 { 0.5 / peak } else { 0.0 };
    let samples = x.iter().map(|&v| (v * scale) as f32).collect();
    Waveform::new(samples, sample_rate).expect("generator output is finite and non-empty")
}

fn add_noise_band(rng: &mut Rng, x: &mut [f64], sr: f64, f_lo: f64, f_hi: f64) {
    for _ in 0..NOISE_PARTIALS {
        let f = rng.uniform(f_lo, f_hi);
        let phase = rng.uniform(0.0, 2.0 * PI);
        let w = 2.0 * PI * f / sr;
        for (t, v) in x.iter_mut().enumerate() {
            *v += (w * t as f64 + phase).sin();
        }
    }
}
