//! Signal-to-distortion ratio and median aggregation.

use crate::dsp::Waveform;

use super::EvalError;

const EPS: f64 = 1e-8;

/// 10·log10((Σs² + ε) / (Σ(s − ŝ)² + ε)) with ε = 1e-8.
pub fn sdr(reference: &Waveform, estimate: &Waveform) -> Result<f64, EvalError> {
    if reference.len() != estimate.len() {
        return Err(EvalError::LengthMismatch { got: estimate.len(), want: reference.len() });
    }
    let mut signal = 0.0f64;
    let mut error = 0.0f64;
    for (&s, &e) in reference.samples.iter().zip(&estimate.samples) {
        let s = s as f64;
        let d = s - e as f64;
        signal += s * s;
        error += d * d;
    }
    Ok(10.0 * ((signal + EPS) / (error + EPS)).log10())
}

/// Middle of the sorted list; mean of the two middles for even lengths.
pub fn median(values: &[f64]) -> Result<f64, EvalError> {
    if values.is_empty() {
        return Err(EvalError::EmptyList);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    Ok(if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) })
}
