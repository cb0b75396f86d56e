//! 16-bit PCM mono WAV files, the on-disk sample format for the corpus.

use std::path::Path;

use super::stft::Waveform;
use super::DspError;

pub fn write_wav(path: &Path, wave: &Waveform) -> Result<(), DspError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &v in &wave.samples {
        let q = (v.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(q)?;
    }
    writer.finalize()?;
    Ok(())
}

pub fn read_wav(path: &Path) -> Result<Waveform, DspError> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 {
        return Err(DspError::Wav(hound::Error::Unsupported));
    }
    let samples: Result<Vec<i16>, _> = reader.samples::<i16>().collect();
    let samples = samples?.into_iter().map(|v| v as f32 / 32767.0).collect();
    Waveform::new(samples, spec.sample_rate)
}
