//! Sound-class definitions for the synthetic corpus.
//!
//! Each class owns a parameter range of its generator family; ranges of
//! distinct classes within one family never overlap, so classes stay
//! separable by construction. The default table spans five families over
//! 14 classes: eight "seen" classes reserved for backbone pretraining and
//! six "unseen" classes that only appear at prompt-tuning time.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Seen,
    Unseen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Stack of harmonics with 1/h² amplitude decay and random phases.
    HarmonicTone { f0_lo: f64, f0_hi: f64, harmonics: usize },
    /// Stationary noise confined to one frequency band.
    BandpassNoise { f_lo: f64, f_hi: f64 },
    /// Band-limited noise with slow sinusoidal amplitude modulation.
    AmNoise { f_lo: f64, f_hi: f64, rate_lo: f64, rate_hi: f64 },
    /// Linear frequency sweep across the clip.
    Chirp { start_lo: f64, start_hi: f64, end_lo: f64, end_hi: f64 },
    /// Periodic damped-sine clicks.
    ClickTrain { rate_lo: f64, rate_hi: f64, tone_lo: f64, tone_hi: f64 },
}

impl GeneratorKind {
    pub fn family_name(&self) -> &'static str {
        match self {
            GeneratorKind::HarmonicTone { .. } => "harmonic-tone",
            GeneratorKind::BandpassNoise { .. } => "bandpass-noise",
            GeneratorKind::AmNoise { .. } => "am-noise",
            GeneratorKind::Chirp { .. } => "chirp",
            GeneratorKind::ClickTrain { .. } => "click-train",
        }
    }

    /// The range that must not overlap between classes of the same family:
    /// fundamental for tones, band for noise, modulation rate for AM,
    /// swept interval for chirps, repetition rate for clicks.
    pub fn primary_range(&self) -> (f64, f64) {
        match *self {
            GeneratorKind::HarmonicTone { f0_lo, f0_hi, .. } => (f0_lo, f0_hi),
            GeneratorKind::BandpassNoise { f_lo, f_hi } => (f_lo, f_hi),
            GeneratorKind::AmNoise { rate_lo, rate_hi, .. } => (rate_lo, rate_hi),
            GeneratorKind::Chirp { start_lo, start_hi, end_lo, end_hi } => {
                let lo = start_lo.min(end_lo);
                let hi = start_hi.max(end_hi);
                (lo, hi)
            }
            GeneratorKind::ClickTrain { rate_lo, rate_hi, .. } => (rate_lo, rate_hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub class_id: usize,
    pub kind: GeneratorKind,
    pub split: Split,
}

/// The default desk corpus: 8 seen + 6 unseen classes.
///
/// The seen classes jointly energize essentially the whole usable band
/// (roughly 150-3900 Hz at the 8 kHz rate), and every unseen class lives
/// inside that coverage: the separator pretrained on the seen split has
/// features for those regions, and what transfers poorly is the
/// conditioning — exactly the gap prompt tuning is meant to close. A
/// class in spectral territory the backbone never saw would be
/// unrecoverable by prompts alone.
pub fn default_classes() -> Vec<ClassSpec> {
    use GeneratorKind::*;
    let table: Vec<(GeneratorKind, Split)> = vec![
        (HarmonicTone { f0_lo: 150.0, f0_hi: 190.0, harmonics: 6 }, Split::Seen),
        (HarmonicTone { f0_lo: 500.0, f0_hi: 560.0, harmonics: 5 }, Split::Seen),
        (BandpassNoise { f_lo: 800.0, f_hi: 1400.0 }, Split::Seen),
        (BandpassNoise { f_lo: 2600.0, f_hi: 3600.0 }, Split::Seen),
        (AmNoise { f_lo: 1650.0, f_hi: 2050.0, rate_lo: 3.0, rate_hi: 6.0 }, Split::Seen),
        (Chirp { start_lo: 300.0, start_hi: 340.0, end_lo: 1150.0, end_hi: 1200.0 }, Split::Seen),
        (Chirp { start_lo: 3850.0, start_hi: 3900.0, end_lo: 2300.0, end_hi: 2360.0 }, Split::Seen),
        (ClickTrain { rate_lo: 6.0, rate_hi: 10.0, tone_lo: 3300.0, tone_hi: 3650.0 }, Split::Seen),
        (HarmonicTone { f0_lo: 240.0, f0_hi: 290.0, harmonics: 5 }, Split::Unseen),
        (BandpassNoise { f_lo: 450.0, f_hi: 700.0 }, Split::Unseen),
        (AmNoise { f_lo: 2950.0, f_hi: 3350.0, rate_lo: 9.0, rate_hi: 14.0 }, Split::Unseen),
        (Chirp { start_lo: 1450.0, start_hi: 1490.0, end_lo: 2210.0, end_hi: 2250.0 }, Split::Unseen),
        (ClickTrain { rate_lo: 14.0, rate_hi: 20.0, tone_lo: 2450.0, tone_hi: 2750.0 }, Split::Unseen),
        (HarmonicTone { f0_lo: 380.0, f0_hi: 440.0, harmonics: 4 }, Split::Unseen),
    ];
    table
        .into_iter()
        .enumerate()
        .map(|(class_id, (kind, split))| ClassSpec { class_id, kind, split })
        .collect()
}
