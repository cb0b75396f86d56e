//! Corpus construction and the on-disk manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::{read_wav, write_wav, Waveform};
use crate::rng::derive_seed;

use super::gen::gen_class_sample;
use super::spec::{default_classes, ClassSpec, Split};
use super::CorpusError;

/// Fraction of each class's samples used for training; the remainder is
/// the held-out test set. Train indices come first.
pub const TRAIN_FRACTION: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub class_id: usize,
    pub sample_index: usize,
    pub path: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub classes: Vec<ClassSpec>,
    pub samples_per_class: usize,
    pub sample_rate: u32,
    pub clip_seconds: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            classes: default_classes(),
            samples_per_class: 24,
            sample_rate: 8000,
            clip_seconds: 2.0,
        }
    }
}

/// Catalog of synthesized sources. File paths are relative to the
/// manifest's own location.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub sample_rate: u32,
    pub clip_seconds: f64,
    pub samples_per_class: usize,
    pub master_seed: u64,
    pub classes: Vec<ClassSpec>,
    pub entries: Vec<CorpusEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl CorpusManifest {
    pub fn clip_len(&self) -> usize {
        (self.clip_seconds * self.sample_rate as f64).round() as usize
    }

    pub fn class_ids(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.class_id).collect()
    }

    pub fn class(&self, class_id: usize) -> Option<&ClassSpec> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }

    pub fn entries_of(&self, class_id: usize) -> Vec<&CorpusEntry> {
        self.entries.iter().filter(|e| e.class_id == class_id).collect()
    }

    /// Number of leading sample indices reserved for training.
    pub fn train_count(&self) -> usize {
        (self.samples_per_class as f64 * TRAIN_FRACTION).floor() as usize
    }

    pub fn train_of(&self, class_id: usize) -> Vec<&CorpusEntry> {
        let cut = self.train_count();
        self.entries.iter().filter(|e| e.class_id == class_id && e.sample_index < cut).collect()
    }

    pub fn test_of(&self, class_id: usize) -> Vec<&CorpusEntry> {
        let cut = self.train_count();
        self.entries.iter().filter(|e| e.class_id == class_id && e.sample_index >= cut).collect()
    }

    /// Manifest restricted to one split (classes and their entries).
    pub fn split_view(&self, split: Split) -> CorpusManifest {
        let classes: Vec<ClassSpec> =
            self.classes.iter().filter(|c| c.split == split).cloned().collect();
        let keep: Vec<usize> = classes.iter().map(|c| c.class_id).collect();
        let entries =
            self.entries.iter().filter(|e| keep.contains(&e.class_id)).cloned().collect();
        CorpusManifest { classes, entries, base_dir: self.base_dir.clone(), ..*self }
    }

    pub fn load_waveform(&self, entry: &CorpusEntry) -> Result<Waveform, CorpusError> {
        Ok(read_wav(&self.base_dir.join(&entry.path))?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<CorpusManifest, CorpusError> {
        let json = std::fs::read_to_string(path)?;
        let mut manifest: CorpusManifest = serde_json::from_str(&json)?;
        manifest.base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(manifest)
    }

    /// Same corpus metadata with a different entry list (subset views).
    pub fn with_entries(&self, entries: Vec<CorpusEntry>) -> CorpusManifest {
        CorpusManifest { entries, ..self.clone() }
    }
}

/// Preloaded waveforms keyed by (class_id, sample_index). Mixture
/// synthesis touches sources thousands of times per run; reading each WAV
/// once keeps that cheap and I/O-free.
#[derive(Debug, Clone)]
pub struct CorpusCache {
    waves: BTreeMap<(usize, usize), Waveform>,
}

impl CorpusCache {
    pub fn load(manifest: &CorpusManifest) -> Result<Self, CorpusError> {
        let mut waves = BTreeMap::new();
        for entry in &manifest.entries {
            waves.insert((entry.class_id, entry.sample_index), manifest.load_waveform(entry)?);
        }
        Ok(CorpusCache { waves })
    }

    pub fn get(&self, class_id: usize, sample_index: usize) -> Result<&Waveform, CorpusError> {
        self.waves
            .get(&(class_id, sample_index))
            .ok_or(CorpusError::MissingEntry { class_id, sample_index })
    }
}

/// Validate a config, synthesize every sample, write WAVs and the
/// manifest under `out_dir`, and return the manifest.
pub fn build_corpus(
    config: &CorpusConfig,
    out_dir: &Path,
    master_seed: u64,
) -> Result<CorpusManifest, CorpusError> {
    validate_classes(&config.classes)?;
    std::fs::create_dir_all(out_dir)?;
    let clip_len = (config.clip_seconds * config.sample_rate as f64).round() as usize;

    let mut entries = Vec::new();
    for class in &config.classes {
        let dir = out_dir.join(format!("class_{:02}", class.class_id));
        std::fs::create_dir_all(&dir)?;
        for i in 0..config.samples_per_class {
            let tag = ((class.class_id as u64) << 32) | i as u64;
            let seed = derive_seed(master_seed, tag);
            let wave = gen_class_sample(&class.kind, seed, clip_len, config.sample_rate);
            let rel = format!("class_{:02}/sample_{:03}.wav", class.class_id, i);
            write_wav(&out_dir.join(&rel), &wave)?;
            entries.push(CorpusEntry { class_id: class.class_id, sample_index: i, path: rel, seed });
        }
    }

    let manifest = CorpusManifest {
        sample_rate: config.sample_rate,
        clip_seconds: config.clip_seconds,
        samples_per_class: config.samples_per_class,
        master_seed,
        classes: config.classes.clone(),
        entries,
        base_dir: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

fn validate_classes(classes: &[ClassSpec]) -> Result<(), CorpusError> {
    let mut seen = std::collections::BTreeSet::new();
    for c in classes {
        if !seen.insert(c.class_id) {
            return Err(CorpusError::DuplicateClassId(c.class_id));
        }
    }
    for a in classes {
        for b in classes {
            if a.class_id >= b.class_id || a.kind.family_name() != b.kind.family_name() {
                continue;
            }
            let (alo, ahi) = a.kind.primary_range();
            let (blo, bhi) = b.kind.primary_range();
            if !(ahi < blo || bhi < alo) {
                return Err(CorpusError::OverlappingRanges {
                    family: a.kind.family_name(),
                    a: a.class_id,
                    b: b.class_id,
                });
            }
        }
    }
    Ok(())
}
