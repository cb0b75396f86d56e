//! Two-source mixture simulation.
//!
//! A mixture is the plain sum of independently cropped target and
//! interferer sources from two different classes. Training draws an
//! unbounded stream of fresh pairs; the test set pairs each held-out
//! target with one fixed, seeded interferer so every system is scored on
//! identical material.

use crate::dsp::Waveform;
use crate::rng::Rng;

use super::manifest::{CorpusCache, CorpusEntry, CorpusManifest};
use super::CorpusError;

#[derive(Debug, Clone)]
pub struct MixtureExample {
    pub mixture: Waveform,
    pub target: Waveform,
    pub target_class: usize,
    pub interferer_class: usize,
    /// (class, sample_index) of both sources, for conditioning lookups.
    pub target_entry: (usize, usize),
    pub interferer_entry: (usize, usize),
    /// Crop offsets into the target and interferer source files.
    pub crop_offsets: (usize, usize),
}

fn crop(wave: &Waveform, offset: usize, len: usize) -> Vec<f32> {
    wave.samples[offset..offset + len].to_vec()
}

fn mix_pair(
    cache: &CorpusCache,
    target: &CorpusEntry,
    interferer: &CorpusEntry,
    crop_len: usize,
    rng: &mut Rng,
    sample_rate: u32,
) -> Result<MixtureExample, CorpusError> {
    let t_wave = cache.get(target.class_id, target.sample_index)?;
    let i_wave = cache.get(interferer.class_id, interferer.sample_index)?;
    let t_off = rng.below(t_wave.len() - crop_len + 1);
    let i_off = rng.below(i_wave.len() - crop_len + 1);
    let t_crop = crop(t_wave, t_off, crop_len);
    let i_crop = crop(i_wave, i_off, crop_len);
    let mixture: Vec<f32> = t_crop.iter().zip(&i_crop).map(|(&a, &b)| a + b).collect();
    Ok(MixtureExample {
        mixture: Waveform::new(mixture, sample_rate)?,
        target: Waveform::new(t_crop, sample_rate)?,
        target_class: target.class_id,
        interferer_class: interferer.class_id,
        target_entry: (target.class_id, target.sample_index),
        interferer_entry: (interferer.class_id, interferer.sample_index),
        crop_offsets: (t_off, i_off),
    })
}

/// Which side of the train/test split a stream draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pool {
    Train,
    Test,
    All,
}

fn pool_entries(manifest: &CorpusManifest, class_id: usize, pool: Pool) -> Vec<CorpusEntry> {
    match pool {
        Pool::Train => manifest.train_of(class_id).into_iter().cloned().collect(),
        Pool::Test => manifest.test_of(class_id).into_iter().cloned().collect(),
        Pool::All => manifest.entries_of(class_id).into_iter().cloned().collect(),
    }
}

/// Unbounded seeded stream of mixtures whose targets all come from one
/// class. Prompt tuning runs one stream per class so each class's example
/// sequence is independent of which other classes are being tuned.
#[derive(Debug, Clone)]
pub struct ClassMixtureStream {
    targets: Vec<CorpusEntry>,
    interferers: Vec<CorpusEntry>,
    crop_len: usize,
    sample_rate: u32,
    rng: Rng,
}

impl ClassMixtureStream {
    pub fn new(
        manifest: &CorpusManifest,
        class_id: usize,
        pool: Pool,
        crop_len: usize,
        seed: u64,
    ) -> Result<Self, CorpusError> {
        if manifest.classes.len() < 2 {
            return Err(CorpusError::FewerThanTwoClasses);
        }
        if crop_len > manifest.clip_len() {
            return Err(CorpusError::CropTooLong { crop_len, clip_len: manifest.clip_len() });
        }
        let targets = pool_entries(manifest, class_id, pool);
        if targets.is_empty() {
            return Err(CorpusError::MissingEntry { class_id, sample_index: 0 });
        }
        let interferers: Vec<CorpusEntry> = manifest
            .classes
            .iter()
            .filter(|c| c.class_id != class_id)
            .flat_map(|c| pool_entries(manifest, c.class_id, pool))
            .collect();
        Ok(ClassMixtureStream {
            targets,
            interferers,
            crop_len,
            sample_rate: manifest.sample_rate,
            rng: Rng::new(seed),
        })
    }

    pub fn next_example(&mut self, cache: &CorpusCache) -> Result<MixtureExample, CorpusError> {
        let target = self.targets[self.rng.below(self.targets.len())].clone();
        let interferer = self.interferers[self.rng.below(self.interferers.len())].clone();
        mix_pair(cache, &target, &interferer, self.crop_len, &mut self.rng, self.sample_rate)
    }
}

/// Unbounded seeded stream of mixtures with targets drawn uniformly over
/// one pool of the manifest and interferers from a uniformly chosen
/// different class.
#[derive(Debug, Clone)]
pub struct MixtureStream {
    targets: Vec<CorpusEntry>,
    class_ids: Vec<usize>,
    by_class: Vec<Vec<CorpusEntry>>,
    crop_len: usize,
    sample_rate: u32,
    rng: Rng,
}

impl MixtureStream {
    pub fn new(
        manifest: &CorpusManifest,
        pool: Pool,
        crop_len: usize,
        seed: u64,
    ) -> Result<Self, CorpusError> {
        if manifest.classes.len() < 2 {
            return Err(CorpusError::FewerThanTwoClasses);
        }
        if crop_len > manifest.clip_len() {
            return Err(CorpusError::CropTooLong { crop_len, clip_len: manifest.clip_len() });
        }
        let class_ids = manifest.class_ids();
        let by_class: Vec<Vec<CorpusEntry>> =
            class_ids.iter().map(|&c| pool_entries(manifest, c, pool)).collect();
        let targets: Vec<CorpusEntry> = by_class.iter().flatten().cloned().collect();
        if targets.is_empty() {
            return Err(CorpusError::FewerThanTwoClasses);
        }
        Ok(MixtureStream {
            targets,
            class_ids,
            by_class,
            crop_len,
            sample_rate: manifest.sample_rate,
            rng: Rng::new(seed),
        })
    }

    pub fn next_example(&mut self, cache: &CorpusCache) -> Result<MixtureExample, CorpusError> {
        let target = self.targets[self.rng.below(self.targets.len())].clone();
        let others: Vec<usize> = (0..self.class_ids.len())
            .filter(|&i| self.class_ids[i] != target.class_id && !self.by_class[i].is_empty())
            .collect();
        let slot = others[self.rng.below(others.len())];
        let candidates = &self.by_class[slot];
        let interferer = candidates[self.rng.below(candidates.len())].clone();
        mix_pair(cache, &target, &interferer, self.crop_len, &mut self.rng, self.sample_rate)
    }
}

/// Seeded batch of mixtures with targets drawn uniformly over the whole
/// manifest and interferers from a uniformly chosen different class.
pub fn pair_and_mix(
    manifest: &CorpusManifest,
    cache: &CorpusCache,
    crop_len: usize,
    seed: u64,
    count: usize,
) -> Result<Vec<MixtureExample>, CorpusError> {
    let mut stream = MixtureStream::new(manifest, Pool::All, crop_len, seed)?;
    (0..count).map(|_| stream.next_example(cache)).collect()
}

/// The evaluation set: one mixture per held-out test target, with a
/// seeded but fixed interferer drawn from another class's test split.
pub fn fixed_test_pairs(
    manifest: &CorpusManifest,
    cache: &CorpusCache,
    crop_len: usize,
    seed: u64,
) -> Result<Vec<MixtureExample>, CorpusError> {
    if manifest.classes.len() < 2 {
        return Err(CorpusError::FewerThanTwoClasses);
    }
    let mut rng = Rng::new(seed);
    let mut out = Vec::new();
    for class in &manifest.classes {
        for target in manifest.test_of(class.class_id) {
            let other_classes: Vec<usize> = manifest
                .class_ids()
                .into_iter()
                .filter(|&c| c != class.class_id)
                .collect();
            let int_class = other_classes[rng.below(other_classes.len())];
            let candidates = manifest.test_of(int_class);
            let interferer = candidates[rng.below(candidates.len())].clone();
            out.push(mix_pair(cache, target, &interferer, crop_len, &mut rng, manifest.sample_rate)?);
        }
    }
    Ok(out)
}
