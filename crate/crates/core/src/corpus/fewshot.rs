//! Nested few-shot subset selection.
//!
//! For a fixed seed, each class's train entries are permuted once and an
//! N-shot subset is the first N elements of that permutation, so the
//! 1-shot set is contained in the 5-shot set, the 5-shot set in the
//! 10-shot set, and so on up to the full train split.

use crate::rng::Rng;

use super::manifest::{CorpusEntry, CorpusManifest};
use super::CorpusError;

/// Select `shots` train samples per class as a nested seeded prefix.
/// The returned manifest holds only the selected (train-side) entries;
/// evaluation keeps using the full manifest's test split.
pub fn sample_fewshot(
    manifest: &CorpusManifest,
    shots: usize,
    seed: u64,
) -> Result<CorpusManifest, CorpusError> {
    let available = manifest.train_count();
    if shots == 0 || shots > available {
        return Err(CorpusError::ShotsTooLarge { shots, available });
    }
    let root = Rng::new(seed);
    let mut entries: Vec<CorpusEntry> = Vec::new();
    for class in &manifest.classes {
        let train = manifest.train_of(class.class_id);
        let mut order: Vec<usize> = (0..train.len()).collect();
        root.fork(class.class_id as u64).shuffle(&mut order);
        let mut picked: Vec<CorpusEntry> =
            order[..shots].iter().map(|&i| train[i].clone()).collect();
        picked.sort_by_key(|e| e.sample_index);
        entries.extend(picked);
    }
    Ok(manifest.with_entries(entries))
}
