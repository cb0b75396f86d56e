//! Class prompt banks: the K x D matrix of conditioning vectors that is
//! the only trainable object during prompt tuning.

use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusCache, CorpusManifest};
use crate::dsp::DspConfig;
use crate::models::{center_crop, sed_forward, SedModel};
use crate::rng::Rng;

use super::AptError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Initial,
    Tuned,
    JointTuned,
}

/// One prompt vector per class, row-major K x D.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBank {
    pub class_ids: Vec<usize>,
    pub embed_dim: usize,
    pub prompts: Vec<f32>,
    pub provenance: Provenance,
    /// Enrollment samples per class used at initialization.
    pub shots: usize,
    pub seed: u64,
    pub config_hash: String,
}

impl PromptBank {
    pub fn n_classes(&self) -> usize {
        self.class_ids.len()
    }

    /// Trainable parameter count: exactly K x D.
    pub fn count_trainable(&self) -> usize {
        self.class_ids.len() * self.embed_dim
    }

    pub fn row_index(&self, class_id: usize) -> Result<usize, AptError> {
        self.class_ids
            .iter()
            .position(|&c| c == class_id)
            .ok_or(AptError::ClassNotInBank { class_id })
    }

    pub fn row(&self, class_id: usize) -> Result<&[f32], AptError> {
        let i = self.row_index(class_id)?;
        Ok(&self.prompts[i * self.embed_dim..(i + 1) * self.embed_dim])
    }

    pub fn row_mut(&mut self, class_id: usize) -> Result<&mut [f32], AptError> {
        let i = self.row_index(class_id)?;
        let d = self.embed_dim;
        Ok(&mut self.prompts[i * d..(i + 1) * d])
    }

    pub fn save(&self, path: &Path) -> Result<(), AptError> {
        let mut payload = Vec::with_capacity(self.prompts.len() * 4);
        for &v in &self.prompts {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        let file = BankFile {
            class_ids: self.class_ids.clone(),
            embed_dim: self.embed_dim,
            provenance: self.provenance,
            shots: self.shots,
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            payload: base64::engine::general_purpose::STANDARD.encode(payload),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PromptBank, AptError> {
        let file: BankFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let raw = base64::engine::general_purpose::STANDARD
            .decode(&file.payload)
            .map_err(|e| AptError::BadPayload(e.to_string()))?;
        if raw.len() != file.class_ids.len() * file.embed_dim * 4 {
            return Err(AptError::BadPayload(format!(
                "payload holds {} bytes, expected {}",
                raw.len(),
                file.class_ids.len() * file.embed_dim * 4
            )));
        }
        let prompts =
            raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        Ok(PromptBank {
            class_ids: file.class_ids,
            embed_dim: file.embed_dim,
            prompts,
            provenance: file.provenance,
            shots: file.shots,
            seed: file.seed,
            config_hash: file.config_hash,
        })
    }
}

/// On-disk form: JSON header plus a base64 little-endian f32 payload.
#[derive(Serialize, Deserialize)]
struct BankFile {
    class_ids: Vec<usize>,
    embed_dim: usize,
    provenance: Provenance,
    shots: usize,
    seed: u64,
    config_hash: String,
    payload: String,
}

/// Elementwise mean of equally sized embedding vectors, accumulated in
/// f64 and rounded once so the result agrees with a double-precision
/// oracle to within f32 rounding of the final value.
pub fn mean_embeddings(rows: &[Vec<f32>]) -> Vec<f32> {
    assert!(!rows.is_empty());
    let d = rows[0].len();
    let mut acc = vec![0.0f64; d];
    for row in rows {
        for (o, &v) in acc.iter_mut().zip(row) {
            *o += v as f64;
        }
    }
    let inv = 1.0 / rows.len() as f64;
    acc.into_iter().map(|v| (v * inv) as f32).collect()
}

/// Stage-1 initialization: each class's prompt is the arithmetic mean of
/// the encoder embeddings of its enrollment samples (center crops).
pub fn init_prompts(
    sed: &SedModel,
    shots_manifest: &CorpusManifest,
    cache: &CorpusCache,
    dsp: &DspConfig,
    config_hash: &str,
    seed: u64,
) -> Result<PromptBank, AptError> {
    let mut class_ids = Vec::new();
    let mut prompts = Vec::new();
    let mut shots_seen: Option<usize> = None;
    for class in &shots_manifest.classes {
        let entries = shots_manifest.entries_of(class.class_id);
        if entries.is_empty() {
            return Err(AptError::EmptyClass { class_id: class.class_id });
        }
        shots_seen = Some(shots_seen.map_or(entries.len(), |s| s.min(entries.len())));
        let mut rows = Vec::with_capacity(entries.len());
        for entry in entries {
            let wave = cache.get(entry.class_id, entry.sample_index)?;
            let cropped = center_crop(wave, dsp.clip_len())?;
            rows.push(sed_forward(sed, &cropped, dsp)?);
        }
        class_ids.push(class.class_id);
        prompts.extend(mean_embeddings(&rows));
    }
    Ok(PromptBank {
        class_ids,
        embed_dim: sed.dims.embed_dim,
        prompts,
        provenance: Provenance::Initial,
        shots: shots_seen.unwrap_or(0),
        seed,
        config_hash: config_hash.to_string(),
    })
}

/// Diagnostic ablation: random prompt rows instead of enrollment means.
pub fn init_prompts_random(
    class_ids: Vec<usize>,
    embed_dim: usize,
    config_hash: &str,
    seed: u64,
) -> PromptBank {
    let mut rng = Rng::new(seed);
    let prompts =
        (0..class_ids.len() * embed_dim).map(|_| rng.uniform(-0.5, 0.5) as f32).collect();
    PromptBank {
        class_ids,
        embed_dim,
        prompts,
        provenance: Provenance::Initial,
        shots: 0,
        seed,
        config_hash: config_hash.to_string(),
    }
}
