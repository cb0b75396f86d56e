//! Experiment configuration: one JSON file drives every subcommand.
//!
//! Flags override fields by dotted path (`--set tune.epochs=20`), and the
//! SHA-256 hash of the effective configuration is stamped into every
//! artifact so `eval` can refuse mismatched pairings.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use aptsep_core::dsp::DspConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ShotSetting {
    Count(usize),
    Full,
}

impl ShotSetting {
    pub fn label(&self) -> String {
        match self {
            ShotSetting::Count(n) => n.to_string(),
            ShotSetting::Full => "full".into(),
        }
    }

    pub fn parse(text: &str) -> Result<ShotSetting, ConfigError> {
        if text.eq_ignore_ascii_case("full") {
            Ok(ShotSetting::Full)
        } else {
            text.parse::<usize>()
                .map(ShotSetting::Count)
                .map_err(|_| ConfigError::BadShots(text.to_string()))
        }
    }
}

impl fmt::Display for ShotSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Serialize for ShotSetting {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ShotSetting::Count(n) => s.serialize_u64(*n as u64),
            ShotSetting::Full => s.serialize_str("full"),
        }
    }
}

impl<'de> Deserialize<'de> for ShotSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::Number(n) => n
                .as_u64()
                .map(|n| ShotSetting::Count(n as usize))
                .ok_or_else(|| D::Error::custom("shots must be a non-negative integer")),
            serde_json::Value::String(s) if s.eq_ignore_ascii_case("full") => Ok(ShotSetting::Full),
            other => Err(D::Error::custom(format!("bad shot setting {other}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSection {
    pub samples_per_class: usize,
    pub sample_rate: u32,
    pub clip_seconds: f64,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection { samples_per_class: 24, sample_rate: 8000, clip_seconds: 2.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PretrainSection {
    pub sed_epochs: usize,
    pub uss_epochs: usize,
    pub lr: f32,
    pub batch: usize,
}

impl Default for PretrainSection {
    fn default() -> Self {
        PretrainSection { sed_epochs: 40, uss_epochs: 150, lr: 1e-3, batch: 4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneSection {
    pub lr: f32,
    pub batch: usize,
    pub epochs: usize,
}

impl Default for TuneSection {
    fn default() -> Self {
        TuneSection { lr: 3e-4, batch: 4, epochs: 100 }
    }
}

fn default_fewshot() -> Vec<ShotSetting> {
    vec![ShotSetting::Count(1), ShotSetting::Count(5), ShotSetting::Count(10), ShotSetting::Full]
}

fn default_seeds() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default = "default_dsp")]
    pub dsp: DspConfig,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default)]
    pub pretrain: PretrainSection,
    #[serde(default)]
    pub tune: TuneSection,
    #[serde(default = "default_fewshot")]
    pub fewshot: Vec<ShotSetting>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
}

fn default_dsp() -> DspConfig {
    DspConfig::default()
}

fn default_embed_dim() -> usize {
    64
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: 42,
            out_dir: PathBuf::from("runs/desk"),
            corpus: CorpusSection::default(),
            dsp: default_dsp(),
            embed_dim: default_embed_dim(),
            pretrain: PretrainSection::default(),
            tune: TuneSection::default(),
            fewshot: default_fewshot(),
            seeds: default_seeds(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Missing { path: path.to_path_buf(), source: e })?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut last_count: Option<usize> = None;
        let mut seen_full = false;
        for s in &self.fewshot {
            match s {
                ShotSetting::Count(n) => {
                    if seen_full {
                        return Err(ConfigError::ShotsNotIncreasing);
                    }
                    if last_count.is_some_and(|p| *n <= p) {
                        return Err(ConfigError::ShotsNotIncreasing);
                    }
                    last_count = Some(*n);
                }
                ShotSetting::Full => {
                    if seen_full {
                        return Err(ConfigError::ShotsNotIncreasing);
                    }
                    seen_full = true;
                }
            }
        }
        if self.seeds == 0 {
            return Err(ConfigError::BadField("seeds must be at least 1".into()));
        }
        if self.tune.batch == 0 || self.pretrain.batch == 0 {
            return Err(ConfigError::BadField("batch size must be at least 1".into()));
        }
        Ok(())
    }

    /// Apply `--set path.to.field=value` overrides by dotted path. Values
    /// parse as JSON first and fall back to plain strings.
    pub fn apply_overrides(self, sets: &[String]) -> Result<ExperimentConfig, ConfigError> {
        if sets.is_empty() {
            return Ok(self);
        }
        let mut value = serde_json::to_value(&self)?;
        for set in sets {
            let (path, raw) = set
                .split_once('=')
                .ok_or_else(|| ConfigError::BadOverride(set.clone()))?;
            let new = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            let mut slot = &mut value;
            for seg in path.split('.') {
                slot = slot
                    .as_object_mut()
                    .and_then(|m| m.get_mut(seg))
                    .ok_or_else(|| ConfigError::BadOverride(set.clone()))?;
            }
            *slot = new;
        }
        let cfg: ExperimentConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex(&hasher.finalize())
    }

    pub fn shots_count(&self, setting: ShotSetting, train_per_class: usize) -> usize {
        match setting {
            ShotSetting::Count(n) => n,
            ShotSetting::Full => train_per_class,
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config file {path} could not be read: {source}")]
    Missing { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("few-shot list must be strictly increasing (with `full` last)")]
    ShotsNotIncreasing,
    #[error("bad --set override `{0}` (expected path.to.field=value)")]
    BadOverride(String),
    #[error("bad shots value `{0}` (expected an integer or `full`)")]
    BadShots(String),
    #[error("config: {0}")]
    BadField(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_and_hashes_stably() {
        let cfg = ExperimentConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(back.fewshot, cfg.fewshot);
    }

    #[test]
    fn fewshot_parses_numbers_and_full() {
        let json = r#"{"master_seed":1,"out_dir":"x","fewshot":[1,5,"full"]}"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(
            cfg.fewshot,
            vec![ShotSetting::Count(1), ShotSetting::Count(5), ShotSetting::Full]
        );
        cfg.validate().unwrap();
    }

    #[test]
    fn non_increasing_fewshot_is_rejected() {
        let json = r#"{"master_seed":1,"out_dir":"x","fewshot":[5,5]}"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::ShotsNotIncreasing)));
        let json = r#"{"master_seed":1,"out_dir":"x","fewshot":["full",1]}"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::ShotsNotIncreasing)));
    }

    #[test]
    fn dotted_overrides_reach_nested_fields() {
        let cfg = ExperimentConfig::default();
        let before = cfg.hash();
        let cfg = cfg
            .apply_overrides(&["tune.epochs=7".into(), "corpus.samples_per_class=6".into()])
            .unwrap();
        assert_eq!(cfg.tune.epochs, 7);
        assert_eq!(cfg.corpus.samples_per_class, 6);
        assert_ne!(cfg.hash(), before);
        let err = ExperimentConfig::default().apply_overrides(&["no.such.field=1".into()]);
        assert!(matches!(err, Err(ConfigError::BadOverride(_))));
    }
}
