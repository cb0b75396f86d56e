//! The experiment workflows behind every subcommand.
//!
//! Artifact layout under `out_dir`:
//!   corpus/            WAV files + manifest.json
//!   checkpoints/       sed.ckpt, uss.ckpt, uss_joint_<shots>_s<seed>.ckpt
//!   banks/             initial/tuned/joint prompt banks (JSON)
//!   reports/           per-system evaluation reports (JSON + CSV)
//!   projections/       2-D embedding projections (CSV)
//!   runs.jsonl         one line per completed command
//!
//! Every artifact carries the producing config hash; evaluation refuses
//! mismatched bank/checkpoint pairings unless forced.

use std::path::{Path, PathBuf};
use std::time::Instant;

use aptsep_core::apt::{
    init_prompts, init_prompts_random, joint_finetune, tune_prompts, PromptBank, Provenance,
    TuneConfig,
};
use aptsep_core::corpus::{
    build_corpus, fixed_test_pairs, sample_fewshot, CorpusCache, CorpusConfig, CorpusManifest,
    MixtureExample, Split,
};
use aptsep_core::eval::{
    emit_projection, emit_report, evaluate_system, ideal_mask_oracle, project_embeddings,
    EvalReport, ReportFormat, SystemLabel,
};
use aptsep_core::models::{
    enrollment_embeddings, load_checkpoint, pretrain_backbone, save_checkpoint, CheckpointMeta,
    PretrainConfig, PretrainStats, SedModel, UssModel,
};
use aptsep_core::rng::derive_seed;

use crate::config::{ExperimentConfig, ShotSetting};
use crate::runlog::{append, RunRecord};

const TAG_CORPUS: u64 = 0x0c0c;
const TAG_PRETRAIN: u64 = 0x90e0;
const TAG_TEST_PAIRS: u64 = 0x7e57;
const TAG_SUBSET: u64 = 0x5b5e;
const TAG_TUNE: u64 = 0x70ce;
const TAG_RANDOM_BANK: u64 = 0xab1e;

#[derive(Debug, thiserror::Error)]
pub enum WorkflowError {
    #[error("{0}")]
    Message(String),
    #[error("bank {bank} was produced under config {bank_hash} but the checkpoint carries {ckpt_hash}; pass --force to evaluate anyway")]
    HashMismatch { bank: PathBuf, bank_hash: String, ckpt_hash: String },
    #[error("{path}: {source}")]
    MissingArtifact { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Corpus(#[from] aptsep_core::corpus::CorpusError),
    #[error(transparent)]
    Model(#[from] aptsep_core::models::ModelError),
    #[error(transparent)]
    Apt(#[from] aptsep_core::apt::AptError),
    #[error(transparent)]
    Eval(#[from] aptsep_core::eval::EvalError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

/// Worker-thread cap: APT_SEP_THREADS, else min(4, available cores).
pub fn thread_cap() -> usize {
    std::env::var("APT_SEP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get().min(4)).unwrap_or(1)
        })
}

pub fn corpus_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("corpus")
}

pub fn manifest_path(cfg: &ExperimentConfig) -> PathBuf {
    corpus_dir(cfg).join("manifest.json")
}

pub fn sed_ckpt_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("checkpoints/sed.ckpt")
}

pub fn uss_ckpt_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("checkpoints/uss.ckpt")
}

pub fn joint_ckpt_path(cfg: &ExperimentConfig, shots: ShotSetting, run_seed: u64) -> PathBuf {
    cfg.out_dir.join(format!("checkpoints/uss_joint_{}_s{run_seed}.ckpt", shots.label()))
}

pub fn bank_path(cfg: &ExperimentConfig, kind: &str, shots: ShotSetting, run_seed: u64) -> PathBuf {
    cfg.out_dir.join(format!("banks/{kind}_{}_s{run_seed}.json", shots.label()))
}

fn report_stem(label: SystemLabel, bank_file: &Path) -> String {
    let stem = bank_file.file_stem().and_then(|s| s.to_str()).unwrap_or("bank");
    format!("{label}_{stem}")
}

fn log(cfg: &ExperimentConfig, command: &str, seed: u64, start: Instant, metric: &str, value: f64) {
    let record = RunRecord {
        command: command.to_string(),
        config_hash: cfg.hash(),
        seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        headline_metric: metric.to_string(),
        headline_value: value,
    };
    // the log is advisory; failures to append never fail the run
    let _ = append(&cfg.out_dir, &record);
}

// ── corpus ───────────────────────────────────────────────────────────

pub fn gen_corpus(cfg: &ExperimentConfig) -> Result<CorpusManifest, WorkflowError> {
    let start = Instant::now();
    let corpus_cfg = CorpusConfig {
        samples_per_class: cfg.corpus.samples_per_class,
        sample_rate: cfg.corpus.sample_rate,
        clip_seconds: cfg.corpus.clip_seconds,
        ..Default::default()
    };
    let manifest =
        build_corpus(&corpus_cfg, &corpus_dir(cfg), derive_seed(cfg.master_seed, TAG_CORPUS))?;
    log(cfg, "gen-corpus", cfg.master_seed, start, "files", manifest.entries.len() as f64);
    Ok(manifest)
}

pub fn load_manifest(cfg: &ExperimentConfig) -> Result<CorpusManifest, WorkflowError> {
    let path = manifest_path(cfg);
    if !path.exists() {
        return Err(WorkflowError::Message(format!(
            "corpus manifest not found at {}; run gen-corpus first",
            path.display()
        )));
    }
    Ok(CorpusManifest::load(&path)?)
}

// ── backbones ────────────────────────────────────────────────────────

pub struct PretrainOutcome {
    pub sed_path: PathBuf,
    pub uss_path: PathBuf,
    pub stats: PretrainStats,
}

pub fn pretrain(cfg: &ExperimentConfig) -> Result<PretrainOutcome, WorkflowError> {
    let start = Instant::now();
    let manifest = load_manifest(cfg)?;
    let cache = CorpusCache::load(&manifest)?;
    let seen = manifest.split_view(Split::Seen);
    let pcfg = PretrainConfig {
        sed_epochs: cfg.pretrain.sed_epochs,
        uss_epochs: cfg.pretrain.uss_epochs,
        lr: cfg.pretrain.lr,
        batch: cfg.pretrain.batch,
        threads: thread_cap(),
    };
    let (sed, uss, stats) = pretrain_backbone(
        &seen,
        &cache,
        &cfg.dsp,
        cfg.embed_dim,
        &pcfg,
        derive_seed(cfg.master_seed, TAG_PRETRAIN),
    )?;

    std::fs::create_dir_all(cfg.out_dir.join("checkpoints"))?;
    let meta = CheckpointMeta {
        config_hash: cfg.hash(),
        seed: cfg.master_seed,
        epoch: cfg.pretrain.sed_epochs + cfg.pretrain.uss_epochs,
        class_ids: Vec::new(),
    };
    let sed_path = sed_ckpt_path(cfg);
    let uss_path = uss_ckpt_path(cfg);
    save_checkpoint(&sed.to_checkpoint(true, meta.clone()), &sed_path)?;
    save_checkpoint(&uss.to_checkpoint(true, meta), &uss_path)?;
    log(cfg, "pretrain", cfg.master_seed, start, "sed_heldout_accuracy", stats.sed_heldout_accuracy);
    Ok(PretrainOutcome { sed_path, uss_path, stats })
}

pub fn load_sed(cfg: &ExperimentConfig) -> Result<SedModel, WorkflowError> {
    let path = sed_ckpt_path(cfg);
    let ckpt = load_checkpoint(&path)
        .map_err(|e| missing_or(e, &path, "run pretrain first"))?;
    Ok(SedModel::from_checkpoint(&ckpt, &cfg.dsp)?)
}

pub fn load_uss_at(cfg: &ExperimentConfig, path: &Path) -> Result<(UssModel, String), WorkflowError> {
    let ckpt = load_checkpoint(path)
        .map_err(|e| missing_or(e, path, "run pretrain first"))?;
    let hash = ckpt.meta.config_hash.clone();
    Ok((UssModel::from_checkpoint(&ckpt, &cfg.dsp)?, hash))
}

fn missing_or(
    e: aptsep_core::models::ModelError,
    path: &Path,
    hint: &str,
) -> WorkflowError {
    match e {
        aptsep_core::models::ModelError::Io(source)
            if source.kind() == std::io::ErrorKind::NotFound =>
        {
            WorkflowError::Message(format!("{} not found; {hint}", path.display()))
        }
        other => WorkflowError::Model(other),
    }
}

// ── prompts ──────────────────────────────────────────────────────────

fn shot_manifest(
    cfg: &ExperimentConfig,
    manifest: &CorpusManifest,
    shots: ShotSetting,
    run_seed: u64,
) -> Result<CorpusManifest, WorkflowError> {
    let unseen = manifest.split_view(Split::Unseen);
    let count = cfg.shots_count(shots, unseen.train_count());
    Ok(sample_fewshot(&unseen, count, derive_seed(run_seed, TAG_SUBSET))?)
}

pub struct BankOutcome {
    pub bank: PromptBank,
    pub path: PathBuf,
}

pub fn init_bank(
    cfg: &ExperimentConfig,
    shots: ShotSetting,
    run_seed: u64,
    random_init: bool,
) -> Result<BankOutcome, WorkflowError> {
    let start = Instant::now();
    let manifest = load_manifest(cfg)?;
    let cache = CorpusCache::load(&manifest)?;
    let sed = load_sed(cfg)?;
    let shot_set = shot_manifest(cfg, &manifest, shots, run_seed)?;
    let bank = if random_init {
        init_prompts_random(
            shot_set.class_ids(),
            cfg.embed_dim,
            &cfg.hash(),
            derive_seed(run_seed, TAG_RANDOM_BANK),
        )
    } else {
        init_prompts(&sed, &shot_set, &cache, &cfg.dsp, &cfg.hash(), run_seed)?
    };
    std::fs::create_dir_all(cfg.out_dir.join("banks"))?;
    let path = bank_path(cfg, "initial", shots, run_seed);
    bank.save(&path)?;
    log(cfg, "init-prompts", run_seed, start, "prompt_parameters", bank.count_trainable() as f64);
    Ok(BankOutcome { bank, path })
}

pub struct TuneOutcome {
    pub bank: PromptBank,
    pub path: PathBuf,
    pub epoch_losses: Vec<f32>,
}

pub fn tune_bank(
    cfg: &ExperimentConfig,
    shots: ShotSetting,
    run_seed: u64,
) -> Result<TuneOutcome, WorkflowError> {
    let start = Instant::now();
    let manifest = load_manifest(cfg)?;
    let cache = CorpusCache::load(&manifest)?;
    let sed = load_sed(cfg)?;
    let (uss, _) = load_uss_at(cfg, &uss_ckpt_path(cfg))?;
    let initial_path = bank_path(cfg, "initial", shots, run_seed);
    if !initial_path.exists() {
        return Err(WorkflowError::Message(format!(
            "initial bank not found at {}; run init-prompts first",
            initial_path.display()
        )));
    }
    let bank = PromptBank::load(&initial_path)?;
    let shot_set = shot_manifest(cfg, &manifest, shots, run_seed)?;
    let tcfg = tune_config(cfg, shots, run_seed);
    let (tuned, stats) = tune_prompts(&uss, &sed, &bank, &shot_set, &cache, &cfg.dsp, &tcfg)?;
    let path = bank_path(cfg, "tuned", shots, run_seed);
    tuned.save(&path)?;
    let last = stats.epoch_losses.last().copied().unwrap_or(f32::NAN);
    log(cfg, "tune", run_seed, start, "final_epoch_loss", last as f64);
    Ok(TuneOutcome { bank: tuned, path, epoch_losses: stats.epoch_losses })
}

fn tune_config(cfg: &ExperimentConfig, shots: ShotSetting, run_seed: u64) -> TuneConfig {
    let shots_code = match shots {
        ShotSetting::Count(n) => n as u64,
        ShotSetting::Full => u64::MAX,
    };
    TuneConfig {
        lr: cfg.tune.lr,
        batch: cfg.tune.batch,
        epochs: cfg.tune.epochs,
        steps_per_epoch: None,
        seed: derive_seed(run_seed, TAG_TUNE ^ shots_code),
        threads: thread_cap(),
    }
}

pub struct JointOutcome {
    pub bank: PromptBank,
    pub bank_path: PathBuf,
    pub ckpt_path: PathBuf,
    pub epoch_losses: Vec<f32>,
}

pub fn joint_tune(
    cfg: &ExperimentConfig,
    shots: ShotSetting,
    run_seed: u64,
) -> Result<JointOutcome, WorkflowError> {
    let start = Instant::now();
    let manifest = load_manifest(cfg)?;
    let cache = CorpusCache::load(&manifest)?;
    let (uss, _) = load_uss_at(cfg, &uss_ckpt_path(cfg))?;
    let initial_path = bank_path(cfg, "initial", shots, run_seed);
    if !initial_path.exists() {
        return Err(WorkflowError::Message(format!(
            "initial bank not found at {}; run init-prompts first",
            initial_path.display()
        )));
    }
    let bank = PromptBank::load(&initial_path)?;
    let shot_set = shot_manifest(cfg, &manifest, shots, run_seed)?;
    let tcfg = tune_config(cfg, shots, run_seed);
    let (new_uss, tuned, stats) =
        joint_finetune(&uss, &bank, &shot_set, &cache, &cfg.dsp, &tcfg)?;

    let ckpt_path = joint_ckpt_path(cfg, shots, run_seed);
    let meta = CheckpointMeta {
        config_hash: cfg.hash(),
        seed: run_seed,
        epoch: cfg.tune.epochs,
        class_ids: Vec::new(),
    };
    save_checkpoint(&new_uss.to_checkpoint(false, meta), &ckpt_path)?;
    let bank_file = bank_path(cfg, "joint", shots, run_seed);
    tuned.save(&bank_file)?;
    let last = stats.epoch_losses.last().copied().unwrap_or(f32::NAN);
    log(cfg, "joint-tune", run_seed, start, "final_epoch_loss", last as f64);
    Ok(JointOutcome { bank: tuned, bank_path: bank_file, ckpt_path, epoch_losses: stats.epoch_losses })
}

// ── evaluation ───────────────────────────────────────────────────────

/// The shared evaluation material: one fixed, seeded mixture per unseen
/// test target.
pub fn test_mixtures(
    cfg: &ExperimentConfig,
    manifest: &CorpusManifest,
    cache: &CorpusCache,
) -> Result<Vec<MixtureExample>, WorkflowError> {
    let unseen = manifest.split_view(Split::Unseen);
    Ok(fixed_test_pairs(
        &unseen,
        cache,
        cfg.dsp.clip_len(),
        derive_seed(cfg.master_seed, TAG_TEST_PAIRS),
    )?)
}

pub struct EvalOutcome {
    pub report: EvalReport,
    pub json_path: PathBuf,
    pub csv_path: PathBuf,
}

pub fn eval_bank(
    cfg: &ExperimentConfig,
    bank_file: &Path,
    uss_file: Option<&Path>,
    baseline_report: Option<&EvalReport>,
    force: bool,
) -> Result<EvalOutcome, WorkflowError> {
    let start = Instant::now();
    if !bank_file.exists() {
        return Err(WorkflowError::MissingArtifact {
            path: bank_file.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "prompt bank not found"),
        });
    }
    let bank = PromptBank::load(bank_file)?;
    let default_uss = uss_ckpt_path(cfg);
    let uss_file = uss_file.unwrap_or(&default_uss);
    let (uss, ckpt_hash) = load_uss_at(cfg, uss_file)?;
    if bank.config_hash != ckpt_hash && !force {
        return Err(WorkflowError::HashMismatch {
            bank: bank_file.to_path_buf(),
            bank_hash: bank.config_hash.clone(),
            ckpt_hash,
        });
    }
    let manifest = load_manifest(cfg)?;
    let cache = CorpusCache::load(&manifest)?;
    let mixtures = test_mixtures(cfg, &manifest, &cache)?;
    let label = match bank.provenance {
        Provenance::Initial => SystemLabel::BaselineZeroShot,
        Provenance::Tuned => SystemLabel::Apt,
        Provenance::JointTuned => SystemLabel::Joint,
    };
    let report = evaluate_system(&uss, &bank, &mixtures, label, bank.seed)?;

    std::fs::create_dir_all(cfg.out_dir.join("reports"))?;
    let stem = report_stem(label, bank_file);
    let json_path = cfg.out_dir.join(format!("reports/{stem}.json"));
    let csv_path = cfg.out_dir.join(format!("reports/{stem}.csv"));
    emit_report(&report, baseline_report, &json_path, ReportFormat::Json)?;
    emit_report(&report, baseline_report, &csv_path, ReportFormat::Csv)?;
    log(cfg, "eval", bank.seed, start, "overall_median_sdr", report.overall_median_sdr);
    Ok(EvalOutcome { report, json_path, csv_path })
}

/// The ideal-ratio-mask ceiling on the shared test set.
pub fn oracle_report(cfg: &ExperimentConfig) -> Result<EvalReport, WorkflowError> {
    let manifest = load_manifest(cfg)?;
    let cache = CorpusCache::load(&manifest)?;
    let mixtures = test_mixtures(cfg, &manifest, &cache)?;
    Ok(ideal_mask_oracle(&mixtures, &cfg.dsp)?)
}

// ── sweeps ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepCell {
    pub shots: String,
    pub seed: u64,
    pub baseline_median: f64,
    pub apt_median: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepSummary {
    pub cells: Vec<SweepCell>,
    /// Median across seeds per shot setting: (shots, baseline, apt).
    pub across_seeds: Vec<(String, f64, f64)>,
}

pub struct SweepOutcome {
    pub summary: SweepSummary,
    pub report_files: Vec<PathBuf>,
}

/// One baseline/APT evaluation pair per (seed, shot setting).
pub fn fewshot_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome, WorkflowError> {
    let start = Instant::now();
    let mut cells = Vec::new();
    let mut report_files = Vec::new();
    for offset in 0..cfg.seeds as u64 {
        let run_seed = cfg.master_seed + offset;
        for &shots in &cfg.fewshot {
            let init = init_bank(cfg, shots, run_seed, false)?;
            let tuned = tune_bank(cfg, shots, run_seed)?;
            let base_eval = eval_json_only(cfg, &init.path, None)?;
            let apt_eval = eval_json_only(cfg, &tuned.path, Some(&base_eval.report))?;
            cells.push(SweepCell {
                shots: shots.label(),
                seed: run_seed,
                baseline_median: base_eval.report.overall_median_sdr,
                apt_median: apt_eval.report.overall_median_sdr,
            });
            report_files.push(base_eval.json_path);
            report_files.push(apt_eval.json_path);
        }
    }
    let across_seeds = cfg
        .fewshot
        .iter()
        .map(|s| {
            let label = s.label();
            let base: Vec<f64> =
                cells.iter().filter(|c| c.shots == label).map(|c| c.baseline_median).collect();
            let apt: Vec<f64> =
                cells.iter().filter(|c| c.shots == label).map(|c| c.apt_median).collect();
            (
                label,
                aptsep_core::eval::median(&base).unwrap_or(f64::NAN),
                aptsep_core::eval::median(&apt).unwrap_or(f64::NAN),
            )
        })
        .collect();
    let summary = SweepSummary { cells, across_seeds };
    std::fs::create_dir_all(cfg.out_dir.join("reports"))?;
    std::fs::write(
        cfg.out_dir.join("reports/sweep_summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    log(cfg, "fewshot-sweep", cfg.master_seed, start, "report_files", report_files.len() as f64);
    Ok(SweepOutcome { summary, report_files })
}

/// Sweep-internal evaluation: JSON report only.
fn eval_json_only(
    cfg: &ExperimentConfig,
    bank_file: &Path,
    baseline: Option<&EvalReport>,
) -> Result<EvalOutcome, WorkflowError> {
    let bank = PromptBank::load(bank_file)?;
    let (uss, _) = load_uss_at(cfg, &uss_ckpt_path(cfg))?;
    let manifest = load_manifest(cfg)?;
    let cache = CorpusCache::load(&manifest)?;
    let mixtures = test_mixtures(cfg, &manifest, &cache)?;
    let label = match bank.provenance {
        Provenance::Initial => SystemLabel::BaselineZeroShot,
        Provenance::Tuned => SystemLabel::Apt,
        Provenance::JointTuned => SystemLabel::Joint,
    };
    let report = evaluate_system(&uss, &bank, &mixtures, label, bank.seed)?;
    std::fs::create_dir_all(cfg.out_dir.join("reports"))?;
    let stem = report_stem(label, bank_file);
    let json_path = cfg.out_dir.join(format!("reports/{stem}.json"));
    emit_report(&report, baseline, &json_path, ReportFormat::Json)?;
    Ok(EvalOutcome { report, json_path: json_path.clone(), csv_path: json_path })
}

// ── projections ──────────────────────────────────────────────────────

pub fn export_embeddings(
    cfg: &ExperimentConfig,
    initial_file: &Path,
    tuned_file: &Path,
) -> Result<PathBuf, WorkflowError> {
    let start = Instant::now();
    let manifest = load_manifest(cfg)?;
    let cache = CorpusCache::load(&manifest)?;
    let sed = load_sed(cfg)?;
    let initial = PromptBank::load(initial_file)?;
    let tuned = PromptBank::load(tuned_file)?;

    let unseen = manifest.split_view(Split::Unseen);
    let train_only = unseen.with_entries(
        unseen.classes.iter().flat_map(|c| unseen.train_of(c.class_id)).cloned().collect(),
    );
    let embeddings = enrollment_embeddings(&sed, &train_only, &cache, &cfg.dsp)?;
    let samples: Vec<(usize, Vec<f32>)> =
        embeddings.into_iter().map(|((class_id, _), e)| (class_id, e)).collect();
    let set = project_embeddings(&samples, &initial, &tuned)?;

    std::fs::create_dir_all(cfg.out_dir.join("projections"))?;
    let stem = tuned_file.file_stem().and_then(|s| s.to_str()).unwrap_or("bank");
    let path = cfg.out_dir.join(format!("projections/embeddings_{stem}.csv"));
    emit_projection(&set, &path)?;
    log(cfg, "export-embeddings", cfg.master_seed, start, "points", set.points.len() as f64);
    Ok(path)
}
