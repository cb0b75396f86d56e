//! Backbone pretraining on the seen classes.
//!
//! Phase A trains the encoder as a classifier with softmax cross-entropy
//! over random one-second crops. Phase B freezes the encoder and trains
//! the separator with the waveform L1 loss on simulated seen-class
//! mixtures, conditioning each example on the enrollment embedding of its
//! clean target sample (the one-shot query). Both phases use Adam at the
//! shared learning rate and batch size.

use std::collections::BTreeMap;

use crate::corpus::{CorpusCache, CorpusManifest, MixtureStream, Pool};
use crate::dsp::{mel_spectrogram, DspConfig, Waveform};
use crate::grad::Tensor;
use crate::rng::{derive_seed, Rng};

use super::adam::Adam;
use super::sed::{
    bind_sed, build_sed_graph, center_crop, sed_forward, sed_logits, SedDims, SedMode, SedModel,
};
use super::trainer::{SepJob, SepTrainer};
use super::uss::{prepare_sep_input, TrainSet, UssDims, UssModel};
use super::ModelError;

const TAG_SED_INIT: u64 = 0x5ed0;
const TAG_SED_ORDER: u64 = 0x5ed1;
const TAG_SED_CROP: u64 = 0x5ed2;
const TAG_USS_INIT: u64 = 0x0551;
const TAG_USS_STREAM: u64 = 0x0552;
const TAG_USS_AUG: u64 = 0x0553;

/// Radius cap for conditioning-embedding perturbations during separator
/// training. Enrollment embeddings of one class cluster tightly, so the
/// raw conditioning set is effectively a handful of points; training on
/// a ball around each point keeps the separator's response smooth where
/// novel class embeddings land (cosine 0.88-0.99 of a seen class).
const EMBED_AUG_RADIUS: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct PretrainConfig {
    pub sed_epochs: usize,
    pub uss_epochs: usize,
    pub lr: f32,
    pub batch: usize,
    /// Worker threads for batched separator passes.
    pub threads: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig { sed_epochs: 40, uss_epochs: 150, lr: 1e-3, batch: 4, threads: 4 }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainStats {
    pub sed_epoch_losses: Vec<f32>,
    pub sed_heldout_accuracy: f64,
    pub uss_epoch_losses: Vec<f32>,
}

/// Per-tensor Adam states keyed to a model's parameter list.
pub(crate) struct ParamOptimizer {
    opts: Vec<Adam>,
}

impl ParamOptimizer {
    pub(crate) fn new(sizes: &[usize], lr: f32) -> Self {
        ParamOptimizer { opts: sizes.iter().map(|&n| Adam::new(n, lr)).collect() }
    }

    pub(crate) fn step_tensor(&mut self, idx: usize, params: &mut [f32], grads: &[f32]) {
        self.opts[idx].step(params, grads);
    }
}

/// Train both backbones on the seen split. Returns the trained models and
/// phase statistics; checkpoint persistence (with every tensor flagged
/// frozen) is the caller's move.
pub fn pretrain_backbone(
    seen: &CorpusManifest,
    cache: &CorpusCache,
    dsp: &DspConfig,
    embed_dim: usize,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<(SedModel, UssModel, PretrainStats), ModelError> {
    if seen.classes.len() < 2 {
        return Err(ModelError::Corpus(crate::corpus::CorpusError::FewerThanTwoClasses));
    }
    let (sed, sed_epoch_losses) = train_sed(seen, cache, dsp, embed_dim, cfg, seed)?;
    let sed_heldout_accuracy = heldout_accuracy(&sed, seen, cache, dsp)?;
    let (uss, uss_epoch_losses) = train_uss(&sed, seen, cache, dsp, cfg, seed)?;
    Ok((sed, uss, PretrainStats { sed_epoch_losses, sed_heldout_accuracy, uss_epoch_losses }))
}

fn class_index(model: &SedModel, class_id: usize) -> Result<usize, ModelError> {
    model
        .class_ids
        .iter()
        .position(|&c| c == class_id)
        .ok_or(ModelError::ClassNotInHead { class_id })
}

fn train_sed(
    seen: &CorpusManifest,
    cache: &CorpusCache,
    dsp: &DspConfig,
    embed_dim: usize,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<(SedModel, Vec<f32>), ModelError> {
    let class_ids = seen.class_ids();
    let dims = SedDims::from_dsp(dsp, embed_dim, class_ids.len());
    let mut model = SedModel::init(dims, class_ids, derive_seed(seed, TAG_SED_INIT));

    let train_entries: Vec<(usize, usize)> = seen
        .classes
        .iter()
        .flat_map(|c| seen.train_of(c.class_id))
        .map(|e| (e.class_id, e.sample_index))
        .collect();
    let clip = dsp.clip_len();
    let sizes: Vec<usize> = model.params.iter().map(|t| t.tensor.numel()).collect();
    let mut opt = ParamOptimizer::new(&sizes, cfg.lr);
    let mut crop_rng = Rng::new(derive_seed(seed, TAG_SED_CROP));
    let mut epoch_losses = Vec::with_capacity(cfg.sed_epochs);

    for epoch in 0..cfg.sed_epochs {
        let mut order: Vec<usize> = (0..train_entries.len()).collect();
        Rng::new(derive_seed(seed, TAG_SED_ORDER + epoch as u64)).shuffle(&mut order);
        let mut epoch_loss = 0.0f64;
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch) {
            let mut grad_acc: BTreeMap<String, Vec<f32>> = BTreeMap::new();
            for &idx in chunk {
                let (class_id, sample_index) = train_entries[idx];
                let wave = cache.get(class_id, sample_index)?;
                let off = crop_rng.below(wave.len() - clip + 1);
                let cropped =
                    Waveform::new(wave.samples[off..off + clip].to_vec(), wave.sample_rate)?;
                let mel = mel_spectrogram(&cropped, dsp)?;
                let mel_input = Tensor::new(&[1, mel.frames, mel.n_mels], mel.data)?;
                let target = class_index(&model, class_id)?;
                let mut built = build_sed_graph(&model.dims, SedMode::Classify { target }, true)?;
                let bindings = bind_sed(&built, &model, mel_input);
                let loss = built.graph.evaluate(&bindings)?.data()[0];
                if !loss.is_finite() {
                    return Err(ModelError::Divergence { step: epoch * order.len() + steps });
                }
                epoch_loss += loss as f64;
                let grads = built.graph.backpropagate(&Tensor::scalar(1.0))?;
                for (name, &leaf) in &built.param_leaves {
                    if let Some(g) = grads.get(&leaf) {
                        let acc = grad_acc
                            .entry(name.clone())
                            .or_insert_with(|| vec![0.0; g.numel()]);
                        for (a, &v) in acc.iter_mut().zip(g.data()) {
                            *a += v;
                        }
                    }
                }
            }
            let scale = 1.0 / chunk.len() as f32;
            for (i, t) in model.params.iter_mut().enumerate() {
                if let Some(g) = grad_acc.get_mut(&t.name) {
                    for v in g.iter_mut() {
                        *v *= scale;
                    }
                    opt.step_tensor(i, t.tensor.data_mut(), g);
                }
            }
            steps += 1;
        }
        epoch_losses.push((epoch_loss / order.len() as f64) as f32);
    }
    Ok((model, epoch_losses))
}

/// Fraction of held-out seen-class clips (center crops) the classifier
/// head labels correctly.
pub fn heldout_accuracy(
    model: &SedModel,
    seen: &CorpusManifest,
    cache: &CorpusCache,
    dsp: &DspConfig,
) -> Result<f64, ModelError> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for class in &seen.classes {
        for entry in seen.test_of(class.class_id) {
            let wave = cache.get(entry.class_id, entry.sample_index)?;
            let cropped = center_crop(wave, dsp.clip_len())?;
            let logits = sed_logits(model, &cropped, dsp)?;
            let predicted = logits
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            if predicted == class_index(model, entry.class_id)? {
                correct += 1;
            }
            total += 1;
        }
    }
    Ok(correct as f64 / total as f64)
}

/// Enrollment embeddings (center crop through the encoder) for every
/// entry of a manifest, keyed by (class_id, sample_index).
pub fn enrollment_embeddings(
    model: &SedModel,
    manifest: &CorpusManifest,
    cache: &CorpusCache,
    dsp: &DspConfig,
) -> Result<BTreeMap<(usize, usize), Vec<f32>>, ModelError> {
    let mut out = BTreeMap::new();
    for entry in &manifest.entries {
        let wave = cache.get(entry.class_id, entry.sample_index)?;
        let cropped = center_crop(wave, dsp.clip_len())?;
        let emb = sed_forward(model, &cropped, dsp)?;
        out.insert((entry.class_id, entry.sample_index), emb);
    }
    Ok(out)
}

/// Displace an embedding by a random direction of seeded radius in
/// [0, EMBED_AUG_RADIUS], then project back to the unit sphere.
fn perturb_on_sphere(mut e: Vec<f32>, rng: &mut Rng) -> Vec<f32> {
    let radius = rng.uniform(0.0, EMBED_AUG_RADIUS);
    let dir: Vec<f64> = (0..e.len()).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
    for (v, d) in e.iter_mut().zip(&dir) {
        *v += (d * radius / norm) as f32;
    }
    let out_norm: f64 = e.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
    if out_norm > 1e-6 {
        let inv = (1.0 / out_norm) as f32;
        for v in &mut e {
            *v *= inv;
        }
    }
    e
}

fn train_uss(
    sed: &SedModel,
    seen: &CorpusManifest,
    cache: &CorpusCache,
    dsp: &DspConfig,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<(UssModel, Vec<f32>), ModelError> {
    let dims = UssDims::from_dsp(dsp, sed.dims.embed_dim);
    let mut model = UssModel::init(dims, derive_seed(seed, TAG_USS_INIT));
    let embeddings = enrollment_embeddings(sed, seen, cache, dsp)?;

    let n_train: usize = seen.classes.iter().map(|c| seen.train_of(c.class_id).len()).sum();
    let steps_per_epoch = (n_train / cfg.batch).max(1);
    let mut stream =
        MixtureStream::new(seen, Pool::Train, dsp.clip_len(), derive_seed(seed, TAG_USS_STREAM))?;
    let mut aug_rng = Rng::new(derive_seed(seed, TAG_USS_AUG));
    let mut trainer = SepTrainer::new(&model, TrainSet::MODEL_ONLY, cfg.threads)?;
    let sizes: Vec<usize> = model.params.iter().map(|t| t.tensor.numel()).collect();
    let mut opt = ParamOptimizer::new(&sizes, cfg.lr);
    let mut epoch_losses = Vec::with_capacity(cfg.uss_epochs);

    for epoch in 0..cfg.uss_epochs {
        let mut epoch_loss = 0.0f64;
        for step in 0..steps_per_epoch {
            let mut jobs = Vec::with_capacity(cfg.batch);
            for _ in 0..cfg.batch {
                let ex = stream.next_example(cache)?;
                let input = prepare_sep_input(&ex.mixture, &dims)?;
                let prompt = embeddings
                    .get(&ex.target_entry)
                    .ok_or(ModelError::MissingEmbedding {
                        class_id: ex.target_entry.0,
                        sample_index: ex.target_entry.1,
                    })?
                    .clone();
                let prompt = perturb_on_sphere(prompt, &mut aug_rng);
                let target = Tensor::from_vec(ex.target.samples.clone());
                jobs.push(SepJob { input, prompt, target });
            }
            let results = trainer.run_batch(&model, &jobs)?;
            let mut grad_acc: BTreeMap<String, Vec<f32>> = BTreeMap::new();
            for r in &results {
                if !r.loss.is_finite() {
                    return Err(ModelError::Divergence { step: epoch * steps_per_epoch + step });
                }
                epoch_loss += r.loss as f64;
                for (name, g) in r.model_grads.as_ref().expect("model gradients requested") {
                    let acc = grad_acc.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
                    for (a, &v) in acc.iter_mut().zip(g) {
                        *a += v;
                    }
                }
            }
            let scale = 1.0 / jobs.len() as f32;
            for (i, t) in model.params.iter_mut().enumerate() {
                if let Some(g) = grad_acc.get_mut(&t.name) {
                    for v in g.iter_mut() {
                        *v *= scale;
                    }
                    opt.step_tensor(i, t.tensor.data_mut(), g);
                }
            }
        }
        epoch_losses.push((epoch_loss / (steps_per_epoch * cfg.batch) as f64) as f32);
    }
    Ok((model, epoch_losses))
}
