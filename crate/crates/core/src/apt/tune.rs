//! Stage-2 optimization: gradient descent on prompt rows against a frozen
//! separator, plus the joint fine-tuning upper bound.
//!
//! Batches are single-class: batch t trains class t mod K on the next
//! examples of that class's own seeded mixture stream, and every prompt
//! row owns an independent Adam state stepped only on its batches. Class
//! k's trajectory therefore depends only on (its initial row, its stream
//! seed, shots, epochs) — never on which other classes are tuned — which
//! is what makes per-class results composable.

use crate::corpus::{ClassMixtureStream, CorpusCache, CorpusManifest, Pool};
use crate::dsp::DspConfig;
use crate::grad::Tensor;
use crate::models::{
    prepare_sep_input, Adam, SedModel, SepJob, SepTrainer, TrainSet, UssModel,
};
use crate::rng::derive_seed;

use super::bank::{PromptBank, Provenance};
use super::AptError;

#[derive(Debug, Clone)]
pub struct TuneConfig {
    pub lr: f32,
    pub batch: usize,
    pub epochs: usize,
    /// Override for the per-epoch step count; the default ties compute to
    /// enrollment volume: ceil(K · shots · 4 / batch).
    pub steps_per_epoch: Option<usize>,
    pub seed: u64,
    pub threads: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig { lr: 3e-4, batch: 4, epochs: 100, steps_per_epoch: None, seed: 0, threads: 4 }
    }
}

impl TuneConfig {
    fn validate(&self) -> Result<(), AptError> {
        if !(self.lr > 0.0) {
            return Err(AptError::BadConfig("learning rate must be positive".into()));
        }
        if self.batch == 0 {
            return Err(AptError::BadConfig("batch size must be at least 1".into()));
        }
        Ok(())
    }

    /// Batches each class receives per epoch.
    fn per_class_steps(&self, n_classes: usize, shots: usize) -> usize {
        match self.steps_per_epoch {
            Some(total) => total.div_ceil(n_classes.max(1)).max(1),
            None => (shots * 4).div_ceil(self.batch).max(1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TuneStats {
    /// Mean per-example training loss of each epoch.
    pub epoch_losses: Vec<f32>,
    /// Scalars tracked by the prompt optimizer (K x D during prompt-only
    /// tuning).
    pub optimizer_params_tracked: usize,
}

const TAG_CLASS_STREAM: u64 = 0x7a11;

/// Optimize only the prompt rows of `bank` against the frozen separator
/// on simulated mixtures from `train_manifest`. The encoder rides along
/// untouched; it is accepted here so callers keep the full frozen
/// backbone pair in scope, mirroring how the artifacts travel together.
pub fn tune_prompts(
    uss: &UssModel,
    _sed_frozen: &SedModel,
    bank: &PromptBank,
    train_manifest: &CorpusManifest,
    cache: &CorpusCache,
    dsp: &DspConfig,
    cfg: &TuneConfig,
) -> Result<(PromptBank, TuneStats), AptError> {
    cfg.validate()?;
    if bank.provenance != Provenance::Initial {
        return Err(AptError::BankNotInitial);
    }
    let mut tuned = bank.clone();
    let stats = tune_loop(uss, None, &mut tuned, train_manifest, cache, dsp, cfg)?;
    tuned.provenance = Provenance::Tuned;
    tuned.seed = cfg.seed;
    Ok((tuned, stats))
}

/// Upper-bound variant: prompts and separator parameters both train.
/// Returns the updated separator as a new value; the input model (and any
/// checkpoint behind it) is never written to.
pub fn joint_finetune(
    uss: &UssModel,
    bank: &PromptBank,
    train_manifest: &CorpusManifest,
    cache: &CorpusCache,
    dsp: &DspConfig,
    cfg: &TuneConfig,
) -> Result<(UssModel, PromptBank, TuneStats), AptError> {
    cfg.validate()?;
    if bank.provenance != Provenance::Initial {
        return Err(AptError::BankNotInitial);
    }
    let mut model = uss.clone();
    let mut tuned = bank.clone();
    let stats = tune_loop(uss, Some(&mut model), &mut tuned, train_manifest, cache, dsp, cfg)?;
    tuned.provenance = Provenance::JointTuned;
    tuned.seed = cfg.seed;
    Ok((model, tuned, stats))
}

/// Shared loop. `joint_model` of None means prompt-only tuning against
/// `frozen`; Some(m) means m's parameters update as well.
fn tune_loop(
    frozen: &UssModel,
    mut joint_model: Option<&mut UssModel>,
    bank: &mut PromptBank,
    train_manifest: &CorpusManifest,
    cache: &CorpusCache,
    dsp: &DspConfig,
    cfg: &TuneConfig,
) -> Result<TuneStats, AptError> {
    for &class_id in &bank.class_ids {
        if train_manifest.class(class_id).is_none() {
            return Err(AptError::ClassNotInBank { class_id });
        }
    }
    let k = bank.class_ids.len();
    let d = bank.embed_dim;
    let shots = bank
        .class_ids
        .iter()
        .map(|&c| train_manifest.train_of(c).len())
        .min()
        .unwrap_or(0);
    if shots == 0 {
        return Err(AptError::EmptyClass { class_id: bank.class_ids[0] });
    }
    let per_class_steps = cfg.per_class_steps(k, shots);

    let mut streams: Vec<ClassMixtureStream> = bank
        .class_ids
        .iter()
        .map(|&c| {
            ClassMixtureStream::new(
                train_manifest,
                c,
                Pool::Train,
                dsp.clip_len(),
                derive_seed(cfg.seed, TAG_CLASS_STREAM ^ ((c as u64) << 8)),
            )
        })
        .collect::<Result<_, _>>()?;

    let train_set =
        if joint_model.is_some() { TrainSet::JOINT } else { TrainSet::PROMPT_ONLY };
    let mut trainer = SepTrainer::new(frozen, train_set, cfg.threads)?;
    let mut row_opts: Vec<Adam> = (0..k).map(|_| Adam::new(d, cfg.lr)).collect();
    let mut model_opt: Option<Vec<Adam>> = joint_model.as_ref().map(|m| {
        m.params.iter().map(|t| Adam::new(t.tensor.numel(), cfg.lr)).collect()
    });

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut global_step = 0usize;
    for _epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0f64;
        let mut epoch_examples = 0usize;
        for round in 0..per_class_steps {
            let _ = round;
            for slot in 0..k {
                let class_id = bank.class_ids[slot];
                let mut jobs = Vec::with_capacity(cfg.batch);
                for _ in 0..cfg.batch {
                    let ex = streams[slot].next_example(cache)?;
                    let model_now: &UssModel =
                        joint_model.as_deref().unwrap_or(frozen);
                    let input = prepare_sep_input(&ex.mixture, &model_now.dims)?;
                    jobs.push(SepJob {
                        input,
                        prompt: bank.row(class_id)?.to_vec(),
                        target: Tensor::from_vec(ex.target.samples.clone()),
                    });
                }
                let model_now: &UssModel = joint_model.as_deref().unwrap_or(frozen);
                let results = trainer.run_batch(model_now, &jobs)?;

                let mut prompt_grad = vec![0.0f32; d];
                let mut model_grad_acc: std::collections::BTreeMap<String, Vec<f32>> =
                    Default::default();
                for r in &results {
                    if !r.loss.is_finite() {
                        return Err(AptError::NonFiniteLoss { step: global_step });
                    }
                    epoch_loss += r.loss as f64;
                    let g = r.prompt_grad.as_ref().expect("prompt gradients requested");
                    for (a, &v) in prompt_grad.iter_mut().zip(g) {
                        *a += v;
                    }
                    if let Some(mg) = r.model_grads.as_ref() {
                        for (name, g) in mg {
                            let acc = model_grad_acc
                                .entry(name.clone())
                                .or_insert_with(|| vec![0.0; g.len()]);
                            for (a, &v) in acc.iter_mut().zip(g) {
                                *a += v;
                            }
                        }
                    }
                }
                epoch_examples += jobs.len();
                let scale = 1.0 / jobs.len() as f32;
                for v in prompt_grad.iter_mut() {
                    *v *= scale;
                }
                row_opts[slot].step(bank.row_mut(class_id)?, &prompt_grad);

                if let (Some(model), Some(opts)) = (joint_model.as_deref_mut(), model_opt.as_mut())
                {
                    for (i, t) in model.params.iter_mut().enumerate() {
                        if let Some(g) = model_grad_acc.get_mut(&t.name) {
                            for v in g.iter_mut() {
                                *v *= scale;
                            }
                            opts[i].step(t.tensor.data_mut(), g);
                        }
                    }
                }
                global_step += 1;
            }
        }
        if epoch_examples > 0 {
            epoch_losses.push((epoch_loss / epoch_examples as f64) as f32);
        }
    }

    Ok(TuneStats {
        epoch_losses,
        optimizer_params_tracked: row_opts.iter().map(|o| o.state_len()).sum(),
    })
}
