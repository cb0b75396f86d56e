//! Batched forward/backward execution for the separation graph.
//!
//! A trainer owns one graph clone per worker; a batch fans its examples
//! out across workers (scoped threads, one graph each) and collects
//! per-example losses and gradients indexed by batch position, so the
//! reduction order — and therefore every downstream float — is
//! independent of thread scheduling.

use std::collections::BTreeMap;

use crate::grad::Tensor;

use super::uss::{bind_sep, build_sep_graph, SepGraph, SepInput, SepMode, TrainSet, UssModel};
use super::ModelError;

/// One training example, spectra precomputed.
#[derive(Debug, Clone)]
pub struct SepJob {
    pub input: SepInput,
    pub prompt: Vec<f32>,
    pub target: Tensor,
}

/// Per-example result of a loss-mode pass.
#[derive(Debug, Clone)]
pub struct SepResult {
    pub loss: f32,
    /// d loss / d prompt, when the prompt is trainable.
    pub prompt_grad: Option<Vec<f32>>,
    /// d loss / d θ by tensor name, when the model is trainable.
    pub model_grads: Option<BTreeMap<String, Vec<f32>>>,
}

pub struct SepTrainer {
    workers: Vec<SepGraph>,
    train: TrainSet,
}

impl SepTrainer {
    pub fn new(model: &UssModel, train: TrainSet, threads: usize) -> Result<Self, ModelError> {
        let proto = build_sep_graph(&model.dims, SepMode::Loss, train)?;
        let workers = vec![proto; threads.max(1)];
        Ok(SepTrainer { workers, train })
    }

    /// Forward+backward for each job; results indexed by job position.
    pub fn run_batch(&mut self, model: &UssModel, jobs: &[SepJob]) -> Result<Vec<SepResult>, ModelError> {
        let train = self.train;
        let n_workers = self.workers.len().min(jobs.len()).max(1);
        let mut slots: Vec<Option<Result<SepResult, ModelError>>> =
            (0..jobs.len()).map(|_| None).collect();

        if n_workers <= 1 {
            let worker = &mut self.workers[0];
            for (slot, job) in slots.iter_mut().zip(jobs) {
                *slot = Some(run_one(worker, model, job, train));
            }
        } else {
            let chunk = jobs.len().div_ceil(n_workers);
            std::thread::scope(|scope| {
                for ((worker, jobs_chunk), slots_chunk) in self
                    .workers
                    .iter_mut()
                    .zip(jobs.chunks(chunk))
                    .zip(slots.chunks_mut(chunk))
                {
                    scope.spawn(move || {
                        for (slot, job) in slots_chunk.iter_mut().zip(jobs_chunk) {
                            *slot = Some(run_one(worker, model, job, train));
                        }
                    });
                }
            });
        }
        slots.into_iter().map(|s| s.expect("every job ran")).collect()
    }
}

fn run_one(
    worker: &mut SepGraph,
    model: &UssModel,
    job: &SepJob,
    train: TrainSet,
) -> Result<SepResult, ModelError> {
    let bindings = bind_sep(worker, model, &job.input, &job.prompt, Some(&job.target))?;
    let out = worker.graph.evaluate(&bindings)?;
    let loss = out.data()[0];
    let grads = worker.graph.backpropagate(&Tensor::scalar(1.0))?;

    let prompt_grad = if train.prompt {
        Some(grads.get(&worker.prompt).map(|t| t.data().to_vec()).unwrap_or_default())
    } else {
        None
    };
    let model_grads = if train.model {
        let mut by_name = BTreeMap::new();
        for (name, &leaf) in &worker.param_leaves {
            if let Some(g) = grads.get(&leaf) {
                by_name.insert(name.clone(), g.data().to_vec());
            }
        }
        Some(by_name)
    } else {
        None
    };
    Ok(SepResult { loss, prompt_grad, model_grads })
}
