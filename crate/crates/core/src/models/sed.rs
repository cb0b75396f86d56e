//! Sound-event encoder: a small convolutional classifier over log-mel
//! spectrograms whose pooled penultimate features serve as audio
//! embeddings.

use std::collections::BTreeMap;

use crate::dsp::{mel_spectrogram, DspConfig, Waveform};
use crate::grad::{Bindings, Graph, NodeId, Tensor};
use crate::rng::Rng;

use super::checkpoint::{Checkpoint, CheckpointMeta, NamedTensor, CHECKPOINT_VERSION};
use super::init::he_uniform;
use super::ModelError;

/// Conv channel widths of the three stride-2 stages.
pub const SED_CHANNELS: [usize; 3] = [16, 32, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SedDims {
    pub frames: usize,
    pub n_mels: usize,
    pub embed_dim: usize,
    pub n_classes: usize,
}

impl SedDims {
    pub fn from_dsp(dsp: &DspConfig, embed_dim: usize, n_classes: usize) -> Self {
        SedDims { frames: dsp.frames(), n_mels: dsp.n_mels, embed_dim, n_classes }
    }
}

/// The embedding encoder. `class_ids[i]` is the corpus class behind
/// logit i of the classifier head.
#[derive(Debug, Clone)]
pub struct SedModel {
    pub dims: SedDims,
    pub class_ids: Vec<usize>,
    pub params: Vec<NamedTensor>,
}

impl SedModel {
    /// Seeded initialization: He-uniform weights, zero biases.
    pub fn init(dims: SedDims, class_ids: Vec<usize>, seed: u64) -> Self {
        assert_eq!(dims.n_classes, class_ids.len());
        let mut rng = Rng::new(seed);
        let [c1, c2, c3] = SED_CHANNELS;
        let d = dims.embed_dim;
        let mut params = Vec::new();
        let mut push = |name: &str, shape: &[usize], fan_in: usize, rng: &mut Rng| {
            params.push(NamedTensor {
                name: name.into(),
                tensor: he_uniform(rng, shape, fan_in),
                frozen: false,
            });
        };
        push("sed.conv1.weight", &[c1, 1, 3, 3], 9, &mut rng);
        push("sed.conv1.bias", &[c1], 0, &mut rng);
        push("sed.conv2.weight", &[c2, c1, 3, 3], c1 * 9, &mut rng);
        push("sed.conv2.bias", &[c2], 0, &mut rng);
        push("sed.conv3.weight", &[c3, c2, 3, 3], c2 * 9, &mut rng);
        push("sed.conv3.bias", &[c3], 0, &mut rng);
        push("sed.proj.weight", &[d, c3], c3, &mut rng);
        push("sed.proj.bias", &[d], 0, &mut rng);
        push("sed.head.weight", &[dims.n_classes, d], d, &mut rng);
        push("sed.head.bias", &[dims.n_classes], 0, &mut rng);
        SedModel { dims, class_ids, params }
    }

    pub fn param(&self, name: &str) -> Result<&NamedTensor, ModelError> {
        self.params
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| ModelError::MissingTensor(name.to_string()))
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut Tensor, ModelError> {
        self.params
            .iter_mut()
            .find(|t| t.name == name)
            .map(|t| &mut t.tensor)
            .ok_or_else(|| ModelError::MissingTensor(name.to_string()))
    }

    pub fn to_checkpoint(&self, frozen: bool, meta_base: CheckpointMeta) -> Checkpoint {
        let meta = CheckpointMeta { class_ids: self.class_ids.clone(), ..meta_base };
        Checkpoint {
            version: CHECKPOINT_VERSION,
            tensors: self
                .params
                .iter()
                .map(|t| NamedTensor { name: t.name.clone(), tensor: t.tensor.clone(), frozen })
                .collect(),
            meta,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, dsp: &DspConfig) -> Result<Self, ModelError> {
        let proj = ckpt.tensor("sed.proj.weight")?;
        let head = ckpt.tensor("sed.head.weight")?;
        let dims = SedDims {
            frames: dsp.frames(),
            n_mels: dsp.n_mels,
            embed_dim: proj.tensor.shape()[0],
            n_classes: head.tensor.shape()[0],
        };
        let expected = SedModel::init(dims, ckpt.meta.class_ids.clone(), 0);
        let mut params = Vec::new();
        for want in &expected.params {
            let got = ckpt.tensor(&want.name)?;
            if got.tensor.shape() != want.tensor.shape() {
                return Err(ModelError::Corrupt(format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    want.name,
                    got.tensor.shape(),
                    want.tensor.shape()
                )));
            }
            params.push(got.clone());
        }
        Ok(SedModel { dims, class_ids: ckpt.meta.class_ids.clone(), params })
    }
}

/// What the encoder graph should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SedMode {
    /// D-dimensional embedding (pooled features through the projection).
    Embed,
    /// Raw classifier logits.
    Logits,
    /// Cross-entropy loss of the classifier head against one class index.
    Classify { target: usize },
}

/// A built encoder graph plus the leaf ids needed to bind it.
pub struct SedGraph {
    pub graph: Graph,
    pub input: NodeId,
    pub param_leaves: BTreeMap<String, NodeId>,
}

/// Build the encoder graph: three stride-2 conv+ReLU stages, global mean
/// pooling, linear projection to the embedding, and optionally the
/// classifier head with softmax cross-entropy.
pub fn build_sed_graph(dims: &SedDims, mode: SedMode, trainable: bool) -> Result<SedGraph, ModelError> {
    let [c1, c2, c3] = SED_CHANNELS;
    let mut g = Graph::new();
    let mut leaves = BTreeMap::new();
    let mut leaf = |g: &mut Graph, name: &str, shape: &[usize]| -> NodeId {
        let id = g.leaf(name, shape, trainable);
        leaves.insert(name.to_string(), id);
        id
    };

    let input = g.leaf("sed.input", &[1, dims.frames, dims.n_mels], false);
    let w1 = leaf(&mut g, "sed.conv1.weight", &[c1, 1, 3, 3]);
    let b1 = leaf(&mut g, "sed.conv1.bias", &[c1]);
    let w2 = leaf(&mut g, "sed.conv2.weight", &[c2, c1, 3, 3]);
    let b2 = leaf(&mut g, "sed.conv2.bias", &[c2]);
    let w3 = leaf(&mut g, "sed.conv3.weight", &[c3, c2, 3, 3]);
    let b3 = leaf(&mut g, "sed.conv3.bias", &[c3]);
    let wp = leaf(&mut g, "sed.proj.weight", &[dims.embed_dim, c3]);
    let bp = leaf(&mut g, "sed.proj.bias", &[dims.embed_dim]);

    let h1 = g.conv2d(input, w1, 2, 1)?;
    let h1 = g.bias_add(h1, b1)?;
    let h1 = g.relu(h1);
    let h2 = g.conv2d(h1, w2, 2, 1)?;
    let h2 = g.bias_add(h2, b2)?;
    let h2 = g.relu(h2);
    let h3 = g.conv2d(h2, w3, 2, 1)?;
    let h3 = g.bias_add(h3, b3)?;
    let h3 = g.relu(h3);
    let pooled = g.global_mean(h3)?;
    let emb = g.matmul(wp, pooled)?;
    let emb = g.bias_add(emb, bp)?;

    match mode {
        SedMode::Embed => g.set_output(emb),
        SedMode::Logits | SedMode::Classify { .. } => {
            let wh = leaf(&mut g, "sed.head.weight", &[dims.n_classes, dims.embed_dim]);
            let bh = leaf(&mut g, "sed.head.bias", &[dims.n_classes]);
            let logits = g.matmul(wh, emb)?;
            let logits = g.bias_add(logits, bh)?;
            match mode {
                SedMode::Classify { target } => {
                    let loss = g.softmax_xent(logits, target)?;
                    g.set_output(loss);
                }
                _ => g.set_output(logits),
            }
        }
    }
    Ok(SedGraph { graph: g, input, param_leaves: leaves })
}

/// Bindings for one encoder evaluation.
pub fn bind_sed(sed_graph: &SedGraph, model: &SedModel, mel_input: Tensor) -> Bindings {
    let mut b: Bindings = BTreeMap::new();
    b.insert(sed_graph.input, mel_input);
    for t in &model.params {
        if let Some(&id) = sed_graph.param_leaves.get(&t.name) {
            b.insert(id, t.tensor.clone());
        }
    }
    b
}

/// Embedding of one clip: log-mel features through the encoder, L2-
/// normalized so conditioning vectors live on a unit-scale ball. The
/// classifier head keeps training on the raw projection; normalization
/// only defines the embedding interface. The clip must match the
/// configured model input length exactly.
pub fn sed_forward(model: &SedModel, x: &Waveform, dsp: &DspConfig) -> Result<Vec<f32>, ModelError> {
    if x.len() != dsp.clip_len() {
        return Err(ModelError::LengthMismatch { got: x.len(), want: dsp.clip_len() });
    }
    let mel = mel_spectrogram(x, dsp)?;
    let mel_input = Tensor::new(&[1, mel.frames, mel.n_mels], mel.data)?;
    let mut built = build_sed_graph(&model.dims, SedMode::Embed, false)?;
    let bindings = bind_sed(&built, model, mel_input);
    let out = built.graph.evaluate(&bindings)?;
    let norm: f64 = out.data().iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    let inv = if norm > 1e-6 { (1.0 / norm) as f32 } else { 0.0 };
    Ok(out.data().iter().map(|&v| v * inv).collect())
}

/// Classifier logits for one clip.
pub fn sed_logits(model: &SedModel, x: &Waveform, dsp: &DspConfig) -> Result<Vec<f32>, ModelError> {
    if x.len() != dsp.clip_len() {
        return Err(ModelError::LengthMismatch { got: x.len(), want: dsp.clip_len() });
    }
    let mel = mel_spectrogram(x, dsp)?;
    let mel_input = Tensor::new(&[1, mel.frames, mel.n_mels], mel.data)?;
    let mut built = build_sed_graph(&model.dims, SedMode::Logits, false)?;
    let bindings = bind_sed(&built, model, mel_input);
    let out = built.graph.evaluate(&bindings)?;
    Ok(out.data().to_vec())
}

/// Deterministic enrollment crop: the centered model-length window.
pub fn center_crop(x: &Waveform, len: usize) -> Result<Waveform, ModelError> {
    if x.len() < len {
        return Err(ModelError::LengthMismatch { got: x.len(), want: len });
    }
    let off = (x.len() - len) / 2;
    Ok(Waveform::new(x.samples[off..off + len].to_vec(), x.sample_rate)?)
}
