//! Stage-1 contrastive pretraining of encoder + projection head, stage-2
//! frozen-encoder linear probe, supervised baseline, teacher-student
//! distillation, prediction, and embedding export.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::losses::{
    bce_multilabel, combined_clinical, cross_entropy, distillation_loss, info_nce, normalize,
    LossSpec,
};
use crate::metrics::{BiomarkerMetrics, MetricReport};
use crate::mlp::{Mlp, SgdMomentum};
use crate::pairs::{build_two_view_batch_with_rng, Augmenter, BinWidths};
use crate::Real;

/// Projection head output dimension.
pub const PROJECTION_DIM: usize = 128;

/// Training hyperparameters; defaults are the reference values
/// (batch 128, 25 epochs, SGD momentum 0.9, lr 0.05 / 0.001,
/// weight decay 1e-4, tau 0.07).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_pretrain: Real,
    pub lr_probe: Real,
    pub momentum: Real,
    pub weight_decay: Real,
    pub tau: Real,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            batch_size: 128,
            epochs: 25,
            lr_pretrain: 0.05,
            lr_probe: 0.001,
            momentum: 0.9,
            weight_decay: 1e-4,
            tau: 0.07,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch_size must be >= 2".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        for (name, v) in [
            ("lr_pretrain", self.lr_pretrain),
            ("lr_probe", self.lr_probe),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0")));
            }
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidArgument("tau must be > 0".into()));
        }
        Ok(())
    }
}

/// Encoder architecture; desk-scale default is payload -> 256 -> 64 with a
/// single-hidden-layer projection head onto 128 dims.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub hidden_sizes: Vec<usize>,
    pub repr_dim: usize,
    pub projection_hidden: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden_sizes: vec![256],
            repr_dim: 64,
            projection_hidden: 128,
        }
    }
}

impl EncoderConfig {
    fn encoder_dims(&self, payload_dim: usize) -> Vec<usize> {
        let mut dims = vec![payload_dim];
        dims.extend_from_slice(&self.hidden_sizes);
        dims.push(self.repr_dim);
        dims
    }

    fn projection_dims(&self) -> Vec<usize> {
        vec![self.repr_dim, self.projection_hidden, PROJECTION_DIM]
    }
}

/// Trained encoder + projection head with the hyperparameters and seed
/// that produced them. The projection head is retained in the state even
/// though downstream stages use only the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderState {
    pub encoder: Mlp,
    pub projection: Mlp,
    pub hyper: HyperParams,
    pub config: EncoderConfig,
    pub loss_spec: LossSpec,
    pub seed: u64,
}

/// Which layer of the stage-1 model an embedding export reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingLayer {
    Representation,
    Projection,
}

impl std::str::FromStr for EmbeddingLayer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "representation" => Ok(EmbeddingLayer::Representation),
            "projection" => Ok(EmbeddingLayer::Projection),
            other => Err(Error::InvalidArgument(format!(
                "layer must be `representation` or `projection`, got `{other}`"
            ))),
        }
    }
}

/// Classification target of a stage-2 head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "name")]
pub enum ProbeTarget {
    Biomarker(String),
    Multilabel,
}

impl ProbeTarget {
    fn out_dim(&self) -> usize {
        match self {
            ProbeTarget::Biomarker(_) => 2,
            ProbeTarget::Multilabel => 5,
        }
    }
}

/// Frozen encoder plus a trained linear head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierState {
    pub encoder: EncoderState,
    pub head: Mlp,
    pub target: ProbeTarget,
}

/// Per-step loss values logged during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub step_losses: Vec<Real>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn params_blob(params: &[Real]) -> Vec<u8> {
    let mut out = Vec::with_capacity(params.len() * 4);
    for &p in params {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out
}

/// Hex SHA-256 of a network's parameters serialized as little-endian f32.
pub fn params_checksum(net: &Mlp) -> String {
    sha256_hex(&params_blob(&net.flat_params()))
}

impl EncoderState {
    /// Hex SHA-256 over the encoder parameters only (the frozen part).
    pub fn encoder_checksum(&self) -> String {
        params_checksum(&self.encoder)
    }

    /// Encodes payloads through the frozen encoder (representation layer).
    pub fn encode(&self, samples: &[Sample]) -> Result<Vec<Vec<Real>>> {
        for s in samples {
            if s.payload.len() != self.encoder.in_dim() {
                return Err(Error::DimMismatch {
                    expected: self.encoder.in_dim(),
                    got: s.payload.len(),
                });
            }
        }
        Ok(samples.iter().map(|s| self.encoder.forward(&s.payload)).collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    kind: String,
    encoder_dims: Vec<usize>,
    projection_dims: Vec<usize>,
    head_dims: Option<Vec<usize>>,
    target: Option<ProbeTarget>,
    hyper: HyperParams,
    config: EncoderConfig,
    loss_spec: LossSpec,
    seed: u64,
    param_checksum: String,
    encoder_checksum: String,
}

fn write_checkpoint(path: &Path, header: &CheckpointHeader, blob: &[u8]) -> Result<()> {
    let header_bytes = serde_json::to_vec(header)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    f.write_all(&header_bytes)?;
    f.write_all(blob)?;
    Ok(())
}

fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<Real>)> {
    let mut f = std::fs::File::open(path)?;
    let mut len_bytes = [0u8; 8];
    f.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    f.read_exact(&mut header_bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)?;
    let mut blob = Vec::new();
    f.read_to_end(&mut blob)?;
    if sha256_hex(&blob) != header.param_checksum {
        return Err(Error::Provenance(format!(
            "checkpoint {} parameter checksum mismatch",
            path.display()
        )));
    }
    if blob.len() % 4 != 0 {
        return Err(Error::InvalidArgument("parameter blob length not a multiple of 4".into()));
    }
    let params = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as Real)
        .collect();
    Ok((header, params))
}

fn mlp_from_dims(dims: &[usize]) -> Mlp {
    // placeholder weights, overwritten by set_flat_params
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Mlp::new(dims, &mut rng).expect("valid dims")
}

/// Saves an encoder checkpoint: JSON header + little-endian f32 blob.
pub fn save_encoder(state: &EncoderState, path: &Path) -> Result<()> {
    let mut params = state.encoder.flat_params();
    params.extend(state.projection.flat_params());
    let blob = params_blob(&params);
    let header = CheckpointHeader {
        kind: "encoder".into(),
        encoder_dims: state.encoder.dims(),
        projection_dims: state.projection.dims(),
        head_dims: None,
        target: None,
        hyper: state.hyper.clone(),
        config: state.config.clone(),
        loss_spec: state.loss_spec.clone(),
        seed: state.seed,
        param_checksum: sha256_hex(&blob),
        encoder_checksum: state.encoder_checksum(),
    };
    write_checkpoint(path, &header, &blob)
}

pub fn load_encoder(path: &Path) -> Result<EncoderState> {
    let (header, params) = read_checkpoint(path)?;
    if header.kind != "encoder" {
        return Err(Error::InvalidArgument(format!(
            "expected encoder checkpoint, found `{}`",
            header.kind
        )));
    }
    let mut encoder = mlp_from_dims(&header.encoder_dims);
    let mut projection = mlp_from_dims(&header.projection_dims);
    let n_enc = encoder.num_params();
    if params.len() != n_enc + projection.num_params() {
        return Err(Error::InvalidArgument("checkpoint parameter count mismatch".into()));
    }
    encoder.set_flat_params(&params[..n_enc])?;
    projection.set_flat_params(&params[n_enc..])?;
    Ok(EncoderState {
        encoder,
        projection,
        hyper: header.hyper,
        config: header.config,
        loss_spec: header.loss_spec,
        seed: header.seed,
    })
}

pub fn save_classifier(state: &ClassifierState, path: &Path) -> Result<()> {
    let mut params = state.encoder.encoder.flat_params();
    params.extend(state.encoder.projection.flat_params());
    params.extend(state.head.flat_params());
    let blob = params_blob(&params);
    let header = CheckpointHeader {
        kind: "classifier".into(),
        encoder_dims: state.encoder.encoder.dims(),
        projection_dims: state.encoder.projection.dims(),
        head_dims: Some(state.head.dims()),
        target: Some(state.target.clone()),
        hyper: state.encoder.hyper.clone(),
        config: state.encoder.config.clone(),
        loss_spec: state.encoder.loss_spec.clone(),
        seed: state.encoder.seed,
        param_checksum: sha256_hex(&blob),
        encoder_checksum: state.encoder.encoder_checksum(),
    };
    write_checkpoint(path, &header, &blob)
}

pub fn load_classifier(path: &Path) -> Result<ClassifierState> {
    let (header, params) = read_checkpoint(path)?;
    if header.kind != "classifier" {
        return Err(Error::InvalidArgument(format!(
            "expected classifier checkpoint, found `{}`",
            header.kind
        )));
    }
    let head_dims = header
        .head_dims
        .ok_or_else(|| Error::InvalidArgument("classifier checkpoint missing head dims".into()))?;
    let target = header
        .target
        .ok_or_else(|| Error::InvalidArgument("classifier checkpoint missing target".into()))?;
    let mut encoder = mlp_from_dims(&header.encoder_dims);
    let mut projection = mlp_from_dims(&header.projection_dims);
    let mut head = mlp_from_dims(&head_dims);
    let (a, b) = (encoder.num_params(), projection.num_params());
    if params.len() != a + b + head.num_params() {
        return Err(Error::InvalidArgument("checkpoint parameter count mismatch".into()));
    }
    encoder.set_flat_params(&params[..a])?;
    projection.set_flat_params(&params[a..a + b])?;
    head.set_flat_params(&params[a + b..])?;
    Ok(ClassifierState {
        encoder: EncoderState {
            encoder,
            projection,
            hyper: header.hyper,
            config: header.config,
            loss_spec: header.loss_spec,
            seed: header.seed,
        },
        head,
        target,
    })
}

/// Stage-1 contrastive pretraining. For each epoch: shuffled mini-batches
/// -> two-view batches -> encoder -> projection -> normalize -> combined
/// clinical loss (or InfoNCE for the `self` spec) -> momentum SGD with
/// weight decay. Deterministic given the seed.
pub fn pretrain_contrastive(
    train: &Dataset,
    spec: &LossSpec,
    hp: &HyperParams,
    enc_cfg: &EncoderConfig,
    augmenter: &Augmenter,
    bin_widths: &BinWidths,
    seed: u64,
) -> Result<(EncoderState, TrainLog)> {
    spec.validate()?;
    hp.validate()?;
    if train.is_empty() {
        return Err(Error::InsufficientData("pretraining dataset is empty".into()));
    }
    let keys: Vec<String> = if spec.is_self_supervised() {
        Vec::new()
    } else {
        spec.terms.iter().map(|(k, _)| k.clone()).collect()
    };
    // fail fast on missing clinical keys
    for key in &keys {
        crate::data::clinical_value(&train.samples[0], key)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut encoder = Mlp::new(&enc_cfg.encoder_dims(train.payload_dim), &mut rng)?;
    let mut projection = Mlp::new(&enc_cfg.projection_dims(), &mut rng)?;
    let mut enc_opt = SgdMomentum::new(&encoder, hp.lr_pretrain, hp.momentum, hp.weight_decay);
    let mut proj_opt = SgdMomentum::new(&projection, hp.lr_pretrain, hp.momentum, hp.weight_decay);

    let mut step_losses = Vec::new();
    let mut indices: Vec<usize> = (0..train.len()).collect();
    for _epoch in 0..hp.epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(hp.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let samples: Vec<Sample> = chunk.iter().map(|&i| train.samples[i].clone()).collect();
            let batch =
                build_two_view_batch_with_rng(&samples, augmenter, &keys, bin_widths, &mut rng)?;

            let enc_cache = encoder.forward_cached(&batch.views);
            let proj_cache = projection.forward_cached(&enc_cache.output);
            let norm = normalize(&proj_cache.output)?;

            let loss = if spec.is_self_supervised() {
                info_nce(&norm.unit, &batch.twin_index, hp.tau, spec.reduction)?
            } else {
                let masks: Vec<_> = keys
                    .iter()
                    .map(|k| batch.mask_for(k))
                    .collect::<Result<Vec<_>>>()?;
                let weighted: Vec<_> = masks
                    .iter()
                    .zip(spec.terms.iter())
                    .map(|(m, (_, w))| (m, *w))
                    .collect();
                combined_clinical(&norm.unit, &weighted, hp.tau, spec.reduction)?
            };
            if !loss.value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite pretraining loss {} at step {}",
                    loss.value,
                    step_losses.len()
                )));
            }
            step_losses.push(loss.value);

            let grad_proj_out = norm.backward(&loss.grad);
            let (proj_grads, grad_repr) = projection.backward(&proj_cache, &grad_proj_out);
            let (enc_grads, _) = encoder.backward(&enc_cache, &grad_repr);
            proj_opt.step(&mut projection, &proj_grads);
            enc_opt.step(&mut encoder, &enc_grads);
        }
    }

    Ok((
        EncoderState {
            encoder,
            projection,
            hyper: hp.clone(),
            config: enc_cfg.clone(),
            loss_spec: spec.clone(),
            seed,
        },
        TrainLog { step_losses },
    ))
}

fn biomarker_labels(labeled: &Dataset, target: &ProbeTarget) -> Result<Vec<Vec<u8>>> {
    labeled
        .samples
        .iter()
        .map(|s| {
            let b = s.biomarkers.as_ref().ok_or_else(|| {
                Error::InsufficientData(format!("sample `{}` has no biomarker labels", s.id))
            })?;
            Ok(match target {
                ProbeTarget::Biomarker(name) => {
                    let v = b.get(name).ok_or_else(|| Error::UnknownKey(name.clone()))?;
                    vec![v]
                }
                ProbeTarget::Multilabel => b.studied().to_vec(),
            })
        })
        .collect()
}

fn head_loss(
    head: &Mlp,
    features: &[Vec<Real>],
    targets: &[Vec<u8>],
    target: &ProbeTarget,
) -> Result<(Real, crate::mlp::MlpGrads, Vec<Vec<Real>>)> {
    let cache = head.forward_cached(features);
    let loss = match target {
        ProbeTarget::Biomarker(_) => {
            let labels: Vec<usize> = targets.iter().map(|t| t[0] as usize).collect();
            cross_entropy(&cache.output, &labels)?
        }
        ProbeTarget::Multilabel => bce_multilabel(&cache.output, targets)?,
    };
    let (grads, grad_in) = head.backward(&cache, &loss.grad);
    Ok((loss.value, grads, grad_in))
}

/// Stage-2 linear probe: encoder frozen bit-exactly, a linear head trained
/// with cross-entropy (single biomarker) or multi-label BCE at lr_probe.
pub fn train_linear_probe(
    enc: &EncoderState,
    labeled: &Dataset,
    target: &ProbeTarget,
    hp: &HyperParams,
    seed: u64,
) -> Result<ClassifierState> {
    hp.validate()?;
    if labeled.is_empty() {
        return Err(Error::InsufficientData("probe dataset is empty".into()));
    }
    let targets = biomarker_labels(labeled, target)?;
    let features = enc.encode(&labeled.samples)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut head = Mlp::new(&[enc.config.repr_dim, target.out_dim()], &mut rng)?;
    let mut opt = SgdMomentum::new(&head, hp.lr_probe, hp.momentum, hp.weight_decay);

    let mut indices: Vec<usize> = (0..labeled.len()).collect();
    for _epoch in 0..hp.epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(hp.batch_size) {
            let feats: Vec<Vec<Real>> = chunk.iter().map(|&i| features[i].clone()).collect();
            let tgts: Vec<Vec<u8>> = chunk.iter().map(|&i| targets[i].clone()).collect();
            let (value, grads, _) = head_loss(&head, &feats, &tgts, target)?;
            if !value.is_finite() {
                return Err(Error::Numeric("non-finite probe loss".into()));
            }
            opt.step(&mut head, &grads);
        }
    }

    Ok(ClassifierState {
        encoder: enc.clone(),
        head,
        target: target.clone(),
    })
}

/// End-to-end supervised baseline: a fresh encoder plus linear head
/// trained jointly on the labeled data only, no pretraining.
pub fn train_supervised_baseline(
    labeled: &Dataset,
    hp: &HyperParams,
    enc_cfg: &EncoderConfig,
    target: &ProbeTarget,
    seed: u64,
) -> Result<ClassifierState> {
    hp.validate()?;
    if labeled.is_empty() {
        return Err(Error::InsufficientData("baseline dataset is empty".into()));
    }
    let targets = biomarker_labels(labeled, target)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut encoder = Mlp::new(&enc_cfg.encoder_dims(labeled.payload_dim), &mut rng)?;
    let projection = Mlp::new(&enc_cfg.projection_dims(), &mut rng)?;
    let mut head = Mlp::new(&[enc_cfg.repr_dim, target.out_dim()], &mut rng)?;
    let mut enc_opt = SgdMomentum::new(&encoder, hp.lr_probe, hp.momentum, hp.weight_decay);
    let mut head_opt = SgdMomentum::new(&head, hp.lr_probe, hp.momentum, hp.weight_decay);

    let mut indices: Vec<usize> = (0..labeled.len()).collect();
    for _epoch in 0..hp.epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(hp.batch_size) {
            let payloads: Vec<Vec<Real>> =
                chunk.iter().map(|&i| labeled.samples[i].payload.clone()).collect();
            let tgts: Vec<Vec<u8>> = chunk.iter().map(|&i| targets[i].clone()).collect();
            let enc_cache = encoder.forward_cached(&payloads);
            let cache = head.forward_cached(&enc_cache.output);
            let loss = match target {
                ProbeTarget::Biomarker(_) => {
                    let labels: Vec<usize> = tgts.iter().map(|t| t[0] as usize).collect();
                    cross_entropy(&cache.output, &labels)?
                }
                ProbeTarget::Multilabel => bce_multilabel(&cache.output, &tgts)?,
            };
            if !loss.value.is_finite() {
                return Err(Error::Numeric("non-finite baseline loss".into()));
            }
            let (head_grads, grad_repr) = head.backward(&cache, &loss.grad);
            let (enc_grads, _) = encoder.backward(&enc_cache, &grad_repr);
            head_opt.step(&mut head, &head_grads);
            enc_opt.step(&mut encoder, &enc_grads);
        }
    }

    Ok(ClassifierState {
        encoder: EncoderState {
            encoder,
            projection,
            hyper: hp.clone(),
            config: enc_cfg.clone(),
            loss_spec: LossSpec::self_supervised(),
            seed,
        },
        head,
        target: target.clone(),
    })
}

/// Teacher-student distillation over the union of the labeled subset and
/// the unlabeled pool: the student head starts from the teacher's head and
/// trains on the soft-label distillation loss. The encoder stays frozen.
pub fn distill(
    teacher: &ClassifierState,
    labeled_25: &Dataset,
    unlabeled: &Dataset,
    temperature: Real,
    hp: &HyperParams,
    seed: u64,
) -> Result<ClassifierState> {
    hp.validate()?;
    let mut pool: Vec<Sample> = labeled_25.samples.clone();
    pool.extend(unlabeled.samples.iter().cloned());
    if pool.is_empty() {
        return Err(Error::InsufficientData("distillation pool is empty".into()));
    }
    let features = teacher.encoder.encode(&pool)?;
    let teacher_logits = teacher.head.forward_batch(&features);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut head = teacher.head.clone();
    let mut opt = SgdMomentum::new(&head, hp.lr_probe, hp.momentum, hp.weight_decay);

    let mut indices: Vec<usize> = (0..pool.len()).collect();
    for _epoch in 0..hp.epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(hp.batch_size) {
            let feats: Vec<Vec<Real>> = chunk.iter().map(|&i| features[i].clone()).collect();
            let soft: Vec<Vec<Real>> = chunk.iter().map(|&i| teacher_logits[i].clone()).collect();
            let cache = head.forward_cached(&feats);
            let loss = distillation_loss(&cache.output, &soft, temperature)?;
            if !loss.value.is_finite() {
                return Err(Error::Numeric("non-finite distillation loss".into()));
            }
            let (grads, _) = head.backward(&cache, &loss.grad);
            opt.step(&mut head, &grads);
        }
    }

    Ok(ClassifierState {
        encoder: teacher.encoder.clone(),
        head,
        target: teacher.target.clone(),
    })
}

/// Scores in [0,1] per target: softmax positive-class probability for a
/// single biomarker, per-class sigmoid for the multi-label head.
pub fn predict(model: &ClassifierState, samples: &[Sample]) -> Result<Vec<Vec<Real>>> {
    let features = model.encoder.encode(samples)?;
    let logits = model.head.forward_batch(&features);
    Ok(logits
        .iter()
        .map(|row| match model.target {
            ProbeTarget::Biomarker(_) => {
                let max = row[0].max(row[1]);
                let e0 = (row[0] - max).exp();
                let e1 = (row[1] - max).exp();
                vec![e1 / (e0 + e1)]
            }
            ProbeTarget::Multilabel => row.iter().map(|&x| 1.0 / (1.0 + (-x).exp())).collect(),
        })
        .collect())
}

/// Evaluates a classifier on a test set, producing the per-biomarker
/// metric suite (and the multi-label averaged AUROC for 5-way heads).
pub fn evaluate_model(model: &ClassifierState, test: &Dataset, seed: u64) -> Result<MetricReport> {
    let targets = biomarker_labels(test, &model.target)?;
    let scores = predict(model, &test.samples)?;
    match &model.target {
        ProbeTarget::Biomarker(name) => {
            let s: Vec<Real> = scores.iter().map(|r| r[0]).collect();
            let t: Vec<u8> = targets.iter().map(|r| r[0]).collect();
            let mut map = std::collections::BTreeMap::new();
            map.insert(name.clone(), BiomarkerMetrics::from_scores(&s, &t)?);
            Ok(MetricReport::new(map, seed))
        }
        ProbeTarget::Multilabel => {
            let mut map = std::collections::BTreeMap::new();
            for (col, name) in crate::data::STUDIED_BIOMARKERS.iter().enumerate() {
                let s: Vec<Real> = scores.iter().map(|r| r[col]).collect();
                let t: Vec<u8> = targets.iter().map(|r| r[col]).collect();
                map.insert(name.to_string(), BiomarkerMetrics::from_scores(&s, &t)?);
            }
            let mut report = MetricReport::new(map, seed);
            report.multilabel_auroc = Some(crate::metrics::multilabel_auroc(&scores, &targets)?);
            Ok(report)
        }
    }
}

/// Writes a CSV of (sample id, studied biomarker flags, embedding
/// coordinates) from either the representation or projection layer.
pub fn export_embeddings(
    enc: &EncoderState,
    samples: &[Sample],
    out_path: &Path,
    layer: EmbeddingLayer,
) -> Result<()> {
    let repr = enc.encode(samples)?;
    let embeddings: Vec<Vec<Real>> = match layer {
        EmbeddingLayer::Representation => repr,
        EmbeddingLayer::Projection => enc.projection.forward_batch(&repr),
    };
    let dim = embeddings.first().map(|e| e.len()).unwrap_or(0);
    let mut w = csv::Writer::from_path(out_path)?;
    let mut header = vec!["id".to_string()];
    header.extend(crate::data::STUDIED_BIOMARKERS.iter().map(|b| format!("b_{b}")));
    header.extend((0..dim).map(|i| format!("e{i}")));
    w.write_record(&header)?;
    for (s, e) in samples.iter().zip(embeddings.iter()) {
        let mut row = vec![s.id.clone()];
        match &s.biomarkers {
            Some(b) => row.extend(b.studied().iter().map(|f| f.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), 5)),
        }
        row.extend(e.iter().map(|v| format!("{v}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
