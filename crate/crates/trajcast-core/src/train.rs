//! Optimization loop and data plumbing: patient-level splitting, Adam,
//! early stopping on validation average precision, and batched scoring.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{
    encode_batch, extract_instances, LabelMode, MaskTimeMode, MedicalEvent, NowcastInstance,
    Trajectory, Vocabulary,
};
use crate::error::{Error, Result};
use crate::metrics::{self, EvalReport};
use crate::model::{Ablation, Model, ModelConfig};
use crate::tensor::{Tape, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.75, val: 0.10, test: 0.15 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        for r in [self.train, self.val, self.test] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(alloc::format!("split ratio {r} outside [0, 1]")));
            }
        }
        let sum = self.train + self.val + self.test;
        if libm::fabs(sum - 1.0) > 1e-9 {
            return Err(Error::Config(alloc::format!("split ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Full recipe for one training run: model dimensions, optimization
/// settings, and data handling.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the denoising gate penalty in the objective.
    pub lambda: f64,
    pub seed: u64,
    pub split: SplitRatios,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub threshold: f64,
    pub top_k: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub max_history: usize,
    pub decay_width: usize,
    pub ffn_dim: usize,
    pub omega_hours: f64,
    pub init_std: f64,
    pub ablation: Ablation,
    pub mask_time: MaskTimeMode,
    pub label_mode: LabelMode,
    /// Emit one instance per intermediate panel instead of only the last.
    pub augment_panels: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 20,
            lambda: 1e-4,
            seed: 7,
            split: SplitRatios::default(),
            patience: 5,
            threshold: 0.5,
            top_k: 5,
            embed_dim: 64,
            heads: 4,
            layers: 2,
            max_history: 256,
            decay_width: 16,
            ffn_dim: 256,
            omega_hours: 24.0,
            init_std: 0.02,
            ablation: Ablation::NONE,
            mask_time: MaskTimeMode::TargetTime,
            label_mode: LabelMode::CodeAndFlag,
            augment_panels: false,
        }
    }
}

impl TrainConfig {
    /// Desk-scale preset for the bundled synthetic experiments: shorter
    /// history window and per-panel instance augmentation.
    pub fn synthetic_default() -> Self {
        Self { max_history: 64, augment_panels: true, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(alloc::format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.top_k == 0 {
            return Err(Error::Config("ranking cutoff k must be ≥ 1".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be ≥ 0".into()));
        }
        Ok(())
    }

    pub fn model_config(&self, vocab: &Vocabulary) -> ModelConfig {
        ModelConfig {
            vocab_size: vocab.input_len(),
            label_count: vocab.label_len(),
            embed_dim: self.embed_dim,
            heads: self.heads,
            layers: self.layers,
            max_history: self.max_history,
            decay_width: self.decay_width,
            ffn_dim: self.ffn_dim,
            omega_hours: self.omega_hours,
            init_std: self.init_std,
            ablation: self.ablation,
        }
    }
}

/// Patient-grouped random split: patients are shuffled by seed and cut at
/// the ratio boundaries, so no patient's instances leak across splits.
pub fn split(
    instances: Vec<NowcastInstance>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<(Vec<NowcastInstance>, Vec<NowcastInstance>, Vec<NowcastInstance>)> {
    ratios.validate()?;
    if instances.len() < 3 {
        return Err(Error::Data(alloc::format!(
            "{} instances cannot fill three splits",
            instances.len()
        )));
    }
    let mut patients: Vec<String> = Vec::new();
    for inst in &instances {
        if !patients.iter().any(|p| p == &inst.patient_id) {
            patients.push(inst.patient_id.clone());
        }
    }
    let mut order: Vec<usize> = (0..patients.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let n = patients.len() as f64;
    let train_end = libm::floor(n * ratios.train) as usize;
    let val_end = libm::floor(n * (ratios.train + ratios.val)) as usize;
    let bucket_of = |patient: &str| -> usize {
        let idx = patients.iter().position(|p| *p == patient).expect("known patient");
        let rank = order.iter().position(|&o| o == idx).expect("permutation");
        if rank < train_end {
            0
        } else if rank < val_end {
            1
        } else {
            2
        }
    };

    let mut out: [Vec<NowcastInstance>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for inst in instances {
        out[bucket_of(&inst.patient_id)].push(inst);
    }
    let [train, val, test] = out;
    for (name, ratio, bucket) in [
        ("train", ratios.train, &train),
        ("val", ratios.val, &val),
        ("test", ratios.test, &test),
    ] {
        if ratio > 0.0 && bucket.is_empty() {
            return Err(Error::Data(alloc::format!(
                "{name} split is empty; too few patients for ratio {ratio}"
            )));
        }
    }
    Ok((train, val, test))
}

/// Instances, vocabulary (training split only) and splits for one corpus.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub train: Vec<NowcastInstance>,
    pub val: Vec<NowcastInstance>,
    pub test: Vec<NowcastInstance>,
    /// Val/test instances dropped because no target label exists in the
    /// training vocabulary.
    pub dropped: usize,
}

pub fn prepare(trajectories: &[Trajectory], cfg: &TrainConfig) -> Result<Dataset> {
    cfg.validate()?;
    let instances: Vec<NowcastInstance> = trajectories
        .iter()
        .flat_map(|t| extract_instances(t, cfg.augment_panels))
        .collect();
    if instances.is_empty() {
        return Err(Error::Data("no usable nowcast instance in the corpus".into()));
    }
    let (train, val, test) = split(instances, cfg.split, cfg.seed)?;
    let events = train.iter().flat_map(|i| i.history.iter().chain(i.targets.iter()));
    let vocab = Vocabulary::from_events(events, cfg.label_mode)?;

    let representable = |inst: &NowcastInstance| {
        inst.targets
            .iter()
            .any(|ev| cfg.label_mode.label_token(ev).and_then(|t| vocab.label_id(&t)).is_some())
    };
    let mut dropped = 0;
    let keep = |set: Vec<NowcastInstance>, dropped: &mut usize| -> Vec<NowcastInstance> {
        let before = set.len();
        let kept: Vec<NowcastInstance> = set.into_iter().filter(representable).collect();
        *dropped += before - kept.len();
        kept
    };
    let val = keep(val, &mut dropped);
    let test = keep(test, &mut dropped);
    if val.is_empty() || test.is_empty() {
        return Err(Error::Data("validation or test split has no representable instance".into()));
    }
    Ok(Dataset { vocab, train, val, test, dropped })
}

/// Adam with bias correction; state is kept per named tensor in model
/// enumeration order.
pub struct Adam {
    lr: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: usize,
    beta1_t: f64,
    beta2_t: f64,
}

impl Adam {
    pub fn new(lr: f64, model: &Model) -> Self {
        let sizes: Vec<usize> = model.named_tensors().iter().map(|(_, t)| t.numel()).collect();
        Self {
            lr,
            m: sizes.iter().map(|&n| alloc::vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| alloc::vec![0.0; n]).collect(),
            step: 0,
            beta1_t: 1.0,
            beta2_t: 1.0,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// One update over all parameters; `grads` must follow
    /// [`Model::named_tensors`] order.
    pub fn apply(&mut self, model: &mut Model, grads: &[Vec<f64>]) -> Result<()> {
        self.step += 1;
        self.beta1_t *= ADAM_BETA1;
        self.beta2_t *= ADAM_BETA2;
        let bc1 = 1.0 - self.beta1_t;
        let bc2 = 1.0 - self.beta2_t;
        let step = self.step;
        for (((name, tensor), grad), (m, v)) in model
            .named_tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric { step, block: name });
            }
            for ((x, &g), (mi, vi)) in
                tensor.data_mut().iter_mut().zip(grad).zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * g;
                *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * g * g;
                *x -= self.lr * (*mi / bc1) / (libm::sqrt(*vi / bc2) + ADAM_EPS);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_pr_auc: f64,
    /// Σ over layers of the gate Frobenius norm.
    pub gate_norm_sum: f64,
}

pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: Model,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_pr_auc: f64,
}

fn first_non_finite_block(model: &Model) -> String {
    for (name, t) in model.named_tensors() {
        if !t.all_finite() {
            return name;
        }
    }
    String::from("objective")
}

/// Adam training with early stopping on validation average precision.
/// Fully deterministic given (model, data, config): epoch shuffles come
/// from the config seed and every reduction has a fixed order.
pub fn train(
    mut model: Model,
    train_set: &[NowcastInstance],
    val_set: &[NowcastInstance],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Data("training and validation sets must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.learning_rate, &model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Model, usize)> = None;
    let mut stale = 0usize;
    let mut global_step = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let insts: Vec<NowcastInstance> =
                chunk.iter().map(|&i| train_set[i].clone()).collect();
            let batch =
                encode_batch(&insts, vocab, cfg.max_history, cfg.mask_time, cfg.label_mode)?;
            let mut tape = Tape::new();
            let fwd = model.forward(&mut tape, &batch)?;
            let losses = model.loss(&mut tape, &fwd, &batch, cfg.lambda)?;
            let loss_val = tape.value(losses.total).item();
            global_step += 1;
            if !loss_val.is_finite() {
                return Err(Error::Numeric {
                    step: global_step,
                    block: first_non_finite_block(&model),
                });
            }
            tape.backward(losses.total)?;
            let grads: Vec<Vec<f64>> =
                fwd.vars.ordered_vars().iter().map(|&v| tape.grad_or_zeros(v)).collect();
            adam.apply(&mut model, &grads)?;
            epoch_loss += loss_val;
            batches += 1;
        }

        let (val_scores, val_truth) = score_set(&model, val_set, vocab, cfg)?;
        let val_pr_auc = metrics::pr_auc_micro(&val_scores, &val_truth)?;
        history.push(EpochStats {
            epoch,
            train_loss: epoch_loss / batches as f64,
            val_pr_auc,
            gate_norm_sum: model.gate_norm_sum(),
        });

        let improved = best.as_ref().map_or(true, |(b, _, _)| val_pr_auc > *b);
        if improved {
            best = Some((val_pr_auc, model.clone(), epoch));
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                break;
            }
        }
    }
    let (best_val_pr_auc, best_model, best_epoch) =
        best.ok_or_else(|| Error::Data("no epoch completed".into()))?;
    Ok(TrainOutcome { model: best_model, history, best_epoch, best_val_pr_auc })
}

/// Score a set in deterministic batch order; returns (scores, truth) as
/// `instances × labels` tensors.
pub fn score_set(
    model: &Model,
    set: &[NowcastInstance],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
) -> Result<(Tensor, Tensor)> {
    if set.is_empty() {
        return Err(Error::Data("cannot score an empty set".into()));
    }
    let labels = vocab.label_len();
    let mut scores = Vec::with_capacity(set.len() * labels);
    let mut truth = Vec::with_capacity(set.len() * labels);
    for chunk in set.chunks(cfg.batch_size) {
        let batch = encode_batch(chunk, vocab, cfg.max_history, cfg.mask_time, cfg.label_mode)?;
        let probs = model.predict_probs(&batch)?;
        scores.extend_from_slice(probs.data());
        truth.extend_from_slice(batch.labels.data());
    }
    Ok((Tensor::matrix(set.len(), labels, scores)?, Tensor::matrix(set.len(), labels, truth)?))
}

pub fn evaluate_set(
    model: &Model,
    set: &[NowcastInstance],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
) -> Result<EvalReport> {
    let (scores, truth) = score_set(model, set, vocab, cfg)?;
    metrics::evaluate(&scores, &truth, cfg.threshold, cfg.top_k)
}

/// Mean objective over a set without updating parameters.
pub fn set_loss(
    model: &Model,
    set: &[NowcastInstance],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in set.chunks(cfg.batch_size) {
        let batch = encode_batch(chunk, vocab, cfg.max_history, cfg.mask_time, cfg.label_mode)?;
        let mut tape = Tape::new();
        let fwd = model.forward(&mut tape, &batch)?;
        let losses = model.loss(&mut tape, &fwd, &batch, cfg.lambda)?;
        total += tape.value(losses.total).item();
        batches += 1;
    }
    Ok(total / batches as f64)
}

/// Events of all instances, for vocabulary building.
impl Vocabulary {
    pub fn from_events<'a>(
        events: impl Iterator<Item = &'a MedicalEvent>,
        mode: LabelMode,
    ) -> Result<Self> {
        let mut inputs: Vec<String> = Vec::new();
        let mut labels: Vec<String> = Vec::new();
        for ev in events {
            inputs.push(ev.input_token());
            if let Some(tok) = mode.label_token(ev) {
                labels.push(tok);
            }
        }
        inputs.sort();
        inputs.dedup();
        labels.sort();
        labels.dedup();
        Self::from_parts(inputs, labels)
    }
}
