use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arch::{ArchitectureSpec, ParamLayout};
use super::net::{backward, cross_entropy, forward as net_forward, load_input, Trace};
use super::{ClassifierModel, Input, ModelError};

/// A batch loss above this is treated as divergence. Cross-entropy of a
/// sane model sits near `ln K`; thousands of nats mean the logits have run away.
pub const DIVERGENCE_LOSS: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// L2 penalty on weights (biases are not decayed).
    pub l2: f64,
    /// Weight each example by `n / (classes_present * n_class)` so every
    /// class present contributes equally to the loss.
    #[serde(default)]
    pub class_balanced: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 32,
            epochs: 30,
            seed: 0,
            l2: 1e-4,
            class_balanced: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad(format!("l2 must be non-negative, got {}", self.l2));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ClassifierModel,
    /// Mean (weighted) training loss of each epoch.
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: Vec<f64>,
}

/// He-style uniform initialization: weights in `±sqrt(6 / fan_in)`, zero biases.
pub fn init_model(arch: &ArchitectureSpec, seed: u64) -> Result<ClassifierModel, ModelError> {
    arch.validate()?;
    let layout = arch.layout();
    let mut params = vec![0.0; layout.total];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &layout.layers {
        let bound = (6.0 / layer.fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        for w in &mut params[layer.weights()] {
            *w = dist.sample(&mut rng);
        }
    }
    ClassifierModel::new(arch.clone(), params, 0, seed)
}

fn check_inputs(arch: &ArchitectureSpec, inputs: &[Input<'_>]) -> Result<(), ModelError> {
    let mut scratch = Vec::new();
    for (index, input) in inputs.iter().enumerate() {
        if !load_input(arch, input, &mut scratch) {
            return Err(ModelError::ShapeMismatch {
                index,
                expected: format!("{:?}", arch.input),
            });
        }
    }
    Ok(())
}

fn check_labels(num_classes: usize, inputs: usize, labels: &[usize]) -> Result<(), ModelError> {
    if inputs != labels.len() {
        return Err(ModelError::LengthMismatch {
            inputs,
            labels: labels.len(),
        });
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
        return Err(ModelError::LabelOutOfRange {
            index,
            label,
            num_classes,
        });
    }
    Ok(())
}

/// Inference-mode class probabilities, one row per input.
pub fn forward(model: &ClassifierModel, inputs: &[Input<'_>]) -> Result<Vec<Vec<f64>>, ModelError> {
    check_inputs(&model.arch, inputs)?;
    let layout = model.layout();
    Ok(inputs
        .par_iter()
        .map_init(Trace::default, |trace, input| {
            load_input(&model.arch, input, &mut trace.input);
            net_forward::<ChaCha8Rng>(&model.arch, &layout, model.parameters(), trace, None);
            trace.probs.clone()
        })
        .collect())
}

/// Index of the largest probability; ties go to the lower index.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &ClassifierModel, inputs: &[Input<'_>]) -> Result<Vec<Prediction>, ModelError> {
    Ok(forward(model, inputs)?
        .into_iter()
        .map(|probabilities| Prediction {
            class: argmax(&probabilities),
            probabilities,
        })
        .collect())
}

/// Mean cross-entropy over the batch and its exact gradient, dropout off,
/// no regularization.
pub fn loss_and_gradient(
    model: &ClassifierModel,
    inputs: &[Input<'_>],
    labels: &[usize],
) -> Result<(f64, Vec<f64>), ModelError> {
    check_inputs(&model.arch, inputs)?;
    check_labels(model.num_classes(), inputs.len(), labels)?;
    if inputs.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let layout = model.layout();
    let mut grad = vec![0.0; layout.total];
    let mut trace = Trace::default();
    let w = 1.0 / inputs.len() as f64;
    let mut loss = 0.0;
    for (input, &label) in inputs.iter().zip(labels) {
        load_input(&model.arch, input, &mut trace.input);
        net_forward::<ChaCha8Rng>(&model.arch, &layout, model.parameters(), &mut trace, None);
        loss += w * cross_entropy(&trace.logits, label);
        backward(
            &model.arch,
            &layout,
            model.parameters(),
            &mut trace,
            label,
            w,
            &mut grad,
        );
    }
    Ok((loss, grad))
}

/// Mean cross-entropy with a fixed parameter vector, dropout off.
pub(crate) fn batch_loss(
    arch: &ArchitectureSpec,
    layout: &ParamLayout,
    params: &[f64],
    inputs: &[Input<'_>],
    labels: &[usize],
    mut visit: impl FnMut(&Trace),
) -> f64 {
    let mut trace = Trace::default();
    let mut loss = 0.0;
    for (input, &label) in inputs.iter().zip(labels) {
        load_input(arch, input, &mut trace.input);
        net_forward::<ChaCha8Rng>(arch, layout, params, &mut trace, None);
        loss += cross_entropy(&trace.logits, label);
        visit(&trace);
    }
    loss / inputs.len() as f64
}

fn class_weights(labels: &[usize], num_classes: usize, balanced: bool) -> Vec<f64> {
    if !balanced {
        return vec![1.0; num_classes];
    }
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    let n = labels.len() as f64;
    counts
        .iter()
        .map(|&c| if c > 0 { n / (present * c as f64) } else { 0.0 })
        .collect()
}

/// Mini-batch gradient descent on softmax cross-entropy.
///
/// Each epoch shuffles the example order with the seeded generator, which
/// also draws the dropout masks; gradients accumulate in batch order, so a
/// given seed and input order always give the same parameters.
pub fn train(
    model: &ClassifierModel,
    inputs: &[Input<'_>],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    cfg.validate()?;
    check_inputs(&model.arch, inputs)?;
    check_labels(model.num_classes(), inputs.len(), labels)?;
    if inputs.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(ModelError::DegenerateLabels(labels[0]));
    }

    let arch = &model.arch;
    let layout = model.layout();
    let weights = class_weights(labels, arch.num_classes, cfg.class_balanced);
    let mut params = model.parameters().to_vec();
    let mut grad = vec![0.0; layout.total];
    let decay: Vec<bool> = (0..layout.total).map(|i| !layout.is_bias(i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut trace = Trace::default();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut epoch_weight) = (0.0, 0.0);
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let total_w: f64 = chunk.iter().map(|&i| weights[labels[i]]).sum();
            grad.fill(0.0);
            let mut batch_loss = 0.0;
            for &i in chunk {
                let w = weights[labels[i]] / total_w;
                load_input(arch, &inputs[i], &mut trace.input);
                net_forward(arch, &layout, &params, &mut trace, Some(&mut rng));
                batch_loss += w * cross_entropy(&trace.logits, labels[i]);
                backward(arch, &layout, &params, &mut trace, labels[i], w, &mut grad);
            }
            if !batch_loss.is_finite() || batch_loss > DIVERGENCE_LOSS {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    batch,
                    loss: batch_loss,
                });
            }
            for ((p, g), &d) in params.iter_mut().zip(&grad).zip(&decay) {
                let g = if d { g + cfg.l2 * *p } else { *g };
                *p -= cfg.learning_rate * g;
            }
            if params.iter().any(|p| !p.is_finite()) {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    batch,
                    loss: f64::NAN,
                });
            }
            epoch_loss += batch_loss * total_w;
            epoch_weight += total_w;
        }
        loss_trace.push(epoch_loss / epoch_weight);
    }

    let mut trained =
        ClassifierModel::new(arch.clone(), params, model.trained_epochs + cfg.epochs, cfg.seed)?;
    trained.provenance = model.provenance.clone();
    Ok(TrainOutcome {
        model: trained,
        loss_trace,
    })
}
