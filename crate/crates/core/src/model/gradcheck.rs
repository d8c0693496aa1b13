use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::net::Trace;
use super::train::{batch_loss, loss_and_gradient};
use super::{ClassifierModel, Input, ModelError};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const MIN_CHECKED_PARAMS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameters compared.
    pub checked: usize,
    /// Candidates skipped because a perturbation crossed a ReLU or max-pool
    /// switch, where the loss is not differentiable.
    pub skipped_kinks: usize,
}

/// Signature of every piecewise-linear switch in a forward pass.
fn pattern(hasher: &mut DefaultHasher, trace: &Trace) {
    for c in &trace.convs {
        c.argmax.hash(hasher);
        for &a in &c.act {
            (a > 0.0).hash(hasher);
        }
    }
    for &a in &trace.hidden_act {
        (a > 0.0).hash(hasher);
    }
}

/// Compares the analytic gradient of the mean cross-entropy against central
/// differences `(f(θ+ε) − f(θ−ε)) / 2ε` on `count` randomly chosen
/// parameters (all of them if the model is smaller). Relative error is
/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check(
    model: &ClassifierModel,
    inputs: &[Input<'_>],
    labels: &[usize],
    epsilon: f64,
    count: usize,
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    let (_, analytic) = loss_and_gradient(model, inputs, labels)?;
    let arch = &model.arch;
    let layout = model.layout();
    let eval = |params: &[f64]| {
        let mut h = DefaultHasher::new();
        let loss = batch_loss(arch, &layout, params, inputs, labels, |t| pattern(&mut h, t));
        (loss, h.finish())
    };
    let (_, base_pattern) = eval(model.parameters());

    let n = layout.total;
    // visit every parameter in a seeded random order and stop once enough
    // smooth ones have been compared
    let order = sample(&mut ChaCha8Rng::seed_from_u64(seed), n, n);
    let mut params = model.parameters().to_vec();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };
    for i in order.iter() {
        if report.checked >= count {
            break;
        }
        let orig = params[i];
        params[i] = orig + epsilon;
        let (plus, p_plus) = eval(&params);
        params[i] = orig - epsilon;
        let (minus, p_minus) = eval(&params);
        params[i] = orig;
        if p_plus != base_pattern || p_minus != base_pattern {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        report.max_relative_error = report.max_relative_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ArchitectureSpec, ConvBlock};

    #[test]
    fn tiny_cnn_passes() {
        let arch = ArchitectureSpec {
            conv_blocks: vec![ConvBlock::new(3), ConvBlock::new(4)],
            hidden_units: 6,
            ..ArchitectureSpec::native_cnn(8, 5)
        };
        let m = init_model(&arch, 3).unwrap();
        let data: Vec<Vec<u8>> = (0..3)
            .map(|k| (0..8 * 8 * 3).map(|i| ((i * 31 + k * 17) % 256) as u8).collect())
            .collect();
        let inputs: Vec<Input> = data.iter().map(|d| Input::Pixels { size: 8, data: d }).collect();
        let r = grad_check(&m, &inputs, &[0, 3, 4], DEFAULT_EPSILON, 300, 1).unwrap();
        assert!(r.checked >= 200);
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }
}
