//! Finite-difference training loop for small models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelStack, Phase};
use crate::task::{generate_task, Dataset, SyntheticTask};

pub const PARAM_BUDGET: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub train_size: usize,
    pub test_size: usize,
    /// Relative central-difference step.
    pub fd_step: f64,
    /// Rescale the gradient when its norm exceeds this.
    pub clip_norm: Option<f64>,
    /// Worker threads for the finite-difference probes; 0 picks the machine
    /// parallelism.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.2,
            momentum: 0.9,
            train_size: 256,
            test_size: 512,
            fd_step: 1e-4,
            clip_norm: Some(1.0),
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub seed: u64,
    pub param_count: usize,
    pub model: ModelConfig,
    pub task: SyntheticTask,
    pub train: TrainConfig,
    /// Loss and accuracy on the training set before each update, plus one
    /// final entry after the last update.
    pub loss: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub final_train_loss: f64,
    pub final_train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Mean softmax cross-entropy and accuracy.
pub fn loss_and_accuracy(logits: &[Vec<f64>], labels: &[usize]) -> (f64, f64) {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (row, &y) in logits.iter().zip(labels) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        let best = row.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
        correct += usize::from(best.0 == y);
    }
    let n = labels.len().max(1) as f64;
    (loss / n, correct as f64 / n)
}

pub fn evaluate(model: &ModelStack, params: &[f64], data: &Dataset, phase: Phase) -> Result<(f64, f64)> {
    let logits = model.forward_with(params, &data.inputs, phase)?;
    Ok(loss_and_accuracy(&logits, &data.labels))
}

/// Central differences of the loss over every parameter, with step
/// `rel_step · max(1, |θ_i|)`.
pub fn fd_gradient(
    model: &ModelStack,
    params: &[f64],
    data: &Dataset,
    phase: Phase,
    rel_step: f64,
    threads: usize,
) -> Result<Vec<f64>> {
    let indices: Vec<usize> = (0..params.len()).collect();
    fd_partials(model, params, data, phase, rel_step, threads, &indices)
}

/// Central-difference partials for the listed parameters only.
pub fn fd_partials(
    model: &ModelStack,
    params: &[f64],
    data: &Dataset,
    phase: Phase,
    rel_step: f64,
    threads: usize,
    indices: &[usize],
) -> Result<Vec<f64>> {
    let threads = if threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        threads
    };
    let chunk = indices.len().div_ceil(threads.max(1)).max(1);
    let mut out = vec![0.0; indices.len()];
    std::thread::scope(|scope| -> Result<()> {
        let handles: Vec<_> = indices
            .chunks(chunk)
            .zip(out.chunks_mut(chunk))
            .map(|(idx, slots)| {
                scope.spawn(move || -> Result<()> {
                    let mut probe = params.to_vec();
                    for (&i, slot) in idx.iter().zip(slots.iter_mut()) {
                        let h = rel_step * params[i].abs().max(1.0);
                        probe[i] = params[i] + h;
                        let (plus, _) = evaluate(model, &probe, data, phase)?;
                        probe[i] = params[i] - h;
                        let (minus, _) = evaluate(model, &probe, data, phase)?;
                        probe[i] = params[i];
                        *slot = (plus - minus) / (2.0 * h);
                    }
                    Ok(())
                })
            })
            .collect();
        for h in handles {
            h.join().expect("gradient worker panicked")?;
        }
        Ok(())
    })?;
    Ok(out)
}

/// Train with momentum on a freshly generated dataset. Deterministic in
/// `seed`.
pub fn train_demo(
    model_cfg: &ModelConfig,
    task: &SyntheticTask,
    train: &TrainConfig,
    seed: u64,
) -> Result<TrainReport> {
    let mut model = ModelStack::new(model_cfg.clone(), seed)?;
    if model.param_count() > PARAM_BUDGET {
        return Err(Error::BudgetExceeded {
            count: model.param_count(),
            limit: PARAM_BUDGET,
        });
    }
    if !(train.lr >= 0.0 && (0.0..1.0).contains(&train.momentum) && train.fd_step > 0.0) {
        return Err(Error::Config("need lr ≥ 0, momentum in [0, 1) and fd_step > 0".into()));
    }
    let data = generate_task(task, train.train_size, seed.wrapping_add(1))?;
    let test = generate_task(task, train.test_size.max(2), seed.wrapping_add(2))?;

    let mut velocity = vec![0.0; model.param_count()];
    let mut loss = Vec::with_capacity(train.epochs + 1);
    let mut accuracy = Vec::with_capacity(train.epochs + 1);
    for epoch in 0..train.epochs {
        let phase = Phase::Train {
            mask_seed: seed ^ (epoch as u64).wrapping_mul(0x2545_F491_4F6C_DD1D),
        };
        let (l, a) = evaluate(&model, &model.params, &data, Phase::Eval)?;
        loss.push(l);
        accuracy.push(a);
        let mut grad = fd_gradient(&model, &model.params, &data, phase, train.fd_step, train.threads)?;
        if let Some(clip) = train.clip_norm {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > clip {
                grad.iter_mut().for_each(|g| *g *= clip / norm);
            }
        }
        for ((p, v), g) in model.params.iter_mut().zip(&mut velocity).zip(&grad) {
            *v = train.momentum * *v - train.lr * g;
            *p += *v;
        }
    }
    let (final_loss, final_acc) = evaluate(&model, &model.params, &data, Phase::Eval)?;
    loss.push(final_loss);
    accuracy.push(final_acc);
    let (_, test_accuracy) = evaluate(&model, &model.params, &test, Phase::Eval)?;
    Ok(TrainReport {
        seed,
        param_count: model.param_count(),
        model: model_cfg.clone(),
        task: task.clone(),
        train: train.clone(),
        loss,
        accuracy,
        final_train_loss: final_loss,
        final_train_accuracy: final_acc,
        test_accuracy,
    })
}
