//! Synthetic classification tasks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conv::SequenceBatch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Label 1 iff `Σ_k u_k u_{k+1} > 0` for i.i.d. standard normal `u`.
    AdjacentProductSign,
    /// A single impulse; the label is the bucket of its position.
    ImpulseMemory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub kind: TaskKind,
    pub length: usize,
    /// Standard deviation of Gaussian noise added after labelling.
    pub noise: f64,
    pub classes: usize,
}

impl SyntheticTask {
    pub fn adjacent_product_sign(length: usize) -> Self {
        Self {
            kind: TaskKind::AdjacentProductSign,
            length,
            noise: 0.0,
            classes: 2,
        }
    }

    pub fn impulse_memory(length: usize, classes: usize) -> Self {
        Self {
            kind: TaskKind::ImpulseMemory,
            length,
            noise: 0.0,
            classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: SequenceBatch,
    pub labels: Vec<usize>,
}

pub fn adjacent_product_label(u: &[f64]) -> usize {
    usize::from(u.windows(2).map(|w| w[0] * w[1]).sum::<f64>() > 0.0)
}

/// `n` labelled sequences with classes assigned round-robin, so counts differ
/// by at most one.
pub fn generate_task(task: &SyntheticTask, n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Config("a dataset needs at least 2 samples".into()));
    }
    if task.length < 2 {
        return Err(Error::Config("task length must be at least 2".into()));
    }
    if !(task.noise >= 0.0 && task.noise.is_finite()) {
        return Err(Error::Config(format!("noise {} must be non-negative", task.noise)));
    }
    let classes = match task.kind {
        TaskKind::AdjacentProductSign => 2,
        TaskKind::ImpulseMemory => task.classes,
    };
    if classes < 2 || classes > task.length {
        return Err(Error::Config(format!(
            "class count {classes} must lie in 2..={}",
            task.length
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = task.length;
    let mut seqs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let target = i % classes;
        let mut u = match task.kind {
            TaskKind::AdjacentProductSign => loop {
                let u: Vec<f64> = (0..l).map(|_| rng.sample(StandardNormal)).collect();
                if adjacent_product_label(&u) == target {
                    break u;
                }
            },
            TaskKind::ImpulseMemory => {
                let lo = target * l / classes;
                let hi = (target + 1) * l / classes;
                let mut u = vec![0.0; l];
                u[rng.random_range(lo..hi)] = 1.0;
                u
            }
        };
        if task.noise > 0.0 {
            for v in &mut u {
                *v += task.noise * rng.sample::<f64, _>(StandardNormal);
            }
        }
        seqs.push(u);
        labels.push(target);
    }
    Ok(Dataset {
        inputs: SequenceBatch::from_sequences(&seqs)?,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_is_positive() {
        assert_eq!(adjacent_product_label(&[1.0; 8]), 1);
        assert_eq!(adjacent_product_label(&[1.0, -1.0, 1.0]), 0);
    }

    #[test]
    fn deterministic_and_balanced() {
        let task = SyntheticTask::adjacent_product_sign(32);
        let a = generate_task(&task, 2000, 5).unwrap();
        assert_eq!(a, generate_task(&task, 2000, 5).unwrap());
        assert_ne!(a, generate_task(&task, 2000, 6).unwrap());
        let ones = a.labels.iter().filter(|&&y| y == 1).count() as f64 / 2000.0;
        assert!((ones - 0.5).abs() <= 0.05);
        for b in 0..50 {
            assert_eq!(adjacent_product_label(&a.inputs.channel(b, 0)), a.labels[b]);
        }
    }

    #[test]
    fn impulse_positions_match_buckets() {
        let task = SyntheticTask::impulse_memory(16, 4);
        let d = generate_task(&task, 40, 1).unwrap();
        for b in 0..40 {
            let u = d.inputs.channel(b, 0);
            let pos = u.iter().position(|&v| v == 1.0).unwrap();
            assert_eq!(pos * 4 / 16, d.labels[b]);
        }
    }

    #[test]
    fn rejects_bad_tasks() {
        let task = SyntheticTask::adjacent_product_sign(8);
        assert!(generate_task(&task, 1, 0).is_err());
        assert!(generate_task(&SyntheticTask::impulse_memory(4, 5), 10, 0).is_err());
        let noisy = SyntheticTask { noise: -1.0, ..task };
        assert!(generate_task(&noisy, 10, 0).is_err());
    }
}
