//! Mini-batch sampling and local SGD.

use rand::Rng;

use crate::data::{Dataset, MiniBatch};
use crate::error::{Error, Result};
use crate::model::LossModel;
use crate::rng::{stream, tag};
use crate::vector::ModelVector;

/// Draws mini-batches with replacement. Each `(device, round, step)` has its
/// own stream, so the batch a device sees never depends on other devices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MiniBatchSampler {
    pub seed: u64,
    pub device: usize,
    pub round: usize,
    pub batch_size: usize,
}

impl MiniBatchSampler {
    pub fn new(seed: u64, device: usize, round: usize, batch_size: usize) -> Self {
        MiniBatchSampler {
            seed,
            device,
            round,
            batch_size,
        }
    }

    pub fn indices(&self, n: usize, step: usize) -> Vec<usize> {
        let mut rng = stream(
            self.seed,
            &[
                tag::MINIBATCH,
                self.device as u64,
                self.round as u64,
                step as u64,
            ],
        );
        (0..self.batch_size).map(|_| rng.random_range(0..n)).collect()
    }

    pub fn batch<'a>(&self, data: &'a Dataset, step: usize) -> MiniBatch<'a> {
        data.batch(self.indices(data.len(), step))
    }
}

/// Result of the local steps of one device in one round.
#[derive(Debug, Clone)]
pub struct LocalRun {
    pub theta: ModelVector,
    /// Norm of each mini-batch gradient, in step order.
    pub grad_norms: Vec<f64>,
}

/// `Q` sequential SGD steps from `theta_init`.
pub fn local_sgd(
    model: &LossModel,
    theta_init: &ModelVector,
    steps: usize,
    lr: f64,
    sampler: &MiniBatchSampler,
    data: &Dataset,
) -> Result<LocalRun> {
    if steps < 1 {
        return Err(Error::invalid("local steps Q must be at least 1"));
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::invalid(format!("learning rate {lr} must be finite and >= 0")));
    }
    if sampler.batch_size == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut theta = theta_init.clone();
    let mut grad_norms = Vec::with_capacity(steps);
    for q in 0..steps {
        let batch = sampler.batch(data, q);
        let g = model.grad_minibatch(&theta, &batch).map_err(|e| match e {
            Error::NumericDivergence { stage, .. } => Error::NumericDivergence { stage, step: q },
            other => other,
        })?;
        grad_norms.push(g.norm());
        theta.axpy(-lr, &g)?;
        if !theta.is_finite() {
            return Err(Error::NumericDivergence {
                stage: "local_sgd",
                step: q,
            });
        }
    }
    Ok(LocalRun { theta, grad_norms })
}

/// `start - end`.
pub fn model_diff(start: &ModelVector, end: &ModelVector) -> Result<ModelVector> {
    start.sub(end)
}
