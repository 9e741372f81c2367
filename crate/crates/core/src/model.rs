//! Differentiable loss models with hand-written gradients.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, MiniBatch};
use crate::error::{check_dim, Error, Result};
use crate::rng::{stream, tag};
use crate::vector::ModelVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Multinomial logistic regression, `W (c x p)` then bias `b (c)`.
    Logistic,
    /// One sigmoid hidden layer: `W1 (h x p)`, `b1 (h)`, `W2 (c x h)`, `b2 (c)`.
    Mlp,
    /// `L(theta; x) = 0.5 * |theta - x|^2`, labels ignored. Used for analytic checks.
    Quadratic,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Mlp => "mlp",
            ModelKind::Quadratic => "quadratic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "logistic" | "multinomial-logistic" => Some(ModelKind::Logistic),
            "mlp" | "one-hidden-layer-mlp" => Some(ModelKind::Mlp),
            "quadratic" => Some(ModelKind::Quadratic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossModel {
    pub kind: ModelKind,
    pub features: usize,
    pub hidden: usize,
    pub classes: usize,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Writes softmax(z) into `z` and returns `log-sum-exp(z)`.
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}

impl LossModel {
    pub fn logistic(features: usize, classes: usize) -> Self {
        LossModel {
            kind: ModelKind::Logistic,
            features,
            hidden: 0,
            classes,
        }
    }

    pub fn mlp(features: usize, hidden: usize, classes: usize) -> Self {
        LossModel {
            kind: ModelKind::Mlp,
            features,
            hidden,
            classes,
        }
    }

    pub fn quadratic(dim: usize) -> Self {
        LossModel {
            kind: ModelKind::Quadratic,
            features: dim,
            hidden: 0,
            classes: 1,
        }
    }

    /// Number of trainable parameters.
    pub fn dim(&self) -> usize {
        let (p, h, c) = (self.features, self.hidden, self.classes);
        match self.kind {
            ModelKind::Logistic => c * p + c,
            ModelKind::Mlp => h * p + h + c * h + c,
            ModelKind::Quadratic => p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.features > 0
            && self.classes > 0
            && (self.kind != ModelKind::Mlp || self.hidden > 0);
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid model dimensions {self:?}")))
        }
    }

    /// Initial parameters: zeros for the convex models, scaled Gaussian
    /// weights for the MLP so hidden units are not symmetric.
    pub fn init(&self, seed: u64) -> ModelVector {
        let mut theta = ModelVector::zeros(self.dim());
        if self.kind == ModelKind::Mlp {
            let (p, h, c) = (self.features, self.hidden, self.classes);
            let mut rng = stream(seed, &[tag::INIT]);
            let w = theta.as_mut_slice();
            let s1 = (1.0 / p as f64).sqrt();
            for v in &mut w[..h * p] {
                *v = s1 * rng.sample::<f64, _>(StandardNormal);
            }
            let s2 = (1.0 / h as f64).sqrt();
            let off = h * p + h;
            for v in &mut w[off..off + c * h] {
                *v = s2 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        theta
    }

    fn check(&self, theta: &ModelVector, data: &Dataset) -> Result<()> {
        check_dim(self.dim(), theta.len())?;
        check_dim(self.features, data.num_features())?;
        if self.kind != ModelKind::Quadratic && data.num_classes() > self.classes {
            return Err(Error::config(format!(
                "dataset has {} classes, model {}",
                data.num_classes(),
                self.classes
            )));
        }
        Ok(())
    }

    /// Loss and (optionally) gradient contribution of a single sample.
    fn sample_loss_grad(
        &self,
        w: &[f64],
        x: &[f64],
        y: usize,
        scratch: &mut Vec<f64>,
        grad: Option<(&mut [f64], f64)>,
    ) -> f64 {
        let (p, h, c) = (self.features, self.hidden, self.classes);
        match self.kind {
            ModelKind::Quadratic => {
                let mut loss = 0.0;
                for (t, xi) in w.iter().zip(x) {
                    loss += 0.5 * (t - xi) * (t - xi);
                }
                if let Some((g, scale)) = grad {
                    for ((gi, t), xi) in g.iter_mut().zip(w).zip(x) {
                        *gi += scale * (t - xi);
                    }
                }
                loss
            }
            ModelKind::Logistic => {
                let (wm, b) = w.split_at(c * p);
                scratch.clear();
                scratch.extend((0..c).map(|k| {
                    b[k] + wm[k * p..(k + 1) * p]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                }));
                let zy = scratch[y];
                let lse = softmax_in_place(scratch);
                if let Some((g, scale)) = grad {
                    let (gw, gb) = g.split_at_mut(c * p);
                    for k in 0..c {
                        let delta = scale * (scratch[k] - if k == y { 1.0 } else { 0.0 });
                        gb[k] += delta;
                        for (gi, xi) in gw[k * p..(k + 1) * p].iter_mut().zip(x) {
                            *gi += delta * xi;
                        }
                    }
                }
                lse - zy
            }
            ModelKind::Mlp => {
                let (w1, rest) = w.split_at(h * p);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                scratch.clear();
                scratch.extend((0..h).map(|j| {
                    sigmoid(
                        b1[j]
                            + w1[j * p..(j + 1) * p]
                                .iter()
                                .zip(x)
                                .map(|(a, b)| a * b)
                                .sum::<f64>(),
                    )
                }));
                let mut z: Vec<f64> = (0..c)
                    .map(|k| {
                        b2[k]
                            + w2[k * h..(k + 1) * h]
                                .iter()
                                .zip(scratch.iter())
                                .map(|(a, b)| a * b)
                                .sum::<f64>()
                    })
                    .collect();
                let zy = z[y];
                let lse = softmax_in_place(&mut z);
                if let Some((g, scale)) = grad {
                    let (gw1, rest) = g.split_at_mut(h * p);
                    let (gb1, rest) = rest.split_at_mut(h);
                    let (gw2, gb2) = rest.split_at_mut(c * h);
                    let mut back = vec![0.0; h];
                    for k in 0..c {
                        let dz = scale * (z[k] - if k == y { 1.0 } else { 0.0 });
                        gb2[k] += dz;
                        for j in 0..h {
                            gw2[k * h + j] += dz * scratch[j];
                            back[j] += dz * w2[k * h + j];
                        }
                    }
                    for j in 0..h {
                        let a = scratch[j];
                        let dh = back[j] * a * (1.0 - a);
                        gb1[j] += dh;
                        for (gi, xi) in gw1[j * p..(j + 1) * p].iter_mut().zip(x) {
                            *gi += dh * xi;
                        }
                    }
                }
                lse - zy
            }
        }
    }

    /// Average loss over the batch.
    pub fn loss_eval(&self, theta: &ModelVector, batch: &MiniBatch<'_>) -> Result<f64> {
        self.check(theta, batch.data)?;
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut scratch = Vec::new();
        let total: f64 = batch
            .iter()
            .map(|(x, y)| self.sample_loss_grad(theta.as_slice(), x, y, &mut scratch, None))
            .sum();
        let loss = total / batch.len() as f64;
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(Error::NumericDivergence {
                stage: "loss_eval",
                step: 0,
            })
        }
    }

    /// Average gradient over the batch.
    pub fn grad_minibatch(&self, theta: &ModelVector, batch: &MiniBatch<'_>) -> Result<ModelVector> {
        self.loss_and_grad(theta, batch).map(|(_, g)| g)
    }

    pub fn loss_and_grad(
        &self,
        theta: &ModelVector,
        batch: &MiniBatch<'_>,
    ) -> Result<(f64, ModelVector)> {
        self.check(theta, batch.data)?;
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; self.dim()];
        let mut scratch = Vec::new();
        let mut total = 0.0;
        for (x, y) in batch.iter() {
            total += self.sample_loss_grad(
                theta.as_slice(),
                x,
                y,
                &mut scratch,
                Some((&mut grad, scale)),
            );
        }
        let grad = ModelVector::new(grad);
        if !grad.is_finite() || !total.is_finite() {
            return Err(Error::NumericDivergence {
                stage: "grad_minibatch",
                step: 0,
            });
        }
        Ok((total * scale, grad))
    }

    pub fn full_grad(&self, theta: &ModelVector, data: &Dataset) -> Result<ModelVector> {
        self.grad_minibatch(theta, &data.full_batch())
    }

    /// Fraction of correctly classified samples; `None` for the quadratic model.
    pub fn accuracy(&self, theta: &ModelVector, data: &Dataset) -> Result<Option<f64>> {
        self.check(theta, data)?;
        if self.kind == ModelKind::Quadratic {
            return Ok(None);
        }
        let c = self.classes;
        let mut correct = 0usize;
        let mut scratch = Vec::new();
        for i in 0..data.len() {
            // Cross-entropy is minimal at the argmax logit.
            let mut best = (f64::INFINITY, 0);
            for k in 0..c {
                let l = self.sample_loss_grad(theta.as_slice(), data.features(i), k, &mut scratch, None);
                if l < best.0 {
                    best = (l, k);
                }
            }
            if best.1 == data.label(i) {
                correct += 1;
            }
        }
        Ok(Some(correct as f64 / data.len() as f64))
    }
}
