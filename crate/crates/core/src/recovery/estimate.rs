use crate::error::{Error, Result};
use crate::projection::ProjectionMatrix;
use crate::vector::{norm_sq, ModelVector};

use super::denoiser::posterior;
use super::SignalPrior;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// `A^T y`; requires a square orthonormal `A`.
    Identity,
    /// Linear MMSE under a Gaussian prior with the same second moment.
    Lmmse,
    /// Orthogonal AMP with a Bernoulli-Gaussian MMSE denoiser.
    Oamp,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Identity => "identity",
            EstimatorKind::Lmmse => "lmmse",
            EstimatorKind::Oamp => "oamp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(EstimatorKind::Identity),
            "lmmse" => Some(EstimatorKind::Lmmse),
            "oamp" => Some(EstimatorKind::Oamp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub prior: SignalPrior,
    pub iterations: usize,
    /// Weight on the new extrinsic estimate; 1.0 disables damping.
    pub damping: f64,
    /// Per-entry channel noise variance.
    pub sigma2: f64,
    /// Rescale the OAMP posterior mean so its error is uncorrelated with
    /// the signal (see [`debiased_mse`]).
    pub debias: bool,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind, prior: SignalPrior, sigma2: f64) -> Self {
        EstimatorConfig {
            kind,
            prior,
            iterations: 20,
            damping: 1.0,
            sigma2,
            debias: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::config("estimator iterations must be >= 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config(format!("damping must lie in (0,1], got {}", self.damping)));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(Error::config("noise variance must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub x_hat: ModelVector,
    /// Predicted per-entry error variance.
    pub v_hat: f64,
    /// Predicted variance after each iteration (one entry for linear kinds).
    pub trace: Vec<f64>,
}

/// Estimates `x` from `y = A x + n`, assuming `A A^T = I`.
pub fn estimate(y: &[f64], a: &ProjectionMatrix, cfg: &EstimatorConfig) -> Result<RecoveryResult> {
    cfg.validate()?;
    if y.len() != a.rows {
        return Err(Error::DimensionMismatch {
            expected: a.rows,
            actual: y.len(),
        });
    }
    match cfg.kind {
        EstimatorKind::Identity => {
            if a.rows != a.cols {
                return Err(Error::config(format!(
                    "identity estimator requires M = d (M={}, d={})",
                    a.rows, a.cols
                )));
            }
            Ok(RecoveryResult {
                x_hat: a.apply_t(y)?,
                v_hat: cfg.sigma2,
                trace: vec![cfg.sigma2],
            })
        }
        EstimatorKind::Lmmse => {
            let s = cfg.prior.energy();
            let gain = s / (s + cfg.sigma2);
            let x_hat = a.apply_t(y)?.scaled(gain);
            let v = super::lmmse_mse(a.rows as f64 / a.cols as f64, cfg.sigma2, &cfg.prior);
            Ok(RecoveryResult {
                x_hat,
                v_hat: v,
                trace: vec![v],
            })
        }
        EstimatorKind::Oamp => oamp(y, a, cfg),
    }
}

/// Per-entry MSE `|x_hat - x|^2 / d` and the sample correlation between the
/// estimation error `x_hat - x` and the signal `x`.
pub fn error_stats(x_hat: &ModelVector, x: &ModelVector) -> Result<(f64, f64)> {
    let err = x_hat.sub(x)?;
    let n = x.len() as f64;
    let mean = |v: &ModelVector| v.iter().sum::<f64>() / n;
    let (me, mx) = (mean(&err), mean(x));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (e, s) in err.iter().zip(x.iter()) {
        let (a, b) = (e - me, s - mx);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    let corr = if sxx > 0.0 && syy > 0.0 { sxy / (sxx * syy).sqrt() } else { 0.0 };
    Ok((err.norm_sq() / n, corr))
}

/// OAMP with the pseudo-inverse linear stage `r = x + (d/M) A^T (y - A x)`
/// and the extrinsic (divergence-free) form of the MMSE denoiser.
fn oamp(y: &[f64], a: &ProjectionMatrix, cfg: &EstimatorConfig) -> Result<RecoveryResult> {
    let (m, d) = (a.rows, a.cols);
    let delta = m as f64 / d as f64;
    let sigma2 = cfg.sigma2;
    let prior = &cfg.prior;

    let mut x_ext = vec![0.0; d];
    let mut x_post = vec![0.0; d];
    let mut v_post = prior.energy();
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut resid = y.to_vec();
    let mut mean = vec![0.0; d];

    for it in 0..cfg.iterations {
        // Error variance of the linear-stage input, estimated from the residual.
        let ax = a.apply(&x_ext)?;
        for ((r, yi), axi) in resid.iter_mut().zip(y).zip(&ax) {
            *r = yi - axi;
        }
        let v_in = ((norm_sq(&resid) - m as f64 * sigma2) / m as f64).max(prior.energy() * 1e-14);
        let tau2 = (1.0 / delta - 1.0) * v_in + sigma2 / delta;
        let back = a.apply_t(&resid)?;
        let r: Vec<f64> = x_ext
            .iter()
            .zip(back.iter())
            .map(|(x, b)| x + b / delta)
            .collect();

        if !(tau2 > 0.0) {
            // Noiseless and fully determined: the linear stage is exact.
            x_post.copy_from_slice(&r);
            v_post = 0.0;
            trace.push(0.0);
            break;
        }

        let mut var_sum = 0.0;
        for (i, &ri) in r.iter().enumerate() {
            let (mu, var) = posterior(ri, tau2, prior);
            mean[i] = mu;
            var_sum += var;
        }
        v_post = var_sum / d as f64;
        if !v_post.is_finite() || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDivergence {
                stage: "oamp",
                step: it,
            });
        }
        x_post.copy_from_slice(&mean);
        trace.push(v_post);

        let gap = tau2 - v_post;
        let beta = cfg.damping;
        for i in 0..d {
            let fresh = if gap > 0.0 {
                (mean[i] * tau2 - r[i] * v_post) / gap
            } else {
                mean[i]
            };
            x_ext[i] = beta * fresh + (1.0 - beta) * x_ext[i];
        }
    }

    let s = prior.energy();
    if cfg.debias && v_post > 0.0 && v_post < s {
        let c = s / (s - v_post);
        x_post.iter_mut().for_each(|v| *v *= c);
        v_post = debiased_mse(v_post, prior);
    }
    Ok(RecoveryResult {
        x_hat: ModelVector::new(x_post),
        v_hat: v_post,
        trace,
    })
}

/// MSE of `s/(s - mmse) * E[x|r]` where `s = E[x^2]`.
///
/// The posterior mean is orthogonal to its error, so its error correlates
/// with `x` at `-sqrt(mmse/s)`; the rescaled estimate has
/// `E[(x_hat - x) x] = 0` at MSE `s mmse / (s - mmse)`.
pub fn debiased_mse(mmse: f64, prior: &SignalPrior) -> f64 {
    let s = prior.energy();
    if mmse <= 0.0 || mmse >= s {
        return mmse;
    }
    s * mmse / (s - mmse)
}
