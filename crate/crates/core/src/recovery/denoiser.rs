use crate::error::{Error, Result};

use super::quadrature::expect_normal_even;

/// Bernoulli-Gaussian entry law `(1 - rho) delta_0 + rho N(0, var)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalPrior {
    pub rho: f64,
    pub var: f64,
}

impl SignalPrior {
    pub fn new(rho: f64, var: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::config(format!("prior sparsity must lie in (0,1], got {rho}")));
        }
        if !(var > 0.0) || !var.is_finite() {
            return Err(Error::config(format!("prior variance must be > 0, got {var}")));
        }
        Ok(SignalPrior { rho, var })
    }

    /// Second moment `E[x^2]`.
    pub fn energy(&self) -> f64 {
        self.rho * self.var
    }
}

/// Posterior mean and variance of `x` given `r = x + N(0, tau2)`.
#[inline]
pub(crate) fn posterior(r: f64, tau2: f64, prior: &SignalPrior) -> (f64, f64) {
    let s = prior.var;
    let total = s + tau2;
    let gain = s / total;
    let mean_on = gain * r;
    let var_on = gain * tau2;
    // log[(1-rho) N(r;0,tau2)] - log[rho N(r;0,s+tau2)]
    let log_odds_off = ((1.0 - prior.rho) / prior.rho).ln() + 0.5 * (total / tau2).ln()
        - 0.5 * r * r * (1.0 / tau2 - 1.0 / total);
    let pi_on = if log_odds_off > 700.0 {
        0.0
    } else {
        1.0 / (1.0 + log_odds_off.exp())
    };
    let mean = pi_on * mean_on;
    let var = pi_on * (var_on + mean_on * mean_on) - mean * mean;
    (mean, var.max(0.0))
}

/// Posterior mean and variance under the Bernoulli-Gaussian prior.
pub fn bg_mmse_denoiser(r: f64, tau2: f64, prior: &SignalPrior) -> Result<(f64, f64)> {
    if !(tau2 > 0.0) || !tau2.is_finite() {
        return Err(Error::invalid(format!("tau^2 must be finite and > 0, got {tau2}")));
    }
    Ok(posterior(r, tau2, prior))
}

/// Scalar MMSE `E[(x - E[x|r])^2]` at noise level `tau2`, written as the
/// expected posterior variance and integrated over both prior components.
/// Accurate to about `1e-12` relative to the prior energy.
pub fn bg_mmse(tau2: f64, prior: &SignalPrior) -> f64 {
    if tau2 <= 0.0 {
        return 0.0;
    }
    let tol = 1e-12 * prior.energy();
    let sd_off = tau2.sqrt();
    let sd_on = (prior.var + tau2).sqrt();
    let off = expect_normal_even(|z| posterior(sd_off * z, tau2, prior).1, tol);
    let on = expect_normal_even(|z| posterior(sd_on * z, tau2, prior).1, tol);
    (1.0 - prior.rho) * off + prior.rho * on
}
