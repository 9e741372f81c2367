use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::{bg_mmse, debiased_mse, EstimatorConfig, EstimatorKind, SignalPrior};

/// Predicted per-iteration MSE of OAMP.
#[derive(Debug, Clone, PartialEq)]
pub struct SeTrace {
    pub values: Vec<f64>,
    pub delta: f64,
    pub sigma2: f64,
    pub prior: SignalPrior,
}

impl SeTrace {
    pub fn last(&self) -> f64 {
        self.values.last().copied().unwrap_or(self.prior.energy())
    }

    /// `iteration,v` rows, one per iteration starting at 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,v\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{v:e}", i + 1);
        }
        out
    }
}

/// MSE of the Gaussian-matched linear estimator with a partial-orthogonal `A`.
pub fn lmmse_mse(delta: f64, sigma2: f64, prior: &SignalPrior) -> f64 {
    let s = prior.energy();
    s - delta * s * s / (s + sigma2)
}

/// Scalar recursion tracking OAMP's error.
///
/// Linear stage: `tau^2 = (1/delta - 1) v + sigma^2/delta`. Denoiser:
/// `mmse(tau^2)`, recorded. Extrinsic update: `v = 1/(1/mmse - 1/tau^2)`.
/// Starts from `v = rho * var` (zero initial estimate).
pub fn state_evolution(delta: f64, sigma2: f64, prior: &SignalPrior, iterations: usize) -> Result<SeTrace> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("delta = M/d must lie in (0,1], got {delta}")));
    }
    let mut v = prior.energy();
    let mut values = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let tau2 = (1.0 / delta - 1.0) * v + sigma2 / delta;
        let mmse = if tau2 > 0.0 { bg_mmse(tau2, prior) } else { 0.0 };
        if !mmse.is_finite() || mmse < 0.0 {
            return Err(Error::NumericDivergence {
                stage: "state_evolution",
                step: it,
            });
        }
        values.push(mmse);
        let gap = tau2 - mmse;
        v = if mmse == 0.0 {
            0.0
        } else if gap > 0.0 {
            mmse * tau2 / gap
        } else {
            mmse
        };
    }
    Ok(SeTrace {
        values,
        delta,
        sigma2,
        prior: *prior,
    })
}

/// Per-round estimation-error variance `v^(t)` for the bound.
pub fn vseq_for_bound(rounds: usize, delta: f64, cfg: &EstimatorConfig) -> Result<Vec<f64>> {
    let v = match cfg.kind {
        EstimatorKind::Identity => cfg.sigma2,
        EstimatorKind::Lmmse => lmmse_mse(delta, cfg.sigma2, &cfg.prior),
        EstimatorKind::Oamp => {
            let m = state_evolution(delta, cfg.sigma2, &cfg.prior, cfg.iterations)?.last();
            if cfg.debias {
                debiased_mse(m, &cfg.prior)
            } else {
                m
            }
        }
    };
    Ok(vec![v; rounds])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prior() -> SignalPrior {
        SignalPrior::new(0.1, 2e-5).unwrap()
    }

    #[test]
    fn noiseless_square_case_vanishes() {
        let tr = state_evolution(1.0, 0.0, &prior(), 20).unwrap();
        assert!(tr.last() < 1e-10);
    }

    #[test]
    fn more_measurements_help() {
        let sigma2 = 2e-8;
        let lo = state_evolution(0.4, sigma2, &prior(), 20).unwrap().last();
        let hi = state_evolution(0.8, sigma2, &prior(), 20).unwrap().last();
        assert!(hi <= lo);
        let tr = state_evolution(0.6, sigma2, &prior(), 20).unwrap();
        assert!(tr.values.iter().all(|v| *v >= 0.0));
        assert!(tr.last() <= tr.values[0]);
    }

    #[test]
    fn rejects_bad_ratio() {
        assert!(state_evolution(0.0, 1.0, &prior(), 3).is_err());
        assert!(state_evolution(1.2, 1.0, &prior(), 3).is_err());
    }

    #[test]
    fn vseq_by_kind() {
        let mut cfg = EstimatorConfig::new(EstimatorKind::Identity, prior(), 3e-3);
        assert_eq!(vseq_for_bound(4, 1.0, &cfg).unwrap(), vec![3e-3; 4]);
        cfg.kind = EstimatorKind::Oamp;
        cfg.sigma2 = 0.0;
        assert!(vseq_for_bound(3, 1.0, &cfg).unwrap().iter().all(|v| *v < 1e-12));
        cfg.sigma2 = 2e-8;
        let se = state_evolution(0.6, 2e-8, &prior(), 20).unwrap().last();
        let s = prior().energy();
        assert_eq!(vseq_for_bound(5, 0.6, &cfg).unwrap(), vec![s * se / (s - se); 5]);
        cfg.debias = false;
        assert_eq!(vseq_for_bound(5, 0.6, &cfg).unwrap(), vec![se; 5]);
    }

    #[test]
    fn csv_export() {
        let tr = state_evolution(0.5, 1e-3, &SignalPrior::new(0.2, 1.0).unwrap(), 3).unwrap();
        let csv = tr.to_csv();
        assert!(csv.starts_with("iteration,v\n1,"));
        assert_eq!(csv.lines().count(), 4);
    }
}
