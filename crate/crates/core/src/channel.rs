//! Real Gaussian multiple-access channel with per-device power accounting.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{stream, tag};
use crate::vector::norm_sq;

/// Relative slack allowed on the per-device power check.
pub const POWER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    /// Channel uses per round.
    pub m: usize,
    /// Per-entry noise variance.
    pub sigma2: f64,
    /// Per-device power budget (energy per block).
    pub power: f64,
}

impl ChannelConfig {
    pub fn new(m: usize, sigma2: f64, power: f64) -> Result<Self> {
        if m < 1 {
            return Err(Error::config("channel.m must be at least 1"));
        }
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(Error::config(format!("noise variance must be finite and >= 0, got {sigma2}")));
        }
        if !(power > 0.0) {
            return Err(Error::config(format!("power budget must be > 0, got {power}")));
        }
        Ok(ChannelConfig { m, sigma2, power })
    }

    /// Noise variance giving `P / (d sigma^2) = snr_db` (in dB).
    pub fn from_snr_db(m: usize, power: f64, d: usize, snr_db: f64) -> Result<Self> {
        let sigma2 = power / (d as f64 * 10f64.powf(snr_db / 10.0));
        ChannelConfig::new(m, sigma2, power)
    }

    pub fn snr_db(&self, d: usize) -> f64 {
        10.0 * (self.power / (d as f64 * self.sigma2)).log10()
    }
}

/// Channel noise generator; round `t` always yields the same vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    pub seed: u64,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        NoiseSource { seed }
    }

    pub fn draw(&self, t: usize, m: usize, sigma2: f64) -> Vec<f64> {
        let sd = sigma2.sqrt();
        let mut rng = stream(self.seed, &[tag::CHANNEL_NOISE, t as u64]);
        (0..m)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

/// `sum_i x_i + n` after checking every `|x_i|^2 <= P`.
///
/// Signals are summed in slice order.
pub fn mac_transmit(
    signals: &[Vec<f64>],
    cfg: &ChannelConfig,
    noise: &NoiseSource,
    t: usize,
) -> Result<Vec<f64>> {
    let limit = cfg.power * (1.0 + POWER_TOLERANCE);
    let mut y = vec![0.0; cfg.m];
    for (device, x) in signals.iter().enumerate() {
        if x.len() != cfg.m {
            return Err(Error::DimensionMismatch {
                expected: cfg.m,
                actual: x.len(),
            });
        }
        let power = norm_sq(x);
        if !(power <= limit) {
            return Err(Error::PowerViolation {
                device,
                power,
                budget: cfg.power,
                excess: power - cfg.power,
            });
        }
        for (a, b) in y.iter_mut().zip(x) {
            *a += b;
        }
    }
    if cfg.sigma2 > 0.0 {
        for (a, n) in y.iter_mut().zip(noise.draw(t, cfg.m, cfg.sigma2)) {
            *a += n;
        }
    }
    Ok(y)
}
