use airfl_core::channel::{mac_transmit, ChannelConfig, NoiseSource};
use airfl_core::projection::{gen_projection, ProjectionKind};
use airfl_core::recovery::{estimate, EstimatorConfig, EstimatorKind, SignalPrior};
use airfl_core::rng::stream;
use airfl_core::ModelVector;
use rand::Rng;
use rand_distr::StandardNormal;

fn instance(d: usize, seed: u64, delta: f64, prior: &SignalPrior, sigma2: f64) -> (ModelVector, ModelVector, f64) {
    let m = (delta * d as f64).round() as usize;
    let mut rng = stream(seed, &[77]);
    let x: Vec<f64> = (0..d)
        .map(|_| {
            if rng.random::<f64>() < prior.rho {
                prior.var.sqrt() * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            }
        })
        .collect();
    let a = gen_projection(m, d, ProjectionKind::Dct, seed).unwrap();
    let ch = ChannelConfig::new(m, sigma2, f64::INFINITY).unwrap();
    let y = mac_transmit(&[a.apply(&x).unwrap()], &ch, &NoiseSource::new(seed), 0).unwrap();
    let cfg = EstimatorConfig::new(EstimatorKind::Oamp, *prior, sigma2);
    let res = estimate(&y, &a, &cfg).unwrap();
    (res.x_hat, ModelVector::new(x), res.v_hat)
}

fn operating_point(d: usize) -> (SignalPrior, f64) {
    let power = 2e-5 * d as f64;
    (SignalPrior::new(0.1, power / d as f64).unwrap(), power / (d as f64 * 1e3))
}

#[test]
fn recovery_error_is_uncorrelated_with_the_signal() {
    const D: usize = 1024;
    let (prior, sigma2) = operating_point(D);
    let (mut num, mut ee, mut xx) = (0.0, 0.0, 0.0);
    let mut mean_err = vec![0.0; D];
    let mut sq_err = vec![0.0; D];
    let n = 100;
    for seed in 0..n {
        let (x_hat, x, _) = instance(D, seed, 0.6, &prior, sigma2);
        let e = x_hat.sub(&x).unwrap();
        num += e.dot(&x).unwrap();
        ee += e.norm_sq();
        xx += x.norm_sq();
        for j in 0..D {
            mean_err[j] += e[j] / n as f64;
            sq_err[j] += e[j] * e[j] / n as f64;
        }
    }
    let corr = num / (ee * xx).sqrt();
    assert!(corr.abs() < 0.05, "corr {corr}");
    // Per-entry error means, tested against their own spread.
    let std = (sq_err.iter().zip(&mean_err).map(|(s, m)| s - m * m).sum::<f64>() / D as f64).sqrt();
    let grand = mean_err.iter().sum::<f64>() / D as f64;
    assert!(grand.abs() < 3.0 * std / (D as f64 * n as f64).sqrt(), "mean {grand} std {std}");
}

#[test]
fn predicted_error_is_calibrated() {
    // Per-instance MSE fluctuates by ~1/sqrt(d); 4096 keeps it inside 20%.
    const D: usize = 4096;
    let (prior, sigma2) = operating_point(D);
    for delta in [0.4, 0.6, 0.8] {
        let seeds = 20;
        let good = (0..seeds)
            .filter(|&s| {
                let (x_hat, x, v_hat) = instance(D, 1000 + s, delta, &prior, sigma2);
                let mse = x_hat.sub(&x).unwrap().norm_sq() / D as f64;
                (mse - v_hat).abs() <= 0.2 * v_hat
            })
            .count();
        assert!(good as f64 >= 0.9 * seeds as f64, "delta {delta}: {good}/{seeds} calibrated");
    }
}

#[test]
fn identity_estimator_error_is_the_channel_noise() {
    let a = gen_projection(64, 64, ProjectionKind::Identity, 0).unwrap();
    let ch = ChannelConfig::new(64, 0.01, f64::INFINITY).unwrap();
    let x: Vec<f64> = (0..64).map(|i| i as f64 * 0.1).collect();
    let noise = NoiseSource::new(4);
    let y = mac_transmit(&[a.apply(&x).unwrap()], &ch, &noise, 3).unwrap();
    let prior = SignalPrior::new(0.1, 1.0).unwrap();
    let res = estimate(&y, &a, &EstimatorConfig::new(EstimatorKind::Identity, prior, 0.01)).unwrap();
    let n = noise.draw(3, 64, 0.01);
    for j in 0..64 {
        assert_eq!(res.x_hat[j] - x[j], (x[j] + n[j]) - x[j]);
    }
    assert_eq!(res.v_hat, 0.01);
}
