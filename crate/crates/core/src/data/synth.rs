use rand::Rng;
use rand_distr::StandardNormal;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream, tag};

/// Gaussian class-conditional clusters.
///
/// Class `c` has mean `separation * u_c` with `u_c` a seeded random unit
/// vector; features are the mean plus standard normal noise. Labels cycle
/// `0, 1, .., num_classes-1` so every class gets `n / num_classes` or one more
/// sample.
pub fn synth_dataset(
    num_classes: usize,
    p: usize,
    n: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes == 0 || p == 0 {
        return Err(Error::invalid("num_classes and p must be positive"));
    }
    if n < num_classes {
        return Err(Error::invalid(format!(
            "n = {n} must be at least num_classes = {num_classes}"
        )));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::invalid("separation must be finite and non-negative"));
    }
    let mut rng = stream(seed, &[tag::SYNTH]);
    let mut means = Vec::with_capacity(num_classes * p);
    for _ in 0..num_classes {
        let u: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        means.extend(u.iter().map(|v| separation * v / norm));
    }
    let mut features = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % num_classes;
        let mu = &means[c * p..(c + 1) * p];
        features.extend(mu.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)));
        labels.push(c);
    }
    Dataset::new(features, labels, p, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = synth_dataset(3, 4, 30, 2.0, 11).unwrap();
        let b = synth_dataset(3, 4, 30, 2.0, 11).unwrap();
        assert_eq!(a, b);
        let c = synth_dataset(3, 4, 30, 2.0, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_separation_gives_identical_class_laws() {
        // Same stream with separation 0: class means vanish, so the features
        // are the pure noise draws regardless of label.
        let ds = synth_dataset(4, 8, 4000, 0.0, 3).unwrap();
        let p = ds.num_features();
        let mut means = vec![vec![0.0; p]; 4];
        for i in 0..ds.len() {
            for (m, x) in means[ds.label(i)].iter_mut().zip(ds.features(i)) {
                *m += x / 1000.0;
            }
        }
        for m in means.iter().flatten() {
            assert!(m.abs() < 4.0 / 1000f64.sqrt());
        }
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(synth_dataset(0, 4, 10, 1.0, 0).is_err());
        assert!(synth_dataset(3, 0, 10, 1.0, 0).is_err());
        assert!(synth_dataset(5, 4, 4, 1.0, 0).is_err());
    }
}
