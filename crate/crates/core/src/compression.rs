//! Top-k sparsification, error-feedback memory and norm clipping.

use std::cmp::Ordering;

use crate::error::{check_dim, Error, Result};
use crate::vector::ModelVector;

/// Keeps the `k` largest-magnitude entries; ties go to the lower index.
pub fn top_k(x: &ModelVector, k: usize) -> Result<ModelVector> {
    let d = x.len();
    if k < 1 || k > d {
        return Err(Error::invalid(format!("top-k requires 1 <= k <= d, got k={k}, d={d}")));
    }
    if k == d {
        return Ok(x.clone());
    }
    let v = x.as_slice();
    let mut idx: Vec<usize> = (0..d).collect();
    let order = |&a: &usize, &b: &usize| -> Ordering {
        v[b].abs()
            .partial_cmp(&v[a].abs())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    };
    idx.select_nth_unstable_by(k - 1, order);
    let mut out = ModelVector::zeros(d);
    for &i in &idx[..k] {
        out[i] = v[i];
    }
    Ok(out)
}

/// Per-device accumulator of sparsification residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryState {
    pub m: ModelVector,
}

impl MemoryState {
    pub fn new(d: usize) -> Self {
        MemoryState {
            m: ModelVector::zeros(d),
        }
    }
}

/// `m + delta - g`.
pub fn memory_update(m: &ModelVector, delta: &ModelVector, g: &ModelVector) -> Result<ModelVector> {
    check_dim(m.len(), delta.len())?;
    check_dim(m.len(), g.len())?;
    Ok(ModelVector::new(
        m.iter()
            .zip(delta.iter())
            .zip(g.iter())
            .map(|((a, b), c)| a + b - c)
            .collect(),
    ))
}

fn check_sqrt_p(sqrt_p: f64) -> Result<()> {
    if sqrt_p > 0.0 && !sqrt_p.is_nan() {
        Ok(())
    } else {
        Err(Error::invalid(format!("clipping threshold must be > 0, got {sqrt_p}")))
    }
}

/// Scale factor `min{1, sqrt_p / |x|}` actually applied by [`clip`].
///
/// When scaling is needed the factor is nudged down (at most a few ulps) so
/// that the computed norm of the result never exceeds `sqrt_p`. This makes
/// clipping idempotent in floating point.
fn clip_scale(x: &ModelVector, sqrt_p: f64) -> Result<f64> {
    check_sqrt_p(sqrt_p)?;
    if !x.is_finite() {
        return Err(Error::NumericDivergence {
            stage: "clip",
            step: 0,
        });
    }
    let norm = x.norm();
    if norm <= sqrt_p {
        return Ok(1.0);
    }
    let mut c = sqrt_p / norm;
    while x.scaled(c).norm() > sqrt_p {
        c = f64::from_bits(c.to_bits() - 1);
    }
    Ok(c)
}

/// `min{1, sqrt_p/|x|} * x`; zero maps to zero.
pub fn clip(x: &ModelVector, sqrt_p: f64) -> Result<ModelVector> {
    let c = clip_scale(x, sqrt_p)?;
    Ok(if c == 1.0 { x.clone() } else { x.scaled(c) })
}

/// Clipping factor of `g / eta`, i.e. `clip(g/eta, sqrt_p) = alpha * g/eta`.
pub fn clip_factor(g: &ModelVector, eta: f64, sqrt_p: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::invalid(format!("eta must be > 0, got {eta}")));
    }
    clip_scale(&g.scaled(1.0 / eta), sqrt_p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mv(v: &[f64]) -> ModelVector {
        ModelVector::new(v.to_vec())
    }

    #[test]
    fn top_k_examples() {
        let x = mv(&[1.0, -3.0, 2.0, 0.0]);
        assert_eq!(top_k(&x, 2).unwrap().as_slice(), &[0.0, -3.0, 2.0, 0.0]);
        assert_eq!(top_k(&x, 4).unwrap(), x);
        assert!(top_k(&x, 0).is_err());
        assert!(top_k(&x, 5).is_err());
        // Ties resolved towards low indices.
        let c = mv(&[2.0, -2.0, 2.0, 2.0]);
        assert_eq!(top_k(&c, 2).unwrap().as_slice(), &[2.0, -2.0, 0.0, 0.0]);
        let r = c.sub(&top_k(&c, 1).unwrap()).unwrap();
        assert_eq!(r.norm_sq(), 0.75 * c.norm_sq());
    }

    #[test]
    fn memory_examples() {
        let delta = mv(&[1.0, -3.0, 2.0, 0.0]);
        let m0 = ModelVector::zeros(4);
        let g = top_k(&m0.add(&delta).unwrap(), 2).unwrap();
        assert_eq!(memory_update(&m0, &delta, &g).unwrap().as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        let m = mv(&[0.5, 0.5, -1.0, 2.0]);
        let full = m.add(&delta).unwrap();
        assert_eq!(memory_update(&m, &delta, &full).unwrap(), ModelVector::zeros(4));
        assert!(memory_update(&m, &mv(&[1.0]), &full).is_err());
    }

    #[test]
    fn memory_telescopes_over_rounds() {
        use rand::Rng;
        let mut rng = crate::rng::stream(4, &[]);
        let d = 12;
        let mut m = ModelVector::zeros(d);
        let mut direct = vec![0.0; d];
        for _ in 0..20 {
            let delta = ModelVector::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect());
            let g = top_k(&m.add(&delta).unwrap(), 3).unwrap();
            for j in 0..d {
                direct[j] += delta[j] - g[j];
            }
            m = memory_update(&m, &delta, &g).unwrap();
        }
        for j in 0..d {
            assert!((m[j] - direct[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn clip_examples() {
        let x = mv(&[3.0, 4.0]);
        assert_eq!(clip(&x, 10.0).unwrap(), x);
        assert_eq!(clip(&x, 2.5).unwrap().as_slice(), &[1.5, 2.0]);
        assert_eq!(clip(&ModelVector::zeros(3), 1.0).unwrap(), ModelVector::zeros(3));
        assert!(clip(&mv(&[f64::NAN]), 1.0).is_err());
        assert!(clip(&x, 0.0).is_err());
        assert_eq!(clip(&x, f64::INFINITY).unwrap(), x);
    }

    #[test]
    fn clip_factor_examples() {
        let g = mv(&[0.3, 0.4]);
        assert_eq!(clip_factor(&g, 0.1, 5.0).unwrap(), 1.0);
        assert!((clip_factor(&g, 0.1, 2.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(clip_factor(&g, 0.0, 2.5).is_err());
    }

    proptest! {
        #[test]
        fn clip_norm_identity(v in prop::collection::vec(-1e3f64..1e3, 1..40), sp in 1e-3f64..1e3) {
            let x = ModelVector::new(v);
            let y = clip(&x, sp).unwrap();
            let expect = x.norm().min(sp);
            prop_assert!((y.norm() - expect).abs() <= 1e-12 * expect.max(1.0));
            prop_assert!(y.norm() <= sp);
        }

        #[test]
        fn clip_is_idempotent(v in prop::collection::vec(-1e3f64..1e3, 1..40), sp in 1e-3f64..1e3) {
            let once = clip(&ModelVector::new(v), sp).unwrap();
            prop_assert_eq!(clip(&once, sp).unwrap(), once);
        }

        #[test]
        fn clip_preserves_direction(v in prop::collection::vec(-1e2f64..1e2, 2..20), c in 0.01f64..100.0, sp in 0.1f64..10.0) {
            let x = ModelVector::new(v);
            prop_assume!(x.norm() > 1e-9);
            let y = clip(&x.scaled(c), sp).unwrap();
            let cos = y.dot(&x).unwrap() / (y.norm() * x.norm());
            prop_assert!((cos - 1.0).abs() < 1e-12);
        }

        #[test]
        fn clip_factor_reproduces_clip(v in prop::collection::vec(-1e2f64..1e2, 1..20), eta in 0.01f64..2.0, sp in 0.1f64..10.0) {
            let g = ModelVector::new(v);
            let a = clip_factor(&g, eta, sp).unwrap();
            prop_assert!(a > 0.0 && a <= 1.0);
            let u = g.scaled(1.0 / eta);
            prop_assert_eq!(clip(&u, sp).unwrap(), if a == 1.0 { u.clone() } else { u.scaled(a) });
        }

        #[test]
        fn top_k_contracts(v in prop::collection::vec(-1e3f64..1e3, 1..64), kf in 0.0f64..1.0) {
            let x = ModelVector::new(v);
            let d = x.len();
            let k = ((kf * d as f64) as usize).clamp(1, d);
            let y = top_k(&x, k).unwrap();
            prop_assert!(y.iter().filter(|v| **v != 0.0).count() <= k);
            let resid = x.sub(&y).unwrap().norm_sq();
            prop_assert!(resid <= (1.0 - k as f64 / d as f64) * x.norm_sq() * (1.0 + 1e-12) + 1e-300);
        }
    }
}
