//! Convergence bound for clipped, compressed over-the-air FL.
//!
//! The bound controls the learning-rate-weighted average squared gradient
//! norm after `T` rounds with `eta_t = xi / (a + t)`:
//!
//! ```text
//! init      = 4 (f0 - f*) / (Gamma Q P_T)
//! local     = 20 L^2 Q (sigma_l^2 + 6 Q sigma_g^2) / (Gamma P_T) * xi^3 / (2 (a-1)^2)
//! recovery  = 2 d L / (Gamma Q R^2 P_T) * sum_t eta_t^2 v_t
//! sparsclip = 64 C G^2 / (Gamma lambda^2)
//!           + 18 L (8C/lambda^2 + 2) Q G^2 xi^2 / (Gamma P_T (a-1))
//!           + 8 G^2 / Gamma * sqrt(8C/lambda^2 + 2)
//! ```
//!
//! with `Gamma = sqrt(P) / (sqrt(P) + sqrt(8C/lambda^2 + 2) Q G)` and
//! `C = 4 a lambda (1 - lambda^2) / (a lambda - 4 Q)`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::recovery::{vseq_for_bound, EstimatorConfig};

/// Minimal admissible memory-contraction constant.
///
/// `lambda = 1` (no sparsification) gives `C = 0` without further conditions;
/// otherwise `a lambda > 4 Q` is required.
pub fn compute_c(a: f64, lambda: f64, q: usize) -> Result<f64> {
    if lambda == 1.0 {
        return Ok(0.0);
    }
    let four_q = 4.0 * q as f64;
    let a_lambda = a * lambda;
    if !(a_lambda > four_q) {
        return Err(Error::Schedule { a_lambda, four_q });
    }
    Ok(4.0 * a * lambda * (1.0 - lambda * lambda) / (a_lambda - four_q))
}

/// `sqrt(8C/lambda^2 + 2)`, the growth factor of the sparsified update norm.
pub fn norm_growth(c: f64, lambda: f64) -> f64 {
    (8.0 * c / (lambda * lambda) + 2.0).sqrt()
}

/// Lower bound on the clipping factor.
pub fn compute_gamma(power: f64, c: f64, lambda: f64, q: usize, g: f64) -> f64 {
    let sp = power.sqrt();
    sp / (sp + norm_growth(c, lambda) * q as f64 * g)
}

pub fn learning_rate(xi: f64, a: f64, t: usize) -> f64 {
    xi / (a + t as f64)
}

/// `(sum_t eta_t, xi ln((T + a - 1)/a))`.
pub fn compute_pt(xi: f64, a: f64, rounds: usize) -> (f64, f64) {
    let sum = (0..rounds).map(|t| learning_rate(xi, a, t)).sum();
    let lower = xi * ((rounds as f64 + a - 1.0) / a).ln();
    (sum, lower)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constraint {
    pub required: f64,
    pub actual: f64,
    pub pass: bool,
}

impl Constraint {
    fn at_least(actual: f64, required: f64) -> Self {
        Constraint {
            required,
            actual,
            pass: actual >= required,
        }
    }

    fn at_most(actual: f64, required: f64) -> Self {
        Constraint {
            required,
            actual,
            pass: actual <= required,
        }
    }

    pub fn margin(&self) -> f64 {
        self.actual - self.required
    }
}

/// Schedule conformance: the offset conditions plus the learning-rate sum facts.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleReport {
    /// `a >= 4Q/lambda`.
    pub memory: Constraint,
    /// `a >= sqrt(120) xi Q L`.
    pub smoothness: Constraint,
    /// `sum eta^2 <= xi^2/(a-1)`.
    pub sum_sq: Constraint,
    /// `sum eta^3 <= xi^3/(2(a-1)^2)`.
    pub sum_cube: Constraint,
    /// `P_T >= xi ln((T+a-1)/a)`.
    pub pt: Constraint,
}

impl ScheduleReport {
    pub fn conformant(&self) -> bool {
        self.memory.pass && self.smoothness.pass
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let rows = [
            ("a >= 4Q/lambda", &self.memory),
            ("a >= sqrt(120)*xi*Q*L", &self.smoothness),
            ("sum eta^2 <= xi^2/(a-1)", &self.sum_sq),
            ("sum eta^3 <= xi^3/(2(a-1)^2)", &self.sum_cube),
            ("P_T >= xi*ln((T+a-1)/a)", &self.pt),
        ];
        for (name, c) in rows {
            let _ = writeln!(
                s,
                "{name}: {} (actual {:.6e}, bound {:.6e})",
                if c.pass { "pass" } else { "FAIL" },
                c.actual,
                c.required
            );
        }
        let _ = writeln!(s, "conformant: {}", self.conformant());
        s
    }
}

pub fn check_schedule(xi: f64, a: f64, q: usize, lambda: f64, l: f64, rounds: usize) -> ScheduleReport {
    let (mut s2, mut s3) = (0.0, 0.0);
    for t in 0..rounds {
        let e = learning_rate(xi, a, t);
        s2 += e * e;
        s3 += e * e * e;
    }
    let (pt, lower) = compute_pt(xi, a, rounds);
    let qf = q as f64;
    ScheduleReport {
        memory: Constraint::at_least(a, 4.0 * qf / lambda),
        smoothness: Constraint::at_least(a, 120f64.sqrt() * xi * qf * l),
        sum_sq: Constraint::at_most(s2, xi * xi / (a - 1.0)),
        sum_cube: Constraint::at_most(s3, xi.powi(3) / (2.0 * (a - 1.0).powi(2))),
        pt: Constraint::at_least(pt, lower),
    }
}

/// Every quantity the bound depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    pub l: f64,
    pub g: f64,
    pub sigma_l2: f64,
    pub sigma_g2: f64,
    pub f0: f64,
    /// `None` defaults to 0 (cross-entropy and squared losses are non-negative).
    pub f_star: Option<f64>,
    pub xi: f64,
    pub a: f64,
    pub q: usize,
    pub rounds: usize,
    pub devices: usize,
    pub d: usize,
    pub lambda: f64,
    pub power: f64,
    /// Per-round estimation-error variance, length `rounds`.
    pub vseq: Vec<f64>,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.l, self.g, self.sigma_l2, self.sigma_g2, self.xi];
        if nonneg.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::config("L, G, sigma_l^2, sigma_g^2 and xi must be finite and >= 0"));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::config(format!("lambda must lie in (0,1], got {}", self.lambda)));
        }
        if !(self.power > 0.0) {
            return Err(Error::config("power must be > 0"));
        }
        if self.q < 1 || self.rounds < 1 || self.devices < 1 || self.d < 1 {
            return Err(Error::config("Q, T, R and d must be >= 1"));
        }
        if !(self.a > 1.0) {
            return Err(Error::config(format!("schedule offset a must exceed 1, got {}", self.a)));
        }
        if self.vseq.len() != self.rounds {
            return Err(Error::DimensionMismatch {
                expected: self.rounds,
                actual: self.vseq.len(),
            });
        }
        if self.vseq.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::config("v^(t) must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundBreakdown {
    pub init: f64,
    pub local: f64,
    pub recovery: f64,
    pub sparsclip: f64,
    pub total: f64,
    pub c: f64,
    pub gamma: f64,
    pub p_t: f64,
    /// The two `P_T`-free terms of `sparsclip` (the error floor).
    pub floor: f64,
    /// The remaining, `P_T`-dependent part of `sparsclip`.
    pub drift: f64,
    pub conformant: bool,
    pub f_star_defaulted: bool,
}

pub fn eval_bound(inp: &BoundInputs) -> Result<BoundBreakdown> {
    inp.validate()?;
    let c = compute_c(inp.a, inp.lambda, inp.q)?;
    let gamma = compute_gamma(inp.power, c, inp.lambda, inp.q, inp.g);
    let (p_t, _) = compute_pt(inp.xi, inp.a, inp.rounds);
    let (l, g, q) = (inp.l, inp.g, inp.q as f64);
    let r = inp.devices as f64;
    let growth2 = 8.0 * c / (inp.lambda * inp.lambda) + 2.0;
    let f_star = inp.f_star.unwrap_or(0.0);

    let init = 4.0 * (inp.f0 - f_star) / (gamma * q * p_t);
    let local = 20.0 * l * l * q * (inp.sigma_l2 + 6.0 * q * inp.sigma_g2) / (gamma * p_t)
        * inp.xi.powi(3)
        / (2.0 * (inp.a - 1.0).powi(2));
    let weighted_v: f64 = inp
        .vseq
        .iter()
        .enumerate()
        .map(|(t, v)| learning_rate(inp.xi, inp.a, t).powi(2) * v)
        .sum();
    let recovery = 2.0 * inp.d as f64 * l / (gamma * q * r * r * p_t) * weighted_v;
    let floor = 64.0 * c * g * g / (gamma * inp.lambda * inp.lambda) + 8.0 * g * g / gamma * growth2.sqrt();
    let drift = 18.0 * l * growth2 * q * g * g / (gamma * p_t) * inp.xi * inp.xi / (inp.a - 1.0);
    let sparsclip = floor + drift;
    let total = init + local + recovery + sparsclip;
    let conformant = check_schedule(inp.xi, inp.a, inp.q, inp.lambda, l, inp.rounds).conformant();
    Ok(BoundBreakdown {
        init,
        local,
        recovery,
        sparsclip,
        total,
        c,
        gamma,
        p_t,
        floor,
        drift,
        conformant,
        f_star_defaulted: inp.f_star.is_none(),
    })
}

pub const BREAKDOWN_HEADER: &str = "parameter,init,local,recovery,sparsclip,total,C,Gamma,P_T,conformant";

impl BoundBreakdown {
    pub fn csv_row(&self, parameter: f64) -> String {
        format!(
            "{parameter},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.init,
            self.local,
            self.recovery,
            self.sparsclip,
            self.total,
            self.c,
            self.gamma,
            self.p_t,
            self.conformant
        )
    }

    /// Everything except the error floor.
    pub fn transient(&self) -> f64 {
        self.init + self.local + self.recovery + self.drift
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub md: f64,
    pub breakdown: BoundBreakdown,
    /// `(total - floor)` divided by the same quantity for a single round with
    /// zero recovery error, which does not depend on `M/d`.
    pub rescaled: f64,
}

/// Evaluates the bound along a grid of `M/d` values, with `v^(t)` predicted
/// for each grid point by `vseq_for_bound`.
pub fn bound_sweep_md(
    template: &BoundInputs,
    md_grid: &[f64],
    est: &EstimatorConfig,
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    if let Some(bad) = md_grid.iter().find(|m| !(**m > 0.0 && **m <= 1.0)) {
        return Err(Error::config(format!("M/d grid values must lie in (0,1], got {bad}")));
    }
    let mut first = template.clone();
    first.rounds = 1;
    first.vseq = vec![0.0];
    let reference = eval_bound(&first)?.transient();

    exec::map(exec, md_grid, |&md| {
        let mut inp = template.clone();
        inp.vseq = vseq_for_bound(inp.rounds, md, est)?;
        let breakdown = eval_bound(&inp)?;
        Ok(SweepRow {
            md,
            rescaled: breakdown.transient() / reference,
            breakdown,
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> BoundInputs {
        BoundInputs {
            l: 2.0,
            g: 3.0,
            sigma_l2: 0.5,
            sigma_g2: 0.25,
            f0: 2.3,
            f_star: None,
            xi: 0.1,
            a: 50.0,
            q: 2,
            rounds: 40,
            devices: 5,
            d: 100,
            lambda: 0.5,
            power: 4.0,
            vseq: vec![1e-3; 40],
        }
    }

    #[test]
    fn c_examples() {
        assert_eq!(compute_c(300.0, 1.0, 1).unwrap(), 0.0);
        let c = compute_c(400.0, 0.1, 1).unwrap();
        assert!((c - 4.4).abs() < 1e-12, "{c}");
        assert!(matches!(compute_c(40.0, 0.1, 1), Err(Error::Schedule { .. })));
        assert!(compute_c(10.0, 0.1, 1).is_err());
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(compute_gamma(5.0, 3.0, 0.2, 1, 0.0), 1.0);
        let g = compute_gamma(100.0, 0.0, 1.0, 1, 1.0);
        assert!((g - 10.0 / (10.0 + 2f64.sqrt())).abs() < 1e-15);
        assert!((g - 0.876_101).abs() < 1e-6);
        let mut last = 0.0;
        for p in [0.1, 1.0, 10.0, 100.0] {
            let g = compute_gamma(p, 2.0, 0.3, 2, 1.5);
            assert!(g > last && g <= 1.0);
            last = g;
        }
    }

    #[test]
    fn pt_examples() {
        assert_eq!(compute_pt(120.0, 300.0, 1).0, 0.4);
        let (s, lower) = compute_pt(120.0, 300.0, 300);
        let direct: f64 = (0..300).map(|t| 1.0 / (300.0 + t as f64)).sum::<f64>() * 120.0;
        assert!((s - direct).abs() < 1e-12);
        assert!(s >= lower);
    }

    #[test]
    fn fig2_schedule_is_not_conformant() {
        let rep = check_schedule(120.0, 300.0, 1, 0.1, 100.0, 300);
        assert!(rep.memory.pass);
        assert!(!rep.smoothness.pass);
        assert!((rep.smoothness.required - 120f64.sqrt() * 12_000.0).abs() < 1e-6);
        assert!(rep.sum_sq.pass && rep.sum_cube.pass && rep.pt.pass);
        assert!(rep.to_text().contains("FAIL"));
    }

    #[test]
    fn breakdown_sums_and_is_nonnegative() {
        let b = eval_bound(&inputs()).unwrap();
        for v in [b.init, b.local, b.recovery, b.sparsclip] {
            assert!(v >= 0.0);
        }
        assert_eq!(b.total, b.init + b.local + b.recovery + b.sparsclip);
        assert!(b.f_star_defaulted);
    }

    #[test]
    fn zero_recovery_error_zeroes_recovery_term() {
        let mut inp = inputs();
        inp.vseq = vec![0.0; inp.rounds];
        let b = eval_bound(&inp).unwrap();
        assert_eq!(b.recovery, 0.0);
        let c = b.c;
        let floor = 64.0 * c * 9.0 / (b.gamma * 0.25) + 8.0 * 9.0 / b.gamma * norm_growth(c, 0.5);
        assert!((b.floor - floor).abs() < 1e-12 * floor);
    }

    #[test]
    fn clip_specialisation_matches() {
        // lambda = 1: C = 0 and v = sigma^2 give the closed form below.
        let mut inp = inputs();
        inp.lambda = 1.0;
        let sigma2 = 2e-3;
        inp.vseq = vec![sigma2; inp.rounds];
        let b = eval_bound(&inp).unwrap();
        assert_eq!(b.c, 0.0);
        let (l, g, q, r, d) = (2.0, 3.0, 2.0, 5.0, 100.0);
        let gamma = 2.0 / (2.0 + 2f64.sqrt() * q * g);
        let (pt, _) = compute_pt(inp.xi, inp.a, inp.rounds);
        let s2: f64 = (0..inp.rounds).map(|t| learning_rate(inp.xi, inp.a, t).powi(2)).sum();
        let expect = 4.0 * 2.3 / (gamma * q * pt)
            + 20.0 * l * l * q * (0.5 + 6.0 * q * 0.25) / (gamma * pt) * inp.xi.powi(3) / (2.0 * 49f64.powi(2))
            + 2.0 * d * l * sigma2 * s2 / (gamma * q * r * r * pt)
            + 18.0 * l * 2.0 * q * g * g * inp.xi * inp.xi / (gamma * pt * 49.0)
            + 8.0 * g * g / gamma * 2f64.sqrt();
        assert!((b.total - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn monotone_in_power_and_v() {
        let mut inp = inputs();
        let mut last = f64::INFINITY;
        for p in [0.5, 1.0, 4.0, 16.0] {
            inp.power = p;
            let t = eval_bound(&inp).unwrap().total;
            assert!(t < last);
            last = t;
        }
        let base = eval_bound(&inp).unwrap().total;
        inp.vseq[7] *= 2.0;
        assert!(eval_bound(&inp).unwrap().total > base);
    }

    #[test]
    fn invalid_inputs() {
        let mut inp = inputs();
        inp.vseq.pop();
        assert!(eval_bound(&inp).is_err());
        let mut inp = inputs();
        inp.a = 5.0;
        assert!(matches!(eval_bound(&inp), Err(Error::Schedule { .. })));
    }
}
