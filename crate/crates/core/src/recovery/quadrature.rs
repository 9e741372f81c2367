//! Expectations over a standard normal by adaptive Simpson quadrature.
//!
//! The Bernoulli-Gaussian posterior variance has a sharp transition whose
//! width shrinks with the noise level, so fixed-node rules lose accuracy at
//! high SNR. The adaptive rule is deterministic for given inputs.

const HALF_WIDTH: f64 = 14.0;
const PANELS: usize = 32;
const MAX_DEPTH: u32 = 50;

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[allow(clippy::too_many_arguments)]
fn refine(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let h = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|i| {
            let x0 = a + i as f64 * h;
            let x1 = x0 + h;
            let xm = 0.5 * (x0 + x1);
            let (f0, fm, f1) = (f(x0), f(xm), f(x1));
            let whole = h / 6.0 * (f0 + 4.0 * fm + f1);
            refine(f, x0, x1, f0, fm, f1, whole, tol / PANELS as f64, MAX_DEPTH)
        })
        .sum()
}

/// `E[f(Z)]` for `Z ~ N(0,1)`, to absolute tolerance `tol`.
pub fn expect_normal(f: impl Fn(f64) -> f64, tol: f64) -> f64 {
    integrate(&|z| std_normal_pdf(z) * f(z), -HALF_WIDTH, HALF_WIDTH, tol)
}

/// Same as [`expect_normal`] for even `f`, integrating one half-line.
pub fn expect_normal_even(f: impl Fn(f64) -> f64, tol: f64) -> f64 {
    2.0 * integrate(&|z| std_normal_pdf(z) * f(z), 0.0, HALF_WIDTH, 0.5 * tol)
}
