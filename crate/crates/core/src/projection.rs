//! Partial-orthogonal projection matrices (M rows of a d x d orthonormal transform).

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::rng::{stream, tag};
use crate::vector::{dot, norm_sq, ModelVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    /// Rows of the identity. With `M = d` this is `I_d`.
    Identity,
    /// Sylvester-Hadamard with random column signs; `d` must be a power of two.
    Hadamard,
    /// Orthonormal DCT-II with random column signs.
    Dct,
    /// Haar-distributed orthonormal rows (QR of a Gaussian matrix).
    RandomOrthonormal,
}

impl ProjectionKind {
    pub fn name(self) -> &'static str {
        match self {
            ProjectionKind::Identity => "identity",
            ProjectionKind::Hadamard => "subsampled-hadamard",
            ProjectionKind::Dct => "subsampled-dct",
            ProjectionKind::RandomOrthonormal => "subsampled-random-orthonormal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(ProjectionKind::Identity),
            "hadamard" | "subsampled-hadamard" => Some(ProjectionKind::Hadamard),
            "dct" | "subsampled-dct" => Some(ProjectionKind::Dct),
            "random" | "random-orthonormal" | "subsampled-random-orthonormal" => {
                Some(ProjectionKind::RandomOrthonormal)
            }
            _ => None,
        }
    }
}

/// `M x d` matrix with orthonormal rows. Row-major dense storage, except
/// the identity kind which keeps only its selected coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    pub kind: ProjectionKind,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    data: Vec<f64>,
    picks: Vec<usize>,
}

fn random_signs(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, &[tag::PROJECTION, 1]);
    (0..d)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

/// `m` distinct sorted row indices out of `d`; all rows in order when `m == d`.
fn pick_rows(d: usize, m: usize, seed: u64) -> Vec<usize> {
    if m == d {
        return (0..d).collect();
    }
    let mut rows = index::sample(&mut stream(seed, &[tag::PROJECTION, 2]), d, m).into_vec();
    rows.sort_unstable();
    rows
}

/// Generates the matrix identified by `(kind, m, d, seed)`.
pub fn gen_projection(m: usize, d: usize, kind: ProjectionKind, seed: u64) -> Result<ProjectionMatrix> {
    if d == 0 || m < 1 || m > d {
        return Err(Error::config(format!("projection requires 1 <= M <= d, got M={m}, d={d}")));
    }
    if kind == ProjectionKind::Identity {
        return Ok(ProjectionMatrix {
            kind,
            rows: m,
            cols: d,
            seed,
            data: Vec::new(),
            picks: pick_rows(d, m, seed),
        });
    }
    let mut data = vec![0.0; m * d];
    match kind {
        ProjectionKind::Identity => unreachable!(),
        ProjectionKind::Hadamard => {
            if !d.is_power_of_two() {
                return Err(Error::config(format!(
                    "hadamard projection needs d a power of two (d={d}); use dct or random-orthonormal"
                )));
            }
            let signs = random_signs(d, seed);
            let s = 1.0 / (d as f64).sqrt();
            for (r, &row) in pick_rows(d, m, seed).iter().enumerate() {
                for (j, sign) in signs.iter().enumerate() {
                    let parity = (row & j).count_ones() & 1;
                    data[r * d + j] = if parity == 0 { s } else { -s } * sign;
                }
            }
        }
        ProjectionKind::Dct => {
            let signs = random_signs(d, seed);
            let df = d as f64;
            for (r, &row) in pick_rows(d, m, seed).iter().enumerate() {
                let scale = if row == 0 { (1.0 / df).sqrt() } else { (2.0 / df).sqrt() };
                for (j, sign) in signs.iter().enumerate() {
                    let angle = std::f64::consts::PI * (2 * j + 1) as f64 * row as f64 / (2.0 * df);
                    data[r * d + j] = scale * angle.cos() * sign;
                }
            }
        }
        ProjectionKind::RandomOrthonormal => {
            let mut rng = stream(seed, &[tag::PROJECTION, 3]);
            let g = DMatrix::<f64>::from_fn(d, m, |_, _| rng.sample(StandardNormal));
            let qr = g.qr();
            let q = qr.q();
            let r = qr.r();
            for c in 0..m {
                let sign = if r[(c, c)] < 0.0 { -1.0 } else { 1.0 };
                for j in 0..d {
                    data[c * d + j] = sign * q[(j, c)];
                }
            }
        }
    }
    Ok(ProjectionMatrix {
        kind,
        rows: m,
        cols: d,
        seed,
        data,
        picks: Vec::new(),
    })
}

impl ProjectionMatrix {
    fn is_selection(&self) -> bool {
        self.kind == ProjectionKind::Identity
    }

    /// Row `r` as a dense vector.
    pub fn row(&self, r: usize) -> Vec<f64> {
        if self.is_selection() {
            let mut v = vec![0.0; self.cols];
            v[self.picks[r]] = 1.0;
            v
        } else {
            self.dense_row(r).to_vec()
        }
    }

    fn dense_row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        if self.is_selection() {
            if self.picks[r] == c { 1.0 } else { 0.0 }
        } else {
            self.data[r * self.cols + c]
        }
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, x.len())?;
        if self.is_selection() {
            return Ok(self.picks.iter().map(|&j| x[j]).collect());
        }
        Ok((0..self.rows).map(|r| dot(self.dense_row(r), x)).collect())
    }

    /// `A^T y`.
    pub fn apply_t(&self, y: &[f64]) -> Result<ModelVector> {
        check_dim(self.rows, y.len())?;
        let mut out = vec![0.0; self.cols];
        if self.is_selection() {
            for (&j, &yr) in self.picks.iter().zip(y) {
                out[j] = yr;
            }
            return Ok(ModelVector::new(out));
        }
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                for (o, a) in out.iter_mut().zip(self.dense_row(r)) {
                    *o += yr * a;
                }
            }
        }
        Ok(ModelVector::new(out))
    }

    /// Largest `|A A^T - I|` entry.
    pub fn gram_error(&self) -> f64 {
        if self.is_selection() {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.rows {
                let g = dot(self.dense_row(i), self.dense_row(j)) - if i == j { 1.0 } else { 0.0 };
                worst = worst.max(g.abs());
            }
        }
        worst
    }

    /// Power-iteration estimate of the spectral norm.
    pub fn spectral_norm(&self, iterations: usize, seed: u64) -> f64 {
        let mut rng = stream(seed, &[tag::PROJECTION, 4]);
        let mut v: Vec<f64> = (0..self.cols).map(|_| rng.sample(StandardNormal)).collect();
        let mut est = 0.0;
        for _ in 0..iterations.max(1) {
            let n = norm_sq(&v).sqrt();
            if n == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|x| *x /= n);
            let av = self.apply(&v).expect("dimension checked");
            est = norm_sq(&av).sqrt();
            v = self.apply_t(&av).expect("dimension checked").into_inner();
        }
        est
    }
}

/// `A x_tilde`.
pub fn project(a: &ProjectionMatrix, x_tilde: &ModelVector) -> Result<Vec<f64>> {
    a.apply(x_tilde.as_slice())
}
