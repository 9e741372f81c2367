//! Round orchestration for vanilla FL and the over-the-air schemes.
//!
//! Device-local work (local SGD, sparsification, memory, power control,
//! projection) runs through [`exec::map_mut`]; the coordinator then sums
//! transmissions in ascending device order, recovers the aggregate and
//! updates the global model. Serial and parallel runs are bit-identical.

use std::time::Instant;

use crate::bound;
use crate::channel::{mac_transmit, ChannelConfig, NoiseSource};
use crate::compression::{clip, clip_factor, top_k, MemoryState};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::LossModel;
use crate::projection::{gen_projection, ProjectionKind, ProjectionMatrix};
use crate::recovery::{estimate, EstimatorConfig, EstimatorKind};
use crate::rng::{mix, tag};
use crate::sgd::{local_sgd, model_diff, MiniBatchSampler};
use crate::vector::{norm_sq, ModelVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Vanilla,
    Clip,
    ClipComp,
    Scale,
    ScaleComp,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Vanilla,
        Scheme::Clip,
        Scheme::ClipComp,
        Scheme::Scale,
        Scheme::ScaleComp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Vanilla => "vanilla",
            Scheme::Clip => "clip",
            Scheme::ClipComp => "clip_comp",
            Scheme::Scale => "scale",
            Scheme::ScaleComp => "scale_comp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Scheme::ALL.into_iter().find(|x| x.name() == s)
    }

    pub fn compressed(self) -> bool {
        matches!(self, Scheme::ClipComp | Scheme::ScaleComp)
    }
}

/// `eta_t = xi / (a + t)`, `Q` local steps, `T` rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub xi: f64,
    pub a: f64,
    pub q: usize,
    pub rounds: usize,
}

impl Schedule {
    pub fn new(xi: f64, a: f64, q: usize, rounds: usize) -> Result<Self> {
        if !(xi > 0.0) {
            return Err(Error::config(format!("schedule.xi must be > 0, got {xi}")));
        }
        if !(a >= 0.0) {
            return Err(Error::config(format!("schedule.a must be >= 0, got {a}")));
        }
        if q < 1 {
            return Err(Error::config("schedule.q must be >= 1"));
        }
        if a == 0.0 && rounds > 0 {
            return Err(Error::config("schedule.a must be > 0 so that eta_0 is finite"));
        }
        Ok(Schedule { xi, a, q, rounds })
    }

    pub fn lr(&self, t: usize) -> f64 {
        bound::learning_rate(self.xi, self.a, t)
    }
}

/// One participating device.
#[derive(Debug, Clone)]
pub struct DeviceState {
    pub id: usize,
    pub data: Dataset,
    pub memory: MemoryState,
}

impl DeviceState {
    pub fn new(id: usize, data: Dataset, d: usize) -> Self {
        DeviceState {
            id,
            data,
            memory: MemoryState::new(d),
        }
    }
}

/// Everything that parameterises a run apart from the data.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub model: LossModel,
    pub schedule: Schedule,
    pub batch_size: usize,
    /// Top-k budget for the compressed schemes.
    pub k: usize,
    /// Channel uses per round for the compressed schemes.
    pub m: usize,
    pub projection: ProjectionKind,
    /// Reuse the round-0 matrix every round instead of regenerating.
    pub fixed_projection: bool,
    /// Per-device power budget `P`; `f64::INFINITY` disables power control.
    pub power: f64,
    pub sigma2: f64,
    pub estimator: EstimatorConfig,
    /// Undo the common power-scaling factor at the server (scale schemes).
    pub descale: bool,
    pub seed: u64,
    pub exec: Execution,
}

impl ProtocolConfig {
    pub fn d(&self) -> usize {
        self.model.dim()
    }

    pub fn sqrt_p(&self) -> f64 {
        self.power.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let d = self.d();
        if self.k < 1 || self.k > d {
            return Err(Error::config(format!("compression.k must satisfy 1 <= k <= d = {d}, got {}", self.k)));
        }
        if self.m < 1 || self.m > d {
            return Err(Error::config(format!("compression.m must satisfy 1 <= M <= d = {d}, got {}", self.m)));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if !(self.power > 0.0) {
            return Err(Error::config("power must be > 0"));
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(Error::config("channel noise variance must be finite and >= 0"));
        }
        self.estimator.validate()
    }

    /// Matrix used in round `t`: identified by `(kind, M, d, seed_t)`.
    pub fn projection_seed(&self, t: usize) -> u64 {
        let round = if self.fixed_projection { 0 } else { t as u64 };
        mix(self.seed, &[tag::PROJECTION, round])
    }

    pub fn projection_for_round(&self, t: usize) -> Result<ProjectionMatrix> {
        gen_projection(self.m, self.d(), self.projection, self.projection_seed(t))
    }

    fn channel(&self, m: usize) -> Result<ChannelConfig> {
        ChannelConfig::new(m, self.sigma2, self.power)
    }

    fn noise(&self) -> NoiseSource {
        NoiseSource::new(self.seed)
    }

    fn estimator_with_noise(&self) -> EstimatorConfig {
        EstimatorConfig {
            sigma2: self.sigma2,
            ..self.estimator
        }
    }
}

/// Per-round diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundRecord {
    pub t: usize,
    pub lr: f64,
    /// Global training loss after the update.
    pub train_loss: f64,
    pub test_acc: Option<f64>,
    /// Clip factors per device (clip schemes) or the common power-scaling
    /// factor repeated per device (scale schemes); ones for vanilla.
    pub alphas: Vec<f64>,
    /// `|m_i|^2` after the memory update.
    pub memory_sq: Vec<f64>,
    /// Transmitted energy `|x_i|^2` per device.
    pub powers: Vec<f64>,
    pub v_hat: f64,
    /// Largest mini-batch gradient norm seen this round.
    pub max_grad_norm: f64,
    /// Effective per-entry noise variance on the recovered aggregate after
    /// any server-side rescaling.
    pub effective_noise: f64,
    /// Round carried no information (scale schemes with all-zero updates).
    pub skipped: bool,
    pub wall_ms: f64,
}

struct DeviceOut {
    delta: ModelVector,
    /// `g_i / eta` (or `Delta_i / eta` without sparsification).
    u: ModelVector,
    memory_sq: f64,
    max_grad: f64,
}

/// Local SGD on every device, then optional Top-k with error feedback.
fn device_updates(
    theta: &ModelVector,
    devices: &mut [DeviceState],
    cfg: &ProtocolConfig,
    t: usize,
    sparsify: bool,
) -> Result<Vec<DeviceOut>> {
    let lr = cfg.schedule.lr(t);
    let q = cfg.schedule.q;
    let k = cfg.k;
    exec::map_mut(cfg.exec, devices, |dev| {
        let sampler = MiniBatchSampler::new(cfg.seed, dev.id, t, cfg.batch_size);
        let run = local_sgd(&cfg.model, theta, q, lr, &sampler, &dev.data)?;
        let delta = model_diff(theta, &run.theta)?;
        let g = if sparsify {
            let acc = dev.memory.m.add(&delta)?;
            let g = top_k(&acc, k)?;
            dev.memory.m = acc.sub(&g)?;
            g
        } else {
            delta.clone()
        };
        Ok(DeviceOut {
            u: g.scaled(1.0 / lr),
            delta,
            memory_sq: dev.memory.m.norm_sq(),
            max_grad: run.grad_norms.iter().copied().fold(0.0, f64::max),
        })
    })
    .into_iter()
    .collect()
}

fn apply_update(theta: &ModelVector, coef: f64, x_hat: &ModelVector) -> Result<ModelVector> {
    let mut next = theta.clone();
    next.axpy(-coef, x_hat)?;
    if !next.is_finite() {
        return Err(Error::NumericDivergence {
            stage: "global_update",
            step: 0,
        });
    }
    Ok(next)
}

/// Noiseless average of model differences.
pub fn run_round_vanilla(
    theta: &ModelVector,
    devices: &mut [DeviceState],
    cfg: &ProtocolConfig,
    t: usize,
) -> Result<(ModelVector, RoundRecord)> {
    let outs = device_updates(theta, devices, cfg, t, false)?;
    let r = devices.len() as f64;
    let mut sum = ModelVector::zeros(theta.len());
    for o in &outs {
        sum.axpy(1.0, &o.delta)?;
    }
    let next = apply_update(theta, 1.0 / r, &sum)?;
    let rec = RoundRecord {
        t,
        lr: cfg.schedule.lr(t),
        alphas: vec![1.0; outs.len()],
        memory_sq: vec![0.0; outs.len()],
        powers: outs.iter().map(|o| o.delta.norm_sq()).collect(),
        max_grad_norm: outs.iter().map(|o| o.max_grad).fold(0.0, f64::max),
        ..RoundRecord::default()
    };
    Ok((next, rec))
}

/// Top-k with memory, clipping of `g_i / eta` to `sqrt(P)`, projection,
/// MAC, recovery and the global step `theta - eta/R * x_hat`.
pub fn run_round_clip_comp(
    theta: &ModelVector,
    devices: &mut [DeviceState],
    cfg: &ProtocolConfig,
    a: &ProjectionMatrix,
    est: &EstimatorConfig,
    t: usize,
) -> Result<(ModelVector, RoundRecord)> {
    let lr = cfg.schedule.lr(t);
    let sparsify = cfg.k < cfg.d();
    let outs = device_updates(theta, devices, cfg, t, sparsify)?;
    let sqrt_p = cfg.sqrt_p();
    let tx: Vec<(f64, Vec<f64>)> = exec::map(cfg.exec, &outs, |o| {
        let alpha = clip_factor(&o.u, 1.0, sqrt_p)?;
        let x_tilde = clip(&o.u, sqrt_p)?;
        Ok((alpha, a.apply(x_tilde.as_slice())?))
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let signals: Vec<Vec<f64>> = tx.iter().map(|(_, x)| x.clone()).collect();
    let y = mac_transmit(&signals, &cfg.channel(a.rows)?, &cfg.noise(), t)?;
    let rec_est = estimate(&y, a, est)?;
    let r = devices.len() as f64;
    let next = apply_update(theta, lr / r, &rec_est.x_hat)?;
    let rec = RoundRecord {
        t,
        lr,
        alphas: tx.iter().map(|(alpha, _)| *alpha).collect(),
        memory_sq: outs.iter().map(|o| o.memory_sq).collect(),
        powers: signals.iter().map(|x| norm_sq(x)).collect(),
        v_hat: rec_est.v_hat,
        max_grad_norm: outs.iter().map(|o| o.max_grad).fold(0.0, f64::max),
        effective_noise: cfg.sigma2,
        ..RoundRecord::default()
    };
    Ok((next, rec))
}

/// Power scaling with the round-common factor `alpha = min_i P/|u_i|^2`.
///
/// `comp = Some(A)` adds Top-k with memory and projection by `A`; otherwise
/// the aggregate is received uncompressed (`M = d`, `A = I`).
pub fn run_round_scale(
    theta: &ModelVector,
    devices: &mut [DeviceState],
    cfg: &ProtocolConfig,
    t: usize,
    comp: Option<(&ProjectionMatrix, &EstimatorConfig)>,
) -> Result<(ModelVector, RoundRecord)> {
    let lr = cfg.schedule.lr(t);
    let d = cfg.d();
    let sparsify = comp.is_some() && cfg.k < d;
    let outs = device_updates(theta, devices, cfg, t, sparsify)?;
    let r = devices.len() as f64;
    let max_grad_norm = outs.iter().map(|o| o.max_grad).fold(0.0, f64::max);
    let memory_sq: Vec<f64> = outs.iter().map(|o| o.memory_sq).collect();

    let alpha = outs
        .iter()
        .map(|o| o.u.norm_sq())
        .filter(|n| *n > 0.0)
        .map(|n| cfg.power / n)
        .fold(f64::INFINITY, f64::min);
    if alpha.is_infinite() {
        // Every device sent zero: nothing to align on.
        return Ok((
            theta.clone(),
            RoundRecord {
                t,
                lr,
                alphas: vec![1.0; outs.len()],
                memory_sq,
                powers: vec![0.0; outs.len()],
                max_grad_norm,
                skipped: true,
                ..RoundRecord::default()
            },
        ));
    }
    let amp = alpha.sqrt();

    let identity;
    let (a, est) = match comp {
        Some((a, est)) => (a, *est),
        None => {
            identity = gen_projection(d, d, ProjectionKind::Identity, 0)?;
            (&identity, EstimatorConfig { kind: EstimatorKind::Identity, ..cfg.estimator_with_noise() })
        }
    };
    let signals: Vec<Vec<f64>> = exec::map(cfg.exec, &outs, |o| {
        let mut x = a.apply(o.u.scaled(amp).as_slice())?;
        // Rounding can leave |x|^2 a hair above P for the binding device.
        let e = norm_sq(&x);
        if e > cfg.power {
            let c = (cfg.power / e).sqrt();
            x.iter_mut().for_each(|v| *v *= c);
        }
        Ok(x)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let y = mac_transmit(&signals, &cfg.channel(a.rows)?, &cfg.noise(), t)?;
    let rec_est = estimate(&y, a, &est)?;
    let (coef, effective_noise) = if cfg.descale {
        (lr / (r * amp), cfg.sigma2 / alpha)
    } else {
        (lr / r, cfg.sigma2)
    };
    let next = apply_update(theta, coef, &rec_est.x_hat)?;
    Ok((
        next,
        RoundRecord {
            t,
            lr,
            alphas: vec![alpha; outs.len()],
            memory_sq,
            powers: signals.iter().map(|x| norm_sq(x)).collect(),
            v_hat: rec_est.v_hat,
            max_grad_norm,
            effective_noise,
            ..RoundRecord::default()
        },
    ))
}

/// Datasets used to score a run.
#[derive(Debug, Clone, Copy)]
pub struct EvalSets<'a> {
    pub train: &'a Dataset,
    pub test: Option<&'a Dataset>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub scheme: Scheme,
    pub initial_loss: f64,
    pub records: Vec<RoundRecord>,
    pub theta: ModelVector,
    /// Running maximum of mini-batch gradient norms, per round.
    pub g_emp: Vec<f64>,
    /// Lower bound on the clip factor implied by `g_emp`, per round, when
    /// the memory condition `a lambda > 4Q` holds.
    pub gamma_emp: Vec<Option<f64>>,
    /// Rounds where some `|m_i|^2` exceeded `4 eta^2 C Q^2 G_emp^2 / lambda^2`.
    pub memory_bound_violations: usize,
}

/// Runs `T` rounds of `scheme` from `theta0`. Devices are mutated (memory).
pub fn run_experiment(
    scheme: Scheme,
    cfg: &ProtocolConfig,
    devices: &mut [DeviceState],
    theta0: &ModelVector,
    eval: EvalSets<'_>,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    if devices.is_empty() {
        return Err(Error::config("at least one device is required"));
    }
    let d = cfg.d();
    if theta0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: theta0.len(),
        });
    }
    for dev in devices.iter_mut() {
        dev.memory = MemoryState::new(d);
    }
    let sched = cfg.schedule;
    let est = cfg.estimator_with_noise();
    let (k_eff, lambda) = if scheme.compressed() {
        (cfg.k, cfg.k as f64 / d as f64)
    } else {
        (d, 1.0)
    };
    let c = bound::compute_c(sched.a, lambda, sched.q).ok();

    let initial_loss = cfg.model.loss_eval(theta0, &eval.train.full_batch())?;
    let mut theta = theta0.clone();
    let mut records = Vec::with_capacity(sched.rounds);
    let mut g_emp = Vec::with_capacity(sched.rounds);
    let mut gamma_emp = Vec::with_capacity(sched.rounds);
    let mut running_g = 0.0f64;
    let mut memory_bound_violations = 0;

    let clip_cfg;
    let cfg_round = match scheme {
        Scheme::Clip => {
            clip_cfg = ProtocolConfig {
                k: d,
                m: d,
                projection: ProjectionKind::Identity,
                ..cfg.clone()
            };
            &clip_cfg
        }
        _ => cfg,
    };
    let identity = if scheme == Scheme::Clip {
        Some(gen_projection(d, d, ProjectionKind::Identity, 0)?)
    } else {
        None
    };
    let clip_est = EstimatorConfig {
        kind: EstimatorKind::Identity,
        ..est
    };

    for t in 0..sched.rounds {
        let start = Instant::now();
        let (next, mut rec) = match scheme {
            Scheme::Vanilla => run_round_vanilla(&theta, devices, cfg_round, t)?,
            Scheme::Clip => run_round_clip_comp(
                &theta,
                devices,
                cfg_round,
                identity.as_ref().expect("identity built for clip"),
                &clip_est,
                t,
            )?,
            Scheme::ClipComp => {
                let a = cfg_round.projection_for_round(t)?;
                run_round_clip_comp(&theta, devices, cfg_round, &a, &est, t)?
            }
            Scheme::Scale => run_round_scale(&theta, devices, cfg_round, t, None)?,
            Scheme::ScaleComp => {
                let a = cfg_round.projection_for_round(t)?;
                run_round_scale(&theta, devices, cfg_round, t, Some((&a, &est)))?
            }
        };
        theta = next;
        rec.train_loss = cfg.model.loss_eval(&theta, &eval.train.full_batch())?;
        rec.test_acc = match eval.test {
            Some(test) => cfg.model.accuracy(&theta, test)?,
            None => None,
        };
        rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;

        running_g = running_g.max(rec.max_grad_norm);
        g_emp.push(running_g);
        let gamma = c.map(|c| bound::compute_gamma(cfg.power, c, lambda, sched.q, running_g));
        gamma_emp.push(gamma);
        if let (Some(c), true) = (c, k_eff < d) {
            let q = sched.q as f64;
            let limit = 4.0 * rec.lr.powi(2) * c * q * q * running_g * running_g / (lambda * lambda);
            if rec.memory_sq.iter().any(|m| *m > limit * (1.0 + 1e-12)) {
                memory_bound_violations += 1;
            }
        }
        records.push(rec);
    }

    Ok(ExperimentResult {
        scheme,
        initial_loss,
        records,
        theta,
        g_emp,
        gamma_emp,
        memory_bound_violations,
    })
}
