//! Empirical estimates of the smoothness, gradient-norm, local-variance and
//! heterogeneity constants along a noiseless training trajectory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::bound::{eval_bound, BoundInputs};
use crate::error::Result;
use crate::exec;
use crate::protocol::{run_round_vanilla, DeviceState};
use crate::sgd::MiniBatchSampler;
use crate::vector::ModelVector;

use super::bound_io::bound_file_text;
use super::config::ExperimentConfig;
use super::sweep::bound_template;
use super::task::{build_devices, load_task, protocol_config, Task};

/// Mini-batch draws per device and probe point for the variance estimate.
pub const VARIANCE_DRAWS: usize = 16;
/// Trajectory points at which the constants are probed.
pub const PROBE_POINTS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub l_emp: f64,
    pub g_emp: f64,
    pub sigma_l_emp: f64,
    pub sigma_g_emp: f64,
    pub f0: f64,
    pub points: usize,
}

/// `(1/R) sum_i grad f_i(theta)` and the per-device gradients.
fn device_grads(cfg: &ExperimentConfig, task: &Task, devices: &[DeviceState], theta: &ModelVector) -> Result<(ModelVector, Vec<ModelVector>)> {
    let grads: Vec<ModelVector> = exec::map(cfg.exec, devices, |d| task.model.full_grad(theta, &d.data))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut mean = ModelVector::zeros(theta.len());
    for g in &grads {
        mean.axpy(1.0 / grads.len() as f64, g)?;
    }
    Ok((mean, grads))
}

/// Probes the constants for the first configured seed.
pub fn probe(cfg: &ExperimentConfig, task: &Task) -> Result<ProbeReport> {
    let seed = cfg.seeds[0];
    let pc = protocol_config(cfg, seed)?;
    let mut devices = build_devices(cfg, task, seed)?;
    let mut theta = task.model.init(seed);
    let f0 = task.model.loss_eval(&theta, &task.train.full_batch())?;

    let stride = (cfg.rounds / PROBE_POINTS).max(1);
    let mut samples = vec![theta.clone()];
    let mut g_emp = 0.0f64;
    for t in 0..cfg.rounds {
        let (next, rec) = run_round_vanilla(&theta, &mut devices, &pc, t)?;
        g_emp = g_emp.max(rec.max_grad_norm);
        theta = next;
        if (t + 1) % stride == 0 && samples.len() < PROBE_POINTS + 1 {
            samples.push(theta.clone());
        }
    }

    let mut sigma_l2 = 0.0f64;
    let mut sigma_g2 = 0.0f64;
    let mut fulls = Vec::with_capacity(samples.len());
    for (p, th) in samples.iter().enumerate() {
        let (mean, grads) = device_grads(cfg, task, &devices, th)?;
        for g in &grads {
            sigma_g2 = sigma_g2.max(g.sub(&mean)?.norm_sq());
        }
        let per_dev: Vec<(f64, f64)> = exec::map(cfg.exec, &devices, |dev| {
            let full = &grads[dev.id];
            let mut var = 0.0;
            let mut max_norm = 0.0f64;
            for r in 0..VARIANCE_DRAWS {
                // Rounds past the run so the probe never replays training batches.
                let sampler = MiniBatchSampler::new(seed, dev.id, cfg.rounds + p * VARIANCE_DRAWS + r, cfg.batch_size);
                let g = task.model.grad_minibatch(th, &sampler.batch(&dev.data, 0))?;
                var += g.sub(full)?.norm_sq() / VARIANCE_DRAWS as f64;
                max_norm = max_norm.max(g.norm());
            }
            Ok((var, max_norm))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        for (v, n) in per_dev {
            sigma_l2 = sigma_l2.max(v);
            g_emp = g_emp.max(n);
        }
        fulls.push(mean);
    }

    let mut l_emp = 0.0f64;
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let dx = samples[i].sub(&samples[j])?.norm();
            if dx > 0.0 {
                l_emp = l_emp.max(fulls[i].sub(&fulls[j])?.norm() / dx);
            }
        }
    }
    Ok(ProbeReport {
        l_emp,
        g_emp,
        sigma_l_emp: sigma_l2.sqrt(),
        sigma_g_emp: sigma_g2.sqrt(),
        f0,
        points: samples.len(),
    })
}

/// Bound inputs with the probed constants in place of the configured ones.
pub fn probe_bound_inputs(cfg: &ExperimentConfig, rep: &ProbeReport) -> BoundInputs {
    let mut inp = bound_template(cfg, rep.f0);
    inp.l = rep.l_emp;
    inp.g = rep.g_emp;
    inp.sigma_l2 = rep.sigma_l_emp.powi(2);
    inp.sigma_g2 = rep.sigma_g_emp.powi(2);
    inp
}

/// `assumption-probe` command. Writes `probe_report.txt` (a bound-input
/// file with `v = sigma^2` plus probe diagnostics as comments).
pub fn cmd_assumption_probe(cfg: &ExperimentConfig, out: &Path) -> Result<(ProbeReport, BoundInputs)> {
    cfg.validate()?;
    let task = load_task(cfg)?;
    let rep = probe(cfg, &task)?;
    let inp = probe_bound_inputs(cfg, &rep);
    let mut text = String::new();
    let _ = writeln!(text, "# assumption probe, seed {}, {} trajectory points", cfg.seeds[0], rep.points);
    let _ = writeln!(text, "# L_emp = {}", rep.l_emp);
    let _ = writeln!(text, "# G_emp = {}", rep.g_emp);
    let _ = writeln!(text, "# sigma_l_emp = {}", rep.sigma_l_emp);
    let _ = writeln!(text, "# sigma_g_emp = {}", rep.sigma_g_emp);
    text.push_str(&bound_file_text(&inp, cfg.noise_var()));
    let mut check = inp.clone();
    check.vseq = vec![cfg.noise_var(); check.rounds];
    if let Err(e) = eval_bound(&check) {
        let _ = writeln!(text, "# bound not evaluable with these inputs: {e}");
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("probe_report.txt"), text)?;
    Ok((rep, inp))
}
