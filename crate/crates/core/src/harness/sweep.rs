//! Empirical and analytical loss versus the channel-use ratio `M/d`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::bound::{bound_sweep_md, BoundInputs, SweepRow};
use crate::error::Result;
use crate::protocol::Scheme;

use super::config::ExperimentConfig;
use super::run::{manifest, mean_std, run_all};
use super::svg::{line_chart, Series};
use super::task::{load_task, Task};

pub const SWEEP_HEADER: &str =
    "m_over_d,m,loss_mean,loss_std,loss_se,bound_total,bound_recovery,bound_rescaled,bound_overlay";

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub md: f64,
    pub m: usize,
    pub losses: Vec<f64>,
    pub loss_mean: f64,
    pub loss_std: f64,
    pub bound: SweepRow,
    /// Rescaled bound multiplied by the mean initial loss, for plotting on
    /// the loss axis.
    pub overlay: f64,
}

impl SweepPoint {
    pub fn loss_se(&self) -> f64 {
        self.loss_std / (self.losses.len() as f64).sqrt()
    }
}

/// Bound inputs for the config, with `f0` taken from the runs.
pub fn bound_template(cfg: &ExperimentConfig, f0: f64) -> BoundInputs {
    BoundInputs {
        l: cfg.bound.l,
        g: cfg.bound.g,
        sigma_l2: cfg.bound.sigma_l2,
        sigma_g2: cfg.bound.sigma_g2,
        f0,
        f_star: cfg.bound.f_star,
        xi: cfg.xi,
        a: cfg.bound.a.unwrap_or(cfg.a),
        q: cfg.q,
        rounds: cfg.rounds,
        devices: cfg.devices,
        d: cfg.bound.d.unwrap_or_else(|| cfg.d()),
        lambda: cfg.bound.lambda.unwrap_or(cfg.k_over_d),
        power: cfg.power_budget(),
        vseq: Vec::new(),
    }
}

pub fn sweep_md(cfg: &ExperimentConfig, task: &Task) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    let mut points = Vec::with_capacity(cfg.md_grid.len());
    let mut f0s = Vec::new();
    let mut empirical = Vec::new();
    for &md in &cfg.md_grid {
        let mut c = cfg.clone();
        c.m_over_d = md;
        let outs = run_all(&c, task, &[Scheme::ClipComp], &cfg.seeds)?;
        f0s.extend(outs.iter().map(|o| o.result.initial_loss));
        let losses: Vec<f64> = outs.iter().map(|o| o.final_loss()).collect();
        empirical.push((md, c.m(), losses));
    }
    let f0 = mean_std(&f0s).0;
    let rows = bound_sweep_md(
        &bound_template(cfg, f0),
        &cfg.md_grid,
        &cfg.estimator_config()?,
        cfg.exec,
    )?;
    for ((md, m, losses), row) in empirical.into_iter().zip(rows) {
        let (loss_mean, loss_std) = mean_std(&losses);
        points.push(SweepPoint {
            md,
            m,
            losses,
            loss_mean,
            loss_std,
            overlay: row.rescaled * f0,
            bound: row,
        });
    }
    Ok(points)
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            p.md,
            p.m,
            p.loss_mean,
            p.loss_std,
            p.loss_se(),
            p.bound.breakdown.total,
            p.bound.breakdown.recovery,
            p.bound.rescaled,
            p.overlay
        );
    }
    s
}

pub fn sweep_svg(points: &[SweepPoint]) -> String {
    line_chart(
        "clip_comp final training loss versus M/d",
        "M/d",
        "training loss",
        &[
            Series {
                name: "empirical loss".into(),
                color: "#1f77b4",
                points: points.iter().map(|p| (p.md, p.loss_mean)).collect(),
            },
            Series {
                name: "rescaled bound".into(),
                color: "#d62728",
                points: points.iter().map(|p| (p.md, p.overlay)).collect(),
            },
        ],
    )
}

/// `sweep-md` command: manifest, combined CSV and SVG overlay.
pub fn cmd_sweep_md(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    let task = load_task(cfg)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("manifest.txt"), manifest(cfg, &task, "sweep-md"))?;
    let points = sweep_md(cfg, &task)?;
    fs::write(out.join("sweep_md.csv"), sweep_csv(&points))?;
    fs::write(out.join("sweep_md.svg"), sweep_svg(&points))?;
    Ok(points)
}
