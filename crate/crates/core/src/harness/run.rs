//! Multi-seed, multi-scheme runs and their CSV/manifest artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::exec;
use crate::protocol::{run_experiment, EvalSets, ExperimentResult, RoundRecord, Scheme};

use super::config::ExperimentConfig;
use super::task::{build_devices, load_task, protocol_config, samples_per_device, Task};

pub const METRICS_HEADER: &str =
    "seed,scheme,t,eta,train_loss,test_acc,mean_alpha,max_alpha,max_mem_sq,max_power,v_hat,wall_ms";
pub const SUMMARY_HEADER: &str =
    "scheme,seeds,final_loss_mean,final_loss_std,final_acc_mean,final_acc_std";

/// One CSV row per (seed, scheme, round).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub seed: u64,
    pub scheme: Scheme,
    pub t: usize,
    pub eta: f64,
    pub train_loss: f64,
    pub test_acc: Option<f64>,
    pub mean_alpha: f64,
    pub max_alpha: f64,
    pub max_mem_sq: f64,
    pub max_power: f64,
    pub v_hat: f64,
    pub wall_ms: f64,
}

impl MetricsRow {
    pub fn from_record(seed: u64, scheme: Scheme, r: &RoundRecord, keep_time: bool) -> Self {
        let n = r.alphas.len().max(1) as f64;
        let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        MetricsRow {
            seed,
            scheme,
            t: r.t,
            eta: r.lr,
            train_loss: r.train_loss,
            test_acc: r.test_acc,
            mean_alpha: r.alphas.iter().sum::<f64>() / n,
            max_alpha: max(&r.alphas),
            max_mem_sq: max(&r.memory_sq),
            max_power: max(&r.powers),
            v_hat: r.v_hat,
            wall_ms: if keep_time { r.wall_ms } else { 0.0 },
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.scheme.name(),
            self.t,
            self.eta,
            self.train_loss,
            self.test_acc.map(|a| a.to_string()).unwrap_or_default(),
            self.mean_alpha,
            self.max_alpha,
            self.max_mem_sq,
            self.max_power,
            self.v_hat,
            self.wall_ms
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scheme: Scheme,
    pub seed: u64,
    pub result: ExperimentResult,
}

impl RunOutput {
    pub fn final_loss(&self) -> f64 {
        self.result
            .records
            .last()
            .map_or(self.result.initial_loss, |r| r.train_loss)
    }

    pub fn final_acc(&self) -> Option<f64> {
        self.result.records.last().and_then(|r| r.test_acc)
    }

    pub fn rows(&self, keep_time: bool) -> Vec<MetricsRow> {
        self.result
            .records
            .iter()
            .map(|r| MetricsRow::from_record(self.seed, self.scheme, r, keep_time))
            .collect()
    }
}

/// Runs every `(scheme, seed)` pair. Runs are independent and execute
/// concurrently; the output order is scheme-major, then seed.
pub fn run_all(cfg: &ExperimentConfig, task: &Task, schemes: &[Scheme], seeds: &[u64]) -> Result<Vec<RunOutput>> {
    let jobs: Vec<(Scheme, u64)> = schemes
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    exec::map(cfg.exec, &jobs, |&(scheme, seed)| {
        let pc = protocol_config(cfg, seed)?;
        let mut devices = build_devices(cfg, task, seed)?;
        let theta0 = task.model.init(seed);
        let eval = EvalSets {
            train: &task.train,
            test: task.test.as_ref(),
        };
        let result = run_experiment(scheme, &pc, &mut devices, &theta0, eval)?;
        Ok(RunOutput { scheme, seed, result })
    })
    .into_iter()
    .collect()
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub seeds: usize,
    pub final_loss: (f64, f64),
    pub final_acc: Option<(f64, f64)>,
}

pub fn summarize(outputs: &[RunOutput], schemes: &[Scheme]) -> Vec<SchemeSummary> {
    schemes
        .iter()
        .map(|&scheme| {
            let runs: Vec<&RunOutput> = outputs.iter().filter(|o| o.scheme == scheme).collect();
            let losses: Vec<f64> = runs.iter().map(|o| o.final_loss()).collect();
            let accs: Option<Vec<f64>> = runs.iter().map(|o| o.final_acc()).collect();
            SchemeSummary {
                scheme,
                seeds: runs.len(),
                final_loss: mean_std(&losses),
                final_acc: accs.filter(|a| !a.is_empty()).map(|a| mean_std(&a)),
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SchemeSummary]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let (am, asd) = r
            .final_acc
            .map(|(m, sd)| (m.to_string(), sd.to_string()))
            .unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.scheme.name(),
            r.seeds,
            r.final_loss.0,
            r.final_loss.1,
            am,
            asd
        );
    }
    s
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

pub fn metrics_file_name(scheme: Scheme, seed: u64) -> String {
    format!("metrics_{}_seed{}.csv", scheme.name(), seed)
}

/// Config plus every derived quantity and modelling choice needed to
/// reproduce the run.
pub fn manifest(cfg: &ExperimentConfig, task: &Task, command: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# airfl run manifest");
    let _ = writeln!(s, "command = {command}");
    for (k, v) in cfg.to_kv() {
        let _ = writeln!(s, "{k} = {v}");
    }
    let est = cfg.estimator_config().ok();
    let derived = [
        ("derived.d", cfg.d().to_string()),
        ("derived.k", cfg.k().to_string()),
        ("derived.m", cfg.m().to_string()),
        ("derived.power", cfg.power_budget().to_string()),
        ("derived.sigma2", cfg.noise_var().to_string()),
        ("derived.prior_rho", est.map(|e| e.prior.rho.to_string()).unwrap_or_default()),
        ("derived.prior_var", est.map(|e| e.prior.var.to_string()).unwrap_or_default()),
        ("derived.train_samples", task.train.len().to_string()),
        ("derived.test_samples", task.test.as_ref().map_or(0, |t| t.len()).to_string()),
        ("derived.samples_per_device", samples_per_device(cfg, task).to_string()),
        ("choice.partition", "seeded round-robin exclusion windows over a shuffled class order; sampling with replacement".into()),
        ("choice.rng", "ChaCha8 streams keyed by (seed, purpose, device, round, step)".into()),
        ("choice.scale_alignment", "round-common alpha = min_i P/|u_i|^2, known at the server".into()),
        ("choice.train_loss", "global train set after each update".into()),
        ("choice.aggregation_order", "ascending device id".into()),
    ];
    for (k, v) in derived {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub outputs: Vec<RunOutput>,
    pub summary: Vec<SchemeSummary>,
    pub files: Vec<PathBuf>,
}

/// `run` command: manifest, per-(scheme, seed) metrics and a summary.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<RunArtifacts> {
    cfg.validate()?;
    let task = load_task(cfg)?;
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let mut write = |name: String, body: String| -> Result<()> {
        let p = out.join(name);
        fs::write(&p, body)?;
        files.push(p);
        Ok(())
    };
    write("manifest.txt".into(), manifest(cfg, &task, "run"))?;
    let outputs = run_all(cfg, &task, &cfg.schemes, &cfg.seeds)?;
    for o in &outputs {
        write(
            metrics_file_name(o.scheme, o.seed),
            metrics_csv(&o.rows(cfg.record_wall_time)),
        )?;
    }
    let summary = summarize(&outputs, &cfg.schemes);
    write("summary.csv".into(), summary_csv(&summary))?;
    Ok(RunArtifacts {
        outputs,
        summary,
        files,
    })
}
