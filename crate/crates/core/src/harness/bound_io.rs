//! Bound-input files and the `bound` command.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::bound::{bound_sweep_md, check_schedule, compute_c, eval_bound, BoundBreakdown, BoundInputs, BREAKDOWN_HEADER};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::recovery::{vseq_for_bound, EstimatorConfig, EstimatorKind, SignalPrior};

use super::config::KeyValues;

/// How the per-round estimation error `v_t` is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum VSpec {
    Constant(f64),
    Values(Vec<f64>),
    /// Predicted offline for channel-use ratio `m_over_d`.
    Predicted { m_over_d: f64, est: EstimatorConfig },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundFile {
    pub inputs: BoundInputs,
    pub v: VSpec,
    /// Optional `M/d` grid (requires a predicted `v`).
    pub md_grid: Vec<f64>,
}

const KEYS: [&str; 23] = [
    "L", "G", "sigma_l2", "sigma_g2", "f0", "f_star", "xi", "a", "Q", "T", "R", "d", "lambda", "P",
    "v", "v.values", "v.m_over_d", "v.estimator", "v.sigma2", "v.prior_rho", "v.prior_var", "v.iterations", "v.debias",
];

fn need<T: std::str::FromStr>(kv: &KeyValues, key: &str) -> Result<T> {
    let v = kv
        .get(key)
        .ok_or_else(|| Error::config(format!("{key}: missing required key")))?;
    v.parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse `{v}`")))
}

fn opt<T: std::str::FromStr>(kv: &KeyValues, key: &str) -> Result<Option<T>> {
    kv.get(key)
        .map(|v| {
            v.parse()
                .map_err(|_| Error::config(format!("{key}: cannot parse `{v}`")))
        })
        .transpose()
}

fn floats(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::config(format!("{key}: cannot parse `{s}`"))))
        .collect()
}

impl BoundFile {
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        for (k, _) in &kv.entries {
            if !KEYS.contains(&k.as_str()) && k != "sweep.md_grid" {
                return Err(Error::config(format!("{k}: unknown key")));
            }
        }
        let inputs = BoundInputs {
            l: need(&kv, "L")?,
            g: need(&kv, "G")?,
            sigma_l2: need(&kv, "sigma_l2")?,
            sigma_g2: need(&kv, "sigma_g2")?,
            f0: need(&kv, "f0")?,
            f_star: opt(&kv, "f_star")?,
            xi: need(&kv, "xi")?,
            a: need(&kv, "a")?,
            q: need(&kv, "Q")?,
            rounds: need(&kv, "T")?,
            devices: need(&kv, "R")?,
            d: need(&kv, "d")?,
            lambda: need(&kv, "lambda")?,
            power: need(&kv, "P")?,
            vseq: Vec::new(),
        };
        let v = if let Some(c) = opt::<f64>(&kv, "v")? {
            VSpec::Constant(c)
        } else if let Some(list) = kv.get("v.values") {
            VSpec::Values(floats("v.values", list)?)
        } else {
            let name = kv.get("v.estimator").unwrap_or("oamp");
            let kind =
                EstimatorKind::parse(name).ok_or_else(|| Error::config(format!("v.estimator: unknown `{name}`")))?;
            let rho = opt(&kv, "v.prior_rho")?.unwrap_or(0.1);
            let var = opt(&kv, "v.prior_var")?.unwrap_or(inputs.power / inputs.d.max(1) as f64);
            let prior = SignalPrior::new(rho, var).map_err(|e| Error::config(format!("v.prior_*: {e}")))?;
            let mut est = EstimatorConfig::new(kind, prior, need(&kv, "v.sigma2")?);
            if let Some(it) = opt(&kv, "v.iterations")? {
                est.iterations = it;
            }
            if let Some(db) = opt(&kv, "v.debias")? {
                est.debias = db;
            }
            VSpec::Predicted {
                m_over_d: opt(&kv, "v.m_over_d")?.unwrap_or(1.0),
                est,
            }
        };
        let md_grid = kv.get("sweep.md_grid").map(|g| floats("sweep.md_grid", g)).transpose()?.unwrap_or_default();
        if !md_grid.is_empty() && !matches!(v, VSpec::Predicted { .. }) {
            return Err(Error::config("sweep.md_grid: requires a predicted v (v.sigma2 and friends)"));
        }
        Ok(BoundFile { inputs, v, md_grid })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Inputs with the `v` sequence filled in.
    pub fn resolved(&self) -> Result<BoundInputs> {
        let mut inp = self.inputs.clone();
        inp.vseq = match &self.v {
            VSpec::Constant(c) => vec![*c; inp.rounds],
            VSpec::Values(v) => v.clone(),
            VSpec::Predicted { m_over_d, est } => vseq_for_bound(inp.rounds, *m_over_d, est)?,
        };
        Ok(inp)
    }
}

/// Serialises inputs in the format read by [`BoundFile::parse`], with a
/// constant `v`.
pub fn bound_file_text(inp: &BoundInputs, v: f64) -> String {
    let mut s = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    put("L", inp.l.to_string());
    put("G", inp.g.to_string());
    put("sigma_l2", inp.sigma_l2.to_string());
    put("sigma_g2", inp.sigma_g2.to_string());
    put("f0", inp.f0.to_string());
    if let Some(f) = inp.f_star {
        put("f_star", f.to_string());
    }
    put("xi", inp.xi.to_string());
    put("a", inp.a.to_string());
    put("Q", inp.q.to_string());
    put("T", inp.rounds.to_string());
    put("R", inp.devices.to_string());
    put("d", inp.d.to_string());
    put("lambda", inp.lambda.to_string());
    put("P", inp.power.to_string());
    put("v", v.to_string());
    s
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub base: BoundBreakdown,
    pub sweep: Vec<(f64, BoundBreakdown)>,
    pub conformance: String,
}

/// `bound` command. Writes `bound_breakdown.csv` and `conformance.txt`.
pub fn cmd_bound(file: &BoundFile, out: &Path, exec: Execution) -> Result<BoundReport> {
    let inp = file.resolved()?;
    let sched = check_schedule(inp.xi, inp.a, inp.q, inp.lambda, inp.l, inp.rounds);
    let mut conformance = sched.to_text();
    fs::create_dir_all(out)?;
    if let Err(e) = compute_c(inp.a, inp.lambda, inp.q) {
        fs::write(out.join("conformance.txt"), &conformance)?;
        return Err(e);
    }
    let base = eval_bound(&inp)?;
    if base.f_star_defaulted {
        conformance.push_str("note: f_star not given, using 0\n");
    }
    let mut csv = format!("{BREAKDOWN_HEADER}\n{}\n", base.csv_row(f64::NAN));
    let mut sweep = Vec::new();
    if let (false, VSpec::Predicted { est, .. }) = (file.md_grid.is_empty(), &file.v) {
        for row in bound_sweep_md(&inp, &file.md_grid, est, exec)? {
            csv.push_str(&row.breakdown.csv_row(row.md));
            csv.push('\n');
            sweep.push((row.md, row.breakdown));
        }
    }
    fs::write(out.join("bound_breakdown.csv"), csv)?;
    fs::write(out.join("conformance.txt"), &conformance)?;
    Ok(BoundReport {
        base,
        sweep,
        conformance,
    })
}
