//! Flat `key = value` experiment configuration with dotted keys.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{LossModel, ModelKind};
use crate::projection::ProjectionKind;
use crate::protocol::Scheme;
use crate::recovery::{EstimatorConfig, EstimatorKind, SignalPrior};

/// Parsed `key = value` lines in file order. `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    pub entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected `key = value`, got `{line}`", n + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::config(format!("line {}: empty key", n + 1)));
            }
            if entries.iter().any(|(e, _)| e == k) {
                return Err(Error::config(format!("{k}: duplicate key")));
            }
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(KeyValues { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn bad(key: &str, value: &str, what: &str) -> Error {
    Error::config(format!("{key}: cannot parse `{value}` as {what}"))
}

fn num<T: std::str::FromStr>(key: &str, v: &str, what: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v, what))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, v, "a boolean")),
    }
}

fn list<T>(key: &str, v: &str, f: impl Fn(&str) -> Option<T>, what: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s).ok_or_else(|| bad(key, s, what)))
        .collect()
}

pub fn parse_seeds(key: &str, v: &str) -> Result<Vec<u64>> {
    list(key, v, |s| s.parse().ok(), "a list of unsigned integers")
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic {
        classes: usize,
        features: usize,
        train: usize,
        test: usize,
        separation: f64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: Option<PathBuf>,
        test_labels: Option<PathBuf>,
        classes: usize,
        subset: usize,
        test_subset: usize,
    },
}

/// Knobs for the bound evaluated next to the empirical runs.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundParams {
    pub l: f64,
    pub g: f64,
    pub sigma_l2: f64,
    pub sigma_g2: f64,
    pub f_star: Option<f64>,
    /// Schedule offset, sparsity ratio and dimension used by the bound;
    /// `None` takes the run's values.
    pub a: Option<f64>,
    pub lambda: Option<f64>,
    pub d: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: String,
    pub schemes: Vec<Scheme>,
    pub seeds: Vec<u64>,
    pub data: DataSource,
    pub data_seed: u64,
    pub excluded_per_device: usize,
    /// `0` means `train / devices`.
    pub samples_per_device: usize,
    pub model_kind: ModelKind,
    pub hidden: usize,
    pub devices: usize,
    pub batch_size: usize,
    pub xi: f64,
    pub a: f64,
    pub q: usize,
    pub rounds: usize,
    pub k_over_d: f64,
    pub m_over_d: f64,
    pub projection: ProjectionKind,
    pub fixed_projection: bool,
    pub snr_db: f64,
    pub sigma2: Option<f64>,
    pub power_per_dim: f64,
    pub power: Option<f64>,
    pub estimator: EstimatorKind,
    pub iterations: usize,
    pub damping: f64,
    pub debias: bool,
    pub prior_rho: Option<f64>,
    pub prior_var: Option<f64>,
    pub descale: bool,
    pub md_grid: Vec<f64>,
    pub bound: BoundParams,
    pub record_wall_time: bool,
    pub exec: Execution,
    pub out_dir: Option<PathBuf>,
}

pub const PRESETS: [&str; 2] = ["synthetic", "fmnist-subset"];

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: "synthetic".into(),
            schemes: vec![Scheme::Vanilla, Scheme::Clip, Scheme::Scale],
            seeds: vec![0, 1, 2],
            data: DataSource::Synthetic {
                classes: 10,
                features: 32,
                train: 6000,
                test: 1000,
                separation: 3.0,
            },
            data_seed: 0,
            excluded_per_device: 4,
            samples_per_device: 0,
            model_kind: ModelKind::Logistic,
            hidden: 32,
            devices: 20,
            batch_size: 128,
            xi: 120.0,
            a: 300.0,
            q: 1,
            rounds: 300,
            k_over_d: 0.1,
            m_over_d: 0.6,
            projection: ProjectionKind::Dct,
            fixed_projection: false,
            snr_db: 30.0,
            sigma2: None,
            power_per_dim: 2e-5,
            power: None,
            estimator: EstimatorKind::Oamp,
            iterations: 20,
            damping: 1.0,
            debias: true,
            prior_rho: None,
            prior_var: None,
            descale: false,
            md_grid: vec![0.2, 0.4, 0.6, 0.8],
            bound: BoundParams {
                l: 100.0,
                g: 100.0,
                sigma_l2: 0.0,
                sigma_g2: 0.0,
                f_star: None,
                a: None,
                lambda: None,
                d: None,
            },
            record_wall_time: false,
            exec: Execution::default(),
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        match name {
            "synthetic" => {}
            "fmnist-subset" => {
                cfg.preset = name.into();
                cfg.data = DataSource::Idx {
                    train_images: "data/train-images-idx3-ubyte".into(),
                    train_labels: "data/train-labels-idx1-ubyte".into(),
                    test_images: Some("data/t10k-images-idx3-ubyte".into()),
                    test_labels: Some("data/t10k-labels-idx1-ubyte".into()),
                    classes: 10,
                    subset: 6000,
                    test_subset: 1000,
                };
                cfg.model_kind = ModelKind::Mlp;
                cfg.hidden = 32;
            }
            other => {
                return Err(Error::config(format!(
                    "preset: unknown preset `{other}` (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        }
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_kv(&KeyValues::parse(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KeyValues::read(path)?)
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut cfg = Self::preset(kv.get("preset").unwrap_or("synthetic"))?;
        for (k, v) in &kv.entries {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let k = key;
        match k {
            "preset" => {}
            "schemes" => self.schemes = list(k, v, Scheme::parse, "a scheme name")?,
            "seeds" => self.seeds = parse_seeds(k, v)?,
            "data.source" => {
                self.data = match v {
                    "synthetic" => ExperimentConfig::default().data,
                    "idx" => ExperimentConfig::preset("fmnist-subset")?.data,
                    _ => return Err(bad(k, v, "`synthetic` or `idx`")),
                }
            }
            "data.seed" => self.data_seed = num(k, v, "an unsigned integer")?,
            "data.excluded_per_device" => self.excluded_per_device = num(k, v, "an unsigned integer")?,
            "data.samples_per_device" => self.samples_per_device = num(k, v, "an unsigned integer")?,
            "model.kind" => self.model_kind = ModelKind::parse(v).ok_or_else(|| bad(k, v, "a model kind"))?,
            "model.hidden" => self.hidden = num(k, v, "an unsigned integer")?,
            "fl.devices" => self.devices = num(k, v, "an unsigned integer")?,
            "fl.batch_size" => self.batch_size = num(k, v, "an unsigned integer")?,
            "schedule.xi" => self.xi = num(k, v, "a number")?,
            "schedule.a" => self.a = num(k, v, "a number")?,
            "schedule.q" => self.q = num(k, v, "an unsigned integer")?,
            "schedule.rounds" => self.rounds = num(k, v, "an unsigned integer")?,
            "compression.k_over_d" => self.k_over_d = num(k, v, "a number")?,
            "compression.m_over_d" => self.m_over_d = num(k, v, "a number")?,
            "compression.projection" => {
                self.projection = ProjectionKind::parse(v).ok_or_else(|| bad(k, v, "a projection kind"))?
            }
            "compression.fixed_projection" => self.fixed_projection = boolean(k, v)?,
            "channel.snr_db" => self.snr_db = num(k, v, "a number")?,
            "channel.sigma2" => self.sigma2 = Some(num(k, v, "a number")?),
            "channel.power" => self.power = Some(num(k, v, "a number")?),
            "channel.power_per_dim" => self.power_per_dim = num(k, v, "a number")?,
            "estimator.kind" => {
                self.estimator = EstimatorKind::parse(v).ok_or_else(|| bad(k, v, "an estimator kind"))?
            }
            "estimator.iterations" => self.iterations = num(k, v, "an unsigned integer")?,
            "estimator.damping" => self.damping = num(k, v, "a number")?,
            "estimator.debias" => self.debias = boolean(k, v)?,
            "estimator.prior_rho" => self.prior_rho = Some(num(k, v, "a number")?),
            "estimator.prior_var" => self.prior_var = Some(num(k, v, "a number")?),
            "scale.descale" => self.descale = boolean(k, v)?,
            "sweep.md_grid" => self.md_grid = list(k, v, |s| s.parse().ok(), "a list of numbers")?,
            "bound.L" => self.bound.l = num(k, v, "a number")?,
            "bound.G" => self.bound.g = num(k, v, "a number")?,
            "bound.sigma_l2" => self.bound.sigma_l2 = num(k, v, "a number")?,
            "bound.sigma_g2" => self.bound.sigma_g2 = num(k, v, "a number")?,
            "bound.f_star" => self.bound.f_star = Some(num(k, v, "a number")?),
            "bound.a" => self.bound.a = Some(num(k, v, "a number")?),
            "bound.lambda" => self.bound.lambda = Some(num(k, v, "a number")?),
            "bound.d" => self.bound.d = Some(num(k, v, "an unsigned integer")?),
            "harness.record_wall_time" => self.record_wall_time = boolean(k, v)?,
            "harness.parallel" => {
                self.exec = if boolean(k, v)? { Execution::Parallel } else { Execution::Serial }
            }
            "output.dir" => self.out_dir = Some(PathBuf::from(v)),
            _ => return self.set_data(k, v),
        }
        Ok(())
    }

    fn set_data(&mut self, k: &str, v: &str) -> Result<()> {
        match &mut self.data {
            DataSource::Synthetic {
                classes,
                features,
                train,
                test,
                separation,
            } => match k {
                "data.classes" => *classes = num(k, v, "an unsigned integer")?,
                "data.features" => *features = num(k, v, "an unsigned integer")?,
                "data.train" => *train = num(k, v, "an unsigned integer")?,
                "data.test" => *test = num(k, v, "an unsigned integer")?,
                "data.separation" => *separation = num(k, v, "a number")?,
                _ => return Err(Error::config(format!("{k}: unknown key"))),
            },
            DataSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                classes,
                subset,
                test_subset,
            } => match k {
                "data.train_images" => *train_images = v.into(),
                "data.train_labels" => *train_labels = v.into(),
                "data.test_images" => *test_images = Some(v.into()),
                "data.test_labels" => *test_labels = Some(v.into()),
                "data.classes" => *classes = num(k, v, "an unsigned integer")?,
                "data.subset" => *subset = num(k, v, "an unsigned integer")?,
                "data.test_subset" => *test_subset = num(k, v, "an unsigned integer")?,
                _ => return Err(Error::config(format!("{k}: unknown key"))),
            },
        }
        Ok(())
    }

    pub fn features(&self) -> usize {
        match &self.data {
            DataSource::Synthetic { features, .. } => *features,
            DataSource::Idx { .. } => 28 * 28,
        }
    }

    pub fn classes(&self) -> usize {
        match &self.data {
            DataSource::Synthetic { classes, .. } | DataSource::Idx { classes, .. } => *classes,
        }
    }

    pub fn model(&self) -> LossModel {
        match self.model_kind {
            ModelKind::Logistic => LossModel::logistic(self.features(), self.classes()),
            ModelKind::Mlp => LossModel::mlp(self.features(), self.hidden, self.classes()),
            ModelKind::Quadratic => LossModel::quadratic(self.features()),
        }
    }

    pub fn d(&self) -> usize {
        self.model().dim()
    }

    pub fn k(&self) -> usize {
        budget(self.k_over_d, self.d())
    }

    pub fn m(&self) -> usize {
        budget(self.m_over_d, self.d())
    }

    pub fn power_budget(&self) -> f64 {
        self.power.unwrap_or(self.power_per_dim * self.d() as f64)
    }

    /// `sigma^2 = P / (d 10^(snr/10))` unless set explicitly.
    pub fn noise_var(&self) -> f64 {
        self.sigma2
            .unwrap_or_else(|| self.power_budget() / (self.d() as f64 * 10f64.powf(self.snr_db / 10.0)))
    }

    pub fn estimator_config(&self) -> Result<EstimatorConfig> {
        let d = self.d() as f64;
        let prior = SignalPrior::new(
            self.prior_rho.unwrap_or(self.k_over_d),
            self.prior_var.unwrap_or(self.power_budget() / d),
        )
        .map_err(|e| Error::config(format!("estimator.prior_*: {e}")))?;
        let mut est = EstimatorConfig::new(self.estimator, prior, self.noise_var());
        est.iterations = self.iterations;
        est.damping = self.damping;
        est.debias = self.debias;
        Ok(est)
    }

    pub fn validate(&self) -> Result<()> {
        let frac = |key: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{key}: must lie in (0, 1], got {v}")))
            }
        };
        frac("compression.k_over_d", self.k_over_d)?;
        frac("compression.m_over_d", self.m_over_d)?;
        for &g in &self.md_grid {
            frac("sweep.md_grid", g)?;
        }
        if self.schemes.is_empty() {
            return Err(Error::config("schemes: at least one scheme is required"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds: at least one seed is required"));
        }
        if self.devices < 1 {
            return Err(Error::config("fl.devices: must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("fl.batch_size: must be >= 1"));
        }
        if !(self.xi > 0.0) {
            return Err(Error::config("schedule.xi: must be > 0"));
        }
        if !(self.a > 0.0) {
            return Err(Error::config("schedule.a: must be > 0"));
        }
        if self.q < 1 {
            return Err(Error::config("schedule.q: must be >= 1"));
        }
        if self.excluded_per_device >= self.classes() {
            return Err(Error::config(format!(
                "data.excluded_per_device: must be below the class count {}",
                self.classes()
            )));
        }
        if !(self.power_budget() > 0.0) {
            return Err(Error::config("channel.power: must be > 0"));
        }
        if !(self.noise_var() >= 0.0) || !self.noise_var().is_finite() {
            return Err(Error::config("channel.sigma2: must be finite and >= 0"));
        }
        if self.iterations < 1 {
            return Err(Error::config("estimator.iterations: must be >= 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config("estimator.damping: must lie in (0, 1]"));
        }
        if let DataSource::Synthetic { train, classes, features, .. } = &self.data {
            if *classes < 1 || *features < 1 || *train < *classes {
                return Err(Error::config("data.train: must be >= data.classes"));
            }
        }
        self.model()
            .validate()
            .map_err(|e| Error::config(format!("model.*: {e}")))?;
        self.estimator_config()?;
        Ok(())
    }

    /// Every setting as `key = value`, in a fixed order.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let join = |v: &[String]| v.join(",");
        let mut out: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        put("preset", self.preset.clone());
        put("schemes", join(&self.schemes.iter().map(|s| s.name().to_string()).collect::<Vec<_>>()));
        put("seeds", join(&self.seeds.iter().map(u64::to_string).collect::<Vec<_>>()));
        match &self.data {
            DataSource::Synthetic {
                classes,
                features,
                train,
                test,
                separation,
            } => {
                put("data.source", "synthetic".into());
                put("data.classes", classes.to_string());
                put("data.features", features.to_string());
                put("data.train", train.to_string());
                put("data.test", test.to_string());
                put("data.separation", separation.to_string());
            }
            DataSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                classes,
                subset,
                test_subset,
            } => {
                put("data.source", "idx".into());
                put("data.train_images", train_images.display().to_string());
                put("data.train_labels", train_labels.display().to_string());
                if let (Some(i), Some(l)) = (test_images, test_labels) {
                    put("data.test_images", i.display().to_string());
                    put("data.test_labels", l.display().to_string());
                }
                put("data.classes", classes.to_string());
                put("data.subset", subset.to_string());
                put("data.test_subset", test_subset.to_string());
            }
        }
        put("data.seed", self.data_seed.to_string());
        put("data.excluded_per_device", self.excluded_per_device.to_string());
        put("data.samples_per_device", self.samples_per_device.to_string());
        put("model.kind", self.model_kind.name().into());
        put("model.hidden", self.hidden.to_string());
        put("fl.devices", self.devices.to_string());
        put("fl.batch_size", self.batch_size.to_string());
        put("schedule.xi", self.xi.to_string());
        put("schedule.a", self.a.to_string());
        put("schedule.q", self.q.to_string());
        put("schedule.rounds", self.rounds.to_string());
        put("compression.k_over_d", self.k_over_d.to_string());
        put("compression.m_over_d", self.m_over_d.to_string());
        put("compression.projection", self.projection.name().into());
        put("compression.fixed_projection", self.fixed_projection.to_string());
        put("channel.snr_db", self.snr_db.to_string());
        if let Some(s) = self.sigma2 {
            put("channel.sigma2", s.to_string());
        }
        if let Some(p) = self.power {
            put("channel.power", p.to_string());
        }
        put("channel.power_per_dim", self.power_per_dim.to_string());
        put("estimator.kind", self.estimator.name().into());
        put("estimator.iterations", self.iterations.to_string());
        put("estimator.damping", self.damping.to_string());
        put("estimator.debias", self.debias.to_string());
        if let Some(r) = self.prior_rho {
            put("estimator.prior_rho", r.to_string());
        }
        if let Some(v) = self.prior_var {
            put("estimator.prior_var", v.to_string());
        }
        put("scale.descale", self.descale.to_string());
        put("sweep.md_grid", join(&self.md_grid.iter().map(f64::to_string).collect::<Vec<_>>()));
        put("bound.L", self.bound.l.to_string());
        put("bound.G", self.bound.g.to_string());
        put("bound.sigma_l2", self.bound.sigma_l2.to_string());
        put("bound.sigma_g2", self.bound.sigma_g2.to_string());
        if let Some(f) = self.bound.f_star {
            put("bound.f_star", f.to_string());
        }
        if let Some(a) = self.bound.a {
            put("bound.a", a.to_string());
        }
        if let Some(l) = self.bound.lambda {
            put("bound.lambda", l.to_string());
        }
        if let Some(d) = self.bound.d {
            put("bound.d", d.to_string());
        }
        put("harness.record_wall_time", self.record_wall_time.to_string());
        put("harness.parallel", self.exec.is_parallel().to_string());
        out
    }
}

/// `max(1, round(frac * d))`.
pub fn budget(frac: f64, d: usize) -> usize {
    ((frac * d as f64).round() as usize).clamp(1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_setup() {
        let cfg = ExperimentConfig::from_text("").unwrap();
        assert_eq!(cfg.devices, 20);
        assert_eq!(cfg.batch_size, 128);
        assert_eq!(cfg.q, 1);
        assert_eq!(cfg.k_over_d, 0.1);
        assert_eq!(cfg.snr_db, 30.0);
        assert_eq!(cfg.iterations, 20);
        assert_eq!(cfg.d(), 330);
        assert_eq!(cfg.k(), 33);
        assert!((cfg.power_budget() - 2e-5 * 330.0).abs() < 1e-15);
        let snr = cfg.power_budget() / (330.0 * cfg.noise_var());
        assert!((10.0 * snr.log10() - 30.0).abs() < 1e-9);
    }

    #[test]
    fn round_trips_through_text() {
        let text = "schemes = clip, clip_comp\nseeds=4,5\nchannel.snr_db = 20 # low\ncompression.m_over_d=0.3";
        let cfg = ExperimentConfig::from_text(text).unwrap();
        assert_eq!(cfg.schemes, vec![Scheme::Clip, Scheme::ClipComp]);
        let dumped: String = cfg.to_kv().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        assert_eq!(ExperimentConfig::from_text(&dumped).unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_key() {
        for (text, key) in [
            ("channel.snr_db = loud", "channel.snr_db"),
            ("compression.k_over_d = 1.5", "compression.k_over_d"),
            ("nonsense.key = 1", "nonsense.key"),
            ("schemes = clip, warp", "schemes"),
            ("preset = mnist-full", "preset"),
        ] {
            let err = ExperimentConfig::from_text(text).unwrap_err().to_string();
            assert!(err.contains(key), "{err}");
        }
        assert!(KeyValues::parse("a = 1\na = 2").is_err());
        assert!(KeyValues::parse("just words").is_err());
    }

    #[test]
    fn preset_is_applied_before_overrides() {
        let cfg = ExperimentConfig::from_text("model.hidden = 8\npreset = fmnist-subset").unwrap();
        assert_eq!(cfg.model_kind, ModelKind::Mlp);
        assert_eq!(cfg.hidden, 8);
    }
}
