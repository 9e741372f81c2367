//! Datasets, device partitions and protocol settings derived from a config.

use crate::data::{partition_noniid, read_idx_pair, synth_dataset, Dataset};
use crate::error::{Error, Result};
use crate::model::LossModel;
use crate::protocol::{DeviceState, ProtocolConfig, Schedule};

use super::config::{DataSource, ExperimentConfig};

#[derive(Debug, Clone)]
pub struct Task {
    pub train: Dataset,
    pub test: Option<Dataset>,
    pub model: LossModel,
}

/// Loads or synthesises the global train/test sets. Independent of the run
/// seed: every seed sees the same data and differs in partition and sampling.
pub fn load_task(cfg: &ExperimentConfig) -> Result<Task> {
    let model = cfg.model();
    let (train, test) = match &cfg.data {
        DataSource::Synthetic {
            classes,
            features,
            train,
            test,
            separation,
        } => {
            let all = synth_dataset(*classes, *features, train + test, *separation, cfg.data_seed)?;
            let tr = all.select(&(0..*train).collect::<Vec<_>>())?;
            let te = if *test > 0 {
                Some(all.select(&(*train..train + test).collect::<Vec<_>>())?)
            } else {
                None
            };
            (tr, te)
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
            let limit = |n: usize| (n > 0).then_some(n);
            let tr = read_idx_pair(train_images, train_labels, *classes, limit(*subset))?;
            let te = match (test_images, test_labels) {
                (Some(i), Some(l)) => Some(read_idx_pair(i, l, *classes, limit(*test_subset))?),
                _ => None,
            };
            (tr, te)
        }
    };
    if train.num_features() != model.features {
        return Err(Error::config(format!(
            "data.*: dataset has {} features, model expects {}",
            train.num_features(),
            model.features
        )));
    }
    Ok(Task { train, test, model })
}

pub fn samples_per_device(cfg: &ExperimentConfig, task: &Task) -> usize {
    if cfg.samples_per_device > 0 {
        cfg.samples_per_device
    } else {
        (task.train.len() / cfg.devices).max(1)
    }
}

/// Device datasets for one seed.
pub fn build_devices(cfg: &ExperimentConfig, task: &Task, seed: u64) -> Result<Vec<DeviceState>> {
    let parts = partition_noniid(
        &task.train,
        cfg.devices,
        cfg.excluded_per_device,
        samples_per_device(cfg, task),
        seed,
    )?;
    let d = task.model.dim();
    Ok(parts
        .into_iter()
        .enumerate()
        .map(|(i, p)| DeviceState::new(i, p, d))
        .collect())
}

pub fn protocol_config(cfg: &ExperimentConfig, seed: u64) -> Result<ProtocolConfig> {
    let pc = ProtocolConfig {
        model: cfg.model(),
        schedule: Schedule::new(cfg.xi, cfg.a, cfg.q, cfg.rounds)?,
        batch_size: cfg.batch_size,
        k: cfg.k(),
        m: cfg.m(),
        projection: cfg.projection,
        fixed_projection: cfg.fixed_projection,
        power: cfg.power_budget(),
        sigma2: cfg.noise_var(),
        estimator: cfg.estimator_config()?,
        descale: cfg.descale,
        seed,
        exec: cfg.exec,
    };
    pc.validate()?;
    Ok(pc)
}
