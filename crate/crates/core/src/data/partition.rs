use rand::seq::SliceRandom;
use rand::Rng;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream, tag};

/// Splits `data` into `devices` local datasets, each missing
/// `excluded_per_device` classes.
///
/// Exclusion sets are consecutive windows over a seeded class permutation
/// (device `i` excludes positions `i*e .. i*e+e` modulo the class count).
/// Each device then draws `samples_per_device / available` samples with
/// replacement from every class it keeps.
pub fn partition_noniid(
    data: &Dataset,
    devices: usize,
    excluded_per_device: usize,
    samples_per_device: usize,
    seed: u64,
) -> Result<Vec<Dataset>> {
    if devices < 1 {
        return Err(Error::invalid("number of devices must be at least 1"));
    }
    let classes = data.present_classes();
    if excluded_per_device >= classes.len() {
        return Err(Error::invalid(format!(
            "excluded_per_device = {excluded_per_device} must be below the class count {}",
            classes.len()
        )));
    }
    let available = classes.len() - excluded_per_device;
    let per_class = (samples_per_device / available).max(1);

    let mut order = classes.clone();
    order.shuffle(&mut stream(seed, &[tag::PARTITION]));

    (0..devices)
        .map(|dev| {
            let excluded: Vec<usize> = (0..excluded_per_device)
                .map(|j| order[(dev * excluded_per_device + j) % order.len()])
                .collect();
            let mut rng = stream(seed, &[tag::PARTITION, dev as u64 + 1]);
            let mut rows = Vec::with_capacity(per_class * available);
            for &c in classes.iter().filter(|c| !excluded.contains(c)) {
                let pool = data.class_indices(c);
                rows.extend((0..per_class).map(|_| pool[rng.random_range(0..pool.len())]));
            }
            data.select(&rows)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;

    fn distinct_labels(ds: &Dataset) -> usize {
        ds.present_classes().len()
    }

    #[test]
    fn excluding_four_of_ten_leaves_six_labels() {
        let data = synth_dataset(10, 3, 500, 1.0, 0).unwrap();
        let parts = partition_noniid(&data, 20, 4, 120, 9).unwrap();
        assert_eq!(parts.len(), 20);
        for p in &parts {
            assert_eq!(distinct_labels(p), 6);
            assert_eq!(p.len(), 120);
        }
    }

    #[test]
    fn iid_case_is_balanced() {
        let data = synth_dataset(5, 3, 100, 1.0, 0).unwrap();
        for p in partition_noniid(&data, 4, 0, 50, 1).unwrap() {
            for c in 0..5 {
                assert_eq!(p.class_indices(c).len(), 10);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let data = synth_dataset(10, 3, 200, 1.0, 0).unwrap();
        let a = partition_noniid(&data, 5, 4, 60, 3).unwrap();
        let b = partition_noniid(&data, 5, 4, 60, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_arguments() {
        let data = synth_dataset(4, 3, 40, 1.0, 0).unwrap();
        assert!(partition_noniid(&data, 0, 1, 10, 0).is_err());
        assert!(partition_noniid(&data, 2, 4, 10, 0).is_err());
    }
}
