//! Datasets: in-memory storage, synthesis, partitioning and file formats.

mod csv;
mod dataset;
mod idx;
mod partition;
mod synth;

pub use self::csv::{read_csv, write_csv};
pub use dataset::{DataSample, Dataset, MiniBatch};
pub use idx::{read_idx_images, read_idx_labels, read_idx_pair};
pub use partition::partition_noniid;
pub use synth::synth_dataset;
