use crate::error::{Error, Result};

/// One labelled example.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Row-major feature matrix plus labels, with a per-class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    num_features: usize,
    num_classes: usize,
    by_class: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        num_features: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("dataset must be non-empty"));
        }
        if num_features == 0 || num_classes == 0 {
            return Err(Error::invalid("feature and class counts must be positive"));
        }
        if features.len() != labels.len() * num_features {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * num_features,
                actual: features.len(),
            });
        }
        let mut by_class = vec![Vec::new(); num_classes];
        for (i, &y) in labels.iter().enumerate() {
            if y >= num_classes {
                return Err(Error::invalid(format!(
                    "label {y} out of range for {num_classes} classes"
                )));
            }
            by_class[y].push(i);
        }
        Ok(Dataset {
            features,
            labels,
            num_features,
            num_classes,
            by_class,
        })
    }

    pub fn from_samples(samples: &[DataSample], num_classes: usize) -> Result<Self> {
        let p = samples.first().map(|s| s.features.len()).unwrap_or(0);
        let mut features = Vec::with_capacity(samples.len() * p);
        let mut labels = Vec::with_capacity(samples.len());
        for s in samples {
            if s.features.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    actual: s.features.len(),
                });
            }
            features.extend_from_slice(&s.features);
            labels.push(s.label);
        }
        Dataset::new(features, labels, p, num_classes)
    }

    /// Builds a dataset from selected rows of `self`, repeats allowed.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let p = self.num_features;
        let mut features = Vec::with_capacity(rows.len() * p);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            features.extend_from_slice(self.features(r));
            labels.push(self.labels[r]);
        }
        Dataset::new(features, labels, p, self.num_classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_indices(&self, class: usize) -> &[usize] {
        &self.by_class[class]
    }

    /// Classes with at least one sample.
    pub fn present_classes(&self) -> Vec<usize> {
        (0..self.num_classes)
            .filter(|&c| !self.by_class[c].is_empty())
            .collect()
    }

    pub fn sample(&self, i: usize) -> DataSample {
        DataSample {
            features: self.features(i).to_vec(),
            label: self.labels[i],
        }
    }

    pub fn full_batch(&self) -> MiniBatch<'_> {
        MiniBatch {
            data: self,
            indices: (0..self.len()).collect(),
        }
    }

    pub fn batch(&self, indices: Vec<usize>) -> MiniBatch<'_> {
        MiniBatch {
            data: self,
            indices,
        }
    }
}

/// A (possibly repeating) selection of rows of a dataset.
#[derive(Debug, Clone)]
pub struct MiniBatch<'a> {
    pub data: &'a Dataset,
    pub indices: Vec<usize>,
}

impl MiniBatch<'_> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.indices
            .iter()
            .map(move |&i| (self.data.features(i), self.data.label(i)))
    }
}
