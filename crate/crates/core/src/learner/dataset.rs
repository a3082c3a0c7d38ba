use crate::{Error, Result};

/// Row-major features in `[0, 1]` with class labels in `[0, classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<u32>,
    num_features: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<u32>, num_features: usize, num_classes: usize) -> Result<Self> {
        if num_features == 0 || num_classes == 0 {
            return Err(Error::invalid("dataset needs at least one feature and one class"));
        }
        if features.len() != labels.len() * num_features {
            return Err(Error::invalid(format!(
                "{} feature values for {} samples of {} features",
                features.len(),
                labels.len(),
                num_features
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y as usize >= num_classes) {
            return Err(Error::invalid(format!("label {bad} outside [0, {num_classes})")));
        }
        if features.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("features must lie in [0, 1]"));
        }
        Ok(Self { features, labels, num_features, num_classes })
    }

    pub fn empty(num_features: usize, num_classes: usize) -> Self {
        Self { features: Vec::new(), labels: Vec::new(), num_features, num_classes }
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

    pub fn sample(&self, i: usize) -> (&[f64], u32) {
        let f = self.num_features;
        (&self.features[i * f..(i + 1) * f], self.labels[i])
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.num_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let (x, y) = self.sample(i);
            features.extend_from_slice(x);
            labels.push(y);
        }
        Dataset { features, labels, num_features: self.num_features, num_classes: self.num_classes }
    }

    /// Concatenation of several datasets with the same shape.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Dataset>) -> Result<Dataset> {
        let mut iter = parts.into_iter();
        let first = iter.next().ok_or(Error::EmptyDataset)?;
        let mut out = first.clone();
        for d in iter {
            if d.num_features != out.num_features || d.num_classes != out.num_classes {
                return Err(Error::invalid("datasets differ in shape"));
            }
            out.features.extend_from_slice(&d.features);
            out.labels.extend_from_slice(&d.labels);
        }
        Ok(out)
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &y in &self.labels {
            h[y as usize] += 1;
        }
        h
    }
}
