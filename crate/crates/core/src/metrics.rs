//! Classification accounting shared by the loss scheduler and the harness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K×K` counts with rows indexed by true class and columns by prediction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_predictions(n_classes: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::shape(
                "confusion",
                format!("{} labels vs {} predictions", truth.len(), predicted.len()),
            ));
        }
        let mut m = Self::new(n_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.record(t, p)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.n_classes || predicted >= self.n_classes {
            return Err(Error::invalid(
                "confusion",
                format!("class ({truth}, {predicted}) out of range for {} classes", self.n_classes),
            ));
        }
        self.counts[truth * self.n_classes + predicted] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.n_classes, other.n_classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[usize]> {
        self.counts.chunks(self.n_classes)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.n_classes).map(|i| self.get(i, i)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    /// Trials per true class.
    pub fn row_sums(&self) -> Vec<usize> {
        self.rows().map(|r| r.iter().sum()).collect()
    }

    /// Predictions per class.
    pub fn column_sums(&self) -> Vec<usize> {
        (0..self.n_classes)
            .map(|p| (0..self.n_classes).map(|t| self.get(t, p)).sum())
            .collect()
    }

    /// Per-class recall; a class with no trials reports 0.
    pub fn recall(&self) -> Vec<f64> {
        self.rows()
            .enumerate()
            .map(|(i, row)| match row.iter().sum::<usize>() {
                0 => 0.0,
                n => row[i] as f64 / n as f64,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accounting() {
        let m = ConfusionMatrix::from_predictions(3, &[0, 0, 1, 2, 2], &[0, 1, 1, 2, 0]).unwrap();
        assert_eq!(m.total(), 5);
        assert_eq!(m.trace(), 3);
        assert_eq!(m.row_sums(), [2, 1, 2]);
        assert_eq!(m.column_sums(), [2, 2, 1]);
        assert_eq!(m.recall(), [0.5, 1.0, 0.5]);
        assert!(ConfusionMatrix::from_predictions(3, &[3], &[0]).is_err());
    }
}
