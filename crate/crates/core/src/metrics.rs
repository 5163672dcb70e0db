//! Confusion matrices and the two accuracy summaries.
//!
//! WA is overall accuracy (every sample weighs the same, so classes weigh by
//! their size). UA is the mean per-class recall over classes that occur.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Counts with rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::Config(alloc::format!(
                "{} counts for a {classes}x{classes} confusion matrix",
                counts.len()
            )));
        }
        Ok(Self { classes, counts })
    }

    pub fn from_predictions(classes: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        let mut cm = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        for label in [truth, predicted] {
            if label >= self.classes {
                return Err(Error::Label {
                    label,
                    classes: self.classes,
                });
            }
        }
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::Config("confusion matrices of different sizes".into()));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[truth * self.classes..(truth + 1) * self.classes].iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }
}

pub fn weighted_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyConfusion);
    }
    Ok(cm.trace() as f64 / total as f64)
}

pub fn unweighted_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 0..cm.classes() {
        let row = cm.row_sum(c);
        if row > 0 {
            sum += cm.get(c, c) as f64 / row as f64;
            present += 1;
        }
    }
    if present == 0 {
        return Err(Error::EmptyConfusion);
    }
    Ok(sum / present as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let cm = ConfusionMatrix::from_counts(2, vec![2, 1, 0, 1]).unwrap();
        assert_eq!(weighted_accuracy(&cm).unwrap(), 0.75);
        assert!((unweighted_accuracy(&cm).unwrap() - (2.0 / 3.0 + 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_and_off_diagonal() {
        let diag = ConfusionMatrix::from_counts(3, vec![4, 0, 0, 0, 2, 0, 0, 0, 9]).unwrap();
        assert_eq!(weighted_accuracy(&diag).unwrap(), 1.0);
        assert_eq!(unweighted_accuracy(&diag).unwrap(), 1.0);
        let off = ConfusionMatrix::from_counts(2, vec![0, 3, 5, 0]).unwrap();
        assert_eq!(weighted_accuracy(&off).unwrap(), 0.0);
        assert_eq!(unweighted_accuracy(&off).unwrap(), 0.0);
    }

    #[test]
    fn balanced_rows_make_wa_equal_ua() {
        let cm = ConfusionMatrix::from_counts(3, vec![3, 1, 1, 0, 5, 0, 2, 2, 1]).unwrap();
        assert!((weighted_accuracy(&cm).unwrap() - unweighted_accuracy(&cm).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn absent_classes_are_skipped_and_empty_is_error() {
        let cm = ConfusionMatrix::from_predictions(3, &[0, 0, 2], &[0, 1, 2]).unwrap();
        assert!((unweighted_accuracy(&cm).unwrap() - 0.75).abs() < 1e-15);
        let empty = ConfusionMatrix::new(3);
        assert_eq!(weighted_accuracy(&empty), Err(Error::EmptyConfusion));
        assert_eq!(unweighted_accuracy(&empty), Err(Error::EmptyConfusion));
        assert!(ConfusionMatrix::new(2).record(2, 0).is_err());
    }
}
