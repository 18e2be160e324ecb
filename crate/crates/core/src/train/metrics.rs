use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Micro-averaged F1 over the masked rows. With exactly one predicted and
/// one true class per row, micro precision and recall both equal the
/// fraction of correct rows, so this is plain accuracy.
pub fn micro_f1(pred: &[usize], truth: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut correct = 0usize;
    for &i in mask {
        if i >= pred.len() {
            return Err(Error::DimensionMismatch(format!("mask row {i} of {}", pred.len())));
        }
        correct += usize::from(pred[i] == truth[i]);
    }
    Ok(correct as f64 / mask.len() as f64)
}

/// Mean and sample standard deviation of per-run scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Absent with a single run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::TooFewRuns { got: 0, min: 1 });
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Standard deviation with the `n − 1` denominator.
pub fn sample_std(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::TooFewRuns {
            got: values.len(),
            min: 2,
        });
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Ok((ss / (values.len() - 1) as f64).sqrt())
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    Ok(Summary {
        mean: mean(values)?,
        std: if values.len() >= 2 { Some(sample_std(values)?) } else { None },
    })
}
