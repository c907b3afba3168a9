//! Forecast error metrics: MAE and MAPE with an explicit zero-target policy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default floor below which a target's magnitude is treated as zero and the
/// pair is excluded from MAPE (division by a near-zero actual would dominate
/// the metric).
pub const DEFAULT_ZERO_FLOOR_KWH: f64 = 1e-9;

/// Summary of a comparison between actual and predicted series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean absolute error in kWh, over every compared pair.
    pub mae: f64,
    /// Mean absolute percentage error in percent, over non-excluded pairs.
    pub mape: f64,
    /// Pairs that entered the MAPE mean.
    pub n_points: usize,
    /// Pairs excluded from MAPE because |actual| fell at or below the floor.
    pub n_excluded: usize,
}

/// Mean absolute error: (1/n) Σ |aᵢ − pᵢ|.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pairs(actual, predicted)?;
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p).abs())
        .sum();
    Ok(sum / actual.len() as f64)
}

/// Mean absolute percentage error: (100/n) Σ |aᵢ − pᵢ| / |aᵢ|, skipping pairs
/// whose |aᵢ| ≤ `zero_floor`. Returns the percentage and how many pairs were
/// excluded.
pub fn mape(actual: &[f64], predicted: &[f64], zero_floor: f64) -> Result<(f64, usize)> {
    check_pairs(actual, predicted)?;
    if zero_floor < 0.0 {
        return Err(Error::Contract("zero_floor must be >= 0".into()));
    }
    let mut sum = 0.0;
    let mut kept = 0usize;
    for (a, p) in actual.iter().zip(predicted) {
        if a.abs() <= zero_floor {
            continue;
        }
        sum += 100.0 * (a - p).abs() / a.abs();
        kept += 1;
    }
    if kept == 0 {
        return Err(Error::UndefinedMetric(format!(
            "all {} targets at or below the zero floor {}",
            actual.len(),
            zero_floor
        )));
    }
    Ok((sum / kept as f64, actual.len() - kept))
}

/// Compute both metrics with the default zero floor.
pub fn report(actual: &[f64], predicted: &[f64]) -> Result<MetricReport> {
    let mae = mae(actual, predicted)?;
    let (mape, n_excluded) = mape(actual, predicted, DEFAULT_ZERO_FLOOR_KWH)?;
    Ok(MetricReport {
        mae,
        mape,
        n_points: actual.len() - n_excluded,
        n_excluded,
    })
}

fn check_pairs(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::Contract(format!(
            "length mismatch: {} actual vs {} predicted",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Contract("empty metric input".into()));
    }
    Ok(())
}
