//! Autoregressive horizon forecasting from a trained checkpoint.
//!
//! Forecasting always starts at the first index after the checkpoint's
//! training range. The window is seeded from measured history; every
//! prediction is normalized and pushed into the window for the next step,
//! so errors compound with horizon length (which is the phenomenon the
//! horizon sweep measures). Where the series still has measured values the
//! result carries them for metric computation; past the end of the series
//! predictions are produced without metrics.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::features::{DatasetBuilder, InputLayout};
use crate::ingest::MeasurementSeries;
use crate::metrics::{self, MetricReport};
use crate::model::LstmState;

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    /// Series index of the first forecast target.
    pub start_index: usize,
    pub timestamps: Vec<NaiveDateTime>,
    pub predicted_kwh: Vec<f64>,
    /// Measured values where the series covers the horizon.
    pub actual_kwh: Vec<Option<f64>>,
    /// Metrics over the covered overlap; `None` when the horizon lies
    /// entirely past the series.
    pub report: Option<MetricReport>,
}

/// One row of a horizon sweep, shaped like the metrics JSON it is written
/// out as.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub horizon_half_hours: usize,
    pub mae_kwh: f64,
    pub mape_pct: f64,
    pub excluded_zero_targets: usize,
}

/// Forecast `horizon` half hours ahead, starting right after the
/// checkpoint's training range.
pub fn forecast(
    checkpoint: &Checkpoint,
    series: &MeasurementSeries,
    horizon: usize,
) -> Result<ForecastResult> {
    if horizon == 0 {
        return Err(Error::Config("forecast horizon must be at least 1".into()));
    }
    let config = &checkpoint.config;
    let start = config.split.train_start + config.split.train_len;
    if start > series.len() {
        return Err(Error::Bounds(format!(
            "forecasting starts at index {start} but the series has only {} points",
            series.len()
        )));
    }
    let mut data = DatasetBuilder::new(
        series,
        config.schema,
        config.input_mode,
        &checkpoint.normalizer,
    )?;
    let norm = checkpoint.normalizer.clone();

    let mut state = match config.input_mode {
        InputLayout::Flat => checkpoint.state.clone(),
        InputLayout::Sequence => LstmState::zeros(&checkpoint.model),
    };
    let mut timestamps = Vec::with_capacity(horizon);
    let mut predicted_kwh = Vec::with_capacity(horizon);
    let mut actual_kwh = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let t = start + k;
        let input = data.input_at(t)?;
        let (preds, new_state) = checkpoint.model.predict(&input.steps(), &state)?;
        let p = *preds.last().unwrap();
        if config.input_mode == InputLayout::Flat {
            state = new_state;
        }
        data.set_normalized_value(t, p);
        timestamps.push(data.timestamp(t));
        predicted_kwh.push(norm.denormalize_target(p));
        actual_kwh.push(series.values().get(t).copied());
    }

    let report = overlap_report(&actual_kwh, &predicted_kwh)?;
    Ok(ForecastResult {
        start_index: start,
        timestamps,
        predicted_kwh,
        actual_kwh,
        report,
    })
}

fn overlap_report(actual: &[Option<f64>], predicted: &[f64]) -> Result<Option<MetricReport>> {
    let mut a = Vec::new();
    let mut p = Vec::new();
    for (act, pred) in actual.iter().zip(predicted) {
        if let Some(act) = act {
            a.push(*act);
            p.push(*pred);
        }
    }
    if a.is_empty() {
        return Ok(None);
    }
    metrics::report(&a, &p).map(Some)
}

/// Metrics for several horizons from one trajectory: the longest horizon
/// is forecast once and the shorter ones are scored on its prefixes (the
/// feedback trajectory of a shorter forecast is identical, so nothing is
/// lost). Returns the per-horizon metrics in input order plus the full
/// longest-horizon result.
pub fn horizon_sweep(
    checkpoint: &Checkpoint,
    series: &MeasurementSeries,
    horizons: &[usize],
) -> Result<(Vec<HorizonMetrics>, ForecastResult)> {
    if horizons.is_empty() {
        return Err(Error::Contract("horizon sweep needs at least one horizon".into()));
    }
    let longest = *horizons.iter().max().unwrap();
    let full = forecast(checkpoint, series, longest)?;
    let mut rows = Vec::with_capacity(horizons.len());
    for &h in horizons {
        if h == 0 {
            return Err(Error::Config("forecast horizon must be at least 1".into()));
        }
        let report = overlap_report(&full.actual_kwh[..h], &full.predicted_kwh[..h])?
            .ok_or_else(|| {
                Error::UndefinedMetric(format!(
                    "horizon {h} lies entirely past the measured series"
                ))
            })?;
        rows.push(HorizonMetrics {
            horizon_half_hours: h,
            mae_kwh: report.mae,
            mape_pct: report.mape,
            excluded_zero_targets: report.n_excluded,
        });
    }
    Ok((rows, full))
}
