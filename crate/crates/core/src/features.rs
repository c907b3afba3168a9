//! Calendar feature extraction, min-max normalization and example
//! construction.
//!
//! Three input schemas are supported: two calendar-only vectors (4 and 7
//! features) and a windowed schema that appends the previous `n` readings
//! to six calendar features of the target slot. Windowed inputs can be laid
//! out flat (one wide timestep) or as a sequence of `n` seven-wide
//! timesteps, one per history slot.
//!
//! At full scale the windowed examples are far too large to materialize
//! (100k examples x several thousand values each), so [`DatasetBuilder`]
//! assembles any example on demand from cached normalized columns. It also
//! lets callers overwrite values past the training range, which is how the
//! autoregressive feedback loop feeds predictions back in.

use std::ops::Range;

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::MeasurementSeries;

/// Raw calendar attributes of one half-hour slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalendarFeatures {
    pub year: f64,
    /// 1..=12
    pub month: f64,
    /// 1..=31
    pub day_of_month: f64,
    /// Half-hour index within the day, 0..=47.
    pub half_hour: f64,
    /// Monday = 0 .. Sunday = 6.
    pub day_of_week: f64,
    /// 1..=366
    pub day_of_year: f64,
    /// ISO-8601 week number, 1..=53.
    pub week: f64,
}

pub fn calendar_of(ts: NaiveDateTime) -> CalendarFeatures {
    let date = ts.date();
    CalendarFeatures {
        year: date.year() as f64,
        month: date.month() as f64,
        day_of_month: date.day() as f64,
        half_hour: (2 * ts.hour() + u32::from(ts.minute() >= 30)) as f64,
        day_of_week: date.weekday().num_days_from_monday() as f64,
        day_of_year: date.ordinal() as f64,
        week: date.iso_week().week() as f64,
    }
}

/// Input schema: which features make up one example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSchema {
    /// `[year, month, day_of_month, half_hour]`
    Calendar4,
    /// `[year, month, day_of_month, half_hour, day_of_week, day_of_year, week]`
    Calendar7,
    /// `[half_hour, day_of_month, day_of_week, week, day_of_year, year]`
    /// followed by the previous `n` readings, oldest first.
    Windowed(usize),
}

impl FeatureSchema {
    /// History window length; zero for the calendar-only schemas.
    pub fn window(&self) -> usize {
        match self {
            FeatureSchema::Windowed(n) => *n,
            _ => 0,
        }
    }

    pub fn n_calendar(&self) -> usize {
        match self {
            FeatureSchema::Calendar4 => 4,
            FeatureSchema::Calendar7 => 7,
            FeatureSchema::Windowed(_) => 6,
        }
    }

    /// Width of the example when laid out as a single flat vector.
    pub fn flat_width(&self) -> usize {
        self.n_calendar() + self.window()
    }

    /// Calendar features of `c` in this schema's order.
    pub fn calendar_raw(&self, c: &CalendarFeatures) -> Vec<f64> {
        match self {
            FeatureSchema::Calendar4 => vec![c.year, c.month, c.day_of_month, c.half_hour],
            FeatureSchema::Calendar7 => vec![
                c.year,
                c.month,
                c.day_of_month,
                c.half_hour,
                c.day_of_week,
                c.day_of_year,
                c.week,
            ],
            FeatureSchema::Windowed(_) => vec![
                c.half_hour,
                c.day_of_month,
                c.day_of_week,
                c.week,
                c.day_of_year,
                c.year,
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let FeatureSchema::Windowed(0) = self {
            return Err(Error::Config("windowed schema needs a window of at least 1".into()));
        }
        Ok(())
    }
}

/// How an example is presented to the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputLayout {
    /// The whole example is one timestep.
    Flat,
    /// Windowed examples become `n` timesteps of
    /// `[reading, half_hour, day_of_month, day_of_week, week, day_of_year,
    /// year]`, each slot described by its own calendar. Calendar-only
    /// schemas still produce a single timestep.
    #[default]
    Sequence,
}

/// Width of one network timestep under this schema and layout.
pub fn step_width(schema: FeatureSchema, layout: InputLayout) -> usize {
    match (schema, layout) {
        (FeatureSchema::Windowed(_), InputLayout::Sequence) => 7,
        _ => schema.flat_width(),
    }
}

/// Timesteps per example.
pub fn n_steps(schema: FeatureSchema, layout: InputLayout) -> usize {
    match (schema, layout) {
        (FeatureSchema::Windowed(n), InputLayout::Sequence) => n,
        _ => 1,
    }
}

/// Min and max of one feature channel over the training range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub min: f64,
    pub max: f64,
}

impl ChannelStats {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut any = false;
        for v in values {
            if !v.is_finite() {
                return Err(Error::Validation(format!("non-finite value {v} while fitting stats")));
            }
            min = min.min(v);
            max = max.max(v);
            any = true;
        }
        if !any {
            return Err(Error::Contract("cannot fit stats on an empty range".into()));
        }
        Ok(ChannelStats { min, max })
    }

    /// Map into [0, 1] on the fitted range; a constant channel maps to 0.
    /// Values outside the fitted range land outside [0, 1] on purpose.
    pub fn normalize(&self, x: f64) -> f64 {
        if self.max > self.min {
            (x - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        if self.max > self.min {
            self.min + y * (self.max - self.min)
        } else {
            self.min
        }
    }
}

/// Per-channel normalization statistics, fitted on the training range only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub target: ChannelStats,
    /// One entry per calendar feature, in schema order.
    pub calendar: Vec<ChannelStats>,
}

impl Normalizer {
    pub fn normalize_target(&self, x: f64) -> f64 {
        self.target.normalize(x)
    }

    pub fn denormalize_target(&self, y: f64) -> f64 {
        self.target.denormalize(y)
    }
}

/// Contiguous train/validation split over target indices. Training targets
/// are `[train_start, train_start + train_len)`; everything after is
/// validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_start: usize,
    pub train_len: usize,
}

impl SplitSpec {
    pub fn validate(&self, total: usize, window: usize) -> Result<()> {
        if self.train_len == 0 {
            return Err(Error::Config("train_len must be at least 1".into()));
        }
        if self.train_start < window {
            return Err(Error::Config(format!(
                "train_start {} leaves no room for a window of {}",
                self.train_start, window
            )));
        }
        let end = self.train_start.checked_add(self.train_len);
        match end {
            Some(end) if end <= total => Ok(()),
            _ => Err(Error::Config(format!(
                "training range {}..{} exceeds the {} available points",
                self.train_start,
                self.train_start as u128 + self.train_len as u128,
                total
            ))),
        }
    }

    pub fn train_targets(&self) -> Range<usize> {
        self.train_start..self.train_start + self.train_len
    }

    pub fn val_targets(&self, total: usize) -> Range<usize> {
        (self.train_start + self.train_len).min(total)..total
    }
}

/// Fit the normalizer on the training range: the target channel over the
/// raw readings in `[train_start, train_start + train_len)`, each calendar
/// channel over the training targets' timestamps.
pub fn fit_normalizer(
    series: &MeasurementSeries,
    schema: FeatureSchema,
    split: &SplitSpec,
) -> Result<Normalizer> {
    schema.validate()?;
    split.validate(series.len(), schema.window())?;
    let range = split.train_targets();
    let target = ChannelStats::fit(series.values()[range.clone()].iter().copied())?;

    let n_cal = schema.n_calendar();
    let mut mins = vec![f64::INFINITY; n_cal];
    let mut maxs = vec![f64::NEG_INFINITY; n_cal];
    for t in range {
        let raw = schema.calendar_raw(&calendar_of(series.timestamp(t)));
        for (i, v) in raw.iter().enumerate() {
            mins[i] = mins[i].min(*v);
            maxs[i] = maxs[i].max(*v);
        }
    }
    let calendar = mins
        .into_iter()
        .zip(maxs)
        .map(|(min, max)| ChannelStats { min, max })
        .collect();
    Ok(Normalizer { target, calendar })
}

/// One normalized training or validation example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: ExampleInput,
    /// Normalized target reading.
    pub target: f64,
    /// Index of the target slot in the series.
    pub target_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExampleInput {
    Flat(Vec<f64>),
    /// Outer: timesteps, oldest first. Inner: features of one timestep.
    Sequence(Vec<Vec<f64>>),
}

impl ExampleInput {
    /// Borrow as a list of timestep slices, the shape the network consumes.
    pub fn steps(&self) -> Vec<&[f64]> {
        match self {
            ExampleInput::Flat(v) => vec![v.as_slice()],
            ExampleInput::Sequence(steps) => steps.iter().map(|s| s.as_slice()).collect(),
        }
    }
}

/// Assembles normalized examples on demand.
///
/// Holds the normalized reading column (extendable past the end of the
/// series for forecasting) and a cache of normalized calendar features for
/// the in-series indices; calendar features past the end are computed from
/// the timestamp grid as needed.
#[derive(Debug, Clone)]
pub struct DatasetBuilder {
    schema: FeatureSchema,
    layout: InputLayout,
    normalizer: Normalizer,
    start: NaiveDateTime,
    /// Normalized readings; indices past the original series hold NaN until
    /// a prediction is fed back.
    values: Vec<f64>,
    series_len: usize,
    /// Flat cache of normalized calendar features, `n_calendar` per index.
    cal_cache: Vec<f64>,
}

impl DatasetBuilder {
    pub fn new(
        series: &MeasurementSeries,
        schema: FeatureSchema,
        layout: InputLayout,
        normalizer: &Normalizer,
    ) -> Result<Self> {
        schema.validate()?;
        if normalizer.calendar.len() != schema.n_calendar() {
            return Err(Error::Contract(format!(
                "normalizer has {} calendar channels, schema needs {}",
                normalizer.calendar.len(),
                schema.n_calendar()
            )));
        }
        if series.len() <= schema.window() {
            return Err(Error::Config(format!(
                "series of {} points cannot feed a window of {}",
                series.len(),
                schema.window()
            )));
        }
        let values = series
            .values()
            .iter()
            .map(|v| normalizer.normalize_target(*v))
            .collect();
        let n_cal = schema.n_calendar();
        let mut cal_cache = Vec::with_capacity(series.len() * n_cal);
        for t in 0..series.len() {
            let raw = schema.calendar_raw(&calendar_of(series.timestamp(t)));
            for (i, v) in raw.iter().enumerate() {
                cal_cache.push(normalizer.calendar[i].normalize(*v));
            }
        }
        Ok(DatasetBuilder {
            schema,
            layout,
            normalizer: normalizer.clone(),
            start: series.start(),
            values,
            series_len: series.len(),
            cal_cache,
        })
    }

    pub fn schema(&self) -> FeatureSchema {
        self.schema
    }

    pub fn layout(&self) -> InputLayout {
        self.layout
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    /// Length of the underlying series (targets with a real reading).
    pub fn series_len(&self) -> usize {
        self.series_len
    }

    /// Smallest target index with a full history window.
    pub fn min_target_index(&self) -> usize {
        self.schema.window()
    }

    pub fn timestamp(&self, t: usize) -> NaiveDateTime {
        self.start + chrono::Duration::minutes(30 * t as i64)
    }

    /// Normalized reading at `t` (observed or fed back).
    pub fn normalized_value(&self, t: usize) -> Result<f64> {
        match self.values.get(t) {
            Some(v) if !v.is_nan() => Ok(*v),
            Some(_) => Err(Error::Contract(format!(
                "reading at index {t} was never observed or fed back"
            ))),
            None => Err(Error::Bounds(format!(
                "index {t} beyond the prepared range {}",
                self.values.len()
            ))),
        }
    }

    /// Overwrite the normalized reading at `t`, extending the column if
    /// needed. This is the feedback path: validation and forecasting push
    /// each prediction here before building the next input.
    pub fn set_normalized_value(&mut self, t: usize, v: f64) {
        if t >= self.values.len() {
            self.values.resize(t + 1, f64::NAN);
        }
        self.values[t] = v;
    }

    fn push_calendar(&self, t: usize, out: &mut Vec<f64>) {
        let n_cal = self.schema.n_calendar();
        if t < self.series_len {
            out.extend_from_slice(&self.cal_cache[t * n_cal..(t + 1) * n_cal]);
        } else {
            let raw = self.schema.calendar_raw(&calendar_of(self.timestamp(t)));
            for (i, v) in raw.iter().enumerate() {
                out.push(self.normalizer.calendar[i].normalize(*v));
            }
        }
    }

    /// Build the normalized input for target index `t`. The window covers
    /// `[t - n, t)`; the target reading itself is never part of the input.
    pub fn input_at(&self, t: usize) -> Result<ExampleInput> {
        let n = self.schema.window();
        if t < n {
            return Err(Error::Bounds(format!(
                "target {t} has no full window of {n} behind it"
            )));
        }
        match (self.schema, self.layout) {
            (FeatureSchema::Windowed(n), InputLayout::Sequence) => {
                let mut steps = Vec::with_capacity(n);
                for u in t - n..t {
                    let mut step = Vec::with_capacity(7);
                    step.push(self.normalized_value(u)?);
                    self.push_calendar(u, &mut step);
                    steps.push(step);
                }
                Ok(ExampleInput::Sequence(steps))
            }
            (FeatureSchema::Windowed(n), InputLayout::Flat) => {
                let mut flat = Vec::with_capacity(self.schema.flat_width());
                self.push_calendar(t, &mut flat);
                for u in t - n..t {
                    flat.push(self.normalized_value(u)?);
                }
                Ok(ExampleInput::Flat(flat))
            }
            _ => {
                let mut flat = Vec::with_capacity(self.schema.flat_width());
                self.push_calendar(t, &mut flat);
                Ok(ExampleInput::Flat(flat))
            }
        }
    }

    /// Full example (input plus observed target) for target index `t`.
    pub fn example_at(&self, t: usize) -> Result<Example> {
        if t >= self.series_len {
            return Err(Error::Bounds(format!(
                "target {t} beyond the observed series of {}",
                self.series_len
            )));
        }
        Ok(Example {
            input: self.input_at(t)?,
            target: self.values[t],
            target_index: t,
        })
    }
}

/// Materialize the examples for a range of target indices. Fine for
/// calendar schemas and small windows; windowed examples at full scale
/// should be built on demand through [`DatasetBuilder`] instead.
pub fn build_examples(builder: &DatasetBuilder, targets: Range<usize>) -> Result<Vec<Example>> {
    targets.map(|t| builder.example_at(t)).collect()
}

/// Fit a normalizer on the training range and materialize both example
/// sets.
pub fn split_dataset(
    series: &MeasurementSeries,
    schema: FeatureSchema,
    layout: InputLayout,
    normalizer: &Normalizer,
    split: &SplitSpec,
) -> Result<(Vec<Example>, Vec<Example>)> {
    split.validate(series.len(), schema.window())?;
    let builder = DatasetBuilder::new(series, schema, layout, normalizer)?;
    let train = build_examples(&builder, split.train_targets())?;
    let val = build_examples(&builder, split.val_targets(series.len()))?;
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").unwrap()
    }

    fn series_from(start: &str, values: Vec<f64>) -> MeasurementSeries {
        let n = values.len();
        MeasurementSeries::new(ts(start), values, vec![false; n]).unwrap()
    }

    #[test]
    fn calendar_of_known_timestamp() {
        // 2012-03-07 is a Wednesday, day 67 of a leap year, ISO week 10.
        let c = calendar_of(ts("2012-03-07T14:30:00"));
        assert_eq!(c.year, 2012.0);
        assert_eq!(c.month, 3.0);
        assert_eq!(c.day_of_month, 7.0);
        assert_eq!(c.half_hour, 29.0);
        assert_eq!(c.day_of_week, 2.0);
        assert_eq!(c.day_of_year, 67.0);
        assert_eq!(c.week, 10.0);
    }

    #[test]
    fn half_hour_covers_the_day() {
        assert_eq!(calendar_of(ts("2012-01-02T00:00:00")).half_hour, 0.0);
        assert_eq!(calendar_of(ts("2012-01-02T00:30:00")).half_hour, 1.0);
        assert_eq!(calendar_of(ts("2012-01-02T12:00:00")).half_hour, 24.0);
        assert_eq!(calendar_of(ts("2012-01-02T23:30:00")).half_hour, 47.0);
    }

    #[test]
    fn iso_week_edge_cases() {
        // Pinned against the ISO-8601 tables: 2005-01-01 falls in week 53
        // of 2004; 2012-01-01 (a Sunday) in week 52 of 2011; 2015-12-28 is
        // the Monday of week 53.
        assert_eq!(calendar_of(ts("2005-01-01T00:00:00")).week, 53.0);
        assert_eq!(calendar_of(ts("2012-01-01T00:00:00")).week, 52.0);
        assert_eq!(calendar_of(ts("2012-01-02T00:00:00")).week, 1.0);
        assert_eq!(calendar_of(ts("2015-12-28T00:00:00")).week, 53.0);
    }

    /// Independent civil-calendar oracle (days-since-epoch arithmetic,
    /// no chrono) cross-checking year/month/day/weekday/ordinal.
    mod civil_oracle {
        pub fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
            let y = if m <= 2 { y - 1 } else { y };
            let era = if y >= 0 { y } else { y - 399 } / 400;
            let yoe = (y - era * 400) as i64;
            let mp = ((m + 9) % 12) as i64;
            let doy = (153 * mp + 2) / 5 + d as i64 - 1;
            let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
            era * 146097 + doe - 719468
        }

        pub fn civil_from_days(z: i64) -> (i64, u32, u32) {
            let z = z + 719468;
            let era = if z >= 0 { z } else { z - 146096 } / 146097;
            let doe = z - era * 146097;
            let yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
            let y = yoe + era * 400;
            let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
            let mp = (5 * doy + 2) / 153;
            let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
            let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
            (if m <= 2 { y + 1 } else { y }, m, d)
        }

        pub fn weekday_monday0(z: i64) -> u32 {
            ((z + 3).rem_euclid(7)) as u32 // 1970-01-01 was a Thursday
        }

        pub fn is_leap(y: i64) -> bool {
            y % 4 == 0 && (y % 100 != 0 || y % 400 == 0)
        }

        pub fn ordinal(y: i64, m: u32, d: u32) -> u32 {
            const CUM: [u32; 12] = [0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334];
            CUM[(m - 1) as usize] + d + u32::from(m > 2 && is_leap(y))
        }
    }

    #[test]
    fn calendar_matches_the_civil_oracle() {
        use civil_oracle::*;
        // Sweep a few thousand timestamps across leap boundaries.
        let z0 = days_from_civil(2011, 12, 1);
        for k in 0..2000 {
            let z = z0 + k;
            let (y, m, d) = civil_from_days(z);
            let date = NaiveDate::from_ymd_opt(y as i32, m, d).unwrap();
            let c = calendar_of(date.and_hms_opt(13, 30, 0).unwrap());
            assert_eq!(c.year, y as f64);
            assert_eq!(c.month, m as f64);
            assert_eq!(c.day_of_month, d as f64);
            assert_eq!(c.day_of_week, weekday_monday0(z) as f64);
            assert_eq!(c.day_of_year, ordinal(y, m, d) as f64);
        }
    }

    #[test]
    fn schema_widths() {
        assert_eq!(FeatureSchema::Calendar4.flat_width(), 4);
        assert_eq!(FeatureSchema::Calendar7.flat_width(), 7);
        assert_eq!(FeatureSchema::Windowed(5).flat_width(), 11);
        assert_eq!(step_width(FeatureSchema::Windowed(5), InputLayout::Sequence), 7);
        assert_eq!(step_width(FeatureSchema::Windowed(5), InputLayout::Flat), 11);
        assert_eq!(n_steps(FeatureSchema::Windowed(5), InputLayout::Sequence), 5);
        assert_eq!(n_steps(FeatureSchema::Calendar7, InputLayout::Sequence), 1);
    }

    #[test]
    fn channel_stats_normalize_and_back() {
        let s = ChannelStats { min: 10.0, max: 30.0 };
        assert_eq!(s.normalize(10.0), 0.0);
        assert_eq!(s.normalize(30.0), 1.0);
        assert_eq!(s.normalize(20.0), 0.5);
        assert_eq!(s.normalize(40.0), 1.5); // out of range stays linear
        assert_eq!(s.denormalize(s.normalize(17.0)), 17.0);
    }

    #[test]
    fn constant_channel_normalizes_to_zero() {
        let s = ChannelStats { min: 5.0, max: 5.0 };
        assert_eq!(s.normalize(5.0), 0.0);
        assert_eq!(s.normalize(9.0), 0.0);
        assert_eq!(s.denormalize(0.7), 5.0);
    }

    fn small_setup(n_points: usize, window: usize) -> (MeasurementSeries, Normalizer, SplitSpec) {
        let values: Vec<f64> = (0..n_points).map(|i| 100.0 + (i % 48) as f64).collect();
        let series = series_from("2012-01-02T00:00:00", values);
        let split = SplitSpec {
            train_start: window.max(2),
            train_len: n_points - window.max(2) - 10,
        };
        let schema = if window > 0 {
            FeatureSchema::Windowed(window)
        } else {
            FeatureSchema::Calendar4
        };
        let norm = fit_normalizer(&series, schema, &split).unwrap();
        (series, norm, split)
    }

    #[test]
    fn normalizer_uses_training_range_only() {
        let mut values: Vec<f64> = vec![50.0; 100];
        values[95] = 1000.0; // validation-only spike must not affect stats
        for (i, v) in values.iter_mut().enumerate().take(90) {
            *v = 50.0 + i as f64;
        }
        let series = series_from("2012-01-02T00:00:00", values);
        let split = SplitSpec { train_start: 2, train_len: 88 };
        let norm = fit_normalizer(&series, FeatureSchema::Windowed(2), &split).unwrap();
        assert_eq!(norm.target.min, 52.0);
        assert_eq!(norm.target.max, 139.0);
    }

    #[test]
    fn windowed_flat_layout_and_order() {
        let (series, norm, _) = small_setup(60, 3);
        let b = DatasetBuilder::new(&series, FeatureSchema::Windowed(3), InputLayout::Flat, &norm)
            .unwrap();
        let ex = b.example_at(10).unwrap();
        match &ex.input {
            ExampleInput::Flat(v) => {
                assert_eq!(v.len(), 9);
                // Six calendar features of the target slot, then the three
                // readings oldest first.
                for k in 0..3 {
                    assert_eq!(v[6 + k], b.normalized_value(7 + k).unwrap());
                }
            }
            other => panic!("expected flat input, got {other:?}"),
        }
        assert_eq!(ex.target, b.normalized_value(10).unwrap());
        assert_eq!(ex.target_index, 10);
    }

    #[test]
    fn windowed_sequence_steps_carry_their_own_calendar() {
        let (series, norm, _) = small_setup(60, 2);
        let b = DatasetBuilder::new(&series, FeatureSchema::Windowed(2), InputLayout::Sequence, &norm)
            .unwrap();
        let ex = b.example_at(50).unwrap();
        match &ex.input {
            ExampleInput::Sequence(steps) => {
                assert_eq!(steps.len(), 2);
                assert_eq!(steps[0].len(), 7);
                assert_eq!(steps[0][0], b.normalized_value(48).unwrap());
                assert_eq!(steps[1][0], b.normalized_value(49).unwrap());
                // Feature 1 is half_hour of the step's own slot.
                let c48 = calendar_of(series.timestamp(48));
                assert_eq!(steps[0][1], norm.calendar[0].normalize(c48.half_hour));
            }
            other => panic!("expected sequence input, got {other:?}"),
        }
    }

    #[test]
    fn window_shifts_by_one_between_adjacent_targets() {
        let (series, norm, _) = small_setup(80, 4);
        let b = DatasetBuilder::new(&series, FeatureSchema::Windowed(4), InputLayout::Flat, &norm)
            .unwrap();
        let (a, c) = (b.example_at(20).unwrap(), b.example_at(21).unwrap());
        let (va, vc) = match (&a.input, &c.input) {
            (ExampleInput::Flat(x), ExampleInput::Flat(y)) => (x, y),
            _ => unreachable!(),
        };
        for k in 0..3 {
            assert_eq!(vc[6 + k], va[6 + k + 1]);
        }
        assert_eq!(vc[9], b.normalized_value(20).unwrap());
    }

    #[test]
    fn target_never_leaks_into_the_input() {
        let values: Vec<f64> = (0..60).map(|i| 10.0 + i as f64).collect();
        let mut spiked = values.clone();
        spiked[30] = 9.0; // keep inside the fitted range
        let s1 = series_from("2012-01-02T00:00:00", values);
        let s2 = series_from("2012-01-02T00:00:00", spiked);
        let split = SplitSpec { train_start: 4, train_len: 50 };
        let norm = fit_normalizer(&s1, FeatureSchema::Windowed(4), &split).unwrap();
        for layout in [InputLayout::Flat, InputLayout::Sequence] {
            let b1 = DatasetBuilder::new(&s1, FeatureSchema::Windowed(4), layout, &norm).unwrap();
            let b2 = DatasetBuilder::new(&s2, FeatureSchema::Windowed(4), layout, &norm).unwrap();
            assert_eq!(
                b1.input_at(30).unwrap(),
                b2.input_at(30).unwrap(),
                "changing the target reading must not change its input"
            );
            assert_ne!(b1.input_at(31).unwrap(), b2.input_at(31).unwrap());
        }
    }

    #[test]
    fn calendar4_examples() {
        let (series, norm, split) = small_setup(60, 0);
        let (train, val) = split_dataset(
            &series,
            FeatureSchema::Calendar4,
            InputLayout::Flat,
            &norm,
            &split,
        )
        .unwrap();
        assert_eq!(train.len(), split.train_len);
        assert_eq!(val.len(), 10);
        match &train[0].input {
            ExampleInput::Flat(v) => assert_eq!(v.len(), 4),
            _ => unreachable!(),
        }
        // Year is constant over this series, so it must normalize to 0.
        match &val[0].input {
            ExampleInput::Flat(v) => assert_eq!(v[0], 0.0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn split_bounds_are_enforced() {
        let series = series_from("2012-01-02T00:00:00", vec![1.0; 50]);
        let bad = SplitSpec { train_start: 2, train_len: 60 };
        assert!(bad.validate(series.len(), 0).is_err());
        let no_room = SplitSpec { train_start: 3, train_len: 10 };
        assert!(no_room.validate(series.len(), 4).is_err());
        let ok = SplitSpec { train_start: 4, train_len: 10 };
        assert!(ok.validate(series.len(), 4).is_ok());
        assert_eq!(ok.val_targets(50), 14..50);
    }

    #[test]
    fn feedback_extends_past_the_series() {
        let (series, norm, _) = small_setup(60, 3);
        let mut b =
            DatasetBuilder::new(&series, FeatureSchema::Windowed(3), InputLayout::Flat, &norm)
                .unwrap();
        // Input for one step past the end needs the last three observed
        // readings only.
        let input = b.input_at(60).unwrap();
        match &input {
            ExampleInput::Flat(v) => assert_eq!(v[8], b.normalized_value(59).unwrap()),
            _ => unreachable!(),
        }
        // Two steps past the end needs index 60, which is unset until fed.
        assert!(b.input_at(61).is_err());
        b.set_normalized_value(60, 0.25);
        let input = b.input_at(61).unwrap();
        match &input {
            ExampleInput::Flat(v) => assert_eq!(v[8], 0.25),
            _ => unreachable!(),
        }
        // Targets past the observed series stay unavailable.
        assert!(b.example_at(60).is_err());
    }

    #[test]
    fn full_scale_split_arithmetic() {
        let split = SplitSpec { train_start: 15000, train_len: 100000 };
        assert!(split.validate(131520, 3840).is_ok());
        assert_eq!(split.val_targets(131520).len(), 16520);
        assert_eq!(split.val_targets(131520).start, 115000);
    }
}
