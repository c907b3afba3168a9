//! Parsing of the raw day-per-row dataset into a validated half-hourly series.
//!
//! The raw file has one row per day: a date label plus 48 consumption
//! readings (one per half hour). `parse_table` turns the text into a
//! [`RawTable`] without losing information about missing cells, and
//! [`flatten`] lays the table out as a single gap-free [`MeasurementSeries`]
//! under an explicit gap policy.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-hour slots per day.
pub const SLOTS_PER_DAY: usize = 48;

/// Magic header line of the canonical series file.
pub const SERIES_HEADER: &str = "ECFC-SERIES v1";

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// How date labels are written in the raw file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DateFormat {
    /// `YYYY-MM-DD`
    #[default]
    Iso,
    /// `DD/MM/YYYY`
    DayMonthYear,
}

impl DateFormat {
    fn parse(&self, s: &str) -> Option<NaiveDate> {
        let pattern = match self {
            DateFormat::Iso => "%Y-%m-%d",
            DateFormat::DayMonthYear => "%d/%m/%Y",
        };
        NaiveDate::parse_from_str(s.trim(), pattern).ok()
    }
}

/// Column layout of the raw file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableLayout {
    /// Field delimiter, comma by default.
    pub delimiter: u8,
    /// Zero-based index of the date column; the remaining columns are the 48
    /// half-hour readings in slot order.
    pub date_column: usize,
    pub date_format: DateFormat,
    /// Skip the first row as a header.
    pub has_header: bool,
}

impl Default for TableLayout {
    fn default() -> Self {
        TableLayout {
            delimiter: b',',
            date_column: 0,
            date_format: DateFormat::Iso,
            has_header: false,
        }
    }
}

/// One parsed row: a calendar date and its 48 readings, `None` where the
/// cell was blank or non-numeric.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub date: NaiveDate,
    pub values: Vec<Option<f64>>,
}

/// The raw dataset: one row per day, dates strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawTable {
    pub rows: Vec<RawRow>,
}

impl RawTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// How to treat missing cells when flattening.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GapPolicy {
    /// Fail on the first missing cell. The default: silent imputation would
    /// corrupt the error metrics downstream.
    #[default]
    Strict,
    /// Fill each missing cell by linear interpolation within its half-hour
    /// slot across days (the same slot on the nearest present days brackets
    /// the gap). Gaps touching the table edge extend the nearest present
    /// value in the slot.
    LinearInterpolate,
    /// Fill each missing cell with the most recent present reading in
    /// flattened order.
    ForwardFill,
}

/// Contiguous half-hourly series with imputed cells marked.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSeries {
    start: NaiveDateTime,
    values: Vec<f64>,
    gap_mask: Vec<bool>,
}

impl MeasurementSeries {
    /// Build a series directly; validates nonnegativity and mask length.
    pub fn new(start: NaiveDateTime, values: Vec<f64>, gap_mask: Vec<bool>) -> Result<Self> {
        if values.len() != gap_mask.len() {
            return Err(Error::Contract(format!(
                "values/gap_mask length mismatch: {} vs {}",
                values.len(),
                gap_mask.len()
            )));
        }
        if start.second() != 0 || !matches!(start.minute(), 0 | 30) {
            return Err(Error::Contract(format!(
                "series start {start} is not on the half-hour grid"
            )));
        }
        if let Some(i) = values.iter().position(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite or negative reading {} at {}",
                values[i],
                format_timestamp(start + Duration::minutes(30 * i as i64))
            )));
        }
        Ok(MeasurementSeries {
            start,
            values,
            gap_mask,
        })
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn gap_mask(&self) -> &[bool] {
        &self.gap_mask
    }

    pub fn imputed_count(&self) -> usize {
        self.gap_mask.iter().filter(|m| **m).count()
    }

    /// Timestamp of index `i`; valid past the end of the series (the grid
    /// extends indefinitely), which forecasting relies on.
    pub fn timestamp(&self, i: usize) -> NaiveDateTime {
        self.start + Duration::minutes(30 * i as i64)
    }

    /// Write the canonical series file: the magic header, then
    /// `ISO-timestamp,value,imputed_flag` per point.
    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "{SERIES_HEADER}")?;
        for (i, (v, imputed)) in self.values.iter().zip(&self.gap_mask).enumerate() {
            writeln!(
                out,
                "{},{},{}",
                format_timestamp(self.timestamp(i)),
                v,
                u8::from(*imputed)
            )?;
        }
        Ok(())
    }

    pub fn write_to_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Read a canonical series file, validating the header, the 30-minute
    /// cadence and nonnegativity.
    pub fn read_from(reader: impl Read) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Validation("empty series file".into()))??;
        if header.trim() != SERIES_HEADER {
            return Err(Error::Validation(format!(
                "bad series header {header:?}, expected {SERIES_HEADER:?}"
            )));
        }
        let mut start: Option<NaiveDateTime> = None;
        let mut values = Vec::new();
        let mut gap_mask = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = i + 2; // 1-based, after the header
            let mut fields = line.splitn(3, ',');
            let (ts, value, flag) = match (fields.next(), fields.next(), fields.next()) {
                (Some(a), Some(b), Some(c)) => (a, b, c),
                _ => {
                    return Err(Error::Parse {
                        row,
                        message: format!("expected `timestamp,value,imputed_flag`, got {line:?}"),
                    })
                }
            };
            let ts = NaiveDateTime::parse_from_str(ts.trim(), TIMESTAMP_FORMAT).map_err(|e| {
                Error::Parse {
                    row,
                    message: format!("bad timestamp {ts:?}: {e}"),
                }
            })?;
            let value: f64 = value.trim().parse().map_err(|e| Error::Parse {
                row,
                message: format!("bad value {value:?}: {e}"),
            })?;
            let imputed = match flag.trim() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        row,
                        message: format!("bad imputed flag {other:?} (expected 0 or 1)"),
                    })
                }
            };
            let expected = match start {
                None => {
                    start = Some(ts);
                    ts
                }
                Some(s) => s + Duration::minutes(30 * values.len() as i64),
            };
            if ts != expected {
                return Err(Error::Validation(format!(
                    "timestamp {} breaks the 30-minute cadence (expected {})",
                    format_timestamp(ts),
                    format_timestamp(expected)
                )));
            }
            values.push(value);
            gap_mask.push(imputed);
        }
        let start = start.ok_or_else(|| Error::Validation("series file has no points".into()))?;
        MeasurementSeries::new(start, values, gap_mask)
    }

    pub fn read_from_path(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

pub fn format_timestamp(ts: NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

/// Parse delimiter-separated text into a [`RawTable`].
///
/// Non-numeric cells become missing values rather than zeros; structural
/// problems (bad dates, wrong column counts, out-of-order rows) are errors
/// that carry the 1-based file line.
pub fn parse_table(source: impl Read, layout: &TableLayout) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(layout.delimiter)
        .has_headers(layout.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let mut rows: Vec<RawRow> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            row: rows.len() + 1 + usize::from(layout.has_header),
            message: format!("unreadable record: {e}"),
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(rows.len() + 1);
        if record.len() == 1 && record[0].is_empty() {
            continue; // blank line
        }
        if record.len() != SLOTS_PER_DAY + 1 {
            return Err(Error::Arity {
                row: line,
                expected: SLOTS_PER_DAY,
                found: record.len().saturating_sub(1),
            });
        }
        if layout.date_column >= record.len() {
            return Err(Error::Parse {
                row: line,
                message: format!("date column {} out of range", layout.date_column),
            });
        }
        let date_cell = &record[layout.date_column];
        let date = layout.date_format.parse(date_cell).ok_or_else(|| Error::Parse {
            row: line,
            message: format!("malformed date label {date_cell:?}"),
        })?;
        if let Some(prev) = rows.last() {
            if date <= prev.date {
                return Err(Error::Parse {
                    row: line,
                    message: format!(
                        "row dates must be strictly increasing ({} after {})",
                        date, prev.date
                    ),
                });
            }
        }
        let values = record
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != layout.date_column)
            .map(|(_, cell)| cell.parse::<f64>().ok())
            .collect();
        rows.push(RawRow { date, values });
    }
    Ok(RawTable { rows })
}

/// Lay a table out day-major as one contiguous series, handling missing
/// cells and missing whole days per `gap_policy`.
pub fn flatten(table: &RawTable, gap_policy: GapPolicy) -> Result<MeasurementSeries> {
    if table.is_empty() {
        return Err(Error::Contract("cannot flatten an empty table".into()));
    }
    let first = table.rows[0].date;
    let last = table.rows.last().unwrap().date;
    let n_days = (last - first).num_days() as usize + 1;

    // Expand to one Option<f64> row per calendar day; absent days are all
    // missing.
    let mut cells: Vec<Option<f64>> = vec![None; n_days * SLOTS_PER_DAY];
    for row in &table.rows {
        let day = (row.date - first).num_days() as usize;
        cells[day * SLOTS_PER_DAY..(day + 1) * SLOTS_PER_DAY].clone_from_slice(&row.values);
    }

    let start = first.and_time(NaiveTime::from_hms_opt(0, 0, 0).unwrap());
    let stamp = |idx: usize| format_timestamp(start + Duration::minutes(30 * idx as i64));

    for (i, cell) in cells.iter().enumerate() {
        if let Some(v) = cell {
            if *v < 0.0 {
                return Err(Error::Validation(format!(
                    "negative reading {} at {}",
                    v,
                    stamp(i)
                )));
            }
        }
    }

    let mut gap_mask = vec![false; cells.len()];
    let values: Vec<f64> = match gap_policy {
        GapPolicy::Strict => {
            if let Some(i) = cells.iter().position(Option::is_none) {
                return Err(Error::Gap { timestamp: stamp(i) });
            }
            cells.iter().map(|c| c.unwrap()).collect()
        }
        GapPolicy::ForwardFill => {
            let mut out = Vec::with_capacity(cells.len());
            let mut prev: Option<f64> = None;
            for (i, cell) in cells.iter().enumerate() {
                match (cell, prev) {
                    (Some(v), _) => {
                        prev = Some(*v);
                        out.push(*v);
                    }
                    (None, Some(p)) => {
                        gap_mask[i] = true;
                        out.push(p);
                    }
                    (None, None) => return Err(Error::Gap { timestamp: stamp(i) }),
                }
            }
            out
        }
        GapPolicy::LinearInterpolate => {
            let mut out = vec![0.0; cells.len()];
            for slot in 0..SLOTS_PER_DAY {
                interpolate_slot(&cells, slot, n_days, &mut out, &mut gap_mask)
                    .map_err(|idx| Error::Gap { timestamp: stamp(idx) })?;
            }
            out
        }
    };

    MeasurementSeries::new(start, values, gap_mask)
}

/// Fill slot `slot` across all days by linear interpolation between the
/// nearest present days; runs with no bracket on one side copy the nearest
/// present value. Errors with the flat index of the first cell if the slot
/// is missing on every day.
fn interpolate_slot(
    cells: &[Option<f64>],
    slot: usize,
    n_days: usize,
    out: &mut [f64],
    gap_mask: &mut [bool],
) -> std::result::Result<(), usize> {
    let at = |day: usize| cells[day * SLOTS_PER_DAY + slot];
    let present: Vec<usize> = (0..n_days).filter(|d| at(*d).is_some()).collect();
    if present.is_empty() {
        return Err(slot);
    }
    for day in 0..n_days {
        let idx = day * SLOTS_PER_DAY + slot;
        if let Some(v) = at(day) {
            out[idx] = v;
            continue;
        }
        gap_mask[idx] = true;
        let next = present.partition_point(|d| *d < day);
        let right = present.get(next).copied();
        let left = next.checked_sub(1).map(|i| present[i]);
        out[idx] = match (left, right) {
            (Some(l), Some(r)) => {
                let lv = at(l).unwrap();
                let rv = at(r).unwrap();
                let frac = (day - l) as f64 / (r - l) as f64;
                lv + frac * (rv - lv)
            }
            (Some(l), None) => at(l).unwrap(),
            (None, Some(r)) => at(r).unwrap(),
            (None, None) => unreachable!("present is nonempty"),
        };
    }
    Ok(())
}
