//! Deterministic synthetic consumption series for exercising the pipeline
//! without the real dataset.
//!
//! Each half-hour slot gets
//!
//! ```text
//! value(t) = base + A * sin(2*pi*slot/48) * (1 + B * weekday_factor) + noise
//! ```
//!
//! where `slot` is the half-hour index within the day, `weekday_factor` is
//! +1 Monday through Friday and -1 on weekends, and `noise` is Gaussian
//! with standard deviation `noise_std_kwh` (Box-Muller over exactly two
//! uniform draws per point, so a longer run with the same seed is a
//! bit-exact extension of a shorter one). Values are clamped at zero.

use chrono::{Datelike, NaiveDate, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::{MeasurementSeries, SLOTS_PER_DAY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub start_date: NaiveDate,
    pub days: usize,
    /// Mean load, kWh per half hour.
    pub base_kwh: f64,
    /// Amplitude of the daily sinusoid.
    pub amplitude_kwh: f64,
    /// Weekly modulation depth: the sinusoid is scaled by 1 + B on
    /// weekdays and 1 - B on weekends.
    pub weekly_modulation: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise_std_kwh: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            start_date: NaiveDate::from_ymd_opt(2012, 1, 2).unwrap(),
            days: 60,
            base_kwh: 40.0,
            amplitude_kwh: 20.0,
            weekly_modulation: 0.2,
            noise_std_kwh: 0.4,
            seed: 7,
        }
    }
}

pub fn generate(config: &SynthConfig) -> Result<MeasurementSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.days * SLOTS_PER_DAY;
    let start_dow = config.start_date.weekday().num_days_from_monday() as usize;
    let tau = 2.0 * std::f64::consts::PI;
    let mut values = Vec::with_capacity(n);
    for t in 0..n {
        let slot = t % SLOTS_PER_DAY;
        let day = t / SLOTS_PER_DAY;
        let weekday_factor = if (start_dow + day) % 7 < 5 { 1.0 } else { -1.0 };
        let daily = (tau * slot as f64 / SLOTS_PER_DAY as f64).sin();
        // Box-Muller; u1 is shifted into (0, 1] so the log is finite.
        let u1 = 1.0 - rng.gen::<f64>();
        let u2 = rng.gen::<f64>();
        let noise = config.noise_std_kwh * (-2.0 * u1.ln()).sqrt() * (tau * u2).cos();
        let v = config.base_kwh
            + config.amplitude_kwh * daily * (1.0 + config.weekly_modulation * weekday_factor)
            + noise;
        values.push(v.max(0.0));
    }
    let start = config.start_date.and_time(NaiveTime::from_hms_opt(0, 0, 0).unwrap());
    let gap_mask = vec![false; values.len()];
    MeasurementSeries::new(start, values, gap_mask)
}
