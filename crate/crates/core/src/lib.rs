//! Half-hourly building energy consumption forecasting.
//!
//! The crate covers the full pipeline: parsing the raw day-per-row meter
//! export, calendar feature engineering and windowing, a from-scratch
//! multi-layer LSTM trained with Adam on MAE loss, autoregressive
//! multi-horizon forecasting, and MAE/MAPE evaluation.

pub mod checkpoint;
pub mod error;
pub mod features;
pub mod forecast;
pub mod ingest;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
