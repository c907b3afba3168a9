//! The run-config JSON document: training hyperparameters, file paths,
//! and sweep lists in one flat, typo-checked structure.
//!
//! Defaults are a desk-scale profile that runs end to end in seconds, so
//! `synth` → `train` → `forecast` works with no config at all. The
//! full-scale profile of the reference experiment ships as
//! `configs/full-scale.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ecfc::error::{Error, Result};
use ecfc::features::{FeatureSchema, InputLayout, SplitSpec};
use ecfc::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Feature schema: "calendar4", "calendar7", or "windowed".
    pub schema: String,
    /// Sliding-window length in half hours (windowed schema only).
    pub window_size: usize,
    /// "sequence" (window entries as timesteps) or "flat" (whole window as
    /// one wide timestep, state carried across examples).
    pub input_mode: String,
    pub layer_count: usize,
    pub units: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub dropout_keep: f64,
    /// Global-L2 gradient clipping threshold; null disables clipping.
    pub clip_norm: Option<f64>,
    pub shuffle: bool,
    pub seed: u64,
    pub split: SplitSpec,
    pub series_file: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Window sizes trained by the `sweep` command.
    pub window_sizes: Vec<usize>,
    /// Horizons (in days) scored by the `forecast` command.
    pub horizons_days: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema: "windowed".into(),
            window_size: 96,
            input_mode: "flat".into(),
            layer_count: 1,
            units: 32,
            batch_size: 10,
            epochs: 50,
            learning_rate: 1e-3,
            dropout_keep: 0.5,
            clip_norm: Some(5.0),
            shuffle: false,
            seed: 42,
            split: SplitSpec {
                train_start: 96,
                train_len: 2304,
            },
            series_file: PathBuf::from("out/series.ecfc"),
            checkpoint_dir: PathBuf::from("out/checkpoints"),
            output_dir: PathBuf::from("out"),
            window_sizes: vec![48, 96],
            horizons_days: vec![1, 2, 5, 10],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn schema(&self) -> Result<FeatureSchema> {
        match self.schema.as_str() {
            "calendar4" => Ok(FeatureSchema::Calendar4),
            "calendar7" => Ok(FeatureSchema::Calendar7),
            "windowed" => Ok(FeatureSchema::Windowed(self.window_size)),
            other => Err(Error::Config(format!(
                "unknown schema '{other}' (expected calendar4, calendar7, or windowed)"
            ))),
        }
    }

    pub fn input_mode(&self) -> Result<InputLayout> {
        match self.input_mode.as_str() {
            "sequence" => Ok(InputLayout::Sequence),
            "flat" => Ok(InputLayout::Flat),
            other => Err(Error::Config(format!(
                "unknown input_mode '{other}' (expected sequence or flat)"
            ))),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            schema: self.schema()?,
            input_mode: self.input_mode()?,
            layer_count: self.layer_count,
            units: self.units,
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            dropout_keep: self.dropout_keep,
            clip_norm: self.clip_norm,
            shuffle: self.shuffle,
            seed: self.seed,
            split: self.split,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_form_a_valid_train_config() {
        let config = RunConfig::default();
        let tc = config.train_config().unwrap();
        // The desk default must validate against the desk synth series.
        tc.validate(60 * 48).unwrap();
        assert_eq!(tc.schema, FeatureSchema::Windowed(96));
        assert_eq!(tc.input_mode, InputLayout::Flat);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"window_sze": 96}"#);
        assert!(err.is_err());
    }

    #[test]
    fn null_clip_norm_disables_clipping() {
        let config: RunConfig = serde_json::from_str(r#"{"clip_norm": null}"#).unwrap();
        assert_eq!(config.clip_norm, None);
        let config: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(config.clip_norm, Some(5.0));
    }

    #[test]
    fn bad_schema_and_mode_strings_are_config_errors() {
        let config = RunConfig {
            schema: "fourier".into(),
            ..RunConfig::default()
        };
        assert!(matches!(config.schema(), Err(Error::Config(_))));
        let config = RunConfig {
            input_mode: "wide".into(),
            ..RunConfig::default()
        };
        assert!(matches!(config.input_mode(), Err(Error::Config(_))));
    }
}
