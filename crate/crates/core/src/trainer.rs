//! The training loop: batched MAE/Adam epochs, sequential feedback
//! validation, and best-epoch selection over per-epoch checkpoints.
//!
//! Two input modes share this code. In `Sequence` mode every example is a
//! full window of timesteps processed from a zero state, and the loss is
//! taken on the last timestep's prediction. In `Flat` mode every example is
//! a single wide timestep; a batch becomes one multi-timestep forward call,
//! so gradients flow through the whole batch (truncated at batch
//! boundaries) and the hidden state is carried across batches within an
//! epoch, reset at epoch start. The end-of-epoch state seeds validation and
//! is stored in the checkpoint so forecasting can continue the recurrence.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::features::{
    fit_normalizer, step_width, DatasetBuilder, ExampleInput, FeatureSchema, InputLayout,
    SplitSpec,
};
use crate::ingest::MeasurementSeries;
use crate::metrics;
use crate::model::{
    init_model, sample_dropout_masks, Gradients, LstmModel, LstmState, ModelConfig,
};
use crate::optim::{clip_gradients, mae_loss, AdamConfig, AdamState, DEFAULT_CLIP_NORM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub schema: FeatureSchema,
    pub input_mode: InputLayout,
    pub layer_count: usize,
    pub units: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Keep probability of the inverted dropout between stacked layers;
    /// 1.0 disables it.
    pub dropout_keep: f64,
    /// Global-L2 gradient clipping threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Shuffle training examples each epoch (Sequence mode only; Flat mode
    /// needs chronological order for its state carry).
    pub shuffle: bool,
    pub seed: u64,
    pub split: SplitSpec,
}

impl Default for TrainConfig {
    /// The full-scale configuration of the reference experiment: 3 layers
    /// of 256 units over a 3840-slot window, batches of 10, learning rate
    /// 1e-4, dropout keep 0.5, training on 100000 examples starting at
    /// index 15000.
    fn default() -> Self {
        TrainConfig {
            schema: FeatureSchema::Windowed(3840),
            input_mode: InputLayout::Sequence,
            layer_count: 3,
            units: 256,
            batch_size: 10,
            epochs: 50,
            learning_rate: 1e-4,
            dropout_keep: 0.5,
            clip_norm: Some(DEFAULT_CLIP_NORM),
            shuffle: false,
            seed: 42,
            split: SplitSpec {
                train_start: 15000,
                train_len: 100000,
            },
        }
    }
}

impl TrainConfig {
    pub fn layer_sizes(&self) -> Vec<usize> {
        vec![self.units; self.layer_count]
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            input_width: step_width(self.schema, self.input_mode),
            layer_sizes: self.layer_sizes(),
        }
    }

    pub fn validate(&self, series_len: usize) -> Result<()> {
        self.schema.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.layer_count == 0 || self.units == 0 {
            return Err(Error::Config("layer_count and units must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(Error::Config(format!(
                "dropout_keep must be in (0, 1], got {}",
                self.dropout_keep
            )));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("clip_norm must be positive, got {c}")));
            }
        }
        if self.shuffle && self.input_mode == InputLayout::Flat {
            return Err(Error::Config(
                "shuffle breaks the state carry of flat input mode; use sequence mode or \
                 chronological order"
                    .into(),
            ));
        }
        self.split.validate(series_len, self.schema.window())?;
        if self.split.val_targets(series_len).is_empty() {
            return Err(Error::Config(format!(
                "split leaves no validation targets after index {}",
                self.split.train_start + self.split.train_len
            )));
        }
        Ok(())
    }
}

/// One row of the epoch history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's batch losses, denormalized to kWh.
    pub train_mae_kwh: f64,
    pub val_mae_kwh: f64,
    pub val_mape_pct: f64,
}

/// Scale factor between normalized MAE and kWh.
fn target_scale(data: &DatasetBuilder) -> f64 {
    let t = data.normalizer().target;
    (t.max - t.min).max(0.0)
}

/// One pass over the training targets. Returns the mean of the batch
/// losses in kWh and the end-of-epoch state (zeros in Sequence mode, the
/// carried state in Flat mode).
pub fn train_epoch(
    model: &mut LstmModel,
    data: &DatasetBuilder,
    config: &TrainConfig,
    adam: &mut AdamState,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, LstmState)> {
    let mut targets: Vec<usize> = config.split.train_targets().collect();
    if config.shuffle {
        targets.shuffle(rng);
    }
    let zero = LstmState::zeros(model);
    let mut state = zero.clone();
    let mut batch_losses = Vec::with_capacity(targets.len().div_ceil(config.batch_size));

    for batch in targets.chunks(config.batch_size) {
        let masks = if config.dropout_keep < 1.0 && model.n_layers() > 1 {
            Some(sample_dropout_masks(model, config.dropout_keep, rng)?)
        } else {
            None
        };
        let batch_targets: Vec<f64> = batch
            .iter()
            .map(|&t| data.normalized_value(t))
            .collect::<Result<_>>()?;

        let (loss, grads) = match config.input_mode {
            InputLayout::Flat => {
                let inputs: Vec<Vec<f64>> = batch
                    .iter()
                    .map(|&t| match data.input_at(t)? {
                        ExampleInput::Flat(v) => Ok(v),
                        ExampleInput::Sequence(_) => {
                            Err(Error::Contract("flat mode produced a sequence input".into()))
                        }
                    })
                    .collect::<Result<_>>()?;
                let steps: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
                let out = model.forward(&steps, &state, masks.as_ref())?;
                state = out.state;
                let (loss, d_pred) = mae_loss(&out.predictions, &batch_targets)?;
                (loss, model.backward(&out.tape, &d_pred)?)
            }
            InputLayout::Sequence => {
                let mut preds = Vec::with_capacity(batch.len());
                let mut tapes = Vec::with_capacity(batch.len());
                for &t in batch {
                    let input = data.input_at(t)?;
                    let out = model.forward(&input.steps(), &zero, masks.as_ref())?;
                    preds.push(*out.predictions.last().unwrap());
                    tapes.push(out.tape);
                }
                let (loss, d_pred) = mae_loss(&preds, &batch_targets)?;
                let mut grads = Gradients::zeros_like(model);
                for (tape, dp) in tapes.iter().zip(d_pred) {
                    if dp == 0.0 {
                        continue;
                    }
                    let mut d = vec![0.0; tape.n_steps()];
                    *d.last_mut().unwrap() = dp;
                    grads.add(&model.backward(tape, &d)?);
                }
                (loss, grads)
            }
        };

        let mut flat = grads.to_flat();
        if let Some(max_norm) = config.clip_norm {
            clip_gradients(&mut flat, max_norm);
        }
        let mut params = model.params_flat();
        adam.step(&mut params, &flat)?;
        model.set_params_flat(&params)?;
        batch_losses.push(loss);
    }

    let mean_loss = batch_losses.iter().sum::<f64>() / batch_losses.len() as f64;
    let end_state = match config.input_mode {
        InputLayout::Flat => state,
        InputLayout::Sequence => zero,
    };
    Ok((mean_loss * target_scale(data), end_state))
}

/// Sequential feedback validation: targets are visited in chronological
/// order, one at a time, and each prediction replaces the measured value in
/// the builder so later windows consume the model's own output. Dropout is
/// disabled. Returns MAE (kWh), MAPE (percent) and the predictions in kWh.
pub fn validate(
    model: &LstmModel,
    data: &DatasetBuilder,
    config: &TrainConfig,
    train_end_state: &LstmState,
) -> Result<(f64, f64, Vec<f64>)> {
    let range = config.split.val_targets(data.series_len());
    if range.is_empty() {
        return Err(Error::Config("validation range is empty".into()));
    }
    let mut data = data.clone();
    let norm = data.normalizer().clone();
    let actual_kwh: Vec<f64> = range
        .clone()
        .map(|t| Ok(norm.denormalize_target(data.normalized_value(t)?)))
        .collect::<Result<_>>()?;

    let mut state = match config.input_mode {
        InputLayout::Flat => train_end_state.clone(),
        InputLayout::Sequence => LstmState::zeros(model),
    };
    let mut predicted_kwh = Vec::with_capacity(range.len());
    for t in range {
        let input = data.input_at(t)?;
        let (preds, new_state) = model.predict(&input.steps(), &state)?;
        let p = *preds.last().unwrap();
        if config.input_mode == InputLayout::Flat {
            state = new_state;
        }
        data.set_normalized_value(t, p);
        predicted_kwh.push(norm.denormalize_target(p));
    }

    let report = metrics::report(&actual_kwh, &predicted_kwh)?;
    Ok((report.mae, report.mape, predicted_kwh))
}

/// Train for `config.epochs` epochs, validating after each, and return the
/// checkpoint with minimum validation MAE (ties resolved toward the
/// earlier epoch) together with the full epoch history. When `epoch_dir`
/// is given, every epoch's checkpoint is also written there as
/// `epoch-NNNN.ckpt`.
pub fn fit(
    series: &MeasurementSeries,
    config: &TrainConfig,
    epoch_dir: Option<&Path>,
) -> Result<(Checkpoint, Vec<EpochRecord>)> {
    config.validate(series.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normalizer = fit_normalizer(series, config.schema, &config.split)?;
    let data = DatasetBuilder::new(series, config.schema, config.input_mode, &normalizer)?;
    let mut model = init_model(&config.model_config(), &mut rng)?;
    let mut adam = AdamState::new(model.n_params(), AdamConfig::new(config.learning_rate));

    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<Checkpoint> = None;
    for epoch in 1..=config.epochs {
        let (train_mae_kwh, end_state) = train_epoch(&mut model, &data, config, &mut adam, &mut rng)?;
        let (val_mae_kwh, val_mape_pct, _) = validate(&model, &data, config, &end_state)?;
        let record = EpochRecord {
            epoch,
            train_mae_kwh,
            val_mae_kwh,
            val_mape_pct,
        };
        let checkpoint = Checkpoint {
            config: config.clone(),
            normalizer: normalizer.clone(),
            model: model.clone(),
            state: end_state,
            epoch,
            record: record.clone(),
            adam: Some(adam.clone()),
        };
        if let Some(dir) = epoch_dir {
            crate::checkpoint::save_checkpoint(&checkpoint, &dir.join(format!("epoch-{epoch:04}.ckpt")))?;
        }
        let improves = best
            .as_ref()
            .map(|b| val_mae_kwh < b.record.val_mae_kwh)
            .unwrap_or(true);
        if improves {
            best = Some(checkpoint);
        }
        records.push(record);
    }
    Ok((best.unwrap(), records))
}

/// Epoch history CSV: `epoch,train_mae_kwh,val_mae_kwh,val_mape_pct`.
pub fn write_history(records: &[EpochRecord], mut out: impl Write) -> Result<()> {
    writeln!(out, "epoch,train_mae_kwh,val_mae_kwh,val_mape_pct")?;
    for r in records {
        writeln!(out, "{},{},{},{}", r.epoch, r.train_mae_kwh, r.val_mae_kwh, r.val_mape_pct)?;
    }
    Ok(())
}
