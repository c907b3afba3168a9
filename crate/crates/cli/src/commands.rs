//! The six subcommands. Each resolves its inputs, runs the corresponding
//! library call, writes its artifacts plus a run manifest, and prints a
//! one-line summary. Nothing here reads a clock: identical inputs and
//! seeds produce byte-identical artifacts.

use std::fs;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ecfc::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use ecfc::error::{Error, Result};
use ecfc::forecast::{forecast, horizon_sweep};
use ecfc::ingest::{
    flatten, format_timestamp, parse_table, GapPolicy, MeasurementSeries, TableLayout,
    SLOTS_PER_DAY,
};
use ecfc::synth::{generate, SynthConfig};
use ecfc::trainer::{fit, write_history};

use crate::config::RunConfig;
use crate::manifest::write_manifest;

fn inputs<'a>(config_file: Option<&'a Path>, rest: &[&'a Path]) -> Vec<&'a Path> {
    let mut v: Vec<&Path> = config_file.into_iter().collect();
    v.extend_from_slice(rest);
    v
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

pub fn ingest(
    config: &RunConfig,
    config_file: Option<&Path>,
    raw: &Path,
    layout: &TableLayout,
    gap_policy: GapPolicy,
) -> Result<()> {
    let table = parse_table(File::open(raw)?, layout)?;
    let series = flatten(&table, gap_policy)?;
    create_parent(&config.series_file)?;
    series.write_to_path(&config.series_file)?;
    write_manifest("ingest", config, &inputs(config_file, &[raw]))?;
    println!(
        "points={} days={} imputed={}",
        series.len(),
        series.len() / SLOTS_PER_DAY,
        series.imputed_count()
    );
    Ok(())
}

pub fn train(config: &RunConfig, config_file: Option<&Path>) -> Result<()> {
    let series = MeasurementSeries::read_from_path(&config.series_file)?;
    let train_config = config.train_config()?;
    fs::create_dir_all(&config.checkpoint_dir)?;
    let (best, records) = fit(&series, &train_config, Some(&config.checkpoint_dir))?;
    save_checkpoint(&best, &config.checkpoint_dir.join("best.ckpt"))?;
    fs::create_dir_all(&config.output_dir)?;
    let history = File::create(config.output_dir.join("history.csv"))?;
    write_history(&records, BufWriter::new(history))?;
    write_manifest("train", config, &inputs(config_file, &[&config.series_file]))?;
    println!(
        "best_epoch={} val_mae_kwh={} val_mape_pct={}",
        best.epoch, best.record.val_mae_kwh, best.record.val_mape_pct
    );
    Ok(())
}

fn load_inputs(config: &RunConfig, checkpoint: &Path) -> Result<(MeasurementSeries, Checkpoint)> {
    let series = MeasurementSeries::read_from_path(&config.series_file)?;
    let ckpt = load_checkpoint(checkpoint)?;
    Ok((series, ckpt))
}

fn write_trajectory(
    path: &Path,
    timestamps: &[chrono::NaiveDateTime],
    predicted: &[f64],
    actual: &[Option<f64>],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "timestamp,predicted_kwh,actual_kwh")?;
    for ((ts, p), a) in timestamps.iter().zip(predicted).zip(actual) {
        match a {
            Some(a) => writeln!(w, "{},{},{}", format_timestamp(*ts), p, a)?,
            None => writeln!(w, "{},{},", format_timestamp(*ts), p)?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn run_forecast(
    config: &RunConfig,
    config_file: Option<&Path>,
    checkpoint: &Path,
) -> Result<()> {
    if config.horizons_days.iter().any(|d| *d == 0) {
        return Err(Error::Config("forecast horizons must be at least 1 day".into()));
    }
    let (series, ckpt) = load_inputs(config, checkpoint)?;
    let horizons: Vec<usize> = config
        .horizons_days
        .iter()
        .map(|d| d * SLOTS_PER_DAY)
        .collect();
    let (rows, full) = horizon_sweep(&ckpt, &series, &horizons)?;
    fs::create_dir_all(&config.output_dir)?;
    write_trajectory(
        &config.output_dir.join("forecast.csv"),
        &full.timestamps,
        &full.predicted_kwh,
        &full.actual_kwh,
    )?;
    let metrics = serde_json::to_string_pretty(&rows).expect("metrics serialize");
    fs::write(config.output_dir.join("forecast-metrics.json"), metrics + "\n")?;
    write_manifest(
        "forecast",
        config,
        &inputs(config_file, &[&config.series_file, checkpoint]),
    )?;
    for row in &rows {
        println!(
            "horizon_days={} mae_kwh={} mape_pct={} excluded_zero_targets={}",
            row.horizon_half_hours / SLOTS_PER_DAY,
            row.mae_kwh,
            row.mape_pct,
            row.excluded_zero_targets
        );
    }
    Ok(())
}

/// Score a checkpoint over everything after its training range: the same
/// feedback trajectory as validation, written out as a measured-vs-predicted
/// CSV plus a metrics JSON.
pub fn evaluate(config: &RunConfig, config_file: Option<&Path>, checkpoint: &Path) -> Result<()> {
    let (series, ckpt) = load_inputs(config, checkpoint)?;
    let start = ckpt.config.split.train_start + ckpt.config.split.train_len;
    if series.len() <= start {
        return Err(Error::Config(format!(
            "series has no points after the training range (needs more than {start}, has {})",
            series.len()
        )));
    }
    let result = forecast(&ckpt, &series, series.len() - start)?;
    let report = result.report.as_ref().expect("whole range is measured");
    fs::create_dir_all(&config.output_dir)?;
    write_trajectory(
        &config.output_dir.join("evaluate.csv"),
        &result.timestamps,
        &result.predicted_kwh,
        &result.actual_kwh,
    )?;
    let metrics = serde_json::json!({
        "val_points": report.n_points + report.n_excluded,
        "mae_kwh": report.mae,
        "mape_pct": report.mape,
        "excluded_zero_targets": report.n_excluded,
    });
    fs::write(
        config.output_dir.join("evaluate-metrics.json"),
        serde_json::to_string_pretty(&metrics).expect("metrics serialize") + "\n",
    )?;
    write_manifest(
        "evaluate",
        config,
        &inputs(config_file, &[&config.series_file, checkpoint]),
    )?;
    println!("val_mae_kwh={} val_mape_pct={}", report.mae, report.mape);
    Ok(())
}

/// Train one model per window size, each run independent and separately
/// seeded (base seed + list index), and tabulate the best epochs.
pub fn sweep(config: &RunConfig, config_file: Option<&Path>) -> Result<()> {
    if !matches!(config.schema()?, ecfc::features::FeatureSchema::Windowed(_)) {
        return Err(Error::Config("the window sweep requires the windowed schema".into()));
    }
    if config.window_sizes.is_empty() {
        return Err(Error::Config("window_sizes is empty; nothing to sweep".into()));
    }
    let series = MeasurementSeries::read_from_path(&config.series_file)?;
    fs::create_dir_all(&config.output_dir)?;
    let mut summary = String::from("window_size,best_epoch,val_mae_kwh,val_mape_pct\n");
    for (i, &window) in config.window_sizes.iter().enumerate() {
        let run = RunConfig {
            window_size: window,
            seed: config.seed + i as u64,
            ..config.clone()
        };
        let train_config = run.train_config()?;
        let epoch_dir = config.checkpoint_dir.join(format!("w{window:04}"));
        fs::create_dir_all(&epoch_dir)?;
        let (best, records) = fit(&series, &train_config, Some(&epoch_dir))?;
        save_checkpoint(&best, &config.checkpoint_dir.join(format!("best-w{window:04}.ckpt")))?;
        let history = File::create(config.output_dir.join(format!("history-w{window:04}.csv")))?;
        write_history(&records, BufWriter::new(history))?;
        summary += &format!(
            "{},{},{},{}\n",
            window, best.epoch, best.record.val_mae_kwh, best.record.val_mape_pct
        );
        println!(
            "window_size={} best_epoch={} val_mae_kwh={} val_mape_pct={}",
            window, best.epoch, best.record.val_mae_kwh, best.record.val_mape_pct
        );
    }
    fs::write(config.output_dir.join("sweep.csv"), summary)?;
    write_manifest("sweep", config, &inputs(config_file, &[&config.series_file]))?;
    Ok(())
}

pub fn synth(
    config: &RunConfig,
    config_file: Option<&Path>,
    synth_config: &SynthConfig,
) -> Result<()> {
    let series = generate(synth_config)?;
    create_parent(&config.series_file)?;
    series.write_to_path(&config.series_file)?;
    let stem = config
        .series_file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into());
    let params_path = config.series_file.with_file_name(format!("{stem}-params.json"));
    let params = serde_json::to_string_pretty(synth_config).expect("params serialize");
    fs::write(&params_path, params + "\n")?;
    write_manifest("synth", config, &inputs(config_file, &[]))?;
    println!(
        "points={} days={} series={}",
        series.len(),
        synth_config.days,
        config.series_file.display()
    );
    Ok(())
}
