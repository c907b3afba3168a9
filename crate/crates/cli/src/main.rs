//! `ecfc`: train and run the half-hourly energy consumption forecaster.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use ecfc::error::Error;
use ecfc::ingest::{DateFormat, GapPolicy, TableLayout};
use ecfc::synth::SynthConfig;

use config::RunConfig;

const CONFIG_HELP: &str = "\
Run-config JSON keys (all optional; unknown keys are rejected):
  schema            \"windowed\" | \"calendar4\" | \"calendar7\"   [windowed]
  window_size       sliding window length in half hours         [96]
  input_mode        \"sequence\" | \"flat\"                         [flat]
  layer_count       stacked LSTM layers                         [1]
  units             LSTM units per layer                        [32]
  batch_size                                                    [10]
  epochs                                                        [50]
  learning_rate                                                 [0.001]
  dropout_keep      keep probability between stacked layers     [0.5]
  clip_norm         global-L2 threshold, null disables          [5.0]
  shuffle           shuffle training batches (sequence mode)    [false]
  seed                                                          [42]
  split             {train_start, train_len}                    [{96, 2304}]
  series_file                                                   [out/series.ecfc]
  checkpoint_dir                                                [out/checkpoints]
  output_dir                                                    [out]
  window_sizes      window sizes trained by `sweep`             [48, 96]
  horizons_days     horizons scored by `forecast`               [1, 2, 5, 10]

The defaults are a desk-scale profile: `ecfc synth && ecfc train &&
ecfc forecast` runs end to end in well under a minute. The reference
experiment's full-scale profile ships as configs/full-scale.json.";

#[derive(Parser)]
#[command(
    name = "ecfc",
    version,
    about = "Forecast half-hourly building energy consumption with a from-scratch LSTM",
    after_long_help = CONFIG_HELP
)]
struct Cli {
    /// Run-config JSON file (defaults apply when omitted).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a raw day-per-row export into the canonical series file.
    Ingest(IngestArgs),
    /// Train a model: per-epoch checkpoints, best checkpoint, epoch history.
    Train,
    /// Forecast from a trained checkpoint and score each horizon.
    Forecast(ForecastArgs),
    /// Score a checkpoint over everything after its training range.
    Evaluate(EvaluateArgs),
    /// Train once per configured window size and tabulate the results.
    Sweep,
    /// Generate a deterministic synthetic consumption series.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DateFormatArg {
    /// YYYY-MM-DD
    Iso,
    /// DD/MM/YYYY
    Dmy,
}

#[derive(Clone, Copy, ValueEnum)]
enum GapPolicyArg {
    /// Fail on the first missing reading.
    Strict,
    /// Linearly interpolate each missing reading within its half-hour slot
    /// across days.
    Interpolate,
    /// Repeat the most recent reading.
    ForwardFill,
}

#[derive(Args)]
struct IngestArgs {
    /// Raw export to parse.
    raw: PathBuf,
    /// Field delimiter of the raw file.
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// Zero-based index of the date column.
    #[arg(long, default_value_t = 0, value_name = "INDEX")]
    date_column: usize,
    /// Format of the date column.
    #[arg(long, value_enum, default_value_t = DateFormatArg::Iso)]
    date_format: DateFormatArg,
    /// Skip the first row as a header.
    #[arg(long)]
    header: bool,
    /// Treatment of missing readings.
    #[arg(long, value_enum, default_value_t = GapPolicyArg::Strict)]
    gap_policy: GapPolicyArg,
}

#[derive(Args)]
struct ForecastArgs {
    /// Checkpoint to forecast from.
    #[arg(long, value_name = "PATH", help = "Checkpoint to forecast from [default: <checkpoint_dir>/best.ckpt]")]
    checkpoint: Option<PathBuf>,
    /// Comma-separated horizons in days, overriding the config's list.
    #[arg(long, value_name = "DAYS", value_delimiter = ',')]
    horizon_days: Option<Vec<usize>>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Checkpoint to evaluate.
    #[arg(long, value_name = "PATH", help = "Checkpoint to evaluate [default: <checkpoint_dir>/best.ckpt]")]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Days to generate.
    #[arg(long, default_value_t = 60)]
    days: usize,
    /// Mean load, kWh per half hour.
    #[arg(long, default_value_t = 40.0)]
    base_kwh: f64,
    /// Amplitude of the daily sinusoid.
    #[arg(long, default_value_t = 20.0)]
    amplitude_kwh: f64,
    /// Weekly modulation depth (sinusoid scaled by 1+B weekdays, 1-B weekends).
    #[arg(long, default_value_t = 0.2, value_name = "B")]
    weekly_modulation: f64,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 0.4)]
    noise_std_kwh: f64,
    /// First day of the series.
    #[arg(long, default_value = "2012-01-02")]
    start_date: NaiveDate,
}

fn run(cli: Cli) -> ecfc::Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    let config_file = cli.config.as_deref();

    match cli.command {
        Command::Ingest(args) => {
            if !args.delimiter.is_ascii() {
                return Err(Error::Config(format!(
                    "delimiter must be a single ASCII character, got '{}'",
                    args.delimiter
                )));
            }
            let layout = TableLayout {
                delimiter: args.delimiter as u8,
                date_column: args.date_column,
                date_format: match args.date_format {
                    DateFormatArg::Iso => DateFormat::Iso,
                    DateFormatArg::Dmy => DateFormat::DayMonthYear,
                },
                has_header: args.header,
            };
            let gap_policy = match args.gap_policy {
                GapPolicyArg::Strict => GapPolicy::Strict,
                GapPolicyArg::Interpolate => GapPolicy::LinearInterpolate,
                GapPolicyArg::ForwardFill => GapPolicy::ForwardFill,
            };
            commands::ingest(&config, config_file, &args.raw, &layout, gap_policy)
        }
        Command::Train => commands::train(&config, config_file),
        Command::Forecast(args) => {
            if let Some(days) = args.horizon_days {
                config.horizons_days = days;
            }
            let checkpoint = args
                .checkpoint
                .unwrap_or_else(|| config.checkpoint_dir.join("best.ckpt"));
            commands::run_forecast(&config, config_file, &checkpoint)
        }
        Command::Evaluate(args) => {
            let checkpoint = args
                .checkpoint
                .unwrap_or_else(|| config.checkpoint_dir.join("best.ckpt"));
            commands::evaluate(&config, config_file, &checkpoint)
        }
        Command::Sweep => commands::sweep(&config, config_file),
        Command::Synth(args) => {
            let synth_config = SynthConfig {
                start_date: args.start_date,
                days: args.days,
                base_kwh: args.base_kwh,
                amplitude_kwh: args.amplitude_kwh,
                weekly_modulation: args.weekly_modulation,
                noise_std_kwh: args.noise_std_kwh,
                seed: config.seed,
            };
            commands::synth(&config, config_file, &synth_config)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() {
                2
            } else if e.is_data_error() {
                3
            } else {
                4
            })
        }
    }
}
