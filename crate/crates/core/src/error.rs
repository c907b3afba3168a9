use thiserror::Error;

/// Errors produced by the forecasting pipeline.
///
/// Variants are grouped by the kind of failure so callers (the CLI in
/// particular) can map them to exit codes: configuration/contract problems,
/// data problems, and checkpoint/file problems.
#[derive(Debug, Error)]
pub enum Error {
    /// A cell or date label could not be parsed.
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    /// A row did not have the expected number of value columns.
    #[error("row {row}: expected {expected} value columns, found {found}")]
    Arity {
        row: usize,
        expected: usize,
        found: usize,
    },

    /// A gap was found under the strict gap policy (or could not be filled).
    #[error("gap in series at {timestamp}")]
    Gap { timestamp: String },

    /// Input data failed validation (e.g. negative consumption readings).
    #[error("invalid data: {0}")]
    Validation(String),

    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// An index range reached outside the series.
    #[error("out of bounds: {0}")]
    Bounds(String),

    /// The run configuration is inconsistent or infeasible.
    #[error("configuration error: {0}")]
    Config(String),

    /// A metric is undefined for the given inputs (e.g. every MAPE target
    /// fell below the zero floor).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// The checkpoint file has an unsupported format version.
    #[error("unsupported checkpoint version {found} (supported: {supported})")]
    CheckpointVersion { found: u8, supported: u8 },

    /// The checkpoint payload failed its CRC32 check.
    #[error("checkpoint checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    CheckpointChecksum { stored: u32, computed: u32 },

    /// The checkpoint file is truncated or structurally malformed.
    #[error("malformed checkpoint: {0}")]
    CheckpointFormat(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by the input data rather than by the caller
    /// or the environment.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Arity { .. }
                | Error::Gap { .. }
                | Error::Validation(_)
                | Error::CheckpointVersion { .. }
                | Error::CheckpointChecksum { .. }
                | Error::CheckpointFormat(_)
        )
    }

    /// True for errors caused by an inconsistent configuration or a violated
    /// API contract.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Contract(_) | Error::Bounds(_) | Error::UndefinedMetric(_)
        )
    }
}
