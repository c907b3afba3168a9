//! Run manifests: every command writes a JSON record of its resolved
//! configuration, seed, and input-file checksums, so any artifact can be
//! traced back to exactly what produced it. Manifests contain no clocks or
//! hostnames; identical runs write identical manifests.

use std::fs;
use std::path::Path;

use serde::Serialize;

use ecfc::checkpoint::crc32;
use ecfc::error::Result;

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
struct InputRecord {
    path: String,
    bytes: usize,
    crc32: String,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    seed: u64,
    config: &'a RunConfig,
    inputs: Vec<InputRecord>,
}

/// Write `<output_dir>/<command>-manifest.json` for a command that read
/// the given input files.
pub fn write_manifest(command: &str, config: &RunConfig, inputs: &[&Path]) -> Result<()> {
    let mut records = Vec::with_capacity(inputs.len());
    for path in inputs {
        let bytes = fs::read(path)?;
        records.push(InputRecord {
            path: path.display().to_string(),
            bytes: bytes.len(),
            crc32: format!("{:#010x}", crc32(&bytes)),
        });
    }
    let manifest = RunManifest {
        command,
        seed: config.seed,
        config,
        inputs: records,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::create_dir_all(&config.output_dir)?;
    fs::write(
        config.output_dir.join(format!("{command}-manifest.json")),
        text + "\n",
    )?;
    Ok(())
}
