//! Self-contained binary checkpoints.
//!
//! Layout: magic bytes `ECFC-CKPT`, one format-version byte (currently 1),
//! a little-endian u32 length prefix, a UTF-8 JSON header (train config,
//! normalizer, epoch record, optional Adam metadata, tensor manifest with
//! name/shape/byte-offset), the tensors as little-endian f64 in manifest
//! order, and finally a CRC32 (IEEE) of every preceding byte, little
//! endian. The header JSON comes from plain structs (no maps), so field
//! order is fixed and save -> load -> save reproduces the file
//! byte-for-byte. That guarantee also needs serde_json's
//! `float_roundtrip` feature (enabled in Cargo.toml): the default float
//! parser may land 1 ulp off, which would rewrite header floats.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Normalizer;
use crate::linalg::Mat;
use crate::model::{GateWeights, LstmLayer, LstmModel, LstmState};
use crate::optim::{AdamConfig, AdamState};
use crate::trainer::{EpochRecord, TrainConfig};

pub const MAGIC: &[u8; 9] = b"ECFC-CKPT";
pub const FORMAT_VERSION: u8 = 1;

/// Everything needed to forecast (or resume training) without the original
/// run: configuration, normalization statistics, weights, the recurrent
/// state at the end of the checkpointed epoch, and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub normalizer: Normalizer,
    pub model: LstmModel,
    /// End-of-epoch state (meaningful in flat input mode, zeros otherwise).
    pub state: LstmState,
    pub epoch: usize,
    pub record: EpochRecord,
    pub adam: Option<AdamState>,
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
    /// Byte offset within the tensor region.
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct AdamMeta {
    t: u64,
    config: AdamConfig,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    normalizer: Normalizer,
    epoch: usize,
    record: EpochRecord,
    adam: Option<AdamMeta>,
    tensors: Vec<TensorMeta>,
}

/// CRC32 (IEEE 802.3, reflected, polynomial 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    const TABLE: [u32; 256] = {
        let mut table = [0u32; 256];
        let mut i = 0;
        while i < 256 {
            let mut c = i as u32;
            let mut k = 0;
            while k < 8 {
                c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
                k += 1;
            }
            table[i] = c;
            i += 1;
        }
        table
    };
    let mut c = u32::MAX;
    for &b in bytes {
        c = TABLE[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    !c
}

/// Canonical tensor order: per layer the gates (input, forget, output,
/// cell) as w/u/b, then the head, then the recurrent state, then Adam
/// moments if present. Save and load both derive the manifest from this
/// single definition.
fn tensor_layout(config: &TrainConfig, with_adam: bool) -> Vec<(String, Vec<usize>)> {
    let model_config = config.model_config();
    let mut layout = Vec::new();
    let mut in_width = model_config.input_width;
    for (l, &hidden) in model_config.layer_sizes.iter().enumerate() {
        for gate in ["input", "forget", "output", "cell"] {
            layout.push((format!("layer{l}.{gate}.w"), vec![hidden, in_width]));
            layout.push((format!("layer{l}.{gate}.u"), vec![hidden, hidden]));
            layout.push((format!("layer{l}.{gate}.b"), vec![hidden]));
        }
        in_width = hidden;
    }
    let last = *model_config.layer_sizes.last().unwrap();
    layout.push(("head.w".into(), vec![last]));
    layout.push(("head.b".into(), vec![1]));
    for (l, &hidden) in model_config.layer_sizes.iter().enumerate() {
        layout.push((format!("state.h{l}"), vec![hidden]));
        layout.push((format!("state.c{l}"), vec![hidden]));
    }
    if with_adam {
        let n_params: usize = model_config
            .layer_sizes
            .iter()
            .scan(model_config.input_width, |in_w, &h| {
                let n = 4 * (h * *in_w + h * h + h);
                *in_w = h;
                Some(n)
            })
            .sum::<usize>()
            + last
            + 1;
        layout.push(("adam.m".into(), vec![n_params]));
        layout.push(("adam.v".into(), vec![n_params]));
    }
    layout
}

/// Tensor data slices in the same order as [`tensor_layout`].
fn tensor_views(checkpoint: &Checkpoint) -> Vec<&[f64]> {
    let mut views: Vec<&[f64]> = Vec::new();
    for layer in &checkpoint.model.layers {
        for gate in [&layer.input_gate, &layer.forget_gate, &layer.output_gate, &layer.cell_gate] {
            views.push(gate.w.as_slice());
            views.push(gate.u.as_slice());
            views.push(&gate.b);
        }
    }
    views.push(&checkpoint.model.head_w);
    views.push(std::slice::from_ref(&checkpoint.model.head_b));
    for l in 0..checkpoint.model.layers.len() {
        views.push(&checkpoint.state.h[l]);
        views.push(&checkpoint.state.c[l]);
    }
    if let Some(adam) = &checkpoint.adam {
        views.push(&adam.m);
        views.push(&adam.v);
    }
    views
}

pub fn to_bytes(checkpoint: &Checkpoint) -> Result<Vec<u8>> {
    let layout = tensor_layout(&checkpoint.config, checkpoint.adam.is_some());
    let views = tensor_views(checkpoint);
    if layout.len() != views.len() {
        return Err(Error::Contract("tensor layout out of sync with model".into()));
    }
    let mut offset = 0u64;
    let mut tensors = Vec::with_capacity(layout.len());
    for ((name, shape), view) in layout.iter().zip(&views) {
        let n: usize = shape.iter().product();
        if n != view.len() {
            return Err(Error::Contract(format!(
                "tensor {name} has {} values, layout says {n}",
                view.len()
            )));
        }
        tensors.push(TensorMeta {
            name: name.clone(),
            shape: shape.clone(),
            offset,
        });
        offset += (n * 8) as u64;
    }
    let header = Header {
        config: checkpoint.config.clone(),
        normalizer: checkpoint.normalizer.clone(),
        epoch: checkpoint.epoch,
        record: checkpoint.record.clone(),
        adam: checkpoint.adam.as_ref().map(|a| AdamMeta {
            t: a.t,
            config: a.config,
        }),
        tensors,
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::CheckpointFormat(format!("header serialization: {e}")))?;

    let mut bytes =
        Vec::with_capacity(MAGIC.len() + 1 + 4 + header_json.len() + offset as usize + 4);
    bytes.extend_from_slice(MAGIC);
    bytes.push(FORMAT_VERSION);
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for view in views {
        for v in view {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    Ok(bytes)
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(checkpoint)?)?;
    Ok(())
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let min = MAGIC.len() + 1 + 4 + 4;
    if bytes.len() < min {
        return Err(Error::CheckpointFormat(format!(
            "file of {} bytes is too short to be a checkpoint",
            bytes.len()
        )));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::CheckpointFormat("magic bytes missing".into()));
    }
    let version = bytes[MAGIC.len()];
    if version != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let header_start = MAGIC.len() + 1 + 4;
    let header_len =
        u32::from_le_bytes(bytes[MAGIC.len() + 1..header_start].try_into().unwrap()) as usize;
    let tensor_start = header_start + header_len;
    if tensor_start + 4 > bytes.len() {
        return Err(Error::CheckpointFormat("truncated header".into()));
    }

    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let computed = crc32(&bytes[..bytes.len() - 4]);
    if stored != computed {
        return Err(Error::CheckpointChecksum { stored, computed });
    }

    let header: Header = serde_json::from_slice(&bytes[header_start..tensor_start])
        .map_err(|e| Error::CheckpointFormat(format!("header JSON: {e}")))?;

    let expected = tensor_layout(&header.config, header.adam.is_some());
    if header.tensors.len() != expected.len() {
        return Err(Error::CheckpointFormat(format!(
            "manifest lists {} tensors, config implies {}",
            header.tensors.len(),
            expected.len()
        )));
    }
    let region = &bytes[tensor_start..bytes.len() - 4];
    let mut offset = 0u64;
    let mut data: Vec<Vec<f64>> = Vec::with_capacity(expected.len());
    for (meta, (name, shape)) in header.tensors.iter().zip(&expected) {
        if meta.name != *name || meta.shape != *shape || meta.offset != offset {
            return Err(Error::CheckpointFormat(format!(
                "manifest entry {:?} {:?} @{} does not match expected {:?} {:?} @{}",
                meta.name, meta.shape, meta.offset, name, shape, offset
            )));
        }
        let n: usize = shape.iter().product();
        let start = offset as usize;
        let end = start + n * 8;
        if end > region.len() {
            return Err(Error::CheckpointFormat("truncated tensor region".into()));
        }
        data.push(
            region[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
        offset = end as u64;
    }
    if offset as usize != region.len() {
        return Err(Error::CheckpointFormat(format!(
            "{} trailing bytes after the last tensor",
            region.len() - offset as usize
        )));
    }

    // Reassemble in the same canonical order.
    let mut iter = data.into_iter();
    let mut next = move || iter.next().expect("layout length already checked");
    let model_config = header.config.model_config();
    let mut layers = Vec::with_capacity(model_config.layer_sizes.len());
    let mut in_width = model_config.input_width;
    for &hidden in &model_config.layer_sizes {
        let mut gate = || GateWeights {
            w: Mat::from_vec(hidden, in_width, next()),
            u: Mat::from_vec(hidden, hidden, next()),
            b: next(),
        };
        layers.push(LstmLayer {
            input_gate: gate(),
            forget_gate: gate(),
            output_gate: gate(),
            cell_gate: gate(),
        });
        in_width = hidden;
    }
    let head_w = next();
    let head_b = next()[0];
    let model = LstmModel {
        config: model_config,
        layers,
        head_w,
        head_b,
    };
    let n_layers = model.layers.len();
    let mut h = Vec::with_capacity(n_layers);
    let mut c = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        h.push(next());
        c.push(next());
    }
    let adam = header.adam.as_ref().map(|meta| AdamState {
        t: meta.t,
        m: next(),
        v: next(),
        config: meta.config,
    });

    Ok(Checkpoint {
        config: header.config,
        normalizer: header.normalizer,
        model,
        state: LstmState { h, c },
        epoch: header.epoch,
        record: header.record,
        adam,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    from_bytes(&std::fs::read(path)?)
}
