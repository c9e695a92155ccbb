//! Parameter checkpoints.
//!
//! A checkpoint is a single JSON object:
//!
//! ```text
//! {
//!   "format": "acl-mlp",
//!   "version": 1,
//!   "config": { "widths": [1024, 64, 1], "hidden": "relu", "output": "identity" },
//!   "layers": [ { "weight": { "shape": [1024, 64], "data": [...] },
//!                 "bias":   { "shape": [1, 64],    "data": [...] } }, ... ]
//! }
//! ```
//!
//! Weights are `fan_in × fan_out`, row-major. Floats are written in shortest
//! round-trip form, so loading a checkpoint restores the exact bits.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Layer, MlpConfig, Parameters};

pub const FORMAT: &str = "acl-mlp";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: MlpConfig,
    layers: Vec<Layer>,
}

pub fn to_json(params: &Parameters) -> Result<String> {
    let ckpt = Checkpoint {
        format: FORMAT.into(),
        version: VERSION,
        config: params.config().clone(),
        layers: params.layers().to_vec(),
    };
    Ok(serde_json::to_string(&ckpt)?)
}

pub fn from_json(text: &str) -> Result<Parameters> {
    let ckpt: Checkpoint = serde_json::from_str(text)?;
    if ckpt.format != FORMAT {
        return Err(Error::Argument(format!(
            "not a parameter checkpoint (format {:?})",
            ckpt.format
        )));
    }
    if ckpt.version != VERSION {
        return Err(Error::Argument(format!(
            "unsupported checkpoint version {}",
            ckpt.version
        )));
    }
    Parameters::from_layers(ckpt.config, ckpt.layers)
}

pub fn save(path: impl AsRef<Path>, params: &Parameters) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json(params)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Parameters> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text).map_err(|e| e.context(format!("loading {}", path.display())))
}
