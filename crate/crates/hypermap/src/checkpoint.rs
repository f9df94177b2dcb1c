//! Checkpoint files: the versioned "HMAP" byte layout from the core crate,
//! read and written through the filesystem.

use std::fs;
use std::path::Path;

use hypermap_core::net::{decode_checkpoint, encode_checkpoint, CheckpointMeta, Network};

use crate::{HmError, Result};

pub fn save_checkpoint(path: impl AsRef<Path>, net: &Network, meta: &CheckpointMeta) -> Result<()> {
    fs::write(path.as_ref(), encode_checkpoint(net, meta))
        .map_err(|e| HmError::io(path.as_ref(), e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Network, CheckpointMeta)> {
    let bytes = fs::read(path.as_ref()).map_err(|e| HmError::io(path.as_ref(), e))?;
    Ok(decode_checkpoint(&bytes)?)
}
