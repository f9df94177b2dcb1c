//! Materialize manifest records into labeled patch tensors (scenes are read
//! once and cached).

use std::collections::HashMap;
use std::path::Path;

use hypermap_core::raster::{Raster, SceneRaster};
use hypermap_core::synth::extract_patch;
use hypermap_core::tensor::Tensor;

use crate::manifest::{DatasetManifest, Split};
use crate::pgm::read_pgm;
use crate::{HmError, Result};

/// Load every record of one split. `base` is the directory scene paths are
/// relative to (normally the manifest's directory).
pub fn load_split(
    manifest: &DatasetManifest,
    base: &Path,
    split: Split,
) -> Result<Vec<(Tensor, u8)>> {
    let mut cache: HashMap<&str, SceneRaster> = HashMap::new();
    let mut out = Vec::new();
    for rec in manifest.split_records(split) {
        if !cache.contains_key(rec.path.as_str()) {
            cache.insert(rec.path.as_str(), read_pgm(base.join(&rec.path))?);
        }
        let scene = &cache[rec.path.as_str()];
        let patch = extract_patch(scene, rec.y, rec.x, manifest.patch_size).map_err(|e| {
            HmError::Core(hypermap_core::Error::Input(format!(
                "{} ({},{}): {e}",
                rec.path, rec.x, rec.y
            )))
        })?;
        out.push((patch, rec.label));
    }
    Ok(out)
}

/// Like [`load_split`] but keeps the raster form for montage thumbnails,
/// capped at `limit` records (manifest order).
pub fn load_split_rasters(
    manifest: &DatasetManifest,
    base: &Path,
    split: Split,
    limit: usize,
) -> Result<Vec<(Tensor, Raster, u8)>> {
    let mut cache: HashMap<&str, SceneRaster> = HashMap::new();
    let mut out = Vec::new();
    for rec in manifest.split_records(split).take(limit) {
        if !cache.contains_key(rec.path.as_str()) {
            cache.insert(rec.path.as_str(), read_pgm(base.join(&rec.path))?);
        }
        let scene = &cache[rec.path.as_str()];
        let patch = extract_patch(scene, rec.y, rec.x, manifest.patch_size)?;
        let raster = Raster::from_tensor(&patch)?;
        out.push((patch, raster, rec.label));
    }
    Ok(out)
}
