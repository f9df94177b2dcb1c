//! Line-oriented dataset manifests: which windows of which scenes belong to
//! which split, with image-level labels. Splits are assigned per scene so no
//! validation patch ever shares a scene with a training patch.
//!
//! Format (tab-separated, one record per line):
//! ```text
//! #patch_size<TAB>36
//! #num_classes<TAB>2
//! scene_00.pgm<TAB>x<TAB>y<TAB>label<TAB>split
//! ```

use std::fmt;
use std::fs;
use std::path::Path;

use hypermap_core::raster::{LabelGrid, SceneRaster};
use hypermap_core::rng::stream;
use hypermap_core::synth::{label_patch, tile_offsets};
use rand::seq::SliceRandom;

use crate::{HmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Map,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Map => "map",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "map" => Ok(Split::Map),
            other => Err(HmError::Format(format!("unknown split \"{other}\""))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One patch record: scene path (relative to the manifest), window origin
/// (x = column, y = row), label and split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub path: String,
    pub x: usize,
    pub y: usize,
    pub label: u8,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub patch_size: usize,
    pub num_classes: usize,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn split_records(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }
}

/// A scene with its mask and the path the manifest should reference.
pub struct SceneEntry<'a> {
    pub path: String,
    pub scene: &'a SceneRaster,
    pub mask: &'a LabelGrid,
}

/// Largest-remainder split counts; errors if a nonzero ratio gets no scene.
fn split_counts(n: usize, ratios: (f64, f64, f64)) -> Result<[usize; 3]> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|v| *v < 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(HmError::Input(format!(
            "split ratios must be non-negative and sum to 1, got {r:?}"
        )));
    }
    let mut counts = [0usize; 3];
    let mut remainders: Vec<(usize, f64)> = Vec::new();
    let mut assigned = 0usize;
    for (i, ratio) in r.iter().enumerate() {
        let exact = ratio * n as f64;
        counts[i] = exact.floor() as usize;
        assigned += counts[i];
        remainders.push((i, exact - exact.floor()));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in remainders.iter().take(n - assigned) {
        counts[*i] += 1;
    }
    for (i, ratio) in r.iter().enumerate() {
        if *ratio > 0.0 && counts[i] == 0 {
            return Err(HmError::Input(format!(
                "too few scenes: ratio {ratio} for split {i} received no scene out of {n}"
            )));
        }
    }
    Ok(counts)
}

/// Grid-crop every scene and assign whole scenes to splits from a seeded
/// shuffle. Labels come from the mask with the 0.5 settlement-fraction rule.
pub fn build_manifest(
    scenes: &[SceneEntry<'_>],
    patch_size: usize,
    stride: usize,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetManifest> {
    if scenes.is_empty() {
        return Err(HmError::Input("no scenes given".into()));
    }
    let counts = split_counts(scenes.len(), ratios)?;
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    order.shuffle(&mut stream(seed, "manifest-split"));

    let mut split_of = vec![Split::Train; scenes.len()];
    for (rank, idx) in order.iter().enumerate() {
        split_of[*idx] = if rank < counts[0] {
            Split::Train
        } else if rank < counts[0] + counts[1] {
            Split::Val
        } else {
            Split::Map
        };
    }

    let mut records = Vec::new();
    for (entry, split) in scenes.iter().zip(&split_of) {
        let offsets = tile_offsets(entry.scene.height, entry.scene.width, patch_size, stride)?;
        for (y, x) in offsets {
            let label = label_patch(entry.mask, y, x, patch_size, 0.5)?;
            records.push(ManifestRecord {
                path: entry.path.clone(),
                x,
                y,
                label,
                split: *split,
            });
        }
    }
    Ok(DatasetManifest {
        patch_size,
        num_classes: 2,
        records,
    })
}

pub fn encode_manifest(m: &DatasetManifest) -> String {
    let mut out = String::new();
    out.push_str(&format!("#patch_size\t{}\n", m.patch_size));
    out.push_str(&format!("#num_classes\t{}\n", m.num_classes));
    for r in &m.records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.path, r.x, r.y, r.label, r.split
        ));
    }
    out
}

pub fn decode_manifest(text: &str) -> Result<DatasetManifest> {
    let mut patch_size = None;
    let mut num_classes = None;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = |what: &str| HmError::Format(format!("manifest line {}: {what}", lineno + 1));
        if let Some(key) = fields[0].strip_prefix('#') {
            if fields.len() != 2 {
                return Err(bad("header needs exactly one value"));
            }
            let value: usize = fields[1].parse().map_err(|_| bad("unreadable header value"))?;
            match key {
                "patch_size" => patch_size = Some(value),
                "num_classes" => num_classes = Some(value),
                _ => return Err(bad("unknown header key")),
            }
            continue;
        }
        if fields.len() != 5 {
            return Err(bad("expected 5 tab-separated fields"));
        }
        records.push(ManifestRecord {
            path: fields[0].to_string(),
            x: fields[1].parse().map_err(|_| bad("unreadable x"))?,
            y: fields[2].parse().map_err(|_| bad("unreadable y"))?,
            label: fields[3].parse().map_err(|_| bad("unreadable label"))?,
            split: Split::parse(fields[4])?,
        });
    }
    Ok(DatasetManifest {
        patch_size: patch_size.ok_or_else(|| HmError::Format("manifest missing #patch_size".into()))?,
        num_classes: num_classes
            .ok_or_else(|| HmError::Format("manifest missing #num_classes".into()))?,
        records,
    })
}

pub fn write_manifest(path: impl AsRef<Path>, m: &DatasetManifest) -> Result<()> {
    fs::write(path.as_ref(), encode_manifest(m)).map_err(|e| HmError::io(path.as_ref(), e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| HmError::io(path.as_ref(), e))?;
    decode_manifest(&text)
}
