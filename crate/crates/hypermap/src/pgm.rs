//! Binary PGM (P5) reader/writer, the single-band raster container for
//! scenes, masks, label grids and panels. Values are scaled to [0, 1]
//! internally by 1/maxval; 16-bit samples are big-endian per the format.

use std::fs;
use std::path::Path;

use hypermap_core::raster::{LabelGrid, Raster, SceneRaster};

use crate::{HmError, Result};

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, what: &str) -> HmError {
        HmError::Format(format!("{what} at byte offset {}", self.pos))
    }

    fn skip_space_and_comments(&mut self) -> Result<()> {
        loop {
            while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.buf.len() && self.buf[self.pos] == b'#' {
                while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            return Ok(());
        }
    }

    fn ascii_uint(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments()?;
        let start = self.pos;
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err(&format!("expected {what}")));
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err(&format!("unreadable {what}")))
    }
}

/// Parse a P5 PGM byte buffer into dimensions and [0,1] samples.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, u16, Vec<f32>)> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(HmError::Format("bad magic: expected \"P5\"".into()));
    }
    cur.pos = 2;
    let width = cur.ascii_uint("width")? as usize;
    let height = cur.ascii_uint("height")? as usize;
    let maxval = cur.ascii_uint("maxval")?;
    if width == 0 || height == 0 {
        return Err(cur.err("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(cur.err("maxval outside 1..=65535"));
    }
    // Exactly one whitespace byte separates the header from the samples.
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(cur.err("missing whitespace before samples"));
    }
    cur.pos += 1;

    let n = width * height;
    let wide = maxval > 255;
    let need = n * if wide { 2 } else { 1 };
    if bytes.len() - cur.pos < need {
        return Err(HmError::Format(format!(
            "truncated sample data at byte offset {}: need {need} bytes, have {}",
            cur.pos,
            bytes.len() - cur.pos
        )));
    }
    let scale = 1.0f32 / maxval as f32;
    let mut pixels = Vec::with_capacity(n);
    if wide {
        for chunk in bytes[cur.pos..cur.pos + need].chunks_exact(2) {
            let v = u16::from_be_bytes([chunk[0], chunk[1]]);
            pixels.push(f32::from(v.min(maxval as u16)) * scale);
        }
    } else {
        for b in &bytes[cur.pos..cur.pos + need] {
            pixels.push(f32::from(*b) * scale);
        }
    }
    Ok((height, width, maxval as u16, pixels))
}

/// Serialize [0,1] samples as a P5 PGM (values are quantized by rounding).
pub fn encode_pgm(height: usize, width: usize, pixels: &[f32], maxval: u16) -> Vec<u8> {
    assert_eq!(pixels.len(), height * width);
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    let m = f32::from(maxval);
    if maxval > 255 {
        for v in pixels {
            let q = (v.clamp(0.0, 1.0) * m + 0.5) as u16;
            out.extend_from_slice(&q.to_be_bytes());
        }
    } else {
        for v in pixels {
            out.push((v.clamp(0.0, 1.0) * m + 0.5) as u8);
        }
    }
    out
}

/// Read a PGM file as a scene (nominal resolution is not stored in the
/// container and comes back as 0).
pub fn read_pgm(path: impl AsRef<Path>) -> Result<SceneRaster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| HmError::io(path, e))?;
    let (h, w, _, pixels) =
        decode_pgm(&bytes).map_err(|e| prefix_path(path, e))?;
    Ok(SceneRaster::new(h, w, pixels, 0.0)?)
}

fn prefix_path(path: &Path, e: HmError) -> HmError {
    match e {
        HmError::Format(m) => HmError::Format(format!("{}: {m}", path.display())),
        other => other,
    }
}

pub fn write_scene_pgm(path: impl AsRef<Path>, scene: &SceneRaster, maxval: u16) -> Result<()> {
    let bytes = encode_pgm(scene.height, scene.width, &scene.band, maxval);
    fs::write(path.as_ref(), bytes).map_err(|e| HmError::io(path.as_ref(), e))
}

pub fn write_raster_pgm(path: impl AsRef<Path>, raster: &Raster, maxval: u16) -> Result<()> {
    let bytes = encode_pgm(raster.height, raster.width, &raster.pixels, maxval);
    fs::write(path.as_ref(), bytes).map_err(|e| HmError::io(path.as_ref(), e))
}

/// Write a label grid as an 8-bit raster carrying raw class indices
/// (one cell per sample, maxval 255).
pub fn write_label_pgm(path: impl AsRef<Path>, grid: &LabelGrid) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", grid.cols, grid.rows).into_bytes();
    out.extend_from_slice(&grid.labels);
    fs::write(path.as_ref(), out).map_err(|e| HmError::io(path.as_ref(), e))
}

/// Debug dump of a hypercolumn field: one min-max normalized PGM per
/// descriptor dimension (`plane_000.pgm`, `plane_001.pgm`, ...).
pub fn write_hypercolumn_planes(
    dir: impl AsRef<Path>,
    field: &hypermap_core::features::HypercolumnField,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| HmError::io(dir, e))?;
    let plane_len = field.height * field.width;
    for d in 0..field.dim {
        let plane = &field.data.data()[d * plane_len..(d + 1) * plane_len];
        let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
        for v in plane {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        let scaled: Vec<f32> = if hi > lo {
            plane.iter().map(|v| (v - lo) / (hi - lo)).collect()
        } else {
            vec![0.0; plane_len]
        };
        let bytes = encode_pgm(field.height, field.width, &scaled, 255);
        let path = dir.join(format!("plane_{d:03}.pgm"));
        fs::write(&path, bytes).map_err(|e| HmError::io(&path, e))?;
    }
    Ok(())
}
