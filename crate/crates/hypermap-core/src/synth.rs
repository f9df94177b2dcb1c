//! Synthetic scene generation with pixel ground truth, grid tiling and
//! patch labeling. Scenes carry a "settlement" strip of bright rectangular
//! structures on regular spacing next to smooth low-frequency terrain, so
//! every downstream task has a known answer to recover.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::{LabelGrid, SceneRaster};
use crate::rng;
use crate::tensor::Tensor;

/// Parameters of one synthetic scene. Everything downstream is a pure
/// function of this config (including the seed).
#[derive(Debug, Clone)]
pub struct SyntheticSceneConfig {
    pub width: usize,
    pub height: usize,
    /// Fraction of scene columns covered by the settlement strip, in [0,1].
    pub settlement_density: f32,
    /// Side of each bright structure, pixels.
    pub structure_size: usize,
    /// Gap between structures, pixels.
    pub spacing: usize,
    /// Additive Gaussian pixel noise.
    pub noise_sigma: f32,
    pub seed: u64,
}

impl SyntheticSceneConfig {
    pub fn new(width: usize, height: usize, settlement_density: f32, seed: u64) -> Self {
        SyntheticSceneConfig {
            width,
            height,
            settlement_density,
            structure_size: 6,
            spacing: 3,
            noise_sigma: 0.02,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::input("scene dimensions must be positive"));
        }
        if !(0.0..=1.0).contains(&self.settlement_density) {
            return Err(Error::input(format!(
                "settlement_density {} outside [0,1]",
                self.settlement_density
            )));
        }
        if self.structure_size == 0 {
            return Err(Error::input("structure_size must be >= 1"));
        }
        Ok(())
    }
}

const BACKGROUND_LOW: f32 = 0.10;
const BACKGROUND_HIGH: f32 = 0.35;
const SETTLEMENT_GROUND: f32 = 0.18;
const STRUCTURE_BASE: f32 = 0.85;
const NOISE_GRID_CELL: usize = 24;

/// Generate a scene and its pixel ground-truth mask (1 = settlement strip,
/// structures plus the gaps between them). Deterministic per seed.
pub fn generate_synthetic_scene(cfg: &SyntheticSceneConfig) -> Result<(SceneRaster, LabelGrid)> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let mut rng = rng::stream(cfg.seed, "synth-scene");

    // Settlement strip: leftmost round(width * density) columns.
    let strip_cols = ((w as f32 * cfg.settlement_density) + 0.5) as usize;
    let strip_cols = strip_cols.min(w);

    // Smooth terrain: value noise on a coarse grid, bilinearly interpolated.
    let gh = h.div_ceil(NOISE_GRID_CELL) + 1;
    let gw = w.div_ceil(NOISE_GRID_CELL) + 1;
    let mut coarse = Vec::with_capacity(gh * gw);
    for _ in 0..gh * gw {
        coarse.push(BACKGROUND_LOW + rng.gen::<f32>() * (BACKGROUND_HIGH - BACKGROUND_LOW));
    }

    let mut band = Vec::with_capacity(h * w);
    for r in 0..h {
        let gy = r as f32 / NOISE_GRID_CELL as f32;
        let y0 = gy as usize;
        let ty = gy - y0 as f32;
        for c in 0..w {
            let gx = c as f32 / NOISE_GRID_CELL as f32;
            let x0 = gx as usize;
            let tx = gx - x0 as f32;
            let v00 = coarse[y0 * gw + x0];
            let v01 = coarse[y0 * gw + (x0 + 1).min(gw - 1)];
            let v10 = coarse[(y0 + 1).min(gh - 1) * gw + x0];
            let v11 = coarse[(y0 + 1).min(gh - 1) * gw + (x0 + 1).min(gw - 1)];
            let top = v00 + (v01 - v00) * tx;
            let bot = v10 + (v11 - v10) * tx;
            band.push(top + (bot - top) * ty);
        }
    }

    // Structures on a regular grid inside the strip, ground level between.
    let period = cfg.structure_size + cfg.spacing;
    if strip_cols > 0 {
        for r in 0..h {
            for c in 0..strip_cols {
                band[r * w + c] = SETTLEMENT_GROUND;
            }
        }
        let rows_n = h.div_ceil(period);
        let cols_n = strip_cols.div_ceil(period);
        for br in 0..rows_n {
            for bc in 0..cols_n {
                // Per-structure brightness wobble keeps the texture non-flat.
                let level = STRUCTURE_BASE + (rng.gen::<f32>() - 0.5) * 0.2;
                for dy in 0..cfg.structure_size {
                    let r = br * period + dy;
                    if r >= h {
                        continue;
                    }
                    for dx in 0..cfg.structure_size {
                        let c = bc * period + dx;
                        if c >= strip_cols {
                            continue;
                        }
                        band[r * w + c] = level;
                    }
                }
            }
        }
    }

    // Pixel noise over the whole scene, then clamp to the intensity domain.
    if cfg.noise_sigma > 0.0 {
        for v in &mut band {
            *v += cfg.noise_sigma * rng::standard_normal(&mut rng) as f32;
            *v = v.clamp(0.0, 1.0);
        }
    }

    let mut mask = LabelGrid::zeros(h, w, 1);
    for r in 0..h {
        for c in 0..strip_cols {
            mask.set(r, c, 1);
        }
    }
    let scene = SceneRaster::new(h, w, band, 0.5)?;
    Ok((scene, mask))
}

/// Number of grid positions when tiling `(h, w)` with `size`/`stride`.
pub fn patch_count(h: usize, w: usize, size: usize, stride: usize) -> (usize, usize) {
    if size > h || size > w {
        return (0, 0);
    }
    ((h - size) / stride + 1, (w - size) / stride + 1)
}

/// Top-left offsets of a row-major tiling grid.
pub fn tile_offsets(h: usize, w: usize, size: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    if stride == 0 {
        return Err(Error::input("tile stride must be >= 1"));
    }
    if size == 0 {
        return Err(Error::input("tile size must be >= 1"));
    }
    if size > h || size > w {
        return Err(Error::input(format!(
            "tile size {size} exceeds scene {h}x{w}"
        )));
    }
    let (rows, cols) = patch_count(h, w, size, stride);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push((r * stride, c * stride));
        }
    }
    Ok(out)
}

/// Copy the `size x size` window at `(r, c)` into a `[1,S,S]` patch tensor.
pub fn extract_patch(scene: &SceneRaster, r: usize, c: usize, size: usize) -> Result<Tensor> {
    if r + size > scene.height || c + size > scene.width {
        return Err(Error::input(format!(
            "patch {size}x{size} at ({r},{c}) exceeds scene {}x{}",
            scene.height, scene.width
        )));
    }
    let mut data = Vec::with_capacity(size * size);
    for y in r..r + size {
        data.extend_from_slice(&scene.band[y * scene.width + c..y * scene.width + c + size]);
    }
    Tensor::new([1, size, size], data)
}

/// Grid-crop a scene into patches with their offsets, row-major.
pub fn tile_scene(
    scene: &SceneRaster,
    size: usize,
    stride: usize,
) -> Result<Vec<(Tensor, (usize, usize))>> {
    let offsets = tile_offsets(scene.height, scene.width, size, stride)?;
    let mut out = Vec::with_capacity(offsets.len());
    for (r, c) in offsets {
        out.push((extract_patch(scene, r, c, size)?, (r, c)));
    }
    Ok(out)
}

/// Image-level label for the window at `(r, c)`: 1 iff the settlement-pixel
/// fraction is >= `threshold`.
pub fn label_patch(
    mask: &LabelGrid,
    r: usize,
    c: usize,
    size: usize,
    threshold: f32,
) -> Result<u8> {
    if mask.cell_size != 1 {
        return Err(Error::input("label_patch needs a pixel-resolution mask"));
    }
    if r + size > mask.rows || c + size > mask.cols {
        return Err(Error::input(format!(
            "patch {size}x{size} at ({r},{c}) exceeds mask {}x{}",
            mask.rows, mask.cols
        )));
    }
    let mut hits = 0usize;
    for y in r..r + size {
        for x in c..c + size {
            if mask.get(y, x) != 0 {
                hits += 1;
            }
        }
    }
    let fraction = hits as f32 / (size * size) as f32;
    Ok(u8::from(fraction >= threshold))
}
