//! Single-band raster containers shared by scene generation, mapping and
//! the rendering helpers. Intensities live in [0, 1]; quantization happens
//! only at file boundaries (in the companion IO crate).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Plain grayscale image (montages, panels, previews).
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
}

impl Raster {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::shape(format!(
                "raster {height}x{width} wants {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        Ok(Raster {
            height,
            width,
            pixels,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Raster {
            height,
            width,
            pixels: vec![0.0; height * width],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.pixels[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.pixels[r * self.width + c] = v;
    }

    /// View a single-channel `[1,S,S]` tensor as a raster.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.shape()[..] {
            [1, h, w] => Raster::new(h, w, t.data().to_vec()),
            _ => Err(Error::shape(format!(
                "expected [1,H,W] tensor, got {:?}",
                t.shape()
            ))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([1, self.height, self.width], self.pixels.clone())
            .expect("raster length invariant")
    }

    /// Box-filter downsample by an integer factor (for montage thumbnails).
    pub fn box_downsample(&self, factor: usize) -> Result<Raster> {
        if factor == 0 {
            return Err(Error::input("downsample factor must be >= 1"));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let oh = self.height.div_ceil(factor);
        let ow = self.width.div_ceil(factor);
        let mut out = Raster::zeros(oh, ow);
        for r in 0..oh {
            for c in 0..ow {
                let mut acc = 0.0f32;
                let mut n = 0u32;
                for y in r * factor..((r + 1) * factor).min(self.height) {
                    for x in c * factor..((c + 1) * factor).min(self.width) {
                        acc += self.get(y, x);
                        n += 1;
                    }
                }
                out.set(r, c, acc / n as f32);
            }
        }
        Ok(out)
    }
}

/// A large single-band scene; `nominal_resolution` is meters/pixel metadata
/// and does not influence any computation.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRaster {
    pub height: usize,
    pub width: usize,
    pub band: Vec<f32>,
    pub nominal_resolution: f32,
}

impl SceneRaster {
    pub fn new(height: usize, width: usize, band: Vec<f32>, nominal_resolution: f32) -> Result<Self> {
        if band.len() != height * width {
            return Err(Error::shape(format!(
                "scene {height}x{width} wants {} samples, got {}",
                height * width,
                band.len()
            )));
        }
        Ok(SceneRaster {
            height,
            width,
            band,
            nominal_resolution,
        })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.band[r * self.width + c]
    }

    /// Sample with mirrored (symmetric) extension outside the scene bounds.
    pub fn get_reflect(&self, r: isize, c: isize) -> f32 {
        let y = reflect_index(r, self.height);
        let x = reflect_index(c, self.width);
        self.band[y * self.width + x]
    }
}

/// Symmetric reflection: ..., 1, 0 | 0, 1, ..., n-1 | n-1, n-2, ...
fn reflect_index(i: isize, n: usize) -> usize {
    debug_assert!(n > 0);
    let period = 2 * n as isize;
    let mut m = i % period;
    if m < 0 {
        m += period;
    }
    if m >= n as isize {
        m = period - 1 - m;
    }
    m as usize
}

/// Class-index grid aligned to a scene. `cell_size == 1` makes it a
/// pixel-resolution mask or segmentation map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGrid {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: usize,
    pub labels: Vec<u8>,
}

impl LabelGrid {
    pub fn new(rows: usize, cols: usize, cell_size: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != rows * cols {
            return Err(Error::shape(format!(
                "label grid {rows}x{cols} wants {} labels, got {}",
                rows * cols,
                labels.len()
            )));
        }
        if cell_size == 0 {
            return Err(Error::input("cell_size must be >= 1"));
        }
        Ok(LabelGrid {
            rows,
            cols,
            cell_size,
            labels,
        })
    }

    pub fn zeros(rows: usize, cols: usize, cell_size: usize) -> Self {
        LabelGrid {
            rows,
            cols,
            cell_size,
            labels: vec![0; rows * cols],
        }
    }

    /// Grid rows/cols covering an `h x w` scene at the given cell size
    /// (ceil semantics: partial cells at the border still get a label).
    pub fn geometry(scene_h: usize, scene_w: usize, cell_size: usize) -> (usize, usize) {
        (scene_h.div_ceil(cell_size), scene_w.div_ceil(cell_size))
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.labels[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u8) {
        self.labels[r * self.cols + c] = v;
    }
}
