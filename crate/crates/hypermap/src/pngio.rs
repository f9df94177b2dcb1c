//! Color-mapped PNG previews for label grids.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use hypermap_core::raster::LabelGrid;

use crate::{HmError, Result};

/// Fixed preview palette; class `k` uses entry `k % 12`.
pub const PALETTE: [[u8; 3]; 12] = [
    [27, 158, 119],  // teal
    [217, 95, 2],    // orange
    [117, 112, 179], // violet
    [231, 41, 138],  // magenta
    [102, 166, 30],  // green
    [230, 171, 2],   // mustard
    [166, 118, 29],  // brown
    [102, 102, 102], // gray
    [31, 120, 180],  // blue
    [178, 223, 138], // light green
    [251, 154, 153], // rose
    [253, 191, 111], // apricot
];

/// Write one RGB pixel per grid cell using the fixed palette.
pub fn write_label_png(path: impl AsRef<Path>, grid: &LabelGrid) -> Result<()> {
    let path = path.as_ref();
    let mut data = Vec::with_capacity(grid.rows * grid.cols * 3);
    for label in &grid.labels {
        data.extend_from_slice(&PALETTE[usize::from(*label) % PALETTE.len()]);
    }
    let file = File::create(path).map_err(|e| HmError::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), grid.cols as u32, grid.rows as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| HmError::Format(format!("{}: png header: {e}", path.display())))?;
    writer
        .write_image_data(&data)
        .map_err(|e| HmError::Format(format!("{}: png data: {e}", path.display())))?;
    Ok(())
}
