//! Rayon drivers for the per-tile scene operations. Work splits across
//! independent windows/tiles and results are collected in index order, so
//! output is byte-identical to the sequential core path at any thread count.

use hypermap_core::mapping::{
    classify_window, kmeans_predict, minibatch_kmeans_fit, tile_field, tile_origins, SegmentConfig,
};
use hypermap_core::net::Network;
use hypermap_core::raster::{LabelGrid, SceneRaster};
use rayon::prelude::*;

use crate::{HmError, Result};

/// Parallel [`hypermap_core::mapping::classify_scene_blocks`].
pub fn classify_scene_blocks_par(
    net: &Network,
    scene: &SceneRaster,
    block: usize,
) -> Result<LabelGrid> {
    if block == 0 {
        return Err(HmError::Input("block size must be >= 1".into()));
    }
    if scene.height < block || scene.width < block {
        return Err(HmError::Input(format!(
            "scene {}x{} smaller than one {block}x{block} block",
            scene.height, scene.width
        )));
    }
    let (rows, cols) = LabelGrid::geometry(scene.height, scene.width, block);
    let labels: Vec<u8> = (0..rows * cols)
        .into_par_iter()
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            classify_window(net, scene, r * block + block / 2, c * block + block / 2)
        })
        .collect::<hypermap_core::Result<Vec<u8>>>()?;
    Ok(LabelGrid::new(rows, cols, block, labels)?)
}

/// Parallel [`hypermap_core::mapping::segment_pixels`]: tile fields are
/// computed concurrently; sampling order, the k-means fit and the output
/// assembly match the sequential path exactly.
pub fn segment_pixels_par(
    net: &Network,
    scene: &SceneRaster,
    cfg: &SegmentConfig,
) -> Result<LabelGrid> {
    if cfg.sample_stride == 0 {
        return Err(HmError::Input("sample_stride must be >= 1".into()));
    }
    if cfg.k < 2 {
        return Err(HmError::Input(format!("K must be >= 2, got {}", cfg.k)));
    }
    let size = net.spec.input_size;
    let origins = tile_origins(scene.height, scene.width, size);

    // Fit samples per tile, concatenated in tile order (matches core).
    let per_tile: Vec<(usize, Vec<f32>)> = origins
        .par_iter()
        .map(|&(or, oc)| {
            let field = tile_field(net, scene, or, oc, &cfg.selector)?;
            let mut local = Vec::new();
            let mut buf = vec![0.0f32; field.dim];
            for y in 0..field.height {
                let gy = or + y;
                if gy >= scene.height || gy % cfg.sample_stride != 0 {
                    continue;
                }
                for x in 0..field.width {
                    let gx = oc + x;
                    if gx >= scene.width || gx % cfg.sample_stride != 0 {
                        continue;
                    }
                    field.copy_descriptor(y, x, &mut buf);
                    local.extend_from_slice(&buf);
                }
            }
            Ok((field.dim, local))
        })
        .collect::<hypermap_core::Result<Vec<_>>>()?;
    let dim = per_tile.first().map(|(d, _)| *d).unwrap_or(0);
    let mut samples = Vec::new();
    for (_, local) in &per_tile {
        samples.extend_from_slice(local);
    }

    let model = minibatch_kmeans_fit(
        &samples,
        dim,
        cfg.k,
        cfg.kmeans_batch_size,
        cfg.kmeans_iterations,
        cfg.seed,
    )?;

    // Dense prediction per tile; disjoint regions assembled in order.
    let tiles: Vec<(usize, usize, Vec<u8>, usize, usize)> = origins
        .par_iter()
        .map(|&(or, oc)| {
            let field = tile_field(net, scene, or, oc, &cfg.selector)?;
            let h = field.height.min(scene.height - or);
            let w = field.width.min(scene.width - oc);
            let mut flat = Vec::with_capacity(h * w * dim);
            let mut buf = vec![0.0f32; dim];
            for y in 0..h {
                for x in 0..w {
                    field.copy_descriptor(y, x, &mut buf);
                    flat.extend_from_slice(&buf);
                }
            }
            let labels = kmeans_predict(&model, &flat)?;
            Ok((or, oc, labels, h, w))
        })
        .collect::<hypermap_core::Result<Vec<_>>>()?;

    let mut grid = LabelGrid::zeros(scene.height, scene.width, 1);
    for (or, oc, labels, h, w) in tiles {
        for y in 0..h {
            for x in 0..w {
                grid.set(or + y, oc + x, labels[y * w + x]);
            }
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hypermap_core::features::LayerSelector;
    use hypermap_core::mapping::{classify_scene_blocks, segment_pixels};
    use hypermap_core::net::{build_network, ArchitectureSpec, TrainConfig};
    use hypermap_core::synth::{generate_synthetic_scene, SyntheticSceneConfig};

    #[test]
    fn parallel_drivers_match_sequential_core_exactly() {
        let net = build_network(
            &ArchitectureSpec::reduced(),
            &TrainConfig {
                seed: 77,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let (scene, _) =
            generate_synthetic_scene(&SyntheticSceneConfig::new(90, 90, 0.5, 4)).unwrap();

        let seq = classify_scene_blocks(&net, &scene, 16).unwrap();
        let par = classify_scene_blocks_par(&net, &scene, 16).unwrap();
        assert_eq!(seq, par);

        let cfg = SegmentConfig {
            sample_stride: 4,
            seed: 2,
            kmeans_iterations: 12,
            ..SegmentConfig::new(2, LayerSelector::all_convs(&net))
        };
        let seq = segment_pixels(&net, &scene, &cfg).unwrap();
        let par = segment_pixels_par(&net, &scene, &cfg).unwrap();
        assert_eq!(seq, par);
    }
}
