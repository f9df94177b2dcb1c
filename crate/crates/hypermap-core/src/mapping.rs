//! The two settlement-mapping tasks: block-level classification of large
//! scenes through a centered context window, and pixel-level segmentation by
//! mini-batch k-means over hypercolumn descriptors.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{assemble_hypercolumns, capture_activations, HypercolumnField, LayerSelector};
use crate::net::{argmax_lowest, forward, Network};
use crate::raster::{LabelGrid, SceneRaster};
use crate::rng;
use crate::tensor::Tensor;

/// Copy the `size x size` window centered at `(cy, cx)` out of a scene,
/// mirroring across the borders where the window overhangs.
pub fn extract_window(scene: &SceneRaster, cy: usize, cx: usize, size: usize) -> Tensor {
    let half = (size / 2) as isize;
    let top = cy as isize - half;
    let left = cx as isize - half;
    let mut data = Vec::with_capacity(size * size);
    for dy in 0..size as isize {
        for dx in 0..size as isize {
            data.push(scene.get_reflect(top + dy, left + dx));
        }
    }
    Tensor::new([1, size, size], data).expect("window length invariant")
}

/// Classify one context window centered at `(cy, cx)`: argmax of the final
/// softmax layer, ties to the lowest class index.
pub fn classify_window(net: &Network, scene: &SceneRaster, cy: usize, cx: usize) -> Result<u8> {
    let window = extract_window(scene, cy, cx, net.spec.input_size);
    let (logits, _) = forward(net, &window, false)?;
    Ok(argmax_lowest(logits.data()) as u8)
}

/// Block-level scene map: every `block x block` cell is labeled by
/// classifying a context window (the network's input size) centered on the
/// cell. A 1728x1728 scene at block 16 yields a 108x108 grid.
pub fn classify_scene_blocks(net: &Network, scene: &SceneRaster, block: usize) -> Result<LabelGrid> {
    if block == 0 {
        return Err(Error::input("block size must be >= 1"));
    }
    if scene.height < block || scene.width < block {
        return Err(Error::input(format!(
            "scene {}x{} smaller than one {block}x{block} block",
            scene.height, scene.width
        )));
    }
    let (rows, cols) = LabelGrid::geometry(scene.height, scene.width, block);
    let mut grid = LabelGrid::zeros(rows, cols, block);
    for r in 0..rows {
        let cy = r * block + block / 2;
        for c in 0..cols {
            let cx = c * block + block / 2;
            grid.set(r, c, classify_window(net, scene, cy, cx)?);
        }
    }
    Ok(grid)
}

/// Fitted mini-batch k-means state: centroids, per-centroid assignment
/// counters, and the inertia measured on the fit samples after every
/// iteration.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub k: usize,
    pub dim: usize,
    /// Row-major `k x dim`.
    pub centroids: Vec<f32>,
    pub counts: Vec<u64>,
    pub inertia_trace: Vec<f64>,
}

impl ClusterModel {
    pub fn centroid(&self, j: usize) -> &[f32] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }
}

fn dist2(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let d = f64::from(*x) - f64::from(*y);
        acc += d * d;
    }
    acc
}

fn nearest_centroid(model_centroids: &[f32], dim: usize, k: usize, sample: &[f32]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = dist2(sample, &model_centroids[0..dim]);
    for j in 1..k {
        let d = dist2(sample, &model_centroids[j * dim..(j + 1) * dim]);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, best_d)
}

/// k-means++ seeding: first centroid uniform, then D^2-weighted picks. A
/// degenerate weight sum (duplicate points) reseeds from the farthest point.
fn kmeans_plus_plus<R: Rng>(samples: &[f32], dim: usize, k: usize, rng: &mut R) -> Vec<f32> {
    let n = samples.len() / dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(&samples[first * dim..(first + 1) * dim]);

    let mut d2 = vec![0.0f64; n];
    for (i, d) in d2.iter_mut().enumerate() {
        *d = dist2(&samples[i * dim..(i + 1) * dim], &centroids[0..dim]);
    }
    while centroids.len() < k * dim {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 && total.is_finite() {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                u -= *d;
                if u <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All remaining mass sits on already-chosen points; fall back to
            // the farthest sample (argmax of D^2, first index on ties).
            let mut far = 0usize;
            for (i, d) in d2.iter().enumerate() {
                if *d > d2[far] {
                    far = i;
                }
            }
            far
        };
        let new = &samples[pick * dim..(pick + 1) * dim];
        centroids.extend_from_slice(new);
        for (i, d) in d2.iter_mut().enumerate() {
            let nd = dist2(&samples[i * dim..(i + 1) * dim], new);
            if nd < *d {
                *d = nd;
            }
        }
    }
    centroids
}

fn inertia(samples: &[f32], dim: usize, centroids: &[f32], k: usize) -> f64 {
    let n = samples.len() / dim;
    let mut acc = 0.0f64;
    for i in 0..n {
        let (_, d) = nearest_centroid(centroids, dim, k, &samples[i * dim..(i + 1) * dim]);
        acc += d;
    }
    acc
}

/// Mini-batch k-means (k-means++ init, per-center learning rate 1/count):
/// each iteration assigns one random batch against a centroid snapshot, then
/// replays the batch through running-mean updates. Deterministic per seed.
pub fn minibatch_kmeans_fit(
    samples: &[f32],
    dim: usize,
    k: usize,
    batch_size: usize,
    iterations: usize,
    seed: u64,
) -> Result<ClusterModel> {
    if dim == 0 {
        return Err(Error::input("descriptor dimension must be >= 1"));
    }
    if samples.len() % dim != 0 {
        return Err(Error::input(format!(
            "sample buffer length {} is not a multiple of dim {dim}",
            samples.len()
        )));
    }
    let n = samples.len() / dim;
    if k < 2 || k > 255 {
        return Err(Error::input(format!("K must be in 2..=255, got {k}")));
    }
    if n < k {
        return Err(Error::input(format!("K={k} exceeds sample count {n}")));
    }
    if batch_size == 0 {
        return Err(Error::input("batch_size must be >= 1"));
    }

    let mut rng = rng::stream(seed, "kmeans");
    let mut centroids = kmeans_plus_plus(samples, dim, k, &mut rng);
    let mut counts = vec![0u64; k];
    let mut trace = Vec::with_capacity(iterations);
    let batch = batch_size.min(n);
    let mut assign = vec![0usize; batch];

    for _ in 0..iterations {
        let picks = rand::seq::index::sample(&mut rng, n, batch);
        for (slot, i) in assign.iter_mut().zip(picks.iter()) {
            let (j, _) = nearest_centroid(&centroids, dim, k, &samples[i * dim..(i + 1) * dim]);
            *slot = j;
        }
        for (pos, i) in picks.iter().enumerate() {
            let j = assign[pos];
            counts[j] += 1;
            let eta = 1.0f32 / counts[j] as f32;
            let c = &mut centroids[j * dim..(j + 1) * dim];
            let x = &samples[i * dim..(i + 1) * dim];
            for (cv, xv) in c.iter_mut().zip(x) {
                *cv += eta * (*xv - *cv);
            }
        }
        trace.push(inertia(samples, dim, &centroids, k));
    }

    Ok(ClusterModel {
        k,
        dim,
        centroids,
        counts,
        inertia_trace: trace,
    })
}

/// Nearest-centroid labels (squared Euclidean, ties to the lowest index).
pub fn kmeans_predict(model: &ClusterModel, samples: &[f32]) -> Result<Vec<u8>> {
    if samples.len() % model.dim != 0 {
        return Err(Error::input(format!(
            "sample buffer length {} is not a multiple of dim {}",
            samples.len(),
            model.dim
        )));
    }
    let n = samples.len() / model.dim;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (j, _) = nearest_centroid(
            &model.centroids,
            model.dim,
            model.k,
            &samples[i * model.dim..(i + 1) * model.dim],
        );
        out.push(j as u8);
    }
    Ok(out)
}

/// Parameters for [`segment_pixels`]. The k-means internals default to
/// batches of 1024 over 100 iterations.
#[derive(Debug, Clone)]
pub struct SegmentConfig {
    pub k: usize,
    pub selector: LayerSelector,
    /// Fit samples are taken every `sample_stride` pixels in both axes;
    /// prediction is always dense.
    pub sample_stride: usize,
    pub seed: u64,
    pub kmeans_batch_size: usize,
    pub kmeans_iterations: usize,
}

impl SegmentConfig {
    pub fn new(k: usize, selector: LayerSelector) -> Self {
        SegmentConfig {
            k,
            selector,
            sample_stride: 4,
            seed: 0,
            kmeans_batch_size: 1024,
            kmeans_iterations: 100,
        }
    }
}

/// Origins of the non-overlapping tile grid covering an `h x w` scene with
/// `size`-pixel tiles (the last row/column tiles overhang and read the
/// scene through reflection).
pub fn tile_origins(h: usize, w: usize, size: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut r = 0;
    while r < h {
        let mut c = 0;
        while c < w {
            out.push((r, c));
            c += size;
        }
        r += size;
    }
    out
}

/// Hypercolumn field of the tile whose top-left corner is `(origin_r,
/// origin_c)`; the tile is reflect-padded where it overhangs the scene.
pub fn tile_field(
    net: &Network,
    scene: &SceneRaster,
    origin_r: usize,
    origin_c: usize,
    sel: &LayerSelector,
) -> Result<HypercolumnField> {
    let size = net.spec.input_size;
    let half = size / 2;
    let tile = extract_window(
        scene,
        origin_r + half,
        origin_c + half,
        size,
    );
    let stack = capture_activations(net, &tile)?;
    assemble_hypercolumns(&stack, sel)
}

/// Pixel-level segmentation: tile the scene, build hypercolumn fields, fit
/// mini-batch k-means on subsampled pixels (tile-major order), then label
/// every pixel with its nearest centroid. Returns a cell-size-1 grid.
pub fn segment_pixels(net: &Network, scene: &SceneRaster, cfg: &SegmentConfig) -> Result<LabelGrid> {
    if cfg.sample_stride == 0 {
        return Err(Error::input("sample_stride must be >= 1"));
    }
    if cfg.k < 2 {
        return Err(Error::input(format!("K must be >= 2, got {}", cfg.k)));
    }
    let size = net.spec.input_size;
    let origins = tile_origins(scene.height, scene.width, size);

    // Pass 1: collect fit samples on the stride grid, tile-major.
    let mut samples: Vec<f32> = Vec::new();
    let mut dim = 0usize;
    for &(or, oc) in &origins {
        let field = tile_field(net, scene, or, oc, &cfg.selector)?;
        dim = field.dim;
        let mut buf = vec![0.0f32; dim];
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
                samples.extend_from_slice(&buf);
            }
        }
    }

    let model = minibatch_kmeans_fit(
        &samples,
        dim,
        cfg.k,
        cfg.kmeans_batch_size,
        cfg.kmeans_iterations,
        cfg.seed,
    )?;

    // Pass 2: dense prediction, tile fields recomputed.
    let mut grid = LabelGrid::zeros(scene.height, scene.width, 1);
    let mut buf = vec![0.0f32; dim];
    for &(or, oc) in &origins {
        let field = tile_field(net, scene, or, oc, &cfg.selector)?;
        for y in 0..field.height {
            let gy = or + y;
            if gy >= scene.height {
                continue;
            }
            for x in 0..field.width {
                let gx = oc + x;
                if gx >= scene.width {
                    continue;
                }
                field.copy_descriptor(y, x, &mut buf);
                let (j, _) = nearest_centroid(&model.centroids, dim, cfg.k, &buf);
                grid.set(gy, gx, j as u8);
            }
        }
    }
    Ok(grid)
}
