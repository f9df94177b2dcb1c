//! 2-D neighbor embedding of patch feature vectors (SNE family with a
//! Student-t low-dimensional kernel) and the image-scatter montage.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::raster::Raster;
use crate::rng;

/// Optimizer settings; the defaults are the usual SNE-family values.
#[derive(Debug, Clone)]
pub struct EmbeddingConfig {
    pub perplexity: f64,
    pub iterations: usize,
    /// Affinity multiplier during the first `exaggeration_iters` iterations.
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub step_size: f64,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    /// Iteration at which momentum switches to its final value.
    pub momentum_switch_iter: usize,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            perplexity: 30.0,
            iterations: 1000,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            step_size: 200.0,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch_iter: 250,
            seed: 0,
        }
    }
}

/// Symmetrized pairwise affinities: `probs` is row-major `n x n`, zero
/// diagonal, entries summing to 1. `betas` holds the per-row Gaussian
/// precision found by the perplexity search.
#[derive(Debug, Clone)]
pub struct Affinities {
    pub n: usize,
    pub probs: Vec<f64>,
    pub betas: Vec<f64>,
}

fn check_perplexity(perplexity: f64, n: usize) -> Result<()> {
    if !(perplexity > 1.0) || !perplexity.is_finite() {
        return Err(Error::input(format!(
            "perplexity must be a finite value > 1, got {perplexity}"
        )));
    }
    if perplexity >= n as f64 / 3.0 {
        return Err(Error::input(format!(
            "perplexity {perplexity} infeasible for {n} points (needs perplexity < N/3)"
        )));
    }
    Ok(())
}

/// Conditional-affinity row for point `i` given a precision `beta`; writes
/// normalized probabilities into `row` and returns the row entropy (nats).
fn conditional_row(d2: &[f64], i: usize, beta: f64, row: &mut [f64]) -> f64 {
    let n = row.len();
    // Shift by the smallest off-diagonal distance to keep exp() in range.
    let mut dmin = f64::INFINITY;
    for j in 0..n {
        if j != i && d2[i * n + j] < dmin {
            dmin = d2[i * n + j];
        }
    }
    let mut sum = 0.0f64;
    for j in 0..n {
        if j == i {
            row[j] = 0.0;
            continue;
        }
        let p = math::exp(-beta * (d2[i * n + j] - dmin));
        row[j] = p;
        sum += p;
    }
    let inv = 1.0 / sum;
    let mut entropy = 0.0f64;
    for (j, p) in row.iter_mut().enumerate() {
        if j == i {
            continue;
        }
        *p *= inv;
        if *p > 0.0 {
            entropy -= *p * math::ln(*p);
        }
    }
    entropy
}

/// Per-row Gaussian bandwidths are found by bisection (at most 50 steps) so
/// that each row's smooth neighbor count `2^H` matches the target
/// perplexity within 1e-5; the conditional matrix is then symmetrized to
/// `(P + P^T) / 2N`. Duplicate points are fine (their rows come out
/// uniform).
pub fn pairwise_affinities(x: &[f32], dim: usize, perplexity: f64) -> Result<Affinities> {
    if dim == 0 {
        return Err(Error::input("feature dimension must be >= 1"));
    }
    if x.len() % dim != 0 {
        return Err(Error::input(format!(
            "feature buffer length {} is not a multiple of dim {dim}",
            x.len()
        )));
    }
    let n = x.len() / dim;
    if n < 4 {
        return Err(Error::input(format!("need at least 4 points, got {n}")));
    }
    check_perplexity(perplexity, n)?;

    // Pairwise squared distances in f64.
    let mut d2 = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0f64;
            for d in 0..dim {
                let diff = f64::from(x[i * dim + d]) - f64::from(x[j * dim + d]);
                acc += diff * diff;
            }
            d2[i * n + j] = acc;
            d2[j * n + i] = acc;
        }
    }

    let target = math::ln(perplexity);
    let mut conditional = vec![0.0f64; n * n];
    let mut betas = vec![1.0f64; n];
    for i in 0..n {
        let row_start = i * n;
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut beta = 1.0f64;
        for _ in 0..50 {
            let h = conditional_row(&d2, i, beta, &mut conditional[row_start..row_start + n]);
            // 2^H(bits) == e^H(nats); compare in the perplexity domain.
            if (math::exp(h) - perplexity).abs() < 1e-5 {
                break;
            }
            if h > target {
                // Too many effective neighbors: sharpen.
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        betas[i] = beta;
    }

    let mut probs = vec![0.0f64; n * n];
    let scale = 1.0 / (2.0 * n as f64);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            probs[i * n + j] = (conditional[i * n + j] + conditional[j * n + i]) * scale;
        }
    }
    Ok(Affinities { n, probs, betas })
}

/// 2-D embedding with its per-iteration objective trace.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub n: usize,
    /// Row-major `n x 2`.
    pub coords: Vec<f64>,
    pub kl_trace: Vec<f64>,
}

/// Student-t (1 d.o.f.) kernel weights and their sum for the current layout.
fn t_kernel(coords: &[f64], n: usize, w: &mut [f64]) -> f64 {
    let mut sum = 0.0f64;
    for i in 0..n {
        w[i * n + i] = 0.0;
        for j in (i + 1)..n {
            let dy = coords[i * 2] - coords[j * 2];
            let dx = coords[i * 2 + 1] - coords[j * 2 + 1];
            let v = 1.0 / (1.0 + dy * dy + dx * dx);
            w[i * n + j] = v;
            w[j * n + i] = v;
            sum += 2.0 * v;
        }
    }
    sum
}

/// KL divergence of the embedding's Student-t distribution from the target
/// affinities. Non-negative by construction.
pub fn kl_divergence(p: &Affinities, coords: &[f64]) -> f64 {
    let n = p.n;
    let mut w = vec![0.0f64; n * n];
    let sum_w = t_kernel(coords, n, &mut w);
    let mut kl = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p.probs[i * n + j];
            if pij > 0.0 {
                let qij = w[i * n + j] / sum_w;
                kl += pij * (math::ln(pij) - math::ln(qij));
            }
        }
    }
    kl
}

/// Analytic gradient of the objective with respect to the coordinates:
/// `4 * sum_j (p_ij - q_ij) * w_ij * (y_i - y_j)`.
fn kl_gradient_into(probs: &[f64], n: usize, coords: &[f64], grad: &mut [f64], w: &mut [f64]) {
    let sum_w = t_kernel(coords, n, w);
    for g in grad.iter_mut() {
        *g = 0.0;
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let wij = w[i * n + j];
            let qij = wij / sum_w;
            let factor = 4.0 * (probs[i * n + j] - qij) * wij;
            let dy = coords[i * 2] - coords[j * 2];
            let dx = coords[i * 2 + 1] - coords[j * 2 + 1];
            grad[i * 2] += factor * dy;
            grad[i * 2 + 1] += factor * dx;
        }
    }
}

/// Gradient of [`kl_divergence`] at `coords` (exposed for diagnostics).
pub fn kl_gradient(p: &Affinities, coords: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0f64; p.n * 2];
    let mut w = vec![0.0f64; p.n * p.n];
    kl_gradient_into(&p.probs, p.n, coords, &mut grad, &mut w);
    grad
}

/// Gradient descent with momentum and early exaggeration from a seeded
/// Normal(0, 1e-4) start. The trace records the objective against the true
/// (un-exaggerated) affinities at every iteration.
pub fn tsne_fit(p: &Affinities, cfg: &EmbeddingConfig) -> Result<Embedding> {
    let n = p.n;
    if cfg.iterations == 0 {
        return Err(Error::input("iterations must be >= 1"));
    }
    check_perplexity(cfg.perplexity, n)?;

    let mut rng = rng::stream(cfg.seed, "tsne-init");
    let mut coords = Vec::with_capacity(n * 2);
    for _ in 0..n * 2 {
        coords.push(0.01 * rng::standard_normal(&mut rng));
    }

    // Exaggerated copy drives the early iterations.
    let exaggerated: Vec<f64> = p.probs.iter().map(|v| v * cfg.early_exaggeration).collect();

    let mut velocity = vec![0.0f64; n * 2];
    let mut grad = vec![0.0f64; n * 2];
    let mut w = vec![0.0f64; n * n];
    let mut trace = Vec::with_capacity(cfg.iterations);

    for iter in 0..cfg.iterations {
        let probs = if iter < cfg.exaggeration_iters {
            &exaggerated
        } else {
            &p.probs
        };
        kl_gradient_into(probs, n, &coords, &mut grad, &mut w);
        for g in &grad {
            if !g.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite embedding gradient at iteration {iter}"
                )));
            }
        }
        let momentum = if iter < cfg.momentum_switch_iter {
            cfg.momentum_initial
        } else {
            cfg.momentum_final
        };
        for ((y, v), g) in coords.iter_mut().zip(&mut velocity).zip(&grad) {
            *v = momentum * *v - cfg.step_size * *g;
            *y += *v;
        }
        trace.push(kl_divergence(p, &coords));
    }

    Ok(Embedding {
        n,
        coords,
        kl_trace: trace,
    })
}

/// Paste patch thumbnails onto a canvas at their embedding coordinates,
/// affinely scaled with a 5% margin; later patches paint over earlier ones.
pub fn image_scatter(
    emb: &Embedding,
    patches: &[Raster],
    canvas_h: usize,
    canvas_w: usize,
) -> Result<Raster> {
    if patches.len() != emb.n {
        return Err(Error::input(format!(
            "{} patches for {} embedded points",
            patches.len(),
            emb.n
        )));
    }
    if canvas_h == 0 || canvas_w == 0 {
        return Err(Error::input("canvas must be non-empty"));
    }
    let mut canvas = Raster::zeros(canvas_h, canvas_w);

    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..emb.n {
        ymin = ymin.min(emb.coords[i * 2]);
        ymax = ymax.max(emb.coords[i * 2]);
        xmin = xmin.min(emb.coords[i * 2 + 1]);
        xmax = xmax.max(emb.coords[i * 2 + 1]);
    }
    let margin_y = canvas_h as f64 * 0.05;
    let margin_x = canvas_w as f64 * 0.05;
    let span_y = ymax - ymin;
    let span_x = xmax - xmin;

    for (i, patch) in patches.iter().enumerate() {
        // Degenerate spans (a single point, collinear coordinates) center.
        let fy = if span_y > 0.0 {
            (emb.coords[i * 2] - ymin) / span_y
        } else {
            0.5
        };
        let fx = if span_x > 0.0 {
            (emb.coords[i * 2 + 1] - xmin) / span_x
        } else {
            0.5
        };
        let cy = margin_y + fy * (canvas_h as f64 - 2.0 * margin_y);
        let cx = margin_x + fx * (canvas_w as f64 - 2.0 * margin_x);
        let top = cy as isize - (patch.height / 2) as isize;
        let left = cx as isize - (patch.width / 2) as isize;
        for r in 0..patch.height {
            let y = top + r as isize;
            if y < 0 || y >= canvas_h as isize {
                continue;
            }
            for c in 0..patch.width {
                let x = left + c as isize;
                if x < 0 || x >= canvas_w as isize {
                    continue;
                }
                canvas.set(y as usize, x as usize, patch.get(r, c));
            }
        }
    }
    Ok(canvas)
}
