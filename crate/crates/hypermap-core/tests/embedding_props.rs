//! Embedding properties: achieved perplexity against an independent entropy
//! recomputation, gradient against finite differences of the objective, and
//! cluster recovery through the projection.

use hypermap_core::embedding::{
    image_scatter, kl_divergence, kl_gradient, pairwise_affinities, tsne_fit, EmbeddingConfig,
};
use hypermap_core::mapping::{kmeans_predict, minibatch_kmeans_fit};
use hypermap_core::raster::Raster;
use hypermap_core::rng::{standard_normal, stream};
use rand::Rng;

/// Independent oracle: rebuild the conditional row from the returned betas
/// and the raw data, then measure its entropy.
fn row_perplexity(x: &[f32], dim: usize, n: usize, i: usize, beta: f64) -> f64 {
    let mut probs = vec![0.0f64; n];
    let mut sum = 0.0;
    for j in 0..n {
        if j == i {
            continue;
        }
        let mut d2 = 0.0f64;
        for d in 0..dim {
            let diff = f64::from(x[i * dim + d]) - f64::from(x[j * dim + d]);
            d2 += diff * diff;
        }
        probs[j] = (-beta * d2).exp();
        sum += probs[j];
    }
    let mut entropy = 0.0;
    for (j, p) in probs.iter().enumerate() {
        if j == i || *p <= 0.0 {
            continue;
        }
        let q = p / sum;
        entropy -= q * q.ln();
    }
    entropy.exp() // 2^H(bits) == e^H(nats)
}

#[test]
fn achieved_row_perplexity_hits_the_target() {
    let mut rng = stream(21, "perplexity-oracle");
    let (n, dim) = (60usize, 8usize);
    let x: Vec<f32> = (0..n * dim).map(|_| rng.gen::<f32>()).collect();
    for target in [5.0f64, 12.0, 19.0] {
        let aff = pairwise_affinities(&x, dim, target).unwrap();
        for i in 0..n {
            let got = row_perplexity(&x, dim, n, i, aff.betas[i]);
            assert!(
                (got - target).abs() < 1e-5,
                "row {i}: perplexity {got} vs target {target}"
            );
        }
    }
}

#[test]
fn affinity_matrix_global_invariants_on_random_data() {
    let mut rng = stream(22, "affinity-invariants");
    let (n, dim) = (40usize, 6usize);
    let x: Vec<f32> = (0..n * dim).map(|_| rng.gen::<f32>()).collect();
    let aff = pairwise_affinities(&x, dim, 8.0).unwrap();
    let mut sum = 0.0;
    for i in 0..n {
        assert_eq!(aff.probs[i * n + i], 0.0);
        for j in 0..n {
            let v = aff.probs[i * n + j];
            assert!(v >= 0.0);
            assert!((v - aff.probs[j * n + i]).abs() < 1e-15);
            sum += v;
        }
    }
    assert!((sum - 1.0).abs() < 1e-6);
}

#[test]
fn kl_gradient_matches_finite_differences_on_toy_problems() {
    for seed in 0..5u64 {
        let mut rng = stream(seed, "kl-gradcheck");
        let (n, dim) = (10usize, 4usize);
        let x: Vec<f32> = (0..n * dim).map(|_| rng.gen::<f32>()).collect();
        let aff = pairwise_affinities(&x, dim, 2.5).unwrap();
        let coords: Vec<f64> = (0..n * 2).map(|_| standard_normal(&mut rng)).collect();
        let grad = kl_gradient(&aff, &coords);
        let eps = 1e-5;
        for i in 0..n * 2 {
            let mut plus = coords.clone();
            plus[i] += eps;
            let mut minus = coords.clone();
            minus[i] -= eps;
            let numeric = (kl_divergence(&aff, &plus) - kl_divergence(&aff, &minus)) / (2.0 * eps);
            let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-4);
            assert!(rel < 1e-3, "seed {seed} coord {i}: {} vs {numeric}", grad[i]);
        }
    }
}

#[test]
fn kl_descends_after_exaggeration_ends() {
    let mut rng = stream(23, "kl-descent");
    let (n, dim) = (40usize, 6usize);
    let x: Vec<f32> = (0..n * dim).map(|_| rng.gen::<f32>()).collect();
    let aff = pairwise_affinities(&x, dim, 6.0).unwrap();
    let cfg = EmbeddingConfig {
        perplexity: 6.0,
        iterations: 500,
        seed: 1,
        ..EmbeddingConfig::default()
    };
    let emb = tsne_fit(&aff, &cfg).unwrap();
    assert_eq!(emb.kl_trace.len(), 500);
    for v in &emb.kl_trace {
        assert!(v.is_finite() && *v >= 0.0);
    }
    let at_switch = emb.kl_trace[cfg.exaggeration_iters - 1];
    let last = *emb.kl_trace.last().unwrap();
    assert!(
        last <= at_switch,
        "KL rose after exaggeration: {last} vs {at_switch}"
    );
}

fn best_permutation_accuracy(pred: &[u8], truth: &[u8], k: usize) -> f64 {
    // k is small; score every relabeling (Heap's algorithm).
    fn heap(arr: &mut Vec<u8>, n: usize, out: &mut Vec<Vec<u8>>) {
        if n <= 1 {
            out.push(arr.clone());
            return;
        }
        for i in 0..n {
            heap(arr, n - 1, out);
            if n % 2 == 0 {
                arr.swap(i, n - 1);
            } else {
                arr.swap(0, n - 1);
            }
        }
    }
    let mut perms = Vec::new();
    heap(&mut (0..k as u8).collect(), k, &mut perms);
    let mut best = 0usize;
    for perm in perms {
        let hits = pred
            .iter()
            .zip(truth)
            .filter(|(p, t)| perm[**p as usize] == **t)
            .count();
        best = best.max(hits);
    }
    best as f64 / pred.len() as f64
}

#[test]
fn three_gaussian_clusters_in_64d_are_recovered_in_2d() {
    // 3 x 50 points in 64-D; cluster memberships must survive the projection.
    let mut rng = stream(24, "cluster-recovery");
    let dim = 64usize;
    let per = 50usize;
    let mut x = Vec::with_capacity(3 * per * dim);
    let mut truth = Vec::with_capacity(3 * per);
    for cluster in 0..3u8 {
        for _ in 0..per {
            for d in 0..dim {
                let center = if d == (cluster as usize) * 20 { 10.0 } else { 0.0 };
                x.push((center + 0.5 * standard_normal(&mut rng)) as f32);
            }
            truth.push(cluster);
        }
    }
    let aff = pairwise_affinities(&x, dim, 30.0).unwrap();
    let cfg = EmbeddingConfig {
        seed: 9,
        ..EmbeddingConfig::default()
    };
    let emb = tsne_fit(&aff, &cfg).unwrap();

    let coords32: Vec<f32> = emb.coords.iter().map(|v| *v as f32).collect();
    let model = minibatch_kmeans_fit(&coords32, 2, 3, 150, 150, 5).unwrap();
    let pred = kmeans_predict(&model, &coords32).unwrap();
    let acc = best_permutation_accuracy(&pred, &truth, 3);
    assert!(acc >= 0.9, "recovery accuracy {acc}");
}

#[test]
fn embedding_distances_depend_only_on_affinities_and_seed() {
    let mut rng = stream(25, "distance-determinism");
    let (n, dim) = (15usize, 5usize);
    let x: Vec<f32> = (0..n * dim).map(|_| rng.gen::<f32>()).collect();
    let aff = pairwise_affinities(&x, dim, 3.0).unwrap();
    let cfg = EmbeddingConfig {
        perplexity: 3.0,
        iterations: 120,
        seed: 31,
        ..EmbeddingConfig::default()
    };
    let a = tsne_fit(&aff, &cfg).unwrap();
    let b = tsne_fit(&aff, &cfg).unwrap();
    let dist = |e: &hypermap_core::embedding::Embedding, i: usize, j: usize| {
        let dy = e.coords[i * 2] - e.coords[j * 2];
        let dx = e.coords[i * 2 + 1] - e.coords[j * 2 + 1];
        (dy * dy + dx * dx).sqrt()
    };
    for i in 0..n {
        for j in 0..n {
            assert_eq!(dist(&a, i, j), dist(&b, i, j));
        }
    }
}

#[test]
fn montage_dimensions_are_exactly_as_requested() {
    let mut rng = stream(26, "montage-dims");
    let n = 8usize;
    let coords: Vec<f64> = (0..n * 2).map(|_| standard_normal(&mut rng)).collect();
    let emb = hypermap_core::embedding::Embedding {
        n,
        coords,
        kl_trace: vec![],
    };
    let patches: Vec<Raster> = (0..n).map(|_| Raster::zeros(6, 6)).collect();
    let canvas = image_scatter(&emb, &patches, 123, 77).unwrap();
    assert_eq!((canvas.height, canvas.width), (123, 77));
}
