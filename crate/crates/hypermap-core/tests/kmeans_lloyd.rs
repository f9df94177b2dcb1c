//! Mini-batch k-means against a full-batch Lloyd's-algorithm oracle on
//! well-separated Gaussian blobs.

use hypermap_core::mapping::{kmeans_predict, minibatch_kmeans_fit};
use hypermap_core::rng::{standard_normal, stream};

fn two_blobs(n_per: usize, seed: u64) -> (Vec<f32>, Vec<u8>) {
    let mut rng = stream(seed, "blobs");
    let mut samples = Vec::with_capacity(n_per * 4);
    let mut truth = Vec::with_capacity(n_per * 2);
    for (label, center) in [(0u8, (0.0f64, 0.0f64)), (1u8, (5.0, 5.0))] {
        for _ in 0..n_per {
            samples.push((center.0 + 0.3 * standard_normal(&mut rng)) as f32);
            samples.push((center.1 + 0.3 * standard_normal(&mut rng)) as f32);
            truth.push(label);
        }
    }
    (samples, truth)
}

/// Full-batch Lloyd's algorithm run to convergence; deterministic farthest-
/// point init, independent of the mini-batch implementation.
fn lloyd_oracle(samples: &[f32], dim: usize, k: usize) -> (Vec<f32>, Vec<usize>) {
    let n = samples.len() / dim;
    let dist2 = |a: &[f32], b: &[f32]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let d = f64::from(*x) - f64::from(*y);
                d * d
            })
            .sum()
    };
    // Farthest-point seeding from sample 0.
    let mut centroids: Vec<f32> = samples[0..dim].to_vec();
    while centroids.len() < k * dim {
        let mut far = 0usize;
        let mut far_d = -1.0f64;
        for i in 0..n {
            let s = &samples[i * dim..(i + 1) * dim];
            let mut nearest = f64::INFINITY;
            for c in centroids.chunks_exact(dim) {
                nearest = nearest.min(dist2(s, c));
            }
            if nearest > far_d {
                far_d = nearest;
                far = i;
            }
        }
        centroids.extend_from_slice(&samples[far * dim..(far + 1) * dim]);
    }

    let mut assign = vec![0usize; n];
    for _ in 0..200 {
        let mut changed = false;
        for i in 0..n {
            let s = &samples[i * dim..(i + 1) * dim];
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for j in 0..k {
                let d = dist2(s, &centroids[j * dim..(j + 1) * dim]);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assign[i]] += 1;
            for d in 0..dim {
                sums[assign[i] * dim + d] += f64::from(samples[i * dim + d]);
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for d in 0..dim {
                    centroids[j * dim + d] = (sums[j * dim + d] / counts[j] as f64) as f32;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (centroids, assign)
}

fn best_permutation_agreement(a: &[u8], b: &[u8]) -> f64 {
    let direct = a.iter().zip(b).filter(|(x, y)| x == y).count();
    let flipped = a.iter().zip(b).filter(|(x, y)| **x != **y).count();
    direct.max(flipped) as f64 / a.len() as f64
}

#[test]
fn minibatch_centroids_and_assignments_match_lloyd_on_blobs() {
    let (samples, _) = two_blobs(200, 3);
    let model = minibatch_kmeans_fit(&samples, 2, 2, 64, 100, 7).unwrap();

    // Centroids land within 0.1 of the blob means (up to cluster order).
    let means = [(0.0f32, 0.0f32), (5.0, 5.0)];
    let mut matched = [false, false];
    for j in 0..2 {
        let c = model.centroid(j);
        for (m, hit) in means.iter().zip(matched.iter_mut()) {
            if (c[0] - m.0).abs() < 0.1 && (c[1] - m.1).abs() < 0.1 {
                *hit = true;
            }
        }
    }
    assert!(matched[0] && matched[1], "centroids {:?}", model.centroids);

    let got = kmeans_predict(&model, &samples).unwrap();
    let (_, lloyd_assign) = lloyd_oracle(&samples, 2, 2);
    let lloyd_u8: Vec<u8> = lloyd_assign.iter().map(|v| *v as u8).collect();
    let agreement = best_permutation_agreement(&got, &lloyd_u8);
    assert!(agreement >= 0.99, "agreement {agreement}");
}

#[test]
fn fit_assignments_recover_blob_truth() {
    let (samples, truth) = two_blobs(150, 11);
    let model = minibatch_kmeans_fit(&samples, 2, 2, 50, 80, 2).unwrap();
    let got = kmeans_predict(&model, &samples).unwrap();
    let agreement = best_permutation_agreement(&got, &truth);
    assert!(agreement >= 0.99, "agreement {agreement}");
}
