//! Hypercolumn field properties across specs and selectors.

use hypermap_core::features::{assemble_hypercolumns, capture_activations, LayerSelector};
use hypermap_core::net::{build_network, ArchitectureSpec, Network, TrainConfig};
use hypermap_core::rng::stream;
use hypermap_core::tensor::Tensor;
use rand::Rng;

fn net_for(spec: &ArchitectureSpec, seed: u64) -> Network {
    build_network(
        spec,
        &TrainConfig {
            seed,
            ..TrainConfig::default()
        },
    )
    .unwrap()
}

fn random_patch<R: Rng>(rng: &mut R, size: usize) -> Tensor {
    Tensor::new(
        [1, size, size],
        (0..size * size).map(|_| rng.gen::<f32>()).collect::<Vec<_>>(),
    )
    .unwrap()
}

#[test]
fn descriptor_dim_equals_channel_sum_for_random_selectors_over_specs() {
    let specs = [
        ArchitectureSpec::reduced(),
        ArchitectureSpec::with_widths(24, &[(4, 3), (6, 3), (10, 3), (12, 3)], 16, 2),
        ArchitectureSpec::with_widths(48, &[(5, 5), (7, 3), (9, 3), (11, 3)], 32, 3),
    ];
    let mut rng = stream(31, "selector-sweep");
    for (si, spec) in specs.iter().enumerate() {
        let net = net_for(spec, si as u64);
        let widths: Vec<usize> = spec.conv_map_sizes().unwrap().iter().map(|(c, _)| *c).collect();
        let fcn1 = spec.fcn1_width().unwrap();
        let patch = random_patch(&mut rng, spec.input_size);
        let stack = capture_activations(&net, &patch).unwrap();
        for _ in 0..10 {
            let mut ids: Vec<usize> = (1..=widths.len()).filter(|_| rng.gen::<bool>()).collect();
            let include_fcn = rng.gen::<bool>();
            if ids.is_empty() && !include_fcn {
                ids.push(rng.gen_range(1..=widths.len()));
            }
            let sel = LayerSelector {
                layer_ids: ids.clone(),
                include_fcn,
            };
            let field = assemble_hypercolumns(&stack, &sel).unwrap();
            let want: usize = ids.iter().map(|id| widths[id - 1]).sum::<usize>()
                + if include_fcn { fcn1 } else { 0 };
            assert_eq!(field.dim, want, "spec {si}, selector {ids:?}+fcn={include_fcn}");
            assert_eq!((field.height, field.width), (spec.input_size, spec.input_size));

            // A leading conv1 block passes through bit-exact (no resampling).
            if ids.first() == Some(&1) {
                let c1 = stack.conv_map(1).unwrap();
                assert_eq!(&field.data.data()[..c1.len()], c1.data());
            }
        }
    }
}

#[test]
fn upsampled_descriptors_vary_no_faster_than_source_cells() {
    // Bilinear interpolation is Lipschitz in the source: the difference
    // between horizontally adjacent descriptors is bounded by the largest
    // adjacent-cell difference of the source map (per channel).
    let spec = ArchitectureSpec::reduced();
    let net = net_for(&spec, 5);
    let mut rng = stream(33, "continuity");
    let patch = random_patch(&mut rng, 36);
    let stack = capture_activations(&net, &patch).unwrap();

    for layer_id in 2..=4usize {
        let map = stack.conv_map(layer_id).unwrap();
        let [c, mh, mw] = match map.shape() {
            [c, h, w] => [*c, *h, *w],
            _ => unreachable!(),
        };
        // Per-channel bound over horizontal and vertical neighbors.
        let mut bound = vec![0.0f32; c];
        for ch in 0..c {
            for y in 0..mh {
                for x in 0..mw {
                    let v = map.data()[(ch * mh + y) * mw + x];
                    if x + 1 < mw {
                        bound[ch] = bound[ch].max((map.data()[(ch * mh + y) * mw + x + 1] - v).abs());
                    }
                    if y + 1 < mh {
                        bound[ch] = bound[ch].max((map.data()[(ch * mh + y + 1) * mw + x] - v).abs());
                    }
                }
            }
        }
        let sel = LayerSelector {
            layer_ids: vec![layer_id],
            include_fcn: false,
        };
        let field = assemble_hypercolumns(&stack, &sel).unwrap();
        for r in 0..field.height {
            for col in 0..field.width - 1 {
                let a = field.descriptor(r, col);
                let b = field.descriptor(r, col + 1);
                for ch in 0..c {
                    assert!(
                        (a[ch] - b[ch]).abs() <= bound[ch] + 1e-6,
                        "layer {layer_id} ch {ch} at ({r},{col})"
                    );
                }
            }
        }
    }
}

#[test]
fn assembly_is_pure_and_deterministic() {
    let spec = ArchitectureSpec::reduced();
    let net = net_for(&spec, 6);
    let mut rng = stream(34, "assembly-pure");
    let patch = random_patch(&mut rng, 36);
    let sel = LayerSelector {
        layer_ids: vec![1, 3],
        include_fcn: true,
    };
    let s1 = capture_activations(&net, &patch).unwrap();
    let s2 = capture_activations(&net, &patch).unwrap();
    let f1 = assemble_hypercolumns(&s1, &sel).unwrap();
    let f2 = assemble_hypercolumns(&s2, &sel).unwrap();
    assert_eq!(f1.data.data(), f2.data.data());
}
