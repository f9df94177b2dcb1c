//! Convolution forward pass against an independent six-nested-loop oracle.

use hypermap_core::rng::stream;
use hypermap_core::tensor::{conv2d_forward, ConvParams, Padding, Tensor};
use rand::Rng;

/// Direct cross-correlation, written independently of the library path.
#[allow(clippy::too_many_arguments)]
fn conv_oracle(
    input: &[f32],
    c_in: usize,
    h: usize,
    w: usize,
    weights: &[f32],
    bias: &[f32],
    c_out: usize,
    k: usize,
    padding: Padding,
    stride: usize,
) -> (Vec<f32>, usize, usize) {
    let pad = match padding {
        Padding::Same => (k - 1) / 2,
        Padding::Valid => 0,
    } as isize;
    let out_h = (h + 2 * pad as usize - k) / stride + 1;
    let out_w = (w + 2 * pad as usize - k) / stride + 1;
    let mut out = vec![0.0f32; c_out * out_h * out_w];
    for oc in 0..c_out {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = bias[oc];
                for ic in 0..c_in {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride) as isize + ky as isize - pad;
                            let ix = (ox * stride) as isize + kx as isize - pad;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += input[(ic * h + iy as usize) * w + ix as usize]
                                * weights[((oc * c_in + ic) * k + ky) * k + kx];
                        }
                    }
                }
                out[(oc * out_h + oy) * out_w + ox] = acc;
            }
        }
    }
    (out, out_h, out_w)
}

#[test]
fn conv2d_forward_matches_direct_loop_oracle_across_shape_sweep() {
    let mut cases = 0usize;
    for c_in in 1..=3usize {
        for hw in [4usize, 5, 6, 8] {
            for k in [1usize, 3, 5] {
                for padding in [Padding::Same, Padding::Valid] {
                    for stride in [1usize, 2] {
                        if padding == Padding::Valid && hw < k {
                            continue;
                        }
                        let c_out = 2;
                        let mut rng =
                            stream((c_in * 1000 + hw * 10 + k) as u64, "conv-oracle");
                        let input: Vec<f32> =
                            (0..c_in * hw * hw).map(|_| rng.gen::<f32>() * 2.0 - 1.0).collect();
                        let weights: Vec<f32> = (0..c_out * c_in * k * k)
                            .map(|_| rng.gen::<f32>() * 2.0 - 1.0)
                            .collect();
                        let bias: Vec<f32> =
                            (0..c_out).map(|_| rng.gen::<f32>() * 2.0 - 1.0).collect();

                        let p = ConvParams::new(
                            Tensor::new([c_out, c_in, k, k], weights.clone()).unwrap(),
                            Tensor::new([c_out], bias.clone()).unwrap(),
                            padding,
                            stride,
                        )
                        .unwrap();
                        let got = conv2d_forward(
                            &Tensor::new([c_in, hw, hw], input.clone()).unwrap(),
                            &p,
                        )
                        .unwrap();
                        let (want, oh, ow) = conv_oracle(
                            &input, c_in, hw, hw, &weights, &bias, c_out, k, padding, stride,
                        );
                        assert_eq!(got.shape(), &[c_out, oh, ow]);
                        for (g, e) in got.data().iter().zip(&want) {
                            let rel = (g - e).abs() / g.abs().max(e.abs()).max(1.0);
                            assert!(
                                rel <= 1e-6,
                                "c_in={c_in} hw={hw} k={k} {padding:?} stride={stride}: {g} vs {e}"
                            );
                        }
                        cases += 1;
                    }
                }
            }
        }
    }
    assert!(cases > 100, "sweep ran only {cases} cases");
}

#[test]
fn maxpool_matches_window_scan_oracle() {
    use hypermap_core::tensor::maxpool2x2_forward;
    let mut rng = stream(77, "pool-oracle");
    for _ in 0..20 {
        let c = rng.gen_range(1..=3);
        let h = rng.gen_range(2..=9);
        let w = rng.gen_range(2..=9);
        let data: Vec<f32> = (0..c * h * w).map(|_| rng.gen::<f32>()).collect();
        let (out, _) = maxpool2x2_forward(&Tensor::new([c, h, w], data.clone()).unwrap()).unwrap();
        let oh = h.div_ceil(2);
        let ow = w.div_ceil(2);
        for ch in 0..c {
            for py in 0..oh {
                for px in 0..ow {
                    // Replicated odd edges clamp to the last row/column.
                    let mut want = f32::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let y = (py * 2 + dy).min(h - 1);
                            let x = (px * 2 + dx).min(w - 1);
                            want = want.max(data[(ch * h + y) * w + x]);
                        }
                    }
                    assert_eq!(out.data()[(ch * oh + py) * ow + px], want);
                }
            }
        }
    }
}
