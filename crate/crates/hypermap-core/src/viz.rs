//! Visual probing: pick the maximally activated feature map of a conv layer
//! and backproject it to input space deconvnet-style (switch unpooling +
//! sign-masked transposed convolution).

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::ActivationStack;
use crate::net::{LayerDesc, LayerParams, Network, ValueShape};
use crate::raster::Raster;
use crate::tensor::{conv2d_transpose, unpool2x2, Tensor};

/// How the "highest activation" map of a layer is ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRule {
    /// Largest sum of activations over the map (default).
    ActivationSum,
    /// Largest single unit anywhere in the map.
    MaxUnit,
}

/// Input-space reconstruction of one feature map.
#[derive(Debug, Clone)]
pub struct BackprojectionResult {
    pub layer_id: usize,
    pub filter_index: usize,
    /// Min-max normalized to [0, 1] for display.
    pub reconstruction: Tensor,
    /// Pre-normalization values (linear in the selected map).
    pub raw: Tensor,
    pub activation_score: f32,
}

fn filter_score(map: &Tensor, filter: usize, rule: SelectionRule) -> f32 {
    let [_, h, w] = match map.shape() {
        [c, h, w] => [*c, *h, *w],
        _ => return 0.0,
    };
    let plane = &map.data()[filter * h * w..(filter + 1) * h * w];
    match rule {
        SelectionRule::ActivationSum => plane.iter().sum(),
        SelectionRule::MaxUnit => plane.iter().copied().fold(f32::NEG_INFINITY, f32::max),
    }
}

/// Index and score of the most activated map of `layer_id` under `rule`;
/// ties break to the lowest index.
pub fn max_activation_select_by(
    stack: &ActivationStack,
    layer_id: usize,
    rule: SelectionRule,
) -> Result<(usize, f32)> {
    let map = stack.conv_map(layer_id)?;
    let channels = map.shape()[0];
    let mut best = 0usize;
    let mut best_score = filter_score(map, 0, rule);
    for f in 1..channels {
        let s = filter_score(map, f, rule);
        if s > best_score {
            best_score = s;
            best = f;
        }
    }
    Ok((best, best_score))
}

/// [`max_activation_select_by`] with the activation-sum rule.
pub fn max_activation_select(stack: &ActivationStack, layer_id: usize) -> Result<(usize, f32)> {
    max_activation_select_by(stack, layer_id, SelectionRule::ActivationSum)
}

/// Descend from the chosen map back to input space: keep only
/// `filter_index` at `layer_id`, then alternate (a) transposed convolution
/// through each layer's own weights, (b) ReLU masking by the forward signs,
/// (c) unpooling through the recorded switches. The result is min-max
/// normalized; `raw` keeps the linear values.
pub fn backproject(
    net: &Network,
    stack: &ActivationStack,
    layer_id: usize,
    filter_index: usize,
) -> Result<BackprojectionResult> {
    let selected = stack.conv_map(layer_id)?;
    let [channels, mh, mw] = match selected.shape() {
        [c, h, w] => [*c, *h, *w],
        _ => return Err(Error::state("conv map is not spatial")),
    };
    if filter_index >= channels {
        return Err(Error::input(format!(
            "filter {filter_index} out of range for {channels} maps at conv{layer_id}"
        )));
    }
    if stack.conv_maps.len() < layer_id {
        return Err(Error::state("activation stack is missing conv maps"));
    }

    // Zero every map except the selected filter.
    let mut current = Tensor::zeros([channels, mh, mw]);
    let plane = mh * mw;
    current.data_mut()[filter_index * plane..(filter_index + 1) * plane]
        .copy_from_slice(&selected.data()[filter_index * plane..(filter_index + 1) * plane]);
    let activation_score = selected.data()[filter_index * plane..(filter_index + 1) * plane]
        .iter()
        .sum();

    let shapes = net.spec.layer_shapes()?;
    // Walk the prefix of layers ending at conv #layer_id, in reverse.
    let mut conv_idx = 0usize;
    let mut pool_idx = 0usize;
    let mut weight_idx = 0usize;
    let mut steps: Vec<(usize, usize, usize, usize)> = Vec::new(); // (entry, conv_no, pool_no, weight_no)
    let mut end = None;
    for (i, layer) in net.spec.layers.iter().enumerate() {
        match layer {
            LayerDesc::Conv { .. } => {
                conv_idx += 1;
                weight_idx += 1;
                steps.push((i, conv_idx, pool_idx, weight_idx - 1));
                if conv_idx == layer_id {
                    end = Some(steps.len());
                    break;
                }
            }
            LayerDesc::Pool => {
                pool_idx += 1;
                steps.push((i, conv_idx, pool_idx, 0));
            }
            LayerDesc::Relu | LayerDesc::Dense { .. } => {}
        }
    }
    let end = end.ok_or_else(|| Error::input(format!("network has no conv layer {layer_id}")))?;

    for &(entry, conv_no, pool_no, weight_no) in steps[..end].iter().rev() {
        match net.spec.layers[entry] {
            LayerDesc::Conv { .. } => {
                // Mask by the forward signs of this conv's post-ReLU map.
                let mask_map = stack.conv_map(conv_no)?;
                if mask_map.shape() != current.shape() {
                    return Err(Error::state(format!(
                        "stack map conv{conv_no} shape {:?} does not match descent value {:?}",
                        mask_map.shape(),
                        current.shape()
                    )));
                }
                for (v, m) in current.data_mut().iter_mut().zip(mask_map.data()) {
                    if *m <= 0.0 {
                        *v = 0.0;
                    }
                }
                let params = match &net.params[weight_no] {
                    LayerParams::Conv(p) => p,
                    LayerParams::Dense(_) => return Err(Error::state("weight list out of sync")),
                };
                let (in_h, in_w) = if entry == 0 {
                    (net.spec.input_size, net.spec.input_size)
                } else {
                    match shapes[entry - 1] {
                        ValueShape::Spatial { h, w, .. } => (h, w),
                        ValueShape::Flat { .. } => {
                            return Err(Error::state("conv input is not spatial"))
                        }
                    }
                };
                current = conv2d_transpose(&current, params, in_h, in_w)?;
            }
            LayerDesc::Pool => {
                let switches = stack.switches.get(pool_no - 1).ok_or_else(|| {
                    Error::state(format!("stack is missing switches for pool {pool_no}"))
                })?;
                current = unpool2x2(&current, switches)?;
            }
            _ => {}
        }
    }

    let raw = current.clone();
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for v in current.data() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if hi > lo {
        let inv = 1.0 / (hi - lo);
        for v in current.data_mut() {
            *v = (*v - lo) * inv;
        }
    } else {
        for v in current.data_mut() {
            *v = 0.0;
        }
    }
    Ok(BackprojectionResult {
        layer_id,
        filter_index,
        reconstruction: current,
        raw,
        activation_score,
    })
}

const PANEL_SEPARATOR: usize = 2;

/// Side-by-side panel: the original patch then one tile per reconstruction,
/// uniform tile size, 2-px white separators.
pub fn render_panel(patch: &Tensor, results: &[BackprojectionResult]) -> Result<Raster> {
    if results.is_empty() {
        return Err(Error::input("render_panel needs at least one result"));
    }
    let (s_h, s_w) = match patch.shape() {
        [1, h, w] => (*h, *w),
        _ => {
            return Err(Error::shape(format!(
                "panel patch must be [1,H,W], got {:?}",
                patch.shape()
            )))
        }
    };
    for r in results {
        if r.reconstruction.shape() != [1, s_h, s_w] {
            return Err(Error::shape(format!(
                "reconstruction for conv{} has shape {:?}, expected [1,{s_h},{s_w}]",
                r.layer_id,
                r.reconstruction.shape()
            )));
        }
    }
    let tiles = 1 + results.len();
    let width = tiles * s_w + (tiles - 1) * PANEL_SEPARATOR;
    let mut panel = Raster::new(s_h, width, alloc::vec![1.0; s_h * width])?;
    let mut paste = |x0: usize, data: &[f32]| {
        for r in 0..s_h {
            for c in 0..s_w {
                panel.set(r, x0 + c, data[r * s_w + c].clamp(0.0, 1.0));
            }
        }
    };
    paste(0, patch.data());
    for (i, res) in results.iter().enumerate() {
        paste((i + 1) * (s_w + PANEL_SEPARATOR), res.reconstruction.data());
    }
    Ok(panel)
}
