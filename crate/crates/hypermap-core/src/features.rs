//! Reusable representations from one forward pass: captured activation
//! stacks, hypercolumn pixel descriptors, and fcn feature vectors.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::net::{forward, Network};
use crate::tensor::{bilinear_upsample, PoolSwitches, Tensor};

/// Ordered record of one forward pass: post-ReLU conv maps (spatial sizes
/// non-increasing), pool switches, post-ReLU dense outputs and the logits.
#[derive(Debug, Clone)]
pub struct ActivationStack {
    pub conv_maps: Vec<Tensor>,
    pub switches: Vec<PoolSwitches>,
    pub dense_outputs: Vec<Tensor>,
    pub logits: Tensor,
}

impl ActivationStack {
    /// Post-ReLU map of conv layer `layer_id` (1-based, network order).
    pub fn conv_map(&self, layer_id: usize) -> Result<&Tensor> {
        if layer_id == 0 || layer_id > self.conv_maps.len() {
            return Err(Error::input(format!(
                "conv layer id {layer_id} out of range 1..={}",
                self.conv_maps.len()
            )));
        }
        Ok(&self.conv_maps[layer_id - 1])
    }

    /// Post-activation output of the penultimate dense layer.
    pub fn fcn1(&self) -> Result<&Tensor> {
        self.dense_outputs
            .last()
            .ok_or_else(|| Error::state("stack holds no post-ReLU dense output"))
    }
}

/// Which layers contribute to a hypercolumn descriptor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSelector {
    /// 1-based conv layer ids, in network order.
    pub layer_ids: Vec<usize>,
    /// Append the fcn1 vector (identical at every pixel) to each descriptor.
    pub include_fcn: bool,
}

impl LayerSelector {
    pub fn all_convs(net: &Network) -> Self {
        LayerSelector {
            layer_ids: (1..=net.spec.conv_count()).collect(),
            include_fcn: false,
        }
    }

    pub fn validate(&self, n_convs: usize) -> Result<()> {
        if self.layer_ids.is_empty() && !self.include_fcn {
            return Err(Error::input("layer selector is empty"));
        }
        for id in &self.layer_ids {
            if *id == 0 || *id > n_convs {
                return Err(Error::input(format!(
                    "selector names conv layer {id}, network has 1..={n_convs}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-pixel descriptors at input resolution: `data` is `[D, H, W]` where
/// `D` is the channel sum of the selected layers (+ fcn1 width when
/// included).
#[derive(Debug, Clone)]
pub struct HypercolumnField {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub data: Tensor,
}

impl HypercolumnField {
    /// Copy the descriptor of pixel `(r, c)` into `out`.
    pub fn copy_descriptor(&self, r: usize, c: usize, out: &mut [f32]) {
        debug_assert_eq!(out.len(), self.dim);
        let plane = self.height * self.width;
        let at = r * self.width + c;
        for (d, slot) in out.iter_mut().enumerate() {
            *slot = self.data.data()[d * plane + at];
        }
    }

    pub fn descriptor(&self, r: usize, c: usize) -> Vec<f32> {
        let mut out = alloc::vec![0.0; self.dim];
        self.copy_descriptor(r, c, &mut out);
        out
    }
}

/// Run the network on a patch and keep every layer's activations.
pub fn capture_activations(net: &Network, patch: &Tensor) -> Result<ActivationStack> {
    let (_, stack) = forward(net, patch, true)?;
    stack.ok_or_else(|| Error::state("capture requested but no stack produced"))
}

/// Upsample each selected conv map to input resolution (align-corners
/// bilinear) and concatenate along the descriptor axis in network order.
/// Maps already at input resolution pass through bit-exact.
pub fn assemble_hypercolumns(stack: &ActivationStack, sel: &LayerSelector) -> Result<HypercolumnField> {
    sel.validate(stack.conv_maps.len())?;
    let (h, w) = match stack.conv_maps.first().map(|m| m.shape()) {
        Some([_, h, w]) => (*h, *w),
        _ => return Err(Error::state("activation stack has no conv maps")),
    };

    let mut dim = 0usize;
    for id in &sel.layer_ids {
        dim += stack.conv_map(*id)?.shape()[0];
    }
    let fcn = if sel.include_fcn {
        let f = stack.fcn1()?;
        dim += f.len();
        Some(f)
    } else {
        None
    };

    let mut data = Vec::with_capacity(dim * h * w);
    for id in &sel.layer_ids {
        let map = stack.conv_map(*id)?;
        let up = bilinear_upsample(map, h, w)?;
        data.extend_from_slice(up.data());
    }
    if let Some(f) = fcn {
        // Broadcast: one constant plane per fcn1 unit.
        for v in f.data() {
            data.extend(core::iter::repeat(*v).take(h * w));
        }
    }
    Ok(HypercolumnField {
        height: h,
        width: w,
        dim,
        data: Tensor::new([dim, h, w], data)?,
    })
}

/// Post-activation output of the penultimate dense layer for one patch.
pub fn fcn_features(net: &Network, patch: &Tensor) -> Result<Tensor> {
    let stack = capture_activations(net, patch)?;
    stack.fcn1().cloned()
}
