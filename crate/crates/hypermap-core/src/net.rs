//! The settlement-mapping CNN: architecture description, seeded
//! initialization, SGD training, evaluation, and the checkpoint byte format
//! that carries a trained network to every downstream task unchanged.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::ActivationStack;
use crate::math::Scalar;
use crate::rng;
use crate::tensor::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2x2_backward,
    maxpool2x2_forward, relu, relu_backward, sgd_step, softmax_xent, ConvParams, DenseParams,
    Padding, PoolSwitches, Tensor,
};

/// One entry of the layer sequence. Network convolutions are always
/// same-padding, stride 1 (this is what keeps the 144 -> 72 -> 36 -> 18
/// pooling geometry intact).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerDesc {
    Conv { out_channels: usize, kernel: usize },
    Relu,
    Pool,
    Dense { out_units: usize },
}

/// Shape of the value flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueShape {
    Spatial { channels: usize, h: usize, w: usize },
    Flat { len: usize },
}

/// Ordered layer descriptors plus the input/output contract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchitectureSpec {
    pub input_size: usize,
    pub num_classes: usize,
    pub layers: Vec<LayerDesc>,
}

impl ArchitectureSpec {
    /// The production architecture: 7 weight layers (4 conv + 2 dense) and
    /// 3 pools, 144x144 single-band input.
    pub fn full_default() -> Self {
        Self::with_widths(144, &[(32, 5), (64, 5), (96, 3), (128, 3)], 512, 2)
    }

    /// Same topology at desk scale: 36x36 input, conv widths 8/16/24/32,
    /// 64-unit penultimate layer.
    pub fn reduced() -> Self {
        Self::with_widths(36, &[(8, 5), (16, 5), (24, 3), (32, 3)], 64, 2)
    }

    /// Four same-padding convs with pools after the first three, then two
    /// dense layers. `convs` is a list of (out_channels, kernel).
    pub fn with_widths(
        input_size: usize,
        convs: &[(usize, usize)],
        fcn1_units: usize,
        num_classes: usize,
    ) -> Self {
        let mut layers = Vec::new();
        let n = convs.len();
        for (i, (ch, k)) in convs.iter().enumerate() {
            layers.push(LayerDesc::Conv {
                out_channels: *ch,
                kernel: *k,
            });
            layers.push(LayerDesc::Relu);
            if i + 1 < n {
                layers.push(LayerDesc::Pool);
            }
        }
        layers.push(LayerDesc::Dense {
            out_units: fcn1_units,
        });
        layers.push(LayerDesc::Relu);
        layers.push(LayerDesc::Dense {
            out_units: num_classes,
        });
        ArchitectureSpec {
            input_size,
            num_classes,
            layers,
        }
    }

    pub fn conv_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerDesc::Conv { .. }))
            .count()
    }

    pub fn pool_count(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, LayerDesc::Pool)).count()
    }

    pub fn dense_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerDesc::Dense { .. }))
            .count()
    }

    /// Output shape after every layer, checking consistency along the way.
    pub fn layer_shapes(&self) -> Result<Vec<ValueShape>> {
        if self.input_size == 0 {
            return Err(Error::spec("input_size must be positive"));
        }
        if self.num_classes < 2 || self.num_classes > 255 {
            return Err(Error::spec(format!(
                "num_classes must be in 2..=255, got {}",
                self.num_classes
            )));
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = ValueShape::Spatial {
            channels: 1,
            h: self.input_size,
            w: self.input_size,
        };
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match (*layer, cur) {
                (LayerDesc::Conv { out_channels, kernel }, ValueShape::Spatial { h, w, .. }) => {
                    if out_channels == 0 {
                        return Err(Error::spec(format!("layer {i}: conv with 0 channels")));
                    }
                    if kernel % 2 == 0 || kernel == 0 {
                        return Err(Error::spec(format!(
                            "layer {i}: same-padding conv needs an odd kernel, got {kernel}"
                        )));
                    }
                    ValueShape::Spatial {
                        channels: out_channels,
                        h,
                        w,
                    }
                }
                (LayerDesc::Pool, ValueShape::Spatial { channels, h, w }) => {
                    if h < 2 || w < 2 {
                        return Err(Error::spec(format!(
                            "layer {i}: pooling a {h}x{w} map"
                        )));
                    }
                    ValueShape::Spatial {
                        channels,
                        h: h.div_ceil(2),
                        w: w.div_ceil(2),
                    }
                }
                (LayerDesc::Relu, shape) => shape,
                (LayerDesc::Dense { out_units }, _) => {
                    if out_units == 0 {
                        return Err(Error::spec(format!("layer {i}: dense with 0 units")));
                    }
                    ValueShape::Flat { len: out_units }
                }
                (l, ValueShape::Flat { .. }) => {
                    return Err(Error::spec(format!(
                        "layer {i}: {l:?} cannot follow a dense layer"
                    )));
                }
            };
            shapes.push(cur);
        }
        match shapes.last() {
            Some(ValueShape::Flat { len }) if *len == self.num_classes => Ok(shapes),
            Some(other) => Err(Error::spec(format!(
                "final layer produces {other:?}, expected a dense layer with {} units",
                self.num_classes
            ))),
            None => Err(Error::spec("architecture has no layers")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layer_shapes().map(|_| ())
    }

    /// (channels, spatial size) of each conv layer's output map, in order.
    pub fn conv_map_sizes(&self) -> Result<Vec<(usize, usize)>> {
        let shapes = self.layer_shapes()?;
        let mut out = Vec::new();
        for (layer, shape) in self.layers.iter().zip(&shapes) {
            if let (LayerDesc::Conv { .. }, ValueShape::Spatial { channels, h, .. }) =
                (layer, shape)
            {
                out.push((*channels, *h));
            }
        }
        Ok(out)
    }

    /// Width of the penultimate dense layer (the feature vector reused by
    /// the embedding task).
    pub fn fcn1_width(&self) -> Result<usize> {
        let mut dense_units: Vec<usize> = self
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerDesc::Dense { out_units } => Some(*out_units),
                _ => None,
            })
            .collect();
        dense_units.pop();
        dense_units
            .last()
            .copied()
            .ok_or_else(|| Error::spec("architecture needs two dense layers for fcn features"))
    }
}

/// Training hyperparameters. Defaults: learning rate 0.00273, batches
/// of 150.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub batch_size: usize,
    pub epochs: usize,
    /// Multiplier on the fan-in-scaled normal init (see [`build_network`]).
    /// Zero gives an all-zero network.
    pub init_std: f32,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.00273,
            batch_size: 150,
            epochs: 10,
            init_std: 1.0,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::input(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::input("batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// Parameters of one weight layer, in network order.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Conv(ConvParams),
    Dense(DenseParams),
}

/// Architecture plus live parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: ArchitectureSpec,
    pub params: Vec<LayerParams>,
}

/// Build a network with seeded Gaussian weights and zero biases. Each
/// layer's weight scale is `init_std * sqrt(2 / fan_in)` so activations
/// keep their magnitude through the stack; the same seed reproduces the
/// same bits.
pub fn build_network(spec: &ArchitectureSpec, cfg: &TrainConfig) -> Result<Network> {
    let shapes = spec.layer_shapes()?;
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, "init");
    let mut params = Vec::new();
    let mut prev = ValueShape::Spatial {
        channels: 1,
        h: spec.input_size,
        w: spec.input_size,
    };
    for (layer, shape) in spec.layers.iter().zip(&shapes) {
        match layer {
            LayerDesc::Conv { out_channels, kernel } => {
                let in_ch = match prev {
                    ValueShape::Spatial { channels, .. } => channels,
                    ValueShape::Flat { .. } => unreachable!("validated"),
                };
                let fan_in = in_ch * kernel * kernel;
                let sigma = cfg.init_std * (2.0 / fan_in as f32).sqrt();
                let n = out_channels * in_ch * kernel * kernel;
                let mut w = Vec::with_capacity(n);
                for _ in 0..n {
                    w.push(sigma * rng::standard_normal(&mut rng) as f32);
                }
                params.push(LayerParams::Conv(ConvParams::new(
                    Tensor::new([*out_channels, in_ch, *kernel, *kernel], w)?,
                    Tensor::zeros([*out_channels]),
                    Padding::Same,
                    1,
                )?));
            }
            LayerDesc::Dense { out_units } => {
                let in_units = match prev {
                    ValueShape::Spatial { channels, h, w } => channels * h * w,
                    ValueShape::Flat { len } => len,
                };
                let sigma = cfg.init_std * (2.0 / in_units as f32).sqrt();
                let n = out_units * in_units;
                let mut w = Vec::with_capacity(n);
                for _ in 0..n {
                    w.push(sigma * rng::standard_normal(&mut rng) as f32);
                }
                params.push(LayerParams::Dense(DenseParams::new(
                    Tensor::new([*out_units, in_units], w)?,
                    Tensor::zeros([*out_units]),
                )?));
            }
            LayerDesc::Relu | LayerDesc::Pool => {}
        }
        prev = *shape;
    }
    Ok(Network {
        spec: spec.clone(),
        params,
    })
}

/// Cached values from a training forward pass, one entry per layer.
enum TapeEntry {
    Conv(Tensor),
    Relu(Tensor),
    Pool(PoolSwitches),
    Dense(Tensor),
}

struct StackBuilder {
    conv_maps: Vec<Tensor>,
    switches: Vec<PoolSwitches>,
    dense_outputs: Vec<Tensor>,
}

fn check_patch(net: &Network, patch: &Tensor) -> Result<()> {
    let s = net.spec.input_size;
    if patch.shape() != [1, s, s] {
        return Err(Error::shape(format!(
            "patch shape {:?} does not match network input [1, {s}, {s}]",
            patch.shape()
        )));
    }
    Ok(())
}

/// Walk the layer sequence once. `tape` collects per-layer inputs for
/// backprop; `stack` collects post-ReLU activations for feature reuse.
fn run_layers(
    net: &Network,
    patch: &Tensor,
    mut tape: Option<&mut Vec<TapeEntry>>,
    mut stack: Option<&mut StackBuilder>,
) -> Result<Tensor> {
    let mut cur = patch.clone();
    let mut weight_idx = 0usize;
    let mut last_weight: Option<&LayerDesc> = None;
    for layer in &net.spec.layers {
        match layer {
            LayerDesc::Conv { .. } => {
                let p = match &net.params[weight_idx] {
                    LayerParams::Conv(p) => p,
                    LayerParams::Dense(_) => {
                        return Err(Error::state("parameter list out of sync with spec"))
                    }
                };
                weight_idx += 1;
                if let Some(t) = tape.as_deref_mut() {
                    t.push(TapeEntry::Conv(cur.clone()));
                }
                cur = conv2d_forward(&cur, p)?;
                last_weight = Some(layer);
            }
            LayerDesc::Relu => {
                if let Some(t) = tape.as_deref_mut() {
                    t.push(TapeEntry::Relu(cur.clone()));
                }
                cur = relu(&cur);
                if let Some(s) = stack.as_deref_mut() {
                    match last_weight {
                        Some(LayerDesc::Conv { .. }) => s.conv_maps.push(cur.clone()),
                        Some(LayerDesc::Dense { .. }) => s.dense_outputs.push(cur.clone()),
                        _ => {}
                    }
                }
            }
            LayerDesc::Pool => {
                let (pooled, sw) = maxpool2x2_forward(&cur)?;
                cur = pooled;
                if let Some(s) = stack.as_deref_mut() {
                    s.switches.push(sw.clone());
                }
                if let Some(t) = tape.as_deref_mut() {
                    t.push(TapeEntry::Pool(sw));
                }
            }
            LayerDesc::Dense { .. } => {
                let p = match &net.params[weight_idx] {
                    LayerParams::Dense(p) => p,
                    LayerParams::Conv(_) => {
                        return Err(Error::state("parameter list out of sync with spec"))
                    }
                };
                weight_idx += 1;
                let flat = cur.reshaped([p.in_units()])?;
                if let Some(t) = tape.as_deref_mut() {
                    t.push(TapeEntry::Dense(flat.clone()));
                }
                cur = dense_forward(&flat, p)?;
                last_weight = Some(layer);
            }
        }
    }
    Ok(cur)
}

/// Run the network on one patch. With `capture` the returned stack holds
/// the post-ReLU map of every conv layer, all pool switches and both dense
/// outputs, in network order.
pub fn forward(net: &Network, patch: &Tensor, capture: bool) -> Result<(Tensor, Option<ActivationStack>)> {
    check_patch(net, patch)?;
    if !capture {
        let logits = run_layers(net, patch, None, None)?;
        return Ok((logits, None));
    }
    let mut builder = StackBuilder {
        conv_maps: Vec::new(),
        switches: Vec::new(),
        dense_outputs: Vec::new(),
    };
    let logits = run_layers(net, patch, None, Some(&mut builder))?;
    let stack = ActivationStack {
        conv_maps: builder.conv_maps,
        switches: builder.switches,
        dense_outputs: builder.dense_outputs,
        logits: logits.clone(),
    };
    Ok((logits, Some(stack)))
}

/// Per-weight-layer gradient accumulators.
struct GradAccum {
    weights: Vec<Tensor>,
    bias: Vec<Tensor>,
}

impl GradAccum {
    fn zeros_like(net: &Network) -> Self {
        let mut weights = Vec::new();
        let mut bias = Vec::new();
        for p in &net.params {
            match p {
                LayerParams::Conv(c) => {
                    weights.push(Tensor::zeros(c.weights.shape().to_vec()));
                    bias.push(Tensor::zeros(c.bias.shape().to_vec()));
                }
                LayerParams::Dense(d) => {
                    weights.push(Tensor::zeros(d.weights.shape().to_vec()));
                    bias.push(Tensor::zeros(d.bias.shape().to_vec()));
                }
            }
        }
        GradAccum { weights, bias }
    }

    fn add(dst: &mut Tensor, src: &Tensor) {
        for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
            *d += *s;
        }
    }

    fn scale(&mut self, factor: f32) {
        for t in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            t.scale(factor);
        }
    }
}

/// Backprop one sample's logit gradient through the tape, adding parameter
/// gradients into the accumulators.
fn backward_into(
    net: &Network,
    tape: &[TapeEntry],
    grad_logits: Tensor,
    acc: &mut GradAccum,
) -> Result<()> {
    let mut grad = grad_logits;
    let mut weight_idx = net.params.len();
    for (layer, entry) in net.spec.layers.iter().zip(tape).rev() {
        match (layer, entry) {
            (LayerDesc::Dense { .. }, TapeEntry::Dense(input)) => {
                weight_idx -= 1;
                let p = match &net.params[weight_idx] {
                    LayerParams::Dense(p) => p,
                    LayerParams::Conv(_) => return Err(Error::state("tape out of sync")),
                };
                let g = dense_backward(&grad, input, p)?;
                GradAccum::add(&mut acc.weights[weight_idx], &g.grad_weights);
                GradAccum::add(&mut acc.bias[weight_idx], &g.grad_bias);
                grad = g.grad_input;
            }
            (LayerDesc::Relu, TapeEntry::Relu(input)) => {
                grad = relu_backward(&grad.reshaped(input.shape().to_vec())?, input)?;
            }
            (LayerDesc::Pool, TapeEntry::Pool(sw)) => {
                grad = maxpool2x2_backward(
                    &grad.reshaped([sw.channels, sw.out_h, sw.out_w])?,
                    sw,
                )?;
            }
            (LayerDesc::Conv { .. }, TapeEntry::Conv(input)) => {
                weight_idx -= 1;
                let p = match &net.params[weight_idx] {
                    LayerParams::Conv(p) => p,
                    LayerParams::Dense(_) => return Err(Error::state("tape out of sync")),
                };
                let (c, h, w) = match input.shape() {
                    [c, h, w] => (*c, *h, *w),
                    _ => return Err(Error::state("conv tape entry is not spatial")),
                };
                let (oh, ow) = p.output_size(h, w)?;
                let _ = c;
                let g = conv2d_backward(&grad.reshaped([p.out_channels(), oh, ow])?, input, p)?;
                GradAccum::add(&mut acc.weights[weight_idx], &g.grad_weights);
                GradAccum::add(&mut acc.bias[weight_idx], &g.grad_bias);
                grad = g.grad_input;
            }
            _ => return Err(Error::state("tape out of sync with layer sequence")),
        }
    }
    Ok(())
}

/// One epoch row of a training report.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f32,
    pub val_accuracy: f32,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

/// Mini-batch SGD over a seeded shuffle; the final partial batch is scaled
/// by its true size. Aborts with a numeric error (naming epoch and batch)
/// if the loss stops being finite.
pub fn train(
    net: &mut Network,
    train_set: &[(Tensor, u8)],
    val_set: &[(Tensor, u8)],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::input("train and validation sets must be non-empty"));
    }
    for (i, (_, label)) in train_set.iter().enumerate() {
        if usize::from(*label) >= net.spec.num_classes {
            return Err(Error::input(format!(
                "train sample {i}: label {label} out of range for {} classes",
                net.spec.num_classes
            )));
        }
    }
    let mut shuffle_rng = rng::stream(cfg.seed, "train-shuffle");
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport::default();
    let mut tape: Vec<TapeEntry> = Vec::with_capacity(net.spec.layers.len());

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            use rand::seq::SliceRandom;
            order.shuffle(&mut shuffle_rng);
        }
        let mut epoch_loss = 0.0f64;
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc = GradAccum::zeros_like(net);
            let mut batch_loss = 0.0f64;
            for &i in chunk {
                let (patch, label) = &train_set[i];
                check_patch(net, patch)?;
                tape.clear();
                let logits = run_layers(net, patch, Some(&mut tape), None)?;
                let sm = softmax_xent(&logits, usize::from(*label))?;
                batch_loss += f64::from(sm.loss);
                backward_into(net, &tape, sm.grad_logits, &mut acc)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {batch_no}"
                )));
            }
            epoch_loss += batch_loss;
            acc.scale(1.0 / chunk.len() as f32);
            for (idx, p) in net.params.iter_mut().enumerate() {
                let step = match p {
                    LayerParams::Conv(c) => sgd_step(&mut c.weights, &acc.weights[idx], cfg.learning_rate)
                        .and_then(|_| sgd_step(&mut c.bias, &acc.bias[idx], cfg.learning_rate)),
                    LayerParams::Dense(d) => sgd_step(&mut d.weights, &acc.weights[idx], cfg.learning_rate)
                        .and_then(|_| sgd_step(&mut d.bias, &acc.bias[idx], cfg.learning_rate)),
                };
                step.map_err(|e| {
                    Error::numeric(format!(
                        "epoch {epoch}, batch {batch_no}, weight layer {idx}: {e}"
                    ))
                })?;
            }
        }
        let train_loss = (epoch_loss / train_set.len() as f64) as f32;
        let val_accuracy = evaluate(net, val_set)?;
        report.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_accuracy,
        });
    }
    Ok(report)
}

/// Fraction of samples whose argmax logit matches the label; logit ties
/// resolve to the lowest class index.
pub fn evaluate(net: &Network, dataset: &[(Tensor, u8)]) -> Result<f32> {
    if dataset.is_empty() {
        return Err(Error::input("evaluate: empty dataset"));
    }
    let mut correct = 0usize;
    for (patch, label) in dataset {
        let (logits, _) = forward(net, patch, false)?;
        if argmax_lowest(logits.data()) == usize::from(*label) {
            correct += 1;
        }
    }
    Ok(correct as f32 / dataset.len() as f32)
}

/// Index of the maximum value; ties break to the lowest index.
pub fn argmax_lowest<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0usize;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Checkpoint byte format
// ---------------------------------------------------------------------------

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"HMAP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Training metadata stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointMeta {
    pub epochs_run: u32,
    pub final_losses: Vec<f32>,
    pub seed: u64,
}

fn encode_arch(spec: &ArchitectureSpec) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(spec.input_size as u32).to_le_bytes());
    out.extend_from_slice(&(spec.num_classes as u32).to_le_bytes());
    out.extend_from_slice(&(spec.layers.len() as u32).to_le_bytes());
    for layer in &spec.layers {
        match layer {
            LayerDesc::Conv { out_channels, kernel } => {
                out.push(0);
                out.extend_from_slice(&(*out_channels as u32).to_le_bytes());
                out.extend_from_slice(&(*kernel as u32).to_le_bytes());
            }
            LayerDesc::Relu => out.push(1),
            LayerDesc::Pool => out.push(2),
            LayerDesc::Dense { out_units } => {
                out.push(3);
                out.extend_from_slice(&(*out_units as u32).to_le_bytes());
            }
        }
    }
    out
}

fn push_tensor(out: &mut Vec<u8>, t: &Tensor) {
    out.extend_from_slice(&(t.len() as u32).to_le_bytes());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize a network plus metadata to the versioned "HMAP" byte layout
/// (all integers little-endian, tensors raw f32 little-endian row-major).
pub fn encode_checkpoint(net: &Network, meta: &CheckpointMeta) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let arch = encode_arch(&net.spec);
    out.extend_from_slice(&(arch.len() as u32).to_le_bytes());
    out.extend_from_slice(&arch);
    for p in &net.params {
        match p {
            LayerParams::Conv(c) => {
                push_tensor(&mut out, &c.weights);
                push_tensor(&mut out, &c.bias);
            }
            LayerParams::Dense(d) => {
                push_tensor(&mut out, &d.weights);
                push_tensor(&mut out, &d.bias);
            }
        }
    }
    out.extend_from_slice(&meta.epochs_run.to_le_bytes());
    out.extend_from_slice(&meta.seed.to_le_bytes());
    out.extend_from_slice(&(meta.final_losses.len() as u32).to_le_bytes());
    for v in &meta.final_losses {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(format!(
                "unexpected end of file while reading {field} (offset {})",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        let b = self.take(4, field)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, field: &str) -> Result<u64> {
        let b = self.take(8, field)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }

    fn f32_vec(&mut self, n: usize, field: &str) -> Result<Vec<f32>> {
        let b = self.take(4 * n, field)?;
        let mut out = Vec::with_capacity(n);
        for chunk in b.chunks_exact(4) {
            out.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
        }
        Ok(out)
    }
}

fn read_tensor(r: &mut Reader<'_>, shape: Vec<usize>, field: &str) -> Result<Tensor> {
    let want: usize = shape.iter().product();
    let n = r.u32(&format!("{field} element count"))? as usize;
    if n != want {
        return Err(Error::format(format!(
            "{field}: element count {n} does not match architecture ({want})"
        )));
    }
    Tensor::new(shape, r.f32_vec(n, field)?)
}

/// Parse a checkpoint byte stream back into a network and its metadata.
/// Rejects bad magic, unsupported versions, truncation and trailing bytes,
/// naming the failing field.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Network, CheckpointMeta)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::format(format!(
            "magic: expected \"HMAP\", got {magic:?}"
        )));
    }
    let version = r.u32("format_version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(format!(
            "format_version: unsupported version {version} (supported: {CHECKPOINT_VERSION})"
        )));
    }
    let arch_len = r.u32("architecture length")? as usize;
    let arch_end = r.pos + arch_len;
    let input_size = r.u32("architecture input_size")? as usize;
    let num_classes = r.u32("architecture num_classes")? as usize;
    let n_layers = r.u32("architecture layer count")? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let field = format!("architecture layer {i}");
        match r.u8(&field)? {
            0 => layers.push(LayerDesc::Conv {
                out_channels: r.u32(&field)? as usize,
                kernel: r.u32(&field)? as usize,
            }),
            1 => layers.push(LayerDesc::Relu),
            2 => layers.push(LayerDesc::Pool),
            3 => layers.push(LayerDesc::Dense {
                out_units: r.u32(&field)? as usize,
            }),
            tag => {
                return Err(Error::format(format!("{field}: unknown layer tag {tag}")))
            }
        }
    }
    if r.pos != arch_end {
        return Err(Error::format(format!(
            "architecture length: descriptor spans {} bytes, header said {arch_len}",
            r.pos - (arch_end - arch_len)
        )));
    }
    let spec = ArchitectureSpec {
        input_size,
        num_classes,
        layers,
    };
    spec.validate()
        .map_err(|e| Error::format(format!("architecture: {e}")))?;

    // Weight tensors, shapes dictated by the architecture.
    let mut params = Vec::new();
    let mut prev_ch = 1usize;
    let prev_flat = {
        let shapes = spec.layer_shapes()?;
        let mut widths: Vec<usize> = Vec::with_capacity(shapes.len() + 1);
        widths.push(input_size * input_size); // flat width before layer 0
        for s in &shapes {
            widths.push(match s {
                ValueShape::Spatial { channels, h, w } => channels * h * w,
                ValueShape::Flat { len } => *len,
            });
        }
        widths
    };
    let mut conv_no = 0usize;
    let mut dense_no = 0usize;
    for (i, layer) in spec.layers.iter().enumerate() {
        match layer {
            LayerDesc::Conv { out_channels, kernel } => {
                conv_no += 1;
                let name = format!("conv{conv_no}");
                let w = read_tensor(
                    &mut r,
                    vec![*out_channels, prev_ch, *kernel, *kernel],
                    &format!("{name} weights"),
                )?;
                let b = read_tensor(&mut r, vec![*out_channels], &format!("{name} bias"))?;
                params.push(LayerParams::Conv(ConvParams::new(w, b, Padding::Same, 1)?));
                prev_ch = *out_channels;
            }
            LayerDesc::Dense { out_units } => {
                dense_no += 1;
                let name = format!("fcn{dense_no}");
                let in_units = prev_flat[i];
                let w = read_tensor(
                    &mut r,
                    vec![*out_units, in_units],
                    &format!("{name} weights"),
                )?;
                let b = read_tensor(&mut r, vec![*out_units], &format!("{name} bias"))?;
                params.push(LayerParams::Dense(DenseParams::new(w, b)?));
            }
            LayerDesc::Relu | LayerDesc::Pool => {}
        }
    }

    let epochs_run = r.u32("metadata epochs_run")?;
    let seed = r.u64("metadata seed")?;
    let n_losses = r.u32("metadata loss count")? as usize;
    let final_losses = r.f32_vec(n_losses, "metadata losses")?;
    if r.pos != bytes.len() {
        return Err(Error::format(format!(
            "trailing bytes: {} unread after metadata",
            bytes.len() - r.pos
        )));
    }
    Ok((
        Network { spec, params },
        CheckpointMeta {
            epochs_run,
            final_losses,
            seed,
        },
    ))
}
