//! Dense tensors plus the forward/backward passes of every layer the
//! network needs: convolution, 2x2 max-pooling, ReLU, dense, softmax
//! cross-entropy, SGD updates and bilinear upsampling.
//!
//! Layout is row-major with channel-first `[C, H, W]` ordering everywhere.
//! Operations are generic over [`Scalar`] so the same code runs in `f32`
//! (production) and `f64` (finite-difference checks).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::Scalar;

/// Dense N-dimensional array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar = f32> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<S>) -> Result<Self> {
        let shape = shape.into();
        let want: usize = shape.iter().product();
        if want != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} wants {want} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![S::ZERO; len],
        }
    }

    pub fn filled(shape: impl Into<Vec<usize>>, value: S) -> Self {
        let shape = shape.into();
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Reinterpret the flat data under a new shape of the same length.
    pub fn reshaped(mut self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let want: usize = shape.iter().product();
        if want != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {} elements to {shape:?}",
                self.data.len()
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn scale(&mut self, factor: S) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    /// Error out if any element is NaN or infinite.
    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::numeric(format!(
                    "{what}: non-finite value {v} at flat index {i}"
                )));
            }
        }
        Ok(())
    }

    /// Convert elementwise through `f64` (used by tests to move between dtypes).
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::from_f64(v.to_f64())).collect(),
        }
    }

    fn expect_rank3(&self, what: &str) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::shape(format!(
                "{what}: expected [C,H,W] tensor, got shape {:?}",
                self.shape
            ))),
        }
    }
}

/// Padding policy for convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output keeps the input's spatial size at stride 1 (requires odd kernels).
    Same,
    /// No padding; the kernel must fit inside the input.
    Valid,
}

/// Weights of one convolutional layer: `weights [out_ch, in_ch, kh, kw]`,
/// `bias [out_ch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<S: Scalar = f32> {
    pub weights: Tensor<S>,
    pub bias: Tensor<S>,
    pub padding: Padding,
    pub stride: usize,
}

impl<S: Scalar> ConvParams<S> {
    pub fn new(weights: Tensor<S>, bias: Tensor<S>, padding: Padding, stride: usize) -> Result<Self> {
        let p = ConvParams {
            weights,
            bias,
            padding,
            stride,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let [out_ch, _in_ch, kh, kw] = match self.weights.shape()[..] {
            [a, b, c, d] => [a, b, c, d],
            _ => {
                return Err(Error::shape(format!(
                    "conv weights must be [out,in,kh,kw], got {:?}",
                    self.weights.shape()
                )))
            }
        };
        if self.bias.shape() != [out_ch] {
            return Err(Error::shape(format!(
                "conv bias must be [{out_ch}], got {:?}",
                self.bias.shape()
            )));
        }
        if self.stride == 0 {
            return Err(Error::input("conv stride must be >= 1"));
        }
        if self.padding == Padding::Same && (kh % 2 == 0 || kw % 2 == 0) {
            return Err(Error::input(format!(
                "same-padding convolution needs odd kernels, got {kh}x{kw}"
            )));
        }
        Ok(())
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }
    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }
    pub fn kernel_h(&self) -> usize {
        self.weights.shape()[2]
    }
    pub fn kernel_w(&self) -> usize {
        self.weights.shape()[3]
    }

    /// Spatial output size for an `h x w` input.
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = (self.kernel_h(), self.kernel_w());
        let (ph, pw) = match self.padding {
            Padding::Same => ((kh - 1) / 2, (kw - 1) / 2),
            Padding::Valid => (0, 0),
        };
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return Err(Error::shape(format!(
                "input {h}x{w} smaller than {kh}x{kw} kernel under valid padding"
            )));
        }
        Ok((
            (h + 2 * ph - kh) / self.stride + 1,
            (w + 2 * pw - kw) / self.stride + 1,
        ))
    }

    fn pad(&self) -> (isize, isize) {
        match self.padding {
            Padding::Same => (
                ((self.kernel_h() - 1) / 2) as isize,
                ((self.kernel_w() - 1) / 2) as isize,
            ),
            Padding::Valid => (0, 0),
        }
    }
}

/// Weights of one fully connected layer: `weights [out, in]`, `bias [out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<S: Scalar = f32> {
    pub weights: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> DenseParams<S> {
    pub fn new(weights: Tensor<S>, bias: Tensor<S>) -> Result<Self> {
        let p = DenseParams { weights, bias };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let out = match self.weights.shape()[..] {
            [out, _inp] => out,
            _ => {
                return Err(Error::shape(format!(
                    "dense weights must be [out,in], got {:?}",
                    self.weights.shape()
                )))
            }
        };
        if self.bias.shape() != [out] {
            return Err(Error::shape(format!(
                "dense bias must be [{out}], got {:?}",
                self.bias.shape()
            )));
        }
        Ok(())
    }

    pub fn out_units(&self) -> usize {
        self.weights.shape()[0]
    }
    pub fn in_units(&self) -> usize {
        self.weights.shape()[1]
    }
}

/// Recorded argmax positions of one 2x2 max-pool pass, needed to invert the
/// pooling during backprojection. Each entry is `dy * 2 + dx` within the
/// window; window positions past an odd edge are clamped (replication).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolSwitches {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    idx: Vec<u8>,
}

impl PoolSwitches {
    /// Source coordinates the pooled cell `(c, py, px)` was taken from.
    pub fn source(&self, c: usize, py: usize, px: usize) -> (usize, usize) {
        let a = self.idx[(c * self.out_h + py) * self.out_w + px] as usize;
        let y = (py * 2 + a / 2).min(self.in_h - 1);
        let x = (px * 2 + a % 2).min(self.in_w - 1);
        (y, x)
    }
}

/// 2-D cross-correlation of a `[C,H,W]` input with a bank of kernels.
pub fn conv2d_forward<S: Scalar>(input: &Tensor<S>, p: &ConvParams<S>) -> Result<Tensor<S>> {
    p.validate()?;
    let (c_in, h, w) = input.expect_rank3("conv2d_forward input")?;
    if c_in != p.in_channels() {
        return Err(Error::shape(format!(
            "conv2d_forward: input has {c_in} channels, weights expect {}",
            p.in_channels()
        )));
    }
    input.ensure_finite("conv2d_forward input")?;
    let (out_h, out_w) = p.output_size(h, w)?;
    let (pad_y, pad_x) = p.pad();
    let (kh, kw) = (p.kernel_h(), p.kernel_w());
    let out_ch = p.out_channels();
    let stride = p.stride;

    let wdat = p.weights.data();
    let idat = input.data();
    let mut out = Tensor::zeros([out_ch, out_h, out_w]);
    let odat = out.data_mut();

    for oc in 0..out_ch {
        let bias = p.bias.data()[oc];
        let obase = oc * out_h * out_w;
        for v in &mut odat[obase..obase + out_h * out_w] {
            *v = bias;
        }
        for ic in 0..c_in {
            let wbase = (oc * c_in + ic) * kh * kw;
            let ibase = ic * h * w;
            for oy in 0..out_h {
                for ky in 0..kh {
                    let iy = (oy * stride) as isize + ky as isize - pad_y;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let irow = ibase + iy as usize * w;
                    let wrow = wbase + ky * kw;
                    let orow = obase + oy * out_w;
                    for ox in 0..out_w {
                        let mut acc = S::ZERO;
                        for kx in 0..kw {
                            let ix = (ox * stride) as isize + kx as isize - pad_x;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += idat[irow + ix as usize] * wdat[wrow + kx];
                        }
                        odat[orow + ox] += acc;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of a convolution with respect to its input, weights and bias.
#[derive(Debug, Clone)]
pub struct ConvGrads<S: Scalar = f32> {
    pub grad_input: Tensor<S>,
    pub grad_weights: Tensor<S>,
    pub grad_bias: Tensor<S>,
}

pub fn conv2d_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    cached_input: &Tensor<S>,
    p: &ConvParams<S>,
) -> Result<ConvGrads<S>> {
    p.validate()?;
    let (c_in, h, w) = cached_input.expect_rank3("conv2d_backward input")?;
    let (out_h, out_w) = p.output_size(h, w)?;
    let out_ch = p.out_channels();
    if grad_out.shape() != [out_ch, out_h, out_w] {
        return Err(Error::shape(format!(
            "conv2d_backward: grad_out shape {:?} does not match forward output [{out_ch}, {out_h}, {out_w}]",
            grad_out.shape()
        )));
    }
    if c_in != p.in_channels() {
        return Err(Error::shape(format!(
            "conv2d_backward: input has {c_in} channels, weights expect {}",
            p.in_channels()
        )));
    }
    let (pad_y, pad_x) = p.pad();
    let (kh, kw) = (p.kernel_h(), p.kernel_w());
    let stride = p.stride;

    let mut grads = ConvGrads {
        grad_input: Tensor::zeros([c_in, h, w]),
        grad_weights: Tensor::zeros(p.weights.shape().to_vec()),
        grad_bias: Tensor::zeros([out_ch]),
    };
    let gdat = grad_out.data();
    let idat = cached_input.data();
    let wdat = p.weights.data();

    for oc in 0..out_ch {
        let obase = oc * out_h * out_w;
        let mut bias_acc = S::ZERO;
        for g in &gdat[obase..obase + out_h * out_w] {
            bias_acc += *g;
        }
        grads.grad_bias.data_mut()[oc] = bias_acc;

        for ic in 0..c_in {
            let wbase = (oc * c_in + ic) * kh * kw;
            let ibase = ic * h * w;
            for oy in 0..out_h {
                for ky in 0..kh {
                    let iy = (oy * stride) as isize + ky as isize - pad_y;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let irow = ibase + iy as usize * w;
                    let wrow = wbase + ky * kw;
                    let orow = obase + oy * out_w;
                    for ox in 0..out_w {
                        let g = gdat[orow + ox];
                        for kx in 0..kw {
                            let ix = (ox * stride) as isize + kx as isize - pad_x;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            grads.grad_weights.data_mut()[wrow + kx] +=
                                g * idat[irow + ix as usize];
                            grads.grad_input.data_mut()[irow + ix as usize] +=
                                g * wdat[wrow + kx];
                        }
                    }
                }
            }
        }
    }
    Ok(grads)
}

/// Project an output-space map back to input space through the layer's own
/// (flipped) kernels: the transposed convolution used by deconvnet
/// backprojection. No bias is applied.
pub fn conv2d_transpose<S: Scalar>(
    output_space: &Tensor<S>,
    p: &ConvParams<S>,
    in_h: usize,
    in_w: usize,
) -> Result<Tensor<S>> {
    p.validate()?;
    let (out_h, out_w) = p.output_size(in_h, in_w)?;
    let out_ch = p.out_channels();
    if output_space.shape() != [out_ch, out_h, out_w] {
        return Err(Error::shape(format!(
            "conv2d_transpose: map shape {:?} does not match layer output [{out_ch}, {out_h}, {out_w}]",
            output_space.shape()
        )));
    }
    let c_in = p.in_channels();
    let (pad_y, pad_x) = p.pad();
    let (kh, kw) = (p.kernel_h(), p.kernel_w());
    let stride = p.stride;
    let mut out = Tensor::zeros([c_in, in_h, in_w]);
    let mdat = output_space.data();
    let wdat = p.weights.data();
    for oc in 0..out_ch {
        let obase = oc * out_h * out_w;
        for ic in 0..c_in {
            let wbase = (oc * c_in + ic) * kh * kw;
            let ibase = ic * in_h * in_w;
            for oy in 0..out_h {
                for ky in 0..kh {
                    let iy = (oy * stride) as isize + ky as isize - pad_y;
                    if iy < 0 || iy >= in_h as isize {
                        continue;
                    }
                    let irow = ibase + iy as usize * in_w;
                    let wrow = wbase + ky * kw;
                    let orow = obase + oy * out_w;
                    for ox in 0..out_w {
                        let v = mdat[orow + ox];
                        for kx in 0..kw {
                            let ix = (ox * stride) as isize + kx as isize - pad_x;
                            if ix < 0 || ix >= in_w as isize {
                                continue;
                            }
                            out.data_mut()[irow + ix as usize] += v * wdat[wrow + kx];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// 2x2 max-pool with stride 2. Odd edges are replicated (window positions
/// clamp to the last row/column). Ties break to the first window position in
/// row-major order so backprojection is deterministic.
pub fn maxpool2x2_forward<S: Scalar>(input: &Tensor<S>) -> Result<(Tensor<S>, PoolSwitches)> {
    let (c, h, w) = input.expect_rank3("maxpool2x2_forward input")?;
    if h == 0 || w == 0 {
        return Err(Error::shape("maxpool2x2_forward: empty spatial extent"));
    }
    let out_h = h.div_ceil(2);
    let out_w = w.div_ceil(2);
    let idat = input.data();
    let mut out = Tensor::zeros([c, out_h, out_w]);
    let mut idx = vec![0u8; c * out_h * out_w];

    for ch in 0..c {
        let ibase = ch * h * w;
        for py in 0..out_h {
            for px in 0..out_w {
                let mut best = S::ZERO;
                let mut best_a = 0u8;
                let mut first = true;
                for dy in 0..2usize {
                    let y = (py * 2 + dy).min(h - 1);
                    for dx in 0..2usize {
                        let x = (px * 2 + dx).min(w - 1);
                        let v = idat[ibase + y * w + x];
                        if first || v > best {
                            best = v;
                            best_a = (dy * 2 + dx) as u8;
                            first = false;
                        }
                    }
                }
                let o = (ch * out_h + py) * out_w + px;
                out.data_mut()[o] = best;
                idx[o] = best_a;
            }
        }
    }
    let switches = PoolSwitches {
        channels: c,
        in_h: h,
        in_w: w,
        out_h,
        out_w,
        idx,
    };
    Ok((out, switches))
}

/// Route pooled-space values back to their recorded argmax positions; all
/// other source cells are zero. This is both the pooling gradient and the
/// deconvnet unpooling step.
pub fn maxpool2x2_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    switches: &PoolSwitches,
) -> Result<Tensor<S>> {
    let (c, oh, ow) = grad_out.expect_rank3("maxpool2x2_backward grad_out")?;
    if c != switches.channels || oh != switches.out_h || ow != switches.out_w {
        return Err(Error::shape(format!(
            "maxpool2x2_backward: grad_out {:?} does not match switches for [{}, {}, {}]",
            grad_out.shape(),
            switches.channels,
            switches.out_h,
            switches.out_w
        )));
    }
    let mut out = Tensor::zeros([c, switches.in_h, switches.in_w]);
    let gdat = grad_out.data();
    for ch in 0..c {
        for py in 0..oh {
            for px in 0..ow {
                let (y, x) = switches.source(ch, py, px);
                out.data_mut()[(ch * switches.in_h + y) * switches.in_w + x] +=
                    gdat[(ch * oh + py) * ow + px];
            }
        }
    }
    Ok(out)
}

/// Scatter a pooled map back through its switches (deconvnet unpooling).
pub fn unpool2x2<S: Scalar>(pooled: &Tensor<S>, switches: &PoolSwitches) -> Result<Tensor<S>> {
    maxpool2x2_backward(pooled, switches)
}

pub fn relu<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < S::ZERO {
            *v = S::ZERO;
        }
    }
    out
}

/// ReLU gradient: zero wherever the cached input was <= 0 (the subgradient
/// at exactly 0 is taken as 0).
pub fn relu_backward<S: Scalar>(grad_out: &Tensor<S>, cached_input: &Tensor<S>) -> Result<Tensor<S>> {
    if grad_out.shape() != cached_input.shape() {
        return Err(Error::shape(format!(
            "relu_backward: grad shape {:?} vs input shape {:?}",
            grad_out.shape(),
            cached_input.shape()
        )));
    }
    let mut out = grad_out.clone();
    for (g, x) in out.data_mut().iter_mut().zip(cached_input.data()) {
        if *x <= S::ZERO {
            *g = S::ZERO;
        }
    }
    Ok(out)
}

/// y = Wx + b over flat vectors.
pub fn dense_forward<S: Scalar>(input: &Tensor<S>, p: &DenseParams<S>) -> Result<Tensor<S>> {
    p.validate()?;
    if input.len() != p.in_units() {
        return Err(Error::shape(format!(
            "dense_forward: input length {} vs weight columns {}",
            input.len(),
            p.in_units()
        )));
    }
    let (out_n, in_n) = (p.out_units(), p.in_units());
    let mut out = Tensor::zeros([out_n]);
    let idat = input.data();
    let wdat = p.weights.data();
    for o in 0..out_n {
        let mut acc = p.bias.data()[o];
        let row = &wdat[o * in_n..(o + 1) * in_n];
        for (wv, xv) in row.iter().zip(idat) {
            acc += *wv * *xv;
        }
        out.data_mut()[o] = acc;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct DenseGrads<S: Scalar = f32> {
    pub grad_input: Tensor<S>,
    pub grad_weights: Tensor<S>,
    pub grad_bias: Tensor<S>,
}

pub fn dense_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    cached_input: &Tensor<S>,
    p: &DenseParams<S>,
) -> Result<DenseGrads<S>> {
    p.validate()?;
    if grad_out.len() != p.out_units() || cached_input.len() != p.in_units() {
        return Err(Error::shape(format!(
            "dense_backward: grad length {} / input length {} vs weights {:?}",
            grad_out.len(),
            cached_input.len(),
            p.weights.shape()
        )));
    }
    let (out_n, in_n) = (p.out_units(), p.in_units());
    let mut grads = DenseGrads {
        grad_input: Tensor::zeros([in_n]),
        grad_weights: Tensor::zeros([out_n, in_n]),
        grad_bias: grad_out.clone().reshaped([out_n])?,
    };
    let gdat = grad_out.data();
    let idat = cached_input.data();
    let wdat = p.weights.data();
    for o in 0..out_n {
        let g = gdat[o];
        let wrow = &wdat[o * in_n..(o + 1) * in_n];
        let gw_row = &mut grads.grad_weights.data_mut()[o * in_n..(o + 1) * in_n];
        for i in 0..in_n {
            gw_row[i] = g * idat[i];
        }
        for (gi, wv) in grads.grad_input.data_mut().iter_mut().zip(wrow) {
            *gi += g * *wv;
        }
    }
    Ok(grads)
}

/// Loss, probabilities and logit gradient of softmax cross-entropy for one
/// sample.
#[derive(Debug, Clone)]
pub struct SoftmaxXent<S: Scalar = f32> {
    pub loss: S,
    pub probs: Tensor<S>,
    pub grad_logits: Tensor<S>,
}

/// Numerically stable softmax + cross-entropy: the max logit is subtracted
/// before exponentiation, `grad = probs - onehot(label)`.
pub fn softmax_xent<S: Scalar>(logits: &Tensor<S>, label: usize) -> Result<SoftmaxXent<S>> {
    let k = logits.len();
    if label >= k {
        return Err(Error::input(format!(
            "softmax_xent: label {label} out of range for {k} classes"
        )));
    }
    let ldat = logits.data();
    let mut max = ldat[0];
    for v in ldat {
        max = max.maximum(*v);
    }
    let mut probs = Tensor::zeros([k]);
    let mut sum = S::ZERO;
    for (p, v) in probs.data_mut().iter_mut().zip(ldat) {
        *p = (*v - max).exp();
        sum += *p;
    }
    let inv = S::ONE / sum;
    for p in probs.data_mut() {
        *p *= inv;
    }
    let loss = -(probs.data()[label].ln());
    let mut grad = probs.clone();
    grad.data_mut()[label] -= S::ONE;
    Ok(SoftmaxXent {
        loss,
        probs,
        grad_logits: grad,
    })
}

/// In-place SGD update `p <- p - lr * g`. A zero rate is allowed (no-op);
/// negative or non-finite rates and non-finite gradients are rejected.
pub fn sgd_step<S: Scalar>(param: &mut Tensor<S>, grad: &Tensor<S>, lr: S) -> Result<()> {
    if param.shape() != grad.shape() {
        return Err(Error::shape(format!(
            "sgd_step: param shape {:?} vs grad shape {:?}",
            param.shape(),
            grad.shape()
        )));
    }
    if !(lr.is_finite() && lr >= S::ZERO) {
        return Err(Error::input(format!("sgd_step: invalid learning rate {lr}")));
    }
    grad.ensure_finite("sgd_step gradient")?;
    for (p, g) in param.data_mut().iter_mut().zip(grad.data()) {
        *p -= lr * *g;
    }
    Ok(())
}

/// Align-corners bilinear upsampling of a `[C,h,w]` map to `[C,H,W]`:
/// output corner samples coincide with input corner samples and constants
/// stay constant.
pub fn bilinear_upsample<S: Scalar>(map: &Tensor<S>, out_h: usize, out_w: usize) -> Result<Tensor<S>> {
    let (c, h, w) = map.expect_rank3("bilinear_upsample input")?;
    if out_h < h || out_w < w {
        return Err(Error::input(format!(
            "bilinear_upsample: target {out_h}x{out_w} smaller than source {h}x{w}"
        )));
    }
    if out_h == h && out_w == w {
        return Ok(map.clone());
    }
    let sy = if out_h > 1 && h > 1 {
        (h - 1) as f64 / (out_h - 1) as f64
    } else {
        0.0
    };
    let sx = if out_w > 1 && w > 1 {
        (w - 1) as f64 / (out_w - 1) as f64
    } else {
        0.0
    };
    let mut out = Tensor::zeros([c, out_h, out_w]);
    let idat = map.data();
    for oy in 0..out_h {
        let fy = oy as f64 * sy;
        let y0 = (fy as usize).min(h - 1);
        let y1 = (y0 + 1).min(h - 1);
        let ty = S::from_f64(fy - y0 as f64);
        for ox in 0..out_w {
            let fx = ox as f64 * sx;
            let x0 = (fx as usize).min(w - 1);
            let x1 = (x0 + 1).min(w - 1);
            let tx = S::from_f64(fx - x0 as f64);
            for ch in 0..c {
                let base = ch * h * w;
                let v00 = idat[base + y0 * w + x0];
                let v01 = idat[base + y0 * w + x1];
                let v10 = idat[base + y1 * w + x0];
                let v11 = idat[base + y1 * w + x1];
                let top = v00 + (v01 - v00) * tx;
                let bot = v10 + (v11 - v10) * tx;
                out.data_mut()[(ch * out_h + oy) * out_w + ox] = top + (bot - top) * ty;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t3(c: usize, h: usize, w: usize, data: Vec<f32>) -> Tensor {
        Tensor::new([c, h, w], data).unwrap()
    }

    #[test]
    fn identity_kernel_convolution_passes_input_through() {
        let input = t3(1, 4, 4, (0..16).map(|v| v as f32).collect());
        let p = ConvParams::new(
            Tensor::new([1, 1, 1, 1], vec![1.0]).unwrap(),
            Tensor::new([1], vec![0.0]).unwrap(),
            Padding::Same,
            1,
        )
        .unwrap();
        let out = conv2d_forward(&input, &p).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn same_padding_conv_keeps_patch_geometry() {
        let input = Tensor::<f32>::zeros([1, 144, 144]);
        let p = ConvParams::new(
            Tensor::zeros([32, 1, 5, 5]),
            Tensor::zeros([32]),
            Padding::Same,
            1,
        )
        .unwrap();
        let out = conv2d_forward(&input, &p).unwrap();
        assert_eq!(out.shape(), &[32, 144, 144]);
    }

    #[test]
    fn conv_rejects_channel_mismatch_and_nonfinite() {
        let p = ConvParams::new(
            Tensor::zeros([1, 2, 3, 3]),
            Tensor::zeros([1]),
            Padding::Same,
            1,
        )
        .unwrap();
        let bad_ch = Tensor::zeros([3, 4, 4]);
        assert!(matches!(conv2d_forward(&bad_ch, &p), Err(Error::Shape(_))));

        let mut nan_in = Tensor::zeros([2, 4, 4]);
        nan_in.data_mut()[5] = f32::NAN;
        assert!(matches!(conv2d_forward(&nan_in, &p), Err(Error::Numeric(_))));
    }

    #[test]
    fn conv_backward_zero_grad_gives_zero_gradients() {
        let input = t3(2, 5, 5, (0..50).map(|v| v as f32 * 0.1).collect());
        let p = ConvParams::new(
            Tensor::filled([3, 2, 3, 3], 0.5),
            Tensor::zeros([3]),
            Padding::Same,
            1,
        )
        .unwrap();
        let grads = conv2d_backward(&Tensor::zeros([3, 5, 5]), &input, &p).unwrap();
        assert!(grads.grad_input.data().iter().all(|v| *v == 0.0));
        assert!(grads.grad_weights.data().iter().all(|v| *v == 0.0));
        assert!(grads.grad_bias.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn conv_backward_sum_loss_grad_weights_equals_input_sum() {
        // loss = sum(output) with a 1x1 kernel: d loss / d w = sum(input).
        let input = t3(1, 3, 3, (1..=9).map(|v| v as f32).collect());
        let p = ConvParams::new(
            Tensor::new([1, 1, 1, 1], vec![2.0]).unwrap(),
            Tensor::zeros([1]),
            Padding::Same,
            1,
        )
        .unwrap();
        let grads = conv2d_backward(&Tensor::filled([1, 3, 3], 1.0), &input, &p).unwrap();
        assert_eq!(grads.grad_weights.data()[0], 45.0);
        assert_eq!(grads.grad_bias.data()[0], 9.0);
    }

    #[test]
    fn maxpool_constant_input_ties_to_first_position() {
        let (out, sw) = maxpool2x2_forward(&Tensor::filled([1, 4, 4], 3.0)).unwrap();
        assert_eq!(out, Tensor::filled([1, 2, 2], 3.0));
        for py in 0..2 {
            for px in 0..2 {
                assert_eq!(sw.source(0, py, px), (py * 2, px * 2));
            }
        }
    }

    #[test]
    fn maxpool_picks_window_max_and_records_switch() {
        let (out, sw) = maxpool2x2_forward(&t3(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(sw.source(0, 0, 0), (1, 1));
    }

    #[test]
    fn maxpool_replicates_odd_edges() {
        let (out, sw) = maxpool2x2_forward(&t3(1, 3, 3, vec![
            1.0, 2.0, 3.0, //
            4.0, 5.0, 6.0, //
            7.0, 8.0, 9.0,
        ]))
        .unwrap();
        assert_eq!(out.shape(), &[1, 2, 2]);
        assert_eq!(out.data(), &[5.0, 6.0, 8.0, 9.0]);
        // Bottom-right window is the single clamped cell (2,2).
        assert_eq!(sw.source(0, 1, 1), (2, 2));
    }

    #[test]
    fn maxpool_backward_routes_one_unit_per_window() {
        let (_, sw) = maxpool2x2_forward(&Tensor::filled([1, 4, 4], 1.0)).unwrap();
        let grad = maxpool2x2_backward(&Tensor::filled([1, 2, 2], 1.0), &sw).unwrap();
        let nonzero: Vec<usize> = grad
            .data()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(nonzero, vec![0, 2, 8, 10]); // (0,0) of each window
    }

    #[test]
    fn maxpool_backward_zero_grad_is_zero() {
        let (_, sw) = maxpool2x2_forward(&t3(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        let grad = maxpool2x2_backward(&Tensor::<f32>::zeros([1, 1, 1]), &sw).unwrap();
        assert!(grad.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn maxpool_backward_rejects_mismatched_switches() {
        let (_, sw) = maxpool2x2_forward(&Tensor::<f32>::zeros([1, 4, 4])).unwrap();
        let err = maxpool2x2_backward(&Tensor::<f32>::zeros([2, 2, 2]), &sw);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn relu_masks_negatives_and_backward_uses_subgradient_zero() {
        let x = Tensor::new([3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&Tensor::filled([3], 1.0), &x).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn dense_identity_and_arithmetic() {
        let id = DenseParams::new(
            Tensor::new([2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            Tensor::zeros([2]),
        )
        .unwrap();
        let x = Tensor::new([2], vec![4.0, 5.0]).unwrap();
        assert_eq!(dense_forward(&x, &id).unwrap(), x);

        let p = DenseParams::new(
            Tensor::new([1, 2], vec![1.0, 2.0]).unwrap(),
            Tensor::new([1], vec![3.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(dense_forward(&x, &p).unwrap().data(), &[17.0]);
    }

    #[test]
    fn dense_rejects_length_mismatch() {
        let p = DenseParams::<f32>::new(Tensor::zeros([2, 3]), Tensor::zeros([2])).unwrap();
        let x = Tensor::zeros([4]);
        assert!(matches!(dense_forward(&x, &p), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_symmetry_and_stability() {
        let r = softmax_xent(&Tensor::new([2], vec![0.0, 0.0]).unwrap(), 0).unwrap();
        assert!((r.probs.data()[0] - 0.5).abs() < 1e-7);
        assert!((r.loss - core::f32::consts::LN_2).abs() < 1e-6);

        let big = softmax_xent(&Tensor::new([2], vec![1000.0, 0.0]).unwrap(), 0).unwrap();
        assert!(big.loss.is_finite());
        assert!(big.loss < 1e-6);
    }

    #[test]
    fn softmax_rejects_label_out_of_range() {
        let err = softmax_xent(&Tensor::<f32>::zeros([3]), 3);
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn sgd_zero_rate_is_noop_and_default_rate_matches() {
        let mut p = Tensor::new([1], vec![1.0]).unwrap();
        let g = Tensor::new([1], vec![2.0]).unwrap();
        sgd_step(&mut p, &g, 0.0).unwrap();
        assert_eq!(p.data(), &[1.0]);
        sgd_step(&mut p, &g, 0.00273).unwrap();
        assert!((p.data()[0] - 0.99454).abs() < 1e-6);
    }

    #[test]
    fn sgd_rejects_nonfinite_gradient() {
        let mut p = Tensor::zeros([2]);
        let mut g = Tensor::zeros([2]);
        g.data_mut()[1] = f32::INFINITY;
        assert!(matches!(sgd_step(&mut p, &g, 0.1), Err(Error::Numeric(_))));
    }

    #[test]
    fn upsample_constant_stays_constant() {
        let up = bilinear_upsample(&Tensor::filled([2, 3, 3], 0.7), 9, 9).unwrap();
        assert_eq!(up.shape(), &[2, 9, 9]);
        assert!(up.data().iter().all(|v| *v == 0.7));
    }

    #[test]
    fn upsample_interpolates_midpoints() {
        let m = t3(1, 2, 2, vec![0.0, 1.0, 0.0, 1.0]);
        let up = bilinear_upsample(&m, 3, 3).unwrap();
        for row in 0..3 {
            assert!((up.data()[row * 3 + 1] - 0.5).abs() < 1e-7);
        }
    }

    #[test]
    fn upsample_rejects_shrinking() {
        let m = Tensor::<f32>::zeros([1, 4, 4]);
        assert!(matches!(
            bilinear_upsample(&m, 2, 4),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn tensor_new_validates_element_count() {
        assert!(Tensor::<f32>::new([2, 3], vec![0.0; 5]).is_err());
    }
}
