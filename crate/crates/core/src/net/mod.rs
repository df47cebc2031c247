//! A small, dependency-free convolutional network: enough to instantiate the
//! full detection architecture for shape verification and to train a reduced
//! variant end to end on synthetic scenes.
//!
//! Everything is `f64` and CPU-bound. Layers are conv2d (stride 1 in all the
//! specs here, general stride supported), max pooling (including the size-2
//! stride-1 form, which preserves spatial size via replicate padding on the
//! bottom/right edge), and a final reshape that reinterprets head channels as
//! `(B, 8+classes)` slots. There is no batch norm and no skip connection;
//! conv layers use leaky ReLU (slope 0.1) except the linear head.

pub mod io;
pub mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bev::GridMap;
use crate::error::{Error, Result};

/// A single-sample activation tensor in channel-major (C, H, W) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(c: usize, h: usize, w: usize) -> Tensor3 {
        Tensor3 { c, h, w, data: vec![0.0; c * h * w] }
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[(c * self.h + y) * self.w + x]
    }
}

/// Converts a BEV grid into network input: channel 0 is height rescaled from
/// the pixel range to `[0, 1]`, channel 1 is density (already `[0, 1]`).
pub fn grid_to_tensor(grid: &GridMap) -> Tensor3 {
    let (h, w) = (grid.rows(), grid.cols());
    let mut t = Tensor3::zeros(2, h, w);
    for i in 0..h * w {
        t.data[i] = f64::from(grid.height[i]) / 255.0;
        t.data[h * w + i] = f64::from(grid.density[i]);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// `max(x, 0.1 x)`.
    LeakyRelu,
    Linear,
}

const LEAKY_SLOPE: f64 = 0.1;

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Linear => x,
        }
    }

    /// Derivative recovered from the *output* value; valid because leaky
    /// ReLU preserves sign.
    #[inline]
    fn deriv_from_output(self, y: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if y > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        activation: Activation,
    },
    MaxPool {
        size: usize,
        stride: usize,
    },
    /// Reinterprets the head channels as anchor slots; a no-op on the data.
    Reshape,
}

impl LayerSpec {
    /// 3x3 same-padded conv with leaky ReLU.
    pub fn conv3(filters: usize) -> LayerSpec {
        LayerSpec::Conv2d { filters, kernel: 3, stride: 1, padding: 1, activation: Activation::LeakyRelu }
    }

    /// 1x1 conv with leaky ReLU.
    pub fn conv1(filters: usize) -> LayerSpec {
        LayerSpec::Conv2d { filters, kernel: 1, stride: 1, padding: 0, activation: Activation::LeakyRelu }
    }

    /// 1x1 linear head conv.
    pub fn head1(filters: usize) -> LayerSpec {
        LayerSpec::Conv2d { filters, kernel: 1, stride: 1, padding: 0, activation: Activation::Linear }
    }

    /// Size-2 stride-2 max pooling.
    pub fn pool2() -> LayerSpec {
        LayerSpec::MaxPool { size: 2, stride: 2 }
    }

    /// Size-2 stride-1 max pooling: keeps spatial size, replicate-padded.
    pub fn pool2_s1() -> LayerSpec {
        LayerSpec::MaxPool { size: 2, stride: 1 }
    }

    fn name(&self) -> String {
        match self {
            LayerSpec::Conv2d { filters, kernel, .. } => format!("conv2d {filters} {kernel}x{kernel}"),
            LayerSpec::MaxPool { size, stride } => format!("maxpool {size}/{stride}"),
            LayerSpec::Reshape => "reshape".into(),
        }
    }
}

/// Head output interpreted as `S x S x B x values`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadShape {
    pub s: usize,
    pub b: usize,
    pub values: usize,
}

/// An ordered layer list plus the nominal input and head shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_h: usize,
    pub input_w: usize,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
    /// Expected head interpretation; `None` for nets without a detection head.
    pub head: Option<HeadShape>,
}

impl NetworkSpec {
    /// The full detection architecture: a darknet-style stack whose third
    /// pool is stride 1, for an overall downsampling of 16, ending in a 1x1
    /// head conv with `3 * 11 = 33` channels on a 38x38 map.
    pub fn table1() -> NetworkSpec {
        use LayerSpec as L;
        let layers = vec![
            L::conv3(32),
            L::pool2(),
            L::conv3(64),
            L::pool2(),
            L::conv3(128),
            L::conv3(64),
            L::conv3(128),
            L::pool2_s1(),
            L::conv3(256),
            L::conv3(128),
            L::conv3(256),
            L::pool2(),
            L::conv3(512),
            L::conv1(256),
            L::conv3(512),
            L::conv1(256),
            L::conv3(512),
            L::pool2(),
            L::conv3(1024),
            L::conv1(512),
            L::conv3(1024),
            L::conv1(512),
            L::conv3(1024),
            L::conv3(1024),
            L::conv3(1024),
            L::conv3(1024),
            L::head1(33),
            L::Reshape,
        ];
        NetworkSpec {
            input_h: 608,
            input_w: 608,
            input_channels: 2,
            layers,
            head: Some(HeadShape { s: 38, b: 3, values: 11 }),
        }
    }

    /// A desk-scale variant: four convs, downsampling 8, same head layout.
    /// Meant for a 64x64 grid (6.4 m at 0.1 m/px), giving an 8x8 head.
    pub fn toy() -> NetworkSpec {
        use LayerSpec as L;
        NetworkSpec {
            input_h: 64,
            input_w: 64,
            input_channels: 2,
            layers: vec![
                L::conv3(8),
                L::pool2(),
                L::conv3(16),
                L::pool2(),
                L::conv3(32),
                L::pool2(),
                L::head1(33),
                L::Reshape,
            ],
            head: Some(HeadShape { s: 8, b: 3, values: 11 }),
        }
    }

    /// A few hundred parameters; for gradient checks and timing harnesses.
    pub fn tiny() -> NetworkSpec {
        use LayerSpec as L;
        NetworkSpec {
            input_h: 8,
            input_w: 8,
            input_channels: 2,
            layers: vec![L::conv3(3), L::pool2(), L::conv3(4), L::head1(6)],
            head: None,
        }
    }

    /// Per-layer output shapes `(c, h, w)` for an input of the given spatial
    /// size. Errors name the offending layer.
    pub fn shapes_for(&self, h: usize, w: usize) -> Result<Vec<(usize, usize, usize)>> {
        let mut c = self.input_channels;
        let (mut h, mut w) = (h, w);
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let fail = |msg: String| Error::Shape(format!("layer {i} ({}): {msg}", layer.name()));
            match *layer {
                LayerSpec::Conv2d { filters, kernel, stride, padding, .. } => {
                    if kernel != 1 && kernel != 3 {
                        return Err(fail(format!("kernel {kernel} not supported (1 or 3)")));
                    }
                    if filters == 0 || stride == 0 {
                        return Err(fail("filters and stride must be positive".into()));
                    }
                    if h + 2 * padding < kernel || w + 2 * padding < kernel {
                        return Err(fail(format!("input {h}x{w} smaller than kernel")));
                    }
                    h = (h + 2 * padding - kernel) / stride + 1;
                    w = (w + 2 * padding - kernel) / stride + 1;
                    c = filters;
                }
                LayerSpec::MaxPool { size, stride } => {
                    if size == 0 || stride == 0 {
                        return Err(fail("size and stride must be positive".into()));
                    }
                    if stride == 1 {
                        // Replicate padding keeps spatial size.
                    } else {
                        if h < size || w < size {
                            return Err(fail(format!("input {h}x{w} smaller than window")));
                        }
                        h = (h - size) / stride + 1;
                        w = (w - size) / stride + 1;
                    }
                }
                LayerSpec::Reshape => {}
            }
            out.push((c, h, w));
        }
        Ok(out)
    }

    /// Validates the spec at its nominal input size, including the head
    /// interpretation when present.
    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.input_h == 0 || self.input_w == 0 {
            return Err(Error::Config("network input shape must be nonzero".into()));
        }
        let shapes = self.shapes_for(self.input_h, self.input_w)?;
        if let Some(head) = self.head {
            let &(c, h, w) = shapes.last().ok_or_else(|| Error::Config("empty layer list".into()))?;
            if c != head.b * head.values || h != head.s || w != head.s {
                return Err(Error::Shape(format!(
                    "head expects {}x{}x{} ({}x{} slots), network produces {h}x{w}x{c}",
                    head.s,
                    head.s,
                    head.b * head.values,
                    head.b,
                    head.values,
                )));
            }
        }
        Ok(())
    }

    /// Product of layer strides: how many input pixels map to one output cell.
    pub fn downsample_factor(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match *l {
                LayerSpec::Conv2d { stride, .. } | LayerSpec::MaxPool { stride, .. } => stride,
                LayerSpec::Reshape => 1,
            })
            .product()
    }

    /// Total learnable parameters.
    pub fn param_count(&self) -> usize {
        let mut c = self.input_channels;
        let mut n = 0;
        for layer in &self.layers {
            if let LayerSpec::Conv2d { filters, kernel, .. } = *layer {
                n += filters * c * kernel * kernel + filters;
                c = filters;
            }
        }
        n
    }

    /// Human-readable shape chain, one line per layer, in `HxWxC`
    /// ordering. The trailing reshape line shows the head layout.
    pub fn describe(&self) -> Result<String> {
        let shapes = self.shapes_for(self.input_h, self.input_w)?;
        let mut out = String::new();
        out.push_str(&format!(
            "{:<18} {}x{}x{}\n",
            "input", self.input_h, self.input_w, self.input_channels
        ));
        for (layer, &(c, h, w)) in self.layers.iter().zip(&shapes) {
            let shape = match (layer, self.head) {
                (LayerSpec::Reshape, Some(hs)) => format!("{h}x{w}x{}x{}", hs.b, hs.values),
                _ => format!("{h}x{w}x{c}"),
            };
            out.push_str(&format!("{:<18} {shape}\n", layer.name()));
        }
        Ok(out)
    }
}

/// Parameters of one conv layer. Weights are `[out][in][ky][kx]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// A network: the spec plus parameters for each conv layer, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub convs: Vec<ConvParams>,
}

/// Builds a network with fan-in scaled uniform init, `U(-a, a)` with
/// `a = sqrt(1 / (in_channels * k^2))`, biases zero. The same seed always
/// yields bitwise-identical parameters.
pub fn build_network(spec: &NetworkSpec, seed: u64) -> Result<Network> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut convs = Vec::new();
    let mut c = spec.input_channels;
    for layer in &spec.layers {
        if let LayerSpec::Conv2d { filters, kernel, stride, padding, activation } = *layer {
            let fan_in = c * kernel * kernel;
            let a = (1.0 / fan_in as f64).sqrt();
            let weights: Vec<f64> =
                (0..filters * fan_in).map(|_| rng.random_range(-a..a)).collect();
            convs.push(ConvParams {
                in_channels: c,
                filters,
                kernel,
                stride,
                padding,
                activation,
                weights,
                bias: vec![0.0; filters],
            });
            c = filters;
        }
    }
    Ok(Network { spec: spec.clone(), convs })
}

/// Activations saved during a cached forward pass: the input to each layer
/// (plus the final output) and, for pool layers, the flat input index each
/// output element took its value from.
pub struct ForwardCache {
    activations: Vec<Tensor3>,
    pool_argmax: Vec<Vec<u32>>,
}

/// Per-layer parameter gradients, aligned with `Network::convs`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub convs: Vec<(Vec<f64>, Vec<f64>)>,
}

impl NetGrads {
    pub fn zeros_like(net: &Network) -> NetGrads {
        NetGrads {
            convs: net
                .convs
                .iter()
                .map(|c| (vec![0.0; c.weights.len()], vec![0.0; c.bias.len()]))
                .collect(),
        }
    }

    pub fn add(&mut self, other: &NetGrads) {
        for (a, b) in self.convs.iter_mut().zip(&other.convs) {
            for (x, y) in a.0.iter_mut().zip(&b.0) {
                *x += y;
            }
            for (x, y) in a.1.iter_mut().zip(&b.1) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for (w, b) in &mut self.convs {
            for x in w {
                *x *= k;
            }
            for x in b {
                *x *= k;
            }
        }
    }
}

fn conv_forward(p: &ConvParams, input: &Tensor3) -> Tensor3 {
    let (oh, ow) = (
        (input.h + 2 * p.padding - p.kernel) / p.stride + 1,
        (input.w + 2 * p.padding - p.kernel) / p.stride + 1,
    );
    let mut out = Tensor3::zeros(p.filters, oh, ow);
    let k = p.kernel;
    for o in 0..p.filters {
        let wbase = o * p.in_channels * k * k;
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = p.bias[o];
                for i in 0..p.in_channels {
                    for ky in 0..k {
                        let iy = (y * p.stride + ky) as isize - p.padding as isize;
                        if iy < 0 || iy >= input.h as isize {
                            continue;
                        }
                        let in_row = (i * input.h + iy as usize) * input.w;
                        let w_row = wbase + (i * k + ky) * k;
                        for kx in 0..k {
                            let ix = (x * p.stride + kx) as isize - p.padding as isize;
                            if ix < 0 || ix >= input.w as isize {
                                continue;
                            }
                            acc += p.weights[w_row + kx] * input.data[in_row + ix as usize];
                        }
                    }
                }
                *out.at_mut(o, y, x) = p.activation.apply(acc);
            }
        }
    }
    out
}

fn pool_forward(size: usize, stride: usize, input: &Tensor3) -> (Tensor3, Vec<u32>) {
    // Stride 1 keeps spatial size via replicate padding (indices clamp to
    // the last row/column); otherwise the window tiles the input.
    let (oh, ow) = if stride == 1 {
        (input.h, input.w)
    } else {
        ((input.h - size) / stride + 1, (input.w - size) / stride + 1)
    };
    let mut out = Tensor3::zeros(input.c, oh, ow);
    let mut argmax = vec![0u32; input.c * oh * ow];
    for c in 0..input.c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0usize;
                for dy in 0..size {
                    let iy = (y * stride + dy).min(input.h - 1);
                    for dx in 0..size {
                        let ix = (x * stride + dx).min(input.w - 1);
                        let idx = (c * input.h + iy) * input.w + ix;
                        let v = input.data[idx];
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                *out.at_mut(c, y, x) = best;
                argmax[(c * oh + y) * ow + x] = best_idx as u32;
            }
        }
    }
    (out, argmax)
}

impl Network {
    /// Learnable parameter count.
    pub fn param_count(&self) -> usize {
        self.convs.iter().map(|c| c.weights.len() + c.bias.len()).sum()
    }

    fn check_input(&self, x: &Tensor3) -> Result<()> {
        if x.c != self.spec.input_channels {
            return Err(Error::Shape(format!(
                "network expects {} input channels, got {}",
                self.spec.input_channels, x.c
            )));
        }
        if x.data.len() != x.c * x.h * x.w {
            return Err(Error::Shape("tensor data does not match its dimensions".into()));
        }
        Ok(())
    }

    /// Runs the network. The net is fully convolutional: any spatial size
    /// that survives the pooling chain is accepted, only the channel count
    /// is fixed.
    pub fn forward(&self, x: &Tensor3) -> Result<Tensor3> {
        self.check_input(x)?;
        self.spec.shapes_for(x.h, x.w)?;
        let mut cur = x.clone();
        let mut conv_i = 0;
        for layer in &self.spec.layers {
            match *layer {
                LayerSpec::Conv2d { .. } => {
                    cur = conv_forward(&self.convs[conv_i], &cur);
                    conv_i += 1;
                }
                LayerSpec::MaxPool { size, stride } => {
                    cur = pool_forward(size, stride, &cur).0;
                }
                LayerSpec::Reshape => {}
            }
        }
        Ok(cur)
    }

    /// Rasterized grid straight through the net.
    pub fn forward_grid(&self, grid: &GridMap) -> Result<Tensor3> {
        self.forward(&grid_to_tensor(grid))
    }

    /// Forward pass that keeps every intermediate activation for backprop.
    pub fn forward_cached(&self, x: &Tensor3) -> Result<(Tensor3, ForwardCache)> {
        self.check_input(x)?;
        self.spec.shapes_for(x.h, x.w)?;
        let mut activations = vec![x.clone()];
        let mut pool_argmax: Vec<Vec<u32>> = Vec::with_capacity(self.spec.layers.len());
        let mut conv_i = 0;
        for layer in &self.spec.layers {
            let cur = activations.last().unwrap();
            match *layer {
                LayerSpec::Conv2d { .. } => {
                    let out = conv_forward(&self.convs[conv_i], cur);
                    conv_i += 1;
                    pool_argmax.push(Vec::new());
                    activations.push(out);
                }
                LayerSpec::MaxPool { size, stride } => {
                    let (out, argmax) = pool_forward(size, stride, cur);
                    pool_argmax.push(argmax);
                    activations.push(out);
                }
                LayerSpec::Reshape => {
                    pool_argmax.push(Vec::new());
                    let copy = cur.clone();
                    activations.push(copy);
                }
            }
        }
        let out = activations.last().unwrap().clone();
        Ok((out, ForwardCache { activations, pool_argmax }))
    }

    /// Backpropagates `grad_out` (gradient of a scalar loss with respect to
    /// the network output) through the cached pass. Returns parameter
    /// gradients and the gradient with respect to the input.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Tensor3) -> Result<(NetGrads, Tensor3)> {
        let last = cache.activations.last().unwrap();
        if grad_out.c != last.c || grad_out.h != last.h || grad_out.w != last.w {
            return Err(Error::Shape(format!(
                "output gradient {}x{}x{} does not match network output {}x{}x{}",
                grad_out.c, grad_out.h, grad_out.w, last.c, last.h, last.w
            )));
        }
        let mut grads = NetGrads::zeros_like(self);
        let mut g = grad_out.clone();
        let mut conv_i = self.convs.len();
        for (li, layer) in self.spec.layers.iter().enumerate().rev() {
            let input = &cache.activations[li];
            let output = &cache.activations[li + 1];
            match *layer {
                LayerSpec::Conv2d { .. } => {
                    conv_i -= 1;
                    let p = &self.convs[conv_i];
                    let (gw, gb) = &mut grads.convs[conv_i];
                    let mut gin = Tensor3::zeros(input.c, input.h, input.w);
                    let k = p.kernel;
                    for o in 0..p.filters {
                        let wbase = o * p.in_channels * k * k;
                        for y in 0..output.h {
                            for x in 0..output.w {
                                let gz = g.at(o, y, x)
                                    * p.activation.deriv_from_output(output.at(o, y, x));
                                if gz == 0.0 {
                                    continue;
                                }
                                gb[o] += gz;
                                for i in 0..p.in_channels {
                                    for ky in 0..k {
                                        let iy = (y * p.stride + ky) as isize - p.padding as isize;
                                        if iy < 0 || iy >= input.h as isize {
                                            continue;
                                        }
                                        let in_row = (i * input.h + iy as usize) * input.w;
                                        let w_row = wbase + (i * k + ky) * k;
                                        for kx in 0..k {
                                            let ix =
                                                (x * p.stride + kx) as isize - p.padding as isize;
                                            if ix < 0 || ix >= input.w as isize {
                                                continue;
                                            }
                                            let ii = in_row + ix as usize;
                                            gw[w_row + kx] += gz * input.data[ii];
                                            gin.data[ii] += gz * p.weights[w_row + kx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    g = gin;
                }
                LayerSpec::MaxPool { .. } => {
                    let mut gin = Tensor3::zeros(input.c, input.h, input.w);
                    let argmax = &cache.pool_argmax[li];
                    for (out_idx, &in_idx) in argmax.iter().enumerate() {
                        gin.data[in_idx as usize] += g.data[out_idx];
                    }
                    g = gin;
                }
                LayerSpec::Reshape => {}
            }
        }
        Ok((grads, g))
    }
}
