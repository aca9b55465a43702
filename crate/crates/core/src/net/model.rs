//! Encoder-decoder network with skip connections and two output heads.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rng::{self, Domain};
use crate::scalar::Real;

use super::layers::{
    concat, conv1x1, conv1x1_backward, conv3x3, conv3x3_backward, max_pool2x2, max_pool2x2_backward, relu_backward_inplace,
    relu_inplace, split, up_conv2x2, up_conv2x2_backward, Tensor,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchDescriptor {
    /// Channels per resolution level, finest first.
    pub encoder_dims: Vec<usize>,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Multiplier applied to FWC-normalized input frames.
    pub input_gain: f64,
}

impl Default for ArchDescriptor {
    fn default() -> Self {
        Self {
            encoder_dims: vec![8, 16, 32],
            in_channels: 1,
            out_channels: 2,
            input_gain: 1.0,
        }
    }
}

impl ArchDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.encoder_dims.len() < 2 {
            return Err(Error::Config("net.arch.encoder_dims needs at least two levels".into()));
        }
        if self.encoder_dims[0] == 0 || self.encoder_dims.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::Config(format!(
                "net.arch.encoder_dims must be positive and strictly increasing, got {:?}",
                self.encoder_dims
            )));
        }
        if self.in_channels != 1 || self.out_channels != 2 {
            return Err(Error::Config("network takes 1 input channel and produces 2 outputs".into()));
        }
        if !(self.input_gain > 0.0) || !self.input_gain.is_finite() {
            return Err(Error::Config("net.arch.input_gain must be positive".into()));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.encoder_dims.len()
    }

    /// Spatial sizes must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << (self.depth() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv3x3,
    UpConv2x2,
    Conv1x1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub kind: LayerKind,
    pub cin: usize,
    pub cout: usize,
    /// Start of this layer's weights in the flat parameter vector; biases follow.
    pub offset: usize,
}

impl LayerShape {
    pub fn weight_len(&self) -> usize {
        let taps = match self.kind {
            LayerKind::Conv3x3 => 9,
            LayerKind::UpConv2x2 => 4,
            LayerKind::Conv1x1 => 1,
        };
        self.cin * self.cout * taps
    }

    pub fn len(&self) -> usize {
        self.weight_len() + self.cout
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv3x3 => self.cin * 9,
            LayerKind::UpConv2x2 | LayerKind::Conv1x1 => self.cin,
        }
    }
}

/// Layer order: two convolutions per encoder level, then per decoder level an
/// up-convolution and two convolutions, then the 1x1 head.
pub fn layout(arch: &ArchDescriptor) -> Vec<LayerShape> {
    let dims = &arch.encoder_dims;
    let mut shapes = Vec::new();
    let mut offset = 0;
    let mut push = |kind, cin, cout| {
        let s = LayerShape { kind, cin, cout, offset };
        offset += s.len();
        shapes.push(s);
    };
    let mut prev = arch.in_channels;
    for &c in dims {
        push(LayerKind::Conv3x3, prev, c);
        push(LayerKind::Conv3x3, c, c);
        prev = c;
    }
    for l in (0..dims.len() - 1).rev() {
        push(LayerKind::UpConv2x2, dims[l + 1], dims[l]);
        push(LayerKind::Conv3x3, 2 * dims[l], dims[l]);
        push(LayerKind::Conv3x3, dims[l], dims[l]);
    }
    push(LayerKind::Conv1x1, dims[0], arch.out_channels);
    shapes
}

/// Trainable parameters in one flat vector, laid out by [`layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub arch: ArchDescriptor,
    pub seed: u64,
    pub values: Vec<T>,
    layers: Vec<LayerShape>,
}

/// Network outputs at input resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    /// Star probability in (0, 1).
    pub s_hat: Grid<T>,
    /// Normalized distance, non-negative.
    pub d_hat: Grid<T>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    inputs: Vec<Tensor<T>>,
    outputs: Vec<Tensor<T>>,
    pool_args: Vec<Vec<u32>>,
    rectified: Vec<bool>,
    logits: Tensor<T>,
}

impl<T: Real> ForwardCache<T> {
    /// True when both passes took the same ReLU and max-pool branches at every
    /// unit, so the network is smooth on the segment between their inputs.
    pub fn same_branches(&self, other: &Self) -> bool {
        if self.pool_args != other.pool_args {
            return false;
        }
        self.outputs
            .iter()
            .zip(&other.outputs)
            .zip(&self.rectified)
            .filter(|(_, &r)| r)
            .all(|((a, b), _)| {
                a.data
                    .iter()
                    .zip(&b.data)
                    .all(|(&x, &y)| (x > T::zero()) == (y > T::zero()))
            })
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Real>(x: T) -> T {
    if x > T::lit(20.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

impl<T: Real> NetworkParams<T> {
    /// Fan-in scaled uniform weights in `±√(6/fan_in)`, zero biases.
    pub fn init(arch: &ArchDescriptor, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layers = layout(arch);
        let total = layers.last().map_or(0, |l| l.offset + l.len());
        let mut values = vec![T::zero(); total];
        let mut rng = rng::stream(seed, Domain::Init, 0);
        for l in &layers {
            let bound = (6.0 / l.fan_in() as f64).sqrt();
            for w in &mut values[l.offset..l.offset + l.weight_len()] {
                *w = T::lit(rng.random_range(-bound..bound));
            }
        }
        Ok(Self {
            arch: arch.clone(),
            seed,
            values,
            layers,
        })
    }

    /// Wraps an existing parameter vector, checking its length against the layout.
    pub fn from_values(arch: &ArchDescriptor, seed: u64, values: Vec<T>) -> Result<Self> {
        arch.validate()?;
        let layers = layout(arch);
        let total = layers.last().map_or(0, |l| l.offset + l.len());
        if values.len() != total {
            return Err(Error::Dimension(format!(
                "architecture needs {total} parameters, got {}",
                values.len()
            )));
        }
        Ok(Self {
            arch: arch.clone(),
            seed,
            values,
            layers,
        })
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        NetworkParams {
            arch: self.arch.clone(),
            seed: self.seed,
            values: self.values.iter().map(|&v| U::lit(v.as_f64())).collect(),
            layers: self.layers.clone(),
        }
    }

    fn weight(&self, i: usize) -> &[T] {
        let l = &self.layers[i];
        &self.values[l.offset..l.offset + l.weight_len()]
    }

    fn bias(&self, i: usize) -> &[T] {
        let l = &self.layers[i];
        &self.values[l.offset + l.weight_len()..l.offset + l.len()]
    }

    fn layer_forward(&self, i: usize, x: &Tensor<T>) -> Tensor<T> {
        let l = &self.layers[i];
        let (w, b) = (self.weight(i), self.bias(i));
        match l.kind {
            LayerKind::Conv3x3 => {
                let mut y = conv3x3(x, w, b, l.cout);
                relu_inplace(&mut y);
                y
            }
            LayerKind::UpConv2x2 => up_conv2x2(x, w, b, l.cout),
            LayerKind::Conv1x1 => conv1x1(x, w, b, l.cout),
        }
    }

    fn layer_backward(&self, i: usize, cache: &ForwardCache<T>, mut grad: Tensor<T>, grads: &mut [T]) -> Tensor<T> {
        let l = &self.layers[i];
        let (gw, gb) = grads[l.offset..l.offset + l.len()].split_at_mut(l.weight_len());
        let x = &cache.inputs[i];
        let w = self.weight(i);
        match l.kind {
            LayerKind::Conv3x3 => {
                relu_backward_inplace(&cache.outputs[i], &mut grad);
                conv3x3_backward(x, w, &grad, gw, gb)
            }
            LayerKind::UpConv2x2 => up_conv2x2_backward(x, w, &grad, gw, gb),
            LayerKind::Conv1x1 => conv1x1_backward(x, w, &grad, gw, gb),
        }
    }

    /// Forward pass on an already normalized input whose sides are multiples
    /// of [`ArchDescriptor::size_multiple`], keeping activations for [`Self::backward`].
    pub fn forward_train(&self, input: &Tensor<T>) -> Result<(Prediction<T>, ForwardCache<T>)> {
        let m = self.arch.size_multiple();
        if input.c != 1 || input.h % m != 0 || input.w % m != 0 || input.h == 0 || input.w == 0 {
            return Err(Error::Dimension(format!(
                "network input must be 1 x H x W with H, W multiples of {m}, got {} x {} x {}",
                input.c, input.h, input.w
            )));
        }
        if input.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let depth = self.arch.depth();
        let n_layers = self.layers.len();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(n_layers),
            outputs: Vec::with_capacity(n_layers),
            pool_args: Vec::with_capacity(depth - 1),
            rectified: Vec::with_capacity(n_layers),
            logits: Tensor::zeros(0, 0, 0),
        };
        let run = |i: usize, x: Tensor<T>, cache: &mut ForwardCache<T>| {
            let y = self.layer_forward(i, &x);
            cache.inputs.push(x);
            cache.outputs.push(y.clone());
            cache.rectified.push(self.layers[i].kind == LayerKind::Conv3x3);
            y
        };

        let mut x = input.clone();
        let mut skips = Vec::with_capacity(depth - 1);
        let mut li = 0;
        for level in 0..depth {
            if level > 0 {
                let (pooled, arg) = max_pool2x2(&x);
                cache.pool_args.push(arg);
                x = pooled;
            }
            x = run(li, x, &mut cache);
            x = run(li + 1, x, &mut cache);
            li += 2;
            if level + 1 < depth {
                skips.push(x.clone());
            }
        }
        for level in (0..depth - 1).rev() {
            let up = run(li, x, &mut cache);
            x = concat(&skips[level], &up);
            x = run(li + 1, x, &mut cache);
            x = run(li + 2, x, &mut cache);
            li += 3;
        }
        let logits = run(li, x, &mut cache);
        let (h, w) = (input.h, input.w);
        let s_hat = Grid::from_vec(w, h, logits.channel(0).iter().map(|&z| sigmoid(z)).collect());
        let d_hat = Grid::from_vec(w, h, logits.channel(1).iter().map(|&z| softplus(z)).collect());
        cache.logits = logits;
        Ok((Prediction { s_hat, d_hat }, cache))
    }

    /// Accumulates into `grads` the parameter gradient of a loss whose
    /// gradients with respect to `s_hat` and `d_hat` are given.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_s: &Grid<T>, grad_d: &Grid<T>, grads: &mut [T]) {
        assert_eq!(grads.len(), self.values.len(), "gradient buffer length");
        let depth = self.arch.depth();
        let logits = &cache.logits;
        let plane = logits.plane();
        let mut g = Tensor::zeros(2, logits.h, logits.w);
        for p in 0..plane {
            let s = sigmoid(logits.data[p]);
            g.data[p] = grad_s.as_slice()[p] * s * (T::one() - s);
            g.data[plane + p] = grad_d.as_slice()[p] * sigmoid(logits.data[plane + p]);
        }

        let mut li = self.layers.len() - 1;
        g = self.layer_backward(li, cache, g, grads);
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; depth - 1];
        for (level, skip_grad) in skip_grads.iter_mut().enumerate() {
            li -= 1;
            g = self.layer_backward(li, cache, g, grads);
            li -= 1;
            g = self.layer_backward(li, cache, g, grads);
            let (gs, gu) = split(&g, self.arch.encoder_dims[level]);
            *skip_grad = Some(gs);
            li -= 1;
            g = self.layer_backward(li, cache, gu, grads);
        }
        for level in (0..depth).rev() {
            if let Some(gs) = skip_grads.get_mut(level).and_then(Option::take) {
                g.data.iter_mut().zip(&gs.data).for_each(|(a, &b)| *a += b);
            }
            g = self.layer_backward(2 * level + 1, cache, g, grads);
            g = self.layer_backward(2 * level, cache, g, grads);
            if level > 0 {
                let src = &cache.outputs[2 * (level - 1) + 1];
                g = max_pool2x2_backward(&cache.pool_args[level - 1], &g, src.c, src.h, src.w);
            }
        }
    }

    /// Prediction for a normalized frame of any size: reflect-padded up to
    /// the size multiple, cropped back afterwards.
    pub fn predict(&self, input: &Grid<T>) -> Result<Prediction<T>> {
        let (w, h) = input.dims();
        if w == 0 || h == 0 {
            return Err(Error::Dimension("empty input frame".into()));
        }
        let m = self.arch.size_multiple();
        let (pw, ph) = (w.div_ceil(m) * m, h.div_ceil(m) * m);
        let padded = Grid::from_fn(pw, ph, |u, v| input.get(reflect(u, w), reflect(v, h)));
        let (pred, _) = self.forward_train(&Tensor::from_vec(1, ph, pw, padded.into_vec()))?;
        if (pw, ph) == (w, h) {
            return Ok(pred);
        }
        let crop = |g: &Grid<T>| Grid::from_fn(w, h, |u, v| g.get(u, v));
        Ok(Prediction {
            s_hat: crop(&pred.s_hat),
            d_hat: crop(&pred.d_hat),
        })
    }
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// Digital numbers to network input: divide by full well, apply the gain.
pub fn normalize_frame<T: Real>(frame: &Grid<f64>, fwc: f64, gain: f64) -> Grid<T> {
    let k = gain / fwc;
    frame.map(|x| T::lit(x * k))
}
