//! Channel-major single-image tensors and the layer kernels of the network,
//! each with its hand-written backward pass.

use crate::scalar::Real;

/// `c x h x w` activations, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![T::zero(); c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), c * h * w, "tensor data length");
        Self { c, h, w, data }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn channel(&self, k: usize) -> &[T] {
        let p = self.plane();
        &self.data[k * p..(k + 1) * p]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        (self.c, self.h, self.w) == (other.c, other.h, other.w)
    }
}

/// Unrolls 3x3 zero-padded neighbourhoods: row `ci*9 + ky*3 + kx`, column `y*w + x`.
fn im2col_3x3<T: Real>(x: &Tensor<T>) -> Vec<T> {
    let (h, w) = (x.h, x.w);
    let hw = h * w;
    let mut cols = vec![T::zero(); x.c * 9 * hw];
    for ci in 0..x.c {
        let src = x.channel(ci);
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let srow = &src[sy as usize * w..][..w];
                    let drow = &mut row[y * w..][..w];
                    // Columns shift by kx - 1 with zeros past the edges.
                    match kx {
                        0 => drow[1..].copy_from_slice(&srow[..w - 1]),
                        1 => drow.copy_from_slice(srow),
                        _ => drow[..w - 1].copy_from_slice(&srow[1..]),
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col_3x3`]: scatters column gradients back onto the input.
fn col2im_3x3<T: Real>(cols: &[T], c: usize, h: usize, w: usize) -> Tensor<T> {
    let hw = h * w;
    let mut out = Tensor::zeros(c, h, w);
    for ci in 0..c {
        let dst = &mut out.data[ci * hw..][..hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let drow = &mut dst[sy as usize * w..][..w];
                    let srow = &row[y * w..][..w];
                    match kx {
                        0 => drow[..w - 1].iter_mut().zip(&srow[1..]).for_each(|(d, &s)| *d += s),
                        1 => drow.iter_mut().zip(srow).for_each(|(d, &s)| *d += s),
                        _ => drow[1..].iter_mut().zip(&srow[..w - 1]).for_each(|(d, &s)| *d += s),
                    }
                }
            }
        }
    }
    out
}

fn add_bias<T: Real>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|y| *y += b);
    }
}

fn accumulate_bias_grad<T: Real>(grad_out: &[T], grad_bias: &mut [T], plane: usize) {
    for (chunk, gb) in grad_out.chunks(plane).zip(grad_bias) {
        *gb += chunk.iter().copied().sum::<T>();
    }
}

/// Same-size 3x3 convolution. `weight` is `cout x (cin*9)`.
pub fn conv3x3<T: Real>(x: &Tensor<T>, weight: &[T], bias: &[T], cout: usize) -> Tensor<T> {
    let hw = x.plane();
    let k = x.c * 9;
    debug_assert_eq!(weight.len(), cout * k);
    let cols = im2col_3x3(x);
    let mut out = Tensor::zeros(cout, x.h, x.w);
    T::gemm(cout, k, hw, T::one(), weight, false, &cols, false, T::zero(), &mut out.data);
    add_bias(&mut out.data, bias, hw);
    out
}

/// Accumulates parameter gradients and returns the input gradient.
pub fn conv3x3_backward<T: Real>(
    x: &Tensor<T>,
    weight: &[T],
    grad_out: &Tensor<T>,
    grad_weight: &mut [T],
    grad_bias: &mut [T],
) -> Tensor<T> {
    let hw = x.plane();
    let k = x.c * 9;
    let cout = grad_out.c;
    let cols = im2col_3x3(x);
    T::gemm(cout, hw, k, T::one(), &grad_out.data, false, &cols, true, T::one(), grad_weight);
    accumulate_bias_grad(&grad_out.data, grad_bias, hw);
    let mut grad_cols = vec![T::zero(); k * hw];
    T::gemm(k, cout, hw, T::one(), weight, true, &grad_out.data, false, T::zero(), &mut grad_cols);
    col2im_3x3(&grad_cols, x.c, x.h, x.w)
}

/// Pointwise convolution. `weight` is `cout x cin`.
pub fn conv1x1<T: Real>(x: &Tensor<T>, weight: &[T], bias: &[T], cout: usize) -> Tensor<T> {
    let hw = x.plane();
    let mut out = Tensor::zeros(cout, x.h, x.w);
    T::gemm(cout, x.c, hw, T::one(), weight, false, &x.data, false, T::zero(), &mut out.data);
    add_bias(&mut out.data, bias, hw);
    out
}

pub fn conv1x1_backward<T: Real>(
    x: &Tensor<T>,
    weight: &[T],
    grad_out: &Tensor<T>,
    grad_weight: &mut [T],
    grad_bias: &mut [T],
) -> Tensor<T> {
    let hw = x.plane();
    let cout = grad_out.c;
    T::gemm(cout, hw, x.c, T::one(), &grad_out.data, false, &x.data, true, T::one(), grad_weight);
    accumulate_bias_grad(&grad_out.data, grad_bias, hw);
    let mut grad_x = Tensor::zeros(x.c, x.h, x.w);
    T::gemm(x.c, cout, hw, T::one(), weight, true, &grad_out.data, false, T::zero(), &mut grad_x.data);
    grad_x
}

/// 2x2 stride-2 transposed convolution doubling the spatial size.
/// `weight` is `cin x (cout*4)` with taps ordered `(co, dy, dx)`.
pub fn up_conv2x2<T: Real>(x: &Tensor<T>, weight: &[T], bias: &[T], cout: usize) -> Tensor<T> {
    let hw = x.plane();
    let mut taps = vec![T::zero(); cout * 4 * hw];
    T::gemm(cout * 4, x.c, hw, T::one(), weight, true, &x.data, false, T::zero(), &mut taps);
    let (h2, w2) = (2 * x.h, 2 * x.w);
    let mut out = Tensor::zeros(cout, h2, w2);
    for co in 0..cout {
        let dst = &mut out.data[co * h2 * w2..][..h2 * w2];
        for t in 0..4 {
            let (dy, dx) = (t / 2, t % 2);
            let src = &taps[(co * 4 + t) * hw..][..hw];
            for y in 0..x.h {
                for xx in 0..x.w {
                    dst[(2 * y + dy) * w2 + 2 * xx + dx] = src[y * x.w + xx];
                }
            }
        }
    }
    add_bias(&mut out.data, bias, h2 * w2);
    out
}

pub fn up_conv2x2_backward<T: Real>(
    x: &Tensor<T>,
    weight: &[T],
    grad_out: &Tensor<T>,
    grad_weight: &mut [T],
    grad_bias: &mut [T],
) -> Tensor<T> {
    let hw = x.plane();
    let cout = grad_out.c;
    let (h2, w2) = (grad_out.h, grad_out.w);
    accumulate_bias_grad(&grad_out.data, grad_bias, h2 * w2);
    let mut grad_taps = vec![T::zero(); cout * 4 * hw];
    for co in 0..cout {
        let src = grad_out.channel(co);
        for t in 0..4 {
            let (dy, dx) = (t / 2, t % 2);
            let dst = &mut grad_taps[(co * 4 + t) * hw..][..hw];
            for y in 0..x.h {
                for xx in 0..x.w {
                    dst[y * x.w + xx] = src[(2 * y + dy) * w2 + 2 * xx + dx];
                }
            }
        }
    }
    T::gemm(x.c, hw, cout * 4, T::one(), &x.data, false, &grad_taps, true, T::one(), grad_weight);
    let mut grad_x = Tensor::zeros(x.c, x.h, x.w);
    T::gemm(x.c, cout * 4, hw, T::one(), weight, false, &grad_taps, false, T::zero(), &mut grad_x.data);
    grad_x
}

pub fn relu_inplace<T: Real>(x: &mut Tensor<T>) {
    x.data.iter_mut().for_each(|v| *v = v.max(T::zero()));
}

/// Masks `grad` where the rectified output was not positive.
pub fn relu_backward_inplace<T: Real>(output: &Tensor<T>, grad: &mut Tensor<T>) {
    for (g, &y) in grad.data.iter_mut().zip(&output.data) {
        if y <= T::zero() {
            *g = T::zero();
        }
    }
}

/// 2x2 max pooling; returns the pooled tensor and the flat source index of each maximum.
pub fn max_pool2x2<T: Real>(x: &Tensor<T>) -> (Tensor<T>, Vec<u32>) {
    let (h2, w2) = (x.h / 2, x.w / 2);
    let mut out = Tensor::zeros(x.c, h2, w2);
    let mut arg = vec![0u32; x.c * h2 * w2];
    for c in 0..x.c {
        let base = c * x.plane();
        for y in 0..h2 {
            for xx in 0..w2 {
                let mut best = base + 2 * y * x.w + 2 * xx;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * y + dy) * x.w + 2 * xx + dx;
                    if x.data[i] > x.data[best] {
                        best = i;
                    }
                }
                let o = c * h2 * w2 + y * w2 + xx;
                out.data[o] = x.data[best];
                arg[o] = best as u32;
            }
        }
    }
    (out, arg)
}

pub fn max_pool2x2_backward<T: Real>(argmax: &[u32], grad_out: &Tensor<T>, c: usize, h: usize, w: usize) -> Tensor<T> {
    let mut grad = Tensor::zeros(c, h, w);
    for (&i, &g) in argmax.iter().zip(&grad_out.data) {
        grad.data[i as usize] += g;
    }
    grad
}

/// Channel concatenation `[a, b]`.
pub fn concat<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    assert_eq!((a.h, a.w), (b.h, b.w), "concat spatial dims");
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Tensor::from_vec(a.c + b.c, a.h, a.w, data)
}

/// Splits a gradient of `[a, b]` back into its parts.
pub fn split<T: Real>(g: &Tensor<T>, a_channels: usize) -> (Tensor<T>, Tensor<T>) {
    let cut = a_channels * g.plane();
    (
        Tensor::from_vec(a_channels, g.h, g.w, g.data[..cut].to_vec()),
        Tensor::from_vec(g.c - a_channels, g.h, g.w, g.data[cut..].to_vec()),
    )
}
