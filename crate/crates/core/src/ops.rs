//! Forward/backward kernels on raw slices. The graph calls these; the
//! single-sample wrappers at the bottom are the public entry points.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvDims {
    pub batch: usize,
    pub in_ch: usize,
    pub height: usize,
    pub width: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvDims {
    pub fn out_h(&self) -> usize {
        self.height - self.kh + 1
    }
    pub fn out_w(&self) -> usize {
        self.width - self.kw + 1
    }

    /// Validates `[B,C,H,W]` input against `[O,C,kH,kW]` kernels.
    pub fn from_shapes(input: &[usize], kernels: &[usize]) -> Result<Self> {
        if input.len() != 4 {
            return Err(Error::Dimension { op: "conv2d", axis: "input rank", expected: 4, found: input.len() });
        }
        if kernels.len() != 4 {
            return Err(Error::Dimension { op: "conv2d", axis: "kernel rank", expected: 4, found: kernels.len() });
        }
        if kernels[1] != input[1] {
            return Err(Error::Dimension { op: "conv2d", axis: "channels", expected: input[1], found: kernels[1] });
        }
        if kernels[2] > input[2] || kernels[2] == 0 {
            return Err(Error::Dimension { op: "conv2d", axis: "kernel height", expected: input[2], found: kernels[2] });
        }
        if kernels[3] > input[3] || kernels[3] == 0 {
            return Err(Error::Dimension { op: "conv2d", axis: "kernel width", expected: input[3], found: kernels[3] });
        }
        Ok(Self {
            batch: input[0],
            in_ch: input[1],
            height: input[2],
            width: input[3],
            out_ch: kernels[0],
            kh: kernels[2],
            kw: kernels[3],
        })
    }
}

/// Valid, stride-1, bias-free convolution.
pub fn conv2d(d: &ConvDims, input: &[f64], kernels: &[f64], out: &mut [f64]) {
    let (ho, wo) = (d.out_h(), d.out_w());
    let in_plane = d.height * d.width;
    let out_plane = ho * wo;
    for b in 0..d.batch {
        for o in 0..d.out_ch {
            let out_o = &mut out[(b * d.out_ch + o) * out_plane..][..out_plane];
            for c in 0..d.in_ch {
                let in_c = &input[(b * d.in_ch + c) * in_plane..][..in_plane];
                let k_oc = &kernels[(o * d.in_ch + c) * d.kh * d.kw..][..d.kh * d.kw];
                for a in 0..d.kh {
                    for e in 0..d.kw {
                        let w = k_oc[a * d.kw + e];
                        for i in 0..ho {
                            let src = &in_c[(i + a) * d.width + e..][..wo];
                            let dst = &mut out_o[i * wo..][..wo];
                            for (y, x) in dst.iter_mut().zip(src) {
                                *y += w * x;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates kernel and (optionally) input gradients of [`conv2d`].
pub fn conv2d_backward(
    d: &ConvDims,
    input: &[f64],
    kernels: &[f64],
    grad_out: &[f64],
    grad_kernels: Option<&mut [f64]>,
    grad_input: Option<&mut [f64]>,
) {
    let (ho, wo) = (d.out_h(), d.out_w());
    let in_plane = d.height * d.width;
    let out_plane = ho * wo;
    let ksize = d.kh * d.kw;
    if let Some(gk) = grad_kernels {
        for b in 0..d.batch {
            for o in 0..d.out_ch {
                let g_o = &grad_out[(b * d.out_ch + o) * out_plane..][..out_plane];
                for c in 0..d.in_ch {
                    let in_c = &input[(b * d.in_ch + c) * in_plane..][..in_plane];
                    let gk_oc = &mut gk[(o * d.in_ch + c) * ksize..][..ksize];
                    for a in 0..d.kh {
                        for e in 0..d.kw {
                            let mut acc = 0.0;
                            for i in 0..ho {
                                let src = &in_c[(i + a) * d.width + e..][..wo];
                                let g = &g_o[i * wo..][..wo];
                                acc += src.iter().zip(g).map(|(x, y)| x * y).sum::<f64>();
                            }
                            gk_oc[a * d.kw + e] += acc;
                        }
                    }
                }
            }
        }
    }
    if let Some(gi) = grad_input {
        for b in 0..d.batch {
            for o in 0..d.out_ch {
                let g_o = &grad_out[(b * d.out_ch + o) * out_plane..][..out_plane];
                for c in 0..d.in_ch {
                    let gi_c = &mut gi[(b * d.in_ch + c) * in_plane..][..in_plane];
                    let k_oc = &kernels[(o * d.in_ch + c) * ksize..][..ksize];
                    for a in 0..d.kh {
                        for e in 0..d.kw {
                            let w = k_oc[a * d.kw + e];
                            for i in 0..ho {
                                let dst = &mut gi_c[(i + a) * d.width + e..][..wo];
                                let g = &g_o[i * wo..][..wo];
                                for (x, y) in dst.iter_mut().zip(g) {
                                    *x += w * y;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolDims {
    pub planes: usize,
    pub height: usize,
    pub width: usize,
    pub window: usize,
    pub stride: usize,
}

impl PoolDims {
    pub fn out_h(&self) -> usize {
        (self.height - self.window) / self.stride + 1
    }
    pub fn out_w(&self) -> usize {
        (self.width - self.window) / self.stride + 1
    }

    pub fn new(planes: usize, height: usize, width: usize, window: usize, stride: usize) -> Result<Self> {
        if window == 0 || window > height {
            return Err(Error::Dimension { op: "maxpool2d", axis: "height", expected: window, found: height });
        }
        if window > width {
            return Err(Error::Dimension { op: "maxpool2d", axis: "width", expected: window, found: width });
        }
        if stride == 0 {
            return Err(Error::Contract("maxpool2d stride must be positive".into()));
        }
        Ok(Self { planes, height, width, window, stride })
    }
}

/// Floor-mode max pooling. Records, for each output cell, the flat input
/// index of the first (row-major) maximal element.
pub fn maxpool2d(d: &PoolDims, input: &[f64], out: &mut [f64], argmax: &mut [usize]) {
    let (ho, wo) = (d.out_h(), d.out_w());
    let in_plane = d.height * d.width;
    for p in 0..d.planes {
        let base = p * in_plane;
        for i in 0..ho {
            for j in 0..wo {
                let mut best = f64::NEG_INFINITY;
                let mut best_at = base + i * d.stride * d.width + j * d.stride;
                for a in 0..d.window {
                    let row = base + (i * d.stride + a) * d.width + j * d.stride;
                    for e in 0..d.window {
                        let v = input[row + e];
                        if v > best {
                            best = v;
                            best_at = row + e;
                        }
                    }
                }
                let k = (p * ho + i) * wo + j;
                out[k] = input[best_at];
                argmax[k] = best_at;
            }
        }
    }
}

/// `out[b] = weight · input[b] + bias` for `[B,n]` input and `[m,n]` weight.
pub fn linear(batch: usize, n: usize, m: usize, input: &[f64], weight: &[f64], bias: &[f64], out: &mut [f64]) {
    for b in 0..batch {
        let x = &input[b * n..][..n];
        let y = &mut out[b * m..][..m];
        for o in 0..m {
            let w = &weight[o * n..][..n];
            y[o] = bias[o] + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn linear_backward(
    batch: usize,
    n: usize,
    m: usize,
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    grad_weight: Option<&mut [f64]>,
    grad_bias: Option<&mut [f64]>,
    grad_input: Option<&mut [f64]>,
) {
    if let Some(gw) = grad_weight {
        for b in 0..batch {
            let x = &input[b * n..][..n];
            for o in 0..m {
                let g = grad_out[b * m + o];
                if g != 0.0 {
                    for (w, xi) in gw[o * n..][..n].iter_mut().zip(x) {
                        *w += g * xi;
                    }
                }
            }
        }
    }
    if let Some(gb) = grad_bias {
        for b in 0..batch {
            for (acc, g) in gb.iter_mut().zip(&grad_out[b * m..][..m]) {
                *acc += g;
            }
        }
    }
    if let Some(gi) = grad_input {
        for b in 0..batch {
            let gx = &mut gi[b * n..][..n];
            for o in 0..m {
                let g = grad_out[b * m + o];
                if g != 0.0 {
                    for (x, w) in gx.iter_mut().zip(&weight[o * n..][..n]) {
                        *x += g * w;
                    }
                }
            }
        }
    }
}

fn batched_conv_shape(input: &Tensor) -> Result<Vec<usize>> {
    match input.shape().len() {
        3 => Ok(vec![1, input.shape()[0], input.shape()[1], input.shape()[2]]),
        4 => Ok(input.shape().to_vec()),
        r => Err(Error::Dimension { op: "conv2d", axis: "input rank", expected: 3, found: r }),
    }
}

/// Convolution of a `[C,H,W]` (or batched `[B,C,H,W]`) input with
/// `[O,C,kH,kW]` kernels.
pub fn conv2d_forward(input: &Tensor, kernels: &Tensor) -> Result<Tensor> {
    let shape = batched_conv_shape(input)?;
    let d = ConvDims::from_shapes(&shape, kernels.shape())?;
    let mut out = vec![0.0; d.batch * d.out_ch * d.out_h() * d.out_w()];
    conv2d(&d, input.data(), kernels.data(), &mut out);
    let out_shape = if input.shape().len() == 3 {
        vec![d.out_ch, d.out_h(), d.out_w()]
    } else {
        vec![d.batch, d.out_ch, d.out_h(), d.out_w()]
    };
    Tensor::new(out_shape, out)
}

/// Max pooling of a `[C,H,W]` tensor; returns the pooled tensor and argmax
/// indices into the input.
pub fn maxpool2d_forward(input: &Tensor, window: usize, stride: usize) -> Result<(Tensor, Vec<usize>)> {
    let s = input.shape();
    if s.len() < 2 {
        return Err(Error::Dimension { op: "maxpool2d", axis: "input rank", expected: 3, found: s.len() });
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    let planes: usize = s[..s.len() - 2].iter().product();
    let d = PoolDims::new(planes, h, w, window, stride)?;
    let n = planes * d.out_h() * d.out_w();
    let mut out = vec![0.0; n];
    let mut arg = vec![0; n];
    maxpool2d(&d, input.data(), &mut out, &mut arg);
    let mut shape = s[..s.len() - 2].to_vec();
    shape.extend([d.out_h(), d.out_w()]);
    Ok((Tensor::new(shape, out)?, arg))
}

/// Affine map of a `[n]` (or `[B,n]`) input by `[m,n]` weight and `[m]` bias.
pub fn linear_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let ws = weight.shape();
    if ws.len() != 2 {
        return Err(Error::Dimension { op: "linear", axis: "weight rank", expected: 2, found: ws.len() });
    }
    let (m, n) = (ws[0], ws[1]);
    let (batch, in_n) = match input.shape() {
        [k] => (1, *k),
        [b, k] => (*b, *k),
        other => return Err(Error::Dimension { op: "linear", axis: "input rank", expected: 2, found: other.len() }),
    };
    if in_n != n {
        return Err(Error::Dimension { op: "linear", axis: "features", expected: n, found: in_n });
    }
    if bias.len() != m {
        return Err(Error::Dimension { op: "linear", axis: "bias", expected: m, found: bias.len() });
    }
    let mut out = vec![0.0; batch * m];
    linear(batch, n, m, input.data(), weight.data(), bias.data(), &mut out);
    let shape = if input.shape().len() == 1 { vec![m] } else { vec![batch, m] };
    Tensor::new(shape, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_output_shape_matches_first_preset_layer() {
        let input = Tensor::zeros(vec![1, 15, 15]);
        let k = Tensor::filled(vec![32, 1, 3, 3], 0.3);
        let out = conv2d_forward(&input, &k).unwrap();
        assert_eq!(out.shape(), &[32, 13, 13]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_of_ones_sums_window() {
        let input = Tensor::filled(vec![1, 3, 3], 1.0);
        let k = Tensor::filled(vec![1, 1, 2, 2], 1.0);
        let out = conv2d_forward(&input, &k).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2]);
        assert_eq!(out.data(), &[4.0; 4]);
    }

    #[test]
    fn conv_rejects_oversized_kernel_naming_axis() {
        let input = Tensor::zeros(vec![1, 3, 3]);
        let k = Tensor::zeros(vec![1, 1, 4, 2]);
        match conv2d_forward(&input, &k) {
            Err(Error::Dimension { axis, .. }) => assert_eq!(axis, "kernel height"),
            other => panic!("unexpected {other:?}"),
        }
        let k = Tensor::zeros(vec![1, 2, 2, 2]);
        match conv2d_forward(&input, &k) {
            Err(Error::Dimension { axis, .. }) => assert_eq!(axis, "channels"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pool_shapes_match_presets() {
        let (o, _) = maxpool2d_forward(&Tensor::zeros(vec![32, 13, 13]), 2, 2).unwrap();
        assert_eq!(o.shape(), &[32, 6, 6]);
        let (o, _) = maxpool2d_forward(&Tensor::zeros(vec![64, 4, 4]), 4, 4).unwrap();
        assert_eq!(o.shape(), &[64, 1, 1]);
        let (o, _) = maxpool2d_forward(&Tensor::zeros(vec![64, 4, 4]), 2, 1).unwrap();
        assert_eq!(o.shape(), &[64, 3, 3]);
        assert!(maxpool2d_forward(&Tensor::zeros(vec![1, 3, 3]), 4, 1).is_err());
    }

    #[test]
    fn pool_constant_input_and_first_argmax() {
        let (o, arg) = maxpool2d_forward(&Tensor::filled(vec![2, 4, 4], 1.5), 2, 2).unwrap();
        assert!(o.data().iter().all(|&v| v == 1.5));
        // ties go to the top-left element of each window
        assert_eq!(&arg[..4], &[0, 2, 8, 10]);
    }

    #[test]
    fn linear_trivial_cases() {
        let x = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let w = Tensor::zeros(vec![2, 3]);
        let b = Tensor::new(vec![2], vec![0.7, -0.1]).unwrap();
        assert_eq!(linear_forward(&x, &w, &b).unwrap().data(), &[0.7, -0.1]);
        let mut eye = Tensor::zeros(vec![3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 4] = 1.0;
        }
        let y = linear_forward(&x, &eye, &Tensor::zeros(vec![3])).unwrap();
        assert_eq!(y.data(), x.data());
        assert!(linear_forward(&x, &Tensor::zeros(vec![2, 4]), &b).is_err());
    }
}
