//! Forward kernels and their vector-Jacobian products.
//!
//! Convolution, pooling, upsampling and the channel layer norm operate on
//! `channels x length` matrices; `linear` operates on `rows x features`.
//! Every `*_vjp` takes the upstream cotangent `grad_out` with the forward
//! output's shape and returns cotangents for each differentiable argument.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{Conv1dSpec, Tensor2D};
use crate::{Error, Result};

const SQRT_2: f64 = core::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::LengthMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

fn conv_output_len(input: &Tensor2D, spec: &Conv1dSpec, weight: &[f64], bias: &[f64]) -> Result<usize> {
    spec.validate()?;
    if input.rows() != spec.in_channels {
        return Err(Error::LengthMismatch {
            context: "conv1d input channels",
            expected: spec.in_channels,
            found: input.rows(),
        });
    }
    check_len("conv1d weight", spec.weight_len(), weight.len())?;
    check_len("conv1d bias", spec.out_channels, bias.len())?;
    match spec.output_len(input.cols()) {
        Some(n) if n > 0 => Ok(n),
        _ => Err(Error::EmptyOutput { context: "conv1d" }),
    }
}

/// Grouped 1-D cross-correlation with zero padding.
pub fn conv1d(input: &Tensor2D, spec: &Conv1dSpec, weight: &[f64], bias: &[f64]) -> Result<Tensor2D> {
    let out_len = conv_output_len(input, spec, weight, bias)?;
    let len = input.cols() as isize;
    let (ipg, opg, k) = (spec.in_per_group(), spec.out_per_group(), spec.kernel_size);
    let mut out = Tensor2D::zeros(spec.out_channels, out_len);
    for o in 0..spec.out_channels {
        let group = o / opg;
        let w_o = &weight[o * ipg * k..(o + 1) * ipg * k];
        let out_row = out.row_mut(o);
        for (j, y) in out_row.iter_mut().enumerate() {
            let start = (j * spec.stride) as isize - spec.padding as isize;
            let mut acc = bias[o];
            for ci in 0..ipg {
                let x_row = input.row(group * ipg + ci);
                let w = &w_o[ci * k..(ci + 1) * k];
                for (t, wt) in w.iter().enumerate() {
                    let pos = start + t as isize;
                    if pos >= 0 && pos < len {
                        acc += wt * x_row[pos as usize];
                    }
                }
            }
            *y = acc;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dGrads {
    pub input: Tensor2D,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn conv1d_vjp(
    input: &Tensor2D,
    spec: &Conv1dSpec,
    weight: &[f64],
    grad_out: &Tensor2D,
) -> Result<Conv1dGrads> {
    let zero_bias = vec![0.0; spec.out_channels];
    let out_len = conv_output_len(input, spec, weight, &zero_bias)?;
    grad_out.ensure_shape((spec.out_channels, out_len), "conv1d_vjp grad_out")?;
    let len = input.cols() as isize;
    let (ipg, opg, k) = (spec.in_per_group(), spec.out_per_group(), spec.kernel_size);
    let mut d_input = Tensor2D::zeros(input.rows(), input.cols());
    let mut d_weight = vec![0.0; weight.len()];
    let mut d_bias = vec![0.0; spec.out_channels];
    for o in 0..spec.out_channels {
        let group = o / opg;
        let g_row = grad_out.row(o);
        d_bias[o] = g_row.iter().sum();
        for ci in 0..ipg {
            let c_in = group * ipg + ci;
            let w_off = (o * ipg + ci) * k;
            for (j, &g) in g_row.iter().enumerate() {
                let start = (j * spec.stride) as isize - spec.padding as isize;
                for t in 0..k {
                    let pos = start + t as isize;
                    if pos >= 0 && pos < len {
                        let p = pos as usize;
                        d_weight[w_off + t] += g * input.get(c_in, p);
                        let cur = d_input.get(c_in, p);
                        d_input.set(c_in, p, cur + g * weight[w_off + t]);
                    }
                }
            }
        }
    }
    Ok(Conv1dGrads {
        input: d_input,
        weight: d_weight,
        bias: d_bias,
    })
}

/// Non-overlapping mean pooling along the length axis (stride = window).
pub fn avg_pool1d(input: &Tensor2D, window: usize) -> Result<Tensor2D> {
    if window == 0 || input.cols() % window != 0 {
        return Err(Error::Indivisible {
            context: "avg_pool1d",
            len: input.cols(),
            divisor: window,
        });
    }
    let out_len = input.cols() / window;
    let scale = 1.0 / window as f64;
    let mut out = Tensor2D::zeros(input.rows(), out_len);
    for c in 0..input.rows() {
        let x = input.row(c);
        for (j, y) in out.row_mut(c).iter_mut().enumerate() {
            *y = x[j * window..(j + 1) * window].iter().sum::<f64>() * scale;
        }
    }
    Ok(out)
}

pub fn avg_pool1d_vjp(grad_out: &Tensor2D, window: usize) -> Result<Tensor2D> {
    if window == 0 {
        return Err(Error::Indivisible {
            context: "avg_pool1d_vjp",
            len: grad_out.cols(),
            divisor: window,
        });
    }
    let scale = 1.0 / window as f64;
    let mut d = Tensor2D::zeros(grad_out.rows(), grad_out.cols() * window);
    for c in 0..grad_out.rows() {
        let g = grad_out.row(c);
        for (i, v) in d.row_mut(c).iter_mut().enumerate() {
            *v = g[i / window] * scale;
        }
    }
    Ok(d)
}

/// Nearest-neighbour upsampling: each element repeated `factor` times.
pub fn upsample_nearest(input: &Tensor2D, factor: usize) -> Result<Tensor2D> {
    if factor == 0 {
        return Err(Error::InvalidConfig("upsample factor must be >= 1".into()));
    }
    let mut out = Tensor2D::zeros(input.rows(), input.cols() * factor);
    for c in 0..input.rows() {
        let x = input.row(c);
        for (i, v) in out.row_mut(c).iter_mut().enumerate() {
            *v = x[i / factor];
        }
    }
    Ok(out)
}

/// Sums the cotangent over each repeated group.
pub fn upsample_nearest_vjp(grad_out: &Tensor2D, factor: usize) -> Result<Tensor2D> {
    if factor == 0 || grad_out.cols() % factor != 0 {
        return Err(Error::Indivisible {
            context: "upsample_nearest_vjp",
            len: grad_out.cols(),
            divisor: factor,
        });
    }
    let mut d = Tensor2D::zeros(grad_out.rows(), grad_out.cols() / factor);
    for c in 0..grad_out.rows() {
        let g = grad_out.row(c);
        for (j, v) in d.row_mut(c).iter_mut().enumerate() {
            *v = g[j * factor..(j + 1) * factor].iter().sum();
        }
    }
    Ok(d)
}

/// Layer norm across channels at every time position (column), with
/// per-channel affine `gamma`, `beta`. Uses the biased variance.
pub fn channel_layer_norm(input: &Tensor2D, gamma: &[f64], beta: &[f64], eps: f64) -> Result<Tensor2D> {
    let (c, n) = input.shape();
    check_len("channel_layer_norm gamma", c, gamma.len())?;
    check_len("channel_layer_norm beta", c, beta.len())?;
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig("layer norm eps must be positive".into()));
    }
    let mut out = Tensor2D::zeros(c, n);
    for t in 0..n {
        let (mean, inv_std) = column_stats(input, t, eps);
        for ch in 0..c {
            let xhat = (input.get(ch, t) - mean) * inv_std;
            out.set(ch, t, gamma[ch] * xhat + beta[ch]);
        }
    }
    Ok(out)
}

fn column_stats(input: &Tensor2D, t: usize, eps: f64) -> (f64, f64) {
    let c = input.rows();
    let inv_c = 1.0 / c as f64;
    let mean = (0..c).map(|ch| input.get(ch, t)).sum::<f64>() * inv_c;
    let var = (0..c)
        .map(|ch| {
            let d = input.get(ch, t) - mean;
            d * d
        })
        .sum::<f64>()
        * inv_c;
    (mean, 1.0 / libm::sqrt(var + eps))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormGrads {
    pub input: Tensor2D,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

pub fn channel_layer_norm_vjp(
    input: &Tensor2D,
    gamma: &[f64],
    eps: f64,
    grad_out: &Tensor2D,
) -> Result<LayerNormGrads> {
    let (c, n) = input.shape();
    check_len("channel_layer_norm_vjp gamma", c, gamma.len())?;
    grad_out.ensure_same_shape(input, "channel_layer_norm_vjp grad_out")?;
    let inv_c = 1.0 / c as f64;
    let mut d_input = Tensor2D::zeros(c, n);
    let mut d_gamma = vec![0.0; c];
    let mut d_beta = vec![0.0; c];
    let mut xhat = vec![0.0; c];
    let mut gxhat = vec![0.0; c];
    for t in 0..n {
        let (mean, inv_std) = column_stats(input, t, eps);
        for ch in 0..c {
            xhat[ch] = (input.get(ch, t) - mean) * inv_std;
            let g = grad_out.get(ch, t);
            d_gamma[ch] += g * xhat[ch];
            d_beta[ch] += g;
            gxhat[ch] = g * gamma[ch];
        }
        let mean_g = gxhat.iter().sum::<f64>() * inv_c;
        let mean_gx = gxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() * inv_c;
        for ch in 0..c {
            d_input.set(ch, t, inv_std * (gxhat[ch] - mean_g - xhat[ch] * mean_gx));
        }
    }
    Ok(LayerNormGrads {
        input: d_input,
        gamma: d_gamma,
        beta: d_beta,
    })
}

/// Exact GELU, `x * Phi(x)` with `Phi` the standard normal CDF.
#[inline]
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / SQRT_2))
}

#[inline]
pub fn gelu_grad_scalar(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / SQRT_2));
    let pdf = INV_SQRT_2PI * libm::exp(-0.5 * x * x);
    cdf + x * pdf
}

pub fn gelu(input: &Tensor2D) -> Tensor2D {
    let data = input.data().iter().map(|&x| gelu_scalar(x)).collect();
    Tensor2D::from_raw(input.rows(), input.cols(), data)
}

pub fn gelu_vjp(input: &Tensor2D, grad_out: &Tensor2D) -> Result<Tensor2D> {
    grad_out.ensure_same_shape(input, "gelu_vjp grad_out")?;
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| g * gelu_grad_scalar(x))
        .collect();
    Ok(Tensor2D::from_raw(input.rows(), input.cols(), data))
}

/// Row-wise affine map `y = x W^T + b`, with `W` stored `out_dim x in_dim`.
pub fn linear(input: &Tensor2D, weight: &Tensor2D, bias: &[f64]) -> Result<Tensor2D> {
    let (rows, in_dim) = input.shape();
    let out_dim = weight.rows();
    if weight.cols() != in_dim {
        return Err(Error::ShapeMismatch {
            context: "linear weight",
            expected: (out_dim, in_dim),
            found: weight.shape(),
        });
    }
    check_len("linear bias", out_dim, bias.len())?;
    let mut out = Tensor2D::zeros(rows, out_dim);
    for r in 0..rows {
        let x = input.row(r);
        for (o, y) in out.row_mut(r).iter_mut().enumerate() {
            let w = weight.row(o);
            *y = bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub input: Tensor2D,
    pub weight: Tensor2D,
    pub bias: Vec<f64>,
}

pub fn linear_vjp(input: &Tensor2D, weight: &Tensor2D, grad_out: &Tensor2D) -> Result<LinearGrads> {
    let (rows, in_dim) = input.shape();
    let out_dim = weight.rows();
    if weight.cols() != in_dim {
        return Err(Error::ShapeMismatch {
            context: "linear_vjp weight",
            expected: (out_dim, in_dim),
            found: weight.shape(),
        });
    }
    grad_out.ensure_shape((rows, out_dim), "linear_vjp grad_out")?;
    let mut d_input = Tensor2D::zeros(rows, in_dim);
    let mut d_weight = Tensor2D::zeros(out_dim, in_dim);
    let mut d_bias = vec![0.0; out_dim];
    for r in 0..rows {
        let x = input.row(r);
        let g = grad_out.row(r);
        for o in 0..out_dim {
            let go = g[o];
            if go == 0.0 {
                continue;
            }
            d_bias[o] += go;
            let w = weight.row(o);
            for (dx, wv) in d_input.row_mut(r).iter_mut().zip(w) {
                *dx += go * wv;
            }
            for (dw, xv) in d_weight.row_mut(o).iter_mut().zip(x) {
                *dw += go * xv;
            }
        }
    }
    Ok(LinearGrads {
        input: d_input,
        weight: d_weight,
        bias: d_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor2D {
        Tensor2D::from_rows(rows).unwrap()
    }

    #[test]
    fn conv1d_derivative_kernel() {
        let x = t(&[&[1.0, 2.0, 3.0]]);
        let spec = Conv1dSpec::new(1, 1, 3).padding(1);
        let y = conv1d(&x, &spec, &[1.0, 0.0, -1.0], &[0.0]).unwrap();
        assert_eq!(y.data(), &[-2.0, -2.0, 2.0]);
    }

    #[test]
    fn conv1d_identity_kernel() {
        let x = t(&[&[0.5, -1.0, 4.0, 2.0], &[1.0, 1.0, 3.0, 7.0]]);
        let spec = Conv1dSpec::new(2, 2, 3).padding(1).groups(2);
        let y = conv1d(&x, &spec, &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv1d_output_length() {
        let spec = Conv1dSpec::new(1, 1, 9).stride(2).padding(4);
        assert_eq!(spec.output_len(8), Some(4));
        let x = Tensor2D::zeros(1, 8);
        let y = conv1d(&x, &spec, &[0.0; 9], &[0.0]).unwrap();
        assert_eq!(y.shape(), (1, 4));
    }

    #[test]
    fn conv1d_rejects_bad_shapes() {
        let x = Tensor2D::zeros(2, 4);
        let spec = Conv1dSpec::new(3, 3, 1);
        assert!(matches!(
            conv1d(&x, &spec, &[0.0; 9], &[0.0; 3]),
            Err(Error::LengthMismatch { .. })
        ));
        let spec = Conv1dSpec::new(2, 2, 7);
        assert_eq!(
            conv1d(&x, &spec, &[0.0; 28], &[0.0; 2]),
            Err(Error::EmptyOutput { context: "conv1d" })
        );
        let spec = Conv1dSpec::new(2, 3, 1).groups(2);
        assert!(matches!(
            conv1d(&x, &spec, &[0.0; 3], &[0.0; 3]),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn avg_pool_examples() {
        let y = avg_pool1d(&t(&[&[1.0, 2.0, 3.0, 4.0]]), 2).unwrap();
        assert_eq!(y.data(), &[1.5, 3.5]);
        let y = avg_pool1d(&t(&[&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]]), 3).unwrap();
        assert_eq!(y.data(), &[2.0, 5.0]);
        let y = avg_pool1d(&Tensor2D::filled(3, 8, 0.7), 4).unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
        assert!(matches!(
            avg_pool1d(&Tensor2D::zeros(1, 5), 2),
            Err(Error::Indivisible { .. })
        ));
    }

    #[test]
    fn upsample_examples() {
        let x = t(&[&[1.0, 2.0]]);
        assert_eq!(upsample_nearest(&x, 2).unwrap().data(), &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(upsample_nearest(&x, 1).unwrap(), x);
        let g = t(&[&[1.0, 2.0, 3.0, 4.0]]);
        assert_eq!(upsample_nearest_vjp(&g, 2).unwrap().data(), &[3.0, 7.0]);
    }

    #[test]
    fn layer_norm_examples() {
        let x = Tensor2D::filled(4, 3, 2.5);
        let y = channel_layer_norm(&x, &[1.0; 4], &[0.0; 4], 1e-5).unwrap();
        assert!(y.max_abs() <= 1e-5);

        let x = t(&[&[1.0], &[-1.0]]);
        let y = channel_layer_norm(&x, &[1.0; 2], &[0.0; 2], 1e-12).unwrap();
        assert!((y.get(0, 0) - 1.0).abs() < 1e-9);
        assert!((y.get(1, 0) + 1.0).abs() < 1e-9);

        let x = t(&[&[0.3, 9.0], &[-2.0, 1.0], &[5.0, 4.0]]);
        let b = [0.5, -1.5, 4.0];
        let y = channel_layer_norm(&x, &[1.0; 3], &b, 1e-5).unwrap();
        for col in 0..2 {
            let m = (0..3).map(|c| y.get(c, col)).sum::<f64>() / 3.0;
            assert!((m - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gelu_examples() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!((gelu_scalar(10.0) - 10.0).abs() < 1e-9);
        assert!((gelu_scalar(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
    }

    #[test]
    fn linear_identity_and_zero() {
        let x = t(&[&[1.0, 2.0], &[3.0, -4.0]]);
        let eye = t(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(linear(&x, &eye, &[0.0, 0.0]).unwrap(), x);
        let zero = Tensor2D::zeros(3, 2);
        let y = linear(&x, &zero, &[0.0; 3]).unwrap();
        assert_eq!(y, Tensor2D::zeros(2, 3));
    }
}
