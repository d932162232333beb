//! Token shuffle compression.
//!
//! `m` temporally adjacent tokens are concatenated along the channel axis and
//! a single linear projection maps the merged `m * c_q` features to the
//! language-model width `c_l`. The projection can be initialised from an
//! existing `c_l x c_q` projector so that, at step 0, the compressor computes
//! exactly "mean-pool `m` tokens, then apply the base projector".

use alloc::format;
use alloc::vec::Vec;

use crate::ops::{self, LinearGrads};
use crate::rng::{self, SeededRng};
use crate::tensor::Tensor2D;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShuffleConfig {
    /// Number of adjacent tokens merged into one.
    pub m: usize,
    /// Input token width.
    pub c_q: usize,
    /// Output token width.
    pub c_l: usize,
}

impl ShuffleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.c_q == 0 || self.c_l == 0 {
            return Err(Error::InvalidConfig(format!(
                "token shuffle requires m, c_q, c_l >= 1 (got m={}, c_q={}, c_l={})",
                self.m, self.c_q, self.c_l
            )));
        }
        Ok(())
    }

    /// Number of compressed tokens for a sequence of `len` tokens.
    pub fn output_tokens(&self, len: usize) -> Result<usize> {
        if self.m == 0 || len % self.m != 0 {
            return Err(Error::Indivisible {
                context: "token shuffle",
                len,
                divisor: self.m,
            });
        }
        Ok(len / self.m)
    }
}

/// Projection applied to merged tokens: `weight` is `c_l x (m * c_q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShuffleParams {
    pub config: ShuffleConfig,
    pub weight: Tensor2D,
    pub bias: Vec<f64>,
}

impl ShuffleParams {
    pub fn new(config: ShuffleConfig, weight: Tensor2D, bias: Vec<f64>) -> Result<Self> {
        config.validate()?;
        weight.ensure_shape((config.c_l, config.m * config.c_q), "ShuffleParams weight")?;
        if bias.len() != config.c_l {
            return Err(Error::LengthMismatch {
                context: "ShuffleParams bias",
                expected: config.c_l,
                found: bias.len(),
            });
        }
        if !weight.is_finite() || bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "ShuffleParams",
            });
        }
        Ok(Self {
            config,
            weight,
            bias,
        })
    }

    /// Fan-in uniform initialisation, ignoring any pretrained projector.
    /// This is the "without efficient initialisation" baseline.
    pub fn random(config: ShuffleConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng: SeededRng = rng::seeded(seed);
        let fan_in = config.m * config.c_q;
        let bound = 1.0 / libm::sqrt(fan_in as f64);
        let weight = rng::uniform_tensor(&mut rng, config.c_l, fan_in, bound);
        let bias = rng::uniform_vec(&mut rng, config.c_l, bound);
        Ok(Self {
            config,
            weight,
            bias,
        })
    }
}

/// Reshapes `L x c_q` into `(L/m) x (m*c_q)`; row `i` is the concatenation of
/// input rows `i*m .. (i+1)*m`. Row-major storage makes this a pure reshape.
pub fn merge_adjacent(v_q: &Tensor2D, m: usize) -> Result<Tensor2D> {
    if m == 0 || v_q.rows() % m != 0 {
        return Err(Error::Indivisible {
            context: "merge_adjacent",
            len: v_q.rows(),
            divisor: m,
        });
    }
    v_q.clone().reshape(v_q.rows() / m, v_q.cols() * m)
}

/// Inverse of [`merge_adjacent`], used to route gradients back to tokens.
pub fn split_merged(v_m: &Tensor2D, m: usize) -> Result<Tensor2D> {
    if m == 0 || v_m.cols() % m != 0 {
        return Err(Error::Indivisible {
            context: "split_merged",
            len: v_m.cols(),
            divisor: m,
        });
    }
    v_m.clone().reshape(v_m.rows() * m, v_m.cols() / m)
}

pub fn project(v_m: &Tensor2D, params: &ShuffleParams) -> Result<Tensor2D> {
    ops::linear(v_m, &params.weight, &params.bias)
}

pub fn project_vjp(v_m: &Tensor2D, params: &ShuffleParams, grad_out: &Tensor2D) -> Result<LinearGrads> {
    ops::linear_vjp(v_m, &params.weight, grad_out)
}

/// Merge then project: `L x c_q -> (L/m) x c_l`.
pub fn compress(v_q: &Tensor2D, params: &ShuffleParams) -> Result<Tensor2D> {
    v_q.ensure_shape((v_q.rows(), params.config.c_q), "token shuffle input")?;
    project(&merge_adjacent(v_q, params.config.m)?, params)
}

/// Builds shuffle parameters from a base projector `w0: c_l x c_q`, `b0`.
///
/// The weight is `w0` tiled `m` times horizontally with every copy scaled by
/// `1/m`; the bias is `b0` unchanged. Then
/// `project(merge_adjacent(v, m)) == linear(mean_pool_rows(v, m), w0, b0)`.
pub fn efficient_init(w0: &Tensor2D, b0: &[f64], m: usize) -> Result<ShuffleParams> {
    let (c_l, c_q) = w0.shape();
    let config = ShuffleConfig { m, c_q, c_l };
    config.validate()?;
    let scale = 1.0 / m as f64;
    let mut weight = Tensor2D::zeros(c_l, m * c_q);
    for o in 0..c_l {
        let src = w0.row(o);
        for chunk in weight.row_mut(o).chunks_exact_mut(c_q) {
            if m == 1 {
                chunk.copy_from_slice(src);
            } else {
                for (d, s) in chunk.iter_mut().zip(src) {
                    *d = s * scale;
                }
            }
        }
    }
    ShuffleParams::new(config, weight, b0.to_vec())
}

/// Mean over each window of `m` consecutive rows.
pub fn mean_pool_rows(v: &Tensor2D, m: usize) -> Result<Tensor2D> {
    if m == 0 || v.rows() % m != 0 {
        return Err(Error::Indivisible {
            context: "mean_pool_rows",
            len: v.rows(),
            divisor: m,
        });
    }
    let scale = 1.0 / m as f64;
    let mut out = Tensor2D::zeros(v.rows() / m, v.cols());
    for i in 0..out.rows() {
        let dst = out.row_mut(i);
        for r in i * m..(i + 1) * m {
            for (d, s) in dst.iter_mut().zip(v.row(r)) {
                *d += s;
            }
        }
        for d in dst.iter_mut() {
            *d *= scale;
        }
    }
    Ok(out)
}

/// Pooling baseline: mean-pool `m` rows, then the base projection.
pub fn mean_pool_compress(v_q: &Tensor2D, m: usize, w0: &Tensor2D, b0: &[f64]) -> Result<Tensor2D> {
    ops::linear(&mean_pool_rows(v_q, m)?, w0, b0)
}
