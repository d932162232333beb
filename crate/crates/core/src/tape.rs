//! Temporal adaptive position encoding (TAPE).
//!
//! A small U-Net over the token sequence built from 1-D depthwise-separable
//! convolutions. Zero padding at both ends of every convolution is the only
//! source of absolute position: a translation-invariant stack sees identical
//! context everywhere except near the sequence boundaries, so positional
//! information is injected at the ends and propagated inwards layer by layer.
//!
//! Pipeline (`n = L / merge_len`, `s = sample_rate`):
//!
//! ```text
//! V_q (L x input_dim) -> linear_input -> transpose -> avg_pool(merge_len)  = level1 (n)
//! level1 -> downsample1 = level2 (n/s) -> downsample2 = level3 (n/s^2) -> fc
//! upsample(s) + level2 -> conv2 -> upsample(s) + level1 -> conv1
//! -> transpose -> linear_output = V_t (n x output_dim)
//! ```
//!
//! Every block is conv(s) -> channel layer norm -> GELU. `linear_output` is
//! zero at initialisation, so a fresh adapter outputs exactly zero.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::ops;
use crate::rng::{self, SeededRng};
use crate::tensor::{Conv1dSpec, Tensor2D};
use crate::{Error, Result};

/// Epsilon of every channel layer norm in the adapter.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapeConfig {
    /// Pooling window; equals the token-shuffle merge count.
    pub merge_len: usize,
    /// Number of clips; the long `fc` convolution has kernel `clip_num + 1`.
    pub clip_num: usize,
    pub input_dim: usize,
    pub mid_dim: usize,
    pub output_dim: usize,
    /// Down/upsampling factor between U-Net levels.
    pub sample_rate: usize,
}

impl Default for TapeConfig {
    fn default() -> Self {
        Self {
            merge_len: 4,
            clip_num: 16,
            input_dim: 64,
            mid_dim: 256,
            output_dim: 128,
            sample_rate: 2,
        }
    }
}

impl TapeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.merge_len < 2 || self.merge_len % 2 != 0 {
            return bad(format!("tape merge_len must be even and >= 2, got {}", self.merge_len));
        }
        if self.clip_num < 2 || self.clip_num % 2 != 0 {
            return bad(format!("tape clip_num must be even and >= 2, got {}", self.clip_num));
        }
        if self.sample_rate == 0 {
            return bad("tape sample_rate must be >= 1".into());
        }
        if self.input_dim == 0 || self.mid_dim == 0 || self.output_dim == 0 {
            return bad("tape input_dim, mid_dim and output_dim must be >= 1".into());
        }
        Ok(())
    }

    /// Sequence lengths must be multiples of this.
    pub fn length_quantum(&self) -> usize {
        self.merge_len * self.sample_rate * self.sample_rate
    }

    pub fn validate_len(&self, len: usize) -> Result<()> {
        let q = self.length_quantum();
        if len == 0 || len % q != 0 {
            return Err(Error::Indivisible {
                context: "tape input length",
                len,
                divisor: q,
            });
        }
        Ok(())
    }

    /// Output rows for an input of `len` tokens.
    pub fn output_tokens(&self, len: usize) -> Result<usize> {
        self.validate_len(len)?;
        Ok(len / self.merge_len)
    }

    fn downsample_spec(&self) -> Conv1dSpec {
        Conv1dSpec::new(self.mid_dim, self.mid_dim, 2 * self.merge_len + 1)
            .stride(self.sample_rate)
            .padding(self.merge_len)
            .groups(self.mid_dim)
    }

    fn smoothing_spec(&self) -> Conv1dSpec {
        Conv1dSpec::new(self.mid_dim, self.mid_dim, self.merge_len + 1)
            .padding(self.merge_len / 2)
            .groups(self.mid_dim)
    }

    fn pointwise_spec(&self) -> Conv1dSpec {
        Conv1dSpec::new(self.mid_dim, self.mid_dim, 1)
    }

    fn fc_spec(&self) -> Conv1dSpec {
        Conv1dSpec::new(self.mid_dim, self.mid_dim, self.clip_num + 1).padding(self.clip_num / 2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `out_dim x in_dim`.
    pub weight: Tensor2D,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub spec: Conv1dSpec,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// `convs` applied in order, then channel layer norm, then GELU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub convs: Vec<Conv1d>,
    pub norm: ChannelNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TapeParams {
    pub config: TapeConfig,
    pub linear_input: Linear,
    pub downsample1: ConvBlock,
    pub downsample2: ConvBlock,
    pub fc: ConvBlock,
    pub conv2: ConvBlock,
    pub conv1: ConvBlock,
    pub linear_output: Linear,
    /// When set, parameter cotangents are reported as zero.
    pub frozen: bool,
}

struct Init<'a> {
    rng: &'a mut SeededRng,
}

impl Init<'_> {
    fn bound(fan_in: usize) -> f64 {
        1.0 / libm::sqrt(fan_in as f64)
    }

    fn linear(&mut self, in_dim: usize, out_dim: usize) -> Linear {
        let b = Self::bound(in_dim);
        Linear {
            weight: rng::uniform_tensor(self.rng, out_dim, in_dim, b),
            bias: rng::uniform_vec(self.rng, out_dim, b),
        }
    }

    fn conv(&mut self, spec: Conv1dSpec) -> Conv1d {
        let b = Self::bound(spec.in_per_group() * spec.kernel_size);
        Conv1d {
            spec,
            weight: rng::uniform_vec(self.rng, spec.weight_len(), b),
            bias: rng::uniform_vec(self.rng, spec.out_channels, b),
        }
    }

    fn block(&mut self, specs: &[Conv1dSpec], channels: usize) -> ConvBlock {
        ConvBlock {
            convs: specs.iter().map(|s| self.conv(*s)).collect(),
            norm: ChannelNorm {
                gamma: vec![1.0; channels],
                beta: vec![0.0; channels],
            },
        }
    }
}

/// Fresh adapter: every layer drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
/// layer norms at `gamma = 1, beta = 0`, and `linear_output` exactly zero.
pub fn tape_init(config: TapeConfig, seed: u64) -> Result<TapeParams> {
    config.validate()?;
    let mut rng = rng::seeded(seed);
    let mut init = Init { rng: &mut rng };
    let c = config.mid_dim;
    let separable_down = [config.downsample_spec(), config.pointwise_spec()];
    let separable_same = [config.smoothing_spec(), config.pointwise_spec()];
    Ok(TapeParams {
        config,
        linear_input: init.linear(config.input_dim, c),
        downsample1: init.block(&separable_down, c),
        downsample2: init.block(&separable_down, c),
        fc: init.block(&[config.fc_spec()], c),
        conv2: init.block(&separable_same, c),
        conv1: init.block(&separable_same, c),
        linear_output: Linear {
            weight: Tensor2D::zeros(config.output_dim, c),
            bias: vec![0.0; config.output_dim],
        },
        frozen: false,
    })
}

impl TapeParams {
    /// Generic non-degenerate parameters: [`tape_init`] followed by a random
    /// output layer and perturbed layer-norm affines. Used for gradient and
    /// position-sensitivity checks, where a zero output layer hides everything.
    pub fn random(config: TapeConfig, seed: u64) -> Result<Self> {
        let mut params = tape_init(config, seed)?;
        let mut rng = rng::seeded(rng::derive_seed(seed, [0x7a9e]));
        let b = 1.0 / libm::sqrt(config.mid_dim as f64);
        params.linear_output.weight = rng::uniform_tensor(&mut rng, config.output_dim, config.mid_dim, b);
        params.linear_output.bias = rng::uniform_vec(&mut rng, config.output_dim, b);
        params.visit_mut(|name, _, values| {
            if name.ends_with("norm.weight") {
                for v in values.iter_mut() {
                    *v = 1.0 + rng::uniform_vec(&mut rng, 1, 0.5)[0];
                }
            } else if name.ends_with("norm.bias") {
                values.copy_from_slice(&rng::uniform_vec(&mut rng, values.len(), 0.5));
            }
        });
        Ok(params)
    }

    /// Same structure with every value set to zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(|_, _, values| values.iter_mut().for_each(|v| *v = 0.0));
        z
    }

    fn blocks(&self) -> [(&'static str, &ConvBlock); 5] {
        [
            ("downsample1", &self.downsample1),
            ("downsample2", &self.downsample2),
            ("fc", &self.fc),
            ("conv2", &self.conv2),
            ("conv1", &self.conv1),
        ]
    }

    /// Visits every parameter tensor in canonical order with its name and
    /// shape. Names follow `module.index.field`; within a block the convs are
    /// numbered first and the norm follows as `norm`.
    pub fn visit(&self, mut f: impl FnMut(&str, &[usize], &[f64])) {
        let lin = |f: &mut dyn FnMut(&str, &[usize], &[f64]), name: &str, l: &Linear| {
            f(&format!("{name}.weight"), &[l.weight.rows(), l.weight.cols()], l.weight.data());
            f(&format!("{name}.bias"), &[l.bias.len()], &l.bias);
        };
        lin(&mut f, "linear_input", &self.linear_input);
        for (name, block) in self.blocks() {
            for (i, conv) in block.convs.iter().enumerate() {
                let s = conv.spec;
                f(
                    &format!("{name}.{i}.weight"),
                    &[s.out_channels, s.in_per_group(), s.kernel_size],
                    &conv.weight,
                );
                f(&format!("{name}.{i}.bias"), &[conv.bias.len()], &conv.bias);
            }
            f(&format!("{name}.norm.weight"), &[block.norm.gamma.len()], &block.norm.gamma);
            f(&format!("{name}.norm.bias"), &[block.norm.beta.len()], &block.norm.beta);
        }
        lin(&mut f, "linear_output", &self.linear_output);
    }

    /// Mutable counterpart of [`TapeParams::visit`], same order and names.
    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &[usize], &mut [f64])) {
        fn lin(f: &mut dyn FnMut(&str, &[usize], &mut [f64]), name: &str, l: &mut Linear) {
            let shape = [l.weight.rows(), l.weight.cols()];
            f(&format!("{name}.weight"), &shape, l.weight.data_mut());
            f(&format!("{name}.bias"), &[l.bias.len()], &mut l.bias);
        }
        lin(&mut f, "linear_input", &mut self.linear_input);
        let blocks: [(&str, &mut ConvBlock); 5] = [
            ("downsample1", &mut self.downsample1),
            ("downsample2", &mut self.downsample2),
            ("fc", &mut self.fc),
            ("conv2", &mut self.conv2),
            ("conv1", &mut self.conv1),
        ];
        for (name, block) in blocks {
            for (i, conv) in block.convs.iter_mut().enumerate() {
                let s = conv.spec;
                f(
                    &format!("{name}.{i}.weight"),
                    &[s.out_channels, s.in_per_group(), s.kernel_size],
                    &mut conv.weight,
                );
                f(&format!("{name}.{i}.bias"), &[conv.bias.len()], &mut conv.bias);
            }
            f(&format!("{name}.norm.weight"), &[block.norm.gamma.len()], &mut block.norm.gamma);
            f(&format!("{name}.norm.bias"), &[block.norm.beta.len()], &mut block.norm.beta);
        }
        lin(&mut f, "linear_output", &mut self.linear_output);
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(|_, _, v| n += v.len());
        n
    }

    /// All parameters concatenated in [`TapeParams::visit`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(|_, _, v| out.extend_from_slice(v));
        out
    }

    /// Overwrites all parameters from a flat buffer in [`TapeParams::visit`] order.
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(Error::LengthMismatch {
                context: "TapeParams::load_flat",
                expected: n,
                found: flat.len(),
            });
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "TapeParams::load_flat",
            });
        }
        let mut offset = 0;
        self.visit_mut(|_, _, v| {
            v.copy_from_slice(&flat[offset..offset + v.len()]);
            offset += v.len();
        });
        Ok(())
    }
}

struct BlockCache {
    conv_inputs: Vec<Tensor2D>,
    pre_norm: Tensor2D,
    pre_act: Tensor2D,
}

impl ConvBlock {
    fn forward(&self, x: &Tensor2D) -> Result<(Tensor2D, BlockCache)> {
        let mut conv_inputs = Vec::with_capacity(self.convs.len());
        let mut h = x.clone();
        for conv in &self.convs {
            let next = ops::conv1d(&h, &conv.spec, &conv.weight, &conv.bias)?;
            conv_inputs.push(h);
            h = next;
        }
        let normed = ops::channel_layer_norm(&h, &self.norm.gamma, &self.norm.beta, LAYER_NORM_EPS)?;
        let out = ops::gelu(&normed);
        Ok((
            out,
            BlockCache {
                conv_inputs,
                pre_norm: h,
                pre_act: normed,
            },
        ))
    }

    fn vjp(&self, cache: &BlockCache, grad_out: &Tensor2D, grads: &mut ConvBlock) -> Result<Tensor2D> {
        let g = ops::gelu_vjp(&cache.pre_act, grad_out)?;
        let ln = ops::channel_layer_norm_vjp(&cache.pre_norm, &self.norm.gamma, LAYER_NORM_EPS, &g)?;
        grads.norm.gamma = ln.gamma;
        grads.norm.beta = ln.beta;
        let mut g = ln.input;
        for (i, conv) in self.convs.iter().enumerate().rev() {
            let cg = ops::conv1d_vjp(&cache.conv_inputs[i], &conv.spec, &conv.weight, &g)?;
            grads.convs[i].weight = cg.weight;
            grads.convs[i].bias = cg.bias;
            g = cg.input;
        }
        Ok(g)
    }
}

/// Intermediate activations retained by [`tape_forward_cached`].
pub struct TapeCache {
    input: Tensor2D,
    top: Tensor2D,
    blocks: [BlockCache; 5],
}

/// Cotangents of a TAPE forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TapeGrads {
    pub input: Tensor2D,
    /// Same layout as the parameters; all zero when the adapter is frozen.
    pub params: TapeParams,
}

pub fn tape_forward(v_q: &Tensor2D, params: &TapeParams) -> Result<Tensor2D> {
    tape_forward_cached(v_q, params).map(|(out, _)| out)
}

pub fn tape_forward_cached(v_q: &Tensor2D, params: &TapeParams) -> Result<(Tensor2D, TapeCache)> {
    let cfg = &params.config;
    cfg.validate()?;
    v_q.ensure_shape((v_q.rows(), cfg.input_dim), "tape input")?;
    cfg.validate_len(v_q.rows())?;
    let s = cfg.sample_rate;

    let projected = ops::linear(v_q, &params.linear_input.weight, &params.linear_input.bias)?;
    let level1 = ops::avg_pool1d(&projected.transpose(), cfg.merge_len)?;
    let (level2, c_d1) = params.downsample1.forward(&level1)?;
    let (level3, c_d2) = params.downsample2.forward(&level2)?;
    let (coarse, c_fc) = params.fc.forward(&level3)?;

    let mut mid2 = ops::upsample_nearest(&coarse, s)?;
    mid2.add_assign(&level2);
    let (refined2, c_c2) = params.conv2.forward(&mid2)?;

    let mut mid1 = ops::upsample_nearest(&refined2, s)?;
    mid1.add_assign(&level1);
    let (refined1, c_c1) = params.conv1.forward(&mid1)?;

    let top = refined1.transpose();
    let out = ops::linear(&top, &params.linear_output.weight, &params.linear_output.bias)?;
    let cache = TapeCache {
        input: v_q.clone(),
        top,
        blocks: [c_d1, c_d2, c_fc, c_c2, c_c1],
    };
    Ok((out, cache))
}

/// Reverse pass through the whole adapter.
pub fn tape_vjp(params: &TapeParams, cache: &TapeCache, grad_out: &Tensor2D) -> Result<TapeGrads> {
    let cfg = &params.config;
    let s = cfg.sample_rate;
    let mut grads = params.zeros_like();
    let [c_d1, c_d2, c_fc, c_c2, c_c1] = &cache.blocks;

    let lo = ops::linear_vjp(&cache.top, &params.linear_output.weight, grad_out)?;
    grads.linear_output.weight = lo.weight;
    grads.linear_output.bias = lo.bias;

    let g_mid1 = params.conv1.vjp(c_c1, &lo.input.transpose(), &mut grads.conv1)?;
    let mut g_level1 = g_mid1.clone();
    let g_refined2 = ops::upsample_nearest_vjp(&g_mid1, s)?;

    let g_mid2 = params.conv2.vjp(c_c2, &g_refined2, &mut grads.conv2)?;
    let mut g_level2 = g_mid2.clone();
    let g_coarse = ops::upsample_nearest_vjp(&g_mid2, s)?;

    let g_level3 = params.fc.vjp(c_fc, &g_coarse, &mut grads.fc)?;
    g_level2.add_assign(&params.downsample2.vjp(c_d2, &g_level3, &mut grads.downsample2)?);
    g_level1.add_assign(&params.downsample1.vjp(c_d1, &g_level2, &mut grads.downsample1)?);

    let g_projected = ops::avg_pool1d_vjp(&g_level1, cfg.merge_len)?.transpose();
    let li = ops::linear_vjp(&cache.input, &params.linear_input.weight, &g_projected)?;
    grads.linear_input.weight = li.weight;
    grads.linear_input.bias = li.bias;

    if params.frozen {
        grads = params.zeros_like();
    }
    grads.frozen = params.frozen;
    Ok(TapeGrads {
        input: li.input,
        params: grads,
    })
}

/// Residual fusion of compressed tokens and TAPE features.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedTokens {
    pub tokens: Tensor2D,
}

pub fn fuse(v_l: &Tensor2D, v_t: &Tensor2D) -> Result<FusedTokens> {
    Ok(FusedTokens { tokens: v_l.add(v_t)? })
}

/// Number of output rows at each end whose receptive field reaches the zero
/// padding, for an input of `len` tokens. Rows strictly inside these margins
/// see the same context as they would in an unbounded sequence.
pub fn boundary_margins(config: &TapeConfig, len: usize) -> Result<(usize, usize)> {
    config.validate()?;
    config.validate_len(len)?;
    let s = config.sample_rate;
    let n1 = len / config.merge_len;
    // Pooling a translation-invariant input keeps it clean.
    let l1 = (0usize, 0usize);
    let (n2, l2) = conv_margins(n1, &config.downsample_spec(), l1);
    let (n3, l3) = conv_margins(n2, &config.downsample_spec(), l2);
    let (_, l3) = conv_margins(n3, &config.fc_spec(), l3);
    let up = |m: (usize, usize)| (m.0 * s, m.1 * s);
    let join = |a: (usize, usize), b: (usize, usize)| (a.0.max(b.0), a.1.max(b.1));
    let m2 = join(up(l3), l2);
    let (_, m2) = conv_margins(n2, &config.smoothing_spec(), m2);
    let m1 = join(up(m2), l1);
    let (_, m1) = conv_margins(n1, &config.smoothing_spec(), m1);
    Ok(m1)
}

fn conv_margins(n_in: usize, spec: &Conv1dSpec, (left, right): (usize, usize)) -> (usize, (usize, usize)) {
    let n_out = spec.output_len(n_in).unwrap_or(0);
    let clean_lo = left as isize;
    let clean_hi = n_in as isize - 1 - right as isize;
    let mut out_left = 0;
    let mut out_right = 0;
    for j in 0..n_out {
        let start = (j * spec.stride) as isize - spec.padding as isize;
        let end = start + spec.kernel_size as isize - 1;
        if start < clean_lo {
            out_left = j + 1;
        }
        if end > clean_hi && out_right == 0 {
            out_right = n_out - j;
        }
    }
    (n_out, (out_left.min(n_out), out_right))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TapeConfig {
        TapeConfig {
            merge_len: 2,
            clip_num: 2,
            input_dim: 6,
            mid_dim: 8,
            output_dim: 5,
            sample_rate: 2,
        }
    }

    fn input(rows: usize, cols: usize, seed: u64) -> Tensor2D {
        rng::uniform_tensor(&mut rng::seeded(seed), rows, cols, 1.0)
    }

    #[test]
    fn fresh_adapter_outputs_zero() {
        let params = tape_init(small(), 3).unwrap();
        let out = tape_forward(&input(32, 6, 1), &params).unwrap();
        assert_eq!(out.shape(), (16, 5));
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn default_shape_contract() {
        let cfg = TapeConfig::default();
        assert_eq!(cfg.output_tokens(16 * 96).unwrap(), 384);
        assert_eq!(cfg.output_tokens(24 * 96).unwrap(), 576);
        assert!(cfg.output_tokens(100).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(tape_init(small(), 9).unwrap(), tape_init(small(), 9).unwrap());
        assert_ne!(tape_init(small(), 9).unwrap(), tape_init(small(), 10).unwrap());
    }

    #[test]
    fn config_rejects_odd_sizes() {
        let odd = TapeConfig { merge_len: 3, ..small() };
        assert!(odd.validate().is_err());
        let odd = TapeConfig { clip_num: 5, ..small() };
        assert!(tape_init(odd, 0).is_err());
        let params = tape_init(small(), 0).unwrap();
        assert!(tape_forward(&input(30, 6, 1), &params).is_err());
        assert!(tape_forward(&input(32, 7, 1), &params).is_err());
    }

    #[test]
    fn flatten_round_trips() {
        let a = TapeParams::random(small(), 4).unwrap();
        let mut b = tape_init(small(), 5).unwrap();
        b.load_flat(&a.flatten()).unwrap();
        assert_eq!(a, b);
        assert!(b.load_flat(&[0.0]).is_err());
    }

    #[test]
    fn frozen_params_get_zero_grads() {
        let mut params = TapeParams::random(small(), 4).unwrap();
        params.frozen = true;
        let x = input(32, 6, 2);
        let (out, cache) = tape_forward_cached(&x, &params).unwrap();
        let g = tape_vjp(&params, &cache, &Tensor2D::filled(out.rows(), out.cols(), 1.0)).unwrap();
        assert!(g.params.flatten().iter().all(|&v| v == 0.0));
        assert!(g.input.max_abs() > 0.0);
    }

    #[test]
    fn margins_are_inside_the_sequence() {
        let (l, r) = boundary_margins(&small(), 64).unwrap();
        assert!(l > 0 && r > 0 && l + r < 32, "{l} {r}");
    }
}
