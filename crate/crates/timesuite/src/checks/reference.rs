//! Straightforward reimplementations used as oracles. They share only data
//! layouts with the core crate, never code paths.

use timesuite_core::tape::{ConvBlock, TapeParams, LAYER_NORM_EPS};
use timesuite_core::Tensor2D;

/// How a convolution reads positions outside the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Zero,
    /// Wrap around: the sequence behaves as if it were periodic, so no
    /// position is special.
    Circular,
}

/// Channels x length.
type Signal = Vec<Vec<f64>>;

fn conv(x: &Signal, layer: &timesuite_core::tape::Conv1d, padding: Padding) -> Signal {
    let s = layer.spec;
    let n = x[0].len() as isize;
    let out_len = (x[0].len() + 2 * s.padding - s.kernel_size) / s.stride + 1;
    let ipg = s.in_channels / s.groups;
    let opg = s.out_channels / s.groups;
    let k = s.kernel_size;
    (0..s.out_channels)
        .map(|o| {
            let g = o / opg;
            (0..out_len)
                .map(|j| {
                    let mut acc = layer.bias[o];
                    for ci in 0..ipg {
                        for t in 0..k {
                            let idx = (j * s.stride + t) as isize - s.padding as isize;
                            let v = match padding {
                                Padding::Zero if idx < 0 || idx >= n => 0.0,
                                Padding::Zero => x[g * ipg + ci][idx as usize],
                                Padding::Circular => x[g * ipg + ci][idx.rem_euclid(n) as usize],
                            };
                            acc += layer.weight[(o * ipg + ci) * k + t] * v;
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn block(x: &Signal, b: &ConvBlock, padding: Padding) -> Signal {
    let mut h = x.clone();
    for c in &b.convs {
        h = conv(&h, c, padding);
    }
    let channels = h.len();
    let len = h[0].len();
    let mut out = vec![vec![0.0; len]; channels];
    for t in 0..len {
        let mean = (0..channels).map(|c| h[c][t]).sum::<f64>() / channels as f64;
        let var = (0..channels).map(|c| (h[c][t] - mean).powi(2)).sum::<f64>() / channels as f64;
        for c in 0..channels {
            let y = (h[c][t] - mean) / (var + LAYER_NORM_EPS).sqrt() * b.norm.gamma[c] + b.norm.beta[c];
            out[c][t] = gelu(y);
        }
    }
    out
}

fn upsample_add(coarse: &Signal, skip: &Signal, factor: usize) -> Signal {
    skip.iter()
        .zip(coarse)
        .map(|(s, c)| s.iter().enumerate().map(|(i, v)| v + c[i / factor]).collect())
        .collect()
}

/// `y[r] = W x[r] + b` for every row of `x` (rows are tokens).
pub fn linear_rows(x: &[Vec<f64>], w: &Tensor2D, b: &[f64]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            (0..w.rows())
                .map(|o| b[o] + (0..w.cols()).map(|i| w.get(o, i) * row[i]).sum::<f64>())
                .collect()
        })
        .collect()
}

/// TAPE forward written directly from the layer description.
/// Returns output rows (tokens).
pub fn tape_forward(v_q: &Tensor2D, p: &TapeParams, padding: Padding) -> Vec<Vec<f64>> {
    let cfg = p.config;
    let rows: Vec<Vec<f64>> = (0..v_q.rows()).map(|r| v_q.row(r).to_vec()).collect();
    let proj = linear_rows(&rows, &p.linear_input.weight, &p.linear_input.bias);
    let m = cfg.merge_len;
    let level1: Signal = (0..cfg.mid_dim)
        .map(|c| {
            (0..proj.len() / m)
                .map(|i| (0..m).map(|k| proj[i * m + k][c]).sum::<f64>() / m as f64)
                .collect()
        })
        .collect();
    let level2 = block(&level1, &p.downsample1, padding);
    let level3 = block(&level2, &p.downsample2, padding);
    let coarse = block(&level3, &p.fc, padding);
    let r2 = block(&upsample_add(&coarse, &level2, cfg.sample_rate), &p.conv2, padding);
    let r1 = block(&upsample_add(&r2, &level1, cfg.sample_rate), &p.conv1, padding);
    let tokens: Vec<Vec<f64>> = (0..r1[0].len()).map(|t| r1.iter().map(|c| c[t]).collect()).collect();
    linear_rows(&tokens, &p.linear_output.weight, &p.linear_output.bias)
}

/// Mean of each window of `m` rows followed by `W0 x + b0`.
pub fn pool_then_project(v: &Tensor2D, m: usize, w0: &Tensor2D, b0: &[f64]) -> Vec<Vec<f64>> {
    let pooled: Vec<Vec<f64>> = (0..v.rows() / m)
        .map(|i| {
            (0..v.cols())
                .map(|c| (0..m).map(|k| v.get(i * m + k, c)).sum::<f64>() / m as f64)
                .collect()
        })
        .collect();
    linear_rows(&pooled, w0, b0)
}

pub fn iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let disjoint = a.1 < b.0 || b.1 < a.0;
    if disjoint {
        return 0.0;
    }
    let inter = a.1.min(b.1) - a.0.max(b.0);
    let union = a.1.max(b.1) - a.0.min(b.0);
    if union == 0.0 {
        return 1.0;
    }
    inter / union
}

/// Rank-by-comparison AP; `None` when there is no positive.
pub fn average_precision(scores: &[f64], gt: &[f64], level: f64) -> Option<f64> {
    let ahead = |i: usize, j: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j <= i);
    let positives: Vec<usize> = (0..gt.len()).filter(|&i| gt[i] >= level).collect();
    if positives.is_empty() {
        return None;
    }
    let sum: f64 = positives
        .iter()
        .map(|&i| {
            let rank = (0..scores.len()).filter(|&j| ahead(i, j)).count();
            let hits = positives.iter().filter(|&&j| ahead(i, j)).count();
            hits as f64 / rank as f64
        })
        .sum();
    Some(sum / positives.len() as f64)
}

/// First index holding the largest score.
pub fn top_clip(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}
