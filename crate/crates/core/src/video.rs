//! Frame sampling, clip segmentation and token assembly.
//!
//! No video is decoded here: a video is described by its frame count, frames
//! are addressed by index, and a [`ClipEncoder`] turns a clip's frame indices
//! into `n x c_q` tokens. [`MockEncoder`] stands in for a real visual encoder.

use alloc::format;
use alloc::vec::Vec;

use crate::rng;
use crate::tensor::Tensor2D;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingPlan {
    pub total_frames_available: usize,
    /// Number of clips.
    pub k: usize,
    /// Frames per clip.
    pub t: usize,
    /// Tokens per clip.
    pub n: usize,
}

impl SamplingPlan {
    pub fn validate(&self) -> Result<()> {
        if self.total_frames_available == 0 {
            return Err(Error::InvalidConfig("video has no frames".into()));
        }
        if self.k == 0 || self.t == 0 || self.n == 0 {
            return Err(Error::InvalidConfig(format!(
                "sampling plan needs k, t, n >= 1 (got k={}, t={}, n={})",
                self.k, self.t, self.n
            )));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.k * self.t
    }

    /// Token count of the assembled sequence, `k * n`.
    pub fn tokens(&self) -> usize {
        self.k * self.n
    }
}

/// Bin-centre uniform sampling of `k * t` frame indices:
/// `floor((i + 1/2) * total / (k * t))`. Short videos repeat indices.
pub fn uniform_sample(plan: &SamplingPlan) -> Result<Vec<usize>> {
    plan.validate()?;
    let count = plan.frames() as u128;
    let total = plan.total_frames_available as u128;
    Ok((0..count)
        .map(|i| ((2 * i + 1) * total / (2 * count)) as usize)
        .collect())
}

/// Splits `k * t` indices into `k` consecutive clips of `t`.
pub fn segment(indices: &[usize], k: usize, t: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 || t == 0 || indices.len() != k * t {
        return Err(Error::LengthMismatch {
            context: "segment",
            expected: k * t,
            found: indices.len(),
        });
    }
    Ok(indices.chunks_exact(t).map(<[usize]>::to_vec).collect())
}

/// Stacks clip token matrices vertically in clip order.
pub fn assemble(clips: &[Tensor2D]) -> Result<Tensor2D> {
    let Some(first) = clips.first() else {
        return Err(Error::EmptyOutput { context: "assemble" });
    };
    let shape = first.shape();
    let mut data = Vec::with_capacity(clips.len() * shape.0 * shape.1);
    for clip in clips {
        clip.ensure_shape(shape, "assemble: ragged clip")?;
        data.extend_from_slice(clip.data());
    }
    Tensor2D::from_vec(clips.len() * shape.0, shape.1, data)
}

/// Maps one clip (its frame indices) to an `n x c_q` token matrix.
/// Implementations must be deterministic.
pub trait ClipEncoder {
    fn tokens_per_clip(&self) -> usize;
    fn channels(&self) -> usize;
    fn encode(&self, clip: &[usize]) -> Result<Tensor2D>;
}

/// Deterministic pseudo-random features keyed by `(seed, clip indices)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockEncoder {
    pub seed: u64,
    pub n: usize,
    pub c_q: usize,
}

pub fn mock_encode(clip: &[usize], seed: u64, n: usize, c_q: usize) -> Tensor2D {
    let key = rng::derive_seed(seed, clip.iter().map(|&i| i as u64).chain([clip.len() as u64]));
    let mut r = rng::seeded(key);
    rng::uniform_tensor(&mut r, n, c_q, 1.0)
}

impl ClipEncoder for MockEncoder {
    fn tokens_per_clip(&self) -> usize {
        self.n
    }

    fn channels(&self) -> usize {
        self.c_q
    }

    fn encode(&self, clip: &[usize]) -> Result<Tensor2D> {
        Ok(mock_encode(clip, self.seed, self.n, self.c_q))
    }
}

/// Sample, segment, encode every clip and assemble `V_q` (`k*n x c_q`).
pub fn encode_video<E: ClipEncoder + ?Sized>(plan: &SamplingPlan, encoder: &E) -> Result<Tensor2D> {
    if encoder.tokens_per_clip() != plan.n {
        return Err(Error::LengthMismatch {
            context: "encoder tokens per clip",
            expected: plan.n,
            found: encoder.tokens_per_clip(),
        });
    }
    let clips = segment(&uniform_sample(plan)?, plan.k, plan.t)?;
    let tokens = clips
        .iter()
        .map(|c| encoder.encode(c))
        .collect::<Result<Vec<_>>>()?;
    assemble(&tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn plan(total: usize, k: usize, t: usize) -> SamplingPlan {
        SamplingPlan {
            total_frames_available: total,
            k,
            t,
            n: 4,
        }
    }

    #[test]
    fn bin_centre_sampling() {
        assert_eq!(
            uniform_sample(&plan(100, 2, 4)).unwrap(),
            vec![6, 18, 31, 43, 56, 68, 81, 93]
        );
        assert_eq!(uniform_sample(&plan(8, 4, 2)).unwrap(), (0..8).collect::<Vec<_>>());
        assert_eq!(
            uniform_sample(&plan(4, 2, 4)).unwrap(),
            vec![0, 0, 1, 1, 2, 2, 3, 3]
        );
        assert!(uniform_sample(&plan(0, 2, 4)).is_err());
    }

    #[test]
    fn segmentation() {
        let idx: Vec<usize> = (10..18).collect();
        let clips = segment(&idx, 2, 4).unwrap();
        assert_eq!(clips, vec![vec![10, 11, 12, 13], vec![14, 15, 16, 17]]);
        assert_eq!(segment(&idx, 1, 8).unwrap(), vec![idx.clone()]);
        assert_eq!(clips.concat(), idx);
        assert!(segment(&idx, 3, 3).is_err());
    }

    #[test]
    fn assembly_order_and_errors() {
        let a = Tensor2D::filled(2, 3, 1.0);
        let b = Tensor2D::filled(2, 3, 2.0);
        let v = assemble(&[a.clone(), b]).unwrap();
        assert_eq!(v.shape(), (4, 3));
        assert_eq!(v.row(2), &[2.0, 2.0, 2.0]);
        assert_eq!(assemble(std::slice::from_ref(&a)).unwrap(), a);
        assert!(assemble(&[a, Tensor2D::zeros(3, 3)]).is_err());
        assert!(assemble(&[]).is_err());
    }

    #[test]
    fn mock_encoder_is_keyed_and_deterministic() {
        let a = mock_encode(&[0, 1, 2], 7, 5, 3);
        assert_eq!(a, mock_encode(&[0, 1, 2], 7, 5, 3));
        assert_eq!(a.shape(), (5, 3));
        assert_ne!(a, mock_encode(&[0, 1, 3], 7, 5, 3));
        assert_ne!(a, mock_encode(&[0, 1, 2], 8, 5, 3));
    }

    #[test]
    fn paper_default_token_count() {
        let p = SamplingPlan {
            total_frames_available: 3000,
            k: 16,
            t: 8,
            n: 96,
        };
        let enc = MockEncoder { seed: 1, n: 96, c_q: 4 };
        assert_eq!(encode_video(&p, &enc).unwrap().shape(), (1536, 4));
    }
}
