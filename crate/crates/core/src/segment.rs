//! Hierarchical segmentation of a frame sequence and its exact
//! overlap-add inverse.
//!
//! Level 1 chunks frames; level m chunks level-(m-1) chunks. The segmented
//! representation of an `[N, L]` input with `M` levels is an `(M+2)`-d
//! tensor `[N, K_1, ..., K_M, S_M]`. Padding is end-only zeros with
//! `S_m = ceil(S_{m-1} / P_m)`, which reproduces 600 inter-chunk steps for
//! 30 s of 8 kHz audio under the standard window-16/stride-8 encoder with
//! K=100, P=50.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Chunk lengths and hops per level. `chunk_lengths[i]` is in units of
/// level-`i` elements (level 0 = frames).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegConfig {
    pub chunk_lengths: Vec<usize>,
    pub hops: Vec<usize>,
}

impl SegConfig {
    pub fn new(chunk_lengths: Vec<usize>, hops: Vec<usize>) -> Result<Self> {
        let cfg = SegConfig { chunk_lengths, hops };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Two-level default: K = [100, 60], P = [50, 30].
    pub fn default_mprnn() -> Self {
        SegConfig { chunk_lengths: vec![100, 60], hops: vec![50, 30] }
    }

    /// Single-level default: K = 100, P = 50.
    pub fn default_dprnn() -> Self {
        SegConfig { chunk_lengths: vec![100], hops: vec![50] }
    }

    pub fn levels(&self) -> usize {
        self.chunk_lengths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_lengths.is_empty() {
            return Err(Error::InvalidArg("segmentation needs at least one level".into()));
        }
        if self.chunk_lengths.len() != self.hops.len() {
            return Err(Error::InvalidArg(format!(
                "chunk_lengths ({}) and hops ({}) must have equal length",
                self.chunk_lengths.len(),
                self.hops.len()
            )));
        }
        for (m, (&k, &p)) in self.chunk_lengths.iter().zip(&self.hops).enumerate() {
            if k == 0 || p == 0 || p > k {
                return Err(Error::InvalidArg(format!(
                    "level {}: need 1 <= hop <= chunk length, got K={k}, P={p}",
                    m + 1
                )));
            }
        }
        Ok(())
    }
}

/// Shape and padding plan derived from a frame count and a [`SegConfig`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMeta {
    pub frames: usize,
    pub feature_dim: usize,
    pub config: SegConfig,
    /// `counts[i]` = number of level-(i+1) chunks.
    pub counts: Vec<usize>,
    /// End padding per level, in units of level-i elements.
    pub padding: Vec<usize>,
}

impl SegMeta {
    /// Tensor shape of the segmented representation.
    pub fn tensor_shape(&self) -> Vec<usize> {
        let mut shape = Vec::with_capacity(self.config.levels() + 2);
        shape.push(self.feature_dim);
        shape.extend_from_slice(&self.config.chunk_lengths);
        shape.push(*self.counts.last().expect("at least one level"));
        shape
    }

    /// Number of chunk coordinates, i.e. elements per feature.
    pub fn coords_per_feature(&self) -> usize {
        self.tensor_shape()[1..].iter().product()
    }

    /// Frame index for each chunk coordinate (`None` marks padding), plus
    /// how many coordinates land on each frame.
    pub(crate) fn frame_map(&self) -> (Vec<Option<usize>>, Vec<u32>) {
        let levels = self.config.levels();
        let ks = &self.config.chunk_lengths;
        let ps = &self.config.hops;
        let s_last = *self.counts.last().unwrap();
        let total = self.coords_per_feature();

        let mut map = vec![None; total];
        let mut counts = vec![0u32; self.frames];
        let mut coord = vec![0usize; levels + 1]; // k_1..k_M, s_M
        for slot in map.iter_mut() {
            // Unroll levels coarse to fine: start from the level-M chunk
            // index and refine to a frame.
            let mut c = coord[levels];
            let mut valid = true;
            for i in (1..levels).rev() {
                c = c * ps[i] + coord[i];
                if c >= self.counts[i - 1] {
                    valid = false;
                    break;
                }
            }
            if valid {
                let f = c * ps[0] + coord[0];
                if f < self.frames {
                    *slot = Some(f);
                    counts[f] += 1;
                }
            }
            // Row-major increment, last axis fastest.
            for ax in (0..=levels).rev() {
                coord[ax] += 1;
                let extent = if ax == levels { s_last } else { ks[ax] };
                if coord[ax] < extent {
                    break;
                }
                coord[ax] = 0;
            }
        }
        (map, counts)
    }
}

/// Segmented representation: tensor `[N, K_1, ..., K_M, S_M]` plus its plan.
#[derive(Debug, Clone)]
pub struct HierTensor<S: Scalar> {
    pub data: Tensor<S>,
    pub meta: SegMeta,
}

/// Computes per-level chunk counts and padding for `frames` input frames.
pub fn plan(frames: usize, feature_dim: usize, config: &SegConfig) -> Result<SegMeta> {
    if frames == 0 {
        return Err(Error::InvalidArg("frame count must be positive".into()));
    }
    config.validate()?;
    let mut counts = Vec::with_capacity(config.levels());
    let mut padding = Vec::with_capacity(config.levels());
    let mut prev = frames;
    for (&k, &p) in config.chunk_lengths.iter().zip(&config.hops) {
        let s = prev.div_ceil(p);
        let padded = (s - 1) * p + k;
        counts.push(s);
        padding.push(padded - prev);
        prev = s;
    }
    Ok(SegMeta { frames, feature_dim, config: config.clone(), counts, padding })
}

/// Splits `w` (`[N, L]`) into the hierarchical chunk tensor.
pub fn segment<S: Scalar>(w: &Tensor<S>, config: &SegConfig) -> Result<HierTensor<S>> {
    if w.shape().len() != 2 {
        return Err(Error::Shape(format!("segment expects [N, L], got {:?}", w.shape())));
    }
    let (n, frames) = (w.shape()[0], w.shape()[1]);
    let meta = plan(frames, n, config)?;
    let data = segment_with_meta(w, &meta);
    Ok(HierTensor { data, meta })
}

pub(crate) fn segment_with_meta<S: Scalar>(w: &Tensor<S>, meta: &SegMeta) -> Tensor<S> {
    let (map, _) = meta.frame_map();
    let n = meta.feature_dim;
    let frames = meta.frames;
    let per_feature = map.len();
    let wd = w.data();
    let mut out = vec![S::zero(); n * per_feature];
    for (feat, row) in out.chunks_exact_mut(per_feature).enumerate() {
        let src = &wd[feat * frames..(feat + 1) * frames];
        for (slot, f) in row.iter_mut().zip(map.iter()) {
            if let Some(f) = f {
                *slot = src[*f];
            }
        }
    }
    Tensor::from_vec(meta.tensor_shape(), out)
}

/// Adjoint of [`segment_with_meta`]: scatter-adds chunk-space values back
/// onto frames (no normalization).
pub(crate) fn segment_adjoint<S: Scalar>(dt: &Tensor<S>, meta: &SegMeta) -> Tensor<S> {
    let (map, _) = meta.frame_map();
    let n = meta.feature_dim;
    let frames = meta.frames;
    let per_feature = map.len();
    let dd = dt.data();
    let mut out = vec![S::zero(); n * frames];
    for (feat, row) in dd.chunks_exact(per_feature).enumerate() {
        let dst = &mut out[feat * frames..(feat + 1) * frames];
        for (&v, f) in row.iter().zip(map.iter()) {
            if let Some(f) = f {
                dst[*f] += v;
            }
        }
    }
    Tensor::from_vec(vec![n, frames], out)
}

/// Overlap-add at every level with per-frame contribution averaging; the
/// exact left inverse of [`segment`].
pub fn merge<S: Scalar>(t: &HierTensor<S>) -> Result<Tensor<S>> {
    if t.data.shape() != t.meta.tensor_shape().as_slice() {
        return Err(Error::Shape(format!(
            "merge: tensor shape {:?} inconsistent with plan {:?}",
            t.data.shape(),
            t.meta.tensor_shape()
        )));
    }
    Ok(merge_with_meta(&t.data, &t.meta))
}

pub(crate) fn merge_with_meta<S: Scalar>(data: &Tensor<S>, meta: &SegMeta) -> Tensor<S> {
    let (map, counts) = meta.frame_map();
    let n = meta.feature_dim;
    let frames = meta.frames;
    let per_feature = map.len();
    let dd = data.data();
    let mut out = vec![S::zero(); n * frames];
    for (feat, row) in dd.chunks_exact(per_feature).enumerate() {
        let dst = &mut out[feat * frames..(feat + 1) * frames];
        for (&v, f) in row.iter().zip(map.iter()) {
            if let Some(f) = f {
                dst[*f] += v;
            }
        }
        for (slot, &c) in dst.iter_mut().zip(counts.iter()) {
            *slot /= S::from_f64_lossy(c as f64);
        }
    }
    Tensor::from_vec(vec![n, frames], out)
}

/// Adjoint of [`merge_with_meta`]: gathers frame-space values back into
/// chunk space with the same contribution normalization.
pub(crate) fn merge_adjoint<S: Scalar>(dw: &Tensor<S>, meta: &SegMeta) -> Tensor<S> {
    let (map, counts) = meta.frame_map();
    let n = meta.feature_dim;
    let frames = meta.frames;
    let per_feature = map.len();
    let dd = dw.data();
    let mut out = vec![S::zero(); n * per_feature];
    for (feat, row) in out.chunks_exact_mut(per_feature).enumerate() {
        let src = &dd[feat * frames..(feat + 1) * frames];
        for (slot, f) in row.iter_mut().zip(map.iter()) {
            if let Some(f) = f {
                *slot = src[*f] / S::from_f64_lossy(counts[*f] as f64);
            }
        }
    }
    Tensor::from_vec(meta.tensor_shape(), out)
}
