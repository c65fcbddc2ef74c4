//! Unit-norm text and image-patch embeddings behind one provider interface.
//!
//! Two providers ship: [`SyntheticEmbedder`], a seeded stand-in that turns
//! simulator patch labels into noisy category vectors, and [`RemoteEmbedder`],
//! an HTTP client for an external vision-language model server.

mod remote;
mod running_max;
mod synthetic;

pub use remote::{RemoteEmbedder, REMOTE_RETRIES, REMOTE_TIMEOUT};
pub use running_max::{normalize_similarity, RunningMax, RUNNING_MAX_FLOOR};
pub use synthetic::{SyntheticEmbedder, SyntheticEmbedderConfig};

use std::ops::Index;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{CameraIntrinsics, PatchLabels, RenderedFrame, Scene};

pub const DEFAULT_DIM: usize = 512;

/// Below this norm a vector has no usable direction.
pub const DEGENERATE_NORM: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("query text must not be empty")]
    EmptyQuery,
    #[error("remote embedder unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("remote embedder returned a malformed response: {0}")]
    BadResponse(String),
}

/// Embedding vector: unit norm, or exactly zero where no evidence exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Normalize `v`; `None` if its norm is below [`DEGENERATE_NORM`].
    pub fn normalized(v: Vec<f64>) -> Option<Self> {
        let n = l2(&v);
        if n < DEGENERATE_NORM {
            return None;
        }
        Some(Self(v.into_iter().map(|x| x / n).collect()))
    }

    /// Normalize `v`, falling back to the zero vector.
    pub fn normalized_or_zero(v: Vec<f64>) -> Self {
        let dim = v.len();
        Self::normalized(v).unwrap_or_else(|| Self::zeros(dim))
    }

    /// Wrap a vector that is already unit norm (or zero) without rescaling.
    pub fn from_raw(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        l2(&self.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

impl Index<usize> for Embedding {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine of two unit-or-zero embeddings; a zero vector gives 0.
pub fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    a.dot(b).clamp(-1.0, 1.0)
}

/// `acc += w * e`
pub fn axpy(acc: &mut [f64], w: f64, e: &Embedding) {
    for (a, x) in acc.iter_mut().zip(e.as_slice()) {
        *a += w * x;
    }
}

/// Key for reproducible per-frame noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameKey {
    pub mission_seed: u64,
    pub tick: u64,
}

/// Everything a provider may need to embed one frame's patches.
pub struct FrameInput<'a> {
    pub scene: &'a Scene,
    pub frame: &'a RenderedFrame,
    pub labels: &'a PatchLabels,
    pub intrinsics: &'a CameraIntrinsics,
    pub key: FrameKey,
}

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    fn embed_text(&self, query: &str) -> Result<Embedding, EmbeddingError>;

    /// One embedding per patch, row-major.
    fn embed_patches(&self, input: &FrameInput<'_>) -> Result<Vec<Embedding>, EmbeddingError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize, i: usize) -> Embedding {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Embedding::from_raw(v)
    }

    #[test]
    fn cosine_conventions() {
        let a = unit(4, 0);
        assert_eq!(cosine(&a, &a), 1.0);
        assert_eq!(cosine(&a, &unit(4, 1)), 0.0);
        assert_eq!(cosine(&Embedding::zeros(4), &a), 0.0);
    }

    #[test]
    fn degenerate_normalization() {
        assert!(Embedding::normalized(vec![0.0, 1e-12]).is_none());
        assert!(Embedding::normalized_or_zero(vec![0.0, 0.0]).is_zero());
        let e = Embedding::normalized(vec![3.0, 4.0]).unwrap();
        assert!((e.norm() - 1.0).abs() < 1e-15);
    }
}
