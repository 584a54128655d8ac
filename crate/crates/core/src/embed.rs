//! Text embeddings behind a pluggable provider seam.
//!
//! The built-in [`HashedBagOfWords`] provider lowercases its input, splits on
//! every non-alphanumeric character, hashes each token with 64-bit FNV-1a
//! (offset basis `0xcbf29ce484222325`, prime `0x100000001b3`) into one of
//! `dim` buckets, counts occurrences and L2-normalizes the counts. No stemming
//! and no stop words, so any implementation following these rules reproduces
//! the vectors bit for bit.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Default dimension of the built-in provider.
pub const DEFAULT_DIM: usize = 64;

/// Name recorded in bank headers for [`HashedBagOfWords`].
pub const HASHED_BOW_NAME: &str = "hashed-bow";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbedError {
    #[error("text contains no alphanumeric token: {0:?}")]
    EmptyText(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("non-finite component at index {0}")]
    NonFinite(usize),
}

/// A fixed-length real vector.
#[derive(Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Wraps raw values, rejecting empty or non-finite input.
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::DimensionMismatch { left: 0, right: 1 });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    /// Returns the unit vector pointing the same way.
    pub fn normalized(&self) -> Result<Self, EmbedError> {
        let n = self.norm();
        if n == 0.0 {
            return Err(EmbedError::ZeroVector);
        }
        Ok(Self(self.0.iter().map(|v| v / n).collect()))
    }
}

impl fmt::Debug for EmbeddingVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EmbeddingVector(dim={}, {:?})", self.0.len(), self.0)
    }
}

/// Something that maps text to a fixed-dimension vector deterministically.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

/// Shared handle to a provider; stores keep one of these.
pub type SharedProvider = Arc<dyn EmbeddingProvider>;

/// Deterministic bag of hashed tokens.
#[derive(Debug, Clone)]
pub struct HashedBagOfWords {
    dim: usize,
}

impl HashedBagOfWords {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn shared(dim: usize) -> SharedProvider {
        Arc::new(Self::new(dim))
    }
}

impl Default for HashedBagOfWords {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

impl EmbeddingProvider for HashedBagOfWords {
    fn name(&self) -> &str {
        HASHED_BOW_NAME
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut counts = vec![0.0f64; self.dim];
        let mut any = false;
        for token in tokenize(text) {
            let bucket = (fnv1a64(token.as_bytes()) % self.dim as u64) as usize;
            counts[bucket] += 1.0;
            any = true;
        }
        if !any {
            return Err(EmbedError::EmptyText(text.to_string()));
        }
        EmbeddingVector(counts).normalized()
    }
}

/// Lowercase and split on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Embeds with the default provider.
pub fn embed_text(text: &str) -> Result<EmbeddingVector, EmbedError> {
    HashedBagOfWords::default().embed(text)
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity of two raw slices.
pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch { left: a.len(), right: b.len() });
    }
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    cosine_slices(&a.0, &b.0)
}
