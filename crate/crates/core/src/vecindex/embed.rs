use super::{EmbedError, EmbeddingProvider, EmbeddingVector};

pub const DEFAULT_DIMENSION: usize = 384;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Lowercased runs of alphanumeric characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Signed feature hashing of a bag of words.
///
/// Each token lands in bucket `h % dimension` with sign `−1` when the top bit
/// of its FNV-1a hash is set. Counts accumulate, then the vector is
/// L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    /// Bucket and sign for one token.
    pub fn slot(&self, token: &str) -> (usize, f64) {
        let h = fnv1a64(token.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        ((h % self.dimension as u64) as usize, sign)
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut v = vec![0.0; self.dimension];
        let mut any = false;
        for tok in tokenize(text) {
            let (bucket, sign) = self.slot(&tok);
            v[bucket] += sign;
            any = true;
        }
        if !any {
            return Err(EmbedError::NoTokens(text.to_string()));
        }
        EmbeddingVector::normalized(v)
    }
}
