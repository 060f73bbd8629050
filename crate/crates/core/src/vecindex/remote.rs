use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingProvider, EmbeddingVector};
use crate::transport::{EndpointConfig, JsonEndpoint};

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

/// Embedding service reached by `POST {"text": …}` → `{"vector": [f; d]}`.
/// Responses are re-normalized; any transport or shape failure is
/// [`EmbedError::ProviderUnavailable`].
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    endpoint: JsonEndpoint,
    dimension: usize,
}

impl HttpEmbedder {
    pub fn new(config: EndpointConfig, dimension: usize) -> Result<Self, EmbedError> {
        let endpoint = JsonEndpoint::new(config).map_err(EmbedError::ProviderUnavailable)?;
        Ok(Self { endpoint, dimension })
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let resp: EmbedResponse = self
            .endpoint
            .post(&EmbedRequest { text })
            .map_err(EmbedError::ProviderUnavailable)?;
        if resp.vector.len() != self.dimension {
            return Err(EmbedError::DimensionMismatch {
                expected: self.dimension,
                got: resp.vector.len(),
            });
        }
        EmbeddingVector::normalized(resp.vector)
            .map_err(|_| EmbedError::ProviderUnavailable("service returned a zero or non-finite vector".into()))
    }
}
