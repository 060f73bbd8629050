use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Answer, ImageRef, VlmClient, VlmError};
use crate::transport::{EndpointConfig, JsonEndpoint};

#[derive(Serialize)]
struct AskRequest<'a> {
    image_b64: &'a str,
    question: &'a str,
}

#[derive(Deserialize)]
struct AskResponse {
    answer: Answer,
}

/// VLM service reached by `POST {"image_b64", "question"}` →
/// `{"answer": "yes" | "no" | "unsure"}`. The image URI is read as a local
/// file and base64-encoded per request.
#[derive(Debug, Clone)]
pub struct HttpVlmClient {
    endpoint: JsonEndpoint,
}

impl HttpVlmClient {
    pub fn new(config: EndpointConfig) -> Result<Self, VlmError> {
        Ok(Self {
            endpoint: JsonEndpoint::new(config).map_err(VlmError::Unavailable)?,
        })
    }
}

impl VlmClient for HttpVlmClient {
    fn ask(&self, image: &ImageRef, question: &str) -> Result<Answer, VlmError> {
        let bytes = std::fs::read(image.uri())
            .map_err(|e| VlmError::Unavailable(format!("cannot read image {}: {e}", image.uri())))?;
        let image_b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
        let resp: AskResponse = self
            .endpoint
            .post(&AskRequest {
                image_b64: &image_b64,
                question,
            })
            .map_err(VlmError::Unavailable)?;
        Ok(resp.answer)
    }
}
