//! Caption and embedding services behind a plain JSON-over-HTTP contract.
//!
//! Wire format:
//!
//! ```text
//! POST {base}/caption  {"image_b64": str, "prompt": str}  ->  {"caption": str}
//! POST {base}/embed    {"text": str}                      ->  {"vector": [f64; d]}
//! non-2xx              {"error": str}
//! ```
//!
//! The mock backend answers both calls offline: captions come from a
//! template filler, embeddings from the seeded [`TextEncoder`].

mod mock;

use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::hex;
use crate::textenc::{Embedder, EmbeddingVector, TextEncoder};

pub const CAPTION_STAGE: &str = "caption";
pub const EMBED_STAGE: &str = "embed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub base_url: String,
    pub timeout_ms: u64,
    /// Maximum number of attempts per call (at least one is always made).
    pub retries: u32,
    pub backend: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bearer_token: Option<String>,
}

impl ModelEndpoint {
    pub fn mock(seed: u64) -> Self {
        Self {
            base_url: String::new(),
            timeout_ms: 1_000,
            retries: 1,
            backend: BackendKind::Mock,
            seed: Some(seed),
            bearer_token: None,
        }
    }

    pub fn remote(base_url: impl Into<String>, timeout_ms: u64, retries: u32) -> Self {
        Self {
            base_url: base_url.into(),
            timeout_ms,
            retries,
            backend: BackendKind::Remote,
            seed: None,
            bearer_token: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms == 0 {
            return Err(Error::domain("endpoint timeout must be positive"));
        }
        if self.backend == BackendKind::Mock && self.seed.is_none() {
            return Err(Error::domain("mock endpoint requires a seed"));
        }
        if self.backend == BackendKind::Remote && self.base_url.is_empty() {
            return Err(Error::domain("remote endpoint requires a base URL"));
        }
        Ok(())
    }

    fn attempts(&self) -> u32 {
        self.retries.max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image_digest: String,
    pub prompt: String,
    pub caption: String,
    pub backend: BackendKind,
    pub latency_ms: u64,
}

/// SHA-256 of raw image bytes, hex-encoded.
pub fn image_digest(image: &[u8]) -> String {
    hex(&Sha256::digest(image))
}

#[derive(Serialize)]
struct CaptionRequest<'a> {
    image_b64: String,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CaptionResponse {
    caption: String,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

#[derive(Deserialize)]
struct ErrorResponse {
    error: String,
}

/// Captions `image` (raw file bytes) under `prompt`.
pub fn caption(image: &[u8], prompt: &str, endpoint: &ModelEndpoint) -> Result<CaptionRecord> {
    endpoint.validate()?;
    if image.is_empty() {
        return Err(Error::domain("empty image"));
    }
    let digest = image_digest(image);
    let started = Instant::now();
    let caption = match endpoint.backend {
        BackendKind::Mock => mock::mock_caption(image, &digest, prompt, endpoint.seed.unwrap_or(0)),
        BackendKind::Remote => {
            let body = serde_json::to_string(&CaptionRequest {
                image_b64: base64::engine::general_purpose::STANDARD.encode(image),
                prompt,
            })?;
            let text = post_json(endpoint, "caption", CAPTION_STAGE, body)?;
            let resp: CaptionResponse = serde_json::from_str(&text).map_err(|e| Error::Protocol {
                stage: CAPTION_STAGE.into(),
                message: format!("bad caption response: {e}"),
            })?;
            resp.caption
        }
    };
    if caption.trim().is_empty() {
        return Err(Error::Backend {
            stage: CAPTION_STAGE.into(),
            message: "empty caption".into(),
        });
    }
    let latency_ms = match endpoint.backend {
        BackendKind::Mock => 0,
        BackendKind::Remote => started.elapsed().as_millis() as u64,
    };
    Ok(CaptionRecord {
        image_digest: digest,
        prompt: prompt.to_owned(),
        caption,
        backend: endpoint.backend,
        latency_ms,
    })
}

/// Embeds `text` through `endpoint`. Builds a fresh encoder for mock
/// endpoints; hold an [`EmbedClient`] to reuse one.
pub fn embed(text: &str, endpoint: &ModelEndpoint, dim: usize) -> Result<EmbeddingVector> {
    EmbedClient::new(endpoint.clone(), dim)?.embed(text)
}

/// Embedding service client implementing [`Embedder`]. Whatever the
/// backend returns is L2-normalized before it reaches the caller.
#[derive(Debug, Clone)]
pub struct EmbedClient {
    endpoint: ModelEndpoint,
    dim: usize,
    encoder: Option<TextEncoder>,
}

impl EmbedClient {
    pub fn new(endpoint: ModelEndpoint, dim: usize) -> Result<Self> {
        endpoint.validate()?;
        let encoder = match endpoint.backend {
            BackendKind::Mock => {
                let encoder = TextEncoder::seeded(endpoint.seed.unwrap_or(0));
                if encoder.dim() != dim {
                    return Err(Error::domain(format!(
                        "mock encoder dimension {} differs from configured {dim}",
                        encoder.dim()
                    )));
                }
                Some(encoder)
            }
            BackendKind::Remote => None,
        };
        Ok(Self { endpoint, dim, encoder })
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }
}

impl Embedder for EmbedClient {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(Error::domain("empty text"));
        }
        if let Some(encoder) = &self.encoder {
            return encoder.embed(text);
        }
        let body = serde_json::to_string(&EmbedRequest { text })?;
        let raw = post_json(&self.endpoint, "embed", EMBED_STAGE, body)?;
        let resp: EmbedResponse = serde_json::from_str(&raw).map_err(|e| Error::Protocol {
            stage: EMBED_STAGE.into(),
            message: format!("bad embed response: {e}"),
        })?;
        if resp.vector.len() != self.dim {
            return Err(Error::Protocol {
                stage: EMBED_STAGE.into(),
                message: format!("vector has length {}, expected {}", resp.vector.len(), self.dim),
            });
        }
        EmbeddingVector::normalized(resp.vector).map_err(|e| Error::Protocol {
            stage: EMBED_STAGE.into(),
            message: e.to_string(),
        })
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Both model services used by the pipeline.
#[derive(Debug, Clone)]
pub struct Gateway {
    captioner: ModelEndpoint,
    embedder: EmbedClient,
}

impl Gateway {
    pub fn new(captioner: ModelEndpoint, embedder: EmbedClient) -> Result<Self> {
        captioner.validate()?;
        Ok(Self { captioner, embedder })
    }

    /// Mock captioner and mock embedder sharing one seed.
    pub fn mock(seed: u64) -> Self {
        let embedder = EmbedClient::new(ModelEndpoint::mock(seed), crate::textenc::EncoderConfig::default().d_model)
            .expect("mock endpoint is valid");
        Self {
            captioner: ModelEndpoint::mock(seed),
            embedder,
        }
    }

    pub fn caption(&self, image: &[u8], prompt: &str) -> Result<CaptionRecord> {
        caption(image, prompt, &self.captioner)
    }

    pub fn embedder(&self) -> &EmbedClient {
        &self.embedder
    }

    pub fn captioner(&self) -> &ModelEndpoint {
        &self.captioner
    }
}

impl Embedder for Gateway {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        self.embedder.embed(text)
    }

    fn dim(&self) -> usize {
        self.embedder.dim
    }
}

fn post_json(endpoint: &ModelEndpoint, route: &str, stage: &str, body: String) -> Result<String> {
    let url = format!("{}/{route}", endpoint.base_url.trim_end_matches('/'));
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_millis(endpoint.timeout_ms))
        .build()
        .map_err(|e| Error::Transport {
            stage: stage.into(),
            message: e.to_string(),
        })?;
    let mut last_err = None;
    for _ in 0..endpoint.attempts() {
        let mut req = client
            .post(&url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.clone());
        if let Some(token) = &endpoint.bearer_token {
            req = req.bearer_auth(token);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => {
                last_err = Some(Error::Transport {
                    stage: stage.into(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => {
                last_err = Some(Error::Transport {
                    stage: stage.into(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        if status.is_success() {
            return Ok(text);
        }
        let message = serde_json::from_str::<ErrorResponse>(&text)
            .map(|e| e.error)
            .unwrap_or(text);
        let err = Error::Backend {
            stage: stage.into(),
            message: format!("HTTP {}: {message}", status.as_u16()),
        };
        if status.is_server_error() {
            last_err = Some(err);
            continue;
        }
        return Err(err);
    }
    Err(last_err.unwrap_or_else(|| Error::Transport {
        stage: stage.into(),
        message: "no attempt made".into(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_validation() {
        assert!(ModelEndpoint::mock(1).validate().is_ok());
        let mut ep = ModelEndpoint::mock(1);
        ep.seed = None;
        assert!(ep.validate().is_err());
        assert!(ModelEndpoint::remote("http://x", 0, 1).validate().is_err());
        assert!(ModelEndpoint::remote("", 10, 1).validate().is_err());
    }

    #[test]
    fn mock_caption_is_deterministic() {
        let ep = ModelEndpoint::mock(5);
        let img = b"P2 2 1 255 10 20";
        let a = caption(img, "list the vehicles", &ep).unwrap();
        let b = caption(img, "list the vehicles", &ep).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.latency_ms, 0);
        assert_eq!(a.image_digest, image_digest(img));
        assert!(caption(b"", "x", &ep).is_err());
    }

    #[test]
    fn mock_embed_delegates_to_encoder() {
        let client = EmbedClient::new(ModelEndpoint::mock(42), 64).unwrap();
        let direct = TextEncoder::seeded(42).embed("red car at junction").unwrap();
        assert_eq!(client.embed("red car at junction").unwrap(), direct);
        assert!(EmbedClient::new(ModelEndpoint::mock(42), 32).is_err());
    }
}
