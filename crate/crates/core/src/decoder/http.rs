//! Remote scoring backend.
//!
//! `POST <endpoint>/score` with body
//! `{"prompt": string, "image_b64": string|null, "prefix_ids": [int, ...]}`;
//! the server answers status 200 with `{"scores": [float; N]}`. Any other
//! status is a backend failure. Transport errors are retried once.

use std::sync::Mutex;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{DecodeError, ImageRef, PromptContext, TokenBackend};
use crate::fsm::TokenId;
use crate::scalar::Real;

pub const TIMEOUT_ENV: &str = "AMBRES_HTTP_TIMEOUT_MS";
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Serialize)]
struct ScoreRequest<'a> {
    prompt: &'a str,
    image_b64: Option<String>,
    prefix_ids: Vec<u32>,
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

pub struct HttpBackend {
    url: String,
    vocab_len: usize,
    agent: ureq::Agent,
    /// Last encoded image, keyed by its reference.
    image_cache: Mutex<Option<(ImageRef, String)>>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("url", &self.url)
            .field("vocab_len", &self.vocab_len)
            .finish()
    }
}

impl HttpBackend {
    /// Timeout is read from `AMBRES_HTTP_TIMEOUT_MS` (default 30 s).
    pub fn new(endpoint: &str, vocab_len: usize) -> Self {
        let timeout = std::env::var(TIMEOUT_ENV)
            .ok()
            .and_then(|v| v.parse::<u64>().ok())
            .unwrap_or(DEFAULT_TIMEOUT_MS);
        Self::with_timeout(endpoint, vocab_len, Duration::from_millis(timeout))
    }

    pub fn with_timeout(endpoint: &str, vocab_len: usize, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            url: format!("{}/score", endpoint.trim_end_matches('/')),
            vocab_len,
            agent,
            image_cache: Mutex::new(None),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn image_b64(&self, image: &Option<ImageRef>) -> Result<Option<String>, DecodeError> {
        let Some(image) = image else { return Ok(None) };
        let mut cache = self.image_cache.lock().expect("image cache poisoned");
        if let Some((key, encoded)) = cache.as_ref() {
            if key == image {
                return Ok(Some(encoded.clone()));
            }
        }
        let bytes = match image {
            ImageRef::Inline(bytes) => bytes.clone(),
            ImageRef::Path(path) => std::fs::read(path).map_err(|e| {
                DecodeError::BackendFailure(format!("reading {}: {e}", path.display()))
            })?,
        };
        let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
        *cache = Some((image.clone(), encoded.clone()));
        Ok(Some(encoded))
    }

    fn post(&self, body: &ScoreRequest<'_>) -> Result<(u16, String), ureq::Error> {
        let mut response = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json")
            .send_json(body)?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string()?;
        Ok((status, text))
    }
}

impl<F: Real> TokenBackend<F> for HttpBackend {
    fn score(&self, prefix: &[TokenId], ctx: &PromptContext) -> Result<Vec<F>, DecodeError> {
        let body = ScoreRequest {
            prompt: ctx.prompt_text(),
            image_b64: self.image_b64(&ctx.image_ref)?,
            prefix_ids: prefix.iter().map(|t| t.0).collect(),
        };
        let (status, text) = match self.post(&body) {
            Ok(ok) => ok,
            Err(first) => self.post(&body).map_err(|second| {
                DecodeError::BackendFailure(format!("{first}; retry: {second}"))
            })?,
        };
        if status != 200 {
            return Err(DecodeError::BackendFailure(format!(
                "server answered status {status}"
            )));
        }
        let parsed: ScoreResponse = serde_json::from_str(&text)
            .map_err(|e| DecodeError::ProtocolError(format!("malformed response: {e}")))?;
        if parsed.scores.len() != self.vocab_len {
            return Err(DecodeError::ProtocolError(format!(
                "expected {} scores, got {}",
                self.vocab_len,
                parsed.scores.len()
            )));
        }
        parsed
            .scores
            .into_iter()
            .map(|s| F::from_f64(s).filter(|v| v.is_finite()))
            .collect::<Option<Vec<F>>>()
            .ok_or_else(|| DecodeError::ProtocolError("non-finite score".into()))
    }
}
