//! JSON-over-HTTP adapters for live providers.
//!
//! Text roles POST `{model, role, system, user, history, images}` and expect
//! `{text}`. The image role expects `{image_png_base64, description}`.
//! Transcription buffers a recording's PCM and posts it when the stream is
//! finished, expecting `{segments: [{text}]}`. Images and audio travel as
//! standard base64. HTTP 429 maps to `RateLimited`, which is retried with
//! backoff; credentials go in a bearer header and never into errors.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{ProviderConfig, ProviderConfigError, Secret};
use super::{
    ImageGenerator, ProviderError, ProviderRole, RawImageOutput, RetryPolicy, StreamOutput,
    TextGenerator, Transcriber, TranscriptionStream,
};
use crate::chat::ChatTurn;
use crate::prompt::PromptBundle;
use crate::speech::{AudioChunk, SegmentStatus, TranscriptEvent, SAMPLE_RATE_HZ};

#[derive(Clone)]
pub struct HttpClient {
    config: ProviderConfig,
    secret: Option<Secret>,
    client: reqwest::blocking::Client,
    retry: RetryPolicy,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient")
            .field("role", &self.config.role)
            .field("endpoint", &self.config.endpoint)
            .field("model", &self.config.model)
            .finish_non_exhaustive()
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    model: &'a str,
    role: ProviderRole,
    system: &'a str,
    user: &'a str,
    history: &'a [ChatTurn],
    images: Vec<String>,
}

#[derive(Deserialize)]
struct TextReply {
    text: String,
}

#[derive(Deserialize)]
struct ImageReply {
    image_png_base64: String,
    description: String,
}

#[derive(Serialize)]
struct TranscribeRequest<'a> {
    model: &'a str,
    sample_rate_hz: u32,
    pcm_base64: String,
}

#[derive(Deserialize)]
struct TranscribeReply {
    segments: Vec<TranscribedText>,
}

#[derive(Deserialize)]
struct TranscribedText {
    text: String,
}

impl HttpClient {
    /// Validates the config and resolves its credential reference.
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderConfigError> {
        config.validate(true)?;
        let secret = config.credentials.as_ref().map(|r| r.resolve()).transpose()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .expect("http client builds");
        let retry = RetryPolicy::with_max_retries(config.max_retries);
        Ok(Self {
            config,
            secret,
            client,
            retry,
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn role(&self) -> ProviderRole {
        self.config.role
    }

    fn post_once(&self, body: &Value) -> Result<Value, ProviderError> {
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Some(s) = &self.secret {
            req = req.bearer_auth(s.expose());
        }
        let resp = req.send().map_err(|e| self.map_transport(e))?;
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(ProviderError::RateLimited);
        }
        if !status.is_success() {
            return Err(ProviderError::Transport(format!("HTTP {status}")));
        }
        resp.json::<Value>()
            .map_err(|e| ProviderError::MalformedResponse(format!("invalid JSON body: {}", e.without_url())))
    }

    fn map_transport(&self, e: reqwest::Error) -> ProviderError {
        if e.is_timeout() {
            ProviderError::Timeout(self.config.timeout_ms)
        } else {
            // Drop the URL so query-string material never reaches logs.
            ProviderError::Transport(e.without_url().to_string())
        }
    }

    fn post<T: serde::de::DeserializeOwned>(&self, body: &impl Serialize) -> Result<T, ProviderError> {
        let body = serde_json::to_value(body).expect("request serializes");
        let value = self.retry.run(std::thread::sleep, |_| self.post_once(&body))?;
        serde_json::from_value(value).map_err(|e| ProviderError::MalformedResponse(e.to_string()))
    }

    fn generate_body<'a>(&'a self, role: ProviderRole, bundle: &'a PromptBundle) -> GenerateRequest<'a> {
        GenerateRequest {
            model: &self.config.model,
            role,
            system: &bundle.system_text,
            user: &bundle.user_text,
            history: &bundle.history,
            images: bundle.attachments.iter().map(|a| B64.encode(a.png())).collect(),
        }
    }
}

impl TextGenerator for HttpClient {
    fn complete_text(
        &self,
        role: ProviderRole,
        bundle: &PromptBundle,
    ) -> Result<String, ProviderError> {
        if !role.is_text() {
            return Err(ProviderError::WrongRole(role));
        }
        let reply: TextReply = self.post(&self.generate_body(role, bundle))?;
        super::validate_text_output(reply.text)
    }
}

impl ImageGenerator for HttpClient {
    fn generate_image(&self, bundle: &PromptBundle) -> Result<RawImageOutput, ProviderError> {
        let reply: ImageReply = self.post(&self.generate_body(ProviderRole::ChatImage, bundle))?;
        let png = B64
            .decode(reply.image_png_base64)
            .map_err(|e| ProviderError::MalformedResponse(format!("image base64: {e}")))?;
        Ok(RawImageOutput {
            png,
            description: reply.description,
        })
    }
}

struct BatchStream {
    client: HttpClient,
    recording: u32,
    pcm: Vec<u8>,
}

impl TranscriptionStream for BatchStream {
    fn push(&mut self, chunk: &AudioChunk) -> StreamOutput {
        self.pcm.extend(chunk.pcm_bytes());
        StreamOutput::default()
    }

    fn finish(&mut self) -> StreamOutput {
        if self.pcm.is_empty() {
            return StreamOutput::default();
        }
        let body = TranscribeRequest {
            model: &self.client.config.model,
            sample_rate_hz: SAMPLE_RATE_HZ,
            pcm_base64: B64.encode(std::mem::take(&mut self.pcm)),
        };
        match self.client.post::<TranscribeReply>(&body) {
            Ok(reply) => StreamOutput {
                events: reply
                    .segments
                    .into_iter()
                    .enumerate()
                    .map(|(i, s)| {
                        TranscriptEvent::new(self.recording, i as u32, s.text, SegmentStatus::Final)
                    })
                    .collect(),
                error: None,
            },
            Err(e) => StreamOutput {
                events: vec![],
                error: Some(e),
            },
        }
    }
}

impl Transcriber for HttpClient {
    fn open_stream(&self, recording: u32) -> Box<dyn TranscriptionStream> {
        Box::new(BatchStream {
            client: self.clone(),
            recording,
            pcm: Vec::new(),
        })
    }
}
