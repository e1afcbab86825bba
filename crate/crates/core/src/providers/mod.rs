//! Client contracts for the external AI roles: streaming transcription,
//! text generation (insights and chat) and image generation.
//!
//! The rest of the crate only sees the traits in this module. Concrete
//! backends are the scripted [`mock`] provider and the JSON-over-HTTP
//! adapters in [`http`].

pub mod config;
pub mod fingerprint;
pub mod http;
pub mod mock;
pub mod retry;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::PromptBundle;
use crate::raster::RasterImage;
use crate::speech::{AudioChunk, TranscriptEvent};

pub use config::{ProviderConfig, Secret, SecretRef};
pub use fingerprint::RequestFingerprint;
pub use retry::RetryPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProviderRole {
    Transcribe,
    InsightText,
    ChatText,
    ChatImage,
}

impl ProviderRole {
    pub const ALL: [ProviderRole; 4] = [
        ProviderRole::Transcribe,
        ProviderRole::InsightText,
        ProviderRole::ChatText,
        ProviderRole::ChatImage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProviderRole::Transcribe => "TRANSCRIBE",
            ProviderRole::InsightText => "INSIGHT_TEXT",
            ProviderRole::ChatText => "CHAT_TEXT",
            ProviderRole::ChatImage => "CHAT_IMAGE",
        }
    }

    pub fn is_text(self) -> bool {
        matches!(self, ProviderRole::InsightText | ProviderRole::ChatText)
    }
}

impl std::fmt::Display for ProviderRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", content = "detail", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProviderError {
    #[error("provider timed out after {0} ms")]
    Timeout(u64),
    #[error("provider rate limited the request")]
    RateLimited,
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("transcription stream broken")]
    StreamBroken,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("role {0} cannot serve this request")]
    WrongRole(ProviderRole),
}

impl ProviderError {
    pub fn code(&self) -> &'static str {
        match self {
            ProviderError::Timeout(_) => "TIMEOUT",
            ProviderError::RateLimited => "RATE_LIMITED",
            ProviderError::MalformedResponse(_) => "MALFORMED_RESPONSE",
            ProviderError::StreamBroken => "STREAM_BROKEN",
            ProviderError::Transport(_) => "TRANSPORT",
            ProviderError::WrongRole(_) => "WRONG_ROLE",
        }
    }
}

pub trait TextGenerator: Send + Sync {
    fn complete_text(&self, role: ProviderRole, bundle: &PromptBundle)
        -> Result<String, ProviderError>;
}

/// Image provider output before validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImageOutput {
    pub png: Vec<u8>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageOutput {
    pub image: RasterImage,
    pub description: String,
}

pub trait ImageGenerator: Send + Sync {
    fn generate_image(&self, bundle: &PromptBundle) -> Result<RawImageOutput, ProviderError>;
}

/// Decodes the image and requires a description.
pub fn validate_image_output(raw: RawImageOutput) -> Result<ImageOutput, ProviderError> {
    if raw.description.trim().is_empty() {
        return Err(ProviderError::MalformedResponse(
            "image response without description".into(),
        ));
    }
    let image = RasterImage::from_png(raw.png)
        .map_err(|e| ProviderError::MalformedResponse(format!("undecodable image: {e}")))?;
    Ok(ImageOutput {
        image,
        description: raw.description,
    })
}

pub fn validate_text_output(text: String) -> Result<String, ProviderError> {
    if text.trim().is_empty() {
        Err(ProviderError::MalformedResponse("empty text response".into()))
    } else {
        Ok(text)
    }
}

/// Result of pushing audio into a stream. Events delivered before a
/// failure are kept.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StreamOutput {
    pub events: Vec<TranscriptEvent>,
    pub error: Option<ProviderError>,
}

pub trait TranscriptionStream: Send {
    fn push(&mut self, chunk: &AudioChunk) -> StreamOutput;
    /// Flushes pending results and closes the stream.
    fn finish(&mut self) -> StreamOutput;
}

pub trait Transcriber: Send + Sync {
    fn open_stream(&self, recording: u32) -> Box<dyn TranscriptionStream>;
}

/// Runs a whole chunk sequence through one stream. On failure returns the
/// events delivered so far together with the error.
pub fn transcribe_stream(
    transcriber: &dyn Transcriber,
    recording: u32,
    chunks: &[AudioChunk],
) -> Result<Vec<TranscriptEvent>, (Vec<TranscriptEvent>, ProviderError)> {
    let mut stream = transcriber.open_stream(recording);
    let mut events = Vec::new();
    for chunk in chunks {
        let out = stream.push(chunk);
        events.extend(out.events);
        if let Some(e) = out.error {
            return Err((events, e));
        }
    }
    let out = stream.finish();
    events.extend(out.events);
    match out.error {
        Some(e) => Err((events, e)),
        None => Ok(events),
    }
}

/// One backend per role.
#[derive(Clone)]
pub struct Providers {
    pub transcriber: Arc<dyn Transcriber>,
    pub insight: Arc<dyn TextGenerator>,
    pub chat_text: Arc<dyn TextGenerator>,
    pub chat_image: Arc<dyn ImageGenerator>,
}

impl Providers {
    /// Uses the same mock for every role.
    pub fn from_mock(mock: Arc<mock::MockProvider>) -> Self {
        Self {
            transcriber: mock.clone(),
            insight: mock.clone(),
            chat_text: mock.clone(),
            chat_image: mock,
        }
    }
}
