//! Deterministic scripted provider for offline runs and tests.
//!
//! Text and image responses are looked up by request fingerprint.
//! Transcription events are keyed on how many chunks a stream has seen.
//! In non-strict mode unscripted requests get a deterministic fallback;
//! in strict mode they fail with `MalformedResponse`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    ImageGenerator, ProviderError, ProviderRole, RawImageOutput, RequestFingerprint,
    RetryPolicy, StreamOutput, TextGenerator, Transcriber, TranscriptionStream,
};
use crate::prompt::PromptBundle;
use crate::speech::{AudioChunk, SegmentStatus, TranscriptEvent};

/// 64x64 PNG returned for unscripted image requests.
pub const DEFAULT_IMAGE_PNG: &[u8] = include_bytes!("../../assets/mock_toaster_64.png");
pub const DEFAULT_IMAGE_DESCRIPTION: &str = "a friendly rounded toaster";

#[derive(Debug, Error)]
pub enum MockScriptError {
    #[error("reading mock script: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing mock script: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("mock image {0}: {1}")]
    Image(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFailure {
    Timeout,
    RateLimited,
    Malformed,
    Transport,
}

impl MockFailure {
    fn to_error(self, timeout_ms: u64) -> ProviderError {
        match self {
            MockFailure::Timeout => ProviderError::Timeout(timeout_ms),
            MockFailure::RateLimited => ProviderError::RateLimited,
            MockFailure::Malformed => {
                ProviderError::MalformedResponse("scripted malformed response".into())
            }
            MockFailure::Transport => ProviderError::Transport("scripted transport failure".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TextScript {
    Reply(String),
    Scripted {
        #[serde(default)]
        text: Option<String>,
        #[serde(default)]
        error: Option<MockFailure>,
        /// Fail this many calls, then reply with `text`. Absent means always fail.
        #[serde(default)]
        times: Option<u32>,
        #[serde(default)]
        latency_ms: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ImageScript {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub png_base64: Option<String>,
    /// Path relative to the script file; inlined into `png_base64` on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub png_file: Option<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<MockFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptScript {
    /// Emitted once the stream has received this many chunks.
    pub after_chunks: u32,
    #[serde(default)]
    pub text: String,
    #[serde(default = "final_status")]
    pub status: SegmentStatus,
    /// Break the stream at this point instead of emitting text.
    #[serde(default)]
    pub fail: bool,
}

fn final_status() -> SegmentStatus {
    SegmentStatus::Final
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MockScripts {
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub text: BTreeMap<String, TextScript>,
    #[serde(default)]
    pub images: BTreeMap<String, ImageScript>,
    /// Fallback replies per text role, used before the generic fallback.
    #[serde(default)]
    pub text_defaults: BTreeMap<ProviderRole, String>,
    #[serde(default)]
    pub image_default: Option<ImageScript>,
    /// Applied to every recording segment unless overridden below.
    #[serde(default)]
    pub transcription: Vec<TranscriptScript>,
    #[serde(default)]
    pub transcription_by_segment: BTreeMap<u32, Vec<TranscriptScript>>,
}

impl MockScripts {
    pub fn from_json(s: &str) -> Result<Self, MockScriptError> {
        let mut scripts: MockScripts = serde_json::from_str(s)?;
        scripts.inline_files(None)?;
        Ok(scripts)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MockScriptError> {
        let path = path.as_ref();
        let mut scripts: MockScripts = serde_json::from_slice(&std::fs::read(path)?)?;
        scripts.inline_files(path.parent())?;
        Ok(scripts)
    }

    fn inline_files(&mut self, base: Option<&Path>) -> Result<(), MockScriptError> {
        let entries = self.images.values_mut().chain(self.image_default.as_mut());
        for img in entries {
            if let Some(file) = img.png_file.take() {
                let p = base.map(|b| b.join(&file)).unwrap_or_else(|| file.clone().into());
                let bytes =
                    std::fs::read(&p).map_err(|e| MockScriptError::Image(file.clone(), e.to_string()))?;
                img.png_base64 = Some(base64::engine::general_purpose::STANDARD.encode(bytes));
            }
        }
        Ok(())
    }

    fn transcript_for(&self, recording: u32) -> &[TranscriptScript] {
        self.transcription_by_segment
            .get(&recording)
            .unwrap_or(&self.transcription)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapturedRequest {
    pub role: ProviderRole,
    pub fingerprint: RequestFingerprint,
    pub bundle: PromptBundle,
}

pub struct MockProvider {
    scripts: MockScripts,
    timeouts: BTreeMap<ProviderRole, u64>,
    retry: RetryPolicy,
    captured: Mutex<Vec<CapturedRequest>>,
    failures_served: Mutex<HashMap<String, u32>>,
    backoff: Mutex<Vec<Duration>>,
}

impl MockProvider {
    pub fn new(scripts: MockScripts) -> Self {
        Self {
            scripts,
            timeouts: ProviderRole::ALL.iter().map(|r| (*r, 30_000)).collect(),
            retry: RetryPolicy {
                max_retries: 3,
                base_delay_ms: 0,
                max_delay_ms: 0,
            },
            captured: Mutex::new(Vec::new()),
            failures_served: Mutex::new(HashMap::new()),
            backoff: Mutex::new(Vec::new()),
        }
    }

    pub fn with_timeout(mut self, role: ProviderRole, timeout_ms: u64) -> Self {
        self.timeouts.insert(role, timeout_ms);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn scripts(&self) -> &MockScripts {
        &self.scripts
    }

    pub fn captured(&self) -> Vec<CapturedRequest> {
        self.captured.lock().unwrap().clone()
    }

    pub fn clear_captured(&self) {
        self.captured.lock().unwrap().clear();
    }

    /// Backoff delays requested so far (never actually slept).
    pub fn backoff_delays(&self) -> Vec<Duration> {
        self.backoff.lock().unwrap().clone()
    }

    fn capture(&self, role: ProviderRole, bundle: &PromptBundle) -> RequestFingerprint {
        let fingerprint = RequestFingerprint::of(role, bundle);
        self.captured.lock().unwrap().push(CapturedRequest {
            role,
            fingerprint: fingerprint.clone(),
            bundle: bundle.clone(),
        });
        fingerprint
    }

    /// Shared failure/latency handling for scripted entries.
    fn scripted_outcome(
        &self,
        key: &str,
        role: ProviderRole,
        error: Option<MockFailure>,
        times: Option<u32>,
        latency_ms: Option<u64>,
    ) -> Result<(), ProviderError> {
        let timeout = self.timeouts[&role];
        if latency_ms.is_some_and(|l| l > timeout) {
            return Err(ProviderError::Timeout(timeout));
        }
        let Some(err) = error else { return Ok(()) };
        let mut served = self.failures_served.lock().unwrap();
        let n = served.entry(key.to_string()).or_insert(0);
        match times {
            Some(t) if *n >= t => Ok(()),
            _ => {
                *n += 1;
                Err(err.to_error(timeout))
            }
        }
    }

    fn with_retries<T>(&self, mut op: impl FnMut() -> Result<T, ProviderError>) -> Result<T, ProviderError> {
        self.retry
            .run(|d| self.backoff.lock().unwrap().push(d), |_| op())
    }
}

impl TextGenerator for MockProvider {
    fn complete_text(
        &self,
        role: ProviderRole,
        bundle: &PromptBundle,
    ) -> Result<String, ProviderError> {
        if !role.is_text() {
            return Err(ProviderError::WrongRole(role));
        }
        let fp = self.capture(role, bundle);
        self.with_retries(|| match self.scripts.text.get(&fp.0) {
            Some(TextScript::Reply(t)) => Ok(t.clone()),
            Some(TextScript::Scripted {
                text,
                error,
                times,
                latency_ms,
            }) => {
                self.scripted_outcome(&fp.0, role, *error, *times, *latency_ms)?;
                text.clone().ok_or_else(|| {
                    ProviderError::MalformedResponse("scripted entry has no text".into())
                })
            }
            None if self.scripts.strict => Err(ProviderError::MalformedResponse(format!(
                "unscripted {role} request {fp}"
            ))),
            None => Ok(self
                .scripts
                .text_defaults
                .get(&role)
                .cloned()
                .unwrap_or_else(|| format!("mock {role} response {}", &fp.0[..12]))),
        })
        .and_then(super::validate_text_output)
    }
}

fn image_from_script(s: &ImageScript) -> Result<RawImageOutput, ProviderError> {
    let png = match &s.png_base64 {
        Some(b) => base64::engine::general_purpose::STANDARD
            .decode(b)
            .map_err(|e| ProviderError::MalformedResponse(e.to_string()))?,
        None => DEFAULT_IMAGE_PNG.to_vec(),
    };
    Ok(RawImageOutput {
        png,
        description: s.description.clone(),
    })
}

impl ImageGenerator for MockProvider {
    fn generate_image(&self, bundle: &PromptBundle) -> Result<RawImageOutput, ProviderError> {
        let role = ProviderRole::ChatImage;
        let fp = self.capture(role, bundle);
        self.with_retries(|| match self.scripts.images.get(&fp.0) {
            Some(s) => {
                self.scripted_outcome(&fp.0, role, s.error, s.times, s.latency_ms)?;
                image_from_script(s)
            }
            None if self.scripts.strict => Err(ProviderError::MalformedResponse(format!(
                "unscripted {role} request {fp}"
            ))),
            None => match &self.scripts.image_default {
                Some(s) => image_from_script(s),
                None => Ok(RawImageOutput {
                    png: DEFAULT_IMAGE_PNG.to_vec(),
                    description: DEFAULT_IMAGE_DESCRIPTION.to_string(),
                }),
            },
        })
    }
}

struct MockStream {
    recording: u32,
    script: Vec<TranscriptScript>,
    chunks: u32,
    utterance: u32,
    broken: bool,
}

impl TranscriptionStream for MockStream {
    fn push(&mut self, _chunk: &AudioChunk) -> StreamOutput {
        if self.broken {
            return StreamOutput {
                events: vec![],
                error: Some(ProviderError::StreamBroken),
            };
        }
        self.chunks += 1;
        let mut out = StreamOutput::default();
        for entry in self.script.iter().filter(|e| e.after_chunks == self.chunks) {
            if entry.fail {
                self.broken = true;
                out.error = Some(ProviderError::StreamBroken);
                break;
            }
            out.events.push(TranscriptEvent::new(
                self.recording,
                self.utterance,
                entry.text.clone(),
                entry.status,
            ));
            if entry.status == SegmentStatus::Final {
                self.utterance += 1;
            }
        }
        out
    }

    fn finish(&mut self) -> StreamOutput {
        StreamOutput::default()
    }
}

impl Transcriber for MockProvider {
    fn open_stream(&self, recording: u32) -> Box<dyn TranscriptionStream> {
        Box::new(MockStream {
            recording,
            script: self.scripts.transcript_for(recording).to_vec(),
            chunks: 0,
            utterance: 0,
            broken: false,
        })
    }
}
