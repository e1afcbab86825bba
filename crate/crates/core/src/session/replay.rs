//! Deterministic reconstruction of a session from its log.
//!
//! Records are folded through [`SessionState::apply`]. With mock scripts,
//! every provider request is rebuilt from the reconstructed state, its
//! fingerprint checked against the log, and the mock's answer compared
//! with the logged outcome.

use std::collections::BTreeMap;

use thiserror::Error;

use super::error::SessionError;
use super::log::{EventLog, LogError};
use super::record::{ChatOutcome, InsightOutcome, SessionEvent};
use super::snapshot::SessionSnapshot;
use super::state::SessionState;
use crate::canvas::RenderCache;
use crate::prompt::INSIGHT_RASTER_SCALE;
use crate::providers::mock::{MockProvider, MockScripts};
use crate::providers::{
    validate_image_output, ImageGenerator, ProviderError, ProviderRole, RequestFingerprint,
    TextGenerator,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplayError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("replay diverged at seq {seq}: {detail}")]
    Divergence { seq: u64, detail: String },
}

impl ReplayError {
    fn corrupt(seq: u64, reason: impl Into<String>) -> Self {
        ReplayError::Log(LogError::CorruptLog {
            seq,
            reason: reason.into(),
        })
    }

    fn diverged(seq: u64, detail: impl Into<String>) -> Self {
        ReplayError::Divergence {
            seq,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestLogEntry {
    pub seq: u64,
    pub role: ProviderRole,
    pub fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub state: SessionState,
    /// Provider requests in log order.
    pub requests: Vec<RequestLogEntry>,
}

impl ReplayReport {
    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot::of(&self.state)
    }
}

enum Expected {
    Text(Result<String, ProviderError>),
    Image(Result<(String, String), ProviderError>),
}

pub fn replay(log: &EventLog, scripts: Option<&MockScripts>) -> Result<ReplayReport, ReplayError> {
    replay_until(log, scripts, None)
}

/// Replays records up to and including `until_seq` (all when `None`).
pub fn replay_until(
    log: &EventLog,
    scripts: Option<&MockScripts>,
    until_seq: Option<u64>,
) -> Result<ReplayReport, ReplayError> {
    let records = log.records();
    let first = records
        .first()
        .ok_or_else(|| ReplayError::corrupt(0, "empty log"))?;
    let mut state =
        SessionState::from_created(first).map_err(|e| ReplayError::corrupt(0, e.to_string()))?;
    let mock = scripts.map(|s| MockProvider::new(s.clone()));
    let mut requests = Vec::new();
    let mut expected_insight: BTreeMap<u64, Expected> = BTreeMap::new();
    let mut expected_chat: BTreeMap<u64, Expected> = BTreeMap::new();
    let mut render_cache = RenderCache::default();
    let mut pending_failure: Option<(u64, &'static str)> = None;

    for rec in &records[1..] {
        if until_seq.is_some_and(|u| rec.seq > u) {
            break;
        }
        let seq = rec.seq;
        if let Some((cause, code)) = pending_failure.take() {
            match &rec.event {
                SessionEvent::Error {
                    code: c,
                    cause_seq: Some(s),
                    ..
                } if c == code && *s == cause => {}
                _ => {
                    return Err(ReplayError::diverged(
                        cause,
                        format!("record rejected with {code} but no matching error record follows"),
                    ))
                }
            }
        }

        match &rec.event {
            SessionEvent::InsightRequest {
                request_id,
                fingerprint,
                attachment,
                ..
            } => {
                requests.push(RequestLogEntry {
                    seq,
                    role: ProviderRole::InsightText,
                    fingerprint: fingerprint.clone(),
                });
                if let Some(mock) = &mock {
                    let raster = state
                        .canvas
                        .rasterize_cached(INSIGHT_RASTER_SCALE, &state.artifacts, &mut render_cache)
                        .map_err(|e| ReplayError::diverged(seq, e.to_string()))?;
                    if raster.content_hash() != *attachment {
                        return Err(ReplayError::diverged(seq, "canvas raster differs"));
                    }
                    let (_, bundle) = state.insight_bundle(raster);
                    let fp = RequestFingerprint::of(ProviderRole::InsightText, &bundle);
                    if fp.0 != *fingerprint {
                        return Err(ReplayError::diverged(seq, "insight fingerprint differs"));
                    }
                    expected_insight.insert(
                        *request_id,
                        Expected::Text(mock.complete_text(ProviderRole::InsightText, &bundle)),
                    );
                }
            }
            SessionEvent::ChatRequest {
                request_id,
                mode,
                fingerprint,
                ..
            } => {
                let role = match mode {
                    crate::chat::ChatMode::Text => ProviderRole::ChatText,
                    crate::chat::ChatMode::Image => ProviderRole::ChatImage,
                };
                requests.push(RequestLogEntry {
                    seq,
                    role,
                    fingerprint: fingerprint.clone(),
                });
                if let Some(mock) = &mock {
                    let next = state
                        .next_chat()
                        .ok_or_else(|| ReplayError::corrupt(seq, "chat request with nothing queued"))?;
                    let fp = RequestFingerprint::of(role, &next.bundle);
                    if fp.0 != *fingerprint {
                        return Err(ReplayError::diverged(seq, "chat fingerprint differs"));
                    }
                    let expected = match role {
                        ProviderRole::ChatImage => Expected::Image(
                            mock.generate_image(&next.bundle)
                                .and_then(validate_image_output)
                                .map(|o| (o.description, o.image.content_hash())),
                        ),
                        _ => Expected::Text(mock.complete_text(role, &next.bundle)),
                    };
                    expected_chat.insert(*request_id, expected);
                }
            }
            _ => {}
        }

        if let Err(e) = state.apply(rec, log) {
            let corrupt = !rec.event.is_client_input()
                || matches!(e, SessionError::MissingBlob(_) | SessionError::Inconsistent(_));
            if corrupt {
                return Err(ReplayError::corrupt(
                    seq,
                    format!("{} rejected: {e}", rec.event.kind()),
                ));
            }
            pending_failure = Some((seq, e.code()));
        }

        match &rec.event {
            SessionEvent::InsightResponse {
                request_id,
                outcome,
            } if mock.is_some() => {
                let Some(Expected::Text(exp)) = expected_insight.remove(request_id) else {
                    continue;
                };
                let matches = match (outcome, &exp) {
                    (InsightOutcome::Superseded, _) => true,
                    (InsightOutcome::Delivered { text }, Ok(t)) => text == t,
                    (InsightOutcome::Failed { error }, Err(e)) => error == e,
                    _ => false,
                };
                if !matches {
                    return Err(ReplayError::diverged(seq, "insight outcome differs from scripts"));
                }
            }
            SessionEvent::ChatResponse {
                request_id,
                outcome,
            } if mock.is_some() => {
                let Some(exp) = expected_chat.remove(request_id) else {
                    continue;
                };
                let matches = match (outcome, &exp) {
                    (ChatOutcome::Delivered { text, image: None }, Expected::Text(Ok(t))) => text == t,
                    (
                        ChatOutcome::Delivered {
                            text,
                            image: Some(h),
                        },
                        Expected::Image(Ok((d, hash))),
                    ) => text == d && h == hash,
                    (ChatOutcome::Failed { error }, Expected::Text(Err(e)))
                    | (ChatOutcome::Failed { error }, Expected::Image(Err(e))) => error == e,
                    _ => false,
                };
                if !matches {
                    return Err(ReplayError::diverged(seq, "chat outcome differs from scripts"));
                }
            }
            _ => {}
        }
    }
    Ok(ReplayReport { state, requests })
}
