use serde::{Deserialize, Serialize};

use super::SessionSettings;
use crate::canvas::{Point, RegionSelection};
use crate::chat::ChatMode;
use crate::prompt::{BasedOn, InsightPromptKind};
use crate::providers::ProviderError;
use crate::raster::Rgba;
use crate::speech::{SessionPhase, TranscriptEvent};

/// One line of the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub t_ms: u64,
    #[serde(flatten)]
    pub event: SessionEvent,
}

fn black() -> Rgba {
    Rgba::BLACK
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InsightOutcome {
    Delivered { text: String },
    Superseded,
    Failed { error: ProviderError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ChatOutcome {
    Delivered {
        text: String,
        /// Blob hash of the generated PNG (image mode only).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        image: Option<String>,
    },
    Failed { error: ProviderError },
}

/// Record kinds. Binary payloads (audio, rasters, documents) are stored as
/// blobs and referenced by their SHA-256 hex digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum SessionEvent {
    SessionCreated {
        session_id: String,
        settings: SessionSettings,
    },
    StrokeBegin {
        stroke_id: String,
        point: Point,
        width: f64,
        #[serde(default = "black")]
        color: Rgba,
    },
    StrokeAppend {
        stroke_id: String,
        points: Vec<Point>,
    },
    StrokeEnd {
        stroke_id: String,
    },
    Erase {
        ids: Vec<String>,
    },
    Undo,
    Redo,
    Reset,
    SelectRegion {
        region: RegionSelection,
    },
    MoveSelection {
        dx: f64,
        dy: f64,
    },
    SaveGallery {
        entry_id: String,
    },
    LoadGallery {
        entry_id: String,
        /// Canonical JSON of the stored document.
        document: String,
    },
    AudioChunk {
        segment: u32,
        seq: u32,
        pcm: String,
        samples: u32,
    },
    TranscriptEvent {
        event: TranscriptEvent,
    },
    SegmentAborted {
        segment: u32,
        reason: String,
    },
    OpenChatbot,
    CloseChatbot,
    PhaseChanged {
        from: SessionPhase,
        to: SessionPhase,
        /// Recording segment started or stopped by this transition.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        segment: Option<u32>,
    },
    EditTranscript {
        text: String,
    },
    InsightRequest {
        request_id: u64,
        kind: InsightPromptKind,
        fingerprint: String,
        user_text: String,
        based_on: BasedOn,
        /// Canvas raster sent with the prompt.
        attachment: String,
    },
    InsightResponse {
        request_id: u64,
        #[serde(flatten)]
        outcome: InsightOutcome,
    },
    ChatSubmit {
        mode: ChatMode,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        region: Option<RegionSelection>,
        /// Blob hash of the cropped region.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        attachment: Option<String>,
    },
    ChatRetry {
        turn_id: u64,
    },
    ChatRequest {
        request_id: u64,
        turn_id: u64,
        mode: ChatMode,
        fingerprint: String,
        retry: bool,
    },
    ChatResponse {
        request_id: u64,
        #[serde(flatten)]
        outcome: ChatOutcome,
    },
    ExportImage {
        artifact_id: String,
        region: RegionSelection,
        element_id: String,
    },
    Error {
        code: String,
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cause_seq: Option<u64>,
    },
}

impl SessionEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            SessionEvent::SessionCreated { .. } => "session_created",
            SessionEvent::StrokeBegin { .. } => "stroke_begin",
            SessionEvent::StrokeAppend { .. } => "stroke_append",
            SessionEvent::StrokeEnd { .. } => "stroke_end",
            SessionEvent::Erase { .. } => "erase",
            SessionEvent::Undo => "undo",
            SessionEvent::Redo => "redo",
            SessionEvent::Reset => "reset",
            SessionEvent::SelectRegion { .. } => "select_region",
            SessionEvent::MoveSelection { .. } => "move_selection",
            SessionEvent::SaveGallery { .. } => "save_gallery",
            SessionEvent::LoadGallery { .. } => "load_gallery",
            SessionEvent::AudioChunk { .. } => "audio_chunk",
            SessionEvent::TranscriptEvent { .. } => "transcript_event",
            SessionEvent::SegmentAborted { .. } => "segment_aborted",
            SessionEvent::OpenChatbot => "open_chatbot",
            SessionEvent::CloseChatbot => "close_chatbot",
            SessionEvent::PhaseChanged { .. } => "phase_changed",
            SessionEvent::EditTranscript { .. } => "edit_transcript",
            SessionEvent::InsightRequest { .. } => "insight_request",
            SessionEvent::InsightResponse { .. } => "insight_response",
            SessionEvent::ChatSubmit { .. } => "chat_submit",
            SessionEvent::ChatRetry { .. } => "chat_retry",
            SessionEvent::ChatRequest { .. } => "chat_request",
            SessionEvent::ChatResponse { .. } => "chat_response",
            SessionEvent::ExportImage { .. } => "export_image",
            SessionEvent::Error { .. } => "error",
        }
    }

    /// Client-originated records may be rejected by the state; a rejection
    /// is followed by an `error` record. Server-derived records are only
    /// written when they apply cleanly.
    pub fn is_client_input(&self) -> bool {
        matches!(
            self,
            SessionEvent::StrokeBegin { .. }
                | SessionEvent::StrokeAppend { .. }
                | SessionEvent::StrokeEnd { .. }
                | SessionEvent::Erase { .. }
                | SessionEvent::Undo
                | SessionEvent::Redo
                | SessionEvent::Reset
                | SessionEvent::SelectRegion { .. }
                | SessionEvent::MoveSelection { .. }
                | SessionEvent::SaveGallery { .. }
                | SessionEvent::LoadGallery { .. }
                | SessionEvent::AudioChunk { .. }
                | SessionEvent::OpenChatbot
                | SessionEvent::CloseChatbot
                | SessionEvent::EditTranscript { .. }
                | SessionEvent::ChatSubmit { .. }
                | SessionEvent::ChatRetry { .. }
                | SessionEvent::ExportImage { .. }
        )
    }

    /// Blob hashes this record refers to.
    pub fn blob_refs(&self) -> Vec<&str> {
        match self {
            SessionEvent::AudioChunk { pcm, .. } => vec![pcm],
            SessionEvent::InsightRequest { attachment, .. } => vec![attachment],
            SessionEvent::ChatSubmit {
                attachment: Some(a),
                ..
            } => vec![a],
            SessionEvent::ChatResponse {
                outcome: ChatOutcome::Delivered { image: Some(i), .. },
                ..
            } => vec![i],
            _ => vec![],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(ev: SessionEvent) -> String {
        let rec = EventRecord {
            seq: 7,
            t_ms: 12,
            event: ev,
        };
        let line = serde_json::to_string(&rec).unwrap();
        let back: EventRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, rec);
        line
    }

    #[test]
    fn records_round_trip() {
        assert_eq!(
            round_trip(SessionEvent::Undo),
            r#"{"seq":7,"t_ms":12,"kind":"undo"}"#
        );
        let line = round_trip(SessionEvent::StrokeBegin {
            stroke_id: "s1".into(),
            point: Point::new(1.5, 2.0, 0),
            width: 4.0,
            color: Rgba::BLACK,
        });
        assert!(line.contains(r#""kind":"stroke_begin","payload":{"stroke_id":"s1""#));
        round_trip(SessionEvent::InsightResponse {
            request_id: 3,
            outcome: InsightOutcome::Failed {
                error: ProviderError::Timeout(2000),
            },
        });
        round_trip(SessionEvent::ChatResponse {
            request_id: 1,
            outcome: ChatOutcome::Delivered {
                text: "t".into(),
                image: Some("ab".into()),
            },
        });
        round_trip(SessionEvent::PhaseChanged {
            from: SessionPhase::Idle,
            to: SessionPhase::SketchingRecording,
            segment: Some(0),
        });
    }

    #[test]
    fn client_inputs_are_classified() {
        assert!(SessionEvent::Undo.is_client_input());
        assert!(!SessionEvent::Error {
            code: "X".into(),
            message: String::new(),
            cause_seq: None
        }
        .is_client_input());
    }
}
