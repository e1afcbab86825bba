use thiserror::Error;

use crate::canvas::{CanvasError, GalleryError};
use crate::chat::ChatError;
use crate::prompt::InsightError;
use crate::providers::ProviderError;
use crate::speech::SpeechError;

/// Everything a session operation can fail with. Each variant maps to a
/// stable wire code via [`SessionError::code`].
#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Canvas(#[from] CanvasError),
    #[error(transparent)]
    Speech(#[from] SpeechError),
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error(transparent)]
    Insight(#[from] InsightError),
    #[error(transparent)]
    Gallery(#[from] GalleryError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("stroke {0} is still in progress")]
    StrokeInProgress(String),
    #[error("no stroke {0} in progress")]
    UnknownStroke(String),
    #[error("nothing is selected")]
    NoSelection,
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("missing blob {0}")]
    MissingBlob(String),
    #[error("record inconsistent with session state: {0}")]
    Inconsistent(String),
    #[error("log write failed: {0}")]
    LogIo(String),
    #[error("malformed message: {0}")]
    MalformedMessage(String),
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::Canvas(e) => match e {
                CanvasError::UnknownTarget(_) => "UNKNOWN_TARGET",
                CanvasError::EmptyStroke => "EMPTY_STROKE",
                CanvasError::InvalidStroke(_) => "INVALID_STROKE",
                CanvasError::DuplicateId(_) => "DUPLICATE_ID",
                CanvasError::NoTargets => "NO_TARGETS",
                CanvasError::NothingToUndo => "NOTHING_TO_UNDO",
                CanvasError::NothingToRedo => "NOTHING_TO_REDO",
                CanvasError::EmptyRegion => "EMPTY_REGION",
                CanvasError::UnknownArtifact(_) => "UNKNOWN_ARTIFACT",
                CanvasError::InvalidScale(_) => "INVALID_SCALE",
                CanvasError::InvalidOffset => "INVALID_OFFSET",
            },
            SessionError::Speech(e) => match e {
                SpeechError::InputBlocked => "INPUT_BLOCKED",
                SpeechError::AlreadyOpen => "ALREADY_OPEN",
                SpeechError::NotOpen => "NOT_OPEN",
                SpeechError::NotRecording => "NOT_RECORDING",
                SpeechError::SegmentMismatch { .. } => "SEGMENT_MISMATCH",
                SpeechError::GapInSequence { .. } => "GAP_IN_SEQUENCE",
                SpeechError::InvalidChunk(_) => "INVALID_CHUNK",
                SpeechError::StaleSegment(_) => "STALE_SEGMENT",
                SpeechError::MalformedSegmentId(_) => "MALFORMED_SEGMENT_ID",
            },
            SessionError::Chat(e) => match e {
                ChatError::EmptyPrompt => "EMPTY_PROMPT",
                ChatError::UnknownTurn(_) => "UNKNOWN_TURN",
                ChatError::NotUnanswered(_) => "NOT_UNANSWERED",
                ChatError::UnknownArtifact(_) => "UNKNOWN_ARTIFACT",
                ChatError::WrongProvenance(_) => "WRONG_PROVENANCE",
                ChatError::ModeContract(_) => "MODE_CONTRACT",
                ChatError::QueueEmpty => "QUEUE_EMPTY",
                ChatError::NotInFlight(_) => "NOT_IN_FLIGHT",
            },
            SessionError::Insight(InsightError::Superseded(_)) => "SUPERSEDED",
            SessionError::Gallery(e) => match e {
                GalleryError::UnknownEntry(_) => "UNKNOWN_ENTRY",
                GalleryError::InvalidId(_) => "INVALID_ID",
                GalleryError::Io(_) | GalleryError::Format(_) => "GALLERY_IO",
                GalleryError::Render(_) => "RENDER_FAILED",
            },
            SessionError::Provider(e) => e.code(),
            SessionError::StrokeInProgress(_) => "STROKE_IN_PROGRESS",
            SessionError::UnknownStroke(_) => "UNKNOWN_STROKE",
            SessionError::NoSelection => "NO_SELECTION",
            SessionError::UnknownSession(_) => "UNKNOWN_SESSION",
            SessionError::InvalidConfig(_) => "INVALID_CONFIG",
            SessionError::MissingBlob(_) => "MISSING_BLOB",
            SessionError::Inconsistent(_) => "INCONSISTENT",
            SessionError::LogIo(_) => "LOG_IO",
            SessionError::MalformedMessage(_) => "MALFORMED_MESSAGE",
        }
    }
}
