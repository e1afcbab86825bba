use serde::{Deserialize, Serialize};

use super::state::{PendingExport, Selection, SessionState};
use crate::canvas::{CanvasDocument, GalleryEntrySummary, Stroke};
use crate::chat::{ArtifactSummary, ChatTurn, InFlightChat};
use crate::prompt::{InsightResponse, PendingInsight};
use crate::speech::{RecordingSegment, SessionPhase, Transcript};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsightPanel {
    pub latest: Option<InsightResponse>,
    /// The latest insight was built from older inputs than the current ones.
    pub stale: bool,
    pub in_flight: Option<PendingInsight>,
    pub delivered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatPanel {
    pub turns: Vec<ChatTurn>,
    pub unanswered: Vec<u64>,
    pub queued: usize,
    pub in_flight: Option<InFlightChat>,
}

/// Canonical view of a session. Field order is fixed and every map is
/// ordered, so the JSON encoding is byte-stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub last_seq: u64,
    pub phase: SessionPhase,
    pub recording_active: bool,
    pub recording: Option<RecordingSegment>,
    pub aborted_segments: Vec<u32>,
    pub canvas: CanvasDocument,
    pub pending_stroke: Option<Stroke>,
    pub selection: Option<Selection>,
    pub pending_exports: Vec<PendingExport>,
    pub transcript: Transcript,
    pub insight: InsightPanel,
    pub chat: ChatPanel,
    pub gallery: Vec<GalleryEntrySummary>,
    pub artifacts: Vec<ArtifactSummary>,
}

impl SessionSnapshot {
    pub fn of(state: &SessionState) -> Self {
        Self {
            session_id: state.session_id.clone(),
            last_seq: state.last_seq,
            phase: state.phase(),
            recording_active: state.speech.recording_active(),
            recording: state.speech.recording().cloned(),
            aborted_segments: state.speech.aborted_segments().to_vec(),
            canvas: state.canvas.clone(),
            pending_stroke: state.pending_stroke.clone(),
            selection: state.selection.clone(),
            pending_exports: state.pending_exports.clone(),
            transcript: state.speech.transcript().clone(),
            insight: InsightPanel {
                latest: state.insights.latest().cloned(),
                stale: state.insights.latest_is_stale(state.based_on()),
                in_flight: state.insights.in_flight().cloned(),
                delivered: state.insights.insights().len(),
            },
            chat: ChatPanel {
                turns: state.history.turns().to_vec(),
                unanswered: state.history.unanswered().collect(),
                queued: state.chat_queue.len(),
                in_flight: state.chat_queue.in_flight().cloned(),
            },
            gallery: state.gallery.clone(),
            artifacts: state.artifacts.index(),
        }
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }
}
