//! Socket message shapes. Client and server text frames are JSON objects
//! tagged by `type`; audio travels in binary frames (see
//! [`AudioChunk::encode_frame`](crate::speech::AudioChunk::encode_frame)).

use serde::{Deserialize, Serialize};

use super::record::EventRecord;
use super::snapshot::SessionSnapshot;
use crate::canvas::{CanvasDocument, Point, RegionSelection};
use crate::chat::{ChatMode, ChatTurn};
use crate::prompt::InsightResponse;
use crate::raster::Rgba;
use crate::speech::{SessionPhase, Transcript};

fn black() -> Rgba {
    Rgba::BLACK
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
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
    SaveGallery,
    LoadGallery {
        entry_id: String,
    },
    OpenChatbot,
    CloseChatbot,
    EditTranscript {
        text: String,
    },
    ChatSubmit {
        mode: ChatMode,
        #[serde(default)]
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        region: Option<RegionSelection>,
    },
    ChatRetry {
        turn_id: u64,
    },
    ExportImage {
        artifact_id: String,
        region: RegionSelection,
    },
    Snapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    /// First message on a new connection.
    Hello {
        session_id: String,
        snapshot: Box<SessionSnapshot>,
    },
    /// Every logged record except audio chunks.
    Event { record: EventRecord },
    AudioAck { segment: u32, seq: u32 },
    Phase {
        phase: SessionPhase,
        recording_active: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        segment: Option<u32>,
    },
    Canvas { document: Box<CanvasDocument> },
    Transcript { transcript: Transcript },
    Insight { insight: InsightResponse, stale: bool },
    ChatTurn { turn: ChatTurn },
    Error {
        code: String,
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cause_seq: Option<u64>,
    },
    Snapshot { snapshot: Box<SessionSnapshot> },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_parse() {
        let m: ClientMessage = serde_json::from_str(
            r#"{"type":"stroke_begin","stroke_id":"s1","point":{"x":1,"y":2,"t_ms":0},"width":4}"#,
        )
        .unwrap();
        assert_eq!(
            m,
            ClientMessage::StrokeBegin {
                stroke_id: "s1".into(),
                point: Point::new(1.0, 2.0, 0),
                width: 4.0,
                color: Rgba::BLACK
            }
        );
        let m: ClientMessage = serde_json::from_str(r#"{"type":"undo"}"#).unwrap();
        assert_eq!(m, ClientMessage::Undo);
        let m: ClientMessage =
            serde_json::from_str(r#"{"type":"chat_submit","mode":"IMAGE","text":"go"}"#).unwrap();
        assert!(matches!(m, ClientMessage::ChatSubmit { mode: ChatMode::Image, .. }));
    }

    #[test]
    fn error_message_shape() {
        let m = ServerMessage::Error {
            code: "NOTHING_TO_UNDO".into(),
            message: "nothing to undo".into(),
            cause_seq: Some(3),
        };
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"type":"error","code":"NOTHING_TO_UNDO","message":"nothing to undo","cause_seq":3}"#
        );
    }
}
