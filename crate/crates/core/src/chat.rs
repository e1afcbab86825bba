//! Dual-mode chat over one shared, append-only conversation history, and
//! the content-addressed store for sketch crops and generated images.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canvas::{ImageCatalog, RegionSelection};
use crate::prompt::{BundleKind, InsightPromptKind, PromptBundle};
use crate::raster::{Pixmap, RasterError, RasterImage};

pub const DEFAULT_HISTORY_TURN_BUDGET: usize = 50;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChatError {
    #[error("chat prompt is empty")]
    EmptyPrompt,
    #[error("unknown turn {0}")]
    UnknownTurn(u64),
    #[error("turn {0} is not awaiting a retry")]
    NotUnanswered(u64),
    #[error("unknown artifact {0}")]
    UnknownArtifact(String),
    #[error("artifact {0} is not a generated image")]
    WrongProvenance(String),
    #[error("mode contract violated: {0}")]
    ModeContract(String),
    #[error("no chat request is queued")]
    QueueEmpty,
    #[error("chat request {0} is not in flight")]
    NotInFlight(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ChatMode {
    Text,
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Author {
    User,
    Assistant,
    Insight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TurnMode {
    Text,
    Image,
    Insight,
}

impl From<ChatMode> for TurnMode {
    fn from(m: ChatMode) -> Self {
        match m {
            ChatMode::Text => TurnMode::Text,
            ChatMode::Image => TurnMode::Image,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub turn_id: u64,
    pub author: Author,
    pub mode: TurnMode,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attachment_refs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub insight_kind: Option<InsightPromptKind>,
}

/// A turn before it has been given an id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewTurn {
    pub author: Author,
    pub mode: TurnMode,
    pub text: String,
    pub attachment_refs: Vec<String>,
    pub image_ref: Option<String>,
    pub insight_kind: Option<InsightPromptKind>,
}

impl NewTurn {
    pub fn user(mode: ChatMode, text: impl Into<String>, attachment: Option<String>) -> Self {
        Self {
            author: Author::User,
            mode: mode.into(),
            text: text.into(),
            attachment_refs: attachment.into_iter().collect(),
            image_ref: None,
            insight_kind: None,
        }
    }

    pub fn assistant_text(text: impl Into<String>) -> Self {
        Self {
            author: Author::Assistant,
            mode: TurnMode::Text,
            text: text.into(),
            attachment_refs: Vec::new(),
            image_ref: None,
            insight_kind: None,
        }
    }

    pub fn assistant_image(description: impl Into<String>, image_ref: impl Into<String>) -> Self {
        Self {
            author: Author::Assistant,
            mode: TurnMode::Image,
            text: description.into(),
            attachment_refs: Vec::new(),
            image_ref: Some(image_ref.into()),
            insight_kind: None,
        }
    }

    pub fn insight(kind: InsightPromptKind, text: impl Into<String>) -> Self {
        Self {
            author: Author::Insight,
            mode: TurnMode::Insight,
            text: text.into(),
            attachment_refs: Vec::new(),
            image_ref: None,
            insight_kind: Some(kind),
        }
    }
}

/// Checks the per-mode shape of a turn.
pub fn check_mode_contract(turn: &NewTurn) -> Result<(), ChatError> {
    match (turn.author, turn.mode) {
        (Author::Assistant, TurnMode::Text) if turn.image_ref.is_some() => Err(
            ChatError::ModeContract("text-mode reply carries an image".into()),
        ),
        (Author::Assistant, TurnMode::Text) if turn.text.trim().is_empty() => {
            Err(ChatError::ModeContract("empty text reply".into()))
        }
        (Author::Assistant, TurnMode::Image)
            if turn.image_ref.is_none() || turn.text.trim().is_empty() =>
        {
            Err(ChatError::ModeContract(
                "image-mode reply needs an image and a description".into(),
            ))
        }
        (Author::Assistant, TurnMode::Insight) | (Author::Insight, TurnMode::Text | TurnMode::Image) => {
            Err(ChatError::ModeContract("author and mode disagree".into()))
        }
        (Author::User, TurnMode::Insight) => {
            Err(ChatError::ModeContract("user turns cannot be insights".into()))
        }
        _ => Ok(()),
    }
}

/// Bundle for one chat request. `history` is the shared conversation
/// without the turn being answered.
pub fn build_chat_prompt(
    mode: ChatMode,
    system_text: &str,
    text: &str,
    attachment: Option<RasterImage>,
    history: Vec<ChatTurn>,
) -> PromptBundle {
    PromptBundle {
        kind: match mode {
            ChatMode::Text => BundleKind::ChatText,
            ChatMode::Image => BundleKind::ChatImage,
        },
        system_text: system_text.to_string(),
        user_text: text.to_string(),
        attachments: attachment.into_iter().collect(),
        history,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationHistory {
    pub session_id: String,
    turns: Vec<ChatTurn>,
    /// User turns whose provider call failed and may be retried.
    unanswered: BTreeSet<u64>,
}

impl ConversationHistory {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            ..Default::default()
        }
    }

    pub fn turns(&self) -> &[ChatTurn] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn next_turn_id(&self) -> u64 {
        self.turns.len() as u64
    }

    pub fn turn(&self, id: u64) -> Option<&ChatTurn> {
        self.turns.get(id as usize)
    }

    pub fn unanswered(&self) -> impl Iterator<Item = u64> + '_ {
        self.unanswered.iter().copied()
    }

    pub fn is_unanswered(&self, id: u64) -> bool {
        self.unanswered.contains(&id)
    }

    pub fn append(&mut self, turn: NewTurn) -> Result<&ChatTurn, ChatError> {
        check_mode_contract(&turn)?;
        let turn_id = self.next_turn_id();
        self.turns.push(ChatTurn {
            turn_id,
            author: turn.author,
            mode: turn.mode,
            text: turn.text,
            attachment_refs: turn.attachment_refs,
            image_ref: turn.image_ref,
            insight_kind: turn.insight_kind,
        });
        Ok(self.turns.last().unwrap())
    }

    pub fn mark_unanswered(&mut self, id: u64) -> Result<(), ChatError> {
        match self.turn(id) {
            Some(t) if t.author == Author::User => {
                self.unanswered.insert(id);
                Ok(())
            }
            _ => Err(ChatError::UnknownTurn(id)),
        }
    }

    pub fn mark_answered(&mut self, id: u64) {
        self.unanswered.remove(&id);
    }

    /// History as sent to a provider: every stored turn except `exclude`,
    /// trimmed to `budget` turns by dropping the oldest non-insight turns
    /// first (then the oldest insights if that is not enough).
    pub fn provider_view(&self, budget: usize, exclude: Option<u64>) -> Vec<ChatTurn> {
        let mut view: Vec<ChatTurn> = self
            .turns
            .iter()
            .filter(|t| Some(t.turn_id) != exclude)
            .cloned()
            .collect();
        let mut excess = view.len().saturating_sub(budget);
        if excess > 0 {
            view.retain(|t| {
                if excess > 0 && t.author != Author::Insight {
                    excess -= 1;
                    false
                } else {
                    true
                }
            });
            let extra = view.len().saturating_sub(budget);
            view.drain(..extra);
        }
        view
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    Generated,
    SketchCrop,
}

#[derive(Debug, Clone)]
pub struct Artifact {
    pub id: String,
    pub image: RasterImage,
    pub pixels: Arc<Pixmap>,
    pub provenance: Provenance,
    pub created_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactSummary {
    pub id: String,
    pub provenance: Provenance,
    pub width_px: u32,
    pub height_px: u32,
    pub created_at_ms: u64,
}

/// Immutable images addressed by the SHA-256 of their PNG bytes.
#[derive(Debug, Clone, Default)]
pub struct ArtifactStore {
    artifacts: BTreeMap<String, Artifact>,
}

impl ArtifactStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores an image and returns its id. Storing identical bytes again
    /// returns the existing id and leaves the original entry untouched.
    pub fn insert(
        &mut self,
        image: RasterImage,
        provenance: Provenance,
        created_at_ms: u64,
    ) -> Result<String, RasterError> {
        let id = image.content_hash();
        if self.artifacts.contains_key(&id) {
            return Ok(id);
        }
        let pixels = Arc::new(image.decode()?);
        self.artifacts.insert(
            id.clone(),
            Artifact {
                id: id.clone(),
                image,
                pixels,
                provenance,
                created_at_ms,
            },
        );
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Option<&Artifact> {
        self.artifacts.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.artifacts.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.artifacts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.artifacts.is_empty()
    }

    /// Resolves an artifact that may be placed on the canvas.
    pub fn exportable(&self, id: &str) -> Result<&Artifact, ChatError> {
        let a = self
            .get(id)
            .ok_or_else(|| ChatError::UnknownArtifact(id.to_string()))?;
        if a.provenance != Provenance::Generated {
            return Err(ChatError::WrongProvenance(id.to_string()));
        }
        Ok(a)
    }

    pub fn index(&self) -> Vec<ArtifactSummary> {
        self.artifacts
            .values()
            .map(|a| ArtifactSummary {
                id: a.id.clone(),
                provenance: a.provenance,
                width_px: a.image.width_px,
                height_px: a.image.height_px,
                created_at_ms: a.created_at_ms,
            })
            .collect()
    }
}

impl ImageCatalog for ArtifactStore {
    fn image(&self, artifact_ref: &str) -> Option<&Pixmap> {
        self.artifacts.get(artifact_ref).map(|a| a.pixels.as_ref())
    }
}

/// A submission waiting for the chat provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum QueuedChat {
    New {
        mode: ChatMode,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        attachment_ref: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        region: Option<RegionSelection>,
    },
    Retry { turn_id: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InFlightChat {
    pub request_id: u64,
    pub turn_id: u64,
    pub mode: ChatMode,
}

/// FIFO of chat submissions with at most one request in flight.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatQueue {
    pending: VecDeque<QueuedChat>,
    in_flight: Option<InFlightChat>,
    next_request: u64,
}

impl ChatQueue {
    pub fn validate_submission(text: &str, has_attachment: bool) -> Result<(), ChatError> {
        if text.trim().is_empty() && !has_attachment {
            Err(ChatError::EmptyPrompt)
        } else {
            Ok(())
        }
    }

    pub fn enqueue(&mut self, item: QueuedChat) {
        self.pending.push_back(item);
    }

    pub fn front(&self) -> Option<&QueuedChat> {
        self.pending.front()
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn busy(&self) -> bool {
        self.in_flight.is_some()
    }

    /// True when a request should be started now.
    pub fn ready(&self) -> bool {
        !self.busy() && !self.pending.is_empty()
    }

    pub fn next_request_id(&self) -> u64 {
        self.next_request
    }

    pub fn in_flight(&self) -> Option<&InFlightChat> {
        self.in_flight.as_ref()
    }

    pub fn is_queued_retry(&self, turn_id: u64) -> bool {
        self.pending
            .iter()
            .any(|q| matches!(q, QueuedChat::Retry { turn_id: t } if *t == turn_id))
            || self.in_flight.as_ref().is_some_and(|f| f.turn_id == turn_id)
    }

    /// Pops the next submission and marks it in flight for `turn_id`.
    pub fn start(&mut self, turn_id: u64, mode: ChatMode) -> Result<(u64, QueuedChat), ChatError> {
        let item = self.pending.pop_front().ok_or(ChatError::QueueEmpty)?;
        let request_id = self.next_request;
        self.next_request += 1;
        self.in_flight = Some(InFlightChat {
            request_id,
            turn_id,
            mode,
        });
        Ok((request_id, item))
    }

    pub fn finish(&mut self, request_id: u64) -> Result<InFlightChat, ChatError> {
        match &self.in_flight {
            Some(f) if f.request_id == request_id => Ok(self.in_flight.take().unwrap()),
            _ => Err(ChatError::NotInFlight(request_id)),
        }
    }
}
