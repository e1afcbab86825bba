//! Session state and the record fold. `apply` is the only way state
//! changes, for the live host and for replay alike. A failed apply leaves
//! the state untouched.

use serde::{Deserialize, Serialize};

use super::error::SessionError;
use super::log::BlobSource;
use super::record::{ChatOutcome, EventRecord, InsightOutcome, SessionEvent};
use super::SessionSettings;
use crate::canvas::{
    CanvasAction, CanvasDocument, CanvasError, Gallery, GalleryEntry, GalleryEntrySummary,
    GalleryError, RegionSelection, Stroke,
};
use crate::chat::{
    build_chat_prompt, ArtifactStore, ChatError, ChatMode, ChatQueue, ChatTurn,
    ConversationHistory, NewTurn, Provenance, QueuedChat, TurnMode,
};
use crate::prompt::{
    build_insight_prompt_with_raster, select_prompt_kind, BasedOn, InsightPromptKind,
    InsightTracker, PromptBundle,
};
use crate::raster::RasterImage;
use crate::speech::{ActivityOutcome, AudioChunk, SessionPhase, SpeechError, SpeechSession};

/// Region selection and the element ids it captured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub region: RegionSelection,
    pub ids: Vec<String>,
}

/// Generated image waiting for the chatbot to close before placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingExport {
    pub element_id: String,
    pub artifact_id: String,
    pub region: RegionSelection,
}

/// The chat request the queue would start next.
#[derive(Debug, Clone, PartialEq)]
pub struct NextChat {
    pub turn_id: u64,
    pub mode: ChatMode,
    pub retry: bool,
    pub bundle: PromptBundle,
}

#[derive(Debug)]
pub enum Applied {
    Nothing,
    GallerySaved(Box<GalleryEntry>),
}

#[derive(Debug, Clone)]
pub struct SessionState {
    pub session_id: String,
    pub settings: SessionSettings,
    pub canvas: CanvasDocument,
    pub speech: SpeechSession,
    pub insights: InsightTracker,
    pub history: ConversationHistory,
    pub artifacts: ArtifactStore,
    pub chat_queue: ChatQueue,
    pub pending_stroke: Option<Stroke>,
    pub selection: Option<Selection>,
    pub pending_exports: Vec<PendingExport>,
    pub gallery: Vec<GalleryEntrySummary>,
    pub last_seq: u64,
}

fn inconsistent(msg: impl Into<String>) -> SessionError {
    SessionError::Inconsistent(msg.into())
}

impl SessionState {
    pub fn new(session_id: impl Into<String>, settings: SessionSettings) -> Self {
        let session_id = session_id.into();
        Self {
            canvas: CanvasDocument::with_size(
                format!("{session_id}-canvas"),
                settings.canvas_width,
                settings.canvas_height,
            ),
            history: ConversationHistory::new(session_id.clone()),
            session_id,
            settings,
            speech: SpeechSession::new(),
            insights: InsightTracker::default(),
            artifacts: ArtifactStore::new(),
            chat_queue: ChatQueue::default(),
            pending_stroke: None,
            selection: None,
            pending_exports: Vec::new(),
            gallery: Vec::new(),
            last_seq: 0,
        }
    }

    /// Builds the initial state from a `session_created` record.
    pub fn from_created(rec: &EventRecord) -> Result<Self, SessionError> {
        match &rec.event {
            SessionEvent::SessionCreated {
                session_id,
                settings,
            } if rec.seq == 0 => {
                settings.validate()?;
                Ok(Self::new(session_id.clone(), settings.clone()))
            }
            _ => Err(inconsistent("log must start with session_created at seq 0")),
        }
    }

    pub fn phase(&self) -> SessionPhase {
        self.speech.phase()
    }

    pub fn based_on(&self) -> BasedOn {
        BasedOn {
            transcript_revision: self.speech.transcript().revision,
            canvas_revision: self.canvas.revision,
        }
    }

    /// Insight bundle for the current state, given the canvas raster.
    pub fn insight_bundle(&self, raster: RasterImage) -> (InsightPromptKind, PromptBundle) {
        let kind = select_prompt_kind(&self.canvas);
        let bundle = build_insight_prompt_with_raster(
            &self.settings.templates,
            kind,
            self.speech.transcript(),
            raster,
        )
        .with_history(
            self.history
                .provider_view(self.settings.history_turn_budget, None),
        );
        (kind, bundle)
    }

    /// The request the chat queue would start next, if it is ready.
    pub fn next_chat(&self) -> Option<NextChat> {
        if !self.chat_queue.ready() {
            return None;
        }
        let budget = self.settings.history_turn_budget;
        let (turn_id, mode, retry, text, attachment, history) = match self.chat_queue.front()? {
            QueuedChat::New {
                mode,
                text,
                attachment_ref,
                ..
            } => (
                self.history.next_turn_id(),
                *mode,
                false,
                text.clone(),
                attachment_ref.clone(),
                self.history.provider_view(budget, None),
            ),
            QueuedChat::Retry { turn_id } => {
                let turn = self.history.turn(*turn_id)?;
                let mode = match turn.mode {
                    TurnMode::Image => ChatMode::Image,
                    _ => ChatMode::Text,
                };
                (
                    *turn_id,
                    mode,
                    true,
                    turn.text.clone(),
                    turn.attachment_refs.first().cloned(),
                    self.history.provider_view(budget, Some(*turn_id)),
                )
            }
        };
        let raster = attachment
            .and_then(|id| self.artifacts.get(&id))
            .map(|a| a.image.clone());
        let system = match mode {
            ChatMode::Text => &self.settings.chat_text_system,
            ChatMode::Image => &self.settings.chat_image_system,
        };
        Some(NextChat {
            turn_id,
            mode,
            retry,
            bundle: build_chat_prompt(mode, system, &text, raster, history),
        })
    }

    fn canvas_input(&self) -> Result<(), SessionError> {
        self.speech.check_canvas_input()?;
        match &self.pending_stroke {
            Some(s) => Err(SessionError::StrokeInProgress(s.id.clone())),
            None => Ok(()),
        }
    }

    fn require_open(&self) -> Result<(), SessionError> {
        if self.phase() == SessionPhase::ChatbotOpen {
            Ok(())
        } else {
            Err(SpeechError::NotOpen.into())
        }
    }

    fn element_id_taken(&self, id: &str) -> bool {
        self.canvas.element(id).is_some()
            || self.pending_exports.iter().any(|p| p.element_id == id)
            || self.pending_stroke.as_ref().is_some_and(|s| s.id == id)
    }

    fn pending_stroke_mut(&mut self, id: &str) -> Result<&mut Stroke, SessionError> {
        match &mut self.pending_stroke {
            Some(s) if s.id == id => Ok(s),
            _ => Err(SessionError::UnknownStroke(id.to_string())),
        }
    }

    pub fn apply(
        &mut self,
        rec: &EventRecord,
        blobs: &dyn BlobSource,
    ) -> Result<Applied, SessionError> {
        let t = rec.t_ms;
        let out = self.apply_event(&rec.event, t, blobs);
        if out.is_ok() {
            self.last_seq = rec.seq;
        }
        out
    }

    fn apply_event(
        &mut self,
        event: &SessionEvent,
        t: u64,
        blobs: &dyn BlobSource,
    ) -> Result<Applied, SessionError> {
        match event {
            SessionEvent::SessionCreated { .. } => {
                return Err(inconsistent("session_created after seq 0"))
            }
            SessionEvent::StrokeBegin {
                stroke_id,
                point,
                width,
                color,
            } => {
                self.canvas_input()?;
                if self.element_id_taken(stroke_id) {
                    return Err(CanvasError::DuplicateId(stroke_id.clone()).into());
                }
                let stroke = Stroke::new(stroke_id.clone(), vec![*point], *width, *color);
                stroke.validate()?;
                self.pending_stroke = Some(stroke);
            }
            SessionEvent::StrokeAppend { stroke_id, points } => {
                let mut candidate = self.pending_stroke_mut(stroke_id)?.clone();
                candidate.points.extend_from_slice(points);
                candidate.validate()?;
                *self.pending_stroke_mut(stroke_id)? = candidate;
            }
            SessionEvent::StrokeEnd { stroke_id } => {
                let stroke = self.pending_stroke_mut(stroke_id)?.clone();
                self.canvas
                    .apply(CanvasAction::AddStroke { stroke }, &self.artifacts)?;
                self.pending_stroke = None;
            }
            SessionEvent::Erase { ids } => {
                self.canvas_input()?;
                self.canvas
                    .apply(CanvasAction::EraseStrokes { ids: ids.clone() }, &self.artifacts)?;
            }
            SessionEvent::Undo => {
                self.canvas_input()?;
                self.canvas.undo()?;
            }
            SessionEvent::Redo => {
                self.canvas_input()?;
                self.canvas.redo()?;
            }
            SessionEvent::Reset => {
                self.canvas_input()?;
                self.canvas.apply(CanvasAction::Reset, &self.artifacts)?;
                self.selection = None;
            }
            SessionEvent::SelectRegion { region } => {
                let r = region
                    .clamp_to(self.canvas.width, self.canvas.height)
                    .ok_or(CanvasError::EmptyRegion)?;
                self.selection = Some(Selection {
                    ids: self.canvas.select(&r),
                    region: r,
                });
            }
            SessionEvent::MoveSelection { dx, dy } => {
                self.canvas_input()?;
                let sel = self.selection.as_ref().ok_or(SessionError::NoSelection)?;
                let ids: Vec<String> = sel
                    .ids
                    .iter()
                    .filter(|id| self.canvas.element(id).is_some_and(|e| e.is_live()))
                    .cloned()
                    .collect();
                if ids.is_empty() {
                    return Err(SessionError::NoSelection);
                }
                self.canvas.apply(
                    CanvasAction::MoveSelection {
                        ids: ids.clone(),
                        dx: *dx,
                        dy: *dy,
                    },
                    &self.artifacts,
                )?;
                let r = sel.region;
                self.selection = Some(Selection {
                    region: RegionSelection::new(r.x0 + dx, r.y0 + dy, r.x1 + dx, r.y1 + dy),
                    ids,
                });
            }
            SessionEvent::SaveGallery { entry_id } => {
                let entry = Gallery::build_entry(entry_id.clone(), &self.canvas, t, &self.artifacts)?;
                self.gallery.retain(|g| g.entry_id != *entry_id);
                self.gallery.push(entry.summary());
                return Ok(Applied::GallerySaved(Box::new(entry)));
            }
            SessionEvent::LoadGallery { entry_id, document } => {
                self.canvas_input()?;
                if document.is_empty() {
                    return Err(GalleryError::UnknownEntry(entry_id.clone()).into());
                }
                let mut doc: CanvasDocument = serde_json::from_str(document)
                    .map_err(|e| inconsistent(format!("gallery document: {e}")))?;
                doc.revision = self.canvas.revision + 1;
                self.canvas = doc;
                self.selection = None;
            }
            SessionEvent::AudioChunk {
                segment,
                seq,
                pcm,
                samples,
            } => {
                let bytes = blobs
                    .blob(pcm)
                    .ok_or_else(|| SessionError::MissingBlob(pcm.clone()))?;
                let chunk = AudioChunk::from_pcm_bytes(*segment, *seq, bytes)?;
                if chunk.samples.len() != *samples as usize {
                    return Err(inconsistent("audio sample count mismatch"));
                }
                self.speech.ingest_audio(&chunk)?;
            }
            SessionEvent::TranscriptEvent { event } => {
                self.speech.receive_transcript_event(event, t)?;
            }
            SessionEvent::SegmentAborted { segment, .. } => {
                if self.speech.recording().map(|r| r.segment) != Some(*segment) {
                    return Err(inconsistent(format!("segment {segment} is not recording")));
                }
                self.speech.abort_segment(t)?;
            }
            SessionEvent::OpenChatbot => {
                if self.phase() == SessionPhase::ChatbotOpen {
                    return Err(SpeechError::AlreadyOpen.into());
                }
                if let Some(s) = &self.pending_stroke {
                    return Err(SessionError::StrokeInProgress(s.id.clone()));
                }
            }
            SessionEvent::CloseChatbot => self.require_open()?,
            SessionEvent::PhaseChanged { from, to, segment } => {
                self.apply_phase_change(*from, *to, *segment, t)?
            }
            SessionEvent::EditTranscript { text } => {
                self.speech.edit_transcript(text, t)?;
            }
            SessionEvent::InsightRequest {
                request_id,
                kind,
                fingerprint,
                user_text,
                based_on,
                attachment,
            } => {
                self.require_open()
                    .map_err(|_| inconsistent("insight requested while chatbot closed"))?;
                if *kind != select_prompt_kind(&self.canvas) {
                    return Err(inconsistent(format!("insight kind {kind:?} out of order")));
                }
                if *user_text != self.speech.transcript().full_text() {
                    return Err(inconsistent("insight user text differs from transcript"));
                }
                if *based_on != self.based_on() {
                    return Err(inconsistent("insight based_on differs from state"));
                }
                if *request_id != self.insights.next_request_id() {
                    return Err(inconsistent("insight request id out of order"));
                }
                if blobs.blob(attachment).is_none() {
                    return Err(SessionError::MissingBlob(attachment.clone()));
                }
                self.canvas.record_insight();
                self.insights.begin(*kind, *based_on, fingerprint.clone());
            }
            SessionEvent::InsightResponse {
                request_id,
                outcome,
            } => match outcome {
                InsightOutcome::Delivered { text } => {
                    self.insights.check_current(*request_id)?;
                    let kind = self.insights.in_flight().expect("checked").kind;
                    let turn = NewTurn::insight(kind, text.clone());
                    crate::chat::check_mode_contract(&turn)?;
                    if text.trim().is_empty() {
                        return Err(inconsistent("empty insight text"));
                    }
                    self.history.append(turn)?;
                    self.insights.complete(*request_id, text.clone(), t)?;
                }
                InsightOutcome::Superseded => {
                    if self.insights.check_current(*request_id).is_ok() {
                        return Err(inconsistent("current insight marked superseded"));
                    }
                }
                InsightOutcome::Failed { .. } => self.insights.fail(*request_id)?,
            },
            SessionEvent::ChatSubmit {
                mode,
                text,
                region,
                attachment,
            } => {
                self.require_open()?;
                ChatQueue::validate_submission(text, region.is_some())?;
                let mut attachment_ref = None;
                if let Some(r) = region {
                    r.clamp_to(self.canvas.width, self.canvas.height)
                        .ok_or(CanvasError::EmptyRegion)?;
                    let hash = attachment
                        .as_ref()
                        .ok_or_else(|| inconsistent("region without attachment"))?;
                    let png = blobs
                        .blob(hash)
                        .ok_or_else(|| SessionError::MissingBlob(hash.clone()))?;
                    let image = RasterImage::from_png(png.to_vec())
                        .map_err(|e| inconsistent(format!("attachment: {e}")))?;
                    attachment_ref = Some(
                        self.artifacts
                            .insert(image, Provenance::SketchCrop, t)
                            .map_err(|e| inconsistent(e.to_string()))?,
                    );
                }
                self.chat_queue.enqueue(QueuedChat::New {
                    mode: *mode,
                    text: text.clone(),
                    attachment_ref,
                    region: *region,
                });
            }
            SessionEvent::ChatRetry { turn_id } => {
                self.require_open()?;
                let turn = self
                    .history
                    .turn(*turn_id)
                    .ok_or(ChatError::UnknownTurn(*turn_id))?;
                if turn.author != crate::chat::Author::User
                    || !self.history.is_unanswered(*turn_id)
                    || self.chat_queue.is_queued_retry(*turn_id)
                {
                    return Err(ChatError::NotUnanswered(*turn_id).into());
                }
                self.chat_queue
                    .enqueue(QueuedChat::Retry { turn_id: *turn_id });
            }
            SessionEvent::ChatRequest {
                request_id,
                turn_id,
                mode,
                retry,
                ..
            } => {
                let next = self
                    .next_chat()
                    .ok_or_else(|| inconsistent("chat request with nothing ready"))?;
                if *request_id != self.chat_queue.next_request_id()
                    || next.turn_id != *turn_id
                    || next.mode != *mode
                    || next.retry != *retry
                {
                    return Err(inconsistent("chat request does not match queue head"));
                }
                if !next.retry {
                    let Some(QueuedChat::New {
                        mode,
                        text,
                        attachment_ref,
                        ..
                    }) = self.chat_queue.front().cloned()
                    else {
                        unreachable!("non-retry head is a new submission")
                    };
                    self.history
                        .append(NewTurn::user(mode, text, attachment_ref))?;
                }
                self.chat_queue.start(*turn_id, *mode)?;
            }
            SessionEvent::ChatResponse {
                request_id,
                outcome,
            } => {
                let in_flight = self
                    .chat_queue
                    .in_flight()
                    .filter(|f| f.request_id == *request_id)
                    .cloned()
                    .ok_or(ChatError::NotInFlight(*request_id))?;
                match outcome {
                    ChatOutcome::Delivered { text, image } => {
                        let (turn, image) = match (in_flight.mode, image) {
                            (ChatMode::Text, None) => (NewTurn::assistant_text(text.clone()), None),
                            (ChatMode::Image, Some(hash)) => {
                                let png = blobs
                                    .blob(hash)
                                    .ok_or_else(|| SessionError::MissingBlob(hash.clone()))?;
                                let img = RasterImage::from_png(png.to_vec())
                                    .map_err(|e| inconsistent(format!("generated image: {e}")))?;
                                let id = img.content_hash();
                                (NewTurn::assistant_image(text.clone(), id), Some(img))
                            }
                            _ => return Err(ChatError::ModeContract("image presence".into()).into()),
                        };
                        crate::chat::check_mode_contract(&turn)?;
                        if let Some(img) = image {
                            self.artifacts
                                .insert(img, Provenance::Generated, t)
                                .map_err(|e| inconsistent(e.to_string()))?;
                        }
                        self.history.append(turn)?;
                        self.history.mark_answered(in_flight.turn_id);
                    }
                    ChatOutcome::Failed { .. } => {
                        self.history.mark_unanswered(in_flight.turn_id)?;
                    }
                }
                self.chat_queue.finish(*request_id)?;
            }
            SessionEvent::ExportImage {
                artifact_id,
                region,
                element_id,
            } => {
                if let Some(s) = &self.pending_stroke {
                    return Err(SessionError::StrokeInProgress(s.id.clone()));
                }
                self.artifacts.exportable(artifact_id)?;
                region
                    .clamp_to(self.canvas.width, self.canvas.height)
                    .ok_or(CanvasError::EmptyRegion)?;
                if self.element_id_taken(element_id) {
                    return Err(CanvasError::DuplicateId(element_id.clone()).into());
                }
                if self.phase() == SessionPhase::ChatbotOpen {
                    self.pending_exports.push(PendingExport {
                        element_id: element_id.clone(),
                        artifact_id: artifact_id.clone(),
                        region: *region,
                    });
                } else {
                    self.canvas.import_image(
                        element_id.clone(),
                        artifact_id.clone(),
                        *region,
                        &self.artifacts,
                    )?;
                }
            }
            SessionEvent::Error { .. } => {}
        }
        Ok(Applied::Nothing)
    }

    fn apply_phase_change(
        &mut self,
        from: SessionPhase,
        to: SessionPhase,
        segment: Option<u32>,
        t: u64,
    ) -> Result<(), SessionError> {
        if from != self.phase() {
            return Err(inconsistent(format!(
                "phase change from {from:?} but phase is {:?}",
                self.phase()
            )));
        }
        match to {
            SessionPhase::SketchingRecording => {
                let expected = self.speech.latest_segment().map_or(0, |s| s + 1);
                if segment != Some(expected) || from != SessionPhase::Idle {
                    return Err(inconsistent("recording start does not match state"));
                }
                match self.speech.on_sketch_activity(t)? {
                    ActivityOutcome::Started { .. } => {}
                    ActivityOutcome::Unchanged => return Err(inconsistent("recording already on")),
                }
            }
            SessionPhase::ChatbotOpen => {
                if segment != self.speech.recording().map(|r| r.segment) {
                    return Err(inconsistent("closed segment does not match state"));
                }
                self.speech.open_chatbot()?;
            }
            SessionPhase::Idle => {
                if from != SessionPhase::ChatbotOpen {
                    return Err(inconsistent("only closing the chatbot returns to idle"));
                }
                let mut canvas = self.canvas.clone();
                for p in &self.pending_exports {
                    canvas.import_image(
                        p.element_id.clone(),
                        p.artifact_id.clone(),
                        p.region,
                        &self.artifacts,
                    )?;
                }
                self.speech.close_chatbot()?;
                self.canvas = canvas;
                self.pending_exports.clear();
            }
        }
        Ok(())
    }

    pub fn turns(&self) -> &[ChatTurn] {
        self.history.turns()
    }
}
