//! Live session host: turns client input and provider results into log
//! records, writes each record, then applies it.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use super::error::SessionError;
use super::log::{EventLog, FileSink};
use super::protocol::{ClientMessage, ServerMessage};
use super::record::{ChatOutcome, EventRecord, InsightOutcome, SessionEvent};
use super::snapshot::SessionSnapshot;
use super::state::{Applied, SessionState};
use super::SessionSettings;
use crate::canvas::{Gallery, RenderCache};
use crate::chat::ChatMode;
use crate::prompt::{PromptBundle, INSIGHT_RASTER_SCALE};
use crate::providers::{
    validate_image_output, validate_text_output, ProviderError, ProviderRole, Providers,
    RawImageOutput, RequestFingerprint, StreamOutput, TranscriptionStream,
};
use crate::raster::RasterImage;
use crate::speech::{AudioChunk, SessionPhase, SpeechError, TranscriptEvent};

/// Session clock in milliseconds since the session started.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug)]
pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

/// Clock driven by the caller.
#[derive(Debug, Clone, Default)]
pub struct ManualClock(Arc<AtomicU64>);

impl ManualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CompletionMode {
    /// Provider calls run inline during dispatch.
    #[default]
    Immediate,
    /// Provider calls are queued; the caller runs them and reports back
    /// through [`SessionHost::complete`].
    Deferred,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallTarget {
    Insight { request_id: u64 },
    Chat { request_id: u64, mode: ChatMode },
}

#[derive(Debug, Clone)]
pub struct ProviderCall {
    pub call_id: u64,
    pub role: ProviderRole,
    pub target: CallTarget,
    pub bundle: PromptBundle,
}

#[derive(Debug, Clone)]
pub enum CallResult {
    Text(Result<String, ProviderError>),
    Image(Result<RawImageOutput, ProviderError>),
}

impl ProviderCall {
    pub fn execute(&self, providers: &Providers) -> CallResult {
        match self.role {
            ProviderRole::ChatImage => CallResult::Image(providers.chat_image.generate_image(&self.bundle)),
            ProviderRole::ChatText => {
                CallResult::Text(providers.chat_text.complete_text(self.role, &self.bundle))
            }
            _ => CallResult::Text(providers.insight.complete_text(self.role, &self.bundle)),
        }
    }
}

pub type RecordObserver = Box<dyn FnMut(&EventRecord, &SessionState) + Send>;

pub struct HostOptions {
    pub clock: Arc<dyn Clock>,
    pub mode: CompletionMode,
    /// Directory for the write-ahead log, if persisted.
    pub log_dir: Option<PathBuf>,
    /// Shared gallery used by save and load.
    pub gallery: Option<Arc<Mutex<Gallery>>>,
}

impl Default for HostOptions {
    fn default() -> Self {
        Self {
            clock: Arc::new(SystemClock::default()),
            mode: CompletionMode::Immediate,
            log_dir: None,
            gallery: None,
        }
    }
}

pub struct SessionHost {
    state: SessionState,
    log: EventLog,
    sink: Option<FileSink>,
    providers: Providers,
    clock: Arc<dyn Clock>,
    mode: CompletionMode,
    gallery: Option<Arc<Mutex<Gallery>>>,
    stream: Option<(u32, Box<dyn TranscriptionStream>)>,
    pending: BTreeMap<u64, ProviderCall>,
    next_call: u64,
    render_cache: RenderCache,
    observer: Option<RecordObserver>,
    outbox: Vec<ServerMessage>,
    last_t: u64,
}

impl std::fmt::Debug for SessionHost {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionHost")
            .field("session_id", &self.state.session_id)
            .field("records", &self.log.len())
            .finish_non_exhaustive()
    }
}

impl SessionHost {
    pub fn create(
        session_id: impl Into<String>,
        settings: SessionSettings,
        providers: Providers,
        options: HostOptions,
    ) -> Result<Self, SessionError> {
        settings.validate()?;
        let session_id = session_id.into();
        let sink = options
            .log_dir
            .map(FileSink::create)
            .transpose()
            .map_err(|e| SessionError::LogIo(e.to_string()))?;
        let record = EventRecord {
            seq: 0,
            t_ms: options.clock.now_ms(),
            event: SessionEvent::SessionCreated {
                session_id: session_id.clone(),
                settings: settings.clone(),
            },
        };
        let mut host = Self {
            state: SessionState::from_created(&record)?,
            log: EventLog::new(),
            sink,
            providers,
            last_t: record.t_ms,
            clock: options.clock,
            mode: options.mode,
            gallery: options.gallery,
            stream: None,
            pending: BTreeMap::new(),
            next_call: 0,
            render_cache: RenderCache::default(),
            observer: None,
            outbox: Vec::new(),
        };
        if let Some(sink) = &mut host.sink {
            sink.append(&record)
                .map_err(|e| SessionError::LogIo(e.to_string()))?;
        }
        host.log.push(record);
        Ok(host)
    }

    pub fn session_id(&self) -> &str {
        &self.state.session_id
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot::of(&self.state)
    }

    pub fn providers(&self) -> &Providers {
        &self.providers
    }

    /// Called after every record is applied (or rejected).
    pub fn set_observer(&mut self, observer: RecordObserver) {
        self.observer = Some(observer);
    }

    pub fn hello(&self) -> ServerMessage {
        ServerMessage::Hello {
            session_id: self.state.session_id.clone(),
            snapshot: Box::new(self.snapshot()),
        }
    }

    pub fn take_pending_calls(&mut self) -> Vec<ProviderCall> {
        std::mem::take(&mut self.pending).into_values().collect()
    }

    fn now(&mut self) -> u64 {
        self.last_t = self.last_t.max(self.clock.now_ms());
        self.last_t
    }

    fn put_blob(&mut self, bytes: Vec<u8>) -> Result<String, SessionError> {
        let (hash, new) = self.log.put_blob(bytes);
        self.persist_blob(&hash, new)?;
        Ok(hash)
    }

    fn put_image(&mut self, img: &RasterImage) -> Result<String, SessionError> {
        let hash = img.content_hash();
        let new = self.log.put_blob_hashed(&hash, img.png());
        self.persist_blob(&hash, new)?;
        Ok(hash)
    }

    fn persist_blob(&mut self, hash: &str, new: bool) -> Result<(), SessionError> {
        if let (true, Some(sink)) = (new, &mut self.sink) {
            sink.write_blob(hash, &self.log.blobs()[hash])
                .map_err(|e| SessionError::LogIo(e.to_string()))?;
        }
        Ok(())
    }

    /// Writes a record, then applies it. Rejected client input is followed
    /// by an `error` record.
    fn append(&mut self, event: SessionEvent) -> Result<Applied, SessionError> {
        let record = EventRecord {
            seq: self.log.next_seq(),
            t_ms: self.now(),
            event,
        };
        if let Some(sink) = &mut self.sink {
            if let Err(e) = sink.append(&record) {
                let err = SessionError::LogIo(e.to_string());
                self.outbox.push(ServerMessage::Error {
                    code: err.code().into(),
                    message: err.to_string(),
                    cause_seq: None,
                });
                return Err(err);
            }
        }
        self.log.push(record.clone());
        let before_canvas = self.state.canvas.revision;
        let before_transcript = self.state.speech.transcript().revision;
        let before_turns = self.state.history.len();
        let result = self.state.apply(&record, &self.log);
        if let Some(obs) = &mut self.observer {
            obs(&record, &self.state);
        }
        match &result {
            Ok(_) => self.announce(&record, before_canvas, before_transcript, before_turns),
            Err(e) => {
                if !record.event.is_client_input() {
                    tracing::error!(seq = record.seq, kind = record.event.kind(), "derived record rejected: {e}");
                }
                self.append_error(e, Some(record.seq));
            }
        }
        result
    }

    fn append_error(&mut self, e: &SessionError, cause_seq: Option<u64>) {
        let code = e.code().to_string();
        let message = e.to_string();
        self.outbox.push(ServerMessage::Error {
            code: code.clone(),
            message: message.clone(),
            cause_seq,
        });
        let _ = self.append(SessionEvent::Error {
            code,
            message,
            cause_seq,
        });
    }

    fn announce(&mut self, record: &EventRecord, canvas: u64, transcript: u64, turns: usize) {
        let s = &self.state;
        match &record.event {
            SessionEvent::AudioChunk { segment, seq, .. } => {
                self.outbox.push(ServerMessage::AudioAck {
                    segment: *segment,
                    seq: *seq,
                });
                return;
            }
            SessionEvent::Error { .. } => {}
            _ => self.outbox.push(ServerMessage::Event {
                record: record.clone(),
            }),
        }
        if matches!(
            record.event,
            SessionEvent::PhaseChanged { .. } | SessionEvent::SegmentAborted { .. }
        ) {
            self.outbox.push(ServerMessage::Phase {
                phase: s.phase(),
                recording_active: s.speech.recording_active(),
                segment: s.speech.recording().map(|r| r.segment),
            });
        }
        if s.canvas.revision != canvas {
            self.outbox.push(ServerMessage::Canvas {
                document: Box::new(s.canvas.clone()),
            });
        }
        if s.speech.transcript().revision != transcript {
            self.outbox.push(ServerMessage::Transcript {
                transcript: s.speech.transcript().clone(),
            });
        }
        if let SessionEvent::InsightResponse { .. } = record.event {
            if let (Some(latest), true) = (s.insights.latest(), s.history.len() != turns) {
                self.outbox.push(ServerMessage::Insight {
                    insight: latest.clone(),
                    stale: s.insights.latest_is_stale(s.based_on()),
                });
            }
        }
        for turn in &s.history.turns()[turns..] {
            self.outbox.push(ServerMessage::ChatTurn { turn: turn.clone() });
        }
    }

    fn drain(&mut self) -> Vec<ServerMessage> {
        std::mem::take(&mut self.outbox)
    }

    pub fn dispatch(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        self.handle(msg);
        self.drain()
    }

    fn handle(&mut self, msg: ClientMessage) {
        match msg {
            ClientMessage::StrokeBegin {
                stroke_id,
                point,
                width,
                color,
            } => {
                let was_idle = self.state.phase() == SessionPhase::Idle;
                let ok = self
                    .append(SessionEvent::StrokeBegin {
                        stroke_id,
                        point,
                        width,
                        color,
                    })
                    .is_ok();
                if ok && was_idle {
                    self.start_recording();
                }
            }
            ClientMessage::StrokeAppend { stroke_id, points } => {
                let _ = self.append(SessionEvent::StrokeAppend { stroke_id, points });
            }
            ClientMessage::StrokeEnd { stroke_id } => {
                let _ = self.append(SessionEvent::StrokeEnd { stroke_id });
            }
            ClientMessage::Erase { ids } => {
                let _ = self.append(SessionEvent::Erase { ids });
            }
            ClientMessage::Undo => {
                let _ = self.append(SessionEvent::Undo);
            }
            ClientMessage::Redo => {
                let _ = self.append(SessionEvent::Redo);
            }
            ClientMessage::Reset => {
                let _ = self.append(SessionEvent::Reset);
            }
            ClientMessage::SelectRegion { region } => {
                let _ = self.append(SessionEvent::SelectRegion { region });
            }
            ClientMessage::MoveSelection { dx, dy } => {
                let _ = self.append(SessionEvent::MoveSelection { dx, dy });
            }
            ClientMessage::SaveGallery => {
                let entry_id = format!("{}-{}", self.state.session_id, self.log.next_seq());
                if let Ok(Applied::GallerySaved(entry)) =
                    self.append(SessionEvent::SaveGallery { entry_id })
                {
                    if let Some(g) = &self.gallery {
                        let res = g.lock().unwrap().insert(*entry);
                        if let Err(e) = res {
                            self.append_error(&e.into(), Some(self.state.last_seq));
                        }
                    }
                }
            }
            ClientMessage::LoadGallery { entry_id } => {
                let document = self
                    .gallery
                    .as_ref()
                    .and_then(|g| {
                        g.lock()
                            .unwrap()
                            .entry(&entry_id)
                            .map(|e| e.document_snapshot.canonical_json())
                    })
                    .unwrap_or_default();
                let _ = self.append(SessionEvent::LoadGallery { entry_id, document });
            }
            ClientMessage::OpenChatbot => self.open_chatbot(),
            ClientMessage::CloseChatbot => {
                if self.append(SessionEvent::CloseChatbot).is_ok() {
                    let _ = self.append(SessionEvent::PhaseChanged {
                        from: SessionPhase::ChatbotOpen,
                        to: SessionPhase::Idle,
                        segment: None,
                    });
                }
            }
            ClientMessage::EditTranscript { text } => {
                if self.append(SessionEvent::EditTranscript { text }).is_ok() {
                    self.issue_insight();
                }
            }
            ClientMessage::ChatSubmit { mode, text, region } => {
                let attachment = region.and_then(|r| {
                    let img = self
                        .state
                        .canvas
                        .crop_cached(&r, 1.0, &self.state.artifacts, &mut self.render_cache)
                        .ok()?;
                    self.put_image(&img).ok()
                });
                if self
                    .append(SessionEvent::ChatSubmit {
                        mode,
                        text,
                        region,
                        attachment,
                    })
                    .is_ok()
                {
                    self.pump_chat();
                }
            }
            ClientMessage::ChatRetry { turn_id } => {
                if self.append(SessionEvent::ChatRetry { turn_id }).is_ok() {
                    self.pump_chat();
                }
            }
            ClientMessage::ExportImage {
                artifact_id,
                region,
            } => {
                let element_id = format!("img-{}", self.log.next_seq());
                let _ = self.append(SessionEvent::ExportImage {
                    artifact_id,
                    region,
                    element_id,
                });
            }
            ClientMessage::Snapshot => self.outbox.push(ServerMessage::Snapshot {
                snapshot: Box::new(self.snapshot()),
            }),
        }
    }

    fn start_recording(&mut self) {
        let segment = self.state.speech.latest_segment().map_or(0, |s| s + 1);
        if self
            .append(SessionEvent::PhaseChanged {
                from: SessionPhase::Idle,
                to: SessionPhase::SketchingRecording,
                segment: Some(segment),
            })
            .is_ok()
        {
            self.open_stream();
        }
    }

    fn open_stream(&mut self) {
        if let Some(rec) = self.state.speech.recording() {
            let seg = rec.segment;
            self.stream = Some((seg, self.providers.transcriber.open_stream(seg)));
        }
    }

    fn open_chatbot(&mut self) {
        let from = self.state.phase();
        if self.append(SessionEvent::OpenChatbot).is_err() {
            return;
        }
        if let Some((_, mut stream)) = self.stream.take() {
            let out = stream.finish();
            self.deliver_stream_output(out, false);
        }
        let segment = self.state.speech.recording().map(|r| r.segment);
        if self
            .append(SessionEvent::PhaseChanged {
                from,
                to: SessionPhase::ChatbotOpen,
                segment,
            })
            .is_ok()
        {
            self.issue_insight();
        }
    }

    /// Delivers transcript events; a stream error aborts the open segment
    /// when `abort_on_error` is set.
    fn deliver_stream_output(&mut self, out: StreamOutput, abort_on_error: bool) {
        for ev in out.events {
            self.deliver_transcript(ev);
        }
        if let Some(err) = out.error {
            let cause = Some(self.state.last_seq);
            self.append_error(&err.into(), cause);
            if abort_on_error {
                self.abort_segment("stream_broken");
            }
        }
    }

    fn deliver_transcript(&mut self, event: TranscriptEvent) {
        match self.state.speech.check_transcript_event(&event) {
            Ok(()) => {
                let _ = self.append(SessionEvent::TranscriptEvent { event });
            }
            Err(e) => tracing::warn!(segment = %event.segment_id, "dropping transcript event: {e}"),
        }
    }

    fn abort_segment(&mut self, reason: &str) {
        let Some(segment) = self.state.speech.recording().map(|r| r.segment) else {
            return;
        };
        self.stream = None;
        if self
            .append(SessionEvent::SegmentAborted {
                segment,
                reason: reason.into(),
            })
            .is_ok()
        {
            self.open_stream();
        }
    }

    pub fn ingest_audio(&mut self, chunk: AudioChunk) -> Vec<ServerMessage> {
        self.handle_audio(chunk);
        self.drain()
    }

    /// Parses a text frame and dispatches it. Unparseable text is logged
    /// as an error with no cause record.
    pub fn dispatch_text(&mut self, text: &str) -> Vec<ServerMessage> {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.dispatch(msg),
            Err(e) => {
                self.append_error(&SessionError::MalformedMessage(e.to_string()), None);
                self.drain()
            }
        }
    }

    /// Decodes a binary socket frame. An undecodable frame is logged as an
    /// error with no cause record.
    pub fn ingest_audio_frame(&mut self, frame: &[u8]) -> Vec<ServerMessage> {
        match AudioChunk::decode_frame(frame) {
            Ok(chunk) => self.handle_audio(chunk),
            Err(e) => self.append_error(&SessionError::Speech(e), None),
        }
        self.drain()
    }

    fn handle_audio(&mut self, chunk: AudioChunk) {
        let pcm = match self.put_blob(chunk.pcm_bytes()) {
            Ok(h) => h,
            Err(e) => {
                self.append_error(&e, None);
                return;
            }
        };
        let res = self.append(SessionEvent::AudioChunk {
            segment: chunk.segment,
            seq: chunk.seq,
            pcm,
            samples: chunk.samples.len() as u32,
        });
        match res {
            Ok(_) => {
                let out = match &mut self.stream {
                    Some((seg, stream)) if *seg == chunk.segment => stream.push(&chunk),
                    _ => return,
                };
                self.deliver_stream_output(out, true);
            }
            Err(SessionError::Speech(SpeechError::GapInSequence { .. })) => {
                self.abort_segment("gap_in_sequence");
            }
            Err(_) => {}
        }
    }

    fn canvas_raster(&mut self) -> RasterImage {
        self.state
            .canvas
            .rasterize_cached(INSIGHT_RASTER_SCALE, &self.state.artifacts, &mut self.render_cache)
            .expect("fixed scale is valid")
    }

    fn issue_insight(&mut self) {
        let raster = self.canvas_raster();
        let (kind, bundle) = self.state.insight_bundle(raster);
        let role = ProviderRole::InsightText;
        let fingerprint = RequestFingerprint::of(role, &bundle);
        let attachment = match self.put_image(&bundle.attachments[0]) {
            Ok(h) => h,
            Err(e) => return self.append_error(&e, None),
        };
        let request_id = self.state.insights.next_request_id();
        let event = SessionEvent::InsightRequest {
            request_id,
            kind,
            fingerprint: fingerprint.0,
            user_text: bundle.user_text.clone(),
            based_on: self.state.based_on(),
            attachment,
        };
        if self.append(event).is_err() {
            return;
        }
        self.call(ProviderCall {
            call_id: 0,
            role,
            target: CallTarget::Insight { request_id },
            bundle,
        });
    }

    fn pump_chat(&mut self) {
        while let Some(next) = self.state.next_chat() {
            let role = match next.mode {
                ChatMode::Text => ProviderRole::ChatText,
                ChatMode::Image => ProviderRole::ChatImage,
            };
            let request_id = self.state.chat_queue.next_request_id();
            let event = SessionEvent::ChatRequest {
                request_id,
                turn_id: next.turn_id,
                mode: next.mode,
                fingerprint: RequestFingerprint::of(role, &next.bundle).0,
                retry: next.retry,
            };
            if self.append(event).is_err() {
                return;
            }
            self.call(ProviderCall {
                call_id: 0,
                role,
                target: CallTarget::Chat {
                    request_id,
                    mode: next.mode,
                },
                bundle: next.bundle,
            });
            if self.mode == CompletionMode::Deferred {
                return;
            }
        }
    }

    fn call(&mut self, mut call: ProviderCall) {
        call.call_id = self.next_call;
        self.next_call += 1;
        match self.mode {
            CompletionMode::Immediate => {
                let result = call.execute(&self.providers);
                self.finish_call(call.target, result);
            }
            CompletionMode::Deferred => {
                self.pending.insert(call.call_id, call);
            }
        }
    }

    /// Reports the result of a call handed out by [`take_pending_calls`](Self::take_pending_calls).
    pub fn complete(&mut self, call: &ProviderCall, result: CallResult) -> Vec<ServerMessage> {
        self.finish_call(call.target, result);
        if matches!(call.target, CallTarget::Chat { .. }) {
            self.pump_chat();
        }
        self.drain()
    }

    fn finish_call(&mut self, target: CallTarget, result: CallResult) {
        match target {
            CallTarget::Insight { request_id } => {
                let text = match result {
                    CallResult::Text(r) => r.and_then(validate_text_output),
                    CallResult::Image(_) => Err(ProviderError::WrongRole(ProviderRole::ChatImage)),
                };
                let outcome = if self.state.insights.check_current(request_id).is_err() {
                    InsightOutcome::Superseded
                } else {
                    match text {
                        Ok(text) => InsightOutcome::Delivered { text },
                        Err(error) => InsightOutcome::Failed { error },
                    }
                };
                let failed = match &outcome {
                    InsightOutcome::Failed { error } => Some(error.clone()),
                    _ => None,
                };
                if self
                    .append(SessionEvent::InsightResponse {
                        request_id,
                        outcome,
                    })
                    .is_ok()
                {
                    if let Some(e) = failed {
                        let cause = Some(self.state.last_seq);
                        self.append_error(&e.into(), cause);
                    }
                }
            }
            CallTarget::Chat { request_id, mode } => {
                let outcome = match (mode, result) {
                    (ChatMode::Text, CallResult::Text(r)) => r.and_then(validate_text_output).map(|text| {
                        ChatOutcome::Delivered { text, image: None }
                    }),
                    (ChatMode::Image, CallResult::Image(r)) => {
                        r.and_then(validate_image_output).and_then(|out| {
                            let hash = self
                                .put_image(&out.image)
                                .map_err(|e| ProviderError::Transport(e.to_string()))?;
                            Ok(ChatOutcome::Delivered {
                                text: out.description,
                                image: Some(hash),
                            })
                        })
                    }
                    (_, _) => Err(ProviderError::MalformedResponse("result does not match chat mode".into())),
                };
                let (outcome, failed) = match outcome {
                    Ok(o) => (o, None),
                    Err(error) => (
                        ChatOutcome::Failed {
                            error: error.clone(),
                        },
                        Some(error),
                    ),
                };
                if self
                    .append(SessionEvent::ChatResponse {
                        request_id,
                        outcome,
                    })
                    .is_ok()
                {
                    if let Some(e) = failed {
                        let cause = Some(self.state.last_seq);
                        self.append_error(&e.into(), cause);
                    }
                }
            }
        }
    }
}
