//! Recording lifecycle and transcript assembly.
//!
//! Recording starts on sketch activity while the chatbot is closed and
//! stops when the chatbot opens. Each recording run is a numbered segment;
//! audio chunks within it carry a gapless `seq` starting at 0. Transcript
//! segment ids have the form `"<recording>:<utterance>"` so late provider
//! events can be matched to the recording they came from.
//!
//! Operations that fail leave the state untouched.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SAMPLE_RATE_HZ: u32 = 16_000;
pub const MAX_CHUNK_MS: u32 = 200;
pub const MAX_CHUNK_SAMPLES: usize = (SAMPLE_RATE_HZ * MAX_CHUNK_MS / 1000) as usize;
/// Binary audio frame header: segment (u32 LE) then seq (u32 LE).
pub const AUDIO_FRAME_HEADER: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpeechError {
    #[error("canvas input is blocked while the chatbot is open")]
    InputBlocked,
    #[error("chatbot already open")]
    AlreadyOpen,
    #[error("chatbot not open")]
    NotOpen,
    #[error("not recording")]
    NotRecording,
    #[error("chunk for segment {got}, current segment is {expected}")]
    SegmentMismatch { expected: u32, got: u32 },
    #[error("gap in audio sequence: expected {expected}, got {got}")]
    GapInSequence { expected: u32, got: u32 },
    #[error("invalid audio chunk: {0}")]
    InvalidChunk(String),
    #[error("stale transcript segment {0}")]
    StaleSegment(String),
    #[error("malformed segment id {0:?}")]
    MalformedSegmentId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionPhase {
    Idle,
    SketchingRecording,
    ChatbotOpen,
}

/// 16 kHz mono signed 16-bit PCM, at most 200 ms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioChunk {
    pub segment: u32,
    pub seq: u32,
    pub samples: Vec<i16>,
}

impl AudioChunk {
    pub fn duration_ms(&self) -> u32 {
        (self.samples.len() as u64 * 1000 / SAMPLE_RATE_HZ as u64) as u32
    }

    pub fn pcm_bytes(&self) -> Vec<u8> {
        self.samples.iter().flat_map(|s| s.to_le_bytes()).collect()
    }

    pub fn from_pcm_bytes(segment: u32, seq: u32, pcm: &[u8]) -> Result<Self, SpeechError> {
        if !pcm.len().is_multiple_of(2) {
            return Err(SpeechError::InvalidChunk("odd PCM byte count".into()));
        }
        let samples = pcm
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]))
            .collect();
        Ok(Self {
            segment,
            seq,
            samples,
        })
    }

    pub fn encode_frame(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(AUDIO_FRAME_HEADER + self.samples.len() * 2);
        out.extend_from_slice(&self.segment.to_le_bytes());
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend(self.pcm_bytes());
        out
    }

    pub fn decode_frame(frame: &[u8]) -> Result<Self, SpeechError> {
        if frame.len() < AUDIO_FRAME_HEADER {
            return Err(SpeechError::InvalidChunk("frame shorter than header".into()));
        }
        let segment = u32::from_le_bytes(frame[0..4].try_into().unwrap());
        let seq = u32::from_le_bytes(frame[4..8].try_into().unwrap());
        Self::from_pcm_bytes(segment, seq, &frame[AUDIO_FRAME_HEADER..])
    }

    pub fn validate(&self) -> Result<(), SpeechError> {
        if self.samples.is_empty() {
            return Err(SpeechError::InvalidChunk("no samples".into()));
        }
        if self.samples.len() > MAX_CHUNK_SAMPLES {
            return Err(SpeechError::InvalidChunk(format!(
                "{} samples exceeds {MAX_CHUNK_MS} ms",
                self.samples.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SegmentStatus {
    Interim,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TranscriptSource {
    Asr,
    UserEdit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptSegment {
    pub segment_id: String,
    pub text: String,
    pub t_start_ms: u64,
    pub t_end_ms: u64,
    pub status: SegmentStatus,
    pub source: TranscriptSource,
}

/// Event delivered by a transcription provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub segment_id: String,
    pub text: String,
    pub status: SegmentStatus,
}

impl TranscriptEvent {
    pub fn new(recording: u32, utterance: u32, text: impl Into<String>, status: SegmentStatus) -> Self {
        Self {
            segment_id: segment_id(recording, utterance),
            text: text.into(),
            status,
        }
    }
}

pub fn segment_id(recording: u32, utterance: u32) -> String {
    format!("{recording}:{utterance}")
}

/// Recording number encoded in an ASR segment id.
pub fn parse_segment_recording(id: &str) -> Result<u32, SpeechError> {
    let (r, u) = id
        .split_once(':')
        .ok_or_else(|| SpeechError::MalformedSegmentId(id.to_string()))?;
    u.parse::<u32>()
        .map_err(|_| SpeechError::MalformedSegmentId(id.to_string()))?;
    r.parse()
        .map_err(|_| SpeechError::MalformedSegmentId(id.to_string()))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub segments: Vec<TranscriptSegment>,
    pub revision: u64,
    pub edited: bool,
}

fn join_texts<'a>(texts: impl Iterator<Item = &'a str>) -> String {
    texts
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

impl Transcript {
    /// FINAL segment texts in order, joined by single spaces.
    pub fn full_text(&self) -> String {
        join_texts(
            self.segments
                .iter()
                .filter(|s| s.status == SegmentStatus::Final)
                .map(|s| s.text.as_str()),
        )
    }

    /// Like [`full_text`](Self::full_text) but including interim hypotheses.
    pub fn display_text(&self) -> String {
        join_texts(self.segments.iter().map(|s| s.text.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordingSegment {
    pub segment: u32,
    pub next_seq: u32,
    pub started_at_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivityOutcome {
    /// A new recording segment was opened.
    Started { segment: u32 },
    Unchanged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioAck {
    pub segment: u32,
    pub seq: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeechSession {
    phase: SessionPhase,
    recording: Option<RecordingSegment>,
    /// Number of recording segments opened so far.
    segments_opened: u32,
    aborted: Vec<u32>,
    /// ASR events for recordings at or below this number are ignored
    /// after a user edit.
    edit_floor: Option<u32>,
    edits: u32,
    transcript: Transcript,
}

impl Default for SpeechSession {
    fn default() -> Self {
        Self::new()
    }
}

impl SpeechSession {
    pub fn new() -> Self {
        Self {
            phase: SessionPhase::Idle,
            recording: None,
            segments_opened: 0,
            aborted: Vec::new(),
            edit_floor: None,
            edits: 0,
            transcript: Transcript::default(),
        }
    }

    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    pub fn recording_active(&self) -> bool {
        self.recording.is_some()
    }

    pub fn recording(&self) -> Option<&RecordingSegment> {
        self.recording.as_ref()
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn aborted_segments(&self) -> &[u32] {
        &self.aborted
    }

    /// Most recently opened recording segment, if any.
    pub fn latest_segment(&self) -> Option<u32> {
        self.segments_opened.checked_sub(1)
    }

    pub fn check_canvas_input(&self) -> Result<(), SpeechError> {
        if self.phase == SessionPhase::ChatbotOpen {
            Err(SpeechError::InputBlocked)
        } else {
            Ok(())
        }
    }

    pub fn on_sketch_activity(&mut self, t_ms: u64) -> Result<ActivityOutcome, SpeechError> {
        match self.phase {
            SessionPhase::ChatbotOpen => Err(SpeechError::InputBlocked),
            SessionPhase::SketchingRecording => Ok(ActivityOutcome::Unchanged),
            SessionPhase::Idle => {
                let segment = self.segments_opened;
                self.segments_opened += 1;
                self.recording = Some(RecordingSegment {
                    segment,
                    next_seq: 0,
                    started_at_ms: t_ms,
                });
                self.phase = SessionPhase::SketchingRecording;
                Ok(ActivityOutcome::Started { segment })
            }
        }
    }

    /// Stops recording and promotes trailing interim text to final.
    pub fn open_chatbot(&mut self) -> Result<(), SpeechError> {
        if self.phase == SessionPhase::ChatbotOpen {
            return Err(SpeechError::AlreadyOpen);
        }
        self.recording = None;
        let mut changed = false;
        for seg in &mut self.transcript.segments {
            if seg.status == SegmentStatus::Interim {
                seg.status = SegmentStatus::Final;
                changed = true;
            }
        }
        if changed {
            self.transcript.revision += 1;
        }
        self.phase = SessionPhase::ChatbotOpen;
        Ok(())
    }

    pub fn close_chatbot(&mut self) -> Result<(), SpeechError> {
        if self.phase != SessionPhase::ChatbotOpen {
            return Err(SpeechError::NotOpen);
        }
        self.phase = SessionPhase::Idle;
        Ok(())
    }

    /// Checks a chunk against the open segment without consuming it.
    pub fn check_audio(&self, chunk: &AudioChunk) -> Result<(), SpeechError> {
        let rec = match (&self.recording, self.phase) {
            (Some(rec), SessionPhase::SketchingRecording) => rec,
            _ => return Err(SpeechError::NotRecording),
        };
        chunk.validate()?;
        if chunk.segment != rec.segment {
            return Err(SpeechError::SegmentMismatch {
                expected: rec.segment,
                got: chunk.segment,
            });
        }
        if chunk.seq != rec.next_seq {
            return Err(SpeechError::GapInSequence {
                expected: rec.next_seq,
                got: chunk.seq,
            });
        }
        Ok(())
    }

    pub fn ingest_audio(&mut self, chunk: &AudioChunk) -> Result<AudioAck, SpeechError> {
        self.check_audio(chunk)?;
        let rec = self.recording.as_mut().expect("checked");
        rec.next_seq += 1;
        Ok(AudioAck {
            segment: chunk.segment,
            seq: chunk.seq,
        })
    }

    /// Abandons the open segment (sequence gap or broken provider stream)
    /// and opens a fresh one. Interim text from the aborted segment is
    /// dropped; its final segments stay.
    pub fn abort_segment(&mut self, t_ms: u64) -> Result<u32, SpeechError> {
        let rec = self.recording.take().ok_or(SpeechError::NotRecording)?;
        self.aborted.push(rec.segment);
        let before = self.transcript.segments.len();
        self.transcript.segments.retain(|s| {
            !(s.status == SegmentStatus::Interim
                && parse_segment_recording(&s.segment_id).ok() == Some(rec.segment))
        });
        if self.transcript.segments.len() != before {
            self.transcript.revision += 1;
        }
        let segment = self.segments_opened;
        self.segments_opened += 1;
        self.recording = Some(RecordingSegment {
            segment,
            next_seq: 0,
            started_at_ms: t_ms,
        });
        Ok(segment)
    }

    pub fn check_transcript_event(&self, ev: &TranscriptEvent) -> Result<(), SpeechError> {
        let recording = parse_segment_recording(&ev.segment_id)?;
        let stale = || SpeechError::StaleSegment(ev.segment_id.clone());
        let latest = self.latest_segment().ok_or_else(stale)?;
        if recording > latest || recording + 1 < latest {
            return Err(stale());
        }
        if self.aborted.contains(&recording) {
            return Err(stale());
        }
        if self.edit_floor.is_some_and(|f| recording <= f) {
            return Err(stale());
        }
        if self
            .transcript
            .segments
            .iter()
            .any(|s| s.segment_id == ev.segment_id && s.status == SegmentStatus::Final)
        {
            return Err(stale());
        }
        Ok(())
    }

    pub fn receive_transcript_event(
        &mut self,
        ev: &TranscriptEvent,
        t_ms: u64,
    ) -> Result<&Transcript, SpeechError> {
        self.check_transcript_event(ev)?;
        let t = &mut self.transcript;
        match t.segments.iter_mut().find(|s| s.segment_id == ev.segment_id) {
            Some(seg) => {
                seg.text = ev.text.clone();
                seg.status = ev.status;
                seg.t_end_ms = t_ms;
            }
            None => t.segments.push(TranscriptSegment {
                segment_id: ev.segment_id.clone(),
                text: ev.text.clone(),
                t_start_ms: t_ms,
                t_end_ms: t_ms,
                status: ev.status,
                source: TranscriptSource::Asr,
            }),
        }
        t.revision += 1;
        Ok(&self.transcript)
    }

    /// Replaces the transcript with a single user-authored final segment.
    pub fn edit_transcript(&mut self, text: &str, t_ms: u64) -> Result<&Transcript, SpeechError> {
        if self.phase != SessionPhase::ChatbotOpen {
            return Err(SpeechError::NotOpen);
        }
        self.edits += 1;
        self.edit_floor = self.latest_segment();
        let t = &mut self.transcript;
        t.segments = vec![TranscriptSegment {
            segment_id: format!("edit-{}", self.edits),
            text: text.to_string(),
            t_start_ms: t_ms,
            t_end_ms: t_ms,
            status: SegmentStatus::Final,
            source: TranscriptSource::UserEdit,
        }];
        t.edited = true;
        t.revision += 1;
        Ok(&self.transcript)
    }
}
