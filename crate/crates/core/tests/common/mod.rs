//! Helpers shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

pub mod oracles;

use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use sketchvox_core::canvas::{Gallery, Point, RegionSelection};
use sketchvox_core::chat::ChatMode;
use sketchvox_core::providers::mock::{MockProvider, MockScripts};
use sketchvox_core::providers::Providers;
use sketchvox_core::raster::Rgba;
use sketchvox_core::session::{
    ClientMessage, CompletionMode, HostOptions, ManualClock, ServerMessage, SessionHost,
    SessionSettings,
};
use sketchvox_core::speech::{AudioChunk, SessionPhase};

pub struct Rig {
    pub host: SessionHost,
    pub mock: Arc<MockProvider>,
    pub clock: ManualClock,
    pub gallery: Arc<Mutex<Gallery>>,
    /// Error messages the client has been sent so far.
    pub client_errors: usize,
}

impl Rig {
    pub fn new(scripts: MockScripts) -> Self {
        Self::with(scripts, SessionSettings::default(), CompletionMode::Immediate)
    }

    pub fn with(scripts: MockScripts, settings: SessionSettings, mode: CompletionMode) -> Self {
        let mock = Arc::new(MockProvider::new(scripts));
        let clock = ManualClock::new();
        let gallery = Arc::new(Mutex::new(Gallery::in_memory()));
        let host = SessionHost::create(
            "t1",
            settings,
            Providers::from_mock(mock.clone()),
            HostOptions {
                clock: Arc::new(clock.clone()),
                mode,
                log_dir: None,
                gallery: Some(gallery.clone()),
            },
        )
        .expect("valid settings");
        Self {
            host,
            mock,
            clock,
            gallery,
            client_errors: 0,
        }
    }

    pub fn send(&mut self, msg: ClientMessage) {
        self.clock.advance(5);
        let out = self.host.dispatch(msg);
        self.count_errors(&out);
    }

    pub fn audio(&mut self, chunk: AudioChunk) {
        self.clock.advance(100);
        let out = self.host.ingest_audio(chunk);
        self.count_errors(&out);
    }

    fn count_errors(&mut self, out: &[ServerMessage]) {
        self.client_errors += out
            .iter()
            .filter(|m| matches!(m, ServerMessage::Error { .. }))
            .count();
    }

    /// Draws a complete stroke through `pts`.
    pub fn stroke(&mut self, id: &str, pts: &[(f64, f64)]) {
        let p: Vec<Point> = pts
            .iter()
            .enumerate()
            .map(|(i, (x, y))| Point::new(*x, *y, i as u64 * 10))
            .collect();
        self.send(ClientMessage::StrokeBegin {
            stroke_id: id.into(),
            point: p[0],
            width: 4.0,
            color: Rgba::BLACK,
        });
        if p.len() > 1 {
            self.send(ClientMessage::StrokeAppend {
                stroke_id: id.into(),
                points: p[1..].to_vec(),
            });
        }
        self.send(ClientMessage::StrokeEnd {
            stroke_id: id.into(),
        });
    }

    /// Sends `n` audio chunks into the open recording segment.
    pub fn speak(&mut self, n: u32) {
        for _ in 0..n {
            let Some(rec) = self.host.state().speech.recording() else {
                return;
            };
            let chunk = tone_chunk(rec.segment, rec.next_seq, 1600);
            self.audio(chunk);
        }
    }
}

pub fn tone_chunk(segment: u32, seq: u32, n: usize) -> AudioChunk {
    AudioChunk {
        segment,
        seq,
        samples: (0..n).map(|i| ((i as f64 * 0.1).sin() * 3000.0) as i16).collect(),
    }
}

/// Event mix for [`Fuzzer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mix {
    /// Heavy on chatbot traffic and misuse; strokes jump across the canvas.
    Stress,
    /// Shaped like a sketching session: long strokes drawn as local walks,
    /// speech while recording, occasional chatbot visits.
    Interactive,
}

/// Random client traffic, mostly valid with some deliberate misuse. Every
/// step sends exactly one input.
pub struct Fuzzer {
    pub rng: ChaCha8Rng,
    mix: Mix,
    next_stroke: u64,
    pen: (f64, f64),
}

impl Fuzzer {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self::with_mix(rng, Mix::Stress)
    }

    pub fn with_mix(rng: ChaCha8Rng, mix: Mix) -> Self {
        Self {
            rng,
            mix,
            next_stroke: 0,
            pen: (512.0, 384.0),
        }
    }

    fn coord(&mut self, max: f64) -> f64 {
        (self.rng.random_range(-20.0..max + 20.0) * 4.0_f64).round() / 4.0
    }

    fn point(&mut self) -> Point {
        match self.mix {
            Mix::Stress => Point::new(self.coord(1024.0), self.coord(768.0), 0),
            Mix::Interactive => {
                let dx = self.rng.random_range(-12.0..12.0_f64);
                let dy = self.rng.random_range(-12.0..12.0_f64);
                self.pen = (
                    ((self.pen.0 + dx) * 4.0).round() / 4.0,
                    ((self.pen.1 + dy) * 4.0).round() / 4.0,
                );
                Point::new(self.pen.0, self.pen.1, 0)
            }
        }
    }

    fn region(&mut self) -> RegionSelection {
        RegionSelection::new(self.coord(1024.0), self.coord(768.0), self.coord(1024.0), self.coord(768.0))
    }

    /// Performs one step against the host.
    pub fn step(&mut self, rig: &mut Rig) {
        let state = rig.host.state();
        let phase = state.phase();
        let pending = state.pending_stroke.as_ref().map(|s| s.id.clone());
        let roll = self.rng.random_range(0..100);
        let (append_below, end_below) = match self.mix {
            Mix::Stress => (55, 95),
            Mix::Interactive => (85, 99),
        };
        if let Some(id) = pending {
            if roll < append_below {
                let n = self.rng.random_range(1..6);
                let points = (0..n).map(|_| self.point()).collect();
                return rig.send(ClientMessage::StrokeAppend { stroke_id: id, points });
            }
            if roll < end_below {
                return rig.send(ClientMessage::StrokeEnd { stroke_id: id });
            }
        }
        if phase == SessionPhase::ChatbotOpen {
            let msg = match roll {
                0..=24 => ClientMessage::CloseChatbot,
                25..=44 => ClientMessage::EditTranscript {
                    text: format!("idea {}", self.rng.random_range(0..1000)),
                },
                45..=64 => ClientMessage::ChatSubmit {
                    mode: ChatMode::Text,
                    text: format!("question {}", self.rng.random_range(0..1000)),
                    region: None,
                },
                65..=74 => ClientMessage::ChatSubmit {
                    mode: ChatMode::Image,
                    text: "render it".into(),
                    region: self.rng.random_bool(0.5).then(|| self.region()),
                },
                75..=84 => {
                    let ids: Vec<String> = state
                        .artifacts
                        .index()
                        .into_iter()
                        .map(|a| a.id)
                        .collect();
                    match ids.get(self.rng.random_range(0..ids.len().max(1))) {
                        Some(id) => ClientMessage::ExportImage {
                            artifact_id: id.clone(),
                            region: self.region(),
                        },
                        None => ClientMessage::Undo,
                    }
                }
                85..=89 => ClientMessage::ChatRetry {
                    turn_id: self.rng.random_range(0..8),
                },
                90..=94 => ClientMessage::OpenChatbot,
                _ => ClientMessage::SelectRegion {
                    region: self.region(),
                },
            };
            return rig.send(msg);
        }
        let speak_below = match self.mix {
            Mix::Stress => 25,
            Mix::Interactive => 50,
        };
        if phase == SessionPhase::SketchingRecording && roll < speak_below {
            if let Some(rec) = rig.host.state().speech.recording() {
                // Occasionally skip a sequence number.
                let chunk = if self.rng.random_bool(0.05) {
                    tone_chunk(rec.segment, rec.next_seq + 1, 800)
                } else {
                    tone_chunk(rec.segment, rec.next_seq, 1600)
                };
                return rig.audio(chunk);
            }
        }
        let roll = match self.mix {
            Mix::Stress => roll,
            // Chatbot visits drop to a few percent of idle steps.
            Mix::Interactive if (72..=89).contains(&roll) && self.rng.random_bool(0.75) => {
                self.rng.random_range(0..35)
            }
            Mix::Interactive => roll,
        };
        let msg = match roll {
            0..=34 => {
                self.next_stroke += 1;
                if self.mix == Mix::Interactive {
                    self.pen = (self.coord(1024.0), self.coord(768.0));
                }
                let point = match self.mix {
                    Mix::Stress => self.point(),
                    Mix::Interactive => Point::new(self.pen.0, self.pen.1, 0),
                };
                ClientMessage::StrokeBegin {
                    stroke_id: format!("k{}", self.next_stroke),
                    point,
                    width: self.rng.random_range(1.0..8.0),
                    color: Rgba::BLACK,
                }
            }
            35..=44 => ClientMessage::Undo,
            45..=49 => ClientMessage::Redo,
            50..=52 => ClientMessage::Reset,
            53..=57 => ClientMessage::Erase {
                ids: vec![format!("k{}", self.rng.random_range(1..self.next_stroke + 2))],
            },
            58..=62 => ClientMessage::SelectRegion {
                region: self.region(),
            },
            63..=67 => ClientMessage::MoveSelection {
                dx: self.rng.random_range(-30.0..30.0),
                dy: self.rng.random_range(-30.0..30.0),
            },
            68..=69 => ClientMessage::SaveGallery,
            70..=71 => {
                let ids: Vec<String> = rig.gallery.lock().unwrap().list().into_iter().map(|e| e.entry_id).collect();
                ClientMessage::LoadGallery {
                    entry_id: ids
                        .get(self.rng.random_range(0..ids.len().max(1)))
                        .cloned()
                        .unwrap_or_else(|| "missing".into()),
                }
            }
            72..=89 => ClientMessage::OpenChatbot,
            90..=94 => ClientMessage::CloseChatbot,
            _ => ClientMessage::EditTranscript {
                text: "offline edit".into(),
            },
        };
        rig.send(msg)
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}
