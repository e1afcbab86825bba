//! Deterministic inputs shared by the benches.

use std::sync::Arc;

use sketchvox_core::canvas::{CanvasAction, CanvasDocument, NoImages, Point, Stroke};
use sketchvox_core::providers::mock::{MockProvider, MockScripts};
use sketchvox_core::providers::Providers;
use sketchvox_core::raster::Rgba;
use sketchvox_core::session::{ClientMessage, HostOptions, ManualClock, SessionHost, SessionSettings};

/// Small xorshift so inputs do not depend on an RNG crate's stream.
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self(seed.max(1))
    }

    pub fn next_f64(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Hand-drawn-looking strokes: short random walks of `pts` points.
pub fn strokes(n: usize, pts: usize, seed: u64) -> Vec<Stroke> {
    let mut rng = Lcg::new(seed);
    (0..n)
        .map(|i| {
            let (mut x, mut y) = (rng.next_f64() * 1024.0, rng.next_f64() * 768.0);
            let points = (0..pts)
                .map(|j| {
                    x = (x + rng.next_f64() * 24.0 - 12.0).clamp(0.0, 1024.0);
                    y = (y + rng.next_f64() * 24.0 - 12.0).clamp(0.0, 768.0);
                    Point::new(x, y, j as u64 * 8)
                })
                .collect();
            Stroke::new(format!("s{i}"), points, 2.0 + rng.next_f64() * 6.0, Rgba::BLACK)
        })
        .collect()
}

pub fn document(n: usize, pts: usize) -> CanvasDocument {
    let mut doc = CanvasDocument::new("bench");
    for stroke in strokes(n, pts, 42) {
        doc.apply(CanvasAction::AddStroke { stroke }, &NoImages)
            .expect("valid stroke");
    }
    doc
}

pub fn host() -> SessionHost {
    let options = HostOptions {
        clock: Arc::new(ManualClock::new()),
        ..HostOptions::default()
    };
    let mock = Arc::new(MockProvider::new(MockScripts::default()));
    SessionHost::create("bench", SessionSettings::default(), Providers::from_mock(mock), options)
        .expect("default settings are valid")
}

/// Client messages for one stroke.
pub fn stroke_messages(stroke: &Stroke) -> Vec<ClientMessage> {
    let (first, rest) = stroke.points.split_first().expect("non-empty stroke");
    vec![
        ClientMessage::StrokeBegin {
            stroke_id: stroke.id.clone(),
            point: *first,
            width: stroke.width,
            color: stroke.color,
        },
        ClientMessage::StrokeAppend {
            stroke_id: stroke.id.clone(),
            points: rest.to_vec(),
        },
        ClientMessage::StrokeEnd {
            stroke_id: stroke.id.clone(),
        },
    ]
}
