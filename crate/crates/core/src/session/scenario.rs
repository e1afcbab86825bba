//! Scripted client traffic: one JSON step per line.
//!
//! Steps are client messages plus three driver-only steps:
//! `{"type":"speak","chunks":3}` streams synthetic audio into the open
//! segment, `{"type":"wait","ms":250}` advances the clock, and
//! `{"type":"export_latest_image","region":{..}}` exports the newest
//! generated image.

use serde::{Deserialize, Serialize};

use super::host::SessionHost;
use super::protocol::{ClientMessage, ServerMessage};
use crate::canvas::RegionSelection;
use crate::speech::{AudioChunk, SAMPLE_RATE_HZ};

const SPEAK_CHUNK_SAMPLES: usize = (SAMPLE_RATE_HZ / 10) as usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioStep {
    Driver(DriverStep),
    Client(ClientMessage),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DriverStep {
    Speak { chunks: u32 },
    Wait { ms: u64 },
    ExportLatestImage { region: RegionSelection },
}

#[derive(Debug, thiserror::Error)]
#[error("scenario line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

pub fn parse_scenario(text: &str) -> Result<Vec<ScenarioStep>, ScenarioError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ScenarioError {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Runs `steps` against `host`. `advance` moves the host clock (a no-op
/// for real clocks). Returns every server message produced.
pub fn run_scenario(
    host: &mut SessionHost,
    steps: &[ScenarioStep],
    advance: &mut dyn FnMut(u64),
) -> Vec<ServerMessage> {
    let mut out = Vec::new();
    for step in steps {
        match step {
            ScenarioStep::Client(msg) => {
                advance(20);
                out.extend(host.dispatch(msg.clone()));
            }
            ScenarioStep::Driver(DriverStep::Wait { ms }) => advance(*ms),
            ScenarioStep::Driver(DriverStep::Speak { chunks }) => {
                for _ in 0..*chunks {
                    let Some(rec) = host.state().speech.recording() else {
                        break;
                    };
                    let chunk = AudioChunk {
                        segment: rec.segment,
                        seq: rec.next_seq,
                        samples: synthetic_voice(rec.next_seq),
                    };
                    advance(100);
                    out.extend(host.ingest_audio(chunk));
                }
            }
            ScenarioStep::Driver(DriverStep::ExportLatestImage { region }) => {
                let latest = host
                    .state()
                    .turns()
                    .iter()
                    .rev()
                    .find_map(|t| t.image_ref.clone());
                if let Some(artifact_id) = latest {
                    advance(20);
                    out.extend(host.dispatch(ClientMessage::ExportImage {
                        artifact_id,
                        region: *region,
                    }));
                }
            }
        }
    }
    out
}

fn synthetic_voice(seq: u32) -> Vec<i16> {
    (0..SPEAK_CHUNK_SAMPLES)
        .map(|i| {
            let t = (seq as usize * SPEAK_CHUNK_SAMPLES + i) as f64 / SAMPLE_RATE_HZ as f64;
            ((t * 220.0 * std::f64::consts::TAU).sin() * 4000.0) as i16
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_mixed_steps() {
        let steps = parse_scenario(
            "# comment\n{\"type\":\"speak\",\"chunks\":2}\n\n{\"type\":\"undo\"}\n{\"type\":\"wait\",\"ms\":5}\n",
        )
        .unwrap();
        assert_eq!(
            steps,
            [
                ScenarioStep::Driver(DriverStep::Speak { chunks: 2 }),
                ScenarioStep::Client(ClientMessage::Undo),
                ScenarioStep::Driver(DriverStep::Wait { ms: 5 }),
            ]
        );
        let err = parse_scenario("{\"type\":\"bogus\"}").unwrap_err();
        assert_eq!(err.line, 1);
    }
}
