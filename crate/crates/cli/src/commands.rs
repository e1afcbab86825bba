//! Offline commands over persisted session logs.

use std::path::Path;
use std::sync::{Arc, Mutex};

use anyhow::Context;

use sketchvox_core::canvas::Gallery;
use sketchvox_core::providers::mock::{MockProvider, MockScripts};
use sketchvox_core::providers::Providers;
use sketchvox_core::session::{
    parse_scenario, replay_until, run_scenario, EventLog, HostOptions, ManualClock,
    SessionHost, SessionSettings, SessionSnapshot,
};

fn load_scripts(path: Option<&Path>) -> anyhow::Result<Option<MockScripts>> {
    path.map(|p| MockScripts::load(p).with_context(|| format!("loading scripts {}", p.display())))
        .transpose()
}

fn load_log(dir: &Path) -> anyhow::Result<EventLog> {
    EventLog::read_dir(dir).with_context(|| format!("reading log {}", dir.display()))
}

/// Replays a log directory and returns the canonical snapshot JSON.
/// With scripts, logged provider replies are checked against them.
pub fn replay_log(log_dir: &Path, scripts: Option<&Path>) -> anyhow::Result<String> {
    let log = load_log(log_dir)?;
    let scripts = load_scripts(scripts)?;
    let report = replay_until(&log, scripts.as_ref(), None)?;
    Ok(report.snapshot().to_canonical_json())
}

/// Canvas PNG as of record `at` (inclusive).
pub fn render_at(log_dir: &Path, at: u64, scale: f64) -> anyhow::Result<Vec<u8>> {
    let log = load_log(log_dir)?;
    let last = log.records().last().map_or(0, |r| r.seq);
    anyhow::ensure!(at <= last, "seq {at} is past the end of the log (last is {last})");
    let report = replay_until(&log, None, Some(at))?;
    let state = &report.state;
    let image = state.canvas.rasterize(scale, &state.artifacts)?;
    Ok(image.png().to_vec())
}

/// Runs a scenario against mock providers on a manual clock, persisting
/// the log to `out_dir`.
pub fn simulate(
    scenario: &Path,
    scripts: Option<&Path>,
    out_dir: &Path,
    settings: SessionSettings,
) -> anyhow::Result<SessionSnapshot> {
    let text = std::fs::read_to_string(scenario)
        .with_context(|| format!("reading scenario {}", scenario.display()))?;
    let steps = parse_scenario(&text)?;
    let mock = Arc::new(MockProvider::new(load_scripts(scripts)?.unwrap_or_default()));
    let clock = ManualClock::new();
    let options = HostOptions {
        clock: Arc::new(clock.clone()),
        log_dir: Some(out_dir.to_path_buf()),
        gallery: Some(Arc::new(Mutex::new(Gallery::in_memory()))),
        ..HostOptions::default()
    };
    let mut host = SessionHost::create("sim", settings, Providers::from_mock(mock), options)?;
    run_scenario(&mut host, &steps, &mut |ms| clock.advance(ms));
    Ok(host.snapshot())
}
