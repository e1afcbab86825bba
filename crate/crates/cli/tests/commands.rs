use std::path::PathBuf;
use std::process::Command;

use sketchvox_cli::commands;
use sketchvox_core::session::{EventLog, SessionSettings, EVENTS_FILE};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn simulated() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let snap = commands::simulate(
        &fixture("walkthrough.ndjson"),
        Some(&fixture("walkthrough_scripts.json")),
        dir.path(),
        SessionSettings::default(),
    )
    .unwrap();
    (dir, snap.to_canonical_json())
}

fn png_size(bytes: &[u8]) -> (u32, u32) {
    let reader = png::Decoder::new(std::io::Cursor::new(bytes)).read_info().unwrap();
    let info = reader.info();
    (info.width, info.height)
}

#[test]
fn simulated_log_replays_to_the_same_snapshot() {
    let (dir, live) = simulated();
    assert!(dir.path().join(EVENTS_FILE).exists());
    let replayed =
        commands::replay_log(dir.path(), Some(&fixture("walkthrough_scripts.json"))).unwrap();
    assert_eq!(replayed, live);
    assert_eq!(commands::replay_log(dir.path(), None).unwrap(), live);
}

#[test]
fn render_at_tracks_the_log() {
    let (dir, _) = simulated();
    let log = EventLog::read_dir(dir.path()).unwrap();
    let first = commands::render_at(dir.path(), 0, 1.0).unwrap();
    assert_eq!(png_size(&first), (1024, 768));
    let last_seq = log.records().last().unwrap().seq;
    let last = commands::render_at(dir.path(), last_seq, 0.5).unwrap();
    assert_eq!(png_size(&last), (512, 384));
    assert_ne!(
        commands::render_at(dir.path(), last_seq, 1.0).unwrap(),
        first,
        "the walkthrough draws something"
    );
    assert!(commands::render_at(dir.path(), last_seq + 1, 1.0).is_err());
}

#[test]
fn replay_reports_a_gap() {
    let (dir, _) = simulated();
    let path = dir.path().join(EVENTS_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().enumerate().filter(|(i, _)| *i != 3).map(|(_, l)| l).collect();
    std::fs::write(&path, kept.join("\n") + "\n").unwrap();
    let err = commands::replay_log(dir.path(), None).unwrap_err();
    assert!(format!("{err:#}").contains("corrupt log at seq 3"), "{err:#}");
}

#[test]
fn binary_round_trip() {
    let bin = env!("CARGO_BIN_EXE_sketchvox");
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log");
    let sim = Command::new(bin)
        .args(["simulate", "--out"])
        .arg(&log)
        .arg(fixture("walkthrough.ndjson"))
        .arg("--scripts")
        .arg(fixture("walkthrough_scripts.json"))
        .env_remove("SKETCHVOX_CONFIG")
        .output()
        .unwrap();
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));

    let replay = Command::new(bin)
        .arg("replay")
        .arg(&log)
        .arg(fixture("walkthrough_scripts.json"))
        .output()
        .unwrap();
    assert!(replay.status.success(), "{}", String::from_utf8_lossy(&replay.stderr));
    assert_eq!(replay.stdout, sim.stdout);

    let out = dir.path().join("at5.png");
    let render = Command::new(bin)
        .arg("render")
        .arg(&log)
        .args(["--at", "5", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(render.status.success(), "{}", String::from_utf8_lossy(&render.stderr));
    assert_eq!(png_size(&std::fs::read(&out).unwrap()), (1024, 768));
}

#[test]
fn config_comes_from_the_environment() {
    let bin = env!("CARGO_BIN_EXE_sketchvox");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sv.toml");
    std::fs::write(&cfg, "[session]\ncanvas_width = 0\n").unwrap();
    let out = Command::new(bin)
        .args(["simulate", "--out"])
        .arg(dir.path().join("log"))
        .arg(fixture("walkthrough.ndjson"))
        .env("SKETCHVOX_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("canvas size"));
}
