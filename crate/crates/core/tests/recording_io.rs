use std::io::Write;
use std::process::Command;

use groupnav_core::simulator::synthetic::crossing_scenario;
use groupnav_core::world::{load_recording, resample, write_recording, DatasetFormat};

fn awk_available() -> bool {
    Command::new("awk")
        .arg("BEGIN{}")
        .status()
        .is_ok_and(|s| s.success())
}

#[test]
fn written_recording_loads_back_unchanged() {
    let scenario = crossing_scenario(4, 6, 0.4);
    let mut file = tempfile::NamedTempFile::new().unwrap();
    write_recording(&scenario.recording, &mut file).unwrap();
    file.flush().unwrap();

    let loaded = load_recording(file.path(), DatasetFormat::FramePedXy, "synthetic", 0.4).unwrap();
    assert_eq!(loaded.frames.len(), scenario.recording.frames.len());
    assert_eq!(loaded.agent_ids(), scenario.recording.agent_ids());
    for (a, b) in loaded.frames.iter().zip(&scenario.recording.frames) {
        assert_eq!(a.frame_id, b.frame_id);
        for (p, q) in a.agents.iter().zip(&b.agents) {
            assert_eq!(p.id, q.id);
            assert!(p.position.distance(q.position) < 1e-9);
        }
    }
}

#[test]
fn loader_agrees_with_awk_audit() {
    if !awk_available() {
        eprintln!("awk not found, skipping audit");
        return;
    }
    let scenario = crossing_scenario(9, 6, 0.4);
    let mut file = tempfile::NamedTempFile::new().unwrap();
    write_recording(&scenario.recording, &mut file).unwrap();
    file.flush().unwrap();

    let out = Command::new("awk")
        .arg(
            "{ if (!($2 in seen)) { seen[$2] = 1; n++ } \
             if (min == \"\" || $1 < min) min = $1; if (max == \"\" || $1 > max) max = $1 } \
             END { print n, min, max }",
        )
        .arg(file.path())
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<i64> = text
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();

    let loaded = load_recording(file.path(), DatasetFormat::FramePedXy, "synthetic", 0.4).unwrap();
    assert_eq!(fields[0] as usize, loaded.agent_ids().len());
    assert_eq!(fields[1], loaded.frames.first().unwrap().frame_id);
    assert_eq!(fields[2], loaded.frames.last().unwrap().frame_id);

    let span = (fields[2] - fields[1]) / loaded.frame_step;
    let snapshots = resample(&loaded, 0.1);
    assert_eq!(snapshots.len() as i64, span * 4 + 1);
}
