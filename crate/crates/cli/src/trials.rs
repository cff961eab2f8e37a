//! `make-trials`: segment each scene into trials and write one list per
//! scene and task.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use groupnav_core::simulator::{extract_trials, Condition, Perception, Task, TrialSpec};
use groupnav_core::world::{load_recording, resample, WorldSnapshot};

use crate::config::{RunConfig, SceneConfig};
use crate::fsio::{json_files, read_json, write_atomic, write_json};

pub fn trials_dir(out: &Path) -> PathBuf {
    out.join("trials")
}

/// Loads a scene's recording and resamples it to the control step.
pub fn scene_snapshots(scene: &SceneConfig, dt: f64) -> Result<Vec<WorldSnapshot>> {
    let rec = load_recording(
        &scene.dataset,
        scene.format,
        &scene.name,
        scene.frame_interval,
    )
    .with_context(|| format!("scene {}", scene.name))?;
    Ok(resample(&rec, dt))
}

pub fn make_trials(cfg: &RunConfig, condition: Condition, perception: Perception) -> Result<()> {
    let dir = trials_dir(&cfg.out);
    let mut counts: BTreeMap<String, [usize; 2]> = BTreeMap::new();
    for scene in &cfg.scenes {
        let snaps = scene_snapshots(scene, cfg.world.dt)?;
        for t in scene.tasks() {
            let specs = extract_trials(
                &snaps,
                &scene.name,
                &scene.region,
                &[t],
                &cfg.segmentation,
                condition,
                perception,
            );
            let slot = usize::from(t.task == Task::Cross);
            counts.entry(scene.name.clone()).or_default()[slot] = specs.len();
            write_json(
                &dir.join(format!("{}_{}.json", scene.name, t.task.name())),
                &specs,
            )?;
        }
    }
    let mut csv = String::from("scene,flow,cross\n");
    let mut table = format!("{:<10} {:>6} {:>6}\n", "scene", "flow", "cross");
    for (scene, [flow, cross]) in &counts {
        writeln!(csv, "{scene},{flow},{cross}").unwrap();
        writeln!(table, "{scene:<10} {flow:>6} {cross:>6}").unwrap();
    }
    write_atomic(&dir.join("counts.csv"), csv.as_bytes())?;
    print!("{table}");
    Ok(())
}

/// Every trial list under the output directory, in file order.
pub fn load_trials(out: &Path) -> Result<Vec<TrialSpec>> {
    let dir = trials_dir(out);
    let files = json_files(&dir)?;
    if files.is_empty() {
        anyhow::bail!("no trial lists in {}; run make-trials first", dir.display());
    }
    let mut all = Vec::new();
    for f in files {
        let specs: Vec<TrialSpec> = read_json(&f)?;
        all.extend(specs);
    }
    Ok(all)
}
