//! `eval-prediction`: score group-space oracles on each scene's recording.

use std::fmt::Write as _;

use anyhow::{bail, Result};

use groupnav_core::prediction::{
    sample_prediction_windows, score_oracle, GroupSpaceOracle, HoldOracle, LinearOracle,
    OracleKind, PredictionScore,
};
use groupnav_core::world::{load_recording, resample};

use crate::config::RunConfig;
use crate::fsio::write_atomic;

fn oracle_name(kind: OracleKind) -> &'static str {
    match kind {
        OracleKind::Linear => "linear",
        OracleKind::Hold => "hold",
        OracleKind::External => "external",
    }
}

/// Scores per oracle and scene, `None` where a scene has no qualifying
/// group window.
pub type PredictionTable = Vec<(OracleKind, Vec<(String, Option<PredictionScore>)>)>;

/// Windows are sampled at each scene's own frame interval, the time base
/// the history and horizon lengths are defined on.
pub fn eval_prediction(
    cfg: &RunConfig,
    kinds: &[OracleKind],
    seed: u64,
) -> Result<PredictionTable> {
    let mut table: PredictionTable = kinds.iter().map(|&k| (k, Vec::new())).collect();
    for scene in &cfg.scenes {
        let rec = load_recording(
            &scene.dataset,
            scene.format,
            &scene.name,
            scene.frame_interval,
        )?;
        let snaps = resample(&rec, scene.frame_interval);
        let windows = sample_prediction_windows(
            &snaps,
            &cfg.grouping_for(scene),
            cfg.oracle.history_len,
            cfg.oracle.horizon,
            cfg.prediction.samples,
            seed,
        );
        for (kind, row) in &mut table {
            let oracle: &dyn GroupSpaceOracle = match kind {
                OracleKind::Linear => &LinearOracle,
                OracleKind::Hold => &HoldOracle,
                OracleKind::External => bail!(
                    "the external oracle is keyed by trial and step; it cannot score recordings"
                ),
            };
            let score = score_oracle(
                oracle,
                &windows,
                scene.frame_interval,
                cfg.prediction.resolution,
            )?;
            row.push((scene.name.clone(), score));
        }
    }
    Ok(table)
}

pub fn render(table: &PredictionTable) -> (String, String) {
    let mut csv = String::from("oracle,scene,windows,miou,fiou\n");
    let mut text = String::new();
    if let Some((_, row)) = table.first() {
        write!(text, "{:<10}", "oracle").unwrap();
        for (scene, _) in row {
            write!(text, " {:>15}", scene).unwrap();
        }
        text.push('\n');
        write!(text, "{:<10}", "").unwrap();
        for _ in row {
            write!(text, " {:>15}", "mIoU / fIoU").unwrap();
        }
        text.push('\n');
    }
    for (kind, row) in table {
        write!(text, "{:<10}", oracle_name(*kind)).unwrap();
        for (scene, score) in row {
            match score {
                Some(s) => {
                    writeln!(
                        csv,
                        "{},{scene},{},{:.6},{:.6}",
                        oracle_name(*kind),
                        s.windows,
                        s.miou,
                        s.fiou
                    )
                    .unwrap();
                    write!(
                        text,
                        " {:>15}",
                        format!("{:.2} / {:.2}", 100.0 * s.miou, 100.0 * s.fiou)
                    )
                    .unwrap();
                }
                None => {
                    writeln!(csv, "{},{scene},0,,", oracle_name(*kind)).unwrap();
                    write!(text, " {:>15}", "-").unwrap();
                }
            }
        }
        text.push('\n');
    }
    (csv, text)
}

pub fn run(cfg: &RunConfig, kinds: &[OracleKind], seed: u64) -> Result<()> {
    let table = eval_prediction(cfg, kinds, seed)?;
    let (csv, text) = render(&table);
    let dir = cfg.out.join("prediction");
    write_atomic(&dir.join("scores.csv"), csv.as_bytes())?;
    write_atomic(&dir.join("table.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}
