//! `report`: aggregate metrics, run the pairwise tests and emit trace files.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;

use groupnav_core::evaluation::{build_report, TrialMetrics};
use groupnav_core::grouping::{cluster_groups, group_spaces, index_states};
use groupnav_core::simulator::TrialRecord;
use groupnav_core::PolicyKind;

use crate::fsio::{files_below, read_json, write_atomic};

/// Robot position and ground-truth group outlines per recorded step, as
/// `step,kind,group,vertex,x,y` rows.
pub fn trace_csv(record: &TrialRecord) -> String {
    let mut out = String::from("step,kind,group,vertex,x,y\n");
    for snap in &record.snapshots {
        let t = snap.time_index;
        if let Some(r) = snap.robot {
            writeln!(out, "{t},robot,,,{},{}", r.position.x, r.position.y).unwrap();
        }
        let groups = cluster_groups(&snap.agents, &record.config.grouping);
        let spaces = group_spaces(
            &groups,
            &index_states(&snap.agents),
            &record.config.grouping,
        );
        for s in spaces {
            for (i, v) in s.polygon.vertices().iter().enumerate() {
                writeln!(out, "{t},hull,{},{i},{},{}", s.label, v.x, v.y).unwrap();
            }
        }
    }
    out
}

pub fn report(out: &Path, policies: &[PolicyKind]) -> Result<()> {
    let dir = out.join("report");
    let mut metrics: Vec<TrialMetrics> = Vec::new();
    for f in files_below(&out.join("metrics"), "json")? {
        metrics.push(read_json(&f)?);
    }
    if metrics.is_empty() {
        let notice = format!(
            "no trial metrics under {}; the report is empty\n",
            out.join("metrics").display()
        );
        write_atomic(&dir.join("table.txt"), notice.as_bytes())?;
        print!("{notice}");
        return Ok(());
    }
    let rep = build_report(&metrics, policies);
    write_atomic(&dir.join("aggregates.csv"), rep.aggregates_csv().as_bytes())?;
    write_atomic(&dir.join("tests.csv"), rep.tests_csv().as_bytes())?;
    let table = rep.table();
    write_atomic(&dir.join("table.txt"), table.as_bytes())?;
    print!("{table}");

    let records_root = out.join("records");
    for f in files_below(&records_root, "json")? {
        let record: TrialRecord = read_json(&f)?;
        let rel = f.strip_prefix(&records_root)?.with_extension("csv");
        write_atomic(&dir.join("traces").join(rel), trace_csv(&record).as_bytes())?;
    }
    Ok(())
}
