//! Per-trial metrics and cross-policy comparison.

pub mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::grouping::{cluster_groups, group_spaces, index_states, GroupingConfig};
use crate::planner::{signed_obstacle_distance, PolicyKind};
use crate::simulator::{
    nearest_agent_distance, Condition, Perception, Task, Termination, TrialRecord,
};

pub use stats::{mann_whitney_u, stars, MannWhitney, PValueMethod};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trial_id: String,
    pub scene: String,
    pub task: Task,
    pub condition: Condition,
    pub perception: Perception,
    pub policy: PolicyKind,
    pub termination: Termination,
    pub success: bool,
    /// No ground-truth group intrusion and no collision.
    pub comfort: bool,
    /// `None` when no pedestrian was ever present.
    pub min_ped_distance: Option<f64>,
    pub path_length: f64,
    /// Smallest signed distance to a ground-truth group boundary, negative
    /// when inside. `None` when no group was ever present.
    pub min_group_clearance: Option<f64>,
    pub steps: usize,
}

pub fn path_length(trace: &[Vec2]) -> f64 {
    trace.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Scores a full (unthinned) record. Group spaces are rebuilt from the
/// ground-truth states at `grouping.c`, without shrinking.
pub fn score_trial(record: &TrialRecord, grouping: &GroupingConfig) -> TrialMetrics {
    let mut intruded = false;
    let mut min_ped: Option<f64> = None;
    let mut clearance: Option<f64> = None;
    for snap in &record.snapshots {
        let Some(robot) = snap.robot.map(|r| r.position) else {
            continue;
        };
        if let Some(d) = nearest_agent_distance(robot, &snap.agents) {
            min_ped = Some(min_ped.map_or(d, |m| m.min(d)));
        }
        if snap.agents.is_empty() {
            continue;
        }
        let groups = cluster_groups(&snap.agents, grouping);
        let spaces = group_spaces(&groups, &index_states(&snap.agents), grouping);
        intruded |= spaces.iter().any(|s| s.polygon.contains_strict(robot));
        let polys: Vec<_> = spaces.into_iter().map(|s| s.polygon).collect();
        let d = signed_obstacle_distance(robot, &polys);
        clearance = Some(clearance.map_or(d, |c| c.min(d)));
    }
    let collided = record.termination == Termination::Collision;
    TrialMetrics {
        trial_id: record.spec.id(),
        scene: record.spec.scene.clone(),
        task: record.spec.task,
        condition: record.spec.condition,
        perception: record.spec.perception,
        policy: record.policy,
        termination: record.termination,
        success: record.termination == Termination::Success,
        comfort: !intruded && !collided,
        min_ped_distance: min_ped,
        path_length: path_length(&record.robot_trace),
        min_group_clearance: clearance,
        steps: record.steps(),
    }
}

/// A (scene, task, condition, perception) combination.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub scene: String,
    pub task: Task,
    pub condition: Condition,
    pub perception: Perception,
}

impl CellKey {
    pub fn of(m: &TrialMetrics) -> Self {
        Self {
            scene: m.scene.clone(),
            task: m.task,
            condition: m.condition,
            perception: m.perception,
        }
    }

    fn csv_fields(&self) -> [&str; 4] {
        [
            &self.scene,
            self.task.name(),
            self.condition.name(),
            self.perception.name(),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestedMetric {
    MinDistance,
    PathLength,
}

impl TestedMetric {
    pub fn name(self) -> &'static str {
        match self {
            TestedMetric::MinDistance => "min_distance",
            TestedMetric::PathLength => "path_length",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; `None` below two samples.
    pub sd: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = (n > 1).then(|| {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Some(Self { n, mean, sd })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub cell: CellKey,
    pub policy: PolicyKind,
    pub trials: usize,
    /// Percent.
    pub success_rate: f64,
    /// Percent.
    pub comfort_rate: f64,
    pub min_distance: Option<Summary>,
    pub path_length: Option<Summary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub cell: CellKey,
    pub metric: TestedMetric,
    pub policy_a: PolicyKind,
    pub policy_b: PolicyKind,
    pub n_a: usize,
    pub n_b: usize,
    pub u: f64,
    pub p: f64,
    pub stars: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub aggregates: Vec<CellAggregate>,
    pub tests: Vec<PairwiseTest>,
    /// Requested policies with no trials in a cell that other policies have.
    pub missing: Vec<(CellKey, PolicyKind)>,
}

fn samples(ms: &[&TrialMetrics], metric: TestedMetric) -> Vec<f64> {
    match metric {
        TestedMetric::MinDistance => ms.iter().filter_map(|m| m.min_ped_distance).collect(),
        TestedMetric::PathLength => ms.iter().map(|m| m.path_length).collect(),
    }
}

/// Aggregates per cell and policy, and tests every policy pair within a cell
/// on min distance and path length. Policies are `policies` in that order,
/// or every policy present when empty.
pub fn build_report(metrics: &[TrialMetrics], policies: &[PolicyKind]) -> ComparisonReport {
    let mut by_cell: BTreeMap<CellKey, BTreeMap<PolicyKind, Vec<&TrialMetrics>>> = BTreeMap::new();
    for m in metrics {
        by_cell
            .entry(CellKey::of(m))
            .or_default()
            .entry(m.policy)
            .or_default()
            .push(m);
    }
    let order: Vec<PolicyKind> = if policies.is_empty() {
        metrics
            .iter()
            .map(|m| m.policy)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    } else {
        policies.to_vec()
    };
    let mut report = ComparisonReport::default();
    for (cell, per_policy) in &by_cell {
        let present: Vec<(PolicyKind, &Vec<&TrialMetrics>)> = order
            .iter()
            .filter_map(|p| per_policy.get(p).map(|v| (*p, v)))
            .collect();
        for p in &order {
            if !per_policy.contains_key(p) {
                report.missing.push((cell.clone(), *p));
            }
        }
        for (policy, ms) in &present {
            let n = ms.len();
            let rate = |f: fn(&TrialMetrics) -> bool| {
                100.0 * ms.iter().filter(|m| f(m)).count() as f64 / n as f64
            };
            report.aggregates.push(CellAggregate {
                cell: cell.clone(),
                policy: *policy,
                trials: n,
                success_rate: rate(|m| m.success),
                comfort_rate: rate(|m| m.comfort),
                min_distance: Summary::of(&samples(ms, TestedMetric::MinDistance)),
                path_length: Summary::of(&samples(ms, TestedMetric::PathLength)),
            });
        }
        for (i, (pa, ma)) in present.iter().enumerate() {
            for (pb, mb) in &present[i + 1..] {
                for metric in [TestedMetric::MinDistance, TestedMetric::PathLength] {
                    let (a, b) = (samples(ma, metric), samples(mb, metric));
                    let Ok(r) = mann_whitney_u(&a, &b) else {
                        continue;
                    };
                    report.tests.push(PairwiseTest {
                        cell: cell.clone(),
                        metric,
                        policy_a: *pa,
                        policy_b: *pb,
                        n_a: a.len(),
                        n_b: b.len(),
                        u: r.u_a,
                        p: r.p,
                        stars: stars(r.p).to_string(),
                    });
                }
            }
        }
    }
    report
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

impl ComparisonReport {
    pub fn is_empty(&self) -> bool {
        self.aggregates.is_empty()
    }

    /// One row per cell, policy and metric.
    pub fn aggregates_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "scene",
            "task",
            "condition",
            "perception",
            "policy",
            "metric",
            "n",
            "mean",
            "sd",
        ])
        .expect("in-memory write");
        for a in &self.aggregates {
            let mut row = |metric: &str, n: usize, mean: String, sd: String| {
                let [s, t, c, p] = a.cell.csv_fields();
                w.write_record([
                    s,
                    t,
                    c,
                    p,
                    a.policy.name(),
                    metric,
                    &n.to_string(),
                    &mean,
                    &sd,
                ])
                .expect("in-memory write");
            };
            row(
                "success_rate",
                a.trials,
                format!("{}", a.success_rate),
                String::new(),
            );
            row(
                "comfort_rate",
                a.trials,
                format!("{}", a.comfort_rate),
                String::new(),
            );
            for (name, s) in [
                ("min_distance", &a.min_distance),
                ("path_length", &a.path_length),
            ] {
                row(
                    name,
                    s.map_or(0, |s| s.n),
                    opt(s.map(|s| s.mean)),
                    opt(s.and_then(|s| s.sd)),
                );
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn tests_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "scene",
            "task",
            "condition",
            "perception",
            "metric",
            "policy_a",
            "policy_b",
            "n_a",
            "n_b",
            "u",
            "p",
            "stars",
        ])
        .expect("in-memory write");
        for t in &self.tests {
            let [s, k, c, p] = t.cell.csv_fields();
            w.write_record([
                s,
                k,
                c,
                p,
                t.metric.name(),
                t.policy_a.name(),
                t.policy_b.name(),
                &t.n_a.to_string(),
                &t.n_b.to_string(),
                &format!("{}", t.u),
                &format!("{}", t.p),
                &t.stars,
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    /// Plain-text table, one block per cell.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let mut cells: Vec<&CellKey> = self.aggregates.iter().map(|a| &a.cell).collect();
        cells.dedup();
        for cell in cells {
            let _ = writeln!(
                out,
                "{} / {} / {} / {}",
                cell.scene,
                cell.task.name(),
                cell.condition.name(),
                cell.perception.name()
            );
            let _ = writeln!(
                out,
                "  {:<14} {:>5} {:>8} {:>8} {:>16} {:>16}",
                "policy", "n", "S (%)", "C (%)", "D (m)", "L (m)"
            );
            let fmt = |s: &Option<Summary>| match s {
                Some(Summary {
                    mean, sd: Some(sd), ..
                }) => format!("{mean:.2} ± {sd:.2}"),
                Some(Summary { mean, sd: None, .. }) => format!("{mean:.2}"),
                None => "-".into(),
            };
            for a in self.aggregates.iter().filter(|a| &a.cell == cell) {
                let _ = writeln!(
                    out,
                    "  {:<14} {:>5} {:>8.1} {:>8.1} {:>16} {:>16}",
                    a.policy.name(),
                    a.trials,
                    a.success_rate,
                    a.comfort_rate,
                    fmt(&a.min_distance),
                    fmt(&a.path_length)
                );
            }
            for t in self
                .tests
                .iter()
                .filter(|t| &t.cell == cell && !t.stars.is_empty())
            {
                let _ = writeln!(
                    out,
                    "  {} {} vs {}: p = {:.4} {}",
                    t.metric.name(),
                    t.policy_a.name(),
                    t.policy_b.name(),
                    t.p,
                    t.stars
                );
            }
            for (_, p) in self.missing.iter().filter(|(c, _)| c == cell) {
                let _ = writeln!(out, "  {:<14} missing", p.name());
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::simulator::{SimConfig, TrialSpec, ROBOT_ID};
    use crate::world::{AgentId, AgentState, AugmentedAgentState, WorldSnapshot};
    use proptest::prelude::*;

    fn metrics(policy: PolicyKind, success: bool, d: f64, l: f64) -> TrialMetrics {
        TrialMetrics {
            trial_id: "t".into(),
            scene: "eth".into(),
            task: Task::Flow,
            condition: Condition::Offline,
            perception: Perception::GroundTruth,
            policy,
            termination: if success {
                Termination::Success
            } else {
                Termination::Timeout
            },
            success,
            comfort: success,
            min_ped_distance: Some(d),
            path_length: l,
            min_group_clearance: None,
            steps: 10,
        }
    }

    fn record(
        trace: Vec<Vec2>,
        agents: Vec<AugmentedAgentState>,
        termination: Termination,
    ) -> TrialRecord {
        let snapshots = trace
            .iter()
            .enumerate()
            .map(|(k, &p)| WorldSnapshot {
                time_index: k,
                robot: Some(AgentState {
                    id: ROBOT_ID,
                    position: p,
                }),
                agents: agents.clone(),
            })
            .collect();
        TrialRecord {
            spec: TrialSpec {
                scene: "s".into(),
                task: Task::Flow,
                start: trace[0],
                goal: *trace.last().unwrap(),
                segment: [0, 0],
                condition: Condition::Offline,
                perception: Perception::GroundTruth,
            },
            policy: PolicyKind::GroupPred,
            seed: 0,
            timeout_steps: 1000,
            robot_trace: trace,
            snapshots,
            termination,
            config: SimConfig::default(),
        }
    }

    fn walker(id: u64, x: f64, y: f64) -> AugmentedAgentState {
        AugmentedAgentState::from_velocity(AgentId(id), Vec2::new(x, y), Vec2::new(1.0, 0.0))
    }

    #[test]
    fn straight_run_path_length() {
        let trace: Vec<Vec2> = (0..=100).map(|k| Vec2::new(0.1 * k as f64, 0.0)).collect();
        let m = score_trial(
            &record(trace, vec![], Termination::Success),
            &GroupingConfig::open_scene(),
        );
        assert!((m.path_length - 10.0).abs() < 1e-9);
        assert!(m.success && m.comfort);
        assert_eq!(m.min_ped_distance, None);
    }

    #[test]
    fn collision_is_never_comfortable() {
        let trace = vec![Vec2::ZERO, Vec2::new(0.1, 0.0)];
        let m = score_trial(
            &record(trace, vec![walker(1, 0.4, 5.0)], Termination::Collision),
            &GroupingConfig::open_scene(),
        );
        assert!(!m.success && !m.comfort);
    }

    #[test]
    fn intrusion_breaks_comfort() {
        let trace = vec![
            Vec2::new(-3.0, 0.0),
            Vec2::new(0.0, 0.0),
            Vec2::new(3.0, 0.0),
        ];
        let agents = vec![walker(1, 0.0, 0.6), walker(2, 0.0, -0.6)];
        let m = score_trial(
            &record(trace, agents, Termination::Success),
            &GroupingConfig::open_scene(),
        );
        assert!(m.success && !m.comfort);
        assert!(m.min_group_clearance.unwrap() < 0.0);
        assert!((m.min_ped_distance.unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn success_rate_and_means() {
        let ms = vec![
            metrics(PolicyKind::GroupPred, true, 1.0, 10.0),
            metrics(PolicyKind::GroupPred, true, 2.0, 11.0),
            metrics(PolicyKind::GroupPred, false, 3.0, 12.0),
            metrics(PolicyKind::GroupPred, true, 4.0, 13.0),
        ];
        let r = build_report(&ms, &[]);
        assert_eq!(r.aggregates.len(), 1);
        assert_eq!(r.aggregates[0].success_rate, 75.0);
        assert_eq!(r.aggregates[0].min_distance.unwrap().mean, 2.5);
        assert!(r.tests.is_empty());
    }

    #[test]
    fn single_trial_means_equal_values() {
        let r = build_report(&[metrics(PolicyKind::PedNopred, true, 1.5, 9.0)], &[]);
        let a = &r.aggregates[0];
        assert_eq!(
            (a.min_distance.unwrap().mean, a.path_length.unwrap().mean),
            (1.5, 9.0)
        );
        assert!(r.tests.is_empty());
    }

    #[test]
    fn identical_policies_are_not_significant() {
        let mut ms = Vec::new();
        for k in 0..5 {
            for p in [PolicyKind::PedNopred, PolicyKind::GroupPred] {
                ms.push(metrics(p, true, 1.0 + k as f64, 10.0 + k as f64));
            }
        }
        let r = build_report(&ms, &[]);
        assert_eq!(r.tests.len(), 2);
        assert!(r.tests.iter().all(|t| t.p == 1.0 && t.stars.is_empty()));
    }

    #[test]
    fn dominating_policy_is_starred() {
        let mut ms = Vec::new();
        for k in 0..20 {
            ms.push(metrics(
                PolicyKind::GroupPred,
                true,
                2.0 + 0.01 * k as f64,
                10.0,
            ));
            ms.push(metrics(
                PolicyKind::PedNopred,
                true,
                1.0 + 0.01 * k as f64,
                10.0,
            ));
        }
        let r = build_report(&ms, &[PolicyKind::PedNopred, PolicyKind::GroupPred]);
        let t = r
            .tests
            .iter()
            .find(|t| t.metric == TestedMetric::MinDistance)
            .unwrap();
        assert_eq!(t.stars, stars(t.p));
        assert_eq!(t.stars, "***");
        let d = |p| {
            r.aggregates
                .iter()
                .find(|a| a.policy == p)
                .unwrap()
                .min_distance
                .unwrap()
                .mean
        };
        assert!(d(PolicyKind::GroupPred) > d(PolicyKind::PedNopred));
    }

    #[test]
    fn missing_cells_are_reported() {
        let r = build_report(
            &[metrics(PolicyKind::GroupPred, true, 1.0, 1.0)],
            &[PolicyKind::PedNopred, PolicyKind::GroupPred],
        );
        assert_eq!(r.missing.len(), 1);
        assert_eq!(r.missing[0].1, PolicyKind::PedNopred);
        assert!(r.table().contains("missing"));
    }

    #[test]
    fn csv_rows_per_metric() {
        let r = build_report(
            &[
                metrics(PolicyKind::GroupPred, true, 1.0, 1.0),
                metrics(PolicyKind::PedLinear, true, 2.0, 1.0),
            ],
            &[],
        );
        assert_eq!(r.aggregates_csv().lines().count(), 1 + 2 * 4);
        assert_eq!(r.tests_csv().lines().count(), 1 + 2);
    }

    proptest! {
        #[test]
        fn comfort_is_anti_monotone_in_scale(
            y in -2.0f64..2.0, gap in 0.6f64..1.6, c_small in 0.05f64..0.3, extra in 0.0f64..0.3,
        ) {
            let trace = vec![Vec2::new(-3.0, y), Vec2::new(0.0, y), Vec2::new(3.0, y)];
            let agents = vec![walker(1, 0.0, gap / 2.0), walker(2, 0.0, -gap / 2.0)];
            let rec = record(trace, agents, Termination::Success);
            let small = GroupingConfig::open_scene().with_c(c_small);
            let large = GroupingConfig::open_scene().with_c(c_small + extra);
            if !score_trial(&rec, &small).comfort {
                prop_assert!(!score_trial(&rec, &large).comfort);
            }
        }
    }
}
