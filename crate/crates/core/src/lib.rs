//! Group-aware crowd navigation: pedestrian grouping, group-space forecasting,
//! a sampling MPC planner over forecast group spaces, and the simulation and
//! scoring harness around them.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod grouping;
pub mod planner;
pub mod prediction;
pub mod simulator;
pub mod world;

pub use error::{Error, Result};
pub use evaluation::{build_report, score_trial, ComparisonReport, TrialMetrics};
pub use geometry::{Polygon, Vec2};
pub use grouping::{cluster_groups, Group, GroupSpace, GroupSpaceSequence, GroupingConfig};
pub use planner::{GoalCostRule, PlanResult, Planner, PlannerConfig, PolicyKind};
pub use prediction::{
    ExternalOracle, GroupSpaceOracle, HoldOracle, LinearOracle, OracleConfig, OracleKind,
};
pub use simulator::{
    run_trial, Condition, Perception, SimConfig, Task, Termination, TrialRecord, TrialSpec,
};
pub use world::{AgentId, AugmentedAgentState, Recording, WorldConfig, WorldSnapshot};
