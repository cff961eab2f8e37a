//! Trial extraction and closed-loop execution.
//!
//! A trial replays a segment of a resampled recording around a robot that
//! plans every step. Pedestrians either follow the recording (offline) or are
//! re-simulated with ORCA between their recorded entry and exit points
//! (online). The planner sees ground truth or the output of the lidar
//! front-end.

pub mod lidar;
pub mod orca;
pub mod synthetic;

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::grouping::GroupingConfig;
use crate::planner::{Planner, PlannerConfig, PolicyKind};
use crate::prediction::{ForecastContext, GroupSpaceOracle, OracleConfig};
use crate::world::{AgentId, AgentState, AugmentedAgentState, WorldConfig, WorldSnapshot};

use lidar::{simulate_lidar_with_rng, LidarConfig, PedestrianTracker, Pose};
use orca::{step_orca_agents, OrcaAgent, OrcaConfig, OrcaObstacle};

/// Id under which the robot appears in recorded snapshots.
pub const ROBOT_ID: AgentId = AgentId(u64::MAX);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Flow,
    Cross,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Flow => "flow",
            Task::Cross => "cross",
        }
    }
}

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// Pedestrians replay the recording and ignore the robot.
    #[default]
    Offline,
    /// Pedestrians run ORCA toward their recorded exit points.
    Online,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Offline => "offline",
            Condition::Online => "online",
        }
    }
}

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum Perception {
    #[default]
    GroundTruth,
    Lidar,
}

impl Perception {
    pub fn name(self) -> &'static str {
        match self {
            Perception::GroundTruth => "ground-truth",
            Perception::Lidar => "lidar",
        }
    }
}

/// Axis-aligned rectangle, meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestRegion {
    pub min: Vec2,
    pub max: Vec2,
}

impl TestRegion {
    pub fn new(min: Vec2, max: Vec2) -> Result<Self> {
        if max.x > min.x && max.y > min.y {
            Ok(Self { min, max })
        } else {
            Err(Error::InvalidConfig(format!(
                "test region {min:?}..{max:?} has no area"
            )))
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskEndpoints {
    pub task: Task,
    pub start: Vec2,
    pub goal: Vec2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationParams {
    /// Agents that must be inside the region simultaneously.
    pub min_peds: usize,
    /// Shortest segment kept, frames.
    pub min_len: usize,
    /// Longer runs are cut into consecutive chunks of this many frames.
    pub max_len: Option<usize>,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            min_peds: 5,
            min_len: 1,
            max_len: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub scene: String,
    pub task: Task,
    pub start: Vec2,
    pub goal: Vec2,
    /// First and last snapshot index, inclusive, in the resampled recording.
    pub segment: [usize; 2],
    pub condition: Condition,
    pub perception: Perception,
}

impl TrialSpec {
    pub fn id(&self) -> String {
        format!(
            "{}_{}_{:06}_{:06}",
            self.scene,
            self.task.name(),
            self.segment[0],
            self.segment[1]
        )
    }

    pub fn validate(&self, n_snapshots: usize) -> Result<()> {
        if self.segment[0] > self.segment[1] || self.segment[1] >= n_snapshots {
            return Err(Error::InvalidConfig(format!(
                "trial {}: segment {:?} outside recording of {n_snapshots} frames",
                self.id(),
                self.segment
            )));
        }
        if self.start.distance(self.goal) < 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "trial {}: start equals goal",
                self.id()
            )));
        }
        Ok(())
    }
}

/// Maximal runs of frames with at least `min_peds` agents in `region`, as
/// inclusive index pairs.
pub fn dense_segments(
    snapshots: &[WorldSnapshot],
    region: &TestRegion,
    params: &SegmentationParams,
) -> Vec<[usize; 2]> {
    let dense: Vec<bool> = snapshots
        .iter()
        .map(|s| {
            s.agents
                .iter()
                .filter(|a| region.contains(a.position))
                .count()
                >= params.min_peds
        })
        .collect();
    let mut runs = Vec::new();
    let mut k = 0;
    while k < dense.len() {
        if !dense[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k < dense.len() && dense[k] {
            k += 1;
        }
        runs.push([start, k - 1]);
    }
    let min_len = params.min_len.max(1);
    let mut out = Vec::new();
    for [a, b] in runs {
        let chunk = params.max_len.unwrap_or(usize::MAX).max(1);
        let mut s = a;
        while s <= b {
            let e = b.min(s.saturating_add(chunk - 1));
            if e - s + 1 >= min_len {
                out.push([s, e]);
            }
            s = e + 1;
        }
    }
    out
}

/// One trial per dense segment per task.
pub fn extract_trials(
    snapshots: &[WorldSnapshot],
    scene: &str,
    region: &TestRegion,
    tasks: &[TaskEndpoints],
    params: &SegmentationParams,
    condition: Condition,
    perception: Perception,
) -> Vec<TrialSpec> {
    let segments = dense_segments(snapshots, region, params);
    tasks
        .iter()
        .flat_map(|t| {
            segments.iter().map(move |&segment| TrialSpec {
                scene: scene.to_string(),
                task: t.task,
                start: t.start,
                goal: t.goal,
                segment,
                condition,
                perception,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Success,
    Collision,
    Timeout,
}

/// Every parameter a trial depends on.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub world: WorldConfig,
    pub grouping: GroupingConfig,
    pub planner: PlannerConfig,
    pub oracle: OracleConfig,
    pub lidar: LidarConfig,
    pub orca: OrcaConfig,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.grouping.validate()?;
        self.planner.validate()?;
        self.oracle.validate()?;
        self.lidar.validate()?;
        self.orca.validate()?;
        if self.planner.horizon != self.oracle.horizon {
            return Err(Error::InvalidConfig(format!(
                "planner horizon {} differs from oracle horizon {}",
                self.planner.horizon, self.oracle.horizon
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub spec: TrialSpec,
    pub policy: PolicyKind,
    pub seed: u64,
    pub timeout_steps: usize,
    /// Robot position at every step, starting with the start point.
    pub robot_trace: Vec<Vec2>,
    /// Ground-truth world at every step, aligned with `robot_trace` unless
    /// thinned.
    pub snapshots: Vec<WorldSnapshot>,
    pub termination: Termination,
    pub config: SimConfig,
}

impl TrialRecord {
    pub fn steps(&self) -> usize {
        self.robot_trace.len() - 1
    }

    /// Keeps every `stride`-th snapshot and the last one.
    pub fn thinned(&self, stride: usize) -> Self {
        let stride = stride.max(1);
        let last = self.snapshots.len().saturating_sub(1);
        let snapshots = self
            .snapshots
            .iter()
            .enumerate()
            .filter(|(i, _)| i % stride == 0 || *i == last)
            .map(|(_, s)| s.clone())
            .collect();
        Self {
            snapshots,
            ..self.clone()
        }
    }
}

struct TrackInfo {
    first: usize,
    exit: Vec2,
    entry: Vec2,
    entry_velocity: Vec2,
    mean_speed: f64,
}

fn track_infos(snapshots: &[WorldSnapshot], dt: f64) -> BTreeMap<AgentId, TrackInfo> {
    let mut out: BTreeMap<AgentId, TrackInfo> = BTreeMap::new();
    let mut last_seen: BTreeMap<AgentId, (usize, Vec2, f64)> = BTreeMap::new();
    for (k, s) in snapshots.iter().enumerate() {
        for a in &s.agents {
            match last_seen.get_mut(&a.id) {
                Some((last, pos, len)) => {
                    *len += pos.distance(a.position);
                    *last = k;
                    *pos = a.position;
                }
                None => {
                    last_seen.insert(a.id, (k, a.position, 0.0));
                    out.insert(
                        a.id,
                        TrackInfo {
                            first: k,
                            exit: a.position,
                            entry: a.position,
                            entry_velocity: a.velocity,
                            mean_speed: 0.0,
                        },
                    );
                }
            }
        }
    }
    for (id, (last, pos, len)) in last_seen {
        let info = out.get_mut(&id).expect("seen");
        info.exit = pos;
        let duration = (last - info.first) as f64 * dt;
        info.mean_speed = if duration > 0.0 { len / duration } else { 0.0 };
    }
    out
}

/// Pedestrian side of the world during a trial.
enum Crowd<'a> {
    Replay {
        snapshots: &'a [WorldSnapshot],
        index: usize,
    },
    Reactive {
        agents: Vec<OrcaAgent>,
        /// Agents still to enter, by snapshot index.
        pending: VecDeque<(usize, OrcaAgent)>,
        index: usize,
    },
}

impl<'a> Crowd<'a> {
    fn new(spec: &TrialSpec, snapshots: &'a [WorldSnapshot], dt: f64) -> Self {
        let index = spec.segment[0];
        match spec.condition {
            Condition::Offline => Crowd::Replay { snapshots, index },
            Condition::Online => {
                let infos = track_infos(snapshots, dt);
                let agents = snapshots[index]
                    .agents
                    .iter()
                    .map(|a| OrcaAgent {
                        id: a.id,
                        position: a.position,
                        velocity: a.velocity,
                        goal: infos[&a.id].exit,
                        preferred_speed: infos[&a.id].mean_speed,
                    })
                    .collect();
                let mut pending: Vec<(usize, OrcaAgent)> = infos
                    .iter()
                    .filter(|(_, info)| info.first > index)
                    .map(|(&id, info)| {
                        (
                            info.first,
                            OrcaAgent {
                                id,
                                position: info.entry,
                                velocity: info.entry_velocity,
                                goal: info.exit,
                                preferred_speed: info.mean_speed,
                            },
                        )
                    })
                    .collect();
                pending.sort_by_key(|(k, a)| (*k, a.id));
                Crowd::Reactive {
                    agents,
                    pending: pending.into(),
                    index,
                }
            }
        }
    }

    fn current(&self) -> Vec<AugmentedAgentState> {
        match self {
            Crowd::Replay { snapshots, index } => snapshots
                .get(*index)
                .map(|s| s.agents.clone())
                .unwrap_or_default(),
            Crowd::Reactive { agents, .. } => {
                let mut out: Vec<AugmentedAgentState> = agents
                    .iter()
                    .map(|a| AugmentedAgentState::from_velocity(a.id, a.position, a.velocity))
                    .collect();
                out.sort_by_key(|s| s.id);
                out
            }
        }
    }

    fn advance(&mut self, robot: &OrcaObstacle, cfg: &OrcaConfig, dt: f64) {
        match self {
            Crowd::Replay { index, .. } => *index += 1,
            Crowd::Reactive {
                agents,
                pending,
                index,
            } => {
                *agents = step_orca_agents(agents, Some(robot), cfg, dt);
                *index += 1;
                while pending.front().is_some_and(|(k, _)| *k <= *index) {
                    let (_, a) = pending.pop_front().expect("non-empty");
                    agents.push(a);
                }
            }
        }
    }
}

/// Smallest robot-pedestrian distance in a frame, `None` with no pedestrians.
pub fn nearest_agent_distance(robot: Vec2, agents: &[AugmentedAgentState]) -> Option<f64> {
    agents
        .iter()
        .map(|a| a.position.distance(robot))
        .min_by(f64::total_cmp)
}

/// Runs one trial to termination. Deterministic in all inputs.
///
/// `snapshots` is the resampled recording the trial's segment indexes into.
/// Offline replay continues past the segment end while the recording lasts.
pub fn run_trial(
    spec: &TrialSpec,
    snapshots: &[WorldSnapshot],
    policy: PolicyKind,
    cfg: &SimConfig,
    oracle: Arc<dyn GroupSpaceOracle>,
    seed: u64,
) -> Result<TrialRecord> {
    cfg.validate()?;
    spec.validate(snapshots.len())?;
    let dt = cfg.world.dt;
    let planner_cfg = PlannerConfig {
        policy,
        ..cfg.planner.clone()
    };
    let planner = Planner::new(
        planner_cfg,
        cfg.grouping.clone(),
        cfg.oracle.history_len,
        oracle,
        dt,
        cfg.world.v_max,
    )?;
    let timeout_steps = cfg.world.timeout_for(spec.start.distance(spec.goal));
    let trial_id = spec.id();

    let mut crowd = Crowd::new(spec, snapshots, dt);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tracker = PedestrianTracker::new();
    let mut window: VecDeque<Vec<AugmentedAgentState>> =
        VecDeque::with_capacity(cfg.oracle.history_len + 1);
    let mut robot = spec.start;
    let mut heading = (spec.goal - spec.start).angle();
    let mut trace = Vec::new();
    let mut recorded = Vec::new();

    let termination = loop {
        let t = trace.len();
        let agents = crowd.current();
        trace.push(robot);
        let collided = nearest_agent_distance(robot, &agents)
            .is_some_and(|d| d < cfg.world.collision_distance + cfg.world.robot_radius);
        recorded.push(WorldSnapshot {
            time_index: t,
            robot: Some(AgentState {
                id: ROBOT_ID,
                position: robot,
            }),
            agents,
        });
        if collided {
            break Termination::Collision;
        }
        if robot.distance(spec.goal) <= cfg.world.goal_radius {
            break Termination::Success;
        }
        if t >= timeout_steps {
            break Termination::Timeout;
        }

        let truth = &recorded[t].agents;
        let perceived = match spec.perception {
            Perception::GroundTruth => truth.clone(),
            Perception::Lidar => {
                let scan = simulate_lidar_with_rng(
                    truth,
                    Pose {
                        position: robot,
                        heading,
                    },
                    &cfg.lidar,
                    &mut rng,
                );
                tracker.update(&scan, &cfg.lidar, dt)
            }
        };
        window.push_back(perceived);
        if window.len() > cfg.oracle.history_len {
            window.pop_front();
        }
        let ctx = ForecastContext {
            trial_id: trial_id.clone(),
            step: t,
        };
        let plan = planner.plan(window.make_contiguous(), robot, spec.goal, &ctx)?;
        let u = plan.first_control();
        let obstacle = OrcaObstacle {
            position: robot,
            velocity: u,
            radius: cfg.orca.robot_radius,
        };
        robot += u * dt;
        heading = u.angle();
        crowd.advance(&obstacle, &cfg.orca, dt);
    };

    Ok(TrialRecord {
        spec: spec.clone(),
        policy,
        seed,
        timeout_steps,
        robot_trace: trace,
        snapshots: recorded,
        termination,
        config: cfg.clone(),
    })
}
