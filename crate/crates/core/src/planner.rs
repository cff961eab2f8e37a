//! Sampling-based MPC over forecast obstacle shapes.
//!
//! A fixed family of control rollouts (directions x speeds x turn rates) is
//! scored against a per-step forecast of obstacle polygons. The obstacle set
//! depends on the policy: group spaces (held or predicted) for the group
//! policies, individual personal spaces (held or linearly propagated) for the
//! pedestrian baselines.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Polygon, Vec2};
use crate::grouping::{
    cluster_groups, complete_group_history, group_spaces, index_states, shrink_until_outside,
    Group, GroupingConfig,
};
use crate::prediction::{ForecastContext, GroupSpaceOracle};
use crate::world::AugmentedAgentState;

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Current personal spaces, held over the horizon.
    PedNopred,
    /// Personal spaces translated by each agent's current velocity.
    PedLinear,
    /// Current group spaces, held over the horizon.
    GroupNopred,
    /// Group spaces forecast by the configured oracle.
    #[default]
    GroupPred,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::PedNopred,
        PolicyKind::PedLinear,
        PolicyKind::GroupNopred,
        PolicyKind::GroupPred,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::PedNopred => "ped-nopred",
            PolicyKind::PedLinear => "ped-linear",
            PolicyKind::GroupNopred => "group-nopred",
            PolicyKind::GroupPred => "group-pred",
        }
    }

    pub fn is_group_based(self) -> bool {
        matches!(self, PolicyKind::GroupNopred | PolicyKind::GroupPred)
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown policy {s:?}")))
    }
}

/// How the goal term treats waypoints that fall inside an obstacle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoalCostRule {
    /// The rollout is scored as if truncated at its first collision: from
    /// then on the goal term stays at the distance of the last waypoint
    /// before it.
    #[default]
    LastCollisionFree,
    /// The goal term is zero at waypoints inside an obstacle and
    /// `|s_{k-1} - goal|` elsewhere.
    ZeroInside,
}

/// Goal weight tuned for replayed, non-reactive crowds.
pub const LAMBDA_NON_REACTIVE: f64 = 0.65;
/// Goal weight tuned for ORCA-driven crowds.
pub const LAMBDA_REACTIVE: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Goal-term weight in `[0, 1]`; proximity gets `1 - lambda`.
    pub lambda: f64,
    /// Per-step discount in `(0, 1]`.
    pub gamma: f64,
    /// Rollout length in steps. Must equal the oracle horizon.
    pub horizon: usize,
    /// Number of rollout directions.
    pub directions: usize,
    /// Tangential speeds as fractions of `v_max`.
    pub speed_fractions: Vec<f64>,
    /// Turning rates, rad/s.
    pub turn_rates: Vec<f64>,
    pub goal_rule: GoalCostRule,
    pub policy: PolicyKind,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            lambda: LAMBDA_NON_REACTIVE,
            gamma: 1.0,
            horizon: 8,
            directions: 12,
            speed_fractions: vec![1.0 / 3.0, 2.0 / 3.0, 1.0],
            turn_rates: vec![0.0, FRAC_PI_2, -FRAC_PI_2],
            goal_rule: GoalCostRule::default(),
            policy: PolicyKind::GroupPred,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("planner.lambda must lie in [0, 1]");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("planner.gamma must lie in (0, 1]");
        }
        if self.horizon == 0 {
            return bad("planner.horizon must be at least 1");
        }
        if self.directions < 4 {
            return bad("planner.directions must be at least 4");
        }
        if self.speed_fractions.is_empty()
            || self.speed_fractions.iter().any(|&s| !(s > 0.0 && s <= 1.0))
        {
            return bad("planner.speed_fractions must be non-empty and within (0, 1]");
        }
        if self.turn_rates.is_empty() || self.turn_rates.iter().any(|w| !w.is_finite()) {
            return bad("planner.turn_rates must be non-empty and finite");
        }
        Ok(())
    }
}

/// A constant-speed control sequence. The velocity direction at step `k`
/// (1-based) is `direction + turn_rate * (k - 1) * dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlRollout {
    pub direction: f64,
    pub speed: f64,
    pub turn_rate: f64,
    pub controls: Vec<Vec2>,
}

impl ControlRollout {
    /// Positions `s_1..s_{K+1}` starting from `start`.
    pub fn states(&self, start: Vec2, dt: f64) -> Vec<Vec2> {
        let mut out = Vec::with_capacity(self.controls.len() + 1);
        out.push(start);
        let mut s = start;
        for &u in &self.controls {
            s += u * dt;
            out.push(s);
        }
        out
    }
}

/// Cartesian product of directions x speeds x turn rates, ordered by
/// direction, then speed ascending, then turn rate in configured order.
pub fn generate_rollouts(cfg: &PlannerConfig, v_max: f64, dt: f64) -> Vec<ControlRollout> {
    let mut speeds: Vec<f64> = cfg.speed_fractions.iter().map(|f| f * v_max).collect();
    speeds.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(cfg.directions * speeds.len() * cfg.turn_rates.len());
    for r in 0..cfg.directions {
        let direction = TAU * r as f64 / cfg.directions as f64;
        for &speed in &speeds {
            for &turn_rate in &cfg.turn_rates {
                let controls = (0..cfg.horizon)
                    .map(|k| Vec2::from_angle(direction + turn_rate * k as f64 * dt) * speed)
                    .collect();
                out.push(ControlRollout {
                    direction,
                    speed,
                    turn_rate,
                    controls,
                });
            }
        }
    }
    out
}

/// Obstacle polygons for forecast steps `1..=K`; `steps[k - 1]` holds the
/// shapes at step `k`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObstacleForecast {
    pub steps: Vec<Vec<Polygon>>,
}

impl ObstacleForecast {
    pub fn empty(horizon: usize) -> Self {
        Self {
            steps: vec![Vec::new(); horizon],
        }
    }

    pub fn held(shapes: Vec<Polygon>, horizon: usize) -> Self {
        Self {
            steps: vec![shapes; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    fn at(&self, k: usize) -> &[Polygon] {
        &self.steps[k - 1]
    }

    pub fn in_collision(&self, k: usize, p: Vec2) -> bool {
        self.at(k).iter().any(|g| g.contains(p))
    }
}

/// Per-step goal term for `states = s_1..s_{K+1}`; entry `k - 1` scores
/// waypoint `s_{k+1}` against forecast step `k`.
pub fn cost_goal(
    states: &[Vec2],
    forecast: &ObstacleForecast,
    goal: Vec2,
    rule: GoalCostRule,
) -> Vec<f64> {
    let k_max = states.len() - 1;
    assert!(forecast.horizon() >= k_max, "forecast shorter than rollout");
    let mut frozen: Option<f64> = None;
    (1..=k_max)
        .map(|k| {
            let prev = states[k - 1].distance(goal);
            let inside = forecast.in_collision(k, states[k]);
            match rule {
                GoalCostRule::ZeroInside if inside => 0.0,
                GoalCostRule::ZeroInside => prev,
                GoalCostRule::LastCollisionFree => {
                    if inside && frozen.is_none() {
                        frozen = Some(prev);
                    }
                    frozen.unwrap_or(prev)
                }
            }
        })
        .collect()
}

/// Signed distance to the obstacle set: distance to the nearest shape when
/// outside all of them, minus the distance to the nearest boundary of a
/// containing shape otherwise. `+inf` with no shapes.
pub fn signed_obstacle_distance(p: Vec2, shapes: &[Polygon]) -> f64 {
    let mut outside = f64::INFINITY;
    let mut depth: Option<f64> = None;
    for g in shapes {
        if g.contains(p) {
            let d = g.boundary_distance(p);
            depth = Some(depth.map_or(d, |e: f64| e.min(d)));
        } else {
            outside = outside.min(g.boundary_distance(p));
        }
    }
    match depth {
        Some(d) => -d,
        None => outside,
    }
}

/// Per-step proximity term `exp(-D)`, aligned like [`cost_goal`].
pub fn cost_proximity(states: &[Vec2], forecast: &ObstacleForecast) -> Vec<f64> {
    (1..states.len())
        .map(|k| (-signed_obstacle_distance(states[k], forecast.at(k))).exp())
        .collect()
}

/// Discounted weighted sum `sum_k gamma^k [lambda J_g + (1 - lambda) J_d]`.
pub fn total_cost(
    states: &[Vec2],
    forecast: &ObstacleForecast,
    goal: Vec2,
    cfg: &PlannerConfig,
) -> f64 {
    let jg = cost_goal(states, forecast, goal, cfg.goal_rule);
    let jd = cost_proximity(states, forecast);
    let mut discount = 1.0;
    jg.iter()
        .zip(&jd)
        .map(|(g, d)| {
            discount *= cfg.gamma;
            discount * (cfg.lambda * g + (1.0 - cfg.lambda) * d)
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub best_index: usize,
    pub best_rollout: ControlRollout,
    pub best_states: Vec<Vec2>,
    pub cost: f64,
    pub per_rollout_costs: Vec<f64>,
    /// Personal-space scale after shrinking around the robot.
    pub effective_c: f64,
    pub forecast: ObstacleForecast,
}

impl PlanResult {
    /// The control executed this cycle.
    pub fn first_control(&self) -> Vec2 {
        self.best_rollout.controls[0]
    }
}

/// Scores every rollout and returns the first minimum in rollout order.
pub fn select_rollout(
    rollouts: &[ControlRollout],
    start: Vec2,
    goal: Vec2,
    forecast: ObstacleForecast,
    cfg: &PlannerConfig,
    dt: f64,
    effective_c: f64,
) -> PlanResult {
    let costs: Vec<f64> = rollouts
        .iter()
        .map(|r| total_cost(&r.states(start, dt), &forecast, goal, cfg))
        .collect();
    let mut best = 0;
    for (i, &c) in costs.iter().enumerate() {
        if c < costs[best] {
            best = i;
        }
    }
    PlanResult {
        best_index: best,
        best_rollout: rollouts[best].clone(),
        best_states: rollouts[best].states(start, dt),
        cost: costs[best],
        per_rollout_costs: costs,
        effective_c,
        forecast,
    }
}

/// Receding-horizon planner for one policy. Holds no state between calls.
#[derive(Clone)]
pub struct Planner {
    pub cfg: PlannerConfig,
    pub grouping: GroupingConfig,
    pub history_len: usize,
    pub dt: f64,
    pub v_max: f64,
    oracle: Arc<dyn GroupSpaceOracle>,
    rollouts: Vec<ControlRollout>,
}

impl std::fmt::Debug for Planner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Planner")
            .field("cfg", &self.cfg)
            .field("grouping", &self.grouping)
            .field("history_len", &self.history_len)
            .field("rollouts", &self.rollouts.len())
            .finish()
    }
}

impl Planner {
    pub fn new(
        cfg: PlannerConfig,
        grouping: GroupingConfig,
        history_len: usize,
        oracle: Arc<dyn GroupSpaceOracle>,
        dt: f64,
        v_max: f64,
    ) -> Result<Self> {
        cfg.validate()?;
        grouping.validate()?;
        if cfg.policy == PolicyKind::GroupPred && history_len < oracle.min_history() {
            return Err(Error::InvalidConfig(format!(
                "history_len {history_len} is below the oracle minimum {}",
                oracle.min_history()
            )));
        }
        let rollouts = generate_rollouts(&cfg, v_max, dt);
        Ok(Self {
            cfg,
            grouping,
            history_len,
            dt,
            v_max,
            oracle,
            rollouts,
        })
    }

    pub fn rollouts(&self) -> &[ControlRollout] {
        &self.rollouts
    }

    /// Builds the obstacle forecast for the configured policy.
    ///
    /// `window` holds observed agent frames, oldest first, the last being the
    /// current frame. Returns the forecast and the effective scale constant.
    pub fn forecast(
        &self,
        window: &[Vec<AugmentedAgentState>],
        robot: Vec2,
        ctx: &ForecastContext,
    ) -> Result<(ObstacleForecast, f64)> {
        let k = self.cfg.horizon;
        let Some(current) = window.last().filter(|c| !c.is_empty()) else {
            return Ok((ObstacleForecast::empty(k), self.grouping.c));
        };
        let groups: Vec<Group> = if self.cfg.policy.is_group_based() {
            cluster_groups(current, &self.grouping)
        } else {
            let mut ids: Vec<_> = current.iter().map(|s| s.id).collect();
            ids.sort_unstable();
            ids.into_iter()
                .enumerate()
                .map(|(label, id)| Group {
                    label,
                    members: vec![id],
                })
                .collect()
        };
        let index = index_states(current);
        let spaces = group_spaces(&groups, &index, &self.grouping);
        let shrunk = shrink_until_outside(spaces, robot, &groups, &index, &self.grouping);
        let c = shrunk.effective_c;
        let forecast = match self.cfg.policy {
            PolicyKind::PedNopred | PolicyKind::GroupNopred => {
                ObstacleForecast::held(shrunk.spaces.into_iter().map(|s| s.polygon).collect(), k)
            }
            PolicyKind::PedLinear => {
                let steps = (1..=k)
                    .map(|step| {
                        shrunk
                            .spaces
                            .iter()
                            .map(|s| {
                                let v = index[&s.member_ids[0]].velocity;
                                s.polygon.translated(v * (step as f64 * self.dt))
                            })
                            .collect()
                    })
                    .collect();
                ObstacleForecast { steps }
            }
            PolicyKind::GroupPred => {
                let cfg = self.grouping.with_c(c);
                let histories =
                    complete_group_history(&groups, window, self.history_len, self.dt, &cfg);
                let mut steps = vec![Vec::with_capacity(histories.len()); k];
                for h in &histories {
                    let polys = self.oracle.forecast(h, k, self.dt, ctx)?;
                    for (step, p) in steps.iter_mut().zip(polys) {
                        step.push(p);
                    }
                }
                ObstacleForecast { steps }
            }
        };
        Ok((forecast, c))
    }

    pub fn plan(
        &self,
        window: &[Vec<AugmentedAgentState>],
        robot: Vec2,
        goal: Vec2,
        ctx: &ForecastContext,
    ) -> Result<PlanResult> {
        let (forecast, c) = self.forecast(window, robot, ctx)?;
        Ok(select_rollout(
            &self.rollouts,
            robot,
            goal,
            forecast,
            &self.cfg,
            self.dt,
            c,
        ))
    }
}
