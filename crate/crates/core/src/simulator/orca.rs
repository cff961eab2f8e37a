//! Reciprocal collision avoidance for the reactive pedestrians.
//!
//! Port of the RVO2 agent update: one half-plane per neighbor, solved by the
//! incremental 2D linear program with the 3D fallback when infeasible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::world::AgentId;

const EPSILON: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrcaConfig {
    pub agent_radius: f64,
    /// Radius the robot occupies in the pedestrians' velocity obstacles.
    pub robot_radius: f64,
    pub time_horizon: f64,
    pub neighbor_distance: f64,
    pub max_neighbors: usize,
    /// Agents within this distance of their exit point leave the scene.
    pub exit_radius: f64,
}

impl Default for OrcaConfig {
    fn default() -> Self {
        Self {
            agent_radius: 0.3,
            robot_radius: 0.3,
            time_horizon: 2.0,
            neighbor_distance: 10.0,
            max_neighbors: 10,
            exit_radius: 0.3,
        }
    }
}

impl OrcaConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.agent_radius > 0.0
            && self.robot_radius >= 0.0
            && self.time_horizon > 0.0
            && self.neighbor_distance > 0.0
            && self.max_neighbors > 0
            && self.exit_radius >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "orca parameters must be positive".into(),
            ))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrcaAgent {
    pub id: AgentId,
    pub position: Vec2,
    pub velocity: Vec2,
    pub goal: Vec2,
    /// Also the speed cap.
    pub preferred_speed: f64,
}

impl OrcaAgent {
    pub fn preferred_velocity(&self, dt: f64) -> Vec2 {
        let to_goal = self.goal - self.position;
        let dist = to_goal.norm();
        if dist < EPSILON {
            return Vec2::ZERO;
        }
        // Do not overshoot the goal within one step.
        let speed = self.preferred_speed.min(dist / dt);
        to_goal * (speed / dist)
    }
}

/// A disc that moves on its own and does not reciprocate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrcaObstacle {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

/// Directed line in velocity space; admissible velocities lie to its left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrcaLine {
    pub point: Vec2,
    pub direction: Vec2,
}

#[allow(clippy::too_many_arguments)]
fn orca_line(
    position: Vec2,
    velocity: Vec2,
    radius: f64,
    other_position: Vec2,
    other_velocity: Vec2,
    other_radius: f64,
    responsibility: f64,
    time_horizon: f64,
    dt: f64,
) -> OrcaLine {
    let rel_pos = other_position - position;
    let rel_vel = velocity - other_velocity;
    let dist_sq = rel_pos.norm_squared();
    let combined = radius + other_radius;
    let combined_sq = combined * combined;

    let (direction, u) = if dist_sq > combined_sq {
        let inv_tau = 1.0 / time_horizon;
        let w = rel_vel - rel_pos * inv_tau;
        let w_len_sq = w.norm_squared();
        let dot1 = w.dot(rel_pos);
        if dot1 < 0.0 && dot1 * dot1 > combined_sq * w_len_sq {
            // Cutoff circle.
            let w_len = w_len_sq.sqrt();
            let unit_w = w / w_len;
            (
                Vec2::new(unit_w.y, -unit_w.x),
                unit_w * (combined * inv_tau - w_len),
            )
        } else {
            let leg = (dist_sq - combined_sq).sqrt();
            let direction = if rel_pos.cross(w) > 0.0 {
                Vec2::new(
                    rel_pos.x * leg - rel_pos.y * combined,
                    rel_pos.x * combined + rel_pos.y * leg,
                ) / dist_sq
            } else {
                -Vec2::new(
                    rel_pos.x * leg + rel_pos.y * combined,
                    -rel_pos.x * combined + rel_pos.y * leg,
                ) / dist_sq
            };
            (direction, direction * rel_vel.dot(direction) - rel_vel)
        }
    } else {
        // Already overlapping: resolve within one step.
        let inv_dt = 1.0 / dt;
        let w = rel_vel - rel_pos * inv_dt;
        let w_len = w.norm();
        let unit_w = if w_len > EPSILON {
            w / w_len
        } else {
            Vec2::new(1.0, 0.0)
        };
        (
            Vec2::new(unit_w.y, -unit_w.x),
            unit_w * (combined * inv_dt - w_len),
        )
    };
    OrcaLine {
        point: velocity + u * responsibility,
        direction,
    }
}

fn linear_program1(
    lines: &[OrcaLine],
    line_no: usize,
    radius: f64,
    opt: Vec2,
    direction_opt: bool,
) -> Option<Vec2> {
    let line = lines[line_no];
    let dot = line.point.dot(line.direction);
    let disc = dot * dot + radius * radius - line.point.norm_squared();
    if disc < 0.0 {
        return None;
    }
    let sqrt_disc = disc.sqrt();
    let mut t_left = -dot - sqrt_disc;
    let mut t_right = -dot + sqrt_disc;
    for prior in &lines[..line_no] {
        let denominator = line.direction.cross(prior.direction);
        let numerator = prior.direction.cross(line.point - prior.point);
        if denominator.abs() <= EPSILON {
            if numerator < 0.0 {
                return None;
            }
            continue;
        }
        let t = numerator / denominator;
        if denominator >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return None;
        }
    }
    let t = if direction_opt {
        if opt.dot(line.direction) > 0.0 {
            t_right
        } else {
            t_left
        }
    } else {
        line.direction.dot(opt - line.point).clamp(t_left, t_right)
    };
    Some(line.point + line.direction * t)
}

/// Returns the solution and the index of the first infeasible line, or
/// `lines.len()` on success.
fn linear_program2(
    lines: &[OrcaLine],
    radius: f64,
    opt: Vec2,
    direction_opt: bool,
) -> (Vec2, usize) {
    let mut result = if direction_opt {
        opt * radius
    } else if opt.norm_squared() > radius * radius {
        opt.normalized().unwrap_or(Vec2::ZERO) * radius
    } else {
        opt
    };
    for (i, line) in lines.iter().enumerate() {
        if line.direction.cross(line.point - result) > 0.0 {
            match linear_program1(lines, i, radius, opt, direction_opt) {
                Some(r) => result = r,
                None => return (result, i),
            }
        }
    }
    (result, lines.len())
}

fn linear_program3(lines: &[OrcaLine], begin: usize, radius: f64, mut result: Vec2) -> Vec2 {
    let mut distance = 0.0;
    for i in begin..lines.len() {
        let li = lines[i];
        if li.direction.cross(li.point - result) <= distance {
            continue;
        }
        let mut projected = Vec::with_capacity(i);
        for lj in &lines[..i] {
            let determinant = li.direction.cross(lj.direction);
            let point = if determinant.abs() <= EPSILON {
                if li.direction.dot(lj.direction) > 0.0 {
                    continue;
                }
                (li.point + lj.point) * 0.5
            } else {
                li.point + li.direction * (lj.direction.cross(li.point - lj.point) / determinant)
            };
            let direction = (lj.direction - li.direction)
                .normalized()
                .unwrap_or(Vec2::ZERO);
            projected.push(OrcaLine { point, direction });
        }
        let before = result;
        let (candidate, fail) = linear_program2(
            &projected,
            radius,
            Vec2::new(-li.direction.y, li.direction.x),
            true,
        );
        result = if fail < projected.len() {
            before
        } else {
            candidate
        };
        distance = li.direction.cross(li.point - result);
    }
    result
}

/// Velocity closest to `preferred` inside the speed disc that satisfies every
/// line, or the least-violating one when none does.
pub fn solve_velocity(lines: &[OrcaLine], preferred: Vec2, max_speed: f64) -> Vec2 {
    let (result, fail) = linear_program2(lines, max_speed, preferred, false);
    if fail < lines.len() {
        linear_program3(lines, fail, max_speed, result)
    } else {
        result
    }
}

/// New velocity for agent `i` given everyone else and an optional robot.
pub fn orca_velocity(
    agents: &[OrcaAgent],
    i: usize,
    robot: Option<&OrcaObstacle>,
    cfg: &OrcaConfig,
    dt: f64,
) -> Vec2 {
    let a = &agents[i];
    let range_sq = cfg.neighbor_distance * cfg.neighbor_distance;
    let mut neighbors: Vec<(f64, usize)> = agents
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, b)| ((b.position - a.position).norm_squared(), j))
        .filter(|&(d, _)| d < range_sq)
        .collect();
    neighbors.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    neighbors.truncate(cfg.max_neighbors);

    let mut lines = Vec::with_capacity(neighbors.len() + 1);
    if let Some(r) = robot {
        if (r.position - a.position).norm_squared() < range_sq {
            lines.push(orca_line(
                a.position,
                a.velocity,
                cfg.agent_radius,
                r.position,
                r.velocity,
                r.radius,
                1.0,
                cfg.time_horizon,
                dt,
            ));
        }
    }
    for &(_, j) in &neighbors {
        let b = &agents[j];
        lines.push(orca_line(
            a.position,
            a.velocity,
            cfg.agent_radius,
            b.position,
            b.velocity,
            cfg.agent_radius,
            0.5,
            cfg.time_horizon,
            dt,
        ));
    }
    solve_velocity(&lines, a.preferred_velocity(dt), a.preferred_speed)
}

/// Advances every agent one step. Velocities are computed from the same
/// snapshot, then positions integrate; agents that reach their exit are
/// dropped. Output keeps input order.
pub fn step_orca_agents(
    agents: &[OrcaAgent],
    robot: Option<&OrcaObstacle>,
    cfg: &OrcaConfig,
    dt: f64,
) -> Vec<OrcaAgent> {
    let velocities: Vec<Vec2> = (0..agents.len())
        .map(|i| orca_velocity(agents, i, robot, cfg, dt))
        .collect();
    agents
        .iter()
        .zip(velocities)
        .map(|(a, v)| OrcaAgent {
            position: a.position + v * dt,
            velocity: v,
            ..*a
        })
        .filter(|a| a.position.distance(a.goal) > cfg.exit_radius)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(id: u64, from: (f64, f64), to: (f64, f64), speed: f64) -> OrcaAgent {
        OrcaAgent {
            id: AgentId(id),
            position: Vec2::new(from.0, from.1),
            velocity: Vec2::ZERO,
            goal: Vec2::new(to.0, to.1),
            preferred_speed: speed,
        }
    }

    fn run(
        mut agents: Vec<OrcaAgent>,
        robot: Option<OrcaObstacle>,
        steps: usize,
    ) -> (Vec<Vec<OrcaAgent>>, f64) {
        let cfg = OrcaConfig {
            exit_radius: 0.05,
            ..OrcaConfig::default()
        };
        let mut history = vec![agents.clone()];
        let mut min_sep = f64::INFINITY;
        for _ in 0..steps {
            agents = step_orca_agents(&agents, robot.as_ref(), &cfg, 0.1);
            for (i, a) in agents.iter().enumerate() {
                for b in &agents[i + 1..] {
                    min_sep = min_sep.min(a.position.distance(b.position));
                }
                if let Some(r) = &robot {
                    min_sep = min_sep.min(a.position.distance(r.position));
                }
            }
            history.push(agents.clone());
        }
        (history, min_sep)
    }

    #[test]
    fn free_agent_walks_straight_at_preferred_speed() {
        let (h, _) = run(vec![agent(0, (0.0, 0.0), (5.0, 0.0), 1.2)], None, 10);
        for a in &h[1] {
            assert!((a.velocity - Vec2::new(1.2, 0.0)).norm() < 1e-12);
        }
        assert!((h[10][0].position.x - 1.2).abs() < 1e-9);
        let (h, _) = run(vec![agent(0, (0.0, 0.0), (5.0, 0.0), 1.2)], None, 60);
        assert!(h.last().unwrap().is_empty());
    }

    #[test]
    fn head_on_swap_deviates_and_keeps_clear() {
        // Exact symmetry is a standstill for ORCA; a few centimeters break it.
        let agents = vec![
            agent(0, (-4.0, 0.05), (4.0, 0.05), 1.3),
            agent(1, (4.0, 0.0), (-4.0, 0.0), 1.3),
        ];
        let (h, min_sep) = run(agents, None, 100);
        assert!(min_sep >= 0.6 - 1e-6, "min separation {min_sep}");
        for id in [0, 1] {
            let max_lateral = h
                .iter()
                .flatten()
                .filter(|a| a.id == AgentId(id))
                .map(|a| a.position.y.abs())
                .fold(0.0, f64::max);
            assert!(max_lateral > 0.1, "agent {id} deviated {max_lateral}");
        }
        assert!(h.last().unwrap().is_empty());
    }

    #[test]
    fn agent_bends_around_stationary_robot() {
        let robot = OrcaObstacle {
            position: Vec2::ZERO,
            velocity: Vec2::ZERO,
            radius: 0.3,
        };
        let (h, min_sep) = run(
            vec![agent(0, (-4.0, 0.01), (4.0, 0.01), 1.3)],
            Some(robot),
            100,
        );
        assert!(min_sep >= 0.6 - 1e-6, "min separation {min_sep}");
        assert!(h.iter().flatten().any(|a| a.position.y.abs() > 0.3));
    }

    #[test]
    fn six_agent_crossing_never_overlaps() {
        let agents = (0..3)
            .map(|k| agent(k, (-5.0, k as f64 - 1.0), (5.0, k as f64 - 1.0), 1.2))
            .chain(
                (0..3).map(|k| agent(10 + k, (k as f64 - 1.0, -5.0), (k as f64 - 1.0, 5.0), 1.2)),
            )
            .collect();
        let (_, min_sep) = run(agents, None, 150);
        assert!(min_sep >= 0.6 - 1e-6, "min separation {min_sep}");
    }

    #[test]
    fn solver_respects_satisfiable_lines() {
        let lines = [
            OrcaLine {
                point: Vec2::new(0.0, 0.5),
                direction: Vec2::new(1.0, 0.0),
            },
            OrcaLine {
                point: Vec2::new(0.2, 0.0),
                direction: Vec2::new(0.0, -1.0),
            },
        ];
        let v = solve_velocity(&lines, Vec2::new(-1.0, -1.0), 2.0);
        for l in &lines {
            assert!(l.direction.cross(l.point - v) <= 1e-12);
        }
        assert!((v - Vec2::new(0.2, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn infeasible_lines_fall_back_to_least_violation() {
        let lines = [
            OrcaLine {
                point: Vec2::new(0.0, 1.0),
                direction: Vec2::new(1.0, 0.0),
            },
            OrcaLine {
                point: Vec2::new(0.0, -1.0),
                direction: Vec2::new(-1.0, 0.0),
            },
        ];
        let v = solve_velocity(&lines, Vec2::ZERO, 3.0);
        assert!(v.y.abs() < 1e-9);
        assert!(v.norm() <= 3.0 + 1e-9);
    }
}
