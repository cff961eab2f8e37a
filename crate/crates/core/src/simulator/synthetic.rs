//! Small constructed scenes for tests, benchmarks and smoke runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Vec2;
use crate::world::{AgentId, AgentState, Recording};

use super::TestRegion;

/// A recording plus the robot task it was built for.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub recording: Recording,
    pub start: Vec2,
    pub goal: Vec2,
    pub region: TestRegion,
}

/// Agents standing still at `positions` for `frames` frames spaced `dt`.
pub fn static_recording(positions: &[Vec2], frames: usize, dt: f64) -> Recording {
    let obs = (0..frames as i64).flat_map(|f| {
        positions.iter().enumerate().map(move |(i, &p)| {
            (
                f,
                AgentState {
                    id: AgentId(i as u64),
                    position: p,
                },
            )
        })
    });
    Recording::from_observations("static", dt, obs)
}

/// Robot crossing a corridor traversed by small pedestrian groups.
///
/// The robot goes from (-7, 0) to (7, 0). `n_agents` pedestrians are split
/// into groups of two or three walking side by side along +y or -y, timed to
/// reach the robot's line 3 to 6 s in. Sampled every `dt` until every agent
/// has left the 18 m corridor.
pub fn crossing_scenario(seed: u64, n_agents: usize, dt: f64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = Vec::new();
    let mut left = n_agents;
    while left > 0 {
        let s = if left <= 3 {
            left
        } else {
            rng.gen_range(2..=3).min(left - 2)
        };
        sizes.push(s);
        left -= s;
    }
    let half_len = 9.0;
    let mut obs = Vec::new();
    let mut next_id = 0u64;
    for size in sizes {
        let dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let x_center: f64 = rng.gen_range(-3.0..3.0);
        let speed: f64 = rng.gen_range(0.9..1.3);
        let t_cross: f64 = rng.gen_range(3.0..6.0);
        let spacing: f64 = rng.gen_range(0.7..0.9);
        let y0 = -dir * speed * t_cross;
        let steps = ((half_len - dir * y0).abs() / (speed * dt)).ceil() as i64;
        for m in 0..size {
            let x = x_center + (m as f64 - (size as f64 - 1.0) / 2.0) * spacing;
            let id = AgentId(next_id);
            next_id += 1;
            for f in 0..=steps {
                let y = (y0 + dir * speed * dt * f as f64).clamp(-half_len, half_len);
                obs.push((
                    f,
                    AgentState {
                        id,
                        position: Vec2::new(x, y),
                    },
                ));
            }
        }
    }
    Scenario {
        recording: Recording::from_observations(format!("crossing-{seed}"), dt, obs),
        start: Vec2::new(-7.0, 0.0),
        goal: Vec2::new(7.0, 0.0),
        region: TestRegion::new(Vec2::new(-5.0, -5.0), Vec2::new(5.0, 5.0)).expect("positive area"),
    }
}
