//! Domain types for the crowd world and ingestion of pedestrian recordings.
//!
//! Recordings are plain-text annotation files with one observation per line.
//! Two column orders are accepted:
//!
//! * [`DatasetFormat::FramePedXy`]: `frame_id ped_id x y`
//! * [`DatasetFormat::Obsmat`]: `frame_id ped_id x z y vx vz vy` (ETH `obsmat.txt`)
//!
//! Positions are world-frame meters. The annotation interval is not inferred;
//! callers supply it with the scene configuration.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_two_pi, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u64);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    /// Seconds per control step.
    pub dt: f64,
    /// Robot speed cap, m/s.
    pub v_max: f64,
    pub robot_radius: f64,
    /// Robot-to-pedestrian center distance below which a collision is declared.
    pub collision_distance: f64,
    /// Distance to the goal at which a trial counts as a success.
    pub goal_radius: f64,
    /// Step budget. `None` derives it from the start-goal distance, see
    /// [`WorldConfig::timeout_for`].
    pub timeout_steps: Option<usize>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            v_max: 1.75,
            robot_radius: 0.0,
            collision_distance: 0.5,
            goal_radius: 0.5,
            timeout_steps: None,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0) {
            return bad("world.dt must be positive");
        }
        if !(self.v_max > 0.0) {
            return bad("world.v_max must be positive");
        }
        if !(self.collision_distance > 0.0) {
            return bad("world.collision_distance must be positive");
        }
        if !(self.goal_radius > 0.0) {
            return bad("world.goal_radius must be positive");
        }
        if !(self.robot_radius >= 0.0) {
            return bad("world.robot_radius must be non-negative");
        }
        if self.timeout_steps == Some(0) {
            return bad("world.timeout_steps must be at least 1");
        }
        Ok(())
    }

    /// Step budget for a straight-line distance: the configured value, or four
    /// times the direct-path travel time at `v_max`.
    pub fn timeout_for(&self, distance: f64) -> usize {
        self.timeout_steps
            .unwrap_or_else(|| ((4.0 * distance / self.v_max / self.dt).ceil() as usize).max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub position: Vec2,
}

/// Position plus the motion features used for grouping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedAgentState {
    pub id: AgentId,
    pub position: Vec2,
    /// Radians in `[0, 2π)`, aligned with `velocity` when moving.
    pub heading: f64,
    pub speed: f64,
    pub velocity: Vec2,
}

impl AugmentedAgentState {
    /// Derives heading and speed from a velocity. A zero velocity gets heading 0.
    pub fn from_velocity(id: AgentId, position: Vec2, velocity: Vec2) -> Self {
        let speed = velocity.norm();
        let heading = if speed > 0.0 {
            wrap_two_pi(velocity.angle())
        } else {
            0.0
        };
        Self {
            id,
            position,
            heading,
            speed,
            velocity,
        }
    }

    pub fn stationary(id: AgentId, position: Vec2) -> Self {
        Self::from_velocity(id, position, Vec2::ZERO)
    }

    pub fn state(&self) -> AgentState {
        AgentState {
            id: self.id,
            position: self.position,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub time_index: usize,
    /// Absent for pure crowd frames produced by [`resample`].
    pub robot: Option<AgentState>,
    /// Sorted by id; ids are unique.
    pub agents: Vec<AugmentedAgentState>,
}

impl WorldSnapshot {
    pub fn agent(&self, id: AgentId) -> Option<&AugmentedAgentState> {
        self.agents
            .binary_search_by_key(&id, |a| a.id)
            .ok()
            .map(|i| &self.agents[i])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_id: i64,
    pub agents: Vec<AgentState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub scene_name: String,
    /// Seconds between consecutive annotated frames.
    pub frame_interval: f64,
    /// Difference in frame ids corresponding to one `frame_interval`.
    pub frame_step: i64,
    /// Strictly increasing by `frame_id`.
    pub frames: Vec<Frame>,
}

impl Recording {
    /// Builds a recording from unordered observations.
    pub fn from_observations(
        scene_name: impl Into<String>,
        frame_interval: f64,
        observations: impl IntoIterator<Item = (i64, AgentState)>,
    ) -> Self {
        let mut by_frame: BTreeMap<i64, BTreeMap<AgentId, Vec2>> = BTreeMap::new();
        for (frame, s) in observations {
            by_frame.entry(frame).or_default().insert(s.id, s.position);
        }
        let frames: Vec<Frame> = by_frame
            .into_iter()
            .map(|(frame_id, agents)| Frame {
                frame_id,
                agents: agents
                    .into_iter()
                    .map(|(id, position)| AgentState { id, position })
                    .collect(),
            })
            .collect();
        let frame_step = frames
            .windows(2)
            .map(|w| w[1].frame_id - w[0].frame_id)
            .fold(0, gcd)
            .max(1);
        Self {
            scene_name: scene_name.into(),
            frame_interval,
            frame_step,
            frames,
        }
    }

    /// Time in seconds of an annotated frame, relative to the first frame.
    pub fn frame_time(&self, frame_id: i64) -> f64 {
        let first = self.frames.first().map_or(0, |f| f.frame_id);
        (frame_id - first) as f64 / self.frame_step as f64 * self.frame_interval
    }

    pub fn duration(&self) -> f64 {
        self.frames
            .last()
            .map_or(0.0, |f| self.frame_time(f.frame_id))
    }

    pub fn agent_ids(&self) -> Vec<AgentId> {
        let mut ids: Vec<AgentId> = self
            .frames
            .iter()
            .flat_map(|f| f.agents.iter().map(|a| a.id))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Per-agent annotated track as `(time, position)` pairs in time order.
    pub fn tracks(&self) -> BTreeMap<AgentId, Vec<(f64, Vec2)>> {
        let mut tracks: BTreeMap<AgentId, Vec<(f64, Vec2)>> = BTreeMap::new();
        for f in &self.frames {
            let t = self.frame_time(f.frame_id);
            for a in &f.agents {
                tracks.entry(a.id).or_default().push((t, a.position));
            }
        }
        tracks
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    /// `frame_id ped_id x y`
    #[default]
    FramePedXy,
    /// `frame_id ped_id x z y vx vz vy`
    Obsmat,
}

fn parse_integral(tok: &str) -> Option<i64> {
    let v: f64 = tok.parse().ok()?;
    (v.is_finite() && v.fract() == 0.0).then_some(v as i64)
}

/// Parses a recording from annotation text. `path` is only used in errors.
pub fn parse_recording(
    text: &str,
    path: &Path,
    format: DatasetFormat,
    scene_name: &str,
    frame_interval: f64,
) -> Result<Recording> {
    let (min_cols, x_col, y_col) = match format {
        DatasetFormat::FramePedXy => (4, 2, 3),
        DatasetFormat::Obsmat => (5, 2, 4),
    };
    let mut seen = HashMap::new();
    let mut observations = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() || row.starts_with('#') {
            continue;
        }
        let malformed = |reason: String| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let cols: Vec<&str> = row
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        if cols.len() < min_cols {
            return Err(malformed(format!(
                "expected at least {min_cols} columns, found {}",
                cols.len()
            )));
        }
        let frame = parse_integral(cols[0])
            .ok_or_else(|| malformed(format!("bad frame id {:?}", cols[0])))?;
        let ped = parse_integral(cols[1])
            .filter(|&p| p >= 0)
            .ok_or_else(|| malformed(format!("bad pedestrian id {:?}", cols[1])))?;
        let coord = |c: usize| -> Result<f64> {
            cols[c]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| malformed(format!("bad coordinate {:?}", cols[c])))
        };
        let position = Vec2::new(coord(x_col)?, coord(y_col)?);
        let id = AgentId(ped as u64);
        if let Some(prev) = seen.insert((frame, id), line) {
            return Err(malformed(format!(
                "duplicate observation of pedestrian {id} in frame {frame} (first at line {prev})"
            )));
        }
        observations.push((frame, AgentState { id, position }));
    }
    if observations.is_empty() {
        return Err(Error::EmptyRecording(path.to_path_buf()));
    }
    Ok(Recording::from_observations(
        scene_name,
        frame_interval,
        observations,
    ))
}

pub fn load_recording(
    path: &Path,
    format: DatasetFormat,
    scene_name: &str,
    frame_interval: f64,
) -> Result<Recording> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_recording(&text, path, format, scene_name, frame_interval)
}

/// Writes a recording in the `frame_id ped_id x y` format.
pub fn write_recording(recording: &Recording, mut out: impl Write) -> std::io::Result<()> {
    for f in &recording.frames {
        for a in &f.agents {
            writeln!(
                out,
                "{} {} {:?} {:?}",
                f.frame_id, a.id, a.position.x, a.position.y
            )?;
        }
    }
    Ok(())
}

/// Finite-difference velocities between two consecutive frames. Agents absent
/// from `prev` get zero velocity.
pub fn augment_states(
    prev: &[AgentState],
    curr: &[AgentState],
    dt: f64,
) -> Vec<AugmentedAgentState> {
    let before: HashMap<AgentId, Vec2> = prev.iter().map(|a| (a.id, a.position)).collect();
    curr.iter()
        .map(|a| {
            let velocity = before
                .get(&a.id)
                .map_or(Vec2::ZERO, |&p| (a.position - p) / dt);
            AugmentedAgentState::from_velocity(a.id, a.position, velocity)
        })
        .collect()
}

pub fn extract_augmented_states(
    prev: &WorldSnapshot,
    curr: &WorldSnapshot,
    dt: f64,
) -> Vec<AugmentedAgentState> {
    let p: Vec<AgentState> = prev.agents.iter().map(|a| a.state()).collect();
    let c: Vec<AgentState> = curr.agents.iter().map(|a| a.state()).collect();
    augment_states(&p, &c, dt)
}

/// Resamples a recording onto a uniform `dt` grid starting at the first frame.
///
/// Each agent is linearly interpolated between its consecutive annotations and
/// is present only between its first and last one. An agent annotated once
/// appears in the single sample nearest that annotation. Velocities are finite
/// differences between consecutive samples.
pub fn resample(recording: &Recording, dt: f64) -> Vec<WorldSnapshot> {
    assert!(dt > 0.0, "dt must be positive");
    if recording.frames.is_empty() {
        return Vec::new();
    }
    let eps = 1e-9 * dt;
    let n_samples = (recording.duration() / dt + 1e-9).floor() as usize + 1;
    let tracks = recording.tracks();
    let mut frames: Vec<Vec<AgentState>> = vec![Vec::new(); n_samples];
    for (&id, track) in &tracks {
        let (t0, _) = track[0];
        let (t1, _) = track[track.len() - 1];
        if track.len() == 1 {
            let k = (t0 / dt).round() as usize;
            if k < n_samples {
                frames[k].push(AgentState {
                    id,
                    position: track[0].1,
                });
            }
            continue;
        }
        let k_first = ((t0 - eps) / dt).ceil().max(0.0) as usize;
        let mut seg = 0;
        for (k, frame) in frames.iter_mut().enumerate().skip(k_first) {
            let t = k as f64 * dt;
            if t > t1 + eps {
                break;
            }
            while seg + 2 < track.len() && t > track[seg + 1].0 {
                seg += 1;
            }
            let (ta, pa) = track[seg];
            let (tb, pb) = track[seg + 1];
            let alpha = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
            let position = if alpha == 0.0 {
                pa
            } else if alpha == 1.0 {
                pb
            } else {
                pa.lerp(pb, alpha)
            };
            frame.push(AgentState { id, position });
        }
    }
    let mut out = Vec::with_capacity(n_samples);
    let mut prev: Vec<AgentState> = Vec::new();
    for (k, mut agents) in frames.into_iter().enumerate() {
        agents.sort_by_key(|a| a.id);
        let augmented = augment_states(&prev, &agents, dt);
        out.push(WorldSnapshot {
            time_index: k,
            robot: None,
            agents: augmented,
        });
        prev = agents;
    }
    out
}
