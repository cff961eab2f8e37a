//! Planar lidar against disc-shaped pedestrians, and the detection front-end
//! that turns a scan back into tracked pedestrian states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::world::{AgentId, AugmentedAgentState, WorldSnapshot};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarConfig {
    /// Field of view centered on the heading, rad.
    pub fov: f64,
    pub angular_resolution: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub pedestrian_radius: f64,
    /// Consecutive returns further apart in range than this start a new cluster.
    pub cluster_jump: f64,
    /// Largest per-step displacement accepted when associating detections.
    pub association_distance: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            fov: 1.5 * std::f64::consts::PI,
            angular_resolution: 0.5f64.to_radians(),
            max_range: 40.0,
            range_noise_sigma: 0.03,
            pedestrian_radius: 0.5,
            cluster_jump: 0.3,
            association_distance: 0.25,
        }
    }
}

impl LidarConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.fov > 0.0
            && self.fov <= std::f64::consts::TAU + 1e-12
            && self.angular_resolution > 0.0
            && self.max_range > 0.0
            && self.range_noise_sigma >= 0.0
            && self.pedestrian_radius > 0.0
            && self.cluster_jump > 0.0
            && self.association_distance > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "lidar parameters must be positive and fov at most 2π".into(),
            ))
        }
    }

    pub fn ray_count(&self) -> usize {
        // A full circle would duplicate the first ray at the end.
        let full = self.fov >= std::f64::consts::TAU - 1e-9;
        let n = (self.fov / self.angular_resolution + 1e-9).floor() as usize;
        if full {
            n.max(1)
        } else {
            n + 1
        }
    }

    /// Ray angles relative to the heading, ascending.
    pub fn ray_angles(&self) -> Vec<f64> {
        (0..self.ray_count())
            .map(|i| -self.fov / 2.0 + i as f64 * self.angular_resolution)
            .collect()
    }

    fn wraps(&self) -> bool {
        self.fov >= std::f64::consts::TAU - self.angular_resolution * 1.5
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    pub origin: Vec2,
    pub heading: f64,
    /// Relative to `heading`.
    pub angles: Vec<f64>,
    /// `None` for rays with no return.
    pub ranges: Vec<Option<f64>>,
    /// Which pedestrian each ray hit; ground truth kept for diagnostics.
    pub hit_agent: Vec<Option<AgentId>>,
}

impl LidarScan {
    pub fn ray_direction(&self, i: usize) -> Vec2 {
        Vec2::from_angle(self.heading + self.angles[i])
    }

    pub fn point(&self, i: usize) -> Option<Vec2> {
        self.ranges[i].map(|r| self.origin + self.ray_direction(i) * r)
    }

    pub fn hits_on(&self, id: AgentId) -> usize {
        self.hit_agent.iter().filter(|h| **h == Some(id)).count()
    }
}

/// Smallest positive distance along the unit ray `dir` from `origin` to the
/// circle, if any.
pub fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = -b - sq;
    let t1 = -b + sq;
    if t0 > 0.0 {
        Some(t0)
    } else if t1 > 0.0 {
        Some(t1)
    } else {
        None
    }
}

pub fn simulate_lidar_with_rng<R: Rng>(
    agents: &[AugmentedAgentState],
    pose: Pose,
    cfg: &LidarConfig,
    rng: &mut R,
) -> LidarScan {
    let angles = cfg.ray_angles();
    let noise = (cfg.range_noise_sigma > 0.0)
        .then(|| Normal::new(0.0, cfg.range_noise_sigma).expect("finite sigma"));
    let mut ranges = Vec::with_capacity(angles.len());
    let mut hit_agent = Vec::with_capacity(angles.len());
    for &a in &angles {
        let dir = Vec2::from_angle(pose.heading + a);
        let nearest = agents
            .iter()
            .filter_map(|q| {
                ray_circle(pose.position, dir, q.position, cfg.pedestrian_radius).map(|t| (t, q.id))
            })
            .filter(|&(t, _)| t <= cfg.max_range)
            .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        match nearest {
            Some((t, id)) => {
                let r = match &noise {
                    Some(n) => (t + n.sample(rng)).clamp(1e-6, cfg.max_range),
                    None => t,
                };
                ranges.push(Some(r));
                hit_agent.push(Some(id));
            }
            None => {
                ranges.push(None);
                hit_agent.push(None);
            }
        }
    }
    LidarScan {
        origin: pose.position,
        heading: pose.heading,
        angles,
        ranges,
        hit_agent,
    }
}

/// Deterministic scan of the snapshot's agents for a given seed.
pub fn simulate_lidar(
    snapshot: &WorldSnapshot,
    pose: Pose,
    cfg: &LidarConfig,
    seed: u64,
) -> LidarScan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_lidar_with_rng(&snapshot.agents, pose, cfg, &mut rng)
}

/// Contiguous runs of returns, split on a missing ray or a range jump.
pub fn cluster_returns(scan: &LidarScan, cfg: &LidarConfig) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut prev: Option<f64> = None;
    for (i, r) in scan.ranges.iter().enumerate() {
        match (r, prev) {
            (Some(r), Some(p)) if (r - p).abs() <= cfg.cluster_jump => current.push(i),
            (Some(_), _) => {
                if !current.is_empty() {
                    clusters.push(std::mem::take(&mut current));
                }
                current.push(i);
            }
            (None, _) => {
                if !current.is_empty() {
                    clusters.push(std::mem::take(&mut current));
                }
            }
        }
        prev = *r;
    }
    if !current.is_empty() {
        clusters.push(current);
    }
    if cfg.wraps() && clusters.len() > 1 {
        let n = scan.ranges.len();
        let first = &clusters[0];
        let last = clusters.last().expect("non-empty");
        if first[0] == 0 && *last.last().expect("non-empty") == n - 1 {
            let (a, b) = (
                scan.ranges[n - 1].expect("hit"),
                scan.ranges[0].expect("hit"),
            );
            if (a - b).abs() <= cfg.cluster_jump {
                let tail = clusters.pop().expect("non-empty");
                clusters[0].splice(0..0, tail);
            }
        }
    }
    clusters
}

/// Center of a disc of known radius seen as `points` from `origin`.
///
/// Starts from the centroid of the points pushed outward by the radius along
/// their rays, then refines with a fixed-radius least-squares circle fit. The
/// fit is discarded if it wanders more than one radius from the start.
pub fn estimate_center(origin: Vec2, points: &[Vec2], radius: f64) -> Vec2 {
    let pushed: Vec2 = points
        .iter()
        .map(|&p| p + (p - origin).normalized().unwrap_or(Vec2::ZERO) * radius)
        .fold(Vec2::ZERO, |a, b| a + b)
        / points.len() as f64;
    if points.len() < 3 {
        return pushed;
    }
    let mut c = pushed;
    for _ in 0..20 {
        // Gauss-Newton on r_i = |p_i - c| - radius.
        let (mut jtj, mut jtr) = ([0.0f64; 3], Vec2::ZERO);
        for &p in points {
            let d = c - p;
            let n = d.norm();
            if n < 1e-12 {
                continue;
            }
            let j = d / n;
            let r = n - radius;
            jtj[0] += j.x * j.x;
            jtj[1] += j.x * j.y;
            jtj[2] += j.y * j.y;
            jtr += j * r;
        }
        let det = jtj[0] * jtj[2] - jtj[1] * jtj[1];
        if det.abs() < 1e-12 {
            break;
        }
        let step = Vec2::new(
            jtj[2] * jtr.x - jtj[1] * jtr.y,
            jtj[0] * jtr.y - jtj[1] * jtr.x,
        ) / det;
        c -= step;
        if step.norm() < 1e-10 {
            break;
        }
    }
    if c.is_finite() && c.distance(pushed) <= radius && (c - origin).dot(pushed - origin) > 0.0 {
        c
    } else {
        pushed
    }
}

/// Estimated pedestrian centers, one per return cluster.
pub fn detect_centers(scan: &LidarScan, cfg: &LidarConfig) -> Vec<Vec2> {
    cluster_returns(scan, cfg)
        .into_iter()
        .map(|idx| {
            let pts: Vec<Vec2> = idx.iter().filter_map(|&i| scan.point(i)).collect();
            estimate_center(scan.origin, &pts, cfg.pedestrian_radius)
        })
        .collect()
}

/// Detects pedestrians in `scan` and associates them with `previous` by
/// greedy nearest neighbor. A detection within `association_distance` of a
/// previous one keeps its id and gets a finite-difference velocity; anything
/// else opens a new id from `next_id` with zero velocity.
pub fn detect_pedestrians(
    scan: &LidarScan,
    previous: &[AugmentedAgentState],
    cfg: &LidarConfig,
    dt: f64,
    next_id: &mut u64,
) -> Vec<AugmentedAgentState> {
    let centers = detect_centers(scan, cfg);
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, c) in centers.iter().enumerate() {
        for (j, p) in previous.iter().enumerate() {
            let d = c.distance(p.position);
            if d <= cfg.association_distance {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut matched: Vec<Option<usize>> = vec![None; centers.len()];
    let mut taken = vec![false; previous.len()];
    for (_, i, j) in pairs {
        if matched[i].is_none() && !taken[j] {
            matched[i] = Some(j);
            taken[j] = true;
        }
    }
    let mut out: Vec<AugmentedAgentState> = centers
        .iter()
        .zip(matched)
        .map(|(&c, m)| match m {
            Some(j) => {
                let p = &previous[j];
                AugmentedAgentState::from_velocity(p.id, c, (c - p.position) / dt)
            }
            None => {
                let id = AgentId(*next_id);
                *next_id += 1;
                AugmentedAgentState::stationary(id, c)
            }
        })
        .collect();
    out.sort_by_key(|s| s.id);
    out
}

/// Holds the previous detections and the id counter across frames.
#[derive(Clone, Debug, Default)]
pub struct PedestrianTracker {
    previous: Vec<AugmentedAgentState>,
    next_id: u64,
}

impl PedestrianTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(
        &mut self,
        scan: &LidarScan,
        cfg: &LidarConfig,
        dt: f64,
    ) -> Vec<AugmentedAgentState> {
        let current = detect_pedestrians(scan, &self.previous, cfg, dt, &mut self.next_id);
        self.previous = current.clone();
        current
    }
}
