//! Social grouping of pedestrians and the geometry of group spaces.
//!
//! Agents are clustered on their augmented state (position, heading, speed).
//! Every agent gets an asymmetric personal space elongated along its heading
//! in proportion to its speed; a group's space is the convex hull of its
//! members' personal-space boundaries.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angular_distance, Polygon, Vec2};
use crate::world::{AgentId, AugmentedAgentState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupingConfig {
    /// Position threshold, meters.
    pub eps_s: f64,
    /// Heading threshold, radians.
    pub eps_theta: f64,
    /// Speed threshold, m/s.
    pub eps_v: f64,
    /// Personal-space scale constant.
    pub c: f64,
    /// Floor for `c` when shrinking spaces around the robot.
    pub c_min: f64,
    /// Decrement applied to `c` per shrinking round.
    pub c_step: f64,
    /// Boundary samples per personal space.
    pub boundary_samples: usize,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self::open_scene()
    }
}

impl GroupingConfig {
    /// Thresholds for moderately dense scenes (ETH, HOTEL, ZARA1, ZARA2).
    pub fn open_scene() -> Self {
        Self {
            eps_s: 2.0,
            eps_theta: 30f64.to_radians(),
            eps_v: 1.0,
            c: 0.35,
            c_min: 0.05,
            c_step: 0.1,
            boundary_samples: 64,
        }
    }

    /// Tighter thresholds for dense scenes (UNIV).
    pub fn dense_scene() -> Self {
        Self {
            eps_s: 1.5,
            eps_theta: 15f64.to_radians(),
            eps_v: 0.5,
            c: 0.25,
            ..Self::open_scene()
        }
    }

    pub fn with_c(&self, c: f64) -> Self {
        Self { c, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.eps_s > 0.0 && self.eps_theta > 0.0 && self.eps_v > 0.0) {
            return bad("grouping thresholds must be positive");
        }
        if !(self.c_min > 0.0 && self.c_min <= self.c) {
            return bad("grouping requires 0 < c_min <= c");
        }
        if !(self.c_step > 0.0) {
            return bad("grouping.c_step must be positive");
        }
        if self.boundary_samples < 8 {
            return bad("grouping.boundary_samples must be at least 8");
        }
        Ok(())
    }

    /// The pairwise neighbor predicate: all three thresholds must hold.
    pub fn are_neighbors(&self, a: &AugmentedAgentState, b: &AugmentedAgentState) -> bool {
        a.position.distance(b.position) <= self.eps_s
            && angular_distance(a.heading, b.heading) <= self.eps_theta
            && (a.speed - b.speed).abs() <= self.eps_v
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub label: usize,
    /// Sorted, non-empty.
    pub members: Vec<AgentId>,
}

/// DBSCAN with `minPts = 1`: every agent is a core point, so groups are the
/// connected components of the neighbor graph and lone agents are singleton
/// groups. Labels are assigned in order of each group's smallest member id.
pub fn cluster_groups(states: &[AugmentedAgentState], cfg: &GroupingConfig) -> Vec<Group> {
    let mut order: Vec<usize> = (0..states.len()).collect();
    order.sort_by_key(|&i| states[i].id);
    let mut cluster_of: Vec<Option<usize>> = vec![None; states.len()];
    let mut clusters: Vec<Vec<AgentId>> = Vec::new();
    let mut queue = VecDeque::new();
    for &seed in &order {
        if cluster_of[seed].is_some() {
            continue;
        }
        let cid = clusters.len();
        clusters.push(Vec::new());
        cluster_of[seed] = Some(cid);
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            clusters[cid].push(states[p].id);
            // Region query; with minPts = 1 every neighbor is expanded.
            for q in 0..states.len() {
                if cluster_of[q].is_none() && cfg.are_neighbors(&states[p], &states[q]) {
                    cluster_of[q] = Some(cid);
                    queue.push_back(q);
                }
            }
        }
    }
    for c in &mut clusters {
        c.sort_unstable();
    }
    clusters.sort_by_key(|c| c[0]);
    clusters
        .into_iter()
        .enumerate()
        .map(|(label, members)| Group { label, members })
        .collect()
}

/// Extents of the personal space along the front, side and rear axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonalAxes {
    pub sigma_f: f64,
    pub sigma_s: f64,
    pub sigma_r: f64,
}

impl PersonalAxes {
    pub fn from_speed(speed: f64) -> Self {
        let sigma_f = (2.0 * speed).max(0.5);
        Self {
            sigma_f,
            sigma_s: 2.0 * sigma_f / 3.0,
            sigma_r: sigma_f / 2.0,
        }
    }

    /// Boundary distance from the agent at angle `phi` relative to its heading.
    pub fn radial_extent(&self, phi: f64, c: f64) -> f64 {
        let phi = phi.rem_euclid(TAU);
        let (s1, s2) = if phi < FRAC_PI_2 {
            (self.sigma_f, self.sigma_s)
        } else if phi < PI {
            (self.sigma_s, self.sigma_r)
        } else if phi < 3.0 * FRAC_PI_2 {
            (self.sigma_r, self.sigma_s)
        } else {
            (self.sigma_s, self.sigma_f)
        };
        let gamma = phi.rem_euclid(FRAC_PI_2);
        let (sin, cos) = gamma.sin_cos();
        (c / (cos * cos / (2.0 * s1) + sin * sin / (2.0 * s2))).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonalSpace {
    pub agent_id: AgentId,
    /// Boundary points at `phi_k = 2πk/n`, in order of `phi`.
    pub boundary: Vec<Vec2>,
    pub sigma_f: f64,
    pub sigma_s: f64,
    pub sigma_r: f64,
}

pub fn personal_space(q: &AugmentedAgentState, c: f64, n: usize) -> PersonalSpace {
    let axes = PersonalAxes::from_speed(q.speed);
    let boundary = (0..n)
        .map(|k| {
            let phi = TAU * k as f64 / n as f64;
            q.position + Vec2::from_angle(q.heading + phi) * axes.radial_extent(phi, c)
        })
        .collect();
    PersonalSpace {
        agent_id: q.id,
        boundary,
        sigma_f: axes.sigma_f,
        sigma_s: axes.sigma_s,
        sigma_r: axes.sigma_r,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSpace {
    pub label: usize,
    pub polygon: Polygon,
    pub member_ids: Vec<AgentId>,
}

/// Time-indexed sequence of one group's space. Steps are relative to the
/// planning instant: history ends at step 0, forecasts start at step 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSpaceSequence {
    pub label: usize,
    pub start_step: i64,
    pub spaces: Vec<GroupSpace>,
}

impl GroupSpaceSequence {
    pub fn len(&self) -> usize {
        self.spaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spaces.is_empty()
    }

    pub fn last(&self) -> Option<&GroupSpace> {
        self.spaces.last()
    }
}

pub type StateIndex = HashMap<AgentId, AugmentedAgentState>;

pub fn index_states(states: &[AugmentedAgentState]) -> StateIndex {
    states.iter().map(|s| (s.id, *s)).collect()
}

/// Convex hull of the members' personal-space samples at `cfg.c`.
pub fn group_space(group: &Group, states: &StateIndex, cfg: &GroupingConfig) -> GroupSpace {
    let members: Vec<AugmentedAgentState> = group
        .members
        .iter()
        .filter_map(|id| states.get(id).copied())
        .collect();
    debug_assert_eq!(
        members.len(),
        group.members.len(),
        "group member without state"
    );
    space_from_members(group.label, &members, cfg)
}

fn space_from_members(
    label: usize,
    members: &[AugmentedAgentState],
    cfg: &GroupingConfig,
) -> GroupSpace {
    let mut samples = Vec::with_capacity(members.len() * cfg.boundary_samples);
    for m in members {
        samples.extend(personal_space(m, cfg.c, cfg.boundary_samples).boundary);
    }
    GroupSpace {
        label,
        polygon: Polygon::hull_of(&samples),
        member_ids: members.iter().map(|m| m.id).collect(),
    }
}

pub fn group_spaces(
    groups: &[Group],
    states: &StateIndex,
    cfg: &GroupingConfig,
) -> Vec<GroupSpace> {
    groups.iter().map(|g| group_space(g, states, cfg)).collect()
}

/// Outcome of [`shrink_until_outside`].
#[derive(Clone, Debug, PartialEq)]
pub struct ShrinkOutcome {
    pub spaces: Vec<GroupSpace>,
    pub effective_c: f64,
}

/// Rebuilds group spaces with a decreasing scale constant until the robot is
/// no longer strictly inside any of them, or the floor `c_min` is reached.
/// `spaces` must have been built from `groups` at `cfg.c`.
pub fn shrink_until_outside(
    spaces: Vec<GroupSpace>,
    robot: Vec2,
    groups: &[Group],
    states: &StateIndex,
    cfg: &GroupingConfig,
) -> ShrinkOutcome {
    let inside = |spaces: &[GroupSpace]| spaces.iter().any(|s| s.polygon.contains_strict(robot));
    let mut c = cfg.c;
    let mut spaces = spaces;
    while inside(&spaces) && c > cfg.c_min {
        c = (c - cfg.c_step).max(cfg.c_min);
        spaces = group_spaces(groups, states, &cfg.with_c(c));
    }
    ShrinkOutcome {
        spaces,
        effective_c: c,
    }
}

/// Fills each current member's state over a window of `h` frames.
///
/// `window` holds observed frames oldest first, the last one being the
/// current time. Observed states are kept. Missing frames are back-propagated
/// at constant velocity from the nearest later state, so an agent first seen
/// partway through the window is extended backward with its earliest known
/// velocity. Members absent from the current frame are skipped.
pub fn complete_member_histories(
    members: &[AgentId],
    window: &[Vec<AugmentedAgentState>],
    h: usize,
    dt: f64,
) -> BTreeMap<AgentId, Vec<AugmentedAgentState>> {
    let window = &window[window.len().saturating_sub(h)..];
    let offset = h - window.len();
    let observed = |frame: usize, id: AgentId| -> Option<AugmentedAgentState> {
        frame
            .checked_sub(offset)
            .and_then(|f| window[f].iter().find(|s| s.id == id).copied())
    };
    let mut out = BTreeMap::new();
    if h == 0 || window.is_empty() {
        return out;
    }
    for &id in members {
        let Some(current) = observed(h - 1, id) else {
            continue;
        };
        let mut track = vec![current; h];
        for tau in (0..h - 1).rev() {
            track[tau] = observed(tau, id).unwrap_or_else(|| {
                let next = track[tau + 1];
                AugmentedAgentState {
                    position: next.position - next.velocity * dt,
                    ..next
                }
            });
        }
        out.insert(id, track);
    }
    out
}

/// Group-space histories of length `h` for the current groups. Past
/// membership is coerced to the current one, and partially observed members
/// are completed by [`complete_member_histories`].
pub fn complete_group_history(
    current_groups: &[Group],
    window: &[Vec<AugmentedAgentState>],
    h: usize,
    dt: f64,
    cfg: &GroupingConfig,
) -> Vec<GroupSpaceSequence> {
    current_groups
        .iter()
        .map(|g| {
            let tracks = complete_member_histories(&g.members, window, h, dt);
            let spaces = (0..h)
                .map(|tau| {
                    let members: Vec<AugmentedAgentState> =
                        tracks.values().map(|t| t[tau]).collect();
                    space_from_members(g.label, &members, cfg)
                })
                .collect();
            GroupSpaceSequence {
                label: g.label,
                start_step: 1 - h as i64,
                spaces,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::AgentId;
    use proptest::prelude::*;

    fn agent(id: u64, x: f64, y: f64, heading_deg: f64, speed: f64) -> AugmentedAgentState {
        let heading = heading_deg.to_radians();
        AugmentedAgentState::from_velocity(
            AgentId(id),
            Vec2::new(x, y),
            Vec2::from_angle(heading) * speed,
        )
    }

    /// Union-find connected components over the neighbor predicate.
    fn brute_force_components(
        states: &[AugmentedAgentState],
        cfg: &GroupingConfig,
    ) -> Vec<Vec<AgentId>> {
        let n = states.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, i: usize) -> usize {
            if p[i] != i {
                let r = find(p, p[i]);
                p[i] = r;
            }
            p[i]
        }
        for i in 0..n {
            for j in 0..n {
                if cfg.are_neighbors(&states[i], &states[j]) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
        let mut comps: BTreeMap<usize, Vec<AgentId>> = BTreeMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            comps.entry(r).or_default().push(states[i].id);
        }
        let mut out: Vec<Vec<AgentId>> = comps
            .into_values()
            .map(|mut v| {
                v.sort();
                v
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn single_agent_is_singleton_group() {
        let g = cluster_groups(
            &[agent(4, 0.0, 0.0, 0.0, 1.0)],
            &GroupingConfig::open_scene(),
        );
        assert_eq!(
            g,
            vec![Group {
                label: 0,
                members: vec![AgentId(4)]
            }]
        );
    }

    #[test]
    fn close_similar_agents_group() {
        let cfg = GroupingConfig::open_scene();
        let g = cluster_groups(
            &[agent(1, 0.0, 0.0, 0.0, 1.0), agent(2, 1.0, 0.0, 10.0, 1.2)],
            &cfg,
        );
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].members, vec![AgentId(1), AgentId(2)]);
    }

    #[test]
    fn headings_wrap_around() {
        let cfg = GroupingConfig {
            eps_theta: 0.02,
            ..GroupingConfig::open_scene()
        };
        let a = AugmentedAgentState {
            heading: 0.01,
            ..agent(1, 0.0, 0.0, 0.0, 1.0)
        };
        let b = AugmentedAgentState {
            heading: TAU - 0.01,
            ..agent(2, 0.5, 0.0, 0.0, 1.0)
        };
        assert_eq!(cluster_groups(&[a, b], &cfg).len(), 1);
    }

    #[test]
    fn labels_follow_smallest_member() {
        let cfg = GroupingConfig::open_scene();
        let states = [
            agent(9, 50.0, 0.0, 0.0, 1.0),
            agent(3, 0.0, 0.0, 0.0, 1.0),
            agent(5, 50.5, 0.0, 0.0, 1.0),
            agent(1, 100.0, 0.0, 0.0, 1.0),
        ];
        let g = cluster_groups(&states, &cfg);
        let firsts: Vec<AgentId> = g.iter().map(|g| g.members[0]).collect();
        assert_eq!(firsts, vec![AgentId(1), AgentId(3), AgentId(5)]);
        assert_eq!(g[2].members, vec![AgentId(5), AgentId(9)]);
    }

    #[test]
    fn personal_space_closed_forms() {
        let moving = PersonalAxes::from_speed(1.0);
        assert!((moving.radial_extent(0.0, 0.35) - 1.4f64.sqrt()).abs() < 1e-12);
        assert!((moving.radial_extent(PI, 0.35) - 0.7f64.sqrt()).abs() < 1e-12);
        let still = PersonalAxes::from_speed(0.0);
        assert!((still.radial_extent(0.0, 0.35) - 0.35f64.sqrt()).abs() < 1e-12);

        let q = agent(1, 2.0, -1.0, 90.0, 1.0);
        let ps = personal_space(&q, 0.35, 64);
        assert_eq!(ps.boundary.len(), 64);
        assert_eq!((ps.sigma_f, ps.sigma_r), (2.0, 1.0));
        // phi = 0 points along the heading (+y here).
        let ahead = ps.boundary[0] - q.position;
        assert!((ahead - Vec2::new(0.0, 1.4f64.sqrt())).norm() < 1e-12);
    }

    #[test]
    fn group_space_of_two_exceeds_each_personal_space() {
        let cfg = GroupingConfig::open_scene();
        let states = [agent(1, 0.0, 0.0, 0.0, 1.0), agent(2, 0.0, 2.0, 0.0, 1.0)];
        let groups = cluster_groups(&states, &cfg);
        assert_eq!(groups.len(), 1);
        let space = group_space(&groups[0], &index_states(&states), &cfg);
        for s in &states {
            assert!(space.polygon.contains(s.position));
            let ps = Polygon::hull_of(&personal_space(s, cfg.c, 64).boundary);
            assert!(space.polygon.area() > ps.area());
        }
    }

    #[test]
    fn shrinking_stops_when_robot_exits() {
        let cfg = GroupingConfig::open_scene();
        let states = [agent(1, 0.0, 0.0, 0.0, 0.0)];
        let idx = index_states(&states);
        let groups = cluster_groups(&states, &cfg);
        let spaces = group_spaces(&groups, &idx, &cfg);

        let far = shrink_until_outside(spaces.clone(), Vec2::new(5.0, 0.0), &groups, &idx, &cfg);
        assert_eq!(far.effective_c, cfg.c);
        assert_eq!(far.spaces, spaces);

        // L_e(0) = sqrt(C) for a stationary agent; exits only once sqrt(C) < 0.3.
        let near = shrink_until_outside(spaces.clone(), Vec2::new(0.3, 0.0), &groups, &idx, &cfg);
        assert!((near.effective_c - 0.05).abs() < 1e-12);
        assert!(!near.spaces[0].polygon.contains_strict(Vec2::new(0.3, 0.0)));

        let on_top = shrink_until_outside(spaces, Vec2::ZERO, &groups, &idx, &cfg);
        assert_eq!(on_top.effective_c, cfg.c_min);
        assert!(on_top.spaces[0].polygon.contains_strict(Vec2::ZERO));
    }

    #[test]
    fn back_propagates_partial_member() {
        let cfg = GroupingConfig::open_scene();
        let newcomer = agent(2, 5.0, 0.0, 0.0, 1.0);
        let window: Vec<Vec<AugmentedAgentState>> = (0..8)
            .map(|k| {
                let mut frame = vec![agent(1, 0.1 * k as f64, 1.0, 0.0, 1.0)];
                if k == 7 {
                    frame.push(newcomer);
                }
                frame
            })
            .collect();
        let tracks = complete_member_histories(&[AgentId(1), AgentId(2)], &window, 8, 0.1);
        for (tau, s) in tracks[&AgentId(2)].iter().enumerate() {
            let k = (7 - tau) as f64;
            assert!(s.position.distance(Vec2::new(5.0 - 0.1 * k, 0.0)) < 1e-12);
        }
        for (tau, s) in tracks[&AgentId(1)].iter().enumerate() {
            assert_eq!(s, &window[tau][0]);
        }
        let groups = vec![Group {
            label: 0,
            members: vec![AgentId(1), AgentId(2)],
        }];
        let seq = &complete_group_history(&groups, &window, 8, 0.1, &cfg)[0];
        assert_eq!(seq.len(), 8);
        assert_eq!(seq.start_step, -7);
        for tau in 0..8 {
            for t in tracks.values() {
                assert!(seq.spaces[tau].polygon.contains(t[tau].position));
            }
        }
    }

    #[test]
    fn fully_observed_history_matches_direct_spaces() {
        let cfg = GroupingConfig::open_scene();
        let window: Vec<Vec<AugmentedAgentState>> = (0..8)
            .map(|k| {
                vec![
                    agent(1, 0.1 * k as f64, 0.0, 0.0, 1.0),
                    agent(2, 0.1 * k as f64, 1.0, 0.0, 1.0),
                ]
            })
            .collect();
        let groups = cluster_groups(&window[7], &cfg);
        let seq = &complete_group_history(&groups, &window, 8, 0.1, &cfg)[0];
        for (tau, frame) in window.iter().enumerate() {
            let direct = group_space(&groups[0], &index_states(frame), &cfg);
            assert_eq!(seq.spaces[tau], direct);
        }
    }

    #[test]
    fn short_window_is_padded_to_h() {
        let cfg = GroupingConfig::open_scene();
        let window = vec![vec![agent(1, 0.0, 0.0, 0.0, 1.0)]];
        let groups = cluster_groups(&window[0], &cfg);
        let seq = &complete_group_history(&groups, &window, 8, 0.1, &cfg)[0];
        assert_eq!(seq.len(), 8);
        let c0 = seq.spaces[0].polygon.centroid();
        let c7 = seq.spaces[7].polygon.centroid();
        assert!(((c7 - c0) - Vec2::new(0.7, 0.0)).norm() < 1e-9);
    }

    fn arb_agent(id: u64) -> impl Strategy<Value = AugmentedAgentState> {
        (0.0f64..6.0, 0.0f64..6.0, 0.0f64..TAU, 0.0f64..2.0).prop_map(move |(x, y, h, v)| {
            AugmentedAgentState {
                id: AgentId(id),
                position: Vec2::new(x, y),
                heading: h,
                speed: v,
                velocity: Vec2::from_angle(h) * v,
            }
        })
    }

    fn arb_crowd() -> impl Strategy<Value = Vec<AugmentedAgentState>> {
        (1usize..=10).prop_flat_map(|n| (0..n as u64).map(arb_agent).collect::<Vec<_>>())
    }

    proptest! {
        #[test]
        fn clustering_matches_brute_force(states in arb_crowd()) {
            let cfg = GroupingConfig::open_scene();
            let mut got: Vec<Vec<AgentId>> = cluster_groups(&states, &cfg).into_iter().map(|g| g.members).collect();
            got.sort();
            prop_assert_eq!(got, brute_force_components(&states, &cfg));
        }

        #[test]
        fn clustering_ignores_order_and_translation(states in arb_crowd(), dx in -100.0f64..100.0, dy in -100.0f64..100.0) {
            let cfg = GroupingConfig::open_scene();
            let base = cluster_groups(&states, &cfg);
            let mut shuffled = states.clone();
            shuffled.reverse();
            prop_assert_eq!(&cluster_groups(&shuffled, &cfg), &base);
            // Power-of-two offsets keep pairwise distances bit-exact.
            let d = Vec2::new((dx as i64) as f64 * 0.5, (dy as i64) as f64 * 0.5);
            let moved: Vec<_> = states.iter().map(|s| AugmentedAgentState { position: s.position + d, ..*s }).collect();
            prop_assert_eq!(cluster_groups(&moved, &cfg), base);
        }

        #[test]
        fn extent_scales_with_sqrt_c(speed in 0.0f64..2.0, c in 0.05f64..1.0, phi in 0.0f64..TAU) {
            let axes = PersonalAxes::from_speed(speed);
            let ratio = axes.radial_extent(phi, 2.0 * c) / axes.radial_extent(phi, c);
            prop_assert!((ratio - 2f64.sqrt()).abs() < 1e-12);
        }

        #[test]
        fn hull_contains_members_and_is_monotone_in_c(states in arb_crowd()) {
            let cfg = GroupingConfig::open_scene();
            let idx = index_states(&states);
            for g in cluster_groups(&states, &cfg) {
                let big = group_space(&g, &idx, &cfg);
                let small = group_space(&g, &idx, &cfg.with_c(cfg.c / 2.0));
                for id in &g.members {
                    let s = &idx[id];
                    prop_assert!(big.polygon.contains(s.position));
                    for b in personal_space(s, cfg.c, cfg.boundary_samples).boundary {
                        prop_assert!(big.polygon.contains(b));
                    }
                }
                for &v in small.polygon.vertices() {
                    prop_assert!(big.polygon.contains(v));
                }
            }
        }
    }
}
