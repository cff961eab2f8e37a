use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use groupnav_core::geometry::{Polygon, Vec2};
use groupnav_core::grouping::{cluster_groups, group_spaces, index_states, GroupingConfig};
use groupnav_core::planner::{Planner, PlannerConfig};
use groupnav_core::prediction::{
    iou, ForecastContext, LinearOracle, RasterGrid, DEFAULT_RESOLUTION,
};
use groupnav_core::simulator::lidar::{detect_centers, simulate_lidar, LidarConfig, Pose};
use groupnav_core::simulator::synthetic::crossing_scenario;
use groupnav_core::world::{resample, AgentId, AugmentedAgentState, WorldSnapshot};

fn crowd_frames() -> Vec<WorldSnapshot> {
    resample(&crossing_scenario(3, 12, 0.1).recording, 0.1)
}

fn busiest(frames: &[WorldSnapshot]) -> usize {
    (0..frames.len())
        .max_by_key(|&k| frames[k].agents.len())
        .unwrap_or(0)
}

fn bench_grouping(c: &mut Criterion) {
    let frames = crowd_frames();
    let agents = frames[busiest(&frames)].agents.clone();
    let cfg = GroupingConfig::open_scene();
    c.bench_function("cluster_and_group_spaces_12_agents", |b| {
        b.iter(|| {
            let groups = cluster_groups(black_box(&agents), &cfg);
            group_spaces(&groups, &index_states(&agents), &cfg)
        })
    });
}

fn bench_plan(c: &mut Criterion) {
    let frames = crowd_frames();
    let k = busiest(&frames).max(8);
    let window: Vec<Vec<AugmentedAgentState>> =
        frames[k - 7..=k].iter().map(|s| s.agents.clone()).collect();
    let planner = Planner::new(
        PlannerConfig::default(),
        GroupingConfig::open_scene(),
        8,
        Arc::new(LinearOracle),
        0.1,
        1.75,
    )
    .unwrap();
    let ctx = ForecastContext::default();
    c.bench_function("plan_108_rollouts", |b| {
        b.iter(|| {
            planner
                .plan(
                    black_box(&window),
                    Vec2::new(-7.0, 0.0),
                    Vec2::new(7.0, 0.0),
                    &ctx,
                )
                .unwrap()
        })
    });
}

fn bench_iou(c: &mut Criterion) {
    let a = Polygon::regular(Vec2::ZERO, 1.5, 64);
    let b = a.translated(Vec2::new(0.4, 0.3));
    let grid = RasterGrid::covering(DEFAULT_RESOLUTION, [&a, &b]);
    c.bench_function("raster_iou_64gon", |bch| {
        bch.iter(|| iou(black_box(&a), black_box(&b), &grid))
    });
}

fn bench_lidar(c: &mut Criterion) {
    let snapshot = WorldSnapshot {
        time_index: 0,
        robot: None,
        agents: (0..20)
            .map(|i| {
                let p = Vec2::from_angle(i as f64 * 0.3) * (2.0 + 0.4 * i as f64);
                AugmentedAgentState::stationary(AgentId(i), p)
            })
            .collect(),
    };
    let cfg = LidarConfig::default();
    let pose = Pose {
        position: Vec2::ZERO,
        heading: 0.0,
    };
    c.bench_function("lidar_scan_and_detect_20_peds", |b| {
        b.iter(|| {
            let scan = simulate_lidar(black_box(&snapshot), pose, &cfg, 1);
            detect_centers(&scan, &cfg)
        })
    });
}

criterion_group!(kernels, bench_grouping, bench_plan, bench_iou, bench_lidar);
criterion_main!(kernels);
