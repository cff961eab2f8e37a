//! Run configuration file.
//!
//! One TOML document holds every parameter of an experiment. Angles are in
//! degrees here and converted to radians when the core configs are built.
//! Relative dataset paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use groupnav_core::geometry::Vec2;
use groupnav_core::grouping::GroupingConfig;
use groupnav_core::planner::{GoalCostRule, PlannerConfig, LAMBDA_NON_REACTIVE, LAMBDA_REACTIVE};
use groupnav_core::prediction::{OracleConfig, OracleKind, DEFAULT_RESOLUTION};
use groupnav_core::simulator::lidar::LidarConfig;
use groupnav_core::simulator::orca::OrcaConfig;
use groupnav_core::simulator::{
    Condition, Perception, SegmentationParams, SimConfig, Task, TaskEndpoints, TestRegion,
};
use groupnav_core::world::{DatasetFormat, WorldConfig};
use groupnav_core::PolicyKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub policies: Vec<PolicyKind>,
    pub condition: Condition,
    pub perception: Perception,
    /// Keep every n-th snapshot in written trial records.
    pub record_stride: usize,
    pub world: WorldConfig,
    pub planner: PlannerSection,
    pub oracle: OracleSection,
    pub grouping: GroupingSection,
    pub lidar: LidarSection,
    pub orca: OrcaConfig,
    pub segmentation: SegmentationParams,
    pub prediction: PredictionSection,
    pub scenes: Vec<SceneConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSection {
    pub lambda_offline: f64,
    pub lambda_online: f64,
    pub gamma: f64,
    pub directions: usize,
    pub speed_fractions: Vec<f64>,
    pub turn_rates_deg: Vec<f64>,
    pub goal_rule: GoalCostRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub kind: OracleKind,
    pub history_len: usize,
    pub horizon: usize,
    /// Forecast file for the external oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupingSection {
    pub c_min: f64,
    pub c_step: f64,
    pub boundary_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarSection {
    pub fov_deg: f64,
    pub resolution_deg: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub pedestrian_radius: f64,
    pub cluster_jump: f64,
    pub association_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionSection {
    /// Random start frames drawn per scene.
    pub samples: usize,
    pub resolution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoints {
    pub start: Vec2,
    pub goal: Vec2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub name: String,
    pub dataset: PathBuf,
    pub format: DatasetFormat,
    /// Seconds between annotated frames.
    pub frame_interval: f64,
    pub eps_s: f64,
    pub eps_theta_deg: f64,
    pub eps_v: f64,
    pub c: f64,
    pub region: TestRegion,
    pub flow: Endpoints,
    pub cross: Endpoints,
}

impl SceneConfig {
    pub fn tasks(&self) -> [TaskEndpoints; 2] {
        [
            TaskEndpoints {
                task: Task::Flow,
                start: self.flow.start,
                goal: self.flow.goal,
            },
            TaskEndpoints {
                task: Task::Cross,
                start: self.cross.start,
                goal: self.cross.goal,
            },
        ]
    }
}

fn open_scene(
    name: &str,
    region: ([f64; 2], [f64; 2]),
    flow: ([f64; 2], [f64; 2]),
    cross: ([f64; 2], [f64; 2]),
) -> SceneConfig {
    let g = GroupingConfig::open_scene();
    let ends = |(s, e): ([f64; 2], [f64; 2])| Endpoints {
        start: s.into(),
        goal: e.into(),
    };
    SceneConfig {
        name: name.to_string(),
        dataset: PathBuf::from(format!("datasets/{name}.txt")),
        format: DatasetFormat::FramePedXy,
        frame_interval: 0.4,
        eps_s: g.eps_s,
        eps_theta_deg: g.eps_theta.to_degrees().round(),
        eps_v: g.eps_v,
        c: g.c,
        region: TestRegion {
            min: region.0.into(),
            max: region.1.into(),
        },
        flow: ends(flow),
        cross: ends(cross),
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let planner = PlannerConfig::default();
        let oracle = OracleConfig::default();
        let grouping = GroupingConfig::open_scene();
        let lidar = LidarConfig::default();
        let dense = GroupingConfig::dense_scene();
        let mut univ = open_scene(
            "univ",
            ([3.0, 3.0], [12.0, 11.0]),
            ([1.0, 7.0], [14.0, 7.0]),
            ([7.5, 1.0], [7.5, 13.0]),
        );
        univ.eps_s = dense.eps_s;
        univ.eps_theta_deg = dense.eps_theta.to_degrees().round();
        univ.eps_v = dense.eps_v;
        univ.c = dense.c;
        Self {
            seed: 0,
            workers: 1,
            out: PathBuf::from("runs"),
            policies: PolicyKind::ALL.to_vec(),
            condition: Condition::Offline,
            perception: Perception::GroundTruth,
            record_stride: 1,
            world: WorldConfig::default(),
            planner: PlannerSection {
                lambda_offline: LAMBDA_NON_REACTIVE,
                lambda_online: LAMBDA_REACTIVE,
                gamma: planner.gamma,
                directions: planner.directions,
                speed_fractions: planner.speed_fractions,
                turn_rates_deg: planner.turn_rates.iter().map(|w| w.to_degrees()).collect(),
                goal_rule: planner.goal_rule,
            },
            oracle: OracleSection {
                kind: oracle.kind,
                history_len: oracle.history_len,
                horizon: oracle.horizon,
                external_path: None,
            },
            grouping: GroupingSection {
                c_min: grouping.c_min,
                c_step: grouping.c_step,
                boundary_samples: grouping.boundary_samples,
            },
            lidar: LidarSection {
                fov_deg: lidar.fov.to_degrees(),
                resolution_deg: lidar.angular_resolution.to_degrees(),
                max_range: lidar.max_range,
                range_noise_sigma: lidar.range_noise_sigma,
                pedestrian_radius: lidar.pedestrian_radius,
                cluster_jump: lidar.cluster_jump,
                association_distance: lidar.association_distance,
            },
            orca: OrcaConfig::default(),
            segmentation: SegmentationParams::default(),
            prediction: PredictionSection {
                samples: 500,
                resolution: DEFAULT_RESOLUTION,
            },
            scenes: vec![
                open_scene(
                    "eth",
                    ([0.0, -1.0], [10.0, 7.0]),
                    ([-2.0, 3.0], [12.0, 3.0]),
                    ([5.0, -4.0], [5.0, 10.0]),
                ),
                open_scene(
                    "hotel",
                    ([-2.0, -7.0], [3.5, 1.0]),
                    ([1.0, -8.0], [1.0, 3.0]),
                    ([-2.5, -3.0], [4.0, -3.0]),
                ),
                open_scene(
                    "zara1",
                    ([3.0, 2.0], [12.0, 8.0]),
                    ([1.0, 5.0], [14.0, 5.0]),
                    ([7.5, 1.0], [7.5, 9.0]),
                ),
                open_scene(
                    "zara2",
                    ([3.0, 3.0], [12.0, 9.0]),
                    ([1.0, 6.0], [14.0, 6.0]),
                    ([7.5, 2.0], [7.5, 10.0]),
                ),
                univ,
            ],
        }
    }
}

const HEADER: &str = "\
# groupnav run configuration.
#
# Angles are in degrees. Dataset paths are relative to this file.
# Test regions and task endpoints are approximate; adjust them to the
# coordinate frame of your copy of each recording.

";

/// The default configuration as TOML, with a short header.
pub fn default_config_text() -> String {
    let body = toml::to_string_pretty(&RunConfig::default()).expect("default config serializes");
    format!("{HEADER}{body}")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for s in &mut cfg.scenes {
            if s.dataset.is_relative() {
                s.dataset = base.join(&s.dataset);
            }
        }
        if let Some(p) = &mut cfg.oracle.external_path {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenes.is_empty() {
            bail!("config lists no scenes");
        }
        if self.policies.is_empty() {
            bail!("config lists no policies");
        }
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        if self.record_stride == 0 {
            bail!("record_stride must be at least 1");
        }
        if self.prediction.samples == 0 || !(self.prediction.resolution > 0.0) {
            bail!("prediction samples and resolution must be positive");
        }
        let mut names = std::collections::BTreeSet::new();
        for s in &self.scenes {
            if !names.insert(s.name.as_str()) {
                bail!("scene {} listed twice", s.name);
            }
            if !(s.frame_interval > 0.0) {
                bail!("scene {}: frame_interval must be positive", s.name);
            }
            TestRegion::new(s.region.min, s.region.max)
                .with_context(|| format!("scene {}", s.name))?;
            self.grouping_for(s)
                .validate()
                .with_context(|| format!("scene {}", s.name))?;
            self.sim_config(s, Condition::Offline)
                .validate()
                .with_context(|| format!("scene {}", s.name))?;
        }
        if self.oracle.kind == OracleKind::External && self.oracle.external_path.is_none() {
            bail!("oracle.kind = \"external\" needs oracle.external_path");
        }
        Ok(())
    }

    pub fn scene(&self, name: &str) -> Result<&SceneConfig> {
        self.scenes
            .iter()
            .find(|s| s.name == name)
            .with_context(|| format!("scene {name} is not in the config"))
    }

    pub fn grouping_for(&self, scene: &SceneConfig) -> GroupingConfig {
        GroupingConfig {
            eps_s: scene.eps_s,
            eps_theta: scene.eps_theta_deg.to_radians(),
            eps_v: scene.eps_v,
            c: scene.c,
            c_min: self.grouping.c_min,
            c_step: self.grouping.c_step,
            boundary_samples: self.grouping.boundary_samples,
        }
    }

    pub fn sim_config(&self, scene: &SceneConfig, condition: Condition) -> SimConfig {
        let p = &self.planner;
        SimConfig {
            world: self.world.clone(),
            grouping: self.grouping_for(scene),
            planner: PlannerConfig {
                lambda: match condition {
                    Condition::Offline => p.lambda_offline,
                    Condition::Online => p.lambda_online,
                },
                gamma: p.gamma,
                horizon: self.oracle.horizon,
                directions: p.directions,
                speed_fractions: p.speed_fractions.clone(),
                turn_rates: p.turn_rates_deg.iter().map(|w| w.to_radians()).collect(),
                goal_rule: p.goal_rule,
                policy: PolicyKind::default(),
            },
            oracle: OracleConfig {
                history_len: self.oracle.history_len,
                horizon: self.oracle.horizon,
                kind: self.oracle.kind,
            },
            lidar: LidarConfig {
                fov: self.lidar.fov_deg.to_radians(),
                angular_resolution: self.lidar.resolution_deg.to_radians(),
                max_range: self.lidar.max_range,
                range_noise_sigma: self.lidar.range_noise_sigma,
                pedestrian_radius: self.lidar.pedestrian_radius,
                cluster_jump: self.lidar.cluster_jump,
                association_distance: self.lidar.association_distance,
            },
            orca: self.orca.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_text_round_trips() {
        let cfg: RunConfig = toml::from_str(&default_config_text()).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn degrees_convert_to_core_radians() {
        let cfg = RunConfig::default();
        let sim = cfg.sim_config(&cfg.scenes[0], Condition::Offline);
        let core = GroupingConfig::open_scene();
        assert!((sim.grouping.eps_theta - core.eps_theta).abs() < 1e-12);
        assert!((sim.lidar.fov - LidarConfig::default().fov).abs() < 1e-12);
        assert_eq!(sim.planner.turn_rates.len(), 3);
        assert!((sim.planner.turn_rates[1] - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn lambda_follows_condition() {
        let cfg = RunConfig::default();
        let s = &cfg.scenes[0];
        assert_eq!(cfg.sim_config(s, Condition::Offline).planner.lambda, 0.65);
        assert_eq!(cfg.sim_config(s, Condition::Online).planner.lambda, 0.3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = default_config_text().replace("seed = 0", "seed = 0\nsede = 1");
        assert!(toml::from_str::<RunConfig>(&text).is_err());
    }
}
