//! Group-space forecasting and its IoU-based evaluation.
//!
//! An oracle maps a group's space history of length `h` to a forecast of
//! length `f`. Three oracles are provided: zero-order hold, rigid linear
//! translation at the area-centroid velocity, and an external oracle that
//! replays polygons produced by a separately trained model.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Polygon, Vec2};
use crate::grouping::{
    cluster_groups, group_space, index_states, GroupSpace, GroupSpaceSequence, GroupingConfig,
};
use crate::world::{AugmentedAgentState, WorldSnapshot};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    #[default]
    Linear,
    Hold,
    External,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub history_len: usize,
    pub horizon: usize,
    pub kind: OracleKind,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            history_len: 8,
            horizon: 8,
            kind: OracleKind::Linear,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig(
                "oracle horizon must be at least 1".into(),
            ));
        }
        let min = if self.kind == OracleKind::Linear {
            2
        } else {
            1
        };
        if self.history_len < min {
            return Err(Error::InvalidConfig(format!(
                "{:?} oracle needs history_len >= {min}",
                self.kind
            )));
        }
        Ok(())
    }
}

/// Identifies the planning call a forecast belongs to. Only the external
/// oracle looks at it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ForecastContext {
    pub trial_id: String,
    pub step: usize,
}

pub trait GroupSpaceOracle: Send + Sync {
    fn min_history(&self) -> usize;

    fn forecast(
        &self,
        history: &GroupSpaceSequence,
        horizon: usize,
        dt: f64,
        ctx: &ForecastContext,
    ) -> Result<Vec<Polygon>>;

    /// Forecast wrapped as a sequence starting right after the history.
    fn predict(
        &self,
        history: &GroupSpaceSequence,
        horizon: usize,
        dt: f64,
        ctx: &ForecastContext,
    ) -> Result<GroupSpaceSequence> {
        if history.len() < self.min_history() {
            return Err(Error::InsufficientHistory {
                needed: self.min_history(),
                got: history.len(),
            });
        }
        let last = history.last().expect("non-empty history");
        let spaces = self
            .forecast(history, horizon, dt, ctx)?
            .into_iter()
            .map(|polygon| GroupSpace {
                label: history.label,
                polygon,
                member_ids: last.member_ids.clone(),
            })
            .collect();
        Ok(GroupSpaceSequence {
            label: history.label,
            start_step: history.start_step + history.len() as i64,
            spaces,
        })
    }
}

/// Repeats the last observed polygon.
#[derive(Clone, Copy, Debug, Default)]
pub struct HoldOracle;

impl GroupSpaceOracle for HoldOracle {
    fn min_history(&self) -> usize {
        1
    }

    fn forecast(
        &self,
        history: &GroupSpaceSequence,
        horizon: usize,
        _dt: f64,
        _ctx: &ForecastContext,
    ) -> Result<Vec<Polygon>> {
        let last = &history.last().expect("checked by predict").polygon;
        Ok(vec![last.clone(); horizon])
    }
}

/// Translates the last polygon at the velocity of its area centroid.
#[derive(Clone, Copy, Debug, Default)]
pub struct LinearOracle;

impl LinearOracle {
    pub fn centroid_velocity(history: &GroupSpaceSequence, dt: f64) -> Vec2 {
        let n = history.len();
        let last = history.spaces[n - 1].polygon.centroid();
        let prev = history.spaces[n - 2].polygon.centroid();
        (last - prev) / dt
    }
}

impl GroupSpaceOracle for LinearOracle {
    fn min_history(&self) -> usize {
        2
    }

    fn forecast(
        &self,
        history: &GroupSpaceSequence,
        horizon: usize,
        dt: f64,
        _ctx: &ForecastContext,
    ) -> Result<Vec<Polygon>> {
        if history.len() < 2 {
            return Err(Error::InsufficientHistory {
                needed: 2,
                got: history.len(),
            });
        }
        let velocity = Self::centroid_velocity(history, dt);
        let last = &history.last().expect("len >= 2").polygon;
        Ok((1..=horizon)
            .map(|k| last.translated(velocity * (k as f64 * dt)))
            .collect())
    }
}

/// Forecasts read from a file of records
/// `trial_id step group_label x1 y1 x2 y2 ...`.
///
/// Records sharing `(trial_id, step, group_label)` are the forecast frames
/// `1..=f` in file order.
#[derive(Clone, Debug, Default)]
pub struct ExternalOracle {
    forecasts: HashMap<(String, usize, usize), Vec<Polygon>>,
}

impl ExternalOracle {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut forecasts: HashMap<(String, usize, usize), Vec<Polygon>> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let row = raw.trim();
            if row.is_empty() || row.starts_with('#') {
                continue;
            }
            let malformed = |reason: &str| Error::MalformedRow {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: reason.to_string(),
            };
            let cols: Vec<&str> = row.split_whitespace().collect();
            if cols.len() < 3 + 6 || (cols.len() - 3) % 2 != 0 {
                return Err(malformed(
                    "expected trial, step, label and at least three x y vertex pairs",
                ));
            }
            let step: usize = cols[1].parse().map_err(|_| malformed("bad step"))?;
            let label: usize = cols[2].parse().map_err(|_| malformed("bad group label"))?;
            let coords: Vec<f64> = cols[3..]
                .iter()
                .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<_>>()
                .ok_or_else(|| malformed("bad vertex coordinate"))?;
            let vertices: Vec<Vec2> = coords.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect();
            forecasts
                .entry((cols[0].to_string(), step, label))
                .or_default()
                .push(Polygon::hull_of(&vertices));
        }
        Ok(Self { forecasts })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }
}

impl GroupSpaceOracle for ExternalOracle {
    fn min_history(&self) -> usize {
        1
    }

    fn forecast(
        &self,
        history: &GroupSpaceSequence,
        horizon: usize,
        _dt: f64,
        ctx: &ForecastContext,
    ) -> Result<Vec<Polygon>> {
        let missing = || Error::MissingForecast {
            trial: ctx.trial_id.clone(),
            step: ctx.step,
            label: history.label,
        };
        let frames = self
            .forecasts
            .get(&(ctx.trial_id.clone(), ctx.step, history.label))
            .ok_or_else(missing)?;
        if frames.len() < horizon {
            return Err(missing());
        }
        Ok(frames[..horizon].to_vec())
    }
}

/// Raster used to compare shapes: a cell belongs to a shape when its center
/// lies inside (or on) the polygon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterGrid {
    pub resolution: f64,
    pub bounds: Aabb,
}

pub const DEFAULT_RESOLUTION: f64 = 0.05;

impl RasterGrid {
    pub fn new(resolution: f64, bounds: Aabb) -> Self {
        assert!(resolution > 0.0, "resolution must be positive");
        Self { resolution, bounds }
    }

    /// Grid covering all given polygons with a one-cell margin.
    pub fn covering<'a>(resolution: f64, polygons: impl IntoIterator<Item = &'a Polygon>) -> Self {
        let bounds = polygons
            .into_iter()
            .map(Polygon::bounds)
            .reduce(Aabb::union)
            .unwrap_or(Aabb::new(Vec2::ZERO, Vec2::new(resolution, resolution)));
        Self::new(resolution, bounds.expanded(resolution))
    }

    pub fn rows(&self) -> usize {
        (self.bounds.height() / self.resolution).ceil().max(1.0) as usize
    }

    pub fn cols(&self) -> usize {
        (self.bounds.width() / self.resolution).ceil().max(1.0) as usize
    }

    /// Inclusive column range of cell centers inside `poly` on `row`.
    fn row_span(&self, poly: &Polygon, row: usize) -> Option<(i64, i64)> {
        let y = self.bounds.min.y + (row as f64 + 0.5) * self.resolution;
        let (lo, hi) = poly.span_at(y)?;
        let first = ((lo - self.bounds.min.x) / self.resolution - 0.5).ceil() as i64;
        let last = ((hi - self.bounds.min.x) / self.resolution - 0.5).floor() as i64;
        let first = first.max(0);
        let last = last.min(self.cols() as i64 - 1);
        (first <= last).then_some((first, last))
    }

    /// Number of occupied cells.
    pub fn cell_count(&self, poly: &Polygon) -> u64 {
        (0..self.rows())
            .filter_map(|r| self.row_span(poly, r))
            .map(|(a, b)| (b - a + 1) as u64)
            .sum()
    }
}

/// Raster intersection over union. Two empty rasterizations compare as 1.
pub fn iou(a: &Polygon, b: &Polygon, grid: &RasterGrid) -> f64 {
    let mut inter = 0u64;
    let mut union = 0u64;
    for r in 0..grid.rows() {
        let sa = grid.row_span(a, r);
        let sb = grid.row_span(b, r);
        let len = |s: Option<(i64, i64)>| s.map_or(0, |(x, y)| (y - x + 1) as u64);
        let both = match (sa, sb) {
            (Some((a0, a1)), Some((b0, b1))) => {
                let (lo, hi) = (a0.max(b0), a1.min(b1));
                if lo <= hi {
                    (hi - lo + 1) as u64
                } else {
                    0
                }
            }
            _ => 0,
        };
        inter += both;
        union += len(sa) + len(sb) - both;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    /// Mean IoU over the forecast frames.
    pub miou: f64,
    /// IoU of the final frame.
    pub fiou: f64,
    pub per_frame: Vec<f64>,
}

/// Frame-by-frame IoU between a forecast and the observed future, each frame
/// rasterized on a grid covering both shapes.
pub fn evaluate_sequence(
    predicted: &[Polygon],
    actual: &[Polygon],
    resolution: f64,
) -> Result<SequenceScore> {
    if predicted.len() != actual.len() || predicted.is_empty() {
        return Err(Error::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    let per_frame: Vec<f64> = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| iou(p, a, &RasterGrid::covering(resolution, [p, a])))
        .collect();
    Ok(SequenceScore {
        miou: per_frame.iter().sum::<f64>() / per_frame.len() as f64,
        fiou: *per_frame.last().expect("non-empty"),
        per_frame,
    })
}

/// One group observed over `h + f` consecutive frames with fixed membership.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionWindow {
    pub history: GroupSpaceSequence,
    pub future: Vec<Polygon>,
}

/// Samples group windows from resampled snapshots.
///
/// Start frames are drawn uniformly with a seeded generator. Groups are
/// clustered at the last history frame; a group qualifies when all of its
/// members are present in every frame of the window.
pub fn sample_prediction_windows(
    snapshots: &[WorldSnapshot],
    cfg: &GroupingConfig,
    history_len: usize,
    horizon: usize,
    samples: usize,
    seed: u64,
) -> Vec<PredictionWindow> {
    let span = history_len + horizon;
    if history_len == 0 || snapshots.len() < span {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..samples {
        let t0 = rng.gen_range(0..=snapshots.len() - span);
        let frames = &snapshots[t0..t0 + span];
        let anchor = &frames[history_len - 1];
        for g in cluster_groups(&anchor.agents, cfg) {
            let members: Option<Vec<Vec<AugmentedAgentState>>> = frames
                .iter()
                .map(|f| g.members.iter().map(|&id| f.agent(id).copied()).collect())
                .collect();
            let Some(members) = members else { continue };
            let spaces: Vec<GroupSpace> = members
                .iter()
                .map(|m| group_space(&g, &index_states(m), cfg))
                .collect();
            let (hist, fut) = spaces.split_at(history_len);
            out.push(PredictionWindow {
                history: GroupSpaceSequence {
                    label: g.label,
                    start_step: 1 - history_len as i64,
                    spaces: hist.to_vec(),
                },
                future: fut.iter().map(|s| s.polygon.clone()).collect(),
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionScore {
    pub windows: usize,
    pub miou: f64,
    pub fiou: f64,
}

/// Mean mIoU and fIoU of an oracle over sampled windows; `None` when there
/// are no windows.
pub fn score_oracle(
    oracle: &dyn GroupSpaceOracle,
    windows: &[PredictionWindow],
    dt: f64,
    resolution: f64,
) -> Result<Option<PredictionScore>> {
    if windows.is_empty() {
        return Ok(None);
    }
    let ctx = ForecastContext::default();
    let (mut m, mut f) = (0.0, 0.0);
    for w in windows {
        let pred = oracle.forecast(&w.history, w.future.len(), dt, &ctx)?;
        let s = evaluate_sequence(&pred, &w.future, resolution)?;
        m += s.miou;
        f += s.fiou;
    }
    let n = windows.len() as f64;
    Ok(Some(PredictionScore {
        windows: windows.len(),
        miou: m / n,
        fiou: f / n,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::AgentId;
    use proptest::prelude::*;

    fn square(cx: f64, cy: f64, side: f64) -> Polygon {
        let h = side / 2.0;
        Polygon::hull_of(&[
            Vec2::new(cx - h, cy - h),
            Vec2::new(cx + h, cy - h),
            Vec2::new(cx + h, cy + h),
            Vec2::new(cx - h, cy + h),
        ])
    }

    fn seq(polys: Vec<Polygon>) -> GroupSpaceSequence {
        let n = polys.len() as i64;
        GroupSpaceSequence {
            label: 0,
            start_step: 1 - n,
            spaces: polys
                .into_iter()
                .map(|polygon| GroupSpace {
                    label: 0,
                    polygon,
                    member_ids: vec![AgentId(1)],
                })
                .collect(),
        }
    }

    #[test]
    fn hold_repeats_last() {
        let h = seq(vec![square(0.0, 0.0, 1.0), square(0.3, 0.0, 1.0)]);
        let p = HoldOracle
            .predict(&h, 4, 0.1, &ForecastContext::default())
            .unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.start_step, 1);
        assert!(p.spaces.iter().all(|s| s.polygon == h.spaces[1].polygon));
    }

    #[test]
    fn linear_oracle_translates_centroid() {
        let h = seq(vec![square(0.0, 0.0, 1.0), square(0.1, 0.0, 1.0)]);
        let p = LinearOracle
            .forecast(&h, 8, 0.1, &ForecastContext::default())
            .unwrap();
        assert!(p[2].centroid().distance(Vec2::new(0.4, 0.0)) < 1e-12);
        for (k, poly) in p.iter().enumerate() {
            let expect = 0.1 + 0.1 * (k + 1) as f64;
            assert!(poly.centroid().distance(Vec2::new(expect, 0.0)) < 1e-12);
        }
        let still = seq(vec![square(1.0, 1.0, 1.0), square(1.0, 1.0, 1.0)]);
        let p = LinearOracle
            .forecast(&still, 3, 0.1, &ForecastContext::default())
            .unwrap();
        assert!(p.iter().all(|q| q == &still.spaces[1].polygon));
    }

    #[test]
    fn linear_oracle_rejects_short_history() {
        let h = seq(vec![square(0.0, 0.0, 1.0)]);
        assert!(matches!(
            LinearOracle.predict(&h, 8, 0.1, &ForecastContext::default()),
            Err(Error::InsufficientHistory { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn iou_basic_cases() {
        let a = square(0.5, 0.5, 1.0);
        let grid = RasterGrid::covering(0.05, [&a]);
        assert_eq!(iou(&a, &a, &grid), 1.0);
        let far = square(5.0, 5.0, 1.0);
        let g2 = RasterGrid::covering(0.05, [&a, &far]);
        assert_eq!(iou(&a, &far, &g2), 0.0);
        let shifted = square(1.0, 0.5, 1.0);
        let g3 = RasterGrid::covering(0.05, [&a, &shifted]);
        assert!((iou(&a, &shifted, &g3) - 1.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn empty_rasters_compare_equal() {
        let tiny = Polygon::regular(Vec2::new(0.0, 0.0), 1e-4, 3);
        let grid = RasterGrid::new(0.05, Aabb::new(Vec2::new(0.01, 0.01), Vec2::new(1.0, 1.0)));
        assert_eq!(grid.cell_count(&tiny), 0);
        assert_eq!(iou(&tiny, &tiny, &grid), 1.0);
    }

    #[test]
    fn sequence_scores() {
        let polys: Vec<Polygon> = (1..=8).map(|k| square(0.1 * k as f64, 0.0, 1.0)).collect();
        let perfect = evaluate_sequence(&polys, &polys, 0.05).unwrap();
        assert_eq!((perfect.miou, perfect.fiou), (1.0, 1.0));
        let held = vec![square(0.0, 0.0, 1.0); 8];
        let s = evaluate_sequence(&held, &polys, 0.05).unwrap();
        assert!(s.fiou < s.miou);
        assert!(matches!(
            evaluate_sequence(&held[..3], &polys, 0.05),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn external_oracle_round_trip() {
        let text = "trial-a 12 3 0 0 1 0 1 1 0 1\ntrial-a 12 3 1 0 2 0 2 1 1 1\n";
        let oracle = ExternalOracle::parse(text, Path::new("forecast.txt")).unwrap();
        let h = GroupSpaceSequence {
            label: 3,
            ..seq(vec![square(0.0, 0.0, 1.0)])
        };
        let ctx = ForecastContext {
            trial_id: "trial-a".into(),
            step: 12,
        };
        let p = oracle.forecast(&h, 2, 0.1, &ctx).unwrap();
        assert!(p[1].centroid().distance(Vec2::new(1.5, 0.5)) < 1e-12);
        assert!(matches!(
            oracle.forecast(&h, 3, 0.1, &ctx),
            Err(Error::MissingForecast { .. })
        ));
        let other = ForecastContext { step: 13, ..ctx };
        assert!(oracle.forecast(&h, 1, 0.1, &other).is_err());
        assert!(ExternalOracle::parse("t 1 0 0 0 1\n", Path::new("x")).is_err());
    }

    fn arb_poly() -> impl Strategy<Value = Polygon> {
        prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 3..12).prop_map(|pts| {
            Polygon::hull_of(
                &pts.into_iter()
                    .map(|(x, y)| Vec2::new(x, y))
                    .collect::<Vec<_>>(),
            )
        })
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(a in arb_poly(), b in arb_poly()) {
            let grid = RasterGrid::covering(0.05, [&a, &b]);
            let ab = iou(&a, &b, &grid);
            prop_assert_eq!(ab, iou(&b, &a, &grid));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou(&a, &a, &grid), 1.0);
        }

        #[test]
        fn iou_translation_invariant(a in arb_poly(), b in arb_poly(), i in -40i32..40, j in -40i32..40) {
            // Shifts by whole cells of a dyadic resolution keep cell centers exact.
            let res = 0.0625;
            let d = Vec2::new(i as f64 * res * 4.0, j as f64 * res * 4.0);
            let grid = RasterGrid::covering(res, [&a, &b]);
            let moved = RasterGrid::new(res, grid.bounds.translated(d));
            let before = iou(&a, &b, &grid);
            let after = iou(&a.translated(d), &b.translated(d), &moved);
            prop_assert!((before - after).abs() < 0.02, "{} vs {}", before, after);
        }

        #[test]
        fn linear_oracle_is_rigid_and_equivariant(a in arb_poly(), dx in -1.0f64..1.0, dy in -1.0f64..1.0, sx in -5.0f64..5.0, sy in -5.0f64..5.0) {
            let h = seq(vec![a.clone(), a.translated(Vec2::new(dx, dy))]);
            let ctx = ForecastContext::default();
            let p = LinearOracle.forecast(&h, 8, 0.1, &ctx).unwrap();
            let last = &h.spaces[1].polygon;
            for q in &p {
                let (lv, qv) = (last.vertices(), q.vertices());
                for i in 0..lv.len() {
                    for j in 0..lv.len() {
                        prop_assert!((lv[i].distance(lv[j]) - qv[i].distance(qv[j])).abs() < 1e-12);
                    }
                }
            }
            let s = Vec2::new(sx, sy);
            let shifted = seq(h.spaces.iter().map(|g| g.polygon.translated(s)).collect());
            let ps = LinearOracle.forecast(&shifted, 8, 0.1, &ctx).unwrap();
            for (q, qs) in p.iter().zip(&ps) {
                prop_assert!(q.centroid().distance(qs.centroid() - s) < 1e-9);
            }
        }

        #[test]
        fn miou_lies_between_frame_extremes(polys in prop::collection::vec(arb_poly(), 1..6), other in arb_poly()) {
            let actual = vec![other; polys.len()];
            let s = evaluate_sequence(&polys, &actual, 0.05).unwrap();
            let lo = s.per_frame.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = s.per_frame.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s.miou >= lo - 1e-12 && s.miou <= hi + 1e-12);
        }
    }
}
