//! Planar geometry shared by every other module: a small 2D vector type,
//! monotone-chain convex hulls and convex-polygon queries.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A point or displacement in the plane, in meters.
///
/// Serializes as a two-element array `[x, y]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at angle `theta` from the +x axis.
    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Counterclockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0).then(|| self / n)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, other: Vec2, alpha: f64) -> Vec2 {
        self + (other - self) * alpha
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec2>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut b = Aabb::new(first, first);
        for p in it {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
        }
        Some(b)
    }

    pub fn union(self, other: Aabb) -> Aabb {
        Aabb::new(
            Vec2::new(self.min.x.min(other.min.x), self.min.y.min(other.min.y)),
            Vec2::new(self.max.x.max(other.max.x), self.max.y.max(other.max.y)),
        )
    }

    pub fn expanded(self, margin: f64) -> Aabb {
        Aabb::new(
            self.min - Vec2::new(margin, margin),
            self.max + Vec2::new(margin, margin),
        )
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn translated(self, d: Vec2) -> Aabb {
        Aabb::new(self.min + d, self.max + d)
    }
}

/// Tolerance used by orientation predicates, relative to coordinate scale.
const ORIENT_EPS: f64 = 1e-12;

/// A convex polygon with counterclockwise vertices and no repeated closing vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon {
    vertices: Vec<Vec2>,
}

impl Polygon {
    /// Wraps vertices that are already convex and counterclockwise.
    pub fn from_ccw_unchecked(vertices: Vec<Vec2>) -> Self {
        Self { vertices }
    }

    /// Convex hull of an arbitrary point set. Degenerate inputs (empty, a
    /// single point, or collinear points) are inflated to a triangle with
    /// circumradius 1 mm around their mean so the result always has positive
    /// area.
    pub fn hull_of(points: &[Vec2]) -> Self {
        let hull = convex_hull(points);
        if hull.len() >= 3 {
            return Self { vertices: hull };
        }
        let center = if points.is_empty() {
            Vec2::ZERO
        } else {
            points.iter().fold(Vec2::ZERO, |acc, &p| acc + p) / points.len() as f64
        };
        Self::regular(center, 1e-3, 3)
    }

    /// Regular polygon with `n` vertices on a circle.
    pub fn regular(center: Vec2, circumradius: f64, n: usize) -> Self {
        let vertices = (0..n)
            .map(|k| {
                center
                    + Vec2::from_angle(std::f64::consts::TAU * k as f64 / n as f64) * circumradius
            })
            .collect();
        Self { vertices }
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Signed area (positive for counterclockwise order).
    pub fn area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a.cross(b)).sum::<f64>()
    }

    /// Area centroid. Falls back to the vertex mean for zero-area input.
    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len();
        if n == 0 {
            return Vec2::ZERO;
        }
        // Shift to the first vertex to keep the accumulation well conditioned.
        let origin = self.vertices[0];
        let mut area2 = 0.0;
        let mut acc = Vec2::ZERO;
        for (a, b) in self.edges() {
            let (a, b) = (a - origin, b - origin);
            let c = a.cross(b);
            area2 += c;
            acc += (a + b) * c;
        }
        if area2.abs() <= f64::EPSILON {
            return self.vertices.iter().fold(Vec2::ZERO, |s, &p| s + p) / n as f64;
        }
        origin + acc / (3.0 * area2)
    }

    pub fn translated(&self, d: Vec2) -> Polygon {
        Polygon {
            vertices: self.vertices.iter().map(|&v| v + d).collect(),
        }
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices).unwrap_or(Aabb::new(Vec2::ZERO, Vec2::ZERO))
    }

    fn scale(&self) -> f64 {
        let b = self.bounds();
        1.0 + b.width().max(b.height())
    }

    /// Closed containment: true for interior and boundary points.
    pub fn contains(&self, p: Vec2) -> bool {
        if self.vertices.len() < 3 {
            return false;
        }
        let eps = ORIENT_EPS * self.scale();
        self.edges()
            .all(|(a, b)| (b - a).cross(p - a) >= -eps * (b - a).norm())
    }

    /// Open containment: true only for interior points.
    pub fn contains_strict(&self, p: Vec2) -> bool {
        if self.vertices.len() < 3 {
            return false;
        }
        let eps = ORIENT_EPS * self.scale();
        self.edges()
            .all(|(a, b)| (b - a).cross(p - a) > eps * (b - a).norm())
    }

    /// Distance from `p` to the polygon boundary, regardless of side.
    pub fn boundary_distance(&self, p: Vec2) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance from `p` to the filled polygon (zero inside).
    pub fn distance(&self, p: Vec2) -> f64 {
        if self.contains(p) {
            0.0
        } else {
            self.boundary_distance(p)
        }
    }

    /// Horizontal extent of the polygon at height `y`, or `None` when the
    /// line misses it.
    pub fn span_at(&self, y: f64) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (a, b) in self.edges() {
            let (ymin, ymax) = if a.y <= b.y { (a.y, b.y) } else { (b.y, a.y) };
            if y < ymin || y > ymax {
                continue;
            }
            if (b.y - a.y).abs() <= f64::EPSILON {
                lo = lo.min(a.x.min(b.x));
                hi = hi.max(a.x.max(b.x));
            } else {
                let x = a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x);
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        (lo <= hi).then_some((lo, hi))
    }
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Andrew's monotone chain. Returns the hull counterclockwise starting from
/// the lexicographically smallest point, with collinear points dropped.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.iter().copied().filter(|p| p.is_finite()).collect();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let turn = |o: Vec2, a: Vec2, b: Vec2| (a - o).cross(b - o);
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_two_pi(theta: f64) -> f64 {
    let w = theta.rem_euclid(std::f64::consts::TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if w >= std::f64::consts::TAU {
        0.0
    } else {
        w
    }
}

/// Smallest absolute difference between two angles, in `[0, π]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = wrap_two_pi(a - b);
    d.min(std::f64::consts::TAU - d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    fn unit_square() -> Polygon {
        Polygon::hull_of(&[
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ])
    }

    #[test]
    fn hull_drops_interior_and_collinear_points() {
        let pts = [
            Vec2::new(0.0, 0.0),
            Vec2::new(0.5, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(0.5, 0.5),
        ];
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        assert!(Polygon::from_ccw_unchecked(hull).area() > 0.0);
    }

    #[test]
    fn degenerate_hull_is_inflated() {
        let p = Polygon::hull_of(&[Vec2::new(2.0, 3.0)]);
        assert_eq!(p.len(), 3);
        assert!(p.area() > 0.0);
        assert!(p.contains(Vec2::new(2.0, 3.0)));
        let line = Polygon::hull_of(&[
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(2.0, 2.0),
        ]);
        assert!(line.area() > 0.0);
        assert!(line.contains(Vec2::new(1.0, 1.0)));
    }

    #[test]
    fn square_queries() {
        let sq = unit_square();
        assert!((sq.area() - 1.0).abs() < 1e-15);
        assert!(sq.centroid().distance(Vec2::new(0.5, 0.5)) < 1e-15);
        assert!(sq.contains(Vec2::new(1.0, 0.5)));
        assert!(!sq.contains_strict(Vec2::new(1.0, 0.5)));
        assert!(sq.contains_strict(Vec2::new(0.5, 0.5)));
        assert!((sq.boundary_distance(Vec2::new(0.5, 0.3)) - 0.3).abs() < 1e-15);
        assert!((sq.distance(Vec2::new(2.0, 0.5)) - 1.0).abs() < 1e-15);
        assert_eq!(sq.distance(Vec2::new(0.2, 0.2)), 0.0);
        assert_eq!(sq.span_at(0.5), Some((0.0, 1.0)));
        assert_eq!(sq.span_at(1.5), None);
    }

    #[test]
    fn angles() {
        assert!((wrap_two_pi(-PI / 2.0) - 3.0 * PI / 2.0).abs() < 1e-15);
        assert!(wrap_two_pi(-1e-18) < TAU);
        assert!((angular_distance(0.01, TAU - 0.01) - 0.02).abs() < 1e-12);
        assert!((angular_distance(0.0, PI) - PI).abs() < 1e-15);
    }
}
