//! Planar geometry shared by the scene compiler and the simulator.
//! World frame: x east, y north, headings in radians counter-clockwise from east.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Self) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Self) -> f64 {
        (self - o).norm()
    }

    /// Rotated +90 degrees (to the left).
    pub fn left(self) -> Self {
        Self::new(-self.y, self.x)
    }

    /// Rotated -90 degrees (to the right).
    pub fn right(self) -> Self {
        Self::new(self.y, -self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn rotate(self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn lerp(self, o: Self, t: f64) -> Self {
        self + (o - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Points from `a` to `b` inclusive, spaced at most `step` apart.
pub fn sample_segment(a: Vec2, b: Vec2, step: f64) -> Vec<Vec2> {
    if a.dist(b) < 1e-12 {
        return vec![a];
    }
    let n = ((a.dist(b) / step).ceil() as usize).max(1);
    (0..=n).map(|k| a.lerp(b, k as f64 / n as f64)).collect()
}

/// Points on a circular arc around `center` from angle `a0` to `a1`
/// (direction given by the sign of `a1 - a0`), spaced at most `step` apart.
pub fn sample_arc(center: Vec2, radius: f64, a0: f64, a1: f64, step: f64) -> Vec<Vec2> {
    let n = (((a1 - a0).abs() * radius / step).ceil() as usize).max(1);
    (0..=n)
        .map(|k| center + Vec2::from_angle(a0 + (a1 - a0) * k as f64 / n as f64) * radius)
        .collect()
}

/// Appends `tail` to `head`, dropping a first point that repeats the last one.
pub fn chain(head: &mut Vec<Vec2>, tail: &[Vec2]) {
    let skip = match (head.last(), tail.first()) {
        (Some(a), Some(b)) if a.dist(*b) < 1e-9 => 1,
        _ => 0,
    };
    head.extend_from_slice(&tail[skip..]);
}

/// Cumulative arc length at every vertex.
pub fn stations(points: &[Vec2]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len());
    let mut s = 0.0;
    for (i, p) in points.iter().enumerate() {
        if i > 0 {
            s += p.dist(points[i - 1]);
        }
        out.push(s);
    }
    out
}

/// Heading of the polyline at each vertex (forward difference, last copies previous).
pub fn headings(points: &[Vec2]) -> Vec<f64> {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (a, b) = if i + 1 < n {
                (points[i], points[i + 1])
            } else {
                (points[i.saturating_sub(1)], points[i])
            };
            (b - a).angle()
        })
        .collect()
}

/// Point and segment index at arc length `s` (clamped to the polyline).
pub fn point_at(points: &[Vec2], st: &[f64], s: f64) -> (Vec2, usize) {
    let last = points.len() - 1;
    if s <= 0.0 || last == 0 {
        return (points[0], 0);
    }
    if s >= st[last] {
        return (points[last], last.saturating_sub(1));
    }
    let i = st.partition_point(|&v| v <= s).saturating_sub(1).min(last - 1);
    let seg = st[i + 1] - st[i];
    let t = if seg > 0.0 { (s - st[i]) / seg } else { 0.0 };
    (points[i].lerp(points[i + 1], t), i)
}

/// Distance from `p` to the polyline.
pub fn distance_to_polyline(p: Vec2, points: &[Vec2]) -> f64 {
    if points.len() == 1 {
        return p.dist(points[0]);
    }
    points
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            let len2 = d.dot(d);
            let t = if len2 > 0.0 {
                ((p - w[0]).dot(d) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            p.dist(w[0] + d * t)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Radius of the circle through three points; infinite when collinear.
pub fn circumradius(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let area2 = (b - a).cross(c - a).abs();
    if area2 < 1e-12 {
        return f64::INFINITY;
    }
    a.dist(b) * b.dist(c) * c.dist(a) / (2.0 * area2)
}

/// Oriented rectangle: center, heading of the long axis, full length and width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obb {
    pub center: Vec2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl Obb {
    fn axes(&self) -> [Vec2; 2] {
        let u = Vec2::from_angle(self.heading);
        [u, u.left()]
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let [u, v] = self.axes();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        [
            self.center + u * hl + v * hw,
            self.center - u * hl + v * hw,
            self.center - u * hl - v * hw,
            self.center + u * hl - v * hw,
        ]
    }

    /// Half extent of the box projected onto unit `axis`.
    fn radius_on(&self, axis: Vec2) -> f64 {
        let [u, v] = self.axes();
        self.length / 2.0 * u.dot(axis).abs() + self.width / 2.0 * v.dot(axis).abs()
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let [u, v] = self.axes();
        let d = p - self.center;
        d.dot(u).abs() <= self.length / 2.0 && d.dot(v).abs() <= self.width / 2.0
    }

    /// Separating-axis test over the four edge normals. Touching counts as overlap.
    pub fn overlaps(&self, other: &Obb) -> bool {
        let d = other.center - self.center;
        self.axes()
            .into_iter()
            .chain(other.axes())
            .all(|axis| d.dot(axis).abs() <= self.radius_on(axis) + other.radius_on(axis))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sat_basics() {
        let a = Obb { center: Vec2::new(0.0, 0.0), heading: 0.0, length: 4.6, width: 1.8 };
        assert!(a.overlaps(&a));
        let far = Obb { center: Vec2::new(10.0, 0.0), ..a };
        assert!(!a.overlaps(&far));
        // Rotated boxes whose axis-aligned hulls overlap but which are separated.
        let b = Obb { center: Vec2::new(3.2, 3.2), heading: PI / 4.0, length: 4.6, width: 1.8 };
        let c = Obb { center: Vec2::new(0.0, 0.0), heading: -PI / 4.0, length: 4.6, width: 1.8 };
        assert!(!b.overlaps(&c));
        assert_eq!(b.overlaps(&c), c.overlaps(&b));
    }

    #[test]
    fn polyline_helpers() {
        let pts = sample_segment(Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), 3.0);
        assert_eq!(pts.len(), 5);
        let st = stations(&pts);
        assert_abs_diff_eq!(st[4], 10.0);
        let (p, _) = point_at(&pts, &st, 6.0);
        assert_abs_diff_eq!(p.x, 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(distance_to_polyline(Vec2::new(5.0, 2.0), &pts), 2.0);
        let arc = sample_arc(Vec2::new(0.0, 0.0), 10.0, 0.0, PI / 2.0, 1.0);
        assert!(arc.windows(2).all(|w| w[0].dist(w[1]) <= 1.0));
        assert_abs_diff_eq!(circumradius(arc[0], arc[5], arc[10]), 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
    }
}
