//! 2D primitives: points, segments, rays, orientation and collinearity tests,
//! ray/segment intersection and axis-aligned boxes.
//!
//! Robustness is tolerance based. All scenes are normalized to the unit square,
//! so the absolute tolerances below are expressed in unit-square world units.

mod grid;

pub use grid::UniformGrid;

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

/// Absolute tolerance on twice the signed area below which three points are
/// reported as [`Orientation::Degenerate`].
pub const ORIENT_EPS: f64 = 1e-18;

/// Critical value of [`collinearity_quality`] below which three points count
/// as (nearly) collinear.
pub const COLLINEARITY_KAPPA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn dist2(self, o: Point) -> f64 {
        (self - o).norm2()
    }

    #[inline]
    pub fn lerp(self, o: Point, t: f64) -> Point {
        Point::new(self.x + (o.x - self.x) * t, self.y + (o.y - self.y) * t)
    }

    #[inline]
    pub fn midpoint(self, o: Point) -> Point {
        Point::new(0.5 * (self.x + o.x), 0.5 * (self.y + o.y))
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    #[inline]
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    #[inline]
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    #[inline]
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    #[inline]
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Whether a segment is part of the scene geometry (reports ray hits) or part of
/// the enclosing boundary (terminates traversal without a hit).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    SceneGeometry,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
    pub kind: SegmentKind,
}

impl Segment {
    pub fn new(a: Point, b: Point, kind: SegmentKind) -> Self {
        Self { a, b, kind }
    }

    pub fn geometry(a: Point, b: Point) -> Self {
        Self::new(a, b, SegmentKind::SceneGeometry)
    }

    pub fn boundary(a: Point, b: Point) -> Self {
        Self::new(a, b, SegmentKind::Boundary)
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.a.dist(self.b)
    }

    #[inline]
    pub fn midpoint(&self) -> Point {
        self.a.midpoint(self.b)
    }

    #[inline]
    pub fn at(&self, u: f64) -> Point {
        self.a.lerp(self.b, u)
    }

    /// Parameter of the orthogonal projection of `p` onto the supporting line.
    pub fn project_param(&self, p: Point) -> f64 {
        let e = self.b - self.a;
        let l2 = e.norm2();
        if l2 == 0.0 {
            0.0
        } else {
            (p - self.a).dot(e) / l2
        }
    }

    /// Closest point on the segment to `p`.
    pub fn clamp_point(&self, p: Point) -> Point {
        self.at(self.project_param(p).clamp(0.0, 1.0))
    }

    pub fn distance_to(&self, p: Point) -> f64 {
        self.clamp_point(p).dist(p)
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(self.a, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Point,
    pub dir: Point,
}

impl Ray {
    /// Builds a ray, normalizing `dir`.
    pub fn new(origin: Point, dir: Point) -> Self {
        let n = dir.norm();
        debug_assert!(n > 0.0, "zero ray direction");
        Self {
            origin,
            dir: dir * (1.0 / n),
        }
    }

    pub fn from_angle(origin: Point, angle: f64) -> Self {
        Self {
            origin,
            dir: Point::new(angle.cos(), angle.sin()),
        }
    }

    #[inline]
    pub fn at(&self, t: f64) -> Point {
        self.origin + self.dir * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Positive,
    Negative,
    Degenerate,
}

/// Twice the signed area of triangle `abc` (positive when counterclockwise).
#[inline]
pub fn signed_area2(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

pub fn orient2d(a: Point, b: Point, c: Point) -> Orientation {
    let d = signed_area2(a, b, c);
    if d.abs() < ORIENT_EPS {
        Orientation::Degenerate
    } else if d > 0.0 {
        Orientation::Positive
    } else {
        Orientation::Negative
    }
}

/// Ratio of the triangle's area to the area of a square with the same
/// perimeter. Zero for collinear or coincident points; `4√3/9` for an
/// equilateral triangle, which is the maximum.
pub fn collinearity_quality(a: Point, b: Point, c: Point) -> f64 {
    let perimeter = a.dist(b) + b.dist(c) + c.dist(a);
    if perimeter == 0.0 {
        return 0.0;
    }
    let area = 0.5 * signed_area2(a, b, c).abs();
    let side = perimeter / 4.0;
    area / (side * side)
}

#[inline]
pub fn is_near_collinear(a: Point, b: Point, c: Point) -> bool {
    collinearity_quality(a, b, c) < COLLINEARITY_KAPPA
}

/// Interior angle at `b` in the triangle `a b c`, in radians.
pub fn angle_at(a: Point, b: Point, c: Point) -> f64 {
    let u = a - b;
    let v = c - b;
    u.cross(v).abs().atan2(u.dot(v))
}

/// Intersection of a ray with a segment as `(t, u)`: `t ≥ 0` along the ray and
/// `u ∈ [0, 1]` along the segment. For a collinear overlap the closer endpoint
/// in front of the origin is returned.
pub fn ray_segment_intersect(ray: &Ray, seg: &Segment) -> Option<(f64, f64)> {
    let e = seg.b - seg.a;
    let ao = seg.a - ray.origin;
    let denom = ray.dir.cross(e);
    let elen = e.norm();
    if denom.abs() <= 1e-14 * elen {
        // parallel
        if ao.cross(ray.dir).abs() > 1e-12 {
            return None;
        }
        let ta = ao.dot(ray.dir);
        let tb = (seg.b - ray.origin).dot(ray.dir);
        return match (ta >= 0.0, tb >= 0.0) {
            (true, true) => {
                if ta <= tb {
                    Some((ta, 0.0))
                } else {
                    Some((tb, 1.0))
                }
            }
            (true, false) => Some((ta, 0.0)),
            (false, true) => Some((tb, 1.0)),
            (false, false) => None,
        };
    }
    let t = ao.cross(e) / denom;
    let u = ao.cross(ray.dir) / denom;
    if t >= 0.0 && (0.0..=1.0).contains(&u) {
        Some((t, u))
    } else {
        None
    }
}

/// Proper or improper intersection test between two closed segments.
/// Segments that only share an endpoint (exactly) are not reported.
pub fn segments_cross(p1: Point, p2: Point, q1: Point, q2: Point, tol: f64) -> bool {
    let shares = |a: Point, b: Point| a.dist2(b) <= tol * tol;
    let share_count = [(p1, q1), (p1, q2), (p2, q1), (p2, q2)]
        .iter()
        .filter(|(a, b)| shares(*a, *b))
        .count();
    let d1 = signed_area2(q1, q2, p1);
    let d2 = signed_area2(q1, q2, p2);
    let d3 = signed_area2(p1, p2, q1);
    let d4 = signed_area2(p1, p2, q2);
    let lp = p1.dist(p2).max(1e-300);
    let lq = q1.dist(q2).max(1e-300);
    // distances of endpoints to the other segment's supporting line
    let s1 = d1 / lq;
    let s2 = d2 / lq;
    let s3 = d3 / lp;
    let s4 = d4 / lp;
    if share_count > 0 {
        if share_count >= 2 {
            // duplicate segment (or a zero-length one)
            return true;
        }
        // one shared endpoint: overlap only if collinear and pointing the same way
        let collinear = s1.abs() <= tol && s2.abs() <= tol && s3.abs() <= tol && s4.abs() <= tol;
        if !collinear {
            return false;
        }
        let (sp, op, oq) = if shares(p1, q1) {
            (p1, p2, q2)
        } else if shares(p1, q2) {
            (p1, p2, q1)
        } else if shares(p2, q1) {
            (p2, p1, q2)
        } else {
            (p2, p1, q1)
        };
        return (op - sp).dot(oq - sp) > 0.0;
    }
    if ((s1 > tol && s2 < -tol) || (s1 < -tol && s2 > tol))
        && ((s3 > tol && s4 < -tol) || (s3 < -tol && s4 > tol))
    {
        return true;
    }
    // touching / collinear cases: any endpoint within tol of the other segment
    let sp = Segment::geometry(p1, p2);
    let sq = Segment::geometry(q1, q2);
    sq.distance_to(p1) <= tol
        || sq.distance_to(p2) <= tol
        || sp.distance_to(q1) <= tol
        || sp.distance_to(q2) <= tol
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: Point::new(f64::INFINITY, f64::INFINITY),
        max: Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
    };

    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn from_points(a: Point, b: Point) -> Self {
        Self {
            min: Point::new(a.x.min(b.x), a.y.min(b.y)),
            max: Point::new(a.x.max(b.x), a.y.max(b.y)),
        }
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: Point::new(self.min.x.min(o.min.x), self.min.y.min(o.min.y)),
            max: Point::new(self.max.x.max(o.max.x), self.max.y.max(o.max.y)),
        }
    }

    pub fn grow(&mut self, p: Point) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    /// 2D analogue of surface area.
    pub fn perimeter(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            2.0 * (self.width() + self.height())
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_box(&self, o: &Aabb) -> bool {
        o.min.x >= self.min.x && o.max.x <= self.max.x && o.min.y >= self.min.y && o.max.y <= self.max.y
    }

    pub fn center(&self) -> Point {
        self.min.midpoint(self.max)
    }

    pub fn axis_min(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.min.x
        } else {
            self.min.y
        }
    }

    pub fn axis_max(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.max.x
        } else {
            self.max.y
        }
    }

    /// Slab test. Returns the parametric interval `[t0, t1]` of the ray inside
    /// the box, clipped to `[0, t_max]`.
    pub fn ray_interval(&self, ray: &Ray, t_max: f64) -> Option<(f64, f64)> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for axis in 0..2 {
            let (o, d, lo, hi) = if axis == 0 {
                (ray.origin.x, ray.dir.x, self.min.x, self.max.x)
            } else {
                (ray.origin.y, ray.dir.y, self.min.y, self.max.y)
            };
            if d == 0.0 {
                if o < lo || o > hi {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d;
            let mut ta = (lo - o) * inv;
            let mut tb = (hi - o) * inv;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

#[inline]
pub(crate) fn coord(p: Point, axis: usize) -> f64 {
    if axis == 0 {
        p.x
    } else {
        p.y
    }
}
