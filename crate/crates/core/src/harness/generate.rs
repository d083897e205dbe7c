//! Seeded scene generators: line sets, grass, hair and a curve under one or
//! two long horizontal lines.

use crate::error::{Error, Result};
use crate::geometry::{segments_cross, Aabb, Point, Segment};
use crate::scene::{normalize_scene, Scene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

/// Tolerance used by the generators when rejecting touching candidates. It is
/// much coarser than the scene crossing check so accepted segments keep a
/// visible gap.
pub const GEN_CROSS_TOL: f64 = 1e-6;

/// Half-width of the orientation jitter for vertical and diagonal lines.
pub const ORIENTATION_JITTER_DEG: f64 = 10.0;

/// Longest generated line.
pub const MAX_LINE_LENGTH: f64 = 0.95;

/// Margin kept between line geometry and the unit square.
const LINE_MARGIN: f64 = 0.025;

/// Lateral joint jitter of a grass leaf, relative to its segment length.
pub const GRASS_SWAY: f64 = 0.2;

/// Margin of the grass bounding rectangle, relative to the geometry extent.
pub const GRASS_MARGIN: f64 = 0.05;

/// Center and radius of the disk that hair strands stay out of.
pub const HAIR_EMPTY_CENTER: Point = Point::new(0.5, 0.45);
pub const HAIR_EMPTY_RADIUS: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Vertical,
    Uniform,
    Diagonal,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Vertical => "vertical",
            Orientation::Uniform => "uniform",
            Orientation::Diagonal => "diagonal",
        })
    }
}

impl std::str::FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vertical" => Ok(Orientation::Vertical),
            "uniform" => Ok(Orientation::Uniform),
            "diagonal" => Ok(Orientation::Diagonal),
            _ => Err(Error::Config(format!("unknown orientation {s:?}"))),
        }
    }
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rejection_budget(n: usize) -> usize {
    200 * n + 1000
}

/// Whether `seg` crosses or touches any segment in `placed`.
fn hits_any(placed: &[(Point, Point)], seg: (Point, Point)) -> bool {
    let bb = Aabb::from_points(seg.0, seg.1);
    placed.iter().any(|&(a, b)| {
        let o = Aabb::from_points(a, b);
        o.min.x <= bb.max.x + GEN_CROSS_TOL
            && bb.min.x <= o.max.x + GEN_CROSS_TOL
            && o.min.y <= bb.max.y + GEN_CROSS_TOL
            && bb.min.y <= o.max.y + GEN_CROSS_TOL
            && segments_cross(a, b, seg.0, seg.1, GEN_CROSS_TOL)
    })
}

/// Length of every segment of a line scene.
pub fn line_length(n: usize, length_factor: f64) -> f64 {
    (MAX_LINE_LENGTH / (n as f64).sqrt() * length_factor).min(MAX_LINE_LENGTH)
}

/// `n` non-crossing line segments of equal length in the unit square.
///
/// Centers are uniform over the positions at which the whole segment fits
/// inside the square with a small margin, so no clipping is needed and every
/// segment keeps the nominal length. Crossing candidates are redrawn.
pub fn gen_lines(n: usize, orientation: Orientation, length_factor: f64, seed: u64) -> Result<Scene> {
    if n == 0 {
        return Err(Error::Config("need at least one line".into()));
    }
    if !(length_factor > 0.0) || !length_factor.is_finite() {
        return Err(Error::Config(format!("length factor must be positive, got {length_factor}")));
    }
    let len = line_length(n, length_factor);
    let mut rng = rng_for(seed);
    let jitter = ORIENTATION_JITTER_DEG.to_radians();
    let mut placed: Vec<(Point, Point)> = Vec::with_capacity(n);
    let budget = rejection_budget(n);
    let mut tries = 0;
    while placed.len() < n {
        if tries == budget {
            return Err(Error::RejectionBudget {
                achieved: placed.len(),
                requested: n,
            });
        }
        tries += 1;
        let angle = match orientation {
            Orientation::Vertical => PI / 2.0 + rng.gen_range(-jitter..=jitter),
            Orientation::Uniform => rng.gen_range(0.0..PI),
            Orientation::Diagonal => PI / 4.0 + rng.gen_range(-jitter..=jitter),
        };
        let half = Point::new(angle.cos(), angle.sin()) * (0.5 * len);
        let (hx, hy) = (half.x.abs(), half.y.abs());
        let (lo, hi) = (LINE_MARGIN, 1.0 - LINE_MARGIN);
        let cx = if lo + hx < hi - hx { rng.gen_range(lo + hx..hi - hx) } else { 0.5 };
        let cy = if lo + hy < hi - hy { rng.gen_range(lo + hy..hi - hy) } else { 0.5 };
        let c = Point::new(cx, cy);
        let seg = (c - half, c + half);
        if !hits_any(&placed, seg) {
            placed.push(seg);
        }
    }
    let name = format!("lines-{orientation}-n{n}-f{length_factor}");
    let prov = format!("gen_lines n={n} orientation={orientation} length_factor={length_factor} seed={seed}");
    Ok(Scene::in_unit_square(name, prov, placed))
}

fn polyline(points: &[Point]) -> Vec<(Point, Point)> {
    points.windows(2).map(|w| (w[0], w[1])).collect()
}

/// `n` grass leaves rooted on a common ground line. Each leaf is a chain of
/// `segments_per_leaf` segments whose joints sway sideways from the root by a
/// random amount; leaves that would touch an accepted leaf are redrawn.
///
/// The sway is at most a fifth of the segment length and also at most a tenth
/// of the mean root spacing, which keeps dense scenes feasible.
pub fn gen_grass(n: usize, segments_per_leaf: usize, seed: u64) -> Result<Scene> {
    if n == 0 || segments_per_leaf == 0 {
        return Err(Error::Config("need at least one leaf and one segment per leaf".into()));
    }
    let mut rng = rng_for(seed);
    let mut placed: Vec<(Point, Point)> = Vec::with_capacity(n * segments_per_leaf);
    let budget = rejection_budget(n);
    let mut leaves = 0;
    let mut tries = 0;
    while leaves < n {
        if tries == budget {
            return Err(Error::RejectionBudget {
                achieved: leaves,
                requested: n,
            });
        }
        tries += 1;
        let x0: f64 = rng.gen_range(0.0..1.0);
        let height: f64 = rng.gen_range(0.5..1.0);
        let step = height / segments_per_leaf as f64;
        let sway = (GRASS_SWAY * step).min(0.1 / n as f64);
        let mut joints = vec![Point::new(x0, 0.0)];
        for k in 1..=segments_per_leaf {
            joints.push(Point::new(x0 + rng.gen_range(-sway..=sway), k as f64 * step));
        }
        let leaf = polyline(&joints);
        if leaf.iter().all(|&s| !hits_any(&placed, s)) {
            placed.extend(leaf);
            leaves += 1;
        }
    }
    let mut bb = Aabb::EMPTY;
    for &(a, b) in &placed {
        bb.grow(a);
        bb.grow(b);
    }
    let m = GRASS_MARGIN * bb.width().max(bb.height());
    let rect = Aabb::new(bb.min - Point::new(m, m), bb.max + Point::new(m, m));
    let name = format!("grass-n{n}-s{segments_per_leaf}");
    let prov = format!("gen_grass n={n} segments_per_leaf={segments_per_leaf} seed={seed}");
    normalize_scene(&Scene::in_rect(name, prov, placed, rect))
}

/// Points of a strand attached at the left side at height `y0`: it leaves
/// horizontally and bends downwards along a circle of radius `r`.
fn left_strand(y0: f64, r: f64, sweep: f64, segments: usize) -> Vec<Point> {
    let center = Point::new(0.03, y0 - r);
    (0..=segments)
        .map(|k| {
            let phi = sweep * k as f64 / segments as f64;
            center + Point::new(phi.sin(), phi.cos()) * r
        })
        .collect()
}

fn strand_allowed(points: &[Point]) -> bool {
    let inside = |p: Point| (0.02..=0.98).contains(&p.x) && (0.02..=0.98).contains(&p.y);
    points.iter().all(|&p| inside(p))
        && points
            .windows(2)
            .all(|w| Segment::geometry(w[0], w[1]).distance_to(HAIR_EMPTY_CENTER) > HAIR_EMPTY_RADIUS)
}

/// Hair: `n_per_side` strands attached to each of the left and right sides of
/// the unit square, each a polyline of `segments_per_strand` segments along a
/// circular arc bending inwards and downwards. Strands are cut short where
/// they would reach the empty central disk or the square's margin, and
/// redrawn when they touch an accepted strand.
pub fn gen_hair(n_per_side: usize, segments_per_strand: usize, seed: u64) -> Result<Scene> {
    if n_per_side == 0 || segments_per_strand == 0 {
        return Err(Error::Config("need at least one strand per side and one segment per strand".into()));
    }
    let mut rng = rng_for(seed);
    let total = 2 * n_per_side;
    let mut placed: Vec<(Point, Point)> = Vec::new();
    let budget = rejection_budget(total);
    let mut strands = 0;
    let mut tries = 0;
    while strands < total {
        if tries == budget {
            return Err(Error::RejectionBudget {
                achieved: strands,
                requested: total,
            });
        }
        tries += 1;
        let y0: f64 = rng.gen_range(0.5..0.97);
        let r: f64 = rng.gen_range(0.2..0.45);
        let mut sweep = rng.gen_range(0.35..0.85) * PI;
        let mut pts = left_strand(y0, r, sweep, segments_per_strand);
        while !strand_allowed(&pts) && sweep > 1e-3 {
            sweep *= 0.8;
            pts = left_strand(y0, r, sweep, segments_per_strand);
        }
        if !strand_allowed(&pts) {
            continue;
        }
        if strands % 2 == 1 {
            for p in &mut pts {
                p.x = 1.0 - p.x;
            }
        }
        let strand = polyline(&pts);
        if strand.iter().all(|&s| !hits_any(&placed, s)) {
            placed.extend(strand);
            strands += 1;
        }
    }
    let name = format!("hair-n{n_per_side}-s{segments_per_strand}");
    let prov = format!("gen_hair n_per_side={n_per_side} segments_per_strand={segments_per_strand} seed={seed}");
    Ok(Scene::in_unit_square(name, prov, placed))
}

/// Number of segments of the curve in [`gen_curve_and_lines`].
pub const CURVE_SEGMENTS: usize = 64;

/// Gap between the two top lines of [`gen_curve_and_lines`].
pub const TOP_LINE_GAP: f64 = 0.02;

/// A wavy 64-segment curve near the bottom of the unit square and one long
/// horizontal line near the top, or two closely spaced parallel lines when
/// `top_lines` is 2.
pub fn gen_curve_and_lines(top_lines: usize) -> Result<Scene> {
    if !(1..=2).contains(&top_lines) {
        return Err(Error::Config(format!("top_lines must be 1 or 2, got {top_lines}")));
    }
    let curve: Vec<Point> = (0..=CURVE_SEGMENTS)
        .map(|k| {
            let u = k as f64 / CURVE_SEGMENTS as f64;
            Point::new(0.05 + 0.9 * u, 0.2 + 0.08 * (1.5 * PI * u).sin())
        })
        .collect();
    let mut geometry = polyline(&curve);
    geometry.push((Point::new(0.05, 0.8), Point::new(0.95, 0.8)));
    if top_lines == 2 {
        geometry.push((Point::new(0.05, 0.8 - TOP_LINE_GAP), Point::new(0.95, 0.8 - TOP_LINE_GAP)));
    }
    let name = format!("curve-{top_lines}-line");
    let prov = format!("gen_curve_and_lines top_lines={top_lines}");
    Ok(Scene::in_unit_square(name, prov, geometry))
}
