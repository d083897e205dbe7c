//! Walking a ray through the triangles of a triangulation.

use super::{hit_segment, keep_best, Hit, TraversalStats, TIE_REL_EPS};
use crate::geometry::{signed_area2, Point, Ray, Segment, SegmentKind};
use crate::trimesh::{next, prev, EdgeFlag, TriId, Triangulation, VertId};
use crate::{Error, Result};

/// Distance from the ray's line under which a vertex counts as touched.
const TOUCH_EPS: f64 = 1e-12;

/// Vertex side test against the ray's supporting line. Points on the line
/// count as left, which acts as a consistent infinitesimal shift of the ray
/// to the right: a ray through a vertex or along an edge always leaves a
/// triangle through exactly one edge.
#[inline]
fn left_of(ray: &Ray, p: Point) -> bool {
    ray.dir.cross(p - ray.origin) >= 0.0
}

/// Local index of the edge through which the line leaves triangle `tri`,
/// skipping `entry`. The exit edge runs from a right vertex to a left one.
fn exit_edge(t: &Triangulation, ray: &Ray, tri: TriId, entry: Option<usize>) -> Option<usize> {
    let v = t.tri(tri).v;
    let side = v.map(|x| left_of(ray, t.pos(x)));
    (0..3).find(|&i| Some(i) != entry && !side[next(i)] && side[prev(i)])
}

/// Ray parameter where the ray meets the supporting line of `a b`.
fn line_hit(ray: &Ray, a: Point, b: Point) -> f64 {
    let e = b - a;
    (a - ray.origin).cross(e) / ray.dir.cross(e)
}

/// Traces `ray` from `start`, which must contain the ray origin. Returns the
/// closest geometry hit (if any) and the number of triangles entered.
///
/// A ray passing through (or within rounding distance of) a vertex touches the
/// geometry segments that end there; those touches count as hits, as in
/// [`super::brute_force_closest`].
pub fn traverse_triangulation(t: &Triangulation, ray: &Ray, start: TriId) -> Result<(Option<Hit>, TraversalStats)> {
    let mut stats = TraversalStats::default();
    let mut best: Option<Hit> = None;
    let mut touched: Vec<VertId> = Vec::new();
    let mut tri = start;
    let mut entry: Option<usize> = None;
    let cap = 3 * t.triangle_count() as u64 + 3;
    loop {
        stats.tri_steps += 1;
        if stats.tri_steps > cap {
            // some (triangle, entry edge) pair has repeated
            return Err(Error::Traversal(format!("ray {ray:?} loops from triangle {start}")));
        }
        let tr = *t.tri(tri);
        for v in tr.v {
            let d = t.pos(v) - ray.origin;
            if ray.dir.cross(d).abs() <= TOUCH_EPS * d.norm().max(1.0) && ray.dir.dot(d) >= 0.0 && !touched.contains(&v) {
                touched.push(v);
                touch_vertex(t, ray, v, &mut best);
            }
        }
        let Some(i) = exit_edge(t, ray, tri, entry) else {
            return Err(Error::Traversal(format!("no exit edge in triangle {tri} for ray {ray:?}")));
        };
        let (a, b) = (tr.v[next(i)], tr.v[prev(i)]);
        match tr.flags[i] {
            EdgeFlag::Constrained(s) => {
                if t.scene().segments[s as usize].kind == SegmentKind::SceneGeometry {
                    keep_best(&mut best, resolve_hit(t, ray, s, a, b));
                }
                return Ok((best, stats));
            }
            EdgeFlag::Internal => {}
        }
        if let Some(h) = &best {
            let t_exit = line_hit(ray, t.pos(a), t.pos(b));
            if h.t <= t_exit + TIE_REL_EPS * t_exit.abs().max(1.0) {
                return Ok((best, stats));
            }
        }
        let Some(n) = tr.nbr[i] else {
            return Ok((best, stats));
        };
        entry = t.nbr_index(n, tri);
        tri = n;
    }
}

/// Adds the hits on every geometry segment incident to `v`.
fn touch_vertex(t: &Triangulation, ray: &Ray, v: VertId, best: &mut Option<Hit>) {
    for e in t.incident_edges(v) {
        if let Some((id, SegmentKind::SceneGeometry)) = t.edge_segment_kind(e) {
            if let Some(h) = hit_segment(t.scene(), ray, id) {
                keep_best(best, h);
            }
        }
    }
}

/// Hit on segment `s` through the edge `a b`. When the crossing is at an
/// edge end, every geometry segment through that vertex is a candidate and
/// the usual closest/lowest-id order decides.
fn resolve_hit(t: &Triangulation, ray: &Ray, s: u32, a: VertId, b: VertId) -> Hit {
    let (pa, pb) = (t.pos(a), t.pos(b));
    let mut best = hit_segment(t.scene(), ray, s);
    if best.is_none() {
        best = Some(Hit::new(ray, s, line_hit(ray, pa, pb)));
    }
    let p = ray.at(best.unwrap().t);
    let len = pa.dist(pb).max(f64::MIN_POSITIVE);
    for (v, pv) in [(a, pa), (b, pb)] {
        if p.dist(pv) > 1e-9 * len.max(1.0) {
            continue;
        }
        touch_vertex(t, ray, v, &mut best);
    }
    best.unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocateMethod {
    BruteForce,
    AnchorGridWalk,
}

/// Closed point-in-triangle test with a small distance tolerance.
fn contains(t: &Triangulation, tri: TriId, p: Point) -> bool {
    let [a, b, c] = t.tri_points(tri);
    [(a, b), (b, c), (c, a)]
        .iter()
        .all(|&(x, y)| signed_area2(x, y, p) >= -1e-12 * x.dist(y))
}

fn distance_to_triangle(t: &Triangulation, tri: TriId, p: Point) -> f64 {
    if contains(t, tri, p) {
        return 0.0;
    }
    let [a, b, c] = t.tri_points(tri);
    [(a, b), (b, c), (c, a)]
        .iter()
        .map(|&(x, y)| Segment::geometry(x, y).distance_to(p))
        .fold(f64::INFINITY, f64::min)
}

fn brute_force(t: &Triangulation, p: Point) -> TriId {
    if let Some(tri) = t.triangle_ids().find(|&tri| contains(t, tri, p)) {
        return tri;
    }
    log::warn!("point {p:?} lies outside every triangle; using the nearest one");
    t.triangle_ids()
        .min_by(|&x, &y| distance_to_triangle(t, x, p).total_cmp(&distance_to_triangle(t, y, p)))
        .expect("empty triangulation")
}

/// Lowest-id triangle containing `p` among those sharing a vertex with `tri`,
/// which must contain `p`.
fn lowest_containing(t: &Triangulation, tri: TriId, p: Point) -> TriId {
    let mut best = tri;
    for v in t.tri(tri).v {
        for (f, _) in t.fan(v) {
            if f < best && contains(t, f, p) {
                best = f;
            }
        }
    }
    best
}

/// Walks straight from `q` (inside `from`) towards `p`, ignoring constraints.
fn walk(t: &Triangulation, from: TriId, q: Point, p: Point) -> Option<TriId> {
    if contains(t, from, p) {
        return Some(from);
    }
    if q == p {
        return None;
    }
    let ray = Ray::new(q, p - q);
    let mut tri = from;
    let mut entry = None;
    for _ in 0..(3 * t.triangle_count() + 3) {
        let i = exit_edge(t, &ray, tri, entry)?;
        let n = t.tri(tri).nbr[i]?;
        entry = t.nbr_index(n, tri);
        tri = n;
        if contains(t, tri, p) {
            return Some(tri);
        }
    }
    None
}

/// Regular grid of anchor points with known triangles, for locating points
/// by a short walk from the nearest anchor.
#[derive(Debug, Clone)]
pub struct Locator {
    min: Point,
    cell: Point,
    res: usize,
    anchors: Vec<(Point, TriId)>,
}

impl Locator {
    /// Builds a `res × res` anchor grid over the scene bounds.
    pub fn new(t: &Triangulation, res: usize) -> Self {
        let res = res.max(1);
        let b = t.scene().bounds();
        let cell = Point::new(b.width() / res as f64, b.height() / res as f64);
        let mut anchors = Vec::with_capacity(res * res);
        let mut last: Option<(Point, TriId)> = None;
        for j in 0..res {
            for i in 0..res {
                let i = if j % 2 == 0 { i } else { res - 1 - i };
                let q = Point::new(b.min.x + (i as f64 + 0.5) * cell.x, b.min.y + (j as f64 + 0.5) * cell.y);
                let tri = last
                    .and_then(|(lq, lt)| walk(t, lt, lq, q))
                    .unwrap_or_else(|| brute_force(t, q));
                last = Some((q, tri));
                anchors.push((q, tri));
            }
        }
        // anchors were produced in serpentine order; store them row-major
        let mut grid = vec![(Point::default(), 0); res * res];
        for (k, a) in anchors.into_iter().enumerate() {
            let (j, i) = (k / res, k % res);
            let i = if j % 2 == 0 { i } else { res - 1 - i };
            grid[j * res + i] = a;
        }
        Self {
            min: b.min,
            cell,
            res,
            anchors: grid,
        }
    }

    /// Anchor grid with about one anchor per triangle.
    pub fn for_triangulation(t: &Triangulation) -> Self {
        Self::new(t, (t.triangle_count() as f64).sqrt().ceil() as usize)
    }

    pub fn locate(&self, t: &Triangulation, p: Point) -> TriId {
        let idx = |x: f64, lo: f64, c: f64| (((x - lo) / c).floor().max(0.0) as usize).min(self.res - 1);
        let (i, j) = (idx(p.x, self.min.x, self.cell.x), idx(p.y, self.min.y, self.cell.y));
        let (q, start) = self.anchors[j * self.res + i];
        match walk(t, start, q, p) {
            Some(tri) => lowest_containing(t, tri, p),
            None => brute_force(t, p),
        }
    }
}

/// Triangle containing `p`; points on shared edges or vertices resolve to
/// the lowest triangle id.
pub fn locate_triangle(t: &Triangulation, p: Point, method: LocateMethod) -> TriId {
    match method {
        LocateMethod::BruteForce => brute_force(t, p),
        LocateMethod::AnchorGridWalk => Locator::for_triangulation(t).locate(t, p),
    }
}
