use super::cdt::{build_cdt_arc, incircle, Loc};
use super::{next, prev, Dof, EdgeFlag, EdgeRef, TriId, Triangulation, VertId, Vertex};
use crate::geometry::{angle_at, signed_area2, Point};
use crate::scene::Scene;
use crate::{Error, Result};
use rayon::prelude::*;
use std::collections::{HashSet, VecDeque};
use std::sync::Arc;

/// Largest minimum-angle bound accepted by the refiner.
pub const MAX_MIN_ANGLE: f64 = 33.0;
/// Refinement gives up once the vertex count exceeds this multiple of the input.
pub const VERTEX_BUDGET_FACTOR: usize = 50;

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub tri: Triangulation,
    pub insertions: usize,
    pub completed: bool,
}

/// Parameter grid searched by [`optimal_refined_cdt`]. An angle of 0 with an
/// infinite area is the unrefined triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineGrid {
    pub angles: Vec<f64>,
    pub areas: Vec<f64>,
}

impl Default for RefineGrid {
    fn default() -> Self {
        Self {
            angles: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            areas: vec![f64::INFINITY, 1e-1, 1e-2, 1e-3, 1e-4],
        }
    }
}

impl RefineGrid {
    pub fn unrefined() -> Self {
        Self {
            angles: vec![0.0],
            areas: vec![f64::INFINITY],
        }
    }

    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.angles
            .iter()
            .flat_map(|&a| self.areas.iter().map(move |&m| (a, m)))
            .collect()
    }
}

enum Walk {
    Reached(TriId),
    Blocked(EdgeRef),
    Lost,
}

fn circumcenter(a: Point, b: Point, c: Point) -> Option<Point> {
    let b = b - a;
    let c = c - a;
    let d = 2.0 * b.cross(c);
    if d.abs() < 1e-300 {
        return None;
    }
    let ux = (c.y * b.norm2() - b.y * c.norm2()) / d;
    let uy = (b.x * c.norm2() - c.x * b.norm2()) / d;
    let p = Point::new(a.x + ux, a.y + uy);
    p.is_finite().then_some(p)
}

fn encroaches(a: Point, b: Point, p: Point) -> bool {
    (a - p).dot(b - p) < 0.0
}

struct Refiner<'a> {
    t: &'a mut Triangulation,
    min_angle: f64,
    max_area: f64,
    queue: VecDeque<TriId>,
    insertions: usize,
    give_up: HashSet<[VertId; 3]>,
}

impl Refiner<'_> {
    fn tri_key(&self, t: TriId) -> [VertId; 3] {
        let mut v = self.t.tri(t).v;
        v.sort_unstable();
        v
    }

    /// Smallest interior angle (radians) and the local index of its vertex.
    fn min_angle_of(&self, t: TriId) -> (f64, usize) {
        let p = self.t.tri_points(t);
        (0..3)
            .map(|i| (angle_at(p[prev(i)], p[i], p[next(i)]), i))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap()
    }

    /// A small angle that refinement cannot remove: its two sides are
    /// constrained, or the opposite edge joins two segments meeting at a
    /// sharp input angle.
    fn angle_is_forced(&self, t: TriId, i: usize) -> bool {
        let tri = self.t.tri(t);
        if tri.flags[next(i)].is_constrained() && tri.flags[prev(i)].is_constrained() {
            return true;
        }
        let (a, b) = (tri.v[next(i)], tri.v[prev(i)]);
        let scene = self.t.scene();
        for &sa in self.t.vertex_segments(a) {
            for &sb in self.t.vertex_segments(b) {
                if sa == sb {
                    continue;
                }
                let (x, y) = (&scene.segments[sa as usize], &scene.segments[sb as usize]);
                for (p, q) in [(x.a, y.a), (x.a, y.b), (x.b, y.a), (x.b, y.b)] {
                    if p == q {
                        let ox = if x.a == p { x.b } else { x.a };
                        let oy = if y.a == q { y.b } else { y.a };
                        if angle_at(ox, p, oy) < std::f64::consts::FRAC_PI_3 {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    fn is_bad(&self, t: TriId) -> bool {
        if self.t.tri_area(t) > self.max_area {
            return true;
        }
        if self.min_angle <= 0.0 {
            return false;
        }
        let (ang, i) = self.min_angle_of(t);
        ang < self.min_angle && !self.angle_is_forced(t, i)
    }

    fn walk_to(&self, start: TriId, to: Point) -> Walk {
        let [a, b, c] = self.t.tri_points(start);
        let from = Point::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0);
        let mut cur = start;
        for _ in 0..self.t.triangle_capacity() + 8 {
            let tri = *self.t.tri(cur);
            let mut exit = None;
            for i in 0..3 {
                let pa = self.t.pos(tri.v[next(i)]);
                let pb = self.t.pos(tri.v[prev(i)]);
                if signed_area2(pa, pb, to) >= 0.0 {
                    continue;
                }
                let sa = signed_area2(from, to, pa);
                let sb = signed_area2(from, to, pb);
                if (sa <= 0.0 && sb >= 0.0) || (sa >= 0.0 && sb <= 0.0) {
                    exit = Some(i);
                    break;
                }
            }
            let Some(i) = exit else {
                return Walk::Reached(cur);
            };
            let e = EdgeRef::new(cur, i);
            if tri.flags[i].is_constrained() {
                return Walk::Blocked(e);
            }
            match tri.nbr[i] {
                Some(n) => cur = n,
                None => return Walk::Blocked(e),
            }
        }
        Walk::Lost
    }

    fn push_star(&mut self, v: VertId) {
        for (t, _) in self.t.fan(v) {
            self.queue.push_back(t);
        }
    }

    /// Splits a constrained edge, then any of the halves encroached by their
    /// opposite vertices.
    fn split_subsegment(&mut self, e: EdgeRef) {
        let mut pending = vec![self.t.edge_endpoints(e)];
        while let Some((a, b)) = pending.pop() {
            let Some(e) = self.t.find_edge(a, b) else {
                continue;
            };
            let EdgeFlag::Constrained(s) = self.t.edge_flag(e) else {
                continue;
            };
            let seg = self.t.scene().segments[s as usize];
            let (pa, pb) = (self.t.pos(a), self.t.pos(b));
            let len = pa.dist(pb);
            let shell_at = |v: VertId| self.t.dof(v) == Dof::Fixed && self.t.vertex_segments(v).len() >= 2;
            let p = match (shell_at(a), shell_at(b)) {
                (true, false) | (false, true) => {
                    let (from, to) = if shell_at(a) { (pa, pb) } else { (pb, pa) };
                    let d = 2f64.powf((len / 2.0).log2().round());
                    from.lerp(to, d / len)
                }
                _ => pa.midpoint(pb),
            };
            let p = seg.at(seg.project_param(p));
            let (v, _) = self.t.split_edge(e, Vertex { pos: p, dof: Dof::OnSegment(s) });
            let stack = self.t.fan(v).iter().map(|&(t, i)| EdgeRef::new(t, i)).collect();
            self.t.legalize_around(v, stack);
            self.insertions += 1;
            self.push_star(v);
            for w in [a, b] {
                if let Some(h) = self.t.find_edge(v, w) {
                    let pv = self.t.pos(v);
                    let pw = self.t.pos(w);
                    let mut hit = encroaches(pv, pw, self.t.pos(self.t.edge_apex(h)));
                    if let Some(tw) = self.t.twin(h) {
                        hit |= encroaches(pv, pw, self.t.pos(self.t.edge_apex(tw)));
                    }
                    if hit {
                        pending.push((v, w));
                    }
                }
            }
        }
    }

    /// Constrained edges encroached by `c` among the triangles whose
    /// circumcircle contains it.
    fn cavity_encroached(&self, start: TriId, c: Point) -> Vec<EdgeRef> {
        let mut seen: HashSet<TriId> = HashSet::new();
        let mut stack = vec![start];
        seen.insert(start);
        let mut out = Vec::new();
        while let Some(t) = stack.pop() {
            let tri = *self.t.tri(t);
            for i in 0..3 {
                let e = EdgeRef::new(t, i);
                if tri.flags[i].is_constrained() {
                    let (a, b) = self.t.edge_endpoints(e);
                    if encroaches(self.t.pos(a), self.t.pos(b), c) {
                        out.push(e);
                    }
                    continue;
                }
                if let Some(n) = tri.nbr[i] {
                    if seen.contains(&n) {
                        continue;
                    }
                    let [a, b, cc] = self.t.tri_points(n);
                    if incircle(a, b, cc, c) > 0.0 {
                        seen.insert(n);
                        stack.push(n);
                    }
                }
            }
        }
        out
    }

    fn fix(&mut self, t: TriId) {
        let key = self.tri_key(t);
        let [a, b, c] = self.t.tri_points(t);
        let Some(cc) = circumcenter(a, b, c) else {
            self.give_up.insert(key);
            return;
        };
        match self.walk_to(t, cc) {
            Walk::Lost => {
                self.give_up.insert(key);
            }
            Walk::Blocked(e) => {
                if self.t.edge_flag(e).is_constrained() {
                    self.split_subsegment(e);
                    self.queue.push_back(t);
                } else {
                    self.give_up.insert(key);
                }
            }
            Walk::Reached(tc) => {
                let enc = self.cavity_encroached(tc, cc);
                if !enc.is_empty() {
                    let keys: Vec<(VertId, VertId)> = enc.iter().map(|&e| self.t.edge_endpoints(e)).collect();
                    for (x, y) in keys {
                        if let Some(e) = self.t.find_edge(x, y) {
                            self.split_subsegment(e);
                        }
                    }
                    if self.t.is_triangle_alive(t) {
                        self.queue.push_back(t);
                    }
                    return;
                }
                let loc = match self.t.walk_locate(tc, cc) {
                    Ok(l) => l,
                    Err(_) => {
                        self.give_up.insert(key);
                        return;
                    }
                };
                match loc {
                    Loc::OnVertex(_) => {
                        self.give_up.insert(key);
                    }
                    Loc::OnEdge(e) if self.t.edge_flag(e).is_constrained() => {
                        self.split_subsegment(e);
                        self.queue.push_back(t);
                    }
                    _ => {
                        let v = self.t.insert_at(loc, cc, Dof::Free);
                        self.insertions += 1;
                        self.push_star(v);
                    }
                }
            }
        }
    }

    fn run(&mut self, budget: usize) -> bool {
        self.queue = self.t.triangle_ids().collect();
        while let Some(t) = self.queue.pop_front() {
            if self.t.vertex_count() > budget {
                return false;
            }
            if !self.t.is_triangle_alive(t) || self.give_up.contains(&self.tri_key(t)) {
                continue;
            }
            if self.is_bad(t) {
                self.fix(t);
            }
        }
        true
    }
}

/// Delaunay refinement with a minimum-angle bound (degrees) and an area
/// bound. Stops early, returning what it has, once the vertex budget is hit.
pub fn refine_cdt_partial(t: &Triangulation, min_angle: f64, max_area: f64) -> Result<RefineOutcome> {
    if !(0.0..=MAX_MIN_ANGLE).contains(&min_angle) {
        return Err(Error::Config(format!("min_angle {min_angle} outside [0, {MAX_MIN_ANGLE}]")));
    }
    if !(max_area > 0.0) {
        return Err(Error::Config(format!("max_area {max_area} must be positive")));
    }
    let mut out = t.clone();
    if min_angle == 0.0 && max_area.is_infinite() {
        return Ok(RefineOutcome {
            tri: out,
            insertions: 0,
            completed: true,
        });
    }
    let budget = VERTEX_BUDGET_FACTOR * t.vertex_count().max(1);
    let mut r = Refiner {
        t: &mut out,
        min_angle: min_angle.to_radians(),
        max_area,
        queue: VecDeque::new(),
        insertions: 0,
        give_up: HashSet::new(),
    };
    let completed = r.run(budget);
    let insertions = r.insertions;
    out.compact();
    Ok(RefineOutcome {
        tri: out,
        insertions,
        completed,
    })
}

pub fn refine_cdt(t: &Triangulation, min_angle: f64, max_area: f64) -> Result<Triangulation> {
    let r = refine_cdt_partial(t, min_angle, max_area)?;
    if r.completed {
        Ok(r.tri)
    } else {
        Err(Error::RefinementBudget {
            vertices: r.tri.vertex_count(),
        })
    }
}

/// One cell of the refinement parameter sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub min_angle: f64,
    pub max_area: f64,
    pub length: Option<f64>,
    pub vertices: usize,
}

/// Refines the scene's CDT at every grid cell and returns the shortest
/// result together with the per-cell record.
pub fn refine_sweep(scene: &Scene, grid: &RefineGrid) -> Result<(Triangulation, Vec<SweepCell>)> {
    let base = build_cdt_arc(Arc::new(scene.clone()))?;
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(Error::Config("empty refinement grid".into()));
    }
    let results: Vec<(SweepCell, Option<Triangulation>)> = cells
        .par_iter()
        .map(|&(a, m)| match refine_cdt(&base, a, m) {
            Ok(tr) => (
                SweepCell {
                    min_angle: a,
                    max_area: m,
                    length: Some(tr.total_edge_length()),
                    vertices: tr.vertex_count(),
                },
                Some(tr),
            ),
            Err(e) => {
                log::debug!("refinement cell ({a}, {m}) failed: {e}");
                (
                    SweepCell {
                        min_angle: a,
                        max_area: m,
                        length: None,
                        vertices: 0,
                    },
                    None,
                )
            }
        })
        .collect();
    let mut best: Option<(f64, Triangulation)> = None;
    let mut record = Vec::with_capacity(results.len());
    for (cell, tr) in results {
        if let (Some(len), Some(tr)) = (cell.length, tr) {
            if best.as_ref().is_none_or(|(b, _)| len < *b) {
                best = Some((len, tr));
            }
        }
        record.push(cell);
    }
    let (_, tri) = best.ok_or_else(|| Error::Triangulation("every refinement cell failed".into()))?;
    Ok((tri, record))
}

/// The shortest triangulation over the refinement parameter grid.
pub fn optimal_refined_cdt(scene: &Scene, grid: &RefineGrid) -> Result<Triangulation> {
    refine_sweep(scene, grid).map(|(t, _)| t)
}
