use super::{next, prev, Dof, EdgeFlag, EdgeRef, TriId, Triangle, Triangulation, VertId, Vertex};
use crate::geometry::{signed_area2, Point, SegmentKind};
use crate::scene::Scene;
use crate::{Error, Result};
use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

/// Points closer than this are treated as the same vertex during insertion.
const MERGE_TOL: f64 = 1e-12;
/// A point within this distance of an edge's supporting line lies on the edge.
const ON_EDGE_TOL: f64 = 1e-13;

/// Result of locating a point in the triangulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Loc {
    Inside(TriId),
    OnEdge(EdgeRef),
    OnVertex(VertId),
}

/// `> 0` when `d` lies strictly inside the circumcircle of the
/// counterclockwise triangle `abc`, with a conservative rounding threshold.
pub(crate) fn incircle(a: Point, b: Point, c: Point, d: Point) -> f64 {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let alift = adx * adx + ady * ady;
    let blift = bdx * bdx + bdy * bdy;
    let clift = cdx * cdx + cdy * cdy;
    let det = alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) + clift * (adx * bdy - bdx * ady);
    let permanent = alift * ((bdx * cdy).abs() + (cdx * bdy).abs())
        + blift * ((cdx * ady).abs() + (adx * cdy).abs())
        + clift * ((adx * bdy).abs() + (bdx * ady).abs());
    let bound = 1e-14 * permanent;
    if det > bound {
        det
    } else if det < -bound {
        det
    } else {
        0.0
    }
}

impl Triangulation {
    /// Walks from `start` towards `p`.
    pub(crate) fn walk_locate(&self, start: TriId, p: Point) -> Result<Loc> {
        let mut t = start;
        let mut steps = 0usize;
        let limit = 4 * self.triangle_capacity() + 16;
        let mut rot = 0usize;
        'walk: loop {
            steps += 1;
            if steps > limit {
                return Err(Error::Triangulation("point location did not terminate".into()));
            }
            let tri = *self.tri(t);
            rot = (rot + 1) % 3;
            for k in 0..3 {
                let i = (k + rot) % 3;
                let a = self.pos(tri.v[next(i)]);
                let b = self.pos(tri.v[prev(i)]);
                let len = a.dist(b);
                if signed_area2(a, b, p) < -ON_EDGE_TOL * len {
                    match tri.nbr[i] {
                        Some(n) => {
                            t = n;
                            continue 'walk;
                        }
                        None => return Err(Error::Triangulation(format!("point {p:?} outside triangulation"))),
                    }
                }
            }
            // p is inside or on the border of t
            for &v in &tri.v {
                if self.pos(v).dist(p) <= MERGE_TOL {
                    return Ok(Loc::OnVertex(v));
                }
            }
            for i in 0..3 {
                let a = self.pos(tri.v[next(i)]);
                let b = self.pos(tri.v[prev(i)]);
                if signed_area2(a, b, p).abs() <= ON_EDGE_TOL * a.dist(b) {
                    return Ok(Loc::OnEdge(EdgeRef::new(t, i)));
                }
            }
            return Ok(Loc::Inside(t));
        }
    }

    /// Whether the edge opposite `e`'s apex violates the empty-circle property.
    pub(crate) fn is_locally_delaunay(&self, e: EdgeRef) -> bool {
        let Some(tw) = self.twin(e) else {
            return true;
        };
        let [a, b, c] = self.tri_points(e.tri);
        let q = self.pos(self.edge_apex(tw));
        incircle(a, b, c, q) <= 0.0
    }

    /// Plain strict-convexity test on the quad around `e`, without the
    /// near-collinearity margin used by optimization flips.
    pub(crate) fn quad_strictly_convex(&self, e: EdgeRef) -> bool {
        let Some(tw) = self.twin(e) else {
            return false;
        };
        let p = self.pos(self.edge_apex(e));
        let q = self.pos(self.edge_apex(tw));
        let (a, b) = self.edge_endpoints(e);
        let (a, b) = (self.pos(a), self.pos(b));
        signed_area2(p, a, q) > 0.0 && signed_area2(q, b, p) > 0.0
    }

    /// Lawson flips around a freshly inserted vertex `p`. `stack` holds
    /// half-edges whose apex is `p`.
    pub(crate) fn legalize_around(&mut self, p: VertId, mut stack: Vec<EdgeRef>) {
        let mut guard = 0usize;
        while let Some(e) = stack.pop() {
            guard += 1;
            if guard > 1_000_000 {
                log::warn!("legalization stopped after {guard} flips");
                return;
            }
            if !self.is_triangle_alive(e.tri) || self.edge_apex(e) != p {
                continue;
            }
            if self.edge_flag(e).is_constrained() || self.is_locally_delaunay(e) || !self.quad_strictly_convex(e) {
                continue;
            }
            let n = self.tri(e.tri).nbr[e.idx as usize].unwrap();
            self.flip_unchecked(e);
            // t = [p, a, q], n = [q, b, p]
            stack.push(EdgeRef::new(e.tri, 0));
            stack.push(EdgeRef::new(n, 2));
        }
    }

    /// Inserts a point with Delaunay legalization. Returns the vertex id
    /// (an existing one if the point coincides with a vertex).
    pub(crate) fn insert_point(&mut self, start: TriId, p: Point, dof: Dof) -> Result<VertId> {
        let loc = self.walk_locate(start, p)?;
        Ok(self.insert_at(loc, p, dof))
    }

    pub(crate) fn insert_at(&mut self, loc: Loc, p: Point, dof: Dof) -> VertId {
        let vert = Vertex { pos: p, dof };
        match loc {
            Loc::OnVertex(v) => v,
            Loc::Inside(t) => {
                let (v, tris) = self.split_triangle(t, vert);
                let stack = tris.iter().map(|&t| self.edge_opposite(t, v)).collect();
                self.legalize_around(v, stack);
                v
            }
            Loc::OnEdge(e) => {
                let (v, tris) = self.split_edge(e, vert);
                let stack = tris.iter().map(|&t| self.edge_opposite(t, v)).collect();
                self.legalize_around(v, stack);
                v
            }
        }
    }

    #[inline]
    pub(crate) fn edge_opposite(&self, t: TriId, v: VertId) -> EdgeRef {
        EdgeRef::new(t, self.local_index(t, v).expect("vertex not in triangle"))
    }

    pub(crate) fn set_edge_flag(&mut self, e: EdgeRef, flag: EdgeFlag) {
        self.tri_mut(e.tri).flags[e.idx as usize] = flag;
        if let Some(tw) = self.twin(e) {
            self.tri_mut(tw.tri).flags[tw.idx as usize] = flag;
        }
    }

    /// Forces the segment between two existing vertices into the
    /// triangulation as a chain of constrained edges.
    pub(crate) fn insert_constraint(&mut self, va: VertId, vb: VertId, seg: u32) -> Result<()> {
        let pa0 = self.pos(va);
        let pb = self.pos(vb);
        let mut cur = va;
        let mut guard = 0usize;
        while cur != vb {
            guard += 1;
            if guard > self.vertex_capacity() + 8 {
                return Err(Error::Triangulation(format!("constraint {seg} insertion did not terminate")));
            }
            if let Some(e) = self.find_edge(cur, vb) {
                self.set_edge_flag(e, EdgeFlag::Constrained(seg));
                return Ok(());
            }
            let pc = self.pos(cur);
            // a neighbour lying on the remaining part of the segment
            let len = pc.dist(pb);
            let mut best: Option<(f64, VertId)> = None;
            for w in self.neighbors(cur) {
                let pw = self.pos(w);
                let u = (pw - pc).dot(pb - pc) / (len * len);
                if u > 0.0 && u < 1.0 && signed_area2(pc, pb, pw).abs() <= ON_EDGE_TOL * len {
                    if best.is_none_or(|(bu, _)| u < bu) {
                        best = Some((u, w));
                    }
                }
            }
            if let Some((_, w)) = best {
                let e = self.find_edge(cur, w).unwrap();
                if let EdgeFlag::Constrained(other) = self.edge_flag(e) {
                    if other != seg {
                        return Err(Error::CrossingSegments(other as usize, seg as usize));
                    }
                }
                self.set_edge_flag(e, EdgeFlag::Constrained(seg));
                cur = w;
                continue;
            }
            let (target, crossings) = self.trace_crossings(cur, vb, seg)?;
            self.flip_out(cur, target, crossings)?;
            let e = self
                .find_edge(cur, target)
                .ok_or_else(|| Error::Triangulation(format!("constraint {seg} could not be recovered")))?;
            self.set_edge_flag(e, EdgeFlag::Constrained(seg));
            cur = target;
        }
        let _ = pa0;
        Ok(())
    }

    /// Edges crossed by the open segment from `va` towards `vb`, up to the
    /// first vertex on it.
    fn trace_crossings(&self, va: VertId, vb: VertId, seg: u32) -> Result<(VertId, VecDeque<(VertId, VertId)>)> {
        let pa = self.pos(va);
        let pb = self.pos(vb);
        let len = pa.dist(pb);
        let side = |p: Point| {
            let d = signed_area2(pa, pb, p);
            if d.abs() <= ON_EDGE_TOL * len {
                0
            } else if d > 0.0 {
                1
            } else {
                -1
            }
        };
        let mut start = None;
        for (t, i) in self.fan(va) {
            let tri = self.tri(t);
            let a = tri.v[next(i)];
            let b = tri.v[prev(i)];
            if side(self.pos(a)) < 0 && side(self.pos(b)) > 0 {
                start = Some((t, i));
                break;
            }
        }
        let (mut t, i) = start.ok_or_else(|| Error::Triangulation(format!("segment {seg} leaves the domain")))?;
        let mut e = EdgeRef::new(t, i);
        let mut out = VecDeque::new();
        loop {
            let (a, b) = self.edge_endpoints(e);
            if let EdgeFlag::Constrained(other) = self.edge_flag(e) {
                return Err(Error::CrossingSegments(other as usize, seg as usize));
            }
            out.push_back((a, b));
            let tw = self
                .twin(e)
                .ok_or_else(|| Error::Triangulation(format!("segment {seg} leaves the domain")))?;
            t = tw.tri;
            let c = self.edge_apex(tw);
            if c == vb {
                return Ok((vb, out));
            }
            let pc = self.pos(c);
            match side(pc) {
                0 => {
                    let u = (pc - pa).dot(pb - pa) / (len * len);
                    if u > 0.0 && u < 1.0 {
                        return Ok((c, out));
                    }
                    return Err(Error::Triangulation(format!("segment {seg} passes through a vertex")));
                }
                s => {
                    // twin triangle is (c, b, a) with a on the right, b on the left
                    let j = tw.idx as usize;
                    let next_edge = if s < 0 {
                        // crossing edge becomes (c, b), opposite a
                        EdgeRef::new(t, prev(j))
                    } else {
                        // crossing edge becomes (a, c), opposite b
                        EdgeRef::new(t, next(j))
                    };
                    debug_assert!({
                        let (x, y) = self.edge_endpoints(next_edge);
                        side(self.pos(x)) < 0 && side(self.pos(y)) > 0
                    });
                    e = next_edge;
                }
            }
        }
    }

    /// Flips crossing edges away until the edge `va`-`vt` exists, then
    /// restores the Delaunay property on the newly created edges.
    fn flip_out(&mut self, va: VertId, vt: VertId, mut queue: VecDeque<(VertId, VertId)>) -> Result<()> {
        let pa = self.pos(va);
        let pt = self.pos(vt);
        let crosses = |tr: &Triangulation, p: VertId, q: VertId| {
            if p == va || p == vt || q == va || q == vt {
                return false;
            }
            let (pp, pq) = (tr.pos(p), tr.pos(q));
            let s1 = signed_area2(pa, pt, pp);
            let s2 = signed_area2(pa, pt, pq);
            let s3 = signed_area2(pp, pq, pa);
            let s4 = signed_area2(pp, pq, pt);
            s1 * s2 < 0.0 && s3 * s4 < 0.0
        };
        let mut fresh: Vec<(VertId, VertId)> = Vec::new();
        let mut stall = 0usize;
        while let Some((u, w)) = queue.pop_front() {
            let e = self
                .find_edge(u, w)
                .ok_or_else(|| Error::Triangulation("lost crossing edge during recovery".into()))?;
            if self.quad_strictly_convex(e) {
                let d = self.flip_unchecked(e);
                let (p, q) = self.edge_endpoints(d);
                if crosses(self, p, q) {
                    queue.push_back((p, q));
                } else {
                    fresh.push((p, q));
                }
                stall = 0;
            } else {
                queue.push_back((u, w));
                stall += 1;
                if stall > 2 * queue.len() + 2 {
                    return Err(Error::Triangulation("constraint recovery stalled".into()));
                }
            }
        }
        // restore empty circles among the new edges
        let mut changed = true;
        let mut rounds = 0;
        while changed && rounds < 1000 {
            changed = false;
            rounds += 1;
            for k in 0..fresh.len() {
                let (p, q) = fresh[k];
                if (p == va && q == vt) || (p == vt && q == va) {
                    continue;
                }
                let Some(e) = self.find_edge(p, q) else {
                    continue;
                };
                if self.edge_flag(e).is_constrained() || self.is_locally_delaunay(e) || !self.quad_strictly_convex(e) {
                    continue;
                }
                let d = self.flip_unchecked(e);
                fresh[k] = self.edge_endpoints(d);
                changed = true;
            }
        }
        Ok(())
    }
}

/// Hilbert index of a point in `[0,1]²` on a 2¹⁶ grid; used to order
/// insertions so walks stay short.
fn hilbert_index(p: Point) -> u64 {
    let n: u64 = 1 << 16;
    let mut x = ((p.x.clamp(0.0, 1.0)) * (n - 1) as f64) as u64;
    let mut y = ((p.y.clamp(0.0, 1.0)) * (n - 1) as f64) as u64;
    let mut d = 0u64;
    let mut s = n / 2;
    while s > 0 {
        let rx = u64::from(x & s > 0);
        let ry = u64::from(y & s > 0);
        d += s * s * ((3 * rx) ^ ry);
        if ry == 0 {
            if rx == 1 {
                x = n - 1 - x;
                y = n - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        s /= 2;
    }
    d
}

/// Constrained Delaunay triangulation of the scene's segment endpoints with
/// every segment present as a chain of constrained edges. The region outside
/// the boundary segments is removed.
pub fn build_cdt(scene: &Scene) -> Result<Triangulation> {
    build_cdt_arc(Arc::new(scene.clone()))
}

pub(crate) fn build_cdt_arc(scene: Arc<Scene>) -> Result<Triangulation> {
    scene.check()?;
    if !scene.segments.iter().any(|s| s.kind == SegmentKind::Boundary) {
        return Err(Error::InvalidScene("scene has no boundary segments".into()));
    }
    let bounds = scene.bounds();
    let ext = bounds.width().max(bounds.height());
    if !(ext > 0.0) {
        return Err(Error::InvalidScene("scene has zero extent".into()));
    }
    let mut t = Triangulation::empty(scene.clone());

    // enclosing box, removed at the end
    let m = ext;
    let lo = Point::new(bounds.min.x - m, bounds.min.y - m);
    let hi = Point::new(bounds.max.x + m, bounds.max.y + m);
    let s0 = t.push_vertex(Vertex { pos: lo, dof: Dof::Free });
    let s1 = t.push_vertex(Vertex {
        pos: Point::new(hi.x, lo.y),
        dof: Dof::Free,
    });
    let s2 = t.push_vertex(Vertex { pos: hi, dof: Dof::Free });
    let s3 = t.push_vertex(Vertex {
        pos: Point::new(lo.x, hi.y),
        dof: Dof::Free,
    });
    let outer = [s0, s1, s2, s3];
    t.push_triangle(Triangle {
        v: [s0, s1, s2],
        nbr: [None, Some(1), None],
        flags: [EdgeFlag::Internal; 3],
    });
    t.push_triangle(Triangle {
        v: [s0, s2, s3],
        nbr: [None, None, Some(0)],
        flags: [EdgeFlag::Internal; 3],
    });

    // unique endpoints in Hilbert order
    let mut ends: Vec<(u64, Point)> = Vec::new();
    for s in &scene.segments {
        for p in [s.a, s.b] {
            let q = Point::new((p.x - bounds.min.x) / ext, (p.y - bounds.min.y) / ext);
            ends.push((hilbert_index(q), p));
        }
    }
    ends.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.x.total_cmp(&b.1.x)).then(a.1.y.total_cmp(&b.1.y)));
    ends.dedup_by(|a, b| a.1 == b.1);
    let mut id_of: HashMap<(u64, u64), VertId> = HashMap::new();
    let mut last: TriId = 0;
    for &(_, p) in &ends {
        let v = t.insert_point(last, p, Dof::Fixed)?;
        id_of.insert((p.x.to_bits(), p.y.to_bits()), v);
        if let Some(tr) = t.incident_triangle(v) {
            last = tr;
        }
    }
    let vid = |p: Point| id_of[&(p.x.to_bits(), p.y.to_bits())];

    let mut fixed: HashMap<VertId, Vec<u32>> = HashMap::new();
    for (si, s) in scene.segments.iter().enumerate() {
        let (va, vb) = (vid(s.a), vid(s.b));
        if va == vb {
            return Err(Error::InvalidScene(format!("segment {si} collapses to a point")));
        }
        fixed.entry(va).or_default().push(si as u32);
        fixed.entry(vb).or_default().push(si as u32);
    }
    for (si, s) in scene.segments.iter().enumerate() {
        t.insert_constraint(vid(s.a), vid(s.b), si as u32)?;
    }

    // flood the exterior from the enclosing box, stopping at boundary segments
    let is_boundary = |f: EdgeFlag| matches!(f, EdgeFlag::Constrained(s) if scene.segments[s as usize].kind == SegmentKind::Boundary);
    let mut outside = vec![false; t.triangle_capacity()];
    let mut stack: Vec<TriId> = t
        .triangle_ids()
        .filter(|&tr| t.tri(tr).v.iter().any(|v| outer.contains(v)))
        .collect();
    for &tr in &stack {
        outside[tr as usize] = true;
    }
    while let Some(tr) = stack.pop() {
        let tri = *t.tri(tr);
        for i in 0..3 {
            if is_boundary(tri.flags[i]) {
                continue;
            }
            if let Some(n) = tri.nbr[i] {
                if !outside[n as usize] {
                    outside[n as usize] = true;
                    stack.push(n);
                }
            }
        }
    }
    let removed: Vec<TriId> = t.triangle_ids().filter(|&tr| outside[tr as usize]).collect();
    if removed.len() == t.triangle_count() {
        return Err(Error::InvalidScene("boundary segments do not enclose a region".into()));
    }
    for &tr in &removed {
        t.kill_triangle(tr);
    }
    let alive: Vec<TriId> = t.triangle_ids().collect();
    for tr in alive {
        for i in 0..3 {
            if let Some(n) = t.tri(tr).nbr[i] {
                if outside[n as usize] {
                    t.tri_mut(tr).nbr[i] = None;
                }
            }
        }
    }
    for v in outer {
        t.kill_vertex(v);
    }
    // vertices left without triangles lie outside the boundary
    let mut used = vec![false; t.vertex_capacity()];
    for tr in t.triangle_ids() {
        for &v in &t.tri(tr).v {
            used[v as usize] = true;
        }
    }
    let orphans: Vec<VertId> = t.vertex_ids().filter(|&v| !used[v as usize]).collect();
    if !orphans.is_empty() {
        return Err(Error::InvalidScene(format!("{} vertices lie outside the boundary", orphans.len())));
    }
    for (v, segs) in fixed {
        t.register_fixed(v, segs);
    }
    t.link_neighbors()?;
    t.compact();
    Ok(t)
}
