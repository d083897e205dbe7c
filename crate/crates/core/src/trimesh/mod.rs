//! Constrained triangulation of a scene.
//!
//! Triangles are stored counterclockwise. `nbr[i]` is the triangle across the
//! edge opposite `v[i]`, i.e. the edge `(v[i+1], v[i+2])`, and `flags[i]` tells
//! whether that edge is part of a scene segment.

mod cdt;
mod edit;
mod io;
mod refine;
mod validate;

pub use cdt::build_cdt;
pub use edit::{ContractOutcome, Incontractible, FALLBACK_PLACEMENTS};
pub use io::{read_native, read_triangle_files, write_native, write_triangle_files, TriangleFiles, NATIVE_HEADER};
pub use refine::{
    optimal_refined_cdt, refine_cdt, refine_cdt_partial, refine_sweep, RefineGrid, RefineOutcome, SweepCell, MAX_MIN_ANGLE,
    VERTEX_BUDGET_FACTOR,
};
pub use validate::{validate_topology, TopologyReport, Violation};

#[cfg(test)]
pub(crate) use cdt::tests::random_scene as cdt_test_scene;

use crate::geometry::{collinearity_quality, signed_area2, Point, SegmentKind, COLLINEARITY_KAPPA, ORIENT_EPS};
use crate::scene::Scene;
use std::collections::HashMap;
use std::sync::Arc;

pub type VertId = u32;
pub type TriId = u32;

/// Positional degrees of freedom of a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dof {
    /// Vertex of the original geometry; never moves.
    Fixed,
    /// Steiner vertex constrained to a scene segment (by id).
    OnSegment(u32),
    /// Steiner vertex with two degrees of freedom.
    Free,
}

impl Dof {
    /// Number of positional degrees of freedom.
    pub fn rank(self) -> u8 {
        match self {
            Dof::Fixed => 0,
            Dof::OnSegment(_) => 1,
            Dof::Free => 2,
        }
    }

    pub fn is_movable(self) -> bool {
        !matches!(self, Dof::Fixed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub pos: Point,
    pub dof: Dof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeFlag {
    Internal,
    Constrained(u32),
}

impl EdgeFlag {
    pub fn segment(self) -> Option<u32> {
        match self {
            EdgeFlag::Internal => None,
            EdgeFlag::Constrained(s) => Some(s),
        }
    }

    pub fn is_constrained(self) -> bool {
        matches!(self, EdgeFlag::Constrained(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub v: [VertId; 3],
    pub nbr: [Option<TriId>; 3],
    pub flags: [EdgeFlag; 3],
}

/// Half-edge handle: the edge of `tri` opposite its local vertex `idx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EdgeRef {
    pub tri: TriId,
    pub idx: u8,
}

impl EdgeRef {
    pub fn new(tri: TriId, idx: usize) -> Self {
        Self { tri, idx: idx as u8 }
    }
}

/// Unordered vertex pair naming an edge independently of triangle ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeKey(pub VertId, pub VertId);

impl EdgeKey {
    pub fn new(a: VertId, b: VertId) -> Self {
        if a < b {
            EdgeKey(a, b)
        } else {
            EdgeKey(b, a)
        }
    }
}

#[inline]
pub(crate) fn next(i: usize) -> usize {
    if i == 2 {
        0
    } else {
        i + 1
    }
}

#[inline]
pub(crate) fn prev(i: usize) -> usize {
    if i == 0 {
        2
    } else {
        i - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipOutcome {
    Flipped,
    RejectedNotConvex,
    RejectedConstrained,
}

#[derive(Debug, Clone)]
pub struct Triangulation {
    scene: Arc<Scene>,
    verts: Vec<Vertex>,
    vert_alive: Vec<bool>,
    tris: Vec<Triangle>,
    tri_alive: Vec<bool>,
    /// One incident triangle per vertex.
    vtri: Vec<Option<TriId>>,
    free_verts: Vec<VertId>,
    free_tris: Vec<TriId>,
    /// Segments each fixed vertex lies on (endpoints and T-junctions).
    fixed_segs: HashMap<VertId, Vec<u32>>,
}

impl Triangulation {
    pub(crate) fn empty(scene: Arc<Scene>) -> Self {
        Self {
            scene,
            verts: Vec::new(),
            vert_alive: Vec::new(),
            tris: Vec::new(),
            tri_alive: Vec::new(),
            vtri: Vec::new(),
            free_verts: Vec::new(),
            free_tris: Vec::new(),
            fixed_segs: HashMap::new(),
        }
    }

    /// Assembles a triangulation from vertices and counterclockwise vertex
    /// triples. Neighbour links are derived from shared edges; an edge is
    /// constrained when both endpoints lie on a common scene segment.
    pub fn from_parts(scene: Arc<Scene>, vertices: Vec<Vertex>, triangles: &[[VertId; 3]]) -> crate::Result<Self> {
        let mut t = Self::empty(scene);
        for v in vertices {
            t.push_vertex(v);
        }
        t.recompute_fixed_segments();
        for tri in triangles {
            for &v in tri {
                if v as usize >= t.verts.len() {
                    return Err(crate::Error::Triangulation(format!("vertex index {v} out of range")));
                }
            }
            t.push_triangle(Triangle {
                v: *tri,
                nbr: [None; 3],
                flags: [EdgeFlag::Internal; 3],
            });
        }
        t.link_neighbors()?;
        for ti in 0..t.tris.len() {
            for i in 0..3 {
                let (a, b) = t.edge_endpoints(EdgeRef::new(ti as TriId, i));
                t.tris[ti].flags[i] = match t.common_segment(a, b) {
                    Some(s) => EdgeFlag::Constrained(s),
                    None => EdgeFlag::Internal,
                };
            }
        }
        Ok(t)
    }

    /// Rebuilds neighbour links and incident-triangle pointers from the vertex
    /// triples of alive triangles.
    pub(crate) fn link_neighbors(&mut self) -> crate::Result<()> {
        let mut half: HashMap<(VertId, VertId), (TriId, usize)> = HashMap::new();
        for (ti, tri) in self.tris.iter().enumerate() {
            if !self.tri_alive[ti] {
                continue;
            }
            for i in 0..3 {
                let a = tri.v[next(i)];
                let b = tri.v[prev(i)];
                if half.insert((a, b), (ti as TriId, i)).is_some() {
                    return Err(crate::Error::Triangulation(format!("directed edge ({a},{b}) used twice")));
                }
            }
        }
        for ti in 0..self.tris.len() {
            if !self.tri_alive[ti] {
                continue;
            }
            for i in 0..3 {
                let a = self.tris[ti].v[next(i)];
                let b = self.tris[ti].v[prev(i)];
                self.tris[ti].nbr[i] = half.get(&(b, a)).map(|&(t, _)| t);
            }
        }
        self.vtri = vec![None; self.verts.len()];
        for ti in 0..self.tris.len() {
            if self.tri_alive[ti] {
                for &v in &self.tris[ti].v {
                    self.vtri[v as usize] = Some(ti as TriId);
                }
            }
        }
        Ok(())
    }

    pub(crate) fn recompute_fixed_segments(&mut self) {
        self.fixed_segs.clear();
        let segs = &self.scene.segments;
        for (vi, v) in self.verts.iter().enumerate() {
            if !self.vert_alive[vi] || v.dof != Dof::Fixed {
                continue;
            }
            let mut on = Vec::new();
            for (si, s) in segs.iter().enumerate() {
                if v.pos == s.a || v.pos == s.b || s.distance_to(v.pos) <= ON_SEGMENT_TOL {
                    on.push(si as u32);
                }
            }
            self.fixed_segs.insert(vi as VertId, on);
        }
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn scene_arc(&self) -> Arc<Scene> {
        self.scene.clone()
    }

    // ---- vertices ----

    pub fn vertex_count(&self) -> usize {
        self.vert_alive.iter().filter(|a| **a).count()
    }

    pub fn vertex_capacity(&self) -> usize {
        self.verts.len()
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertId> + '_ {
        (0..self.verts.len() as VertId).filter(|&v| self.vert_alive[v as usize])
    }

    pub fn is_vertex_alive(&self, v: VertId) -> bool {
        self.vert_alive.get(v as usize).copied().unwrap_or(false)
    }

    #[inline]
    pub fn vertex(&self, v: VertId) -> &Vertex {
        &self.verts[v as usize]
    }

    #[inline]
    pub fn pos(&self, v: VertId) -> Point {
        self.verts[v as usize].pos
    }

    #[inline]
    pub fn dof(&self, v: VertId) -> Dof {
        self.verts[v as usize].dof
    }

    /// Raw position update; callers are responsible for topology checks.
    #[inline]
    pub fn set_pos(&mut self, v: VertId, p: Point) {
        self.verts[v as usize].pos = p;
    }

    /// Segment ids a vertex lies on.
    pub fn vertex_segments(&self, v: VertId) -> &[u32] {
        match &self.verts[v as usize].dof {
            Dof::Fixed => self.fixed_segs.get(&v).map(|s| s.as_slice()).unwrap_or(&[]),
            Dof::OnSegment(s) => std::slice::from_ref(s),
            Dof::Free => &[],
        }
    }

    pub fn vertex_on_segment(&self, v: VertId, s: u32) -> bool {
        self.vertex_segments(v).contains(&s)
    }

    /// A segment both vertices lie on, if any.
    pub fn common_segment(&self, a: VertId, b: VertId) -> Option<u32> {
        let sb = self.vertex_segments(b);
        self.vertex_segments(a).iter().copied().find(|s| sb.contains(s))
    }

    pub(crate) fn push_vertex(&mut self, v: Vertex) -> VertId {
        if let Some(id) = self.free_verts.pop() {
            self.verts[id as usize] = v;
            self.vert_alive[id as usize] = true;
            self.vtri[id as usize] = None;
            id
        } else {
            self.verts.push(v);
            self.vert_alive.push(true);
            self.vtri.push(None);
            (self.verts.len() - 1) as VertId
        }
    }

    pub(crate) fn kill_vertex(&mut self, v: VertId) {
        self.vert_alive[v as usize] = false;
        self.vtri[v as usize] = None;
        self.fixed_segs.remove(&v);
        self.free_verts.push(v);
    }

    pub(crate) fn register_fixed(&mut self, v: VertId, segs: Vec<u32>) {
        self.fixed_segs.insert(v, segs);
    }

    // ---- triangles ----

    pub fn triangle_count(&self) -> usize {
        self.tri_alive.iter().filter(|a| **a).count()
    }

    pub fn triangle_capacity(&self) -> usize {
        self.tris.len()
    }

    pub fn triangle_ids(&self) -> impl Iterator<Item = TriId> + '_ {
        (0..self.tris.len() as TriId).filter(|&t| self.tri_alive[t as usize])
    }

    pub fn is_triangle_alive(&self, t: TriId) -> bool {
        self.tri_alive.get(t as usize).copied().unwrap_or(false)
    }

    #[inline]
    pub fn tri(&self, t: TriId) -> &Triangle {
        &self.tris[t as usize]
    }

    #[inline]
    pub(crate) fn tri_mut(&mut self, t: TriId) -> &mut Triangle {
        &mut self.tris[t as usize]
    }

    pub fn tri_points(&self, t: TriId) -> [Point; 3] {
        let v = self.tris[t as usize].v;
        [self.pos(v[0]), self.pos(v[1]), self.pos(v[2])]
    }

    pub fn tri_area(&self, t: TriId) -> f64 {
        let [a, b, c] = self.tri_points(t);
        0.5 * signed_area2(a, b, c)
    }

    /// True when the triangle is counterclockwise beyond the degeneracy tolerance.
    pub fn tri_positive(&self, t: TriId) -> bool {
        let [a, b, c] = self.tri_points(t);
        signed_area2(a, b, c) >= ORIENT_EPS
    }

    pub(crate) fn push_triangle(&mut self, tri: Triangle) -> TriId {
        let id = if let Some(id) = self.free_tris.pop() {
            self.tris[id as usize] = tri;
            self.tri_alive[id as usize] = true;
            id
        } else {
            self.tris.push(tri);
            self.tri_alive.push(true);
            (self.tris.len() - 1) as TriId
        };
        for &v in &tri.v {
            if (v as usize) < self.vtri.len() {
                self.vtri[v as usize] = Some(id);
            }
        }
        id
    }

    pub(crate) fn kill_triangle(&mut self, t: TriId) {
        self.tri_alive[t as usize] = false;
        self.free_tris.push(t);
    }

    /// Local index of vertex `v` in triangle `t`.
    #[inline]
    pub fn local_index(&self, t: TriId, v: VertId) -> Option<usize> {
        self.tris[t as usize].v.iter().position(|&x| x == v)
    }

    /// Local index of the edge of `t` that is shared with triangle `n`.
    #[inline]
    pub(crate) fn nbr_index(&self, t: TriId, n: TriId) -> Option<usize> {
        self.tris[t as usize].nbr.iter().position(|&x| x == Some(n))
    }

    #[inline]
    pub(crate) fn set_nbr_pointer(&mut self, t: Option<TriId>, old: TriId, new: TriId) {
        if let Some(t) = t {
            if let Some(i) = self.nbr_index(t, old) {
                self.tris[t as usize].nbr[i] = Some(new);
            }
        }
    }

    pub(crate) fn set_vtri(&mut self, v: VertId, t: TriId) {
        self.vtri[v as usize] = Some(t);
    }

    pub fn incident_triangle(&self, v: VertId) -> Option<TriId> {
        self.vtri[v as usize]
    }

    // ---- edges ----

    #[inline]
    pub fn edge_endpoints(&self, e: EdgeRef) -> (VertId, VertId) {
        let t = &self.tris[e.tri as usize];
        let i = e.idx as usize;
        (t.v[next(i)], t.v[prev(i)])
    }

    #[inline]
    pub fn edge_key(&self, e: EdgeRef) -> EdgeKey {
        let (a, b) = self.edge_endpoints(e);
        EdgeKey::new(a, b)
    }

    #[inline]
    pub fn edge_flag(&self, e: EdgeRef) -> EdgeFlag {
        self.tris[e.tri as usize].flags[e.idx as usize]
    }

    #[inline]
    pub fn edge_length(&self, e: EdgeRef) -> f64 {
        let (a, b) = self.edge_endpoints(e);
        self.pos(a).dist(self.pos(b))
    }

    /// Vertex of `e.tri` opposite the edge.
    #[inline]
    pub fn edge_apex(&self, e: EdgeRef) -> VertId {
        self.tris[e.tri as usize].v[e.idx as usize]
    }

    /// The same edge seen from the neighbouring triangle.
    pub fn twin(&self, e: EdgeRef) -> Option<EdgeRef> {
        let n = self.tris[e.tri as usize].nbr[e.idx as usize]?;
        let j = self.nbr_index(n, e.tri)?;
        Some(EdgeRef::new(n, j))
    }

    /// Canonical handle: the half-edge in the lower-id triangle.
    pub fn canonical(&self, e: EdgeRef) -> EdgeRef {
        match self.twin(e) {
            Some(tw) if tw.tri < e.tri => tw,
            _ => e,
        }
    }

    /// All unique edges, each reported once through its canonical handle.
    pub fn edges(&self) -> impl Iterator<Item = EdgeRef> + '_ {
        self.triangle_ids().flat_map(move |t| {
            (0..3).filter_map(move |i| {
                let n = self.tris[t as usize].nbr[i];
                match n {
                    Some(n) if n < t => None,
                    _ => Some(EdgeRef::new(t, i)),
                }
            })
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    /// The other edges of the one or two triangles incident to `e`.
    pub fn edge_neighbors(&self, e: EdgeRef) -> impl Iterator<Item = EdgeRef> {
        let i = e.idx as usize;
        let a = [EdgeRef::new(e.tri, next(i)), EdgeRef::new(e.tri, prev(i))];
        let b = self.twin(e).map(|tw| {
            let j = tw.idx as usize;
            [EdgeRef::new(tw.tri, next(j)), EdgeRef::new(tw.tri, prev(j))]
        });
        a.into_iter().chain(b.into_iter().flatten())
    }

    /// Finds the half-edge `a → b` or `b → a`.
    pub fn find_edge(&self, a: VertId, b: VertId) -> Option<EdgeRef> {
        for (t, i) in self.fan(a) {
            let tri = &self.tris[t as usize];
            if tri.v[next(i)] == b {
                return Some(EdgeRef::new(t, prev(i)));
            }
            if tri.v[prev(i)] == b {
                return Some(EdgeRef::new(t, next(i)));
            }
        }
        None
    }

    pub fn total_edge_length(&self) -> f64 {
        self.edges().map(|e| self.edge_length(e)).sum()
    }

    // ---- vertex stars ----

    /// Triangles around `v` as `(triangle, local index of v)`, in
    /// counterclockwise order. For a vertex on the outer boundary the fan
    /// starts at the clockwise-most triangle.
    pub fn fan(&self, v: VertId) -> Vec<(TriId, usize)> {
        let mut out = Vec::with_capacity(8);
        self.fan_into(v, &mut out);
        out
    }

    pub fn fan_into(&self, v: VertId, out: &mut Vec<(TriId, usize)>) {
        out.clear();
        let Some(start) = self.vtri.get(v as usize).copied().flatten() else {
            return;
        };
        // rewind clockwise to an open side, if any
        let mut t = start;
        let mut guard = 0usize;
        loop {
            let i = match self.local_index(t, v) {
                Some(i) => i,
                None => return,
            };
            match self.tris[t as usize].nbr[prev(i)] {
                Some(n) if n != start => t = n,
                _ => break,
            }
            guard += 1;
            if guard > 100_000 {
                return;
            }
        }
        let first = t;
        loop {
            let i = match self.local_index(t, v) {
                Some(i) => i,
                None => return,
            };
            out.push((t, i));
            match self.tris[t as usize].nbr[next(i)] {
                Some(n) if n != first => t = n,
                _ => break,
            }
            if out.len() > 100_000 {
                return;
            }
        }
    }

    /// Adjacent vertices of `v` in counterclockwise order.
    pub fn neighbors(&self, v: VertId) -> Vec<VertId> {
        let mut out = Vec::with_capacity(8);
        self.neighbors_into(v, &mut out);
        out
    }

    pub fn neighbors_into(&self, v: VertId, out: &mut Vec<VertId>) {
        out.clear();
        let fan = self.fan(v);
        for &(t, i) in &fan {
            out.push(self.tris[t as usize].v[next(i)]);
        }
        if let Some(&(t, i)) = fan.last() {
            let last = self.tris[t as usize].v[prev(i)];
            if self.tris[t as usize].nbr[next(i)].is_none() || out.first() != Some(&last) {
                if !out.contains(&last) {
                    out.push(last);
                }
            }
        }
    }

    /// Half-edges leaving `v`, one per incident edge.
    pub fn incident_edges(&self, v: VertId) -> Vec<EdgeRef> {
        let fan = self.fan(v);
        let mut out = Vec::with_capacity(fan.len() + 1);
        for &(t, i) in &fan {
            // edge (v, v[next]) is opposite v[prev]
            out.push(EdgeRef::new(t, prev(i)));
        }
        if let Some(&(t, i)) = fan.last() {
            if self.tris[t as usize].nbr[next(i)].is_none() {
                out.push(EdgeRef::new(t, next(i)));
            }
        }
        out
    }

    /// Combined area of the triangles around `v`.
    pub fn star_area(&self, v: VertId) -> f64 {
        self.fan(v).iter().map(|&(t, _)| self.tri_area(t)).sum()
    }

    /// Whether every triangle around `v` is positively oriented.
    pub fn star_valid(&self, v: VertId) -> bool {
        self.fan(v).iter().all(|&(t, _)| self.tri_positive(t))
    }

    /// Whether `v` touches the outer boundary (open fan).
    pub fn is_boundary_vertex(&self, v: VertId) -> bool {
        let fan = self.fan(v);
        match fan.first() {
            Some(&(t, i)) => self.tris[t as usize].nbr[prev(i)].is_none(),
            None => true,
        }
    }

    // ---- flips ----

    /// Whether the quad around an internal edge is strictly convex, with no
    /// corner that is collinear or nearly so.
    pub fn flip_is_convex(&self, e: EdgeRef) -> bool {
        let Some(tw) = self.twin(e) else {
            return false;
        };
        let p = self.pos(self.edge_apex(e));
        let q = self.pos(self.edge_apex(tw));
        let (a, b) = self.edge_endpoints(e);
        let (a, b) = (self.pos(a), self.pos(b));
        // quad in counterclockwise order: p, a, q, b
        let corners = [(b, p, a), (p, a, q), (a, q, b), (q, b, p)];
        corners
            .iter()
            .all(|&(x, y, z)| signed_area2(x, y, z) >= ORIENT_EPS && collinearity_quality(x, y, z) >= COLLINEARITY_KAPPA)
    }

    pub fn flip_edge(&mut self, e: EdgeRef) -> FlipOutcome {
        if self.edge_flag(e).is_constrained() {
            return FlipOutcome::RejectedConstrained;
        }
        if !self.flip_is_convex(e) {
            return FlipOutcome::RejectedNotConvex;
        }
        self.flip_unchecked(e);
        FlipOutcome::Flipped
    }

    /// Replaces the diagonal of the quad around `e` by the other diagonal.
    /// Returns the handle of the new diagonal. No geometric checks.
    pub(crate) fn flip_unchecked(&mut self, e: EdgeRef) -> EdgeRef {
        let t = e.tri;
        let i = e.idx as usize;
        let n = self.tris[t as usize].nbr[i].expect("flip of boundary edge");
        let j = self.nbr_index(n, t).expect("asymmetric neighbour link");
        let tt = self.tris[t as usize];
        let nn = self.tris[n as usize];
        let p = tt.v[i];
        let a = tt.v[next(i)];
        let b = tt.v[prev(i)];
        let q = nn.v[j];
        debug_assert_eq!(nn.v[next(j)], b);
        debug_assert_eq!(nn.v[prev(j)], a);
        let (t_bp, f_bp) = (tt.nbr[next(i)], tt.flags[next(i)]);
        let (t_pa, f_pa) = (tt.nbr[prev(i)], tt.flags[prev(i)]);
        let (n_aq, f_aq) = (nn.nbr[next(j)], nn.flags[next(j)]);
        let (n_qb, f_qb) = (nn.nbr[prev(j)], nn.flags[prev(j)]);

        self.tris[t as usize] = Triangle {
            v: [p, a, q],
            nbr: [n_aq, Some(n), t_pa],
            flags: [f_aq, EdgeFlag::Internal, f_pa],
        };
        self.tris[n as usize] = Triangle {
            v: [q, b, p],
            nbr: [t_bp, Some(t), n_qb],
            flags: [f_bp, EdgeFlag::Internal, f_qb],
        };
        self.set_nbr_pointer(n_aq, n, t);
        self.set_nbr_pointer(t_bp, t, n);
        self.vtri[p as usize] = Some(t);
        self.vtri[a as usize] = Some(t);
        self.vtri[q as usize] = Some(n);
        self.vtri[b as usize] = Some(n);
        EdgeRef::new(t, 1)
    }

    // ---- insertion primitives ----

    /// Splits triangle `t` by a new vertex strictly inside it.
    /// Returns the three triangles around the new vertex.
    pub(crate) fn split_triangle(&mut self, t: TriId, vert: Vertex) -> (VertId, [TriId; 3]) {
        let old = self.tris[t as usize];
        let [a, b, c] = old.v;
        let p = self.push_vertex(vert);
        let t1 = self.push_triangle(Triangle {
            v: [b, c, p],
            nbr: [None, None, None],
            flags: [EdgeFlag::Internal; 3],
        });
        let t2 = self.push_triangle(Triangle {
            v: [c, a, p],
            nbr: [None, None, None],
            flags: [EdgeFlag::Internal; 3],
        });
        self.tris[t as usize] = Triangle {
            v: [a, b, p],
            nbr: [Some(t1), Some(t2), old.nbr[2]],
            flags: [EdgeFlag::Internal, EdgeFlag::Internal, old.flags[2]],
        };
        self.tris[t1 as usize] = Triangle {
            v: [b, c, p],
            nbr: [Some(t2), Some(t), old.nbr[0]],
            flags: [EdgeFlag::Internal, EdgeFlag::Internal, old.flags[0]],
        };
        self.tris[t2 as usize] = Triangle {
            v: [c, a, p],
            nbr: [Some(t), Some(t1), old.nbr[1]],
            flags: [EdgeFlag::Internal, EdgeFlag::Internal, old.flags[1]],
        };
        self.set_nbr_pointer(old.nbr[0], t, t1);
        self.set_nbr_pointer(old.nbr[1], t, t2);
        self.vtri[a as usize] = Some(t);
        self.vtri[b as usize] = Some(t);
        self.vtri[c as usize] = Some(t1);
        self.vtri[p as usize] = Some(t);
        (p, [t, t1, t2])
    }

    /// Splits the edge `e` by a new vertex on it. Constraint flags carry over
    /// to both halves. Returns the new vertex and the triangles around it.
    pub(crate) fn split_edge(&mut self, e: EdgeRef, vert: Vertex) -> (VertId, Vec<TriId>) {
        let t = e.tri;
        let i = e.idx as usize;
        let tt = self.tris[t as usize];
        let c = tt.v[i];
        let a = tt.v[next(i)];
        let b = tt.v[prev(i)];
        let flag = tt.flags[i];
        let nb = tt.nbr[i];
        let p = self.push_vertex(vert);
        let t1 = self.push_triangle(Triangle {
            v: [c, p, b],
            nbr: [None; 3],
            flags: [EdgeFlag::Internal; 3],
        });
        match nb {
            None => {
                self.tris[t as usize] = Triangle {
                    v: [c, a, p],
                    nbr: [None, Some(t1), tt.nbr[prev(i)]],
                    flags: [flag, EdgeFlag::Internal, tt.flags[prev(i)]],
                };
                self.tris[t1 as usize] = Triangle {
                    v: [c, p, b],
                    nbr: [None, tt.nbr[next(i)], Some(t)],
                    flags: [flag, tt.flags[next(i)], EdgeFlag::Internal],
                };
                self.set_nbr_pointer(tt.nbr[next(i)], t, t1);
                self.vtri[c as usize] = Some(t);
                self.vtri[a as usize] = Some(t);
                self.vtri[b as usize] = Some(t1);
                self.vtri[p as usize] = Some(t);
                (p, vec![t, t1])
            }
            Some(n) => {
                let j = self.nbr_index(n, t).expect("asymmetric neighbour link");
                let nn = self.tris[n as usize];
                let d = nn.v[j];
                let n1 = self.push_triangle(Triangle {
                    v: [d, p, a],
                    nbr: [None; 3],
                    flags: [EdgeFlag::Internal; 3],
                });
                self.tris[t as usize] = Triangle {
                    v: [c, a, p],
                    nbr: [Some(n1), Some(t1), tt.nbr[prev(i)]],
                    flags: [flag, EdgeFlag::Internal, tt.flags[prev(i)]],
                };
                self.tris[t1 as usize] = Triangle {
                    v: [c, p, b],
                    nbr: [Some(n), tt.nbr[next(i)], Some(t)],
                    flags: [flag, tt.flags[next(i)], EdgeFlag::Internal],
                };
                self.tris[n as usize] = Triangle {
                    v: [d, b, p],
                    nbr: [Some(t1), Some(n1), nn.nbr[prev(j)]],
                    flags: [flag, EdgeFlag::Internal, nn.flags[prev(j)]],
                };
                self.tris[n1 as usize] = Triangle {
                    v: [d, p, a],
                    nbr: [Some(t), nn.nbr[next(j)], Some(n)],
                    flags: [flag, nn.flags[next(j)], EdgeFlag::Internal],
                };
                self.set_nbr_pointer(tt.nbr[next(i)], t, t1);
                self.set_nbr_pointer(nn.nbr[next(j)], n, n1);
                self.vtri[c as usize] = Some(t);
                self.vtri[a as usize] = Some(t);
                self.vtri[b as usize] = Some(t1);
                self.vtri[d as usize] = Some(n);
                self.vtri[p as usize] = Some(t);
                (p, vec![t, t1, n, n1])
            }
        }
    }

    /// Drops dead slots and renumbers vertices and triangles densely.
    /// Returns the old-to-new vertex map.
    pub fn compact(&mut self) -> Vec<Option<VertId>> {
        let mut vmap = vec![None; self.verts.len()];
        let mut verts = Vec::with_capacity(self.verts.len());
        for (i, v) in self.verts.iter().enumerate() {
            if self.vert_alive[i] {
                vmap[i] = Some(verts.len() as VertId);
                verts.push(*v);
            }
        }
        let mut tmap = vec![None; self.tris.len()];
        let mut k = 0;
        for (i, alive) in self.tri_alive.iter().enumerate() {
            if *alive {
                tmap[i] = Some(k as TriId);
                k += 1;
            }
        }
        let mut tris = Vec::with_capacity(k);
        for (i, t) in self.tris.iter().enumerate() {
            if !self.tri_alive[i] {
                continue;
            }
            tris.push(Triangle {
                v: t.v.map(|v| vmap[v as usize].expect("triangle uses dead vertex")),
                nbr: t.nbr.map(|n| n.and_then(|n| tmap[n as usize])),
                flags: t.flags,
            });
        }
        let fixed: HashMap<VertId, Vec<u32>> = self
            .fixed_segs
            .drain()
            .filter_map(|(v, s)| vmap[v as usize].map(|nv| (nv, s)))
            .collect();
        let nv = verts.len();
        let nt = tris.len();
        self.verts = verts;
        self.vert_alive = vec![true; nv];
        self.tris = tris;
        self.tri_alive = vec![true; nt];
        self.free_verts.clear();
        self.free_tris.clear();
        self.fixed_segs = fixed;
        self.vtri = vec![None; nv];
        for (ti, t) in self.tris.iter().enumerate() {
            for &v in &t.v {
                self.vtri[v as usize] = Some(ti as TriId);
            }
        }
        vmap
    }

    /// Host segment of a constrained edge, if any, together with its kind.
    pub fn edge_segment_kind(&self, e: EdgeRef) -> Option<(u32, SegmentKind)> {
        self.edge_flag(e)
            .segment()
            .map(|s| (s, self.scene.segments[s as usize].kind))
    }

    pub fn movable_vertices(&self) -> Vec<VertId> {
        self.vertex_ids().filter(|&v| self.dof(v).is_movable()).collect()
    }

    /// Projects a proposed position onto the vertex's admissible set (its host
    /// segment for constrained vertices; the fixed position for fixed ones).
    pub fn project_to_dof(&self, v: VertId, p: Point) -> Point {
        match self.dof(v) {
            Dof::Free => p,
            Dof::Fixed => self.pos(v),
            Dof::OnSegment(s) => {
                let seg = &self.scene.segments[s as usize];
                seg.at(seg.project_param(p).clamp(0.0, 1.0))
            }
        }
    }
}

/// Distance below which a point counts as lying on a segment.
pub const ON_SEGMENT_TOL: f64 = 1e-12;

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;
    use crate::geometry::Point;

    pub fn square_scene() -> Arc<Scene> {
        Arc::new(Scene::in_unit_square("square", "test", vec![]))
    }

    /// Unit square split by the diagonal (0,0)-(1,1).
    pub fn two_triangle_square() -> Triangulation {
        let scene = square_scene();
        let verts = [(0., 0.), (1., 0.), (1., 1.), (0., 1.)]
            .iter()
            .map(|&(x, y)| Vertex {
                pos: Point::new(x, y),
                dof: Dof::Fixed,
            })
            .collect();
        Triangulation::from_parts(scene, verts, &[[0, 1, 2], [0, 2, 3]]).unwrap()
    }
}
