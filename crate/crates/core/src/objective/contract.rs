//! Which short edges may be merged to a point.

use super::ObjectiveParams;
use crate::geometry::{collinearity_quality, Point, Segment};
use crate::trimesh::{Dof, EdgeRef, Triangulation, VertId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NotContractible {
    BothFixed,
    DifferentSegments,
    Conditioning,
    TrappedVertices,
    OneHop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Contractibility {
    Yes,
    No(NotContractible),
}

/// Decides whether `e` could be contracted. The verdict depends on the
/// current configuration and is never cached across edits.
pub fn is_contractible(t: &Triangulation, e: EdgeRef, params: &ObjectiveParams) -> Contractibility {
    match check(t, e, params) {
        Ok(()) => Contractibility::Yes,
        Err(r) => Contractibility::No(r),
    }
}

fn check(t: &Triangulation, e: EdgeRef, params: &ObjectiveParams) -> Result<(), NotContractible> {
    let (a, b) = t.edge_endpoints(e);
    direct_rules(t, a, b)?;
    let trap = Trap::setup(t, a, b, params.kappa);
    conditioning(t, a, b, params.kappa, trap.as_ref().map(|tr| tr.visited.as_slice()))?;
    if let Some(tr) = &trap {
        tr.verdict(t, params)?;
    }
    one_hop(t, e, a, b, params.eps)
}

/// Endpoint and conditioning rules only, as used for the sub-edges of a
/// straight constrained chain.
fn basic_rules(t: &Triangulation, a: VertId, b: VertId, kappa: f64) -> Result<(), NotContractible> {
    direct_rules(t, a, b)?;
    conditioning(t, a, b, kappa, None)
}

fn direct_rules(t: &Triangulation, a: VertId, b: VertId) -> Result<(), NotContractible> {
    let (da, db) = (t.dof(a), t.dof(b));
    if da == Dof::Fixed && db == Dof::Fixed {
        return Err(NotContractible::BothFixed);
    }
    if da != Dof::Free && db != Dof::Free && t.common_segment(a, b).is_none() {
        return Err(NotContractible::DifferentSegments);
    }
    Ok(())
}

pub(crate) fn segs_collinear(s: &Segment, o: &Segment, kappa: f64) -> bool {
    collinearity_quality(s.a, s.b, o.a) < kappa && collinearity_quality(s.a, s.b, o.b) < kappa
}

#[derive(Clone, Copy)]
enum Slot {
    Fixed(Point),
    Seg(u32),
    Free,
}

fn slot(t: &Triangulation, v: VertId) -> Slot {
    match t.dof(v) {
        Dof::Fixed => Slot::Fixed(t.pos(v)),
        Dof::OnSegment(s) => Slot::Seg(s),
        Dof::Free => Slot::Free,
    }
}

/// Whether a triangle with these vertex kinds is necessarily near-flat.
fn badly_conditioned(t: &Triangulation, slots: [Slot; 3], kappa: f64) -> bool {
    let segs = &t.scene().segments;
    let mut fixed = [Point::default(); 3];
    let mut on = [0u32; 3];
    let (mut nf, mut ns) = (0, 0);
    for s in slots {
        match s {
            Slot::Free => return false,
            Slot::Fixed(p) => {
                fixed[nf] = p;
                nf += 1;
            }
            Slot::Seg(k) => {
                on[ns] = k;
                ns += 1;
            }
        }
    }
    let q = |a, b, c| collinearity_quality(a, b, c) < kappa;
    match nf {
        3 => q(fixed[0], fixed[1], fixed[2]),
        2 => {
            let s = &segs[on[0] as usize];
            [s.a, s.b, s.midpoint()].iter().all(|&x| q(fixed[0], fixed[1], x))
        }
        1 => {
            let (s1, s2) = (&segs[on[0] as usize], &segs[on[1] as usize]);
            segs_collinear(s1, s2, kappa) && q(s1.a, s1.b, fixed[0])
        }
        _ => {
            let (s1, s2, s3) = (&segs[on[0] as usize], &segs[on[1] as usize], &segs[on[2] as usize]);
            segs_collinear(s1, s2, kappa) && segs_collinear(s1, s3, kappa)
        }
    }
}

/// Checks the triangles that would result from snapping the less
/// constrained endpoint onto the more constrained one. Triangles whose other
/// two vertices both lie in `skip` are left to the trapped-vertex rule.
fn conditioning(
    t: &Triangulation,
    a: VertId,
    b: VertId,
    kappa: f64,
    skip: Option<&[VertId]>,
) -> Result<(), NotContractible> {
    let (ra, rb) = (t.dof(a).rank(), t.dof(b).rank());
    let keep = if rb < ra { b } else { a };
    let merged = slot(t, keep);
    if matches!(merged, Slot::Free) {
        return Ok(());
    }
    let removed: &[(VertId, VertId)] = if ra == rb {
        &[(a, b), (b, a)]
    } else if ra < rb {
        &[(b, a)]
    } else {
        &[(a, b)]
    };
    for &(r, other) in removed {
        for (tri, i) in t.fan(r) {
            let tr = t.tri(tri);
            if tr.v.contains(&other) {
                continue;
            }
            let x = tr.v[(i + 1) % 3];
            let y = tr.v[(i + 2) % 3];
            if let Some(skip) = skip {
                if skip.contains(&x) && skip.contains(&y) {
                    continue;
                }
            }
            if badly_conditioned(t, [merged, slot(t, x), slot(t, y)], kappa) {
                return Err(NotContractible::Conditioning);
            }
        }
    }
    Ok(())
}

/// Constrained edges leaving a vertex, grouped by the straight line they lie
/// on. Each line has one or two rays `(first vertex, segment)`.
pub(crate) struct Line {
    pub seg: u32,
    pub rays: Vec<(VertId, u32)>,
}

pub(crate) fn vertex_lines(t: &Triangulation, v: VertId, kappa: f64) -> Vec<Line> {
    let segs = &t.scene().segments;
    let mut lines: Vec<Line> = Vec::new();
    for e in t.incident_edges(v) {
        let Some(s) = t.edge_flag(e).segment() else {
            continue;
        };
        let (x, y) = t.edge_endpoints(e);
        let other = if x == v { y } else { x };
        match lines
            .iter_mut()
            .find(|l| segs_collinear(&segs[l.seg as usize], &segs[s as usize], kappa))
        {
            Some(l) => l.rays.push((other, s)),
            None => lines.push(Line {
                seg: s,
                rays: vec![(other, s)],
            }),
        }
    }
    lines
}

/// Walks a straight chain of constrained edges away from its origin.
pub(crate) struct ChainWalk {
    line_seg: u32,
    prev: VertId,
    cur: VertId,
    started: bool,
    done: bool,
    kappa: f64,
}

impl ChainWalk {
    pub(crate) fn new(origin: VertId, first: VertId, line_seg: u32, kappa: f64) -> Self {
        Self {
            line_seg,
            prev: origin,
            cur: first,
            started: false,
            done: false,
            kappa,
        }
    }

    pub(crate) fn step(&mut self, t: &Triangulation) -> Option<VertId> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(self.cur);
        }
        let segs = &t.scene().segments;
        let reference = &segs[self.line_seg as usize];
        let mut found = None;
        for e in t.incident_edges(self.cur) {
            let Some(s) = t.edge_flag(e).segment() else {
                continue;
            };
            let (x, y) = t.edge_endpoints(e);
            let other = if x == self.cur { y } else { x };
            if other != self.prev && segs_collinear(reference, &segs[s as usize], self.kappa) {
                found = Some(other);
                break;
            }
        }
        match found {
            Some(n) => {
                self.prev = self.cur;
                self.cur = n;
                Some(n)
            }
            None => {
                self.done = true;
                None
            }
        }
    }
}

/// Straight chains through the contraction target of a free vertex, walked
/// far enough to reach every chain vertex adjacent to the free vertex.
struct Trap {
    target: VertId,
    /// Per ray: chain vertices after the target, and the index of the
    /// farthest one adjacent to the free vertex.
    rays: Vec<(Vec<VertId>, Option<usize>)>,
    /// Target plus every chain vertex walked.
    visited: Vec<VertId>,
}

impl Trap {
    fn setup(t: &Triangulation, a: VertId, b: VertId, kappa: f64) -> Option<Trap> {
        let (free, target) = match (t.dof(a), t.dof(b)) {
            (Dof::Free, d) if d != Dof::Free => (a, b),
            (d, Dof::Free) if d != Dof::Free => (b, a),
            _ => return None,
        };
        let segs = &t.scene().segments;
        let near: Vec<VertId> = t
            .neighbors(free)
            .into_iter()
            .filter(|&x| x != target && t.dof(x) != Dof::Free)
            .collect();
        let mut trap = Trap {
            target,
            rays: Vec::new(),
            visited: vec![target],
        };
        for line in vertex_lines(t, target, kappa) {
            let reference = &segs[line.seg as usize];
            let mut pending: Vec<VertId> = near
                .iter()
                .copied()
                .filter(|&x| {
                    t.vertex_segments(x)
                        .iter()
                        .any(|&s| segs_collinear(reference, &segs[s as usize], kappa))
                })
                .collect();
            if pending.is_empty() {
                continue;
            }
            let mut walks: Vec<ChainWalk> = line
                .rays
                .iter()
                .map(|&(first, _)| ChainWalk::new(target, first, line.seg, kappa))
                .collect();
            let base = trap.rays.len();
            trap.rays.extend(walks.iter().map(|_| (Vec::new(), None)));
            let mut active = walks.len();
            while !pending.is_empty() && active > 0 {
                active = 0;
                for (k, w) in walks.iter_mut().enumerate() {
                    let Some(v) = w.step(t) else {
                        continue;
                    };
                    active += 1;
                    let ray = &mut trap.rays[base + k];
                    ray.0.push(v);
                    trap.visited.push(v);
                    if let Some(p) = pending.iter().position(|&x| x == v) {
                        pending.swap_remove(p);
                        ray.1 = Some(ray.0.len() - 1);
                    }
                }
            }
        }
        Some(trap)
    }

    /// At most one sub-edge up to the farthest adjacent chain vertex may be
    /// long; the short ones must be contractible themselves.
    fn verdict(&self, t: &Triangulation, params: &ObjectiveParams) -> Result<(), NotContractible> {
        for (chain, last) in &self.rays {
            let Some(m) = *last else {
                continue;
            };
            if m == 0 {
                continue;
            }
            let mut long = 0;
            let mut prev = self.target;
            for &c in &chain[..=m] {
                if t.pos(prev).dist(t.pos(c)) >= params.eps {
                    long += 1;
                    if long > 1 {
                        return Err(NotContractible::TrappedVertices);
                    }
                } else if basic_rules(t, prev, c, params.kappa).is_err() {
                    return Err(NotContractible::TrappedVertices);
                }
                prev = c;
            }
        }
        Ok(())
    }
}

/// Common neighbours of the endpoints that are not apexes of the edge's own
/// triangles must lie within `eps` of one of those apexes.
fn one_hop(t: &Triangulation, e: EdgeRef, a: VertId, b: VertId, eps: f64) -> Result<(), NotContractible> {
    let mut apex = [t.edge_apex(e), u32::MAX];
    let n_apex = match t.twin(e) {
        Some(tw) => {
            apex[1] = t.edge_apex(tw);
            2
        }
        None => 1,
    };
    let apex = &apex[..n_apex];
    let nb = t.neighbors(b);
    for h in t.neighbors(a) {
        if h == b || apex.contains(&h) || !nb.contains(&h) {
            continue;
        }
        let ph = t.pos(h);
        if apex.iter().all(|&x| t.pos(x).dist(ph) >= eps) {
            return Err(NotContractible::OneHop);
        }
    }
    Ok(())
}
