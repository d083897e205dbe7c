use super::{Dof, EdgeFlag, EdgeKey, EdgeRef, TriId, Triangle, Triangulation, VertId, Vertex};
use crate::geometry::{signed_area2, Point, ORIENT_EPS};
use std::collections::HashMap;

/// Number of alternative survivor positions tried when the default
/// contraction position would fold a triangle.
pub const FALLBACK_PLACEMENTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Incontractible {
    BothFixed,
    DifferentSegments,
    Topology,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractOutcome {
    Contracted { survivor: VertId, removed: VertId },
    Incontractible(Incontractible),
}

fn merge_flags(a: EdgeFlag, b: EdgeFlag) -> Option<EdgeFlag> {
    match (a, b) {
        (EdgeFlag::Internal, f) | (f, EdgeFlag::Internal) => Some(f),
        (EdgeFlag::Constrained(x), EdgeFlag::Constrained(y)) if x == y => Some(a),
        _ => None,
    }
}

/// Survivor/removed roles and position candidates for contracting `u`-`w`.
struct Plan {
    survivor: VertId,
    removed: VertId,
    candidates: Vec<Point>,
}

impl Triangulation {
    /// Splits every triangle into four through its edge midpoints.
    pub fn subdivide(&self) -> Triangulation {
        let mut src = self.clone();
        src.compact();
        let mut out = Triangulation::empty(src.scene_arc());
        for v in src.vertex_ids() {
            out.push_vertex(*src.vertex(v));
        }
        for v in src.vertex_ids() {
            if src.dof(v) == crate::trimesh::Dof::Fixed {
                out.register_fixed(v, src.vertex_segments(v).to_vec());
            }
        }
        let mut mid: HashMap<EdgeKey, VertId> = HashMap::new();
        for e in src.edges() {
            let (a, b) = src.edge_endpoints(e);
            let m = src.pos(a).midpoint(src.pos(b));
            let (pos, dof) = match src.edge_flag(e) {
                EdgeFlag::Constrained(s) => {
                    let seg = &src.scene().segments[s as usize];
                    (seg.at(seg.project_param(m)), Dof::OnSegment(s))
                }
                EdgeFlag::Internal => (m, Dof::Free),
            };
            let id = out.push_vertex(Vertex { pos, dof });
            mid.insert(EdgeKey::new(a, b), id);
        }
        for t in src.triangle_ids() {
            let tri = *src.tri(t);
            let [a, b, c] = tri.v;
            let mab = mid[&EdgeKey::new(a, b)];
            let mbc = mid[&EdgeKey::new(b, c)];
            let mca = mid[&EdgeKey::new(c, a)];
            // flags: edge (a,b) is opposite c (index 2), (b,c) opposite a, (c,a) opposite b
            let (fab, fbc, fca) = (tri.flags[2], tri.flags[0], tri.flags[1]);
            let i = EdgeFlag::Internal;
            out.push_triangle(Triangle {
                v: [a, mab, mca],
                nbr: [None; 3],
                flags: [i, fca, fab],
            });
            out.push_triangle(Triangle {
                v: [mab, b, mbc],
                nbr: [None; 3],
                flags: [fbc, i, fab],
            });
            out.push_triangle(Triangle {
                v: [mca, mbc, c],
                nbr: [None; 3],
                flags: [fbc, fca, i],
            });
            out.push_triangle(Triangle {
                v: [mab, mbc, mca],
                nbr: [None; 3],
                flags: [i, i, i],
            });
        }
        out.link_neighbors().expect("subdivision produced inconsistent mesh");
        out
    }

    /// Neighbours of `v` along segment `s` (the other ends of its
    /// constrained edges on `s`).
    fn chain_neighbors(&self, v: VertId, s: u32) -> Vec<VertId> {
        self.incident_edges(v)
            .into_iter()
            .filter(|&e| self.edge_flag(e) == EdgeFlag::Constrained(s))
            .map(|e| {
                let (a, b) = self.edge_endpoints(e);
                if a == v {
                    b
                } else {
                    a
                }
            })
            .collect()
    }

    fn contraction_plan(&self, u: VertId, w: VertId) -> Result<Plan, Incontractible> {
        let (du, dw) = (self.dof(u), self.dof(w));
        let (pu, pw) = (self.pos(u), self.pos(w));
        match (du, dw) {
            (Dof::Fixed, Dof::Fixed) => Err(Incontractible::BothFixed),
            (Dof::Fixed, _) | (_, Dof::Fixed) => {
                let (f, o) = if du == Dof::Fixed { (u, w) } else { (w, u) };
                if let Dof::OnSegment(s) = self.dof(o) {
                    if !self.vertex_on_segment(f, s) {
                        return Err(Incontractible::DifferentSegments);
                    }
                }
                Ok(Plan {
                    survivor: f,
                    removed: o,
                    candidates: vec![self.pos(f)],
                })
            }
            (Dof::Free, Dof::Free) => {
                let mut candidates = vec![pu.midpoint(pw)];
                for k in 1..=FALLBACK_PLACEMENTS {
                    candidates.push(pu.lerp(pw, k as f64 / (FALLBACK_PLACEMENTS + 1) as f64));
                }
                Ok(Plan {
                    survivor: u,
                    removed: w,
                    candidates,
                })
            }
            (Dof::OnSegment(s), Dof::OnSegment(s2)) if s != s2 => Err(Incontractible::DifferentSegments),
            (Dof::OnSegment(s), Dof::OnSegment(_)) => {
                let seg = &self.scene().segments[s as usize];
                let mid = seg.at(seg.project_param(pu.midpoint(pw)));
                let mut candidates = vec![mid];
                // range between the outer chain neighbours
                let mut params: Vec<f64> = self
                    .chain_neighbors(u, s)
                    .into_iter()
                    .chain(self.chain_neighbors(w, s))
                    .filter(|&x| x != u && x != w)
                    .map(|x| seg.project_param(self.pos(x)))
                    .collect();
                params.sort_by(f64::total_cmp);
                if let (Some(&lo), Some(&hi)) = (params.first(), params.last()) {
                    for k in 1..=FALLBACK_PLACEMENTS {
                        let t = lo + (hi - lo) * k as f64 / (FALLBACK_PLACEMENTS + 1) as f64;
                        candidates.push(seg.at(t));
                    }
                }
                Ok(Plan {
                    survivor: u,
                    removed: w,
                    candidates,
                })
            }
            (Dof::OnSegment(_), Dof::Free) | (Dof::Free, Dof::OnSegment(_)) => {
                let (c, f) = if matches!(du, Dof::OnSegment(_)) { (u, w) } else { (w, u) };
                let Dof::OnSegment(s) = self.dof(c) else { unreachable!() };
                let seg = &self.scene().segments[s as usize];
                let mut candidates = vec![self.pos(c)];
                let mut params: Vec<f64> = self
                    .chain_neighbors(c, s)
                    .into_iter()
                    .map(|x| seg.project_param(self.pos(x)))
                    .collect();
                params.sort_by(f64::total_cmp);
                if let (Some(&lo), Some(&hi)) = (params.first(), params.last()) {
                    for k in 1..=FALLBACK_PLACEMENTS {
                        let t = lo + (hi - lo) * k as f64 / (FALLBACK_PLACEMENTS + 1) as f64;
                        candidates.push(seg.at(t));
                    }
                }
                Ok(Plan {
                    survivor: c,
                    removed: f,
                    candidates,
                })
            }
        }
    }

    /// Merges the endpoints of `e` into one vertex. Fails without modifying
    /// the mesh if the merge is not allowed or every candidate position folds
    /// a triangle.
    pub fn contract_edge(&mut self, e: EdgeRef) -> ContractOutcome {
        let (u, w) = self.edge_endpoints(e);
        let plan = match self.contraction_plan(u, w) {
            Ok(p) => p,
            Err(r) => return ContractOutcome::Incontractible(r),
        };
        match self.contract_with_plan(e, &plan) {
            Ok(()) => ContractOutcome::Contracted {
                survivor: plan.survivor,
                removed: plan.removed,
            },
            Err(r) => ContractOutcome::Incontractible(r),
        }
    }

    fn contract_with_plan(&mut self, e: EdgeRef, plan: &Plan) -> Result<(), Incontractible> {
        let (s, r) = (plan.survivor, plan.removed);
        let tw = self.twin(e);
        let mut doomed: Vec<TriId> = vec![e.tri];
        let mut apexes = vec![self.edge_apex(e)];
        if let Some(tw) = tw {
            doomed.push(tw.tri);
            apexes.push(self.edge_apex(tw));
        }
        // link condition
        let ns = self.neighbors(s);
        let nr = self.neighbors(r);
        let common = ns.iter().filter(|x| nr.contains(x)).count();
        if common != apexes.len() || !apexes.iter().all(|a| ns.contains(a) && nr.contains(a)) {
            return Err(Incontractible::Topology);
        }
        if tw.is_some() && self.is_boundary_vertex(s) && self.is_boundary_vertex(r) {
            return Err(Incontractible::Topology);
        }
        // merged flags on the two sides of each doomed triangle
        let mut joins = Vec::new();
        for &d in &doomed {
            let tri = *self.tri(d);
            let ir = self.local_index(d, r).unwrap();
            let is = self.local_index(d, s).unwrap();
            // edge (apex, r) is opposite s; edge (apex, s) is opposite r
            let (n_r, f_r) = (tri.nbr[is], tri.flags[is]);
            let (n_s, f_s) = (tri.nbr[ir], tri.flags[ir]);
            if n_r.is_none() && n_s.is_none() {
                return Err(Incontractible::Topology);
            }
            let f = merge_flags(f_r, f_s).ok_or(Incontractible::Topology)?;
            if let EdgeFlag::Constrained(seg) = f {
                if !self.vertex_on_segment(s, seg) {
                    return Err(Incontractible::Topology);
                }
            }
            let apex = tri.v[3 - ir - is];
            joins.push((d, n_r, n_s, f, apex));
        }
        // constrained edges of the removed vertex must stay on their segment
        for ie in self.incident_edges(r) {
            if let EdgeFlag::Constrained(seg) = self.edge_flag(ie) {
                if !self.vertex_on_segment(s, seg) {
                    return Err(Incontractible::Topology);
                }
            }
        }
        // geometry: first candidate that keeps all surviving triangles positive
        let mut affected: Vec<TriId> = self.fan(s).into_iter().map(|(t, _)| t).collect();
        for (t, _) in self.fan(r) {
            if !affected.contains(&t) {
                affected.push(t);
            }
        }
        affected.retain(|t| !doomed.contains(t));
        let pos_ok = |tr: &Triangulation, p: Point| {
            affected.iter().all(|&t| {
                let v = tr.tri(t).v;
                let q = v.map(|x| if x == s || x == r { p } else { tr.pos(x) });
                signed_area2(q[0], q[1], q[2]) >= ORIENT_EPS
            })
        };
        let Some(&target) = plan.candidates.iter().find(|&&p| pos_ok(self, p)) else {
            return Err(Incontractible::Topology);
        };

        // rewire
        for &(_, n_r, n_s, f, apex) in &joins {
            let d = joins.iter().find(|j| j.4 == apex).unwrap().0;
            if let Some(a) = n_r {
                let j = self.nbr_index(a, d).unwrap();
                let t = self.tri_mut(a);
                t.nbr[j] = n_s;
                t.flags[j] = f;
            }
            if let Some(b) = n_s {
                let j = self.nbr_index(b, d).unwrap();
                let t = self.tri_mut(b);
                t.nbr[j] = n_r;
                t.flags[j] = f;
            }
            let keep = n_r.or(n_s).unwrap();
            self.set_vtri(apex, keep);
        }
        for &t in &affected {
            let tri = self.tri_mut(t);
            for x in tri.v.iter_mut() {
                if *x == r {
                    *x = s;
                }
            }
        }
        for &d in &doomed {
            self.kill_triangle(d);
        }
        self.kill_vertex(r);
        self.set_pos(s, target);
        if let Some(&t) = affected.first() {
            self.set_vtri(s, t);
        }
        for &t in &affected {
            let v = self.tri(t).v;
            for x in v {
                if self.incident_triangle(x).is_none_or(|it| !self.is_triangle_alive(it)) {
                    self.set_vtri(x, t);
                }
            }
        }
        Ok(())
    }

    /// Whether flipping `e` would make the diagonal strictly shorter.
    pub fn flip_shortens(&self, e: EdgeRef) -> bool {
        let Some(tw) = self.twin(e) else {
            return false;
        };
        let p = self.pos(self.edge_apex(e));
        let q = self.pos(self.edge_apex(tw));
        p.dist(q) < self.edge_length(e)
    }
}
