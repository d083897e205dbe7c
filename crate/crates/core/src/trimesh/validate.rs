use super::{next, prev, Dof, EdgeFlag, EdgeRef, TriId, Triangulation, VertId, ON_SEGMENT_TOL};
use crate::geometry::{signed_area2, SegmentKind, ORIENT_EPS};
use std::collections::HashSet;
use std::fmt;

/// Distance tolerance for constrained-edge endpoints on their host segment.
const EDGE_ON_SEGMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DeadVertex { tri: TriId, vertex: VertId },
    NotPositive { tri: TriId, area2: f64 },
    AsymmetricNeighbor { tri: TriId, idx: u8 },
    FlagMismatch { tri: TriId, idx: u8 },
    UnconstrainedBorder { tri: TriId, idx: u8 },
    BorderNotBoundary { tri: TriId, idx: u8, segment: u32 },
    ConstrainedOffSegment { tri: TriId, idx: u8, segment: u32 },
    VertexOffSegment { vertex: VertId, segment: u32, distance: f64 },
    CoverageGap { segment: u32, detail: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DeadVertex { tri, vertex } => write!(f, "triangle {tri} references dead vertex {vertex}"),
            Violation::NotPositive { tri, area2 } => write!(f, "triangle {tri} not positively oriented (2A = {area2:e})"),
            Violation::AsymmetricNeighbor { tri, idx } => write!(f, "neighbour link {tri}.{idx} is not symmetric"),
            Violation::FlagMismatch { tri, idx } => write!(f, "edge flag {tri}.{idx} differs from its twin"),
            Violation::UnconstrainedBorder { tri, idx } => {
                write!(f, "edge {tri}.{idx} has no neighbour but is not constrained")
            }
            Violation::BorderNotBoundary { tri, idx, segment } => {
                write!(f, "border edge {tri}.{idx} lies on non-boundary segment {segment}")
            }
            Violation::ConstrainedOffSegment { tri, idx, segment } => {
                write!(f, "constrained edge {tri}.{idx} is off its segment {segment}")
            }
            Violation::VertexOffSegment {
                vertex,
                segment,
                distance,
            } => write!(f, "vertex {vertex} is {distance:e} away from host segment {segment}"),
            Violation::CoverageGap { segment, detail } => write!(f, "segment {segment} not covered: {detail}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopologyReport {
    pub violations: Vec<Violation>,
}

impl TopologyReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn symmetry_violations(&self) -> usize {
        self.violations
            .iter()
            .filter(|v| matches!(v, Violation::AsymmetricNeighbor { .. }))
            .count()
    }
}

impl fmt::Display for TopologyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

impl Triangulation {
    /// Checks orientation, neighbour symmetry, flag consistency, vertex
    /// placement and segment coverage. Lists every violation found.
    pub fn validate(&self) -> TopologyReport {
        let mut out = Vec::new();
        let scene = self.scene();
        for t in self.triangle_ids() {
            let tri = self.tri(t);
            if let Some(&v) = tri.v.iter().find(|&&v| !self.is_vertex_alive(v)) {
                out.push(Violation::DeadVertex { tri: t, vertex: v });
                continue;
            }
            let [a, b, c] = self.tri_points(t);
            let area2 = signed_area2(a, b, c);
            if !(area2 >= ORIENT_EPS) {
                out.push(Violation::NotPositive { tri: t, area2 });
            }
            for i in 0..3 {
                let idx = i as u8;
                let (ea, eb) = (tri.v[next(i)], tri.v[prev(i)]);
                match tri.nbr[i] {
                    Some(n) => {
                        let ok = self.is_triangle_alive(n)
                            && (0..3).any(|j| {
                                let nt = self.tri(n);
                                nt.nbr[j] == Some(t) && nt.v[next(j)] == eb && nt.v[prev(j)] == ea
                            });
                        if !ok {
                            out.push(Violation::AsymmetricNeighbor { tri: t, idx });
                        } else if n > t {
                            let j = self.nbr_index(n, t).unwrap();
                            if self.tri(n).flags[j] != tri.flags[i] {
                                out.push(Violation::FlagMismatch { tri: t, idx });
                            }
                        }
                    }
                    None => match tri.flags[i] {
                        EdgeFlag::Internal => out.push(Violation::UnconstrainedBorder { tri: t, idx }),
                        EdgeFlag::Constrained(s) => {
                            if scene.segments.get(s as usize).map(|g| g.kind) != Some(SegmentKind::Boundary) {
                                out.push(Violation::BorderNotBoundary { tri: t, idx, segment: s });
                            }
                        }
                    },
                }
                if let EdgeFlag::Constrained(s) = tri.flags[i] {
                    let ok = scene.segments.get(s as usize).is_some_and(|seg| {
                        seg.distance_to(self.pos(ea)) <= EDGE_ON_SEGMENT_TOL
                            && seg.distance_to(self.pos(eb)) <= EDGE_ON_SEGMENT_TOL
                    });
                    if !ok {
                        out.push(Violation::ConstrainedOffSegment { tri: t, idx, segment: s });
                    }
                }
            }
        }
        for v in self.vertex_ids() {
            if let Dof::OnSegment(s) = self.dof(v) {
                let distance = scene
                    .segments
                    .get(s as usize)
                    .map(|seg| seg.distance_to(self.pos(v)))
                    .unwrap_or(f64::INFINITY);
                if distance > ON_SEGMENT_TOL {
                    out.push(Violation::VertexOffSegment {
                        vertex: v,
                        segment: s,
                        distance,
                    });
                }
            }
        }
        out.extend(self.coverage_violations());
        TopologyReport { violations: out }
    }

    fn coverage_violations(&self) -> Vec<Violation> {
        let scene = self.scene();
        let mut chains: Vec<Vec<(f64, f64, VertId, VertId)>> = vec![Vec::new(); scene.segments.len()];
        let mut seen: HashSet<(VertId, VertId)> = HashSet::new();
        for e in self.edges() {
            if let EdgeFlag::Constrained(s) = self.edge_flag(e) {
                let Some(seg) = scene.segments.get(s as usize) else {
                    continue;
                };
                let (a, b) = self.edge_endpoints(e);
                if !seen.insert((a.min(b), a.max(b))) {
                    continue;
                }
                let (ua, ub) = (seg.project_param(self.pos(a)), seg.project_param(self.pos(b)));
                let item = if ua <= ub { (ua, ub, a, b) } else { (ub, ua, b, a) };
                chains[s as usize].push(item);
            }
        }
        let mut out = Vec::new();
        for (s, chain) in chains.iter_mut().enumerate() {
            let seg = &scene.segments[s];
            let segment = s as u32;
            if chain.is_empty() {
                out.push(Violation::CoverageGap {
                    segment,
                    detail: "no constrained edges".into(),
                });
                continue;
            }
            chain.sort_by(|x, y| x.0.total_cmp(&y.0));
            let tol = EDGE_ON_SEGMENT_TOL / seg.length();
            if chain[0].0.abs() > tol {
                out.push(Violation::CoverageGap {
                    segment,
                    detail: format!("chain starts at u = {}", chain[0].0),
                });
            }
            let last = chain.last().unwrap();
            if (last.1 - 1.0).abs() > tol {
                out.push(Violation::CoverageGap {
                    segment,
                    detail: format!("chain ends at u = {}", last.1),
                });
            }
            for w in chain.windows(2) {
                if w[0].3 != w[1].2 {
                    out.push(Violation::CoverageGap {
                        segment,
                        detail: format!("break between vertices {} and {}", w[0].3, w[1].2),
                    });
                }
            }
        }
        out
    }

    /// Edges with a given flag, for tests and diagnostics.
    pub fn constrained_edges(&self, segment: u32) -> Vec<EdgeRef> {
        self.edges()
            .filter(|&e| self.edge_flag(e) == EdgeFlag::Constrained(segment))
            .collect()
    }
}

/// Free-function form of [`Triangulation::validate`].
pub fn validate_topology(t: &Triangulation) -> TopologyReport {
    t.validate()
}

#[cfg(test)]
mod tests {
    use super::super::test_util::two_triangle_square;
    use super::*;

    #[test]
    fn broken_link_reports_one_asymmetry() {
        let mut t = two_triangle_square();
        let e = t.find_edge(0, 2).unwrap();
        t.tri_mut(e.tri).nbr[e.idx as usize] = None;
        let r = t.validate();
        assert_eq!(r.symmetry_violations(), 1, "{r}");
    }

    #[test]
    fn flipped_triangle_detected() {
        let mut t = two_triangle_square();
        t.set_pos(2, crate::geometry::Point::new(-1.0, -1.0));
        let r = t.validate();
        assert!(r.violations.iter().any(|v| matches!(v, Violation::NotPositive { .. })));
    }
}
