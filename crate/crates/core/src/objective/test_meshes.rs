//! Small hand-built triangulations for the objective tests.

use crate::geometry::{segments_cross, Point, Segment};
use crate::scene::Scene;
use crate::trimesh::{Dof, Triangulation, VertId, Vertex};
use std::sync::Arc;

fn mesh(scene: Scene, pts: &[(f64, f64, Dof)], tris: &[[VertId; 3]]) -> Triangulation {
    let verts = pts
        .iter()
        .map(|&(x, y, dof)| Vertex {
            pos: Point::new(x, y),
            dof,
        })
        .collect();
    Triangulation::from_parts(Arc::new(scene), verts, tris).unwrap()
}

fn square() -> Scene {
    Scene::in_unit_square("test", "test", vec![])
}

const CORNERS: [(f64, f64, Dof); 4] = [
    (0.0, 0.0, Dof::Fixed),
    (1.0, 0.0, Dof::Fixed),
    (1.0, 1.0, Dof::Fixed),
    (0.0, 1.0, Dof::Fixed),
];

pub struct ClusterIds {
    pub a: VertId,
    pub b: VertId,
    pub c: VertId,
    pub d: VertId,
    pub x: VertId,
    pub y: VertId,
    pub z: VertId,
}

/// Three free vertices at the same point joined by two zero-length edges
/// `x-y` and `y-z`; `y` is joined to corners `d` and `a` only.
pub fn cluster_mesh() -> (Triangulation, ClusterIds) {
    let mut pts = CORNERS.to_vec();
    pts.extend([(0.5, 0.5, Dof::Free); 3]);
    let (a, b, c, d, x, y, z) = (0, 1, 2, 3, 4, 5, 6);
    let tris = [
        [x, y, d],
        [y, z, d],
        [z, c, d],
        [b, c, z],
        [a, b, z],
        [y, a, z],
        [x, a, y],
        [d, a, x],
    ];
    (mesh(square(), &pts, &tris), ClusterIds { a, b, c, d, x, y, z })
}

pub struct ChainIds {
    pub f: VertId,
    pub c2: VertId,
}

/// Free vertex `f` just above the bottom side, fanned to the constrained
/// vertices `c1 c2 c3`; with `to_corner` it also reaches the corner (1,0).
pub fn chain_mesh(to_corner: bool) -> (Triangulation, ChainIds) {
    let mut pts = CORNERS.to_vec();
    pts.extend([
        (0.2, 0.0, Dof::OnSegment(0)),
        (0.22, 0.0, Dof::OnSegment(0)),
        (0.6, 0.0, Dof::OnSegment(0)),
        (0.21, 0.01, Dof::Free),
    ]);
    let (a, b, c, d, c1, c2, c3, f) = (0, 1, 2, 3, 4, 5, 6, 7);
    let mut tris = vec![[a, c1, f], [c1, c2, f], [c2, c3, f], [c, d, f], [d, a, f]];
    if to_corner {
        tris.extend([[c3, b, f], [b, c, f]]);
    } else {
        tris.extend([[c3, b, c], [c3, c, f]]);
    }
    (mesh(square(), &pts, &tris), ChainIds { f, c2 })
}

/// Two collinear scene segments with a gap and a free vertex above the gap.
/// Returns the mesh, the free vertex and the inner endpoint of the left
/// segment.
pub fn gap_mesh() -> (Triangulation, VertId, VertId) {
    let scene = Scene::in_unit_square(
        "gap",
        "test",
        vec![
            (Point::new(0.2, 0.5), Point::new(0.4, 0.5)),
            (Point::new(0.6, 0.5), Point::new(0.8, 0.5)),
        ],
    );
    let mut pts = CORNERS.to_vec();
    pts.extend([
        (0.2, 0.5, Dof::Fixed),
        (0.4, 0.5, Dof::Fixed),
        (0.6, 0.5, Dof::Fixed),
        (0.8, 0.5, Dof::Fixed),
        (0.5, 0.52, Dof::Free),
    ]);
    let (a, b, c, d, r, p, q, s, f) = (0, 1, 2, 3, 4, 5, 6, 7, 8);
    let tris = [
        [r, p, f],
        [p, q, f],
        [q, s, f],
        [s, c, f],
        [c, d, f],
        [d, r, f],
        [d, a, r],
        [a, p, r],
        [a, b, p],
        [b, q, p],
        [b, s, q],
        [b, c, s],
    ];
    (mesh(scene, &pts, &tris), f, p)
}

pub struct OneHopIds {
    pub v1: VertId,
    pub v2: VertId,
    pub v3: VertId,
    pub h: VertId,
}

/// Edge `v1-v2` whose endpoints share the neighbour `h`, which is not an
/// apex of the edge; `v3` sits inside triangle `v1 v2 h`.
pub fn one_hop_mesh() -> (Triangulation, OneHopIds) {
    let mut pts = CORNERS.to_vec();
    pts.extend([
        (0.3, 0.5, Dof::Free),
        (0.7, 0.5, Dof::Free),
        (0.5, 0.6, Dof::Free),
        (0.5, 0.9, Dof::Free),
    ]);
    let (a, b, c, d, v1, v2, v3, h) = (0, 1, 2, 3, 4, 5, 6, 7);
    let tris = [
        [v1, v2, v3],
        [v2, h, v3],
        [h, v1, v3],
        [a, b, v2],
        [a, v2, v1],
        [b, c, v2],
        [v2, c, h],
        [c, d, h],
        [d, v1, h],
        [d, a, v1],
    ];
    (mesh(square(), &pts, &tris), OneHopIds { v1, v2, v3, h })
}

/// Inserts a point with Delaunay legalization.
pub fn insert(t: &mut Triangulation, p: Point, dof: Dof) -> VertId {
    let start = t.triangle_ids().next().unwrap();
    t.insert_point(start, p, dof).unwrap()
}

/// Flips edges crossing `a-b` until that edge exists.
pub fn force_edge(t: &mut Triangulation, a: VertId, b: VertId) {
    for _ in 0..1000 {
        if t.find_edge(a, b).is_some() {
            return;
        }
        let (pa, pb) = (t.pos(a), t.pos(b));
        let e = t
            .edges()
            .find(|&e| {
                let (x, y) = t.edge_endpoints(e);
                ![a, b].contains(&x)
                    && ![a, b].contains(&y)
                    && !t.edge_flag(e).is_constrained()
                    && t.flip_is_convex(e)
                    && segments_cross(pa, pb, t.pos(x), t.pos(y), 1e-12)
            })
            .expect("no flippable crossing edge");
        t.flip_unchecked(e);
    }
    panic!("could not force edge {a}-{b}");
}

/// Copy of `t` (and its scene) rotated by `angle` and shifted.
pub fn transformed(t: &Triangulation, angle: f64, shift: Point) -> Triangulation {
    let (s, c) = angle.sin_cos();
    let map = |p: Point| Point::new(c * p.x - s * p.y + shift.x, s * p.x + c * p.y + shift.y);
    let segs = t
        .scene()
        .segments
        .iter()
        .map(|g| Segment::new(map(g.a), map(g.b), g.kind))
        .collect();
    let scene = Scene::new("moved", "test", segs);
    let verts = (0..t.vertex_capacity() as VertId)
        .map(|v| Vertex {
            pos: map(t.pos(v)),
            dof: t.dof(v),
        })
        .collect();
    let tris: Vec<[VertId; 3]> = t.triangle_ids().map(|x| t.tri(x).v).collect();
    Triangulation::from_parts(Arc::new(scene), verts, &tris).unwrap()
}
