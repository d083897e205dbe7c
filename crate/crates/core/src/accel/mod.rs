//! Closest-hit ray queries with operation counting: stackless walks through
//! a triangulation, a SAH BVH and a roped kd-tree, plus a brute-force oracle.

mod bvh;
pub(crate) mod kdtree;
mod sweep;
mod traverse;

pub use bvh::{build_bvh, bvh_intersect, Bvh, BvhNode};
pub use kdtree::{build_kdtree, kd_intersect, rope_cost, KdNode, Rope, RopedKdTree, Side};
pub use sweep::{sweep_structure_params, ParamSweep, DEFAULT_CT_GRID};
pub use traverse::{locate_triangle, traverse_triangulation, LocateMethod, Locator};

use crate::geometry::{ray_segment_intersect, Point, Ray, SegmentKind};
use crate::scene::Scene;
use serde::{Deserialize, Serialize};
use std::ops::AddAssign;

/// Relative tolerance under which two hit distances count as equal; equal
/// hits resolve to the lower segment id.
pub const TIE_REL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub segment: u32,
    pub t: f64,
    pub point: Point,
}

impl Hit {
    fn new(ray: &Ray, segment: u32, t: f64) -> Self {
        let t = t.max(0.0);
        Self {
            segment,
            t,
            point: ray.at(t),
        }
    }

    /// Whether `self` is strictly preferable to `other` under the closest-hit
    /// order with lowest-id ties.
    pub fn beats(&self, other: &Hit) -> bool {
        let tol = TIE_REL_EPS * self.t.abs().max(other.t.abs()).max(1.0);
        if (self.t - other.t).abs() <= tol {
            self.segment < other.segment
        } else {
            self.t < other.t
        }
    }
}

/// Keeps the better of the current and a new candidate hit.
pub(crate) fn keep_best(best: &mut Option<Hit>, cand: Hit) {
    if best.as_ref().is_none_or(|b| cand.beats(b)) {
        *best = Some(cand);
    }
}

/// Hit of `ray` on scene segment `id`, if any.
pub(crate) fn hit_segment(scene: &Scene, ray: &Ray, id: u32) -> Option<Hit> {
    let seg = &scene.segments[id as usize];
    ray_segment_intersect(ray, seg).map(|(t, _)| Hit::new(ray, id, t))
}

/// Operation counters of the three query engines.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraversalStats {
    pub tri_steps: u64,
    pub bvh_node_tests: u64,
    pub bvh_prim_tests: u64,
    pub kd_nodes_visited: u64,
    pub kd_rope_steps: u64,
    pub kd_prim_tests: u64,
}

impl TraversalStats {
    pub fn tri_total(&self) -> u64 {
        self.tri_steps
    }

    pub fn bvh_total(&self) -> u64 {
        self.bvh_node_tests + self.bvh_prim_tests
    }

    pub fn kd_total(&self) -> u64 {
        self.kd_nodes_visited + self.kd_rope_steps + self.kd_prim_tests
    }
}

impl AddAssign for TraversalStats {
    fn add_assign(&mut self, o: Self) {
        self.tri_steps += o.tri_steps;
        self.bvh_node_tests += o.bvh_node_tests;
        self.bvh_prim_tests += o.bvh_prim_tests;
        self.kd_nodes_visited += o.kd_nodes_visited;
        self.kd_rope_steps += o.kd_rope_steps;
        self.kd_prim_tests += o.kd_prim_tests;
    }
}

/// Closest hit over all geometry segments by linear scan.
pub fn brute_force_closest(scene: &Scene, ray: &Ray) -> Option<Hit> {
    let mut best = None;
    for (i, s) in scene.segments.iter().enumerate() {
        if s.kind != SegmentKind::SceneGeometry {
            continue;
        }
        if let Some(h) = hit_segment(scene, ray, i as u32) {
            keep_best(&mut best, h);
        }
    }
    best
}

/// Whether two engines agree on a query: same segment and hit distance within
/// `rel` relative error.
pub fn hits_agree(a: Option<&Hit>, b: Option<&Hit>, rel: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => x.segment == y.segment && (x.t - y.t).abs() <= rel * x.t.abs().max(y.t.abs()).max(1e-300),
        _ => false,
    }
}

#[cfg(test)]
mod tests;
