//! Bounding volume hierarchy over the scene geometry, built greedily with the
//! surface area heuristic (perimeter in 2D).

use super::{hit_segment, keep_best, Hit, TraversalStats, TIE_REL_EPS};
use crate::geometry::{coord, Aabb, Point, Ray};
use crate::scene::Scene;
use std::fmt::Write;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub enum BvhNode {
    Leaf { bbox: Aabb, prims: Vec<u32> },
    Inner { bbox: Aabb, children: [u32; 2] },
}

impl BvhNode {
    pub fn bbox(&self) -> &Aabb {
        match self {
            BvhNode::Leaf { bbox, .. } | BvhNode::Inner { bbox, .. } => bbox,
        }
    }
}

/// Node 0 is the root.
#[derive(Debug, Clone)]
pub struct Bvh {
    pub nodes: Vec<BvhNode>,
    /// Cost of a node test relative to a primitive test.
    pub c_t: f64,
    scene: Arc<Scene>,
}

/// Best split of a primitive list: (cost, axis, number of primitives on the left).
pub(crate) fn best_sah_split(ids: &mut [u32], boxes: &[Aabb], c_t: f64) -> Option<(f64, usize, usize)> {
    let n = ids.len();
    if n < 2 {
        return None;
    }
    let parent = ids.iter().fold(Aabb::EMPTY, |b, &i| b.union(&boxes[i as usize]));
    let p = parent.perimeter();
    if p <= 0.0 {
        return None;
    }
    let mut best: Option<(f64, usize, usize)> = None;
    let mut suffix = vec![Aabb::EMPTY; n + 1];
    for axis in 0..2 {
        sort_by_centroid(ids, boxes, axis);
        for k in (0..n).rev() {
            suffix[k] = suffix[k + 1].union(&boxes[ids[k] as usize]);
        }
        let mut prefix = Aabb::EMPTY;
        for k in 1..n {
            prefix = prefix.union(&boxes[ids[k - 1] as usize]);
            let cost = c_t + (prefix.perimeter() * k as f64 + suffix[k].perimeter() * (n - k) as f64) / p;
            if best.is_none_or(|b| cost < b.0) {
                best = Some((cost, axis, k));
            }
        }
    }
    best
}

pub(crate) fn sort_by_centroid(ids: &mut [u32], boxes: &[Aabb], axis: usize) {
    ids.sort_by(|&a, &b| {
        let ca = coord(boxes[a as usize].center(), axis);
        let cb = coord(boxes[b as usize].center(), axis);
        ca.total_cmp(&cb).then(a.cmp(&b))
    });
}

/// Builds the hierarchy over the geometry segments of `scene`. A node becomes
/// a leaf when no split is predicted to be cheaper than testing all of its
/// primitives.
pub fn build_bvh(scene: Arc<Scene>, c_t: f64) -> Bvh {
    let boxes: Vec<Aabb> = scene.segments.iter().map(|s| s.bbox()).collect();
    let mut ids: Vec<u32> = scene.geometry().map(|(i, _)| i as u32).collect();
    let mut nodes = Vec::new();
    build_node(&mut nodes, &mut ids, &boxes, c_t);
    Bvh { nodes, c_t, scene }
}

fn build_node(nodes: &mut Vec<BvhNode>, ids: &mut [u32], boxes: &[Aabb], c_t: f64) -> u32 {
    let bbox = ids.iter().fold(Aabb::EMPTY, |b, &i| b.union(&boxes[i as usize]));
    let me = nodes.len() as u32;
    match best_sah_split(ids, boxes, c_t) {
        Some((cost, axis, k)) if cost < ids.len() as f64 => {
            nodes.push(BvhNode::Inner { bbox, children: [0, 0] });
            sort_by_centroid(ids, boxes, axis);
            let (l, r) = ids.split_at_mut(k);
            let a = build_node(nodes, l, boxes, c_t);
            let b = build_node(nodes, r, boxes, c_t);
            nodes[me as usize] = BvhNode::Inner { bbox, children: [a, b] };
        }
        _ => {
            let mut prims = ids.to_vec();
            prims.sort_unstable();
            nodes.push(BvhNode::Leaf { bbox, prims });
        }
    }
    me
}

fn enter(bbox: &Aabb, ray: &Ray) -> Option<f64> {
    if bbox.is_empty() {
        return None;
    }
    // padding keeps zero-width boxes of axis-parallel segments hittable
    let pad = 1e-12 * (bbox.width() + bbox.height()).max(1.0);
    let grown = Aabb::new(bbox.min - Point::new(pad, pad), bbox.max + Point::new(pad, pad));
    grown.ray_interval(ray, f64::INFINITY).map(|(t0, _)| t0)
}

/// Closest hit by ordered stack traversal. The nearer child is visited first
/// and nodes entered beyond the current best hit are skipped.
pub fn bvh_intersect(bvh: &Bvh, ray: &Ray) -> (Option<Hit>, TraversalStats) {
    let mut stats = TraversalStats::default();
    let mut best: Option<Hit> = None;
    stats.bvh_node_tests += 1;
    let Some(t_root) = enter(bvh.nodes[0].bbox(), ray) else {
        return (None, stats);
    };
    let mut stack = vec![(0u32, t_root)];
    while let Some((n, t0)) = stack.pop() {
        if let Some(b) = &best {
            if t0 > b.t + TIE_REL_EPS * b.t.max(1.0) {
                continue;
            }
        }
        match &bvh.nodes[n as usize] {
            BvhNode::Leaf { prims, .. } => {
                for &p in prims {
                    stats.bvh_prim_tests += 1;
                    if let Some(h) = hit_segment(&bvh.scene, ray, p) {
                        keep_best(&mut best, h);
                    }
                }
            }
            BvhNode::Inner { children, .. } => {
                stats.bvh_node_tests += 2;
                let mut hits: Vec<(u32, f64)> = children
                    .iter()
                    .filter_map(|&c| enter(bvh.nodes[c as usize].bbox(), ray).map(|t| (c, t)))
                    .collect();
                hits.sort_by(|a, b| b.1.total_cmp(&a.1));
                stack.extend(hits);
            }
        }
    }
    (best, stats)
}

impl Bvh {
    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, BvhNode::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(b: &Bvh, n: u32) -> usize {
            match &b.nodes[n as usize] {
                BvhNode::Leaf { .. } => 1,
                BvhNode::Inner { children, .. } => 1 + go(b, children[0]).max(go(b, children[1])),
            }
        }
        go(self, 0)
    }

    /// One line per node: id, box and either children or primitives.
    pub fn dump(&self) -> String {
        let mut s = format!("bvh c_t={} nodes={}\n", self.c_t, self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            let b = n.bbox();
            let _ = write!(s, "{i} box {} {} {} {}", b.min.x, b.min.y, b.max.x, b.max.y);
            match n {
                BvhNode::Leaf { prims, .. } => {
                    let _ = write!(s, " leaf");
                    for p in prims {
                        let _ = write!(s, " {p}");
                    }
                }
                BvhNode::Inner { children, .. } => {
                    let _ = write!(s, " inner {} {}", children[0], children[1]);
                }
            }
            s.push('\n');
        }
        s
    }
}
