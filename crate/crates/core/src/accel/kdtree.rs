//! Kd-tree with ropes between neighboring cells, traversed leaf to leaf
//! without a stack.

use super::{hit_segment, keep_best, Hit, TraversalStats, TIE_REL_EPS};
use crate::geometry::{coord, Aabb, Point, Ray, Segment};
use crate::scene::Scene;
use std::collections::HashSet;
use std::fmt::Write;
use std::sync::Arc;

const MAX_DEPTH: usize = 64;

/// Face of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    fn index(self) -> usize {
        self as usize
    }

    fn axis(self) -> usize {
        match self {
            Side::Left | Side::Right => 0,
            Side::Bottom | Side::Top => 1,
        }
    }

    fn is_max(self) -> bool {
        matches!(self, Side::Right | Side::Top)
    }
}

/// Link from a leaf face to the neighboring leaf, or to the smallest subtree
/// covering the face when several leaves border it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rope {
    pub target: u32,
    /// Selection cost of following this rope.
    pub cost: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KdNode {
    Leaf {
        cell: Aabb,
        prims: Vec<u32>,
        ropes: [Option<Rope>; 4],
    },
    Inner {
        cell: Aabb,
        axis: usize,
        split: f64,
        children: [u32; 2],
    },
}

impl KdNode {
    pub fn cell(&self) -> &Aabb {
        match self {
            KdNode::Leaf { cell, .. } | KdNode::Inner { cell, .. } => cell,
        }
    }
}

/// Node 0 is the root; its cell is the scene bounds.
#[derive(Debug, Clone)]
pub struct RopedKdTree {
    pub nodes: Vec<KdNode>,
    pub c_t: f64,
    scene: Arc<Scene>,
}

/// Idealized cost of picking one of `n` ropes: `ceil(log2 n)`, at least 1.
pub fn rope_cost(n: usize) -> u32 {
    if n <= 2 {
        1
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Parameter interval of `s` inside `cell` (Liang-Barsky), with a little slack
/// so that segments touching the cell count as overlapping.
fn clip(s: &Segment, cell: &Aabb) -> Option<(f64, f64)> {
    let d = s.b - s.a;
    let slack = 1e-12 * (cell.width() + cell.height()).max(1.0);
    let (mut u0, mut u1) = (0.0f64, 1.0f64);
    for axis in 0..2 {
        let (o, dd) = (coord(s.a, axis), coord(d, axis));
        let (lo, hi) = (cell.axis_min(axis) - slack, cell.axis_max(axis) + slack);
        if dd == 0.0 {
            if o < lo || o > hi {
                return None;
            }
            continue;
        }
        let (mut a, mut b) = ((lo - o) / dd, (hi - o) / dd);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        u0 = u0.max(a);
        u1 = u1.min(b);
        if u0 > u1 {
            return None;
        }
    }
    Some((u0, u1))
}

/// Extent of `s` along `axis` within `cell`.
fn clipped_extent(s: &Segment, cell: &Aabb, axis: usize) -> (f64, f64) {
    let (u0, u1) = clip(s, cell).unwrap_or((0.0, 1.0));
    let (a, b) = (coord(s.at(u0), axis), coord(s.at(u1), axis));
    (a.min(b), a.max(b))
}

fn split_cell(cell: &Aabb, axis: usize, x: f64) -> (Aabb, Aabb) {
    let (mut l, mut r) = (*cell, *cell);
    if axis == 0 {
        l.max.x = x;
        r.min.x = x;
    } else {
        l.max.y = x;
        r.min.y = x;
    }
    (l, r)
}

/// Primitives of `cell` on either side of the plane `axis = x`. Segments in
/// the plane go to both sides.
pub(crate) fn split_prims(segs: &[Segment], cell: &Aabb, prims: &[u32], axis: usize, x: f64) -> (Vec<u32>, Vec<u32>) {
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for &i in prims {
        let (lo, hi) = clipped_extent(&segs[i as usize], cell, axis);
        let on_plane = lo == x && hi == x;
        if lo < x || on_plane {
            left.push(i);
        }
        if hi > x || on_plane {
            right.push(i);
        }
    }
    (left, right)
}

struct Builder<'a> {
    segs: &'a [Segment],
    /// Sorted, deduplicated vertex coordinates of the geometry per axis.
    cands: [Vec<f64>; 2],
    c_t: f64,
    nodes: Vec<KdNode>,
}

impl Builder<'_> {
    /// Cheapest split of `cell` as (cost, axis, position).
    fn best_split(&self, cell: &Aabb, prims: &[u32]) -> Option<(f64, usize, f64)> {
        let p = cell.perimeter();
        if p <= 0.0 {
            return None;
        }
        let mut best: Option<(f64, usize, f64)> = None;
        for axis in 0..2 {
            let (lo_c, hi_c) = (cell.axis_min(axis), cell.axis_max(axis));
            let c = &self.cands[axis];
            let start = c.partition_point(|&x| x <= lo_c);
            let end = c.partition_point(|&x| x < hi_c);
            if start >= end {
                continue;
            }
            let (mut los, mut his): (Vec<f64>, Vec<f64>) =
                prims.iter().map(|&i| clipped_extent(&self.segs[i as usize], cell, axis)).unzip();
            let mut flat: Vec<f64> = los.iter().zip(&his).filter(|(lo, hi)| lo == hi).map(|(lo, _)| *lo).collect();
            los.sort_by(f64::total_cmp);
            his.sort_by(f64::total_cmp);
            flat.sort_by(f64::total_cmp);
            for &x in &c[start..end] {
                let on_plane = flat.partition_point(|&f| f <= x) - flat.partition_point(|&f| f < x);
                let n_l = los.partition_point(|&lo| lo < x) + on_plane;
                let n_r = his.len() - his.partition_point(|&hi| hi <= x) + on_plane;
                let (l, r) = split_cell(cell, axis, x);
                let cost = self.c_t + (l.perimeter() * n_l as f64 + r.perimeter() * n_r as f64) / p;
                if best.is_none_or(|b| cost < b.0) {
                    best = Some((cost, axis, x));
                }
            }
        }
        best
    }

    fn build(&mut self, cell: Aabb, prims: Vec<u32>, depth: usize) -> u32 {
        let me = self.nodes.len() as u32;
        let split = if depth < MAX_DEPTH { self.best_split(&cell, &prims) } else { None };
        match split {
            Some((cost, axis, x)) if cost < prims.len() as f64 => {
                self.nodes.push(KdNode::Inner {
                    cell,
                    axis,
                    split: x,
                    children: [0, 0],
                });
                let (left, right) = split_prims(self.segs, &cell, &prims, axis, x);
                let (lc, rc) = split_cell(&cell, axis, x);
                let a = self.build(lc, left, depth + 1);
                let b = self.build(rc, right, depth + 1);
                if let KdNode::Inner { children, .. } = &mut self.nodes[me as usize] {
                    *children = [a, b];
                }
            }
            _ => self.nodes.push(KdNode::Leaf {
                cell,
                prims,
                ropes: [None; 4],
            }),
        }
        me
    }
}

/// Builds the tree over the geometry segments of `scene` inside its bounds.
/// Split positions are vertex coordinates of the geometry. Segments lying in
/// a split plane go to both children; a segment that only ends on the plane
/// stays on its own side.
pub fn build_kdtree(scene: Arc<Scene>, c_t: f64) -> RopedKdTree {
    let prims: Vec<u32> = scene.geometry().map(|(i, _)| i as u32).collect();
    let mut cands = [Vec::new(), Vec::new()];
    for (axis, c) in cands.iter_mut().enumerate() {
        for &i in &prims {
            let s = &scene.segments[i as usize];
            c.push(coord(s.a, axis));
            c.push(coord(s.b, axis));
        }
        c.sort_by(f64::total_cmp);
        c.dedup();
    }
    let mut b = Builder {
        segs: &scene.segments,
        cands,
        c_t,
        nodes: Vec::new(),
    };
    b.build(scene.bounds(), prims, 0);
    let nodes = b.nodes;
    let mut tree = RopedKdTree { nodes, c_t, scene };
    tree.attach_ropes(0, [None; 4]);
    tree
}

impl RopedKdTree {
    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, KdNode::Leaf { .. })).count()
    }

    /// Passes the neighbor subtrees of every face down to the leaves.
    fn attach_ropes(&mut self, n: u32, ropes: [Option<u32>; 4]) {
        match self.nodes[n as usize].clone() {
            KdNode::Inner { axis, children, .. } => {
                let (lo_side, hi_side) = if axis == 0 {
                    (Side::Left, Side::Right)
                } else {
                    (Side::Bottom, Side::Top)
                };
                let mut l = ropes;
                l[hi_side.index()] = Some(children[1]);
                let mut r = ropes;
                r[lo_side.index()] = Some(children[0]);
                self.attach_ropes(children[0], l);
                self.attach_ropes(children[1], r);
            }
            KdNode::Leaf { cell, .. } => {
                let mut out = [None; 4];
                for side in Side::ALL {
                    out[side.index()] = ropes[side.index()].map(|t| {
                        let target = self.push_down(t, &cell, side);
                        Rope {
                            target,
                            cost: rope_cost(self.leaves_on_face(target, &cell, side)),
                        }
                    });
                }
                if let KdNode::Leaf { ropes, .. } = &mut self.nodes[n as usize] {
                    *ropes = out;
                }
            }
        }
    }

    /// Smallest subtree of `t` that still covers the `side` face of `cell`.
    fn push_down(&self, mut t: u32, cell: &Aabb, side: Side) -> u32 {
        let face_axis = side.axis();
        let other = 1 - face_axis;
        while let KdNode::Inner {
            axis, split, children, ..
        } = &self.nodes[t as usize]
        {
            if *axis == face_axis {
                // the child adjacent to the face
                t = if side.is_max() { children[0] } else { children[1] };
            } else if cell.axis_max(other) <= *split {
                t = children[0];
            } else if cell.axis_min(other) >= *split {
                t = children[1];
            } else {
                break;
            }
        }
        t
    }

    /// Leaves of subtree `t` bordering the `side` face of `cell` along a
    /// stretch of positive length.
    fn leaves_on_face(&self, t: u32, cell: &Aabb, side: Side) -> usize {
        let other = 1 - side.axis();
        let face = if side.is_max() {
            cell.axis_max(side.axis())
        } else {
            cell.axis_min(side.axis())
        };
        let node = &self.nodes[t as usize];
        let c = node.cell();
        let touches_face = if side.is_max() {
            c.axis_min(side.axis()) <= face
        } else {
            c.axis_max(side.axis()) >= face
        };
        let overlap = c.axis_max(other).min(cell.axis_max(other)) - c.axis_min(other).max(cell.axis_min(other));
        if !touches_face || overlap <= 0.0 {
            return 0;
        }
        match node {
            KdNode::Leaf { .. } => 1,
            KdNode::Inner { children, .. } => {
                self.leaves_on_face(children[0], cell, side) + self.leaves_on_face(children[1], cell, side)
            }
        }
    }

    /// Descends from `n` to the leaf containing `p`; points on a split plane
    /// go to the side the ray is heading to. Returns the leaf and the number
    /// of internal nodes passed.
    fn descend(&self, mut n: u32, p: Point, dir: Point) -> (u32, u64) {
        let mut steps = 0;
        while let KdNode::Inner {
            axis, split, children, ..
        } = &self.nodes[n as usize]
        {
            let (x, d) = (coord(p, *axis), coord(dir, *axis));
            let right = x > *split || (x == *split && d >= 0.0);
            n = children[right as usize];
            steps += 1;
        }
        (n, steps)
    }

    /// One line per node: id, cell, then split or primitives and ropes.
    pub fn dump(&self) -> String {
        let mut s = format!("kdtree c_t={} nodes={}\n", self.c_t, self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            let c = n.cell();
            let _ = write!(s, "{i} cell {} {} {} {}", c.min.x, c.min.y, c.max.x, c.max.y);
            match n {
                KdNode::Inner {
                    axis, split, children, ..
                } => {
                    let _ = write!(s, " split {} {split} {} {}", ["x", "y"][*axis], children[0], children[1]);
                }
                KdNode::Leaf { prims, ropes, .. } => {
                    let _ = write!(s, " leaf [");
                    for (k, p) in prims.iter().enumerate() {
                        let _ = write!(s, "{}{p}", if k > 0 { " " } else { "" });
                    }
                    let _ = write!(s, "] ropes");
                    for r in ropes {
                        match r {
                            Some(r) => {
                                let _ = write!(s, " {}:{}", r.target, r.cost);
                            }
                            None => s.push_str(" -"),
                        }
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Exit parameter of the ray from `cell` and the face it leaves through.
fn exit(cell: &Aabb, ray: &Ray) -> Option<(f64, Side)> {
    let mut best: Option<(f64, Side)> = None;
    for axis in 0..2 {
        let d = coord(ray.dir, axis);
        if d == 0.0 {
            continue;
        }
        let (bound, side) = match (axis, d > 0.0) {
            (0, true) => (cell.max.x, Side::Right),
            (0, false) => (cell.min.x, Side::Left),
            (_, true) => (cell.max.y, Side::Top),
            (_, false) => (cell.min.y, Side::Bottom),
        };
        let t = (bound - coord(ray.origin, axis)) / d;
        if best.is_none_or(|b| t < b.0) {
            best = Some((t, side));
        }
    }
    best
}

fn cell_contains(c: &Aabb, p: Point) -> bool {
    let tol = 1e-9 * (c.width() + c.height()).max(1.0);
    p.x >= c.min.x - tol && p.x <= c.max.x + tol && p.y >= c.min.y - tol && p.y <= c.max.y + tol
}

/// Closest hit by walking leaf to leaf along ropes. The start leaf is found by
/// an uncounted descent from the root. Each primitive is tested at most once
/// per ray, and a hit is reported once it lies within the current cell.
pub fn kd_intersect(kd: &RopedKdTree, ray: &Ray) -> (Option<Hit>, TraversalStats) {
    let mut stats = TraversalStats::default();
    let root = kd.nodes[0].cell();
    let Some((t_in, _)) = root.ray_interval(ray, f64::INFINITY) else {
        return (None, stats);
    };
    let (mut leaf, _) = kd.descend(0, ray.at(t_in), ray.dir);
    let mut best: Option<Hit> = None;
    let mut tested: HashSet<u32> = HashSet::new();
    let cap = 4 * kd.nodes.len() + 16;
    for _ in 0..cap {
        stats.kd_nodes_visited += 1;
        let KdNode::Leaf { cell, prims, ropes } = &kd.nodes[leaf as usize] else {
            unreachable!("descent ends at a leaf");
        };
        for &p in prims {
            if tested.insert(p) {
                stats.kd_prim_tests += 1;
                if let Some(h) = hit_segment(&kd.scene, ray, p) {
                    keep_best(&mut best, h);
                }
            }
        }
        let Some((t_out, side)) = exit(cell, ray) else {
            return (best, stats);
        };
        if let Some(b) = &best {
            if b.t <= t_out + TIE_REL_EPS * t_out.abs().max(1.0) {
                return (best, stats);
            }
        }
        let Some(rope) = ropes[side.index()] else {
            return (best, stats);
        };
        stats.kd_rope_steps += rope.cost as u64;
        let p = ray.at(t_out);
        let (next, steps) = kd.descend(rope.target, p, ray.dir);
        stats.kd_nodes_visited += steps;
        leaf = if cell_contains(kd.nodes[next as usize].cell(), p) {
            next
        } else {
            log::debug!("rope descent missed {p:?}; relocating from the root");
            kd.descend(0, p, ray.dir).0
        };
    }
    log::warn!("kd walk for {ray:?} exceeded {cap} steps");
    (best, stats)
}
