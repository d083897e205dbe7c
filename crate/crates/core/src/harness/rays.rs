//! Uniform, isotropic measurement rays.

use crate::accel::Locator;
use crate::geometry::{Aabb, Point, Ray};
use crate::scene::Scene;
use crate::trimesh::{TriId, Triangulation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::HashMap;
use std::f64::consts::TAU;

/// Ray origins closer than this to a segment are redrawn.
pub const ORIGIN_CLEARANCE: f64 = 1e-9;

/// Buckets of segment ids over a square grid, for nearby-segment queries.
struct SegmentBuckets {
    min: Point,
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl SegmentBuckets {
    fn new(scene: &Scene) -> Self {
        let b = scene.bounds();
        let res = (scene.segments.len() as f64).sqrt().ceil().max(1.0);
        let cell = (b.width().max(b.height()) / res).max(1e-12);
        let mut me = Self {
            min: b.min,
            cell,
            cells: HashMap::new(),
        };
        for (i, s) in scene.segments.iter().enumerate() {
            let bb = s.bbox();
            let (lo, hi) = (me.key(bb.min), me.key(bb.max));
            for x in lo.0..=hi.0 {
                for y in lo.1..=hi.1 {
                    me.cells.entry((x, y)).or_default().push(i);
                }
            }
        }
        me
    }

    fn key(&self, p: Point) -> (i64, i64) {
        (
            ((p.x - self.min.x) / self.cell).floor() as i64,
            ((p.y - self.min.y) / self.cell).floor() as i64,
        )
    }

    fn near(&self, scene: &Scene, p: Point, r: f64) -> bool {
        let (lo, hi) = (self.key(p - Point::new(r, r)), self.key(p + Point::new(r, r)));
        (lo.0..=hi.0).any(|x| {
            (lo.1..=hi.1).any(|y| {
                self.cells
                    .get(&(x, y))
                    .is_some_and(|ids| ids.iter().any(|&i| scene.segments[i].distance_to(p) <= r))
            })
        })
    }
}

/// `count` rays with origins uniform in the scene bounds and directions
/// uniform on the circle. Origins within [`ORIGIN_CLEARANCE`] of any segment
/// (boundary included) are redrawn.
pub fn sample_rays(scene: &Scene, count: usize, seed: u64) -> Vec<Ray> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b: Aabb = scene.bounds();
    let buckets = SegmentBuckets::new(scene);
    let mut rays = Vec::with_capacity(count);
    while rays.len() < count {
        let o = Point::new(rng.gen_range(b.min.x..b.max.x), rng.gen_range(b.min.y..b.max.y));
        let angle = rng.gen_range(0.0..TAU);
        if buckets.near(scene, o, ORIGIN_CLEARANCE) {
            continue;
        }
        rays.push(Ray::from_angle(o, angle));
    }
    rays
}

/// Triangle containing each ray origin.
pub fn start_triangles(t: &Triangulation, rays: &[Ray]) -> Vec<TriId> {
    let loc = Locator::for_triangulation(t);
    rays.par_iter().map(|r| loc.locate(t, r.origin)).collect()
}
