use super::*;
use crate::geometry::{Aabb, Segment};
use crate::trimesh::{build_cdt, cdt_test_scene, Triangulation};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::sync::Arc;

fn random_ray(rng: &mut ChaCha8Rng) -> Ray {
    let o = Point::new(rng.gen_range(0.001..0.999), rng.gen_range(0.001..0.999));
    Ray::from_angle(o, rng.gen_range(0.0..std::f64::consts::TAU))
}

/// Closest hit computed by solving each ray/segment system directly.
fn scan_oracle(scene: &Scene, ray: &Ray) -> Option<(u32, f64)> {
    let mut best: Option<(u32, f64)> = None;
    for (i, s) in scene.segments.iter().enumerate() {
        if s.kind != SegmentKind::SceneGeometry {
            continue;
        }
        let e = s.b - s.a;
        let den = ray.dir.cross(e);
        if den == 0.0 {
            continue;
        }
        let w = s.a - ray.origin;
        let t = w.cross(e) / den;
        let u = w.cross(ray.dir) / den;
        if t >= 0.0 && (0.0..=1.0).contains(&u) && best.is_none_or(|(_, bt)| t < bt) {
            best = Some((i as u32, t));
        }
    }
    best
}

#[test]
fn brute_force_matches_direct_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..5 {
        let scene = cdt_test_scene(40, seed);
        for _ in 0..500 {
            let ray = random_ray(&mut rng);
            let a = brute_force_closest(&scene, &ray).map(|h| (h.segment, h.t));
            let b = scan_oracle(&scene, &ray);
            match (a, b) {
                (None, None) => {}
                (Some(x), Some(y)) => {
                    assert_eq!(x.0, y.0);
                    assert!((x.1 - y.1).abs() <= 1e-9 * y.1.max(1e-12));
                }
                _ => panic!("{a:?} vs {b:?}"),
            }
        }
    }
    let empty = Scene::in_unit_square("e", "t", vec![]);
    assert!(brute_force_closest(&empty, &Ray::new(Point::new(0.5, 0.5), Point::new(1.0, 0.0))).is_none());
}

#[test]
fn one_segment_dead_ahead() {
    let scene = Scene::in_unit_square("s", "t", vec![(Point::new(0.8, 0.2), Point::new(0.8, 0.9))]);
    let h = brute_force_closest(&scene, &Ray::new(Point::new(0.1, 0.5), Point::new(1.0, 0.0))).unwrap();
    assert_eq!(h.segment, 0);
    assert!((h.t - 0.7).abs() < 1e-15);
    assert!(h.point.dist(Point::new(0.8, 0.5)) < 1e-15);
}

fn check_engines(t: &Triangulation, rays: &[Ray]) {
    let scene = t.scene_arc();
    let loc = Locator::for_triangulation(t);
    let bvh = build_bvh(scene.clone(), 1.0);
    let kd = build_kdtree(scene.clone(), 1.0);
    for ray in rays {
        let want = brute_force_closest(&scene, ray);
        let start = loc.locate(t, ray.origin);
        let (tri, st) = traverse_triangulation(t, ray, start).unwrap();
        assert!(st.tri_steps >= 1);
        assert!(hits_agree(tri.as_ref(), want.as_ref(), 1e-9), "tri {tri:?} vs {want:?} for {ray:?}");
        let (b, _) = bvh_intersect(&bvh, ray);
        assert!(hits_agree(b.as_ref(), want.as_ref(), 1e-9), "bvh {b:?} vs {want:?} for {ray:?}");
        let (k, _) = kd_intersect(&kd, ray);
        assert!(hits_agree(k.as_ref(), want.as_ref(), 1e-9), "kd {k:?} vs {want:?} for {ray:?}");
    }
}

#[test]
fn engines_agree_with_oracle_on_random_scenes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (n, seed) in [(5, 1), (20, 2), (60, 3)] {
        let t = build_cdt(&cdt_test_scene(n, seed)).unwrap();
        let rays: Vec<Ray> = (0..2000).map(|_| random_ray(&mut rng)).collect();
        check_engines(&t, &rays);
        check_engines(&t.subdivide(), &rays[..300]);
    }
}

#[test]
fn empty_square_takes_at_most_two_steps() {
    let t = build_cdt(&Scene::in_unit_square("sq", "t", vec![])).unwrap();
    let ray = Ray::new(Point::new(0.5, 0.5), Point::new(1.0, 0.0));
    let start = locate_triangle(&t, ray.origin, LocateMethod::BruteForce);
    let (hit, st) = traverse_triangulation(&t, &ray, start).unwrap();
    assert!(hit.is_none());
    assert!(st.tri_steps <= 2);
}

#[test]
fn rays_through_vertices_match_oracle() {
    // two segments meeting at (0.6, 0.5), plus one further away sharing nothing
    let v = Point::new(0.6, 0.5);
    let scene = Scene::in_unit_square(
        "v",
        "t",
        vec![
            (Point::new(0.8, 0.3), v),
            (v, Point::new(0.8, 0.7)),
            (Point::new(0.3, 0.8), Point::new(0.5, 0.8)),
        ],
    );
    let t = build_cdt(&scene).unwrap();
    let mut rays = vec![
        Ray::new(Point::new(0.2, 0.5), v - Point::new(0.2, 0.5)),
        Ray::new(Point::new(0.2, 0.2), v - Point::new(0.2, 0.2)),
        Ray::new(Point::new(0.6, 0.1), Point::new(0.0, 1.0)),
        // along the supporting line of the third segment
        Ray::new(Point::new(0.1, 0.8), Point::new(1.0, 0.0)),
        // through the corner of the square
        Ray::new(Point::new(0.5, 0.5), Point::new(-1.0, -1.0)),
    ];
    for p in scene.vertices() {
        for o in [Point::new(0.05, 0.05), Point::new(0.95, 0.5), Point::new(0.4, 0.95)] {
            if o != p {
                rays.push(Ray::new(o, p - o));
            }
        }
    }
    check_engines(&t, &rays);
    let h = brute_force_closest(&scene, &rays[0]).unwrap();
    assert_eq!(h.segment, 0, "lowest id wins the tie at the shared vertex");
}

#[test]
fn locate_methods_agree() {
    let t = build_cdt(&cdt_test_scene(40, 5)).unwrap().subdivide();
    let loc = Locator::for_triangulation(&t);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let p = Point::new(rng.gen(), rng.gen());
        assert_eq!(loc.locate(&t, p), locate_triangle(&t, p, LocateMethod::BruteForce), "{p:?}");
    }
    for tri in t.triangle_ids() {
        let [a, b, c] = t.tri_points(tri);
        let g = (a + b + c) * (1.0 / 3.0);
        assert_eq!(locate_triangle(&t, g, LocateMethod::BruteForce), tri);
        assert_eq!(loc.locate(&t, g), tri);
    }
    // points on shared edges and vertices go to the lowest id
    for e in t.edges() {
        let (u, v) = t.edge_endpoints(e);
        let m = t.pos(u).midpoint(t.pos(v));
        let mut ids = vec![e.tri];
        ids.extend(t.twin(e).map(|x| x.tri));
        let want = *ids.iter().min().unwrap();
        assert_eq!(locate_triangle(&t, m, LocateMethod::BruteForce), want);
        assert_eq!(loc.locate(&t, m), want);
        let lowest_at_vertex = t.fan(u).iter().map(|f| f.0).min().unwrap();
        assert_eq!(loc.locate(&t, t.pos(u)), lowest_at_vertex);
    }
}

#[test]
fn locate_outside_falls_back_to_nearest() {
    let t = build_cdt(&cdt_test_scene(5, 1)).unwrap();
    let p = Point::new(1.5, 0.5);
    let tri = locate_triangle(&t, p, LocateMethod::BruteForce);
    assert!(t.tri(tri).v.iter().any(|&v| t.pos(v).x == 1.0));
}

fn scene_of(segs: Vec<(Point, Point)>) -> Arc<Scene> {
    Arc::new(Scene::in_unit_square("s", "t", segs))
}

fn leaf_prims(b: &Bvh) -> Vec<Vec<u32>> {
    b.nodes
        .iter()
        .filter_map(|n| match n {
            BvhNode::Leaf { prims, .. } => Some(prims.clone()),
            _ => None,
        })
        .collect()
}

#[test]
fn bvh_small_cases() {
    let one = build_bvh(scene_of(vec![(Point::new(0.2, 0.2), Point::new(0.4, 0.3))]), 1.0);
    assert_eq!(one.nodes.len(), 1);
    let two = build_bvh(
        scene_of(vec![
            (Point::new(0.1, 0.1), Point::new(0.15, 0.12)),
            (Point::new(0.8, 0.85), Point::new(0.9, 0.9)),
        ]),
        0.125,
    );
    assert_eq!(two.nodes.len(), 3);
    assert_eq!(leaf_prims(&two), vec![vec![0], vec![1]]);
}

#[test]
fn bvh_root_split_is_exhaustive_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let segs: Vec<(Point, Point)> = (0..5)
            .map(|_| {
                let a = Point::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
                (a, a + Point::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)))
            })
            .collect();
        let c_t = 0.25;
        let scene = scene_of(segs);
        let bvh = build_bvh(scene.clone(), c_t);
        // re-enumerate every centroid-sorted split from scratch
        let boxes: Vec<Aabb> = (0..5).map(|i| scene.segments[i].bbox()).collect();
        let union = |ids: &[usize]| ids.iter().fold(Aabb::EMPTY, |b, &i| b.union(&boxes[i]));
        let all: Vec<usize> = (0..5).collect();
        let p = union(&all).perimeter();
        let mut best: Option<(f64, BTreeSet<usize>)> = None;
        for axis in 0..2 {
            let mut order = all.clone();
            order.sort_by(|&a, &b| {
                let (ca, cb) = (boxes[a].center(), boxes[b].center());
                let (x, y) = if axis == 0 { (ca.x, cb.x) } else { (ca.y, cb.y) };
                x.partial_cmp(&y).unwrap().then(a.cmp(&b))
            });
            for k in 1..5 {
                let (l, r) = order.split_at(k);
                let cost = c_t + (union(l).perimeter() * k as f64 + union(r).perimeter() * (5 - k) as f64) / p;
                if best.as_ref().is_none_or(|b| cost < b.0) {
                    best = Some((cost, l.iter().copied().collect()));
                }
            }
        }
        let (cost, left) = best.unwrap();
        match &bvh.nodes[0] {
            BvhNode::Inner { children, .. } => {
                assert!(cost < 5.0);
                let got: BTreeSet<usize> = collect_prims(&bvh, children[0]).into_iter().collect();
                let other: BTreeSet<usize> = all.iter().copied().filter(|i| !left.contains(i)).collect();
                assert!(got == left || got == other, "{got:?} vs {left:?}");
            }
            BvhNode::Leaf { .. } => assert!(cost >= 5.0),
        }
    }
}

fn collect_prims(b: &Bvh, n: u32) -> Vec<usize> {
    match &b.nodes[n as usize] {
        BvhNode::Leaf { prims, .. } => prims.iter().map(|&p| p as usize).collect(),
        BvhNode::Inner { children, .. } => {
            let mut v = collect_prims(b, children[0]);
            v.extend(collect_prims(b, children[1]));
            v
        }
    }
}

#[test]
fn bvh_miss_and_single_leaf_counts() {
    let scene = scene_of(vec![
        (Point::new(0.4, 0.4), Point::new(0.5, 0.45)),
        (Point::new(0.45, 0.5), Point::new(0.5, 0.6)),
        (Point::new(0.42, 0.55), Point::new(0.44, 0.6)),
    ]);
    let bvh = build_bvh(scene.clone(), 8.0);
    assert_eq!(bvh.nodes.len(), 1);
    let (h, st) = bvh_intersect(&bvh, &Ray::new(Point::new(0.1, 0.9), Point::new(1.0, 0.0)));
    assert!(h.is_none());
    assert_eq!((st.bvh_node_tests, st.bvh_prim_tests), (1, 0));
    let (_, st) = bvh_intersect(&bvh, &Ray::new(Point::new(0.1, 0.5), Point::new(1.0, 0.0)));
    assert_eq!((st.bvh_node_tests, st.bvh_prim_tests), (1, 3));
}

fn geometry_grid(k: usize) -> Arc<Scene> {
    let mut segs = Vec::new();
    for i in 0..k {
        for j in 0..k {
            let x = 0.1 + 0.8 * i as f64 / k as f64;
            let y = 0.1 + 0.8 * j as f64 / k as f64;
            segs.push((Point::new(x, y), Point::new(x + 0.3 / k as f64, y)));
        }
    }
    scene_of(segs)
}

#[test]
fn kd_plane_segment_goes_to_both_children() {
    let segs = [
        Segment::geometry(Point::new(0.5, 0.1), Point::new(0.5, 0.9)),
        Segment::geometry(Point::new(0.2, 0.3), Point::new(0.5, 0.35)),
        Segment::geometry(Point::new(0.5, 0.6), Point::new(0.8, 0.7)),
        Segment::geometry(Point::new(0.3, 0.8), Point::new(0.7, 0.85)),
    ];
    let cell = Aabb::new(Point::new(0.0, 0.0), Point::new(1.0, 1.0));
    let (l, r) = kdtree::split_prims(&segs, &cell, &[0, 1, 2, 3], 0, 0.5);
    assert_eq!(l, vec![0, 1, 3]);
    assert_eq!(r, vec![0, 2, 3]);
    // the vertex coordinate 0.5 is a candidate, and a tree that uses it keeps
    // the vertical segment on both sides
    let mut with_clusters: Vec<(Point, Point)> = segs.iter().map(|s| (s.a, s.b)).collect();
    for i in 0..8 {
        let y = 0.05 + 0.11 * i as f64;
        with_clusters.push((Point::new(0.46, y), Point::new(0.48, y + 0.02)));
        with_clusters.push((Point::new(0.52, y), Point::new(0.54, y + 0.02)));
    }
    let kd = build_kdtree(scene_of(with_clusters), 0.125);
    for n in &kd.nodes {
        if let KdNode::Inner { cell, axis: 0, split, children } = n {
            if *split == 0.5 && cell.min.y < 0.9 && cell.max.y > 0.1 {
                for c in children {
                    assert!(collect_kd_prims(&kd, *c).contains(&0));
                }
            }
        }
    }
}

fn collect_kd_prims(kd: &RopedKdTree, n: u32) -> BTreeSet<u32> {
    match &kd.nodes[n as usize] {
        KdNode::Leaf { prims, .. } => prims.iter().copied().collect(),
        KdNode::Inner { children, .. } => {
            let mut s = collect_kd_prims(kd, children[0]);
            s.extend(collect_kd_prims(kd, children[1]));
            s
        }
    }
}

/// Every leaf cell tiles the domain and holds exactly the segments crossing it.
fn check_kd_cells(kd: &RopedKdTree) {
    let scene = kd.scene();
    let root = *kd.nodes[0].cell();
    let mut area = 0.0;
    for n in &kd.nodes {
        match n {
            KdNode::Leaf { cell, prims, .. } => {
                area += cell.width() * cell.height();
                for (i, s) in scene.geometry() {
                    let probe = crate::geometry::Segment::geometry(s.a, s.b);
                    if segment_meets_interior(&probe, cell) {
                        assert!(prims.contains(&(i as u32)), "segment {i} missing from {cell:?}");
                    }
                }
            }
            KdNode::Inner {
                cell,
                axis,
                split,
                children,
            } => {
                assert!(cell.axis_min(*axis) < *split && *split < cell.axis_max(*axis));
                assert!(scene.vertices().iter().any(|p| if *axis == 0 { p.x == *split } else { p.y == *split }));
                for c in children {
                    assert!(cell.contains_box(kd.nodes[*c as usize].cell()));
                }
            }
        }
    }
    assert!((area - root.width() * root.height()).abs() < 1e-12);
}

/// Sampling test: does the open segment pass through the open cell?
fn segment_meets_interior(s: &Segment, c: &Aabb) -> bool {
    (1..1000).any(|k| {
        let p = s.at(k as f64 / 1000.0);
        p.x > c.min.x && p.x < c.max.x && p.y > c.min.y && p.y < c.max.y
    })
}

#[test]
fn kd_cells_contain_their_geometry() {
    for k in [2, 3, 4, 6] {
        let kd = build_kdtree(geometry_grid(k), 0.25);
        assert!(kd.leaf_count() > 1);
        check_kd_cells(&kd);
    }
    check_kd_cells(&build_kdtree(Arc::new(cdt_test_scene(30, 4)), 0.5));
}

#[test]
fn kd_single_leaf_counts() {
    let scene = geometry_grid(2);
    let kd = build_kdtree(scene, 100.0);
    assert_eq!(kd.nodes.len(), 1);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let (_, st) = kd_intersect(&kd, &random_ray(&mut rng));
        assert_eq!(st.kd_nodes_visited, 1);
        assert_eq!(st.kd_rope_steps, 0);
        assert!(st.kd_prim_tests <= 4);
    }
}

#[test]
fn kd_mailboxing_tests_each_segment_once() {
    // one long horizontal segment crossed by many vertical splits
    let mut segs = vec![(Point::new(0.02, 0.5), Point::new(0.98, 0.5))];
    for i in 0..16 {
        let x = 0.03 + 0.06 * i as f64;
        segs.push((Point::new(x, 0.3), Point::new(x + 0.01, 0.45)));
        segs.push((Point::new(x, 0.55), Point::new(x + 0.01, 0.7)));
    }
    let kd = build_kdtree(scene_of(segs), 0.125);
    // ray running just above the long segment to the far wall
    let y = 0.5 + 1e-7;
    let ray = Ray::new(Point::new(0.01, y), Point::new(1.0, 0.0));
    let pierced = kd
        .nodes
        .iter()
        .filter(|n| matches!(n, KdNode::Leaf { cell, prims, .. } if prims.contains(&0) && cell.min.y <= y && cell.max.y >= y))
        .count();
    assert!(pierced > 2);
    let (h, st) = kd_intersect(&kd, &ray);
    assert!(h.is_none());
    assert!(st.kd_nodes_visited >= pierced as u64);
    let want = brute_force_closest(kd.scene(), &ray);
    assert!(want.is_none());
    let tested: u64 = st.kd_prim_tests;
    assert!(tested >= 1);
    let distinct: BTreeSet<u32> = kd
        .nodes
        .iter()
        .filter_map(|n| match n {
            KdNode::Leaf { cell, prims, .. } if cell.min.y <= y && cell.max.y >= y => Some(prims.clone()),
            _ => None,
        })
        .flatten()
        .collect();
    assert!(tested <= distinct.len() as u64);
}

#[test]
fn rope_costs() {
    assert_eq!(rope_cost(1), 1);
    assert_eq!(rope_cost(2), 1);
    assert_eq!(rope_cost(3), 2);
    assert_eq!(rope_cost(4), 2);
    assert_eq!(rope_cost(5), 3);
    assert_eq!(rope_cost(1024), 10);
    assert_eq!(rope_cost(1025), 11);
}

#[test]
fn sweep_picks_minimum() {
    let scene = Arc::new(cdt_test_scene(30, 8));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rays: Vec<Ray> = (0..500).map(|_| random_ray(&mut rng)).collect();
    let total = |b: &Bvh| rays.iter().map(|r| bvh_intersect(b, r).1.bvh_total()).sum::<u64>();
    let sw = sweep_structure_params(&DEFAULT_CT_GRID, |c| build_bvh(scene.clone(), c), total);
    assert_eq!(sw.totals.len(), DEFAULT_CT_GRID.len());
    assert_eq!(total(&sw.best), sw.best_total());
    assert_eq!(sw.best_total(), sw.totals.iter().map(|t| t.1).min().unwrap());
    let one = sweep_structure_params(&[2.0], |c| build_kdtree(scene.clone(), c), |k| {
        rays.iter().map(|r| kd_intersect(k, r).1.kd_total()).sum()
    });
    assert_eq!(one.best_c_t, 2.0);
    assert_eq!(one.best.c_t, 2.0);
}

#[test]
fn dumps_list_every_node() {
    let scene = Arc::new(cdt_test_scene(10, 3));
    let b = build_bvh(scene.clone(), 0.5);
    assert_eq!(b.dump().lines().count(), b.nodes.len() + 1);
    let k = build_kdtree(scene, 0.5);
    let d = k.dump();
    assert_eq!(d.lines().count(), k.nodes.len() + 1);
    assert!(d.contains("ropes"));
}

fn bvh_children_contained(b: &Bvh) -> bool {
    b.nodes.iter().all(|n| match n {
        BvhNode::Inner { bbox, children } => children.iter().all(|&c| bbox.contains_box(b.nodes[c as usize].bbox())),
        BvhNode::Leaf { .. } => true,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn structures_are_consistent(seed in 0u64..1000, n in 1usize..40, c_t in 0.1f64..4.0) {
        let scene = Arc::new(cdt_test_scene(n, seed));
        let bvh = build_bvh(scene.clone(), c_t);
        prop_assert!(bvh_children_contained(&bvh));
        let mut seen: Vec<u32> = leaf_prims(&bvh).concat();
        seen.sort_unstable();
        let all: Vec<u32> = scene.geometry().map(|(i, _)| i as u32).collect();
        prop_assert_eq!(&seen, &all);
        let kd = build_kdtree(scene.clone(), c_t);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let ray = random_ray(&mut rng);
            let want = brute_force_closest(&scene, &ray);
            let (b, s1) = bvh_intersect(&bvh, &ray);
            let (k, s2) = kd_intersect(&kd, &ray);
            prop_assert!(hits_agree(b.as_ref(), want.as_ref(), 1e-9));
            prop_assert!(hits_agree(k.as_ref(), want.as_ref(), 1e-9));
            prop_assert!(s2.kd_prim_tests as usize <= all.len());
            // counters are a pure function of structure and ray
            prop_assert_eq!(bvh_intersect(&bvh, &ray).1, s1);
            prop_assert_eq!(kd_intersect(&kd, &ray).1, s2);
            if let Some(h) = want {
                prop_assert!(scene.segments[h.segment as usize].distance_to(h.point) < 1e-9);
            }
        }
    }
}



