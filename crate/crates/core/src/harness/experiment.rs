//! Tracing one ray set through every structure of a scene, checking each hit
//! against the brute-force oracle and aggregating operation counts.

use super::rays::start_triangles;
use crate::accel::{
    brute_force_closest, build_bvh, build_kdtree, bvh_intersect, hits_agree, kd_intersect, sweep_structure_params,
    traverse_triangulation, Bvh, Hit, RopedKdTree, TraversalStats, DEFAULT_CT_GRID,
};
use crate::error::{Error, Result};
use crate::geometry::Ray;
use crate::scene::Scene;
use crate::trimesh::Triangulation;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

/// Relative hit-distance tolerance of the oracle comparison.
pub const HIT_REL_TOL: f64 = 1e-9;

pub const ROPE_COST_RULE: &str = "ceil(log2 n), at least 1, for n leaves on the face";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    /// Node cost values tried for the BVH and kd-tree builds.
    pub ct_grid: Vec<f64>,
    /// Seed the rays were drawn with, echoed in the report.
    pub ray_seed: Option<u64>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            ct_grid: DEFAULT_CT_GRID.to_vec(),
            ray_seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Triangulation,
    Bvh,
    Kd,
}

/// Per-ray means of the operation counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStats {
    pub tri_steps: f64,
    pub bvh_node_tests: f64,
    pub bvh_prim_tests: f64,
    pub kd_nodes_visited: f64,
    pub kd_rope_steps: f64,
    pub kd_prim_tests: f64,
}

impl MeanStats {
    pub fn from_totals(s: &TraversalStats, rays: usize) -> Self {
        let n = rays.max(1) as f64;
        Self {
            tri_steps: s.tri_steps as f64 / n,
            bvh_node_tests: s.bvh_node_tests as f64 / n,
            bvh_prim_tests: s.bvh_prim_tests as f64 / n,
            kd_nodes_visited: s.kd_nodes_visited as f64 / n,
            kd_rope_steps: s.kd_rope_steps as f64 / n,
            kd_prim_tests: s.kd_prim_tests as f64 / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub kind: MethodKind,
    /// Node cost the structure was built with (BVH and kd-tree only).
    pub c_t: Option<f64>,
    /// Total edge length (triangulations only).
    pub edge_length: Option<f64>,
    /// Triangles, or leaves of a tree.
    pub cells: usize,
    pub totals: TraversalStats,
    pub total_ops: u64,
    pub mean_ops: f64,
    pub means: MeanStats,
    pub seconds: f64,
}

impl MethodReport {
    fn new(method: String, kind: MethodKind, totals: TraversalStats, rays: usize, seconds: f64) -> Self {
        let total_ops = match kind {
            MethodKind::Triangulation => totals.tri_total(),
            MethodKind::Bvh => totals.bvh_total(),
            MethodKind::Kd => totals.kd_total(),
        };
        Self {
            method,
            kind,
            c_t: None,
            edge_length: None,
            cells: 0,
            totals,
            total_ops,
            mean_ops: total_ops as f64 / rays.max(1) as f64,
            means: MeanStats::from_totals(&totals, rays),
            seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scene: String,
    pub provenance: String,
    pub geometry_segments: usize,
    pub ray_count: usize,
    pub ray_seed: Option<u64>,
    /// Rays that hit some geometry.
    pub hits: usize,
    pub methods: Vec<MethodReport>,
    /// Total operations for every node cost tried, in grid order.
    pub bvh_sweep: Vec<(f64, u64)>,
    pub kd_sweep: Vec<(f64, u64)>,
    pub rope_cost_rule: String,
    pub seconds: f64,
}

impl ExperimentReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn edge_length_of(&self, name: &str) -> Option<f64> {
        self.method(name).and_then(|m| m.edge_length)
    }

    pub fn by_kind(&self, kind: MethodKind) -> impl Iterator<Item = &MethodReport> {
        self.methods.iter().filter(move |m| m.kind == kind)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Traces every ray with `query` in parallel, checks the hits against the
/// oracle and sums the counters. The first mismatching ray (by index) is
/// reported.
pub(crate) fn trace_checked<F>(method: &str, rays: &[Ray], oracle: &[Option<Hit>], query: F) -> Result<TraversalStats>
where
    F: Fn(usize, &Ray) -> Result<(Option<Hit>, TraversalStats)> + Sync,
{
    let results: Vec<Result<TraversalStats>> = rays
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let (hit, stats) = query(i, r)?;
            if hits_agree(hit.as_ref(), oracle[i].as_ref(), HIT_REL_TOL) {
                Ok(stats)
            } else {
                Err(Error::HitMismatch {
                    method: method.to_string(),
                    ray: i,
                    detail: format!("ray {r:?}: got {hit:?}, oracle {:?}", oracle[i]),
                })
            }
        })
        .collect();
    let mut total = TraversalStats::default();
    for r in results {
        total += r?;
    }
    Ok(total)
}

fn bvh_ops(b: &Bvh, rays: &[Ray]) -> u64 {
    rays.par_iter().map(|r| bvh_intersect(b, r).1.bvh_total()).sum()
}

fn kd_ops(k: &RopedKdTree, rays: &[Ray]) -> u64 {
    rays.par_iter().map(|r| kd_intersect(k, r).1.kd_total()).sum()
}

/// Runs `rays` through every labelled triangulation, a BVH and a roped
/// kd-tree. Each tree is the cheapest over `opts.ct_grid` on these same rays.
/// Any disagreement with the brute-force oracle aborts with the offending ray.
pub fn run_experiment(
    scene: Arc<Scene>,
    triangulations: &[(String, Triangulation)],
    rays: &[Ray],
    opts: &ExperimentOptions,
) -> Result<ExperimentReport> {
    let started = Instant::now();
    for (label, t) in triangulations {
        if t.scene() != &*scene {
            return Err(Error::InvalidScene(format!("triangulation {label} belongs to another scene")));
        }
    }
    if opts.ct_grid.is_empty() {
        return Err(Error::Config("empty node cost grid".into()));
    }
    let oracle: Vec<Option<Hit>> = rays.par_iter().map(|r| brute_force_closest(&scene, r)).collect();
    let n = rays.len();
    let mut methods = Vec::new();

    for (label, t) in triangulations {
        let clock = Instant::now();
        let starts = start_triangles(t, rays);
        let totals = trace_checked(label, rays, &oracle, |i, r| traverse_triangulation(t, r, starts[i]))?;
        let mut m = MethodReport::new(label.clone(), MethodKind::Triangulation, totals, n, clock.elapsed().as_secs_f64());
        m.edge_length = Some(t.total_edge_length());
        m.cells = t.triangle_count();
        methods.push(m);
    }

    let clock = Instant::now();
    let bvh = sweep_structure_params(&opts.ct_grid, |c| build_bvh(scene.clone(), c), |b| bvh_ops(b, rays));
    let totals = trace_checked("bvh", rays, &oracle, |_, r| Ok(bvh_intersect(&bvh.best, r)))?;
    let mut m = MethodReport::new("bvh".into(), MethodKind::Bvh, totals, n, clock.elapsed().as_secs_f64());
    m.c_t = Some(bvh.best_c_t);
    m.cells = bvh.best.leaf_count();
    methods.push(m);

    let clock = Instant::now();
    let kd = sweep_structure_params(&opts.ct_grid, |c| build_kdtree(scene.clone(), c), |k| kd_ops(k, rays));
    let totals = trace_checked("kd", rays, &oracle, |_, r| Ok(kd_intersect(&kd.best, r)))?;
    let mut m = MethodReport::new("kd".into(), MethodKind::Kd, totals, n, clock.elapsed().as_secs_f64());
    m.c_t = Some(kd.best_c_t);
    m.cells = kd.best.leaf_count();
    methods.push(m);

    Ok(ExperimentReport {
        scene: scene.name.clone(),
        provenance: scene.provenance.clone(),
        geometry_segments: scene.geometry_count(),
        ray_count: n,
        ray_seed: opts.ray_seed,
        hits: oracle.iter().filter(|h| h.is_some()).count(),
        methods,
        bvh_sweep: bvh.totals,
        kd_sweep: kd.totals,
        rope_cost_rule: ROPE_COST_RULE.to_string(),
        seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    scene: &'a str,
    method: &'a str,
    kind: MethodKind,
    rays: usize,
    c_t: Option<f64>,
    edge_length: Option<f64>,
    cells: usize,
    mean_ops: f64,
    tri_steps: f64,
    bvh_node_tests: f64,
    bvh_prim_tests: f64,
    kd_nodes_visited: f64,
    kd_rope_steps: f64,
    kd_prim_tests: f64,
    seconds: f64,
}

/// One CSV row per method per report, with a header line.
pub fn reports_to_csv(reports: &[ExperimentReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        for m in &r.methods {
            w.serialize(CsvRow {
                scene: &r.scene,
                method: &m.method,
                kind: m.kind,
                rays: r.ray_count,
                c_t: m.c_t,
                edge_length: m.edge_length,
                cells: m.cells,
                mean_ops: m.mean_ops,
                tri_steps: m.means.tri_steps,
                bvh_node_tests: m.means.bvh_node_tests,
                bvh_prim_tests: m.means.bvh_prim_tests,
                kd_nodes_visited: m.means.kd_nodes_visited,
                kd_rope_steps: m.means.kd_rope_steps,
                kd_prim_tests: m.means.kd_prim_tests,
                seconds: m.seconds,
            })
            .map_err(|e| Error::Config(format!("csv: {e}")))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
