//! Initial triangulation, annealing, contraction and optional subdivision.

use super::{contract_and_polish, greedy_flips, run_annealing, AnnealConfig, LevelLog, Strategy};
use crate::objective::ObjectiveParams;
use crate::scene::Scene;
use crate::trimesh::{optimal_refined_cdt, Triangulation};
use crate::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    /// Shortest triangulation among the starting one and every pass result.
    pub tri: Triangulation,
    pub initial_length: f64,
    /// Length after each optimization pass.
    pub pass_lengths: Vec<f64>,
    /// Annealing progress of each pass.
    pub logs: Vec<Vec<LevelLog>>,
}

impl PipelineOutcome {
    pub fn length(&self) -> f64 {
        self.tri.total_edge_length()
    }
}

/// Optimizes the best refined CDT of `scene`.
pub fn full_pipeline(scene: &Scene, config: &AnnealConfig) -> Result<PipelineOutcome> {
    config.check()?;
    let start = optimal_refined_cdt(scene, &config.refine_grid())?;
    optimize(start, config)
}

/// Runs the optimization passes on a given starting triangulation: anneal and
/// contract, then for every further pass subdivide, anneal and contract.
pub fn optimize(start: Triangulation, config: &AnnealConfig) -> Result<PipelineOutcome> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let schedule = config.schedule();
    let strategies = config.strategies.enabled();
    let params = config.objective_params();
    let polish = config.polish_options();
    let budget = config.budget();
    let initial_length = start.total_edge_length();
    let mut best = start.clone();
    let mut best_len = initial_length;
    let mut pass_lengths = Vec::new();
    let mut logs = Vec::new();
    let mut cur = start;
    for pass in 0..config.iterations {
        if pass > 0 {
            cur = cur.subdivide();
        }
        let annealed = run_annealing(cur, &schedule, &strategies, &params, &budget, &mut rng)?;
        logs.push(annealed.levels);
        let out = contract_and_polish(annealed.best, &params, &polish, &mut rng)?;
        cur = out.tri;
        cur.compact();
        let len = cur.total_edge_length();
        log::info!("pass {pass}: length {len:.6}");
        pass_lengths.push(len);
        if len < best_len {
            best_len = len;
            best = cur.clone();
        }
    }
    Ok(PipelineOutcome {
        tri: best,
        initial_length,
        pass_lengths,
        logs,
    })
}

/// Optimization that keeps the vertex set: one annealing run over vertex
/// positions without fuzzy contraction, with edge flips and a final greedy
/// flip pass when `flips` is set. Returns the shortest state seen.
pub fn optimize_fixed_vertices(start: Triangulation, config: &AnnealConfig, flips: bool) -> Result<Triangulation> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let strategies: Vec<Strategy> = config
        .strategies
        .enabled()
        .into_iter()
        .filter(|s| !s.is_contraction_based() && (flips || *s != Strategy::FlipEdges))
        .collect();
    if strategies.is_empty() {
        return Err(crate::Error::Config("no vertex-moving strategy enabled".into()));
    }
    let params = ObjectiveParams {
        fuzzy_enabled: false,
        ..config.objective_params()
    };
    let initial = start.total_edge_length();
    let mut t = run_annealing(start.clone(), &config.schedule(), &strategies, &params, &config.budget(), &mut rng)?.best;
    if flips {
        greedy_flips(&mut t);
    }
    Ok(if t.total_edge_length() < initial { t } else { start })
}
