//! Turning a fuzzily contracted triangulation into a real one.

use super::{run_annealing, Budget, Schedule, Strategy};
use crate::objective::{is_contractible, Contractibility, ObjectiveParams};
use crate::trimesh::{ContractOutcome, Dof, EdgeKey, Triangulation};
use crate::Result;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

#[derive(Debug, Clone, PartialEq)]
pub struct PolishOptions {
    /// Temperature range of each polishing run.
    pub t_init: f64,
    pub t_final: f64,
    pub levels: usize,
    /// Proposals per polishing run, spread evenly over its levels.
    pub steps: u64,
    pub strategies: Vec<Strategy>,
    /// Polish/flip alternations per round.
    pub max_passes: usize,
    pub max_rounds: usize,
    /// Contraction length growth between rounds.
    pub growth: f64,
    /// A round longer than this multiple of the best length ends the loop.
    pub stop_factor: f64,
}

impl Default for PolishOptions {
    fn default() -> Self {
        Self {
            t_init: 1e-4,
            t_final: 1e-5,
            levels: 10,
            steps: 40_000,
            strategies: Strategy::POLISH.to_vec(),
            max_passes: 3,
            max_rounds: 8,
            growth: 1.3,
            stop_factor: 1.1,
        }
    }
}

/// One round of the contract-and-polish loop.
#[derive(Debug, Clone, PartialEq)]
pub struct PolishRound {
    pub eps: f64,
    pub length: f64,
    pub contracted: usize,
}

#[derive(Debug, Clone)]
pub struct PolishOutcome {
    /// Shortest triangulation over all rounds.
    pub tri: Triangulation,
    pub length: f64,
    /// Contraction length of the round that produced `tri`.
    pub eps: f64,
    /// Edges of `tri` shorter than `eps` that could not be contracted.
    pub incontractible: Vec<EdgeKey>,
    pub rounds: Vec<PolishRound>,
}

/// Contracts every edge shorter than `params.eps`, shortest first. Edges that
/// cannot be contracted are retried after any sweep that made progress.
/// Returns the number of contractions and the short edges left over.
pub fn contract_short_edges(t: &mut Triangulation, params: &ObjectiveParams) -> (usize, Vec<EdgeKey>) {
    let mut contracted = 0;
    loop {
        let mut cands: Vec<(f64, EdgeKey)> = t
            .edges()
            .map(|e| (t.edge_length(e), t.edge_key(e)))
            .filter(|&(l, _)| l < params.eps)
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut failed = Vec::new();
        let mut progress = false;
        for (_, k) in cands {
            let Some(e) = t.find_edge(k.0, k.1) else {
                continue;
            };
            if t.edge_length(e) >= params.eps {
                continue;
            }
            let ok = is_contractible(t, e, params) == Contractibility::Yes
                && matches!(t.contract_edge(e), ContractOutcome::Contracted { .. });
            if ok {
                contracted += 1;
                progress = true;
            } else {
                failed.push(k);
            }
        }
        if !progress {
            return (contracted, failed);
        }
    }
}

/// Flips internal edges whose other diagonal is strictly shorter until none
/// is left. Returns the number of flips.
pub fn greedy_flips(t: &mut Triangulation) -> usize {
    let mut flips = 0;
    loop {
        let mut changed = false;
        let edges: Vec<EdgeKey> = t.edges().map(|e| t.edge_key(e)).collect();
        for k in edges {
            let Some(e) = t.find_edge(k.0, k.1) else {
                continue;
            };
            if !t.edge_flag(e).is_constrained() && t.flip_shortens(e) && t.flip_is_convex(e) {
                t.flip_unchecked(e);
                flips += 1;
                changed = true;
            }
        }
        if !changed {
            return flips;
        }
    }
}

/// Short low-temperature annealing without fuzzy contraction and without the
/// contraction-based strategies. Returns the best state found.
pub fn polish(t: Triangulation, params: &ObjectiveParams, opts: &PolishOptions, rng: &mut ChaCha8Rng) -> Result<Triangulation> {
    let p = ObjectiveParams {
        polish_mode: true,
        fuzzy_enabled: false,
        ..params.clone()
    };
    let strategies: Vec<Strategy> = opts.strategies.iter().copied().filter(|s| !s.is_contraction_based()).collect();
    let levels = opts.levels.max(1);
    let schedule = Schedule {
        t_init: opts.t_init,
        t_final: opts.t_final,
        eps_init: params.eps,
        eps_final: params.eps,
        levels,
        steps_per_level: opts.steps.div_ceil(levels as u64),
    };
    Ok(run_annealing(t, &schedule, &strategies, &p, &Budget::unlimited(), rng)?.best)
}

/// Non-fixed edges shorter than `eps` that are not in `flagged`.
fn fresh_candidates(t: &Triangulation, eps: f64, flagged: &HashSet<EdgeKey>) -> bool {
    t.edges().any(|e| {
        let (a, b) = t.edge_endpoints(e);
        t.edge_length(e) < eps && !(t.dof(a) == Dof::Fixed && t.dof(b) == Dof::Fixed) && !flagged.contains(&t.edge_key(e))
    })
}

/// Alternates contraction of edges shorter than ε, polishing and greedy
/// flips, growing ε between rounds until the length exceeds the stop factor
/// times the best length. Returns the shortest round.
pub fn contract_and_polish(
    t: Triangulation,
    params: &ObjectiveParams,
    opts: &PolishOptions,
    rng: &mut ChaCha8Rng,
) -> Result<PolishOutcome> {
    params.check()?;
    let mut t = t;
    let mut p = params.clone();
    let mut rounds = Vec::new();
    let mut best: Option<PolishOutcome> = None;
    loop {
        let (mut contracted, mut flagged) = contract_short_edges(&mut t, &p);
        for _ in 0..opts.max_passes.max(1) {
            let before = t.total_edge_length();
            t = polish(t, &p, opts, rng)?;
            greedy_flips(&mut t);
            let (c, f) = contract_short_edges(&mut t, &p);
            contracted += c;
            flagged = f;
            if c == 0 && t.total_edge_length() >= before * (1.0 - 1e-12) {
                break;
            }
        }
        let length = t.total_edge_length();
        log::info!("contract&polish eps={:.4e} length={length:.6} contracted={contracted}", p.eps);
        rounds.push(PolishRound {
            eps: p.eps,
            length,
            contracted,
        });
        let best_len = best.as_ref().map_or(f64::INFINITY, |b| b.length);
        if length < best_len {
            best = Some(PolishOutcome {
                tri: t.clone(),
                length,
                eps: p.eps,
                incontractible: flagged.clone(),
                rounds: Vec::new(),
            });
        }
        let best_len = best_len.min(length);
        if length > opts.stop_factor * best_len || rounds.len() >= opts.max_rounds {
            break;
        }
        let next = p.eps * opts.growth;
        let flagged: HashSet<EdgeKey> = flagged.into_iter().collect();
        if contracted == 0 && !fresh_candidates(&t, next, &flagged) {
            break;
        }
        p.eps = next;
    }
    let mut out = best.expect("at least one round");
    out.rounds = rounds;
    Ok(out)
}
