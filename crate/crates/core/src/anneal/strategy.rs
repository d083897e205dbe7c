//! Perturbation strategies and their adaptive aggressiveness.

use crate::geometry::{Point, UniformGrid};
use crate::objective::Edit;
use crate::trimesh::{EdgeRef, TriId, Triangulation, VertId};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::time::Duration;

/// Target acceptance rate of the aggressiveness controller.
pub const TARGET_ACCEPTANCE: f64 = 0.23;
/// Exponent of the multiplicative controller.
pub const CONTROLLER_GAMMA: f64 = 0.5;
/// Attempts per adaptation window.
pub const ADAPT_WINDOW: u64 = 100;
/// Fraction of the movable vertices (or groups) touched by group variants.
pub const GROUP_FRACTION: f64 = 0.02;
/// Star-area threshold, in units of ε², splitting the two resampling variants.
pub const RESAMPLE_AREA_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    DirectSingle,
    DirectGroup,
    ClusterSingle,
    ClusterGroup,
    ResampleSmall,
    ResampleLarge,
    SwapContracted,
    ContractToNeighbor,
    FlipEdges,
}

impl Strategy {
    pub const ALL: [Strategy; 9] = [
        Strategy::DirectSingle,
        Strategy::DirectGroup,
        Strategy::ClusterSingle,
        Strategy::ClusterGroup,
        Strategy::ResampleSmall,
        Strategy::ResampleLarge,
        Strategy::SwapContracted,
        Strategy::ContractToNeighbor,
        Strategy::FlipEdges,
    ];

    /// Strategies used while polishing a contracted triangulation.
    pub const POLISH: [Strategy; 5] = [
        Strategy::DirectSingle,
        Strategy::DirectGroup,
        Strategy::ResampleSmall,
        Strategy::ResampleLarge,
        Strategy::FlipEdges,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::DirectSingle => "direct_single",
            Strategy::DirectGroup => "direct_group",
            Strategy::ClusterSingle => "cluster_single",
            Strategy::ClusterGroup => "cluster_group",
            Strategy::ResampleSmall => "resample_small",
            Strategy::ResampleLarge => "resample_large",
            Strategy::SwapContracted => "swap_contracted",
            Strategy::ContractToNeighbor => "contract_to_neighbor",
            Strategy::FlipEdges => "flip_edges",
        }
    }

    /// Whether the strategy relies on fuzzy contraction.
    pub fn is_contraction_based(self) -> bool {
        matches!(
            self,
            Strategy::ClusterSingle | Strategy::ClusterGroup | Strategy::SwapContracted | Strategy::ContractToNeighbor
        )
    }

    /// Whether λ counts vertices or edges rather than scaling a displacement.
    fn counts_items(self) -> bool {
        !matches!(
            self,
            Strategy::DirectSingle | Strategy::DirectGroup | Strategy::ClusterSingle | Strategy::ClusterGroup
        )
    }

    /// Admissible range of λ.
    pub fn lambda_bounds(self) -> (f64, f64) {
        if self.counts_items() {
            (1.0, 64.0)
        } else {
            (1e-6, 10.0)
        }
    }

    pub fn initial_lambda(self) -> f64 {
        if self.counts_items() {
            1.0
        } else {
            0.1
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Aggressiveness and bookkeeping of one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyState {
    pub strategy: Strategy,
    pub lambda: f64,
    /// Accepted and attempted proposals in the current adaptation window.
    pub accepted: u64,
    pub attempted: u64,
    pub total_accepted: u64,
    pub total_attempted: u64,
    /// Cumulative evaluation cost in objective terms.
    pub work: u64,
    pub time: Duration,
}

impl StrategyState {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            lambda: strategy.initial_lambda(),
            accepted: 0,
            attempted: 0,
            total_accepted: 0,
            total_attempted: 0,
            work: 0,
            time: Duration::ZERO,
        }
    }

    pub fn record(&mut self, accepted: bool) {
        self.attempted += 1;
        self.total_attempted += 1;
        if accepted {
            self.accepted += 1;
            self.total_accepted += 1;
        }
    }

    /// Acceptance rate over the whole run so far.
    pub fn acceptance(&self) -> f64 {
        if self.total_attempted == 0 {
            0.0
        } else {
            self.total_accepted as f64 / self.total_attempted as f64
        }
    }

    /// Number of items a counting strategy handles per proposal.
    pub fn count(&self) -> usize {
        self.lambda.round().max(1.0) as usize
    }
}

/// Rescales λ by `(rate / 0.23)^0.5` once a full window of attempts has been
/// collected, clamps it to the strategy's bounds and starts a new window.
/// Returns the (possibly unchanged) λ.
pub fn adapt_lambda(state: &mut StrategyState) -> f64 {
    if state.attempted < ADAPT_WINDOW {
        return state.lambda;
    }
    let rate = state.accepted as f64 / state.attempted as f64;
    let (lo, hi) = state.strategy.lambda_bounds();
    state.lambda = (state.lambda * (rate / TARGET_ACCEPTANCE).powf(CONTROLLER_GAMMA)).clamp(lo, hi);
    state.accepted = 0;
    state.attempted = 0;
    state.lambda
}

/// A proposed edit. Every strategy draws from a density that is symmetric
/// between the current and the proposed state.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub strategy: Strategy,
    /// `None` when the strategy found nothing to perturb.
    pub edit: Option<Edit>,
}

impl Proposal {
    /// Whether applying the proposal would leave the triangulation as is.
    pub fn is_noop(&self, t: &Triangulation) -> bool {
        match &self.edit {
            None => true,
            Some(Edit::Move(m)) => m.iter().all(|&(v, p)| t.pos(v) == p),
            Some(Edit::Flips(k)) => k.is_empty(),
            Some(Edit::Flip(_)) => false,
        }
    }
}

/// Lookup structures shared by the strategies during one annealing run.
#[derive(Debug, Clone)]
pub struct ProposalContext {
    movable: Vec<VertId>,
    tris: Vec<TriId>,
    grid: UniformGrid,
    /// Vertices that had an incident edge below `2ε` when last inspected.
    short: Vec<VertId>,
    in_short: Vec<bool>,
    eps: f64,
}

impl ProposalContext {
    pub fn new(t: &Triangulation, eps: f64) -> Self {
        let movable = t.movable_vertices();
        let mut ctx = Self {
            tris: t.triangle_ids().collect(),
            grid: UniformGrid::new(1.0),
            short: Vec::new(),
            in_short: vec![false; t.vertex_capacity()],
            movable,
            eps,
        };
        ctx.set_eps(t, eps);
        ctx
    }

    pub fn movable(&self) -> &[VertId] {
        &self.movable
    }

    /// Adopts a new contraction length and rebuilds the dependent lookups.
    pub fn set_eps(&mut self, t: &Triangulation, eps: f64) {
        self.eps = eps;
        let cell = (5.0 * eps).max(1e-6);
        self.grid = UniformGrid::with_points(cell, self.movable.iter().map(|&v| (v, t.pos(v))));
        self.short.clear();
        self.in_short.iter_mut().for_each(|x| *x = false);
        for i in 0..self.movable.len() {
            self.note_if_short(t, self.movable[i]);
        }
    }

    fn note_if_short(&mut self, t: &Triangulation, v: VertId) {
        if t.dof(v).is_movable() && !self.in_short[v as usize] && min_incident_length(t, v) < 2.0 * self.eps {
            self.in_short[v as usize] = true;
            self.short.push(v);
        }
    }

    /// Updates the lookups after an accepted edit.
    pub fn accepted(&mut self, t: &Triangulation, edit: &Edit) {
        let mut verts: Vec<VertId> = match edit {
            Edit::Move(m) => m.iter().map(|&(v, _)| v).collect(),
            Edit::Flip(k) => vec![k.0, k.1],
            Edit::Flips(ks) => ks.iter().flat_map(|k| [k.0, k.1]).collect(),
        };
        if let Edit::Move(m) = edit {
            for &(v, p) in m {
                self.grid.move_to(v, p);
            }
        }
        let n = verts.len();
        for i in 0..n {
            verts.extend(t.neighbors(verts[i]));
        }
        for v in verts {
            self.note_if_short(t, v);
        }
    }

    fn random_movable<R: Rng>(&self, rng: &mut R) -> Option<VertId> {
        (!self.movable.is_empty()).then(|| self.movable[rng.gen_range(0..self.movable.len())])
    }

    fn group_size(&self) -> usize {
        ((GROUP_FRACTION * self.movable.len() as f64).ceil() as usize).max(1)
    }

    /// A random vertex with an incident edge shorter than `l`; stale entries
    /// met on the way are dropped.
    fn random_short<R: Rng>(&mut self, t: &Triangulation, l: f64, rng: &mut R) -> Option<VertId> {
        for _ in 0..16 {
            if self.short.is_empty() {
                return None;
            }
            let i = rng.gen_range(0..self.short.len());
            let v = self.short[i];
            let m = min_incident_length(t, v);
            if m < l {
                return Some(v);
            }
            if m >= 2.0 * self.eps {
                self.in_short[v as usize] = false;
                self.short.swap_remove(i);
            }
        }
        None
    }
}

fn min_incident_length(t: &Triangulation, v: VertId) -> f64 {
    let p = t.pos(v);
    t.neighbors(v).into_iter().map(|n| p.dist(t.pos(n))).fold(f64::INFINITY, f64::min)
}

/// Uniform point in the unit disk with its radius scaled by a Pareto factor
/// (`α = 1/2`, support `x > 1`).
pub fn heavy_tailed_offset<R: Rng>(rng: &mut R) -> Point {
    let r = rng.gen::<f64>().sqrt();
    let a = rng.gen::<f64>() * std::f64::consts::TAU;
    let u = 1.0 - rng.gen::<f64>();
    let pareto = u.powf(-2.0);
    Point::new(a.cos(), a.sin()) * (r * pareto)
}

fn uniform_in_disk<R: Rng>(rng: &mut R, c: Point, radius: f64) -> Point {
    let r = radius * rng.gen::<f64>().sqrt();
    let a = rng.gen::<f64>() * std::f64::consts::TAU;
    c + Point::new(a.cos(), a.sin()) * r
}

/// Uniform point (by area) over the triangles around `v`.
fn resample_in_star<R: Rng>(t: &Triangulation, v: VertId, rng: &mut R) -> Option<Point> {
    let fan = t.fan(v);
    let areas: Vec<f64> = fan.iter().map(|&(tr, _)| t.tri_area(tr).max(0.0)).collect();
    let total: f64 = areas.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut x = rng.gen::<f64>() * total;
    let mut pick = fan.len() - 1;
    for (i, a) in areas.iter().enumerate() {
        if x < *a {
            pick = i;
            break;
        }
        x -= a;
    }
    let [a, b, c] = t.tri_points(fan[pick].0);
    let (mut u, mut w) = (rng.gen::<f64>(), rng.gen::<f64>());
    if u + w > 1.0 {
        u = 1.0 - u;
        w = 1.0 - w;
    }
    Some(a + (b - a) * u + (c - a) * w)
}

fn combined_star_area(t: &Triangulation, verts: &[VertId]) -> f64 {
    let mut tris: Vec<TriId> = verts.iter().flat_map(|&v| t.fan(v)).map(|(tr, _)| tr).collect();
    tris.sort_unstable();
    tris.dedup();
    tris.iter().map(|&tr| t.tri_area(tr)).sum()
}

/// Draws a proposal from `strategy` for the current state. `eps` is the
/// current contraction length.
pub fn propose<R: Rng>(
    strategy: Strategy,
    t: &Triangulation,
    state: &StrategyState,
    ctx: &mut ProposalContext,
    rng: &mut R,
) -> Proposal {
    let eps = ctx.eps;
    let edit = match strategy {
        Strategy::DirectSingle => direct(t, ctx, state.lambda, 1, rng),
        Strategy::DirectGroup => direct(t, ctx, state.lambda, ctx.group_size(), rng),
        Strategy::ClusterSingle => cluster(t, ctx, state.lambda, 1, rng),
        Strategy::ClusterGroup => cluster(t, ctx, state.lambda, ctx.group_size(), rng),
        Strategy::ResampleSmall => resample(t, ctx, state.count(), |a| a < RESAMPLE_AREA_FACTOR * eps * eps, rng),
        Strategy::ResampleLarge => resample(t, ctx, state.count(), |a| a >= RESAMPLE_AREA_FACTOR * eps * eps, rng),
        Strategy::SwapContracted => swap_contracted(t, ctx, state.count(), rng),
        Strategy::ContractToNeighbor => contract_to_neighbor(t, ctx, state.count(), rng),
        Strategy::FlipEdges => flip_edges(t, ctx, state.count(), rng),
    };
    Proposal { strategy, edit }
}

fn direct<R: Rng>(t: &Triangulation, ctx: &ProposalContext, lambda: f64, n: usize, rng: &mut R) -> Option<Edit> {
    let m = ctx.movable.len();
    if m == 0 {
        return None;
    }
    let moves = sample(rng, m, n.min(m))
        .into_iter()
        .map(|i| {
            let v = ctx.movable[i];
            let eta = t.star_area(v).max(0.0).sqrt();
            let p = t.pos(v) + heavy_tailed_offset(rng) * (lambda * eta);
            (v, t.project_to_dof(v, p))
        })
        .collect();
    Some(Edit::Move(moves))
}

fn cluster<R: Rng>(t: &Triangulation, ctx: &ProposalContext, lambda: f64, groups: usize, rng: &mut R) -> Option<Edit> {
    let mut moves: Vec<(VertId, Point)> = Vec::new();
    let mut members = Vec::new();
    for _ in 0..groups {
        let c = ctx.random_movable(rng)?;
        let d = rng.gen_range(0.5 * ctx.eps..=5.0 * ctx.eps);
        ctx.grid.query_into(t.pos(c), d, &mut members);
        members.retain(|v| !moves.iter().any(|(m, _)| m == v));
        if members.is_empty() {
            continue;
        }
        members.sort_unstable();
        let eta = combined_star_area(t, &members).max(0.0).sqrt();
        let shift = heavy_tailed_offset(rng) * (lambda * eta);
        moves.extend(members.iter().map(|&v| (v, t.project_to_dof(v, t.pos(v) + shift))));
    }
    Some(Edit::Move(moves))
}

/// Up to `n` distinct movable vertices whose star area passes `accept`.
fn pick_by_area<R: Rng>(
    t: &Triangulation,
    ctx: &ProposalContext,
    n: usize,
    accept: impl Fn(f64) -> bool,
    rng: &mut R,
) -> Vec<VertId> {
    let mut out: Vec<VertId> = Vec::with_capacity(n);
    for _ in 0..(4 * n + 16) {
        if out.len() == n {
            break;
        }
        let Some(v) = ctx.random_movable(rng) else {
            break;
        };
        if !out.contains(&v) && accept(t.star_area(v)) {
            out.push(v);
        }
    }
    out
}

fn resample<R: Rng>(
    t: &Triangulation,
    ctx: &ProposalContext,
    n: usize,
    accept: impl Fn(f64) -> bool,
    rng: &mut R,
) -> Option<Edit> {
    let verts = pick_by_area(t, ctx, n, accept, rng);
    let moves: Vec<_> = verts
        .into_iter()
        .filter_map(|v| resample_in_star(t, v, rng).map(|p| (v, t.project_to_dof(v, p))))
        .collect();
    (!moves.is_empty()).then_some(Edit::Move(moves))
}

fn swap_contracted<R: Rng>(t: &Triangulation, ctx: &mut ProposalContext, n: usize, rng: &mut R) -> Option<Edit> {
    let l = rng.gen_range(0.2 * ctx.eps..=2.0 * ctx.eps);
    let mut moves: Vec<(VertId, Point)> = Vec::new();
    for _ in 0..(2 * n + 4) {
        if moves.len() == n {
            break;
        }
        let Some(v) = ctx.random_short(t, l, rng) else {
            break;
        };
        if moves.iter().any(|&(m, _)| m == v) {
            continue;
        }
        let nbrs = t.neighbors(v);
        let nb = nbrs[rng.gen_range(0..nbrs.len())];
        let p = uniform_in_disk(rng, t.pos(nb), l);
        moves.push((v, t.project_to_dof(v, p)));
    }
    (!moves.is_empty()).then_some(Edit::Move(moves))
}

/// Resamples vertices in their stars but keeps a new position only when it
/// toggles whether the vertex has an incident edge shorter than ε; otherwise
/// the vertex stays where it is.
fn contract_to_neighbor<R: Rng>(t: &Triangulation, ctx: &ProposalContext, n: usize, rng: &mut R) -> Option<Edit> {
    let verts = pick_by_area(t, ctx, n, |_| true, rng);
    if verts.is_empty() {
        return None;
    }
    let eps = ctx.eps;
    let moves = verts
        .into_iter()
        .map(|v| {
            let old = t.pos(v);
            let Some(p) = resample_in_star(t, v, rng).map(|p| t.project_to_dof(v, p)) else {
                return (v, old);
            };
            let nbrs = t.neighbors(v);
            let before = nbrs.iter().any(|&u| old.dist(t.pos(u)) < eps);
            let after = nbrs.iter().any(|&u| p.dist(t.pos(u)) < eps);
            (v, if before != after { p } else { old })
        })
        .collect();
    Some(Edit::Move(moves))
}

fn flip_edges<R: Rng>(t: &Triangulation, ctx: &ProposalContext, n: usize, rng: &mut R) -> Option<Edit> {
    if ctx.tris.is_empty() {
        return None;
    }
    let mut keys = Vec::new();
    for _ in 0..(4 * n + 16) {
        if keys.len() == n {
            break;
        }
        let tr = ctx.tris[rng.gen_range(0..ctx.tris.len())];
        let e = EdgeRef::new(tr, rng.gen_range(0..3));
        if t.twin(e).is_none() || t.edge_flag(e).is_constrained() {
            continue;
        }
        let k = t.edge_key(e);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    (!keys.is_empty()).then_some(Edit::Flips(keys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trimesh::{build_cdt, cdt_test_scene, Dof};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn controller_formula() {
        let mut s = StrategyState::new(Strategy::DirectSingle);
        s.lambda = 0.4;
        for i in 0..100 {
            s.record(i < 23);
        }
        assert!((adapt_lambda(&mut s) - 0.4).abs() < 1e-12);
        assert_eq!(s.attempted, 0);
        for i in 0..100 {
            s.record(i < 46);
        }
        assert!((adapt_lambda(&mut s) - 0.4 * 2f64.sqrt()).abs() < 1e-12);
        for _ in 0..99 {
            s.record(false);
        }
        assert!((adapt_lambda(&mut s) - 0.4 * 2f64.sqrt()).abs() < 1e-12, "window not complete");
        s.record(false);
        assert_eq!(adapt_lambda(&mut s), Strategy::DirectSingle.lambda_bounds().0);
    }

    #[test]
    fn fixed_only_gives_empty_proposals() {
        let t = crate::trimesh::build_cdt(&crate::Scene::in_unit_square("sq", "t", vec![])).unwrap();
        let mut ctx = ProposalContext::new(&t, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in Strategy::ALL {
            let p = propose(s, &t, &StrategyState::new(s), &mut ctx, &mut rng);
            if s == Strategy::FlipEdges {
                // the diagonal of the square is flippable even with no Steiner vertex
                continue;
            }
            assert!(p.is_noop(&t), "{s} produced {p:?}");
        }
    }

    #[test]
    fn constrained_vertices_stay_on_segment() {
        let t = build_cdt(&cdt_test_scene(5, 3)).unwrap().subdivide();
        let mut ctx = ProposalContext::new(&t, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut seen = 0;
        for s in Strategy::ALL {
            let mut st = StrategyState::new(s);
            st.lambda = st.strategy.lambda_bounds().1.min(3.0);
            for _ in 0..200 {
                let p = propose(s, &t, &st, &mut ctx, &mut rng);
                let Some(Edit::Move(m)) = p.edit else { continue };
                for (v, q) in m {
                    match t.dof(v) {
                        Dof::OnSegment(k) => {
                            seen += 1;
                            assert!(t.scene().segments[k as usize].distance_to(q) <= 1e-12);
                        }
                        Dof::Fixed => panic!("{s} moved a fixed vertex"),
                        Dof::Free => {}
                    }
                }
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn contract_to_neighbor_keeps_uncontracted_vertex() {
        // at a tiny ε a free vertex resampled in its star essentially never
        // lands within ε of a neighbour (a projected constrained vertex can
        // land on a segment endpoint, so only free ones are checked)
        let t = build_cdt(&cdt_test_scene(3, 4)).unwrap().subdivide();
        let mut ctx = ProposalContext::new(&t, 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let st = StrategyState::new(Strategy::ContractToNeighbor);
        let mut free = 0;
        for _ in 0..200 {
            let p = propose(Strategy::ContractToNeighbor, &t, &st, &mut ctx, &mut rng);
            let Some(Edit::Move(m)) = &p.edit else { panic!("no proposal") };
            for &(v, q) in m {
                if t.dof(v) == Dof::Free {
                    free += 1;
                    assert_eq!(q, t.pos(v));
                }
            }
        }
        assert!(free > 50);
    }

    #[test]
    fn pareto_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200_000;
        // P(x > s) = s^{-1/2} for the radius factor, so with r ~ sqrt(U):
        // P(r·x > 4) = E[(r/4)^{1/2}] = 0.5 · E[r^{1/2}] = 0.5 · 0.8
        let far = (0..n).filter(|_| heavy_tailed_offset(&mut rng).norm() > 4.0).count();
        let frac = far as f64 / n as f64;
        assert!((frac - 0.4).abs() < 0.01, "tail fraction {frac}");
    }
}
