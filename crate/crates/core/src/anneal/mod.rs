//! Simulated annealing over vertex positions and edge flips, followed by
//! contraction of the fuzzy topology and polishing.

mod config;
mod pipeline;
mod polish;
mod strategy;

pub use config::{AnnealConfig, StrategyFlags};
pub use pipeline::{full_pipeline, optimize, optimize_fixed_vertices, PipelineOutcome};
pub use polish::{
    contract_and_polish, contract_short_edges, greedy_flips, polish, PolishOptions, PolishOutcome, PolishRound,
};
pub use strategy::{
    adapt_lambda, heavy_tailed_offset, propose, Proposal, ProposalContext, Strategy, StrategyState, ADAPT_WINDOW,
    CONTROLLER_GAMMA, GROUP_FRACTION, TARGET_ACCEPTANCE,
};

use crate::objective::{apply_edit, evaluate, objective, ObjectiveParams};
use crate::trimesh::Triangulation;
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::time::{Duration, Instant};

/// Metropolis acceptance: always for `Δf ≤ 0`, otherwise with probability
/// `exp(−Δf/T)`.
pub fn metropolis_accept<R: Rng + ?Sized>(df: f64, temperature: f64, rng: &mut R) -> bool {
    debug_assert!(temperature > 0.0);
    if df <= 0.0 {
        return true;
    }
    rng.gen::<f64>() < (-df / temperature).exp()
}

/// Joint geometric cooling of the temperature and the contraction length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub t_init: f64,
    pub t_final: f64,
    pub eps_init: f64,
    pub eps_final: f64,
    pub levels: usize,
    pub steps_per_level: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            t_init: 0.02,
            t_final: 1e-4,
            eps_init: 0.05,
            eps_final: 1e-4,
            levels: 200,
            steps_per_level: 2000,
        }
    }
}

impl Schedule {
    /// Equal endpoints are accepted and give a constant level.
    pub fn check(&self) -> Result<()> {
        let ok = |a: f64, b: f64| a.is_finite() && b.is_finite() && b > 0.0 && a >= b;
        if !ok(self.t_init, self.t_final) {
            return Err(Error::Config(format!("temperatures {} -> {}", self.t_init, self.t_final)));
        }
        if !ok(self.eps_init, self.eps_final) {
            return Err(Error::Config(format!("contraction lengths {} -> {}", self.eps_init, self.eps_final)));
        }
        if self.levels == 0 {
            return Err(Error::Config("schedule needs at least one level".into()));
        }
        Ok(())
    }

    fn interp(&self, a: f64, b: f64, level: usize) -> f64 {
        if self.levels <= 1 {
            return a;
        }
        let s = level.min(self.levels - 1) as f64 / (self.levels - 1) as f64;
        a * (b / a).powf(s)
    }

    /// Temperature and contraction length at `level`.
    pub fn level(&self, level: usize) -> (f64, f64) {
        (
            self.interp(self.t_init, self.t_final, level),
            self.interp(self.eps_init, self.eps_final, level),
        )
    }

    /// Per-level decay factor of the temperature.
    pub fn temperature_decay(&self) -> f64 {
        self.level(1).0 / self.t_init
    }

    pub fn total_steps(&self) -> u64 {
        self.levels as u64 * self.steps_per_level
    }
}

/// Limits on a run in addition to the schedule.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Budget {
    pub max_steps: Option<u64>,
    pub max_time: Option<Duration>,
}

impl Budget {
    pub fn unlimited() -> Self {
        Self::default()
    }

    fn exhausted(&self, steps: u64, start: Instant) -> bool {
        self.max_steps.is_some_and(|m| steps >= m) || self.max_time.is_some_and(|m| start.elapsed() >= m)
    }
}

/// Record of one temperature level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelLog {
    pub level: usize,
    pub temperature: f64,
    pub eps: f64,
    pub f: f64,
    pub best_f: f64,
    /// Acceptance rate of each strategy during the level.
    pub acceptance: Vec<(Strategy, f64)>,
}

impl fmt::Display for LevelLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "level {} T={:.4e} eps={:.4e} f={:.6} best={:.6}",
            self.level, self.temperature, self.eps, self.f, self.best_f
        )?;
        for (s, a) in &self.acceptance {
            write!(f, " {s}={a:.3}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AnnealOutcome {
    /// State after the last step.
    pub last: Triangulation,
    /// Lowest-objective state seen at the end of a level (or the input),
    /// scored at the schedule's final contraction length.
    pub best: Triangulation,
    pub best_f: f64,
    pub levels: Vec<LevelLog>,
    pub strategies: Vec<StrategyState>,
    pub steps: u64,
    pub budget_exhausted: bool,
}

/// Hook invoked after every accepted step; used by tests to inspect states.
pub type AcceptHook<'a> = &'a mut dyn FnMut(&Triangulation);

/// Runs the annealing chain on `t`.
///
/// Each level draws `steps_per_level` proposals at that level's temperature
/// and contraction length. Strategies take turns so that their cumulative
/// evaluation work stays equal: the strategy with the least work so far goes
/// next. `params.eps` is overridden by the schedule.
pub fn run_annealing(
    t: Triangulation,
    schedule: &Schedule,
    strategies: &[Strategy],
    params: &ObjectiveParams,
    budget: &Budget,
    rng: &mut ChaCha8Rng,
) -> Result<AnnealOutcome> {
    run_annealing_with_hook(t, schedule, strategies, params, budget, rng, None)
}

pub fn run_annealing_with_hook(
    mut t: Triangulation,
    schedule: &Schedule,
    strategies: &[Strategy],
    params: &ObjectiveParams,
    budget: &Budget,
    rng: &mut ChaCha8Rng,
    mut hook: Option<AcceptHook<'_>>,
) -> Result<AnnealOutcome> {
    schedule.check()?;
    params.check()?;
    let start = Instant::now();
    let mut states: Vec<StrategyState> = strategies.iter().map(|&s| StrategyState::new(s)).collect();
    let score_params = ObjectiveParams {
        eps: schedule.eps_final,
        ..params.clone()
    };
    let mut best = t.clone();
    let mut best_f = objective(&t, &score_params).f_total;
    let mut levels = Vec::with_capacity(schedule.levels);
    let mut steps = 0u64;
    let mut exhausted = false;
    let mut p = params.clone();
    let (_, eps0) = schedule.level(0);
    let mut ctx = ProposalContext::new(&t, eps0);

    'levels: for level in 0..schedule.levels {
        let (temp, eps) = schedule.level(level);
        p.eps = eps;
        p.check()?;
        ctx.set_eps(&t, eps);
        let before: Vec<(u64, u64)> = states.iter().map(|s| (s.total_accepted, s.total_attempted)).collect();
        for _ in 0..schedule.steps_per_level {
            if states.is_empty() {
                break;
            }
            if budget.exhausted(steps, start) {
                exhausted = true;
                break 'levels;
            }
            steps += 1;
            let i = (0..states.len()).min_by_key(|&i| (states[i].work, i)).unwrap();
            let clock = Instant::now();
            let prop = propose(states[i].strategy, &t, &states[i], &mut ctx, rng);
            let mut work = 1;
            let mut accepted = false;
            if !prop.is_noop(&t) {
                let edit = prop.edit.expect("non-empty proposal");
                if let Some(ev) = evaluate(&mut t, &edit, &p, true) {
                    work = ev.work;
                    if metropolis_accept(ev.delta, temp, rng) {
                        apply_edit(&mut t, &edit).expect("evaluated edit must apply");
                        ctx.accepted(&t, &edit);
                        accepted = true;
                        if let Some(h) = hook.as_mut() {
                            h(&t);
                        }
                    }
                }
            }
            let st = &mut states[i];
            st.work += work as u64;
            st.time += clock.elapsed();
            st.record(accepted);
            adapt_lambda(st);
        }
        let f = objective(&t, &p).f_total;
        let scored = if p.eps == score_params.eps { f } else { objective(&t, &score_params).f_total };
        if scored < best_f {
            best_f = scored;
            best = t.clone();
        }
        let acceptance = states
            .iter()
            .zip(&before)
            .map(|(s, &(a0, n0))| {
                let n = s.total_attempted - n0;
                (s.strategy, if n == 0 { 0.0 } else { (s.total_accepted - a0) as f64 / n as f64 })
            })
            .collect();
        let log = LevelLog {
            level,
            temperature: temp,
            eps,
            f,
            best_f,
            acceptance,
        };
        log::info!("{log}");
        levels.push(log);
    }
    if exhausted {
        let scored = objective(&t, &score_params).f_total;
        if scored < best_f {
            best_f = scored;
            best = t.clone();
        }
    }
    Ok(AnnealOutcome {
        last: t,
        best,
        best_f,
        levels,
        strategies: states,
        steps,
        budget_exhausted: exhausted,
    })
}
