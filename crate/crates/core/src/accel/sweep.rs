//! Choosing the node cost parameter of a structure by measurement.

use rayon::prelude::*;

pub const DEFAULT_CT_GRID: [f64; 7] = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

#[derive(Debug, Clone)]
pub struct ParamSweep<S> {
    pub best: S,
    pub best_c_t: f64,
    /// Total operation count for every grid value, in grid order.
    pub totals: Vec<(f64, u64)>,
}

impl<S> ParamSweep<S> {
    pub fn best_total(&self) -> u64 {
        self.totals.iter().map(|&(_, t)| t).min().unwrap_or(0)
    }
}

/// Builds one structure per grid value, scores each with `total_ops` (the
/// summed operation count over the measurement rays) and keeps the cheapest.
/// Ties go to the earlier grid value.
pub fn sweep_structure_params<S, B, C>(grid: &[f64], build: B, total_ops: C) -> ParamSweep<S>
where
    S: Send,
    B: Fn(f64) -> S + Sync,
    C: Fn(&S) -> u64 + Sync,
{
    assert!(!grid.is_empty(), "empty parameter grid");
    let built: Vec<(f64, S, u64)> = grid
        .par_iter()
        .map(|&c| {
            let s = build(c);
            let ops = total_ops(&s);
            (c, s, ops)
        })
        .collect();
    let totals: Vec<(f64, u64)> = built.iter().map(|(c, _, o)| (*c, *o)).collect();
    let (best_c_t, best, _) = built
        .into_iter()
        .enumerate()
        .min_by_key(|(i, (_, _, o))| (*o, *i))
        .map(|(_, b)| b)
        .expect("nonempty grid");
    ParamSweep { best, best_c_t, totals }
}
