//! Edge-length objective with fuzzy contraction of short edges and penalties
//! against badly conditioned triangles.

mod contract;
mod delta;

pub use contract::{is_contractible, Contractibility, NotContractible};
pub use delta::{apply_edit, delta_objective, undo_edit, Edit, EditUndo};
pub(crate) use delta::evaluate;


use crate::geometry::COLLINEARITY_KAPPA;
use crate::trimesh::{EdgeKey, EdgeRef, TriId, Triangulation};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// `cos(179°) + 1`: angles above 179° start to be penalized.
pub fn default_delta() -> f64 {
    179f64.to_radians().cos() + 1.0
}

pub const DEFAULT_EPS0: f64 = 1e-10;
pub const DEFAULT_MU_ANGLE: f64 = 1.0;
pub const DEFAULT_MU_MINLEN: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParams {
    /// Contraction length: edges shorter than this count as (partly) merged.
    pub eps: f64,
    /// Edges shorter than this are penalized.
    pub eps0: f64,
    /// Width of the angle-cosine ramp.
    pub delta: f64,
    pub mu_angle: f64,
    pub mu_minlen: f64,
    /// Collinearity critical value.
    pub kappa: f64,
    /// Also penalize sharp angles (used with fixed topology).
    pub polish_mode: bool,
    /// When false every edge weight is 1.
    pub fuzzy_enabled: bool,
}

impl ObjectiveParams {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            eps0: DEFAULT_EPS0,
            delta: default_delta(),
            mu_angle: DEFAULT_MU_ANGLE,
            mu_minlen: DEFAULT_MU_MINLEN,
            kappa: COLLINEARITY_KAPPA,
            polish_mode: false,
            fuzzy_enabled: true,
        }
    }

    /// Fixed-topology variant: no fuzzy weights, sharp angles penalized.
    pub fn polish(eps: f64) -> Self {
        Self {
            polish_mode: true,
            fuzzy_enabled: false,
            ..Self::new(eps)
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.eps0 > 0.0 && self.eps0 <= self.eps / 100.0) {
            return Err(Error::Config(format!(
                "eps0 = {} must be positive and at most eps/100 = {}",
                self.eps0,
                self.eps / 100.0
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.mu_angle >= 0.0 && self.mu_minlen >= 0.0) {
            return Err(Error::Config("penalty weights must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub w_contractible: f64,
    pub angle_penalty: f64,
    pub minlen_penalty: f64,
    pub f_total: f64,
}

/// Linear ramp from 1/2 at length 0 to 1 at length `eps` for contractible
/// edges; 1 otherwise.
#[inline]
pub fn contraction_factor(len: f64, contractible: bool, eps: f64) -> f64 {
    if contractible {
        0.5 + (len / eps).min(1.0) / 2.0
    } else {
        1.0
    }
}

/// Zero below 1/4, linear up to 1 at 1/2, one above.
#[inline]
pub fn multi_merge_correction(x: f64) -> f64 {
    if x < 0.25 {
        0.0
    } else if x <= 0.5 {
        4.0 * x - 1.0
    } else {
        1.0
    }
}

/// Weight of an edge given the product of its neighbours' contraction
/// factors. The correction multiplies the product so that an edge next to a
/// single merged edge counts half and one next to two or more counts zero.
#[inline]
pub fn weight_from_product(x: f64) -> f64 {
    x * multi_merge_correction(x)
}

/// Obtuse-angle penalty on an angle cosine; in polish mode sharp angles are
/// penalized symmetrically.
#[inline]
pub fn angle_cos_penalty(cos: f64, delta: f64, polish_mode: bool) -> f64 {
    let obtuse = (-1.0 + delta - cos).max(0.0) / delta;
    if polish_mode {
        obtuse + (cos - (1.0 - delta)).max(0.0) / delta
    } else {
        obtuse
    }
}

#[inline]
pub fn minlen_term(len: f64, eps0: f64) -> f64 {
    (eps0 - len).max(0.0) / eps0
}

/// Per-evaluation cache of contraction factors keyed by vertex pair.
pub(crate) struct FactorCache<'a> {
    t: &'a Triangulation,
    params: &'a ObjectiveParams,
    map: HashMap<EdgeKey, f64>,
}

impl<'a> FactorCache<'a> {
    pub(crate) fn new(t: &'a Triangulation, params: &'a ObjectiveParams) -> Self {
        Self {
            t,
            params,
            map: HashMap::new(),
        }
    }

    pub(crate) fn factor(&mut self, e: EdgeRef) -> f64 {
        let len = self.t.edge_length(e);
        if len >= self.params.eps {
            return 1.0;
        }
        let key = self.t.edge_key(e);
        if let Some(&c) = self.map.get(&key) {
            return c;
        }
        let ok = is_contractible(self.t, e, self.params) == Contractibility::Yes;
        let c = contraction_factor(len, ok, self.params.eps);
        self.map.insert(key, c);
        c
    }

    pub(crate) fn weight(&mut self, e: EdgeRef) -> f64 {
        if !self.params.fuzzy_enabled {
            return 1.0;
        }
        let t = self.t;
        let x: f64 = t.edge_neighbors(e).map(|n| self.factor(n)).product();
        weight_from_product(x)
    }
}

/// Fuzzy weight of one edge in `[0, 1]`.
pub fn edge_weight(t: &Triangulation, e: EdgeRef, params: &ObjectiveParams) -> f64 {
    FactorCache::new(t, params).weight(e)
}

pub fn contractible_weight(t: &Triangulation, params: &ObjectiveParams) -> f64 {
    let mut cache = FactorCache::new(t, params);
    t.edges().map(|e| cache.weight(e) * t.edge_length(e)).sum()
}

/// Penalty of the three corners of one triangle. Corners between two
/// constrained edges are skipped.
pub(crate) fn triangle_angle_penalty(t: &Triangulation, tri: TriId, params: &ObjectiveParams) -> f64 {
    let tr = t.tri(tri);
    let p = t.tri_points(tri);
    let mut sum = 0.0;
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        if tr.flags[j].is_constrained() && tr.flags[k].is_constrained() {
            continue;
        }
        let u = p[j] - p[i];
        let v = p[k] - p[i];
        let n = u.norm() * v.norm();
        if n == 0.0 {
            continue;
        }
        sum += angle_cos_penalty(u.dot(v) / n, params.delta, params.polish_mode);
    }
    sum
}

pub fn angle_penalty(t: &Triangulation, params: &ObjectiveParams) -> f64 {
    t.triangle_ids().map(|tri| triangle_angle_penalty(t, tri, params)).sum()
}

pub fn minlen_penalty(t: &Triangulation, params: &ObjectiveParams) -> f64 {
    t.edges().map(|e| minlen_term(t.edge_length(e), params.eps0)).sum()
}

pub fn objective(t: &Triangulation, params: &ObjectiveParams) -> ObjectiveBreakdown {
    let w = contractible_weight(t, params);
    let a = angle_penalty(t, params);
    let l = minlen_penalty(t, params);
    ObjectiveBreakdown {
        w_contractible: w,
        angle_penalty: a,
        minlen_penalty: l,
        f_total: w + params.mu_angle * a + params.mu_minlen * l,
    }
}

#[cfg(test)]
pub(crate) mod test_meshes;

#[cfg(test)]
mod tests {
    use super::test_meshes::*;
    use super::*;
    use crate::trimesh::{build_cdt, cdt_test_scene};
    use proptest::prelude::*;

    #[test]
    fn scalar_examples() {
        let eps = 0.2;
        assert_eq!(contraction_factor(0.0, true, eps), 0.5);
        assert_eq!(contraction_factor(eps, true, eps), 1.0);
        assert_eq!(contraction_factor(5.0, true, eps), 1.0);
        assert_eq!(contraction_factor(eps / 2.0, true, eps), 0.75);
        assert_eq!(contraction_factor(0.0, false, eps), 1.0);
        assert_eq!(multi_merge_correction(0.25), 0.0);
        assert_eq!(multi_merge_correction(0.375), 0.5);
        assert_eq!(multi_merge_correction(0.5), 1.0);
        let d = default_delta();
        assert!((d - 1.523e-4).abs() < 1e-7);
        assert_eq!(angle_cos_penalty(-1.0, d, false), 1.0);
        assert_eq!(angle_cos_penalty(0.3, d, false), 0.0);
        assert_eq!(angle_cos_penalty(1.0, d, true), 1.0);
        let c = 179.5f64.to_radians().cos();
        let expect = (179f64.to_radians().cos() - c) / d;
        let got = angle_cos_penalty(c, d, false);
        assert!((got - expect).abs() < 1e-9 && got > 0.0 && got < 1.0);
        assert_eq!(minlen_term(0.0, 1e-10), 1.0);
        assert_eq!(minlen_term(0.5e-10, 1e-10), 0.5);
        assert_eq!(minlen_term(1e-10, 1e-10), 0.0);
    }

    #[test]
    fn merged_cluster_weights() {
        let (t, ids) = cluster_mesh();
        let p = ObjectiveParams::new(0.1);
        let w = |a, b| edge_weight(&t, t.find_edge(a, b).unwrap(), &p);
        // edges beside one merged edge count half
        assert!((w(ids.x, ids.d) - 0.5).abs() < 1e-12);
        assert!((w(ids.z, ids.d) - 0.5).abs() < 1e-12);
        assert!((w(ids.x, ids.a) - 0.5).abs() < 1e-12);
        // an edge between two merged edges is dropped
        assert!(w(ids.y, ids.d).abs() < 1e-12);
        assert!(w(ids.y, ids.a).abs() < 1e-12);
        // edges away from the cluster are untouched
        assert!((w(ids.a, ids.b) - 1.0).abs() < 1e-12);
        assert!((w(ids.c, ids.d) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn breakdown_sums_parts() {
        let scene = cdt_test_scene(6, 3);
        let t = build_cdt(&scene).unwrap().subdivide();
        let p = ObjectiveParams::new(0.05);
        let b = objective(&t, &p);
        assert_eq!(b.w_contractible, contractible_weight(&t, &p));
        assert_eq!(b.angle_penalty, angle_penalty(&t, &p));
        assert_eq!(b.minlen_penalty, minlen_penalty(&t, &p));
        let sum = b.w_contractible + p.mu_angle * b.angle_penalty + p.mu_minlen * b.minlen_penalty;
        assert!((b.f_total - sum).abs() <= 1e-12 * sum.abs());
        let mut p0 = p;
        p0.mu_angle = 0.0;
        p0.mu_minlen = 0.0;
        assert_eq!(objective(&t, &p0).f_total, b.w_contractible);
    }

    #[test]
    fn fuzzy_off_gives_total_length() {
        let scene = cdt_test_scene(5, 9);
        let t = build_cdt(&scene).unwrap();
        let mut p = ObjectiveParams::new(10.0);
        p.fuzzy_enabled = false;
        assert!((contractible_weight(&t, &p) - t.total_edge_length()).abs() < 1e-12);
        let tiny = ObjectiveParams::new(1e-7);
        assert!((contractible_weight(&t, &tiny) - t.total_edge_length()).abs() < 1e-12);
    }

    #[test]
    fn params_check() {
        assert!(ObjectiveParams::new(0.1).check().is_ok());
        assert!(ObjectiveParams::new(1e-9).check().is_err());
        let mut p = ObjectiveParams::new(0.1);
        p.delta = 0.0;
        assert!(p.check().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn weights_bounded(seed in 0u64..1000, eps in 0.01f64..0.5) {
            let scene = cdt_test_scene(5, seed);
            let t = build_cdt(&scene).unwrap().subdivide();
            let p = ObjectiveParams::new(eps);
            let mut cache = FactorCache::new(&t, &p);
            for e in t.edges() {
                let c = cache.factor(e);
                prop_assert!((0.5..=1.0).contains(&c));
                let w = cache.weight(e);
                prop_assert!((0.0..=1.0).contains(&w));
            }
            prop_assert!(contractible_weight(&t, &p) <= t.total_edge_length() + 1e-12);
        }

        #[test]
        fn correction_monotone(a in 0f64..1.0, b in 0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(multi_merge_correction(lo) <= multi_merge_correction(hi));
            prop_assert!(weight_from_product(lo) <= weight_from_product(hi));
        }
    }
}
