//! Suppressed mark profile around the ball B_in = {‖x‖ ≤ r_k}: the curve
//! f_γ, classification of vertices against it, the deterministic bound on
//! edges crossing ∂B_in below the curve, and Monte Carlo counts.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::exponents::xi_and_gamma;
use crate::model::{dist_pow_d, Connector, Ext, MarkedVertex, ModelParams};
use crate::rng;
use crate::sampler::{default_method, for_each_edge, CoinScheme, VertexTable};

pub const DEFAULT_RHO: f64 = 0.1;
const TAG_PROFILE: u64 = 0x7072_6f66;
const TAG_CROSS: u64 = 0x6372_6f73;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("gamma = {gamma} exceeds 1/(sigma+1) = {limit}; the crossing bound is not claimed there")]
    GammaTooLarge { gamma: f64, limit: f64 },
    #[error("r_k = {r_k} is below C_beta = {c_beta}")]
    RadiusTooSmall { r_k: f64, c_beta: f64 },
    #[error("invalid input: {0}")]
    Input(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SuppressedProfile {
    pub gamma: f64,
    pub r_k: f64,
    pub c_beta: f64,
    pub d: usize,
}

impl SuppressedProfile {
    pub fn new(gamma: f64, r_k: f64, beta: f64, d: usize) -> Self {
        SuppressedProfile { gamma, r_k, c_beta: (2.0 * beta).powf(1.0 / d as f64), d }
    }

    /// Profile for the ball of radius (k/ρ)^{1/d} √d.
    pub fn for_k(params: &ModelParams, gamma: f64, k: f64, rho: f64) -> Self {
        Self::new(gamma, radius_for_k(k, rho, params.d), params.beta, params.d)
    }

    /// f_γ(z) for z the distance to ∂B_in.
    pub fn f(&self, z: f64) -> f64 {
        f_gamma(z, self)
    }

    /// Value of the profile above position x.
    pub fn at(&self, x: &[f64]) -> f64 {
        self.f((norm(x) - self.r_k).abs())
    }
}

/// r_k = (k/ρ)^{1/d} √d
pub fn radius_for_k(k: f64, rho: f64, d: usize) -> f64 {
    (k / rho).powf(1.0 / d as f64) * (d as f64).sqrt()
}

pub fn f_gamma(z: f64, p: &SuppressedProfile) -> f64 {
    let d = p.d as f64;
    if z <= p.c_beta {
        1.0
    } else if z <= p.r_k {
        (z / p.c_beta).powf(p.gamma * d)
    } else {
        (z / p.c_beta).powf(d) * (p.r_k / p.c_beta).powf(-d * (1.0 - p.gamma))
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    InBelow,
    InAbove,
    OutBelow,
    OutAbove,
}

impl Side {
    pub fn is_in(self) -> bool {
        matches!(self, Side::InBelow | Side::InAbove)
    }

    pub fn is_above(self) -> bool {
        matches!(self, Side::InAbove | Side::OutAbove)
    }
}

/// Equality goes to "in" (‖x‖ = r_k) and to "below" (w = f).
pub fn side_of(pos: &[f64], mark: f64, p: &SuppressedProfile) -> Side {
    let r = norm(pos);
    let above = mark > p.f((r - p.r_k).abs());
    match (r <= p.r_k, above) {
        (true, false) => Side::InBelow,
        (true, true) => Side::InAbove,
        (false, false) => Side::OutBelow,
        (false, true) => Side::OutAbove,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub in_below: Vec<usize>,
    pub in_above: Vec<usize>,
    pub out_below: Vec<usize>,
    pub out_above: Vec<usize>,
}

impl Classification {
    pub fn total(&self) -> usize {
        self.in_below.len() + self.in_above.len() + self.out_below.len() + self.out_above.len()
    }
}

pub fn classify_against_profile(vertices: &[MarkedVertex], p: &SuppressedProfile) -> Classification {
    let mut c = Classification::default();
    for (i, v) in vertices.iter().enumerate() {
        match side_of(&v.pos, v.mark, p) {
            Side::InBelow => c.in_below.push(i),
            Side::InAbove => c.in_above.push(i),
            Side::OutBelow => c.out_below.push(i),
            Side::OutAbove => c.out_above.push(i),
        }
    }
    c
}

/// γ_★ of the parameters, the exponent of the optimally suppressed profile.
pub fn gamma_star(params: &ModelParams) -> f64 {
    xi_and_gamma(params).gamma_star
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossBoundaryReport {
    pub trials: u64,
    pub max_prob: f64,
    /// p 2^{−α}, or 0 for α = ∞
    pub prob_bound: f64,
    pub max_ratio: f64,
    pub prob_violations: u64,
    /// pairs with β κ / ‖x_u − x_v‖^d > 1/2
    pub ratio_violations: u64,
}

impl CrossBoundaryReport {
    pub fn passed(&self) -> bool {
        self.prob_violations == 0 && self.ratio_violations == 0
    }
}

/// Draws a point at distance z from ∂B_in, inside or outside, with a uniform
/// direction.
fn point_at(z: f64, inside: bool, p: &SuppressedProfile, r: &mut impl Rng) -> Vec<f64> {
    let radius = if inside { p.r_k - z } else { p.r_k + z };
    let mut dir: Vec<f64> = (0..p.d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
    let len = norm(&dir);
    if len == 0.0 {
        dir = vec![0.0; p.d];
        dir[0] = 1.0;
    } else {
        dir.iter_mut().for_each(|x| *x /= len);
    }
    dir.iter().map(|x| x * radius).collect()
}

/// Mark at or below f: half the draws sit exactly on the curve, the rest
/// uniform in [1, f].
fn mark_below(f: f64, r: &mut impl Rng) -> f64 {
    if r.random::<bool>() {
        f
    } else {
        1.0 + (f - 1.0) * r.random::<f64>()
    }
}

/// Random admissible pairs: u inside B_in, v outside, both at least C_β from
/// ∂B_in and with marks at most f_γ. Distances of v reach 4 r_k, covering
/// both pieces of the curve outside.
pub fn cross_boundary_edge_bound_check(
    p: &SuppressedProfile,
    params: &ModelParams,
    trials: u64,
    seed: u64,
) -> Result<CrossBoundaryReport, ProfileError> {
    let limit = 1.0 / (params.sigma() + 1.0);
    if p.gamma > limit * (1.0 + 1e-12) {
        return Err(ProfileError::GammaTooLarge { gamma: p.gamma, limit });
    }
    if p.r_k < p.c_beta {
        return Err(ProfileError::RadiusTooSmall { r_k: p.r_k, c_beta: p.c_beta });
    }
    if p.d != params.d {
        return Err(ProfileError::Input("profile and model dimensions differ".into()));
    }
    let conn = Connector::new(params);
    let prob_bound = match params.alpha() {
        Ext::Finite(a) => params.p * 2f64.powf(-a),
        Ext::Inf => 0.0,
    };
    let mut rep = CrossBoundaryReport { trials, max_prob: 0.0, prob_bound, max_ratio: 0.0, prob_violations: 0, ratio_violations: 0 };
    let mut r = rng::stream(seed, TAG_CROSS, 0);
    for _ in 0..trials {
        let zu = p.c_beta + (p.r_k - p.c_beta) * r.random::<f64>();
        let zv = p.c_beta + (4.0 * p.r_k - p.c_beta) * r.random::<f64>();
        let xu = point_at(zu, true, p, &mut r);
        let xv = point_at(zv, false, p, &mut r);
        let wu = mark_below(p.f(zu), &mut r);
        let wv = mark_below(p.f(zv), &mut r);
        let rd = dist_pow_d(&xu, &xv, p.d);
        let ratio = params.beta * conn.kernel(wu, wv) / rd;
        let prob = conn.prob(rd, wu, wv);
        rep.max_ratio = rep.max_ratio.max(ratio);
        rep.max_prob = rep.max_prob.max(prob);
        if ratio > 0.5 * (1.0 + 1e-9) {
            rep.ratio_violations += 1;
        }
        if prob > prob_bound * (1.0 + 1e-9) {
            rep.prob_violations += 1;
        }
    }
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileCountRow {
    pub k: f64,
    pub rep: u32,
    pub count_above: u64,
    pub edges_below_cross: u64,
}

/// Settings of [`profile_count_slopes`]; vertices are sampled in the box of
/// half side `outer * r_k` around the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileCountConfig {
    pub rho: f64,
    pub outer: f64,
}

impl Default for ProfileCountConfig {
    fn default() -> Self {
        ProfileCountConfig { rho: DEFAULT_RHO, outer: 2.0 }
    }
}

/// Growth exponents the two profile counts are compared with:
/// max(1 − γ(τ−1), (d−1)/d) for vertices above, and
/// max(2 − α + γ ξ_★, (d−1)/d) for crossing edges below (just (d−1)/d when α = ∞).
pub fn profile_count_targets(params: &ModelParams, gamma: f64) -> (f64, f64) {
    let surface = (params.d as f64 - 1.0) / params.d as f64;
    let above = match params.tau.finite() {
        Some(t) => 1.0 - gamma * (t - 1.0),
        None if gamma > 0.0 => f64::NEG_INFINITY,
        None => 1.0,
    };
    let xg = xi_and_gamma(params);
    let edges = match (params.alpha().finite(), xg.xi_star) {
        (Some(a), Some(xs)) => 2.0 - a + gamma * xs,
        _ => f64::NEG_INFINITY,
    };
    (above.max(surface), edges.max(surface))
}

pub fn profile_count_slopes(
    params: &ModelParams,
    k_grid: &[f64],
    gamma: f64,
    reps: u32,
    seed: u64,
    cfg: &ProfileCountConfig,
) -> Result<Vec<ProfileCountRow>, ProfileError> {
    if reps < 30 {
        return Err(ProfileError::Input(format!("reps = {reps}, need at least 30")));
    }
    if k_grid.is_empty() || k_grid.iter().any(|&k| !(k > 0.0)) || k_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ProfileError::Input("k grid must be positive and increasing".into()));
    }
    if !(gamma >= 0.0) || !(cfg.rho > 0.0) || !(cfg.outer > 1.0) {
        return Err(ProfileError::Input("need gamma >= 0, rho > 0, outer > 1".into()));
    }
    let jobs: Vec<(usize, u32)> = (0..k_grid.len()).flat_map(|i| (0..reps).map(move |r| (i, r))).collect();
    let rows = jobs
        .into_par_iter()
        .map(|(i, rep)| {
            let k = k_grid[i];
            let s = rng::rep_seed(seed ^ TAG_PROFILE, i as u64, rep as u64);
            let (count_above, edges_below_cross) = profile_counts_once(params, k, gamma, cfg, s);
            ProfileCountRow { k, rep, count_above, edges_below_cross }
        })
        .collect();
    Ok(rows)
}

/// One replicate: (|V_{>M_γ}|, |E(V^in_≤, V^out_≤)|).
pub fn profile_counts_once(params: &ModelParams, k: f64, gamma: f64, cfg: &ProfileCountConfig, seed: u64) -> (u64, u64) {
    let prof = SuppressedProfile::for_k(params, gamma, k, cfg.rho);
    let n = (2.0 * cfg.outer * prof.r_k).powi(params.d as i32);
    let table = VertexTable::sample(params, n, seed);
    let mut below = VertexTable::new(params.d);
    let mut inside = Vec::new();
    let mut above = 0u64;
    for i in 0..table.len() {
        let side = side_of(table.pos(i), table.marks[i], &prof);
        if side.is_above() {
            above += 1;
        } else {
            below.push(table.pos(i), table.marks[i], table.ids[i]);
            inside.push(side.is_in());
        }
    }
    // ids of `below` are increasing, so an id maps back by binary search
    let idx = |id: u32| below.ids.binary_search(&id).expect("id of a below vertex");
    let mut cross = 0u64;
    for_each_edge(&below, params, n, seed, default_method(below.len()), CoinScheme::default_for(params), &mut |u, v| {
        if inside[idx(u)] != inside[idx(v)] {
            cross += 1;
        }
    });
    (above, cross)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_pieces() {
        let p = SuppressedProfile::new(0.5, 100.0, 2.0, 1);
        assert_eq!(p.c_beta, 4.0);
        assert_eq!(p.f(2.0), 1.0);
        assert!((p.f(16.0) - 2.0).abs() < 1e-12);
        assert!((p.f(400.0) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn continuity_at_breaks() {
        let p = SuppressedProfile::new(0.37, 250.0, 3.0, 2);
        let eps = 1e-9;
        assert!((p.f(p.c_beta + eps) - 1.0).abs() < 1e-8);
        let left = (p.r_k / p.c_beta).powf(p.gamma * 2.0);
        assert!((p.f(p.r_k) - left).abs() < 1e-12 * left);
        assert!((p.f(p.r_k + eps) - left).abs() < 1e-7 * left);
    }

    #[test]
    fn classification_examples() {
        let p = SuppressedProfile::new(0.4, 50.0, 1.0, 2);
        assert_eq!(side_of(&[0.0, 0.0], 1.0, &p), Side::InBelow);
        assert_eq!(side_of(&[50.0, 0.0], 2.0, &p), Side::InAbove);
        assert_eq!(side_of(&[50.0, 0.0], 1.0, &p), Side::InBelow);
        assert_eq!(side_of(&[0.0, -60.0], 1.0, &p), Side::OutBelow);
    }

    #[test]
    fn threshold_cross_pairs_never_connect() {
        let m = ModelParams::reference().with_alpha(Ext::Inf);
        let g = gamma_star(&m);
        let p = SuppressedProfile::for_k(&m, g, 200.0, DEFAULT_RHO);
        let rep = cross_boundary_edge_bound_check(&p, &m, 20_000, 3).unwrap();
        assert_eq!(rep.max_prob, 0.0);
        assert!(rep.passed());
    }

    #[test]
    fn boundary_hugging_pair() {
        for d in 1..=3 {
            let beta = 1.7;
            let p = SuppressedProfile::new(0.3, 100.0, beta, d);
            let mut xu = vec![0.0; d];
            let mut xv = vec![0.0; d];
            xu[0] = p.r_k - p.c_beta;
            xv[0] = p.r_k + p.c_beta;
            let ratio = beta * 1.0 / dist_pow_d(&xu, &xv, d);
            assert!((ratio - 2f64.powi(-(d as i32) - 1)).abs() < 1e-12);
            assert!(ratio <= 0.5);
        }
    }

    #[test]
    fn gamma_above_limit_rejected() {
        let m = ModelParams::reference();
        let p = SuppressedProfile::for_k(&m, 0.6, 100.0, DEFAULT_RHO);
        assert!(matches!(cross_boundary_edge_bound_check(&p, &m, 10, 0), Err(ProfileError::GammaTooLarge { .. })));
    }

    #[test]
    fn counts_constant_marks() {
        // τ = ∞: nothing exceeds f ≥ 1 except marks on the collar, which are
        // all exactly 1 = f, so below; above-count is zero
        let m = ModelParams::reference().with_tau(Ext::Inf).with_alpha(Ext::Inf).with_d(2);
        let (above, _) = profile_counts_once(&m, 64.0, 0.5, &ProfileCountConfig::default(), 1);
        assert_eq!(above, 0);
    }

    #[test]
    fn cross_edges_match_direct_count() {
        let m = ModelParams::reference();
        let cfg = ProfileCountConfig::default();
        let k = 20.0;
        let seed = 11;
        let (above, cross) = profile_counts_once(&m, k, gamma_star(&m), &cfg, seed);
        // recount from the full graph
        let prof = SuppressedProfile::for_k(&m, gamma_star(&m), k, cfg.rho);
        let n = (2.0 * cfg.outer * prof.r_k).powi(1);
        let t = VertexTable::sample(&m, n, seed);
        let vs = t.to_vertices();
        let g = crate::sampler::build_graph(vs.clone(), &m, n, seed, None);
        let sides: Vec<Side> = vs.iter().map(|v| side_of(&v.pos, v.mark, &prof)).collect();
        let expect = g
            .edges
            .iter()
            .filter(|&&(u, v)| {
                let (a, b) = (sides[u as usize], sides[v as usize]);
                !a.is_above() && !b.is_above() && a.is_in() != b.is_in()
            })
            .count() as u64;
        assert_eq!(above, sides.iter().filter(|s| s.is_above()).count() as u64);
        assert_eq!(cross, expect);
    }

    proptest! {
        #[test]
        fn monotone_in_z(g in 0.0f64..1.0, z1 in 0.0f64..1000.0, dz in 0.0f64..500.0, beta in 0.1f64..5.0, d in 1usize..4) {
            let p = SuppressedProfile::new(g, 300.0, beta, d);
            prop_assert!(p.f(z1 + dz) >= p.f(z1) * (1.0 - 1e-12));
            prop_assert!(p.f(z1) >= 1.0);
        }

        #[test]
        fn increasing_in_gamma_on_middle_piece(g1 in 0.0f64..1.0, dg in 0.0f64..1.0, t in 0.0f64..1.0, d in 1usize..4) {
            let (p1, p2) = (SuppressedProfile::new(g1, 300.0, 1.0, d), SuppressedProfile::new(g1 + dg, 300.0, 1.0, d));
            let z = p1.c_beta + t * (p1.r_k - p1.c_beta);
            prop_assert!(p1.f(z) <= p2.f(z) * (1.0 + 1e-12));
        }

        #[test]
        fn partition_is_exhaustive(seed in 0u64..200) {
            let m = ModelParams::reference().with_d(2);
            let vs = crate::sampler::sample_vertices(&m, 400.0, seed);
            let p = SuppressedProfile::new(0.3, 8.0, 1.0, 2);
            let c = classify_against_profile(&vs, &p);
            prop_assert_eq!(c.total(), vs.len());
            let mut all: Vec<usize> = c.in_below.iter().chain(&c.in_above).chain(&c.out_below).chain(&c.out_above).copied().collect();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), vs.len());
        }
    }
    #[test]
    fn count_targets_at_reference() {
        let m = ModelParams::reference();
        let g = gamma_star(&m);
        let (a, e) = profile_count_targets(&m, g);
        assert!((a - 0.5).abs() < 1e-12, "{a}");
        assert!((e - 0.5).abs() < 1e-12, "{e}");
        let (a0, _) = profile_count_targets(&m, 0.0);
        assert_eq!(a0, 1.0);
    }
}
