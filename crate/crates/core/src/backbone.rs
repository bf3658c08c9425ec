//! Backbone of the mark band [w_hh, 2 w_hh): subbox tessellation of Λ_{n'},
//! the constants C₁, w_hh, s_k, r_k, the event A_bb, the sets S(u) of nearby
//! backbone vertices and greedy mark-increasing paths.

use std::f64::consts::LN_2;

use serde::Serialize;
use thiserror::Error;

use crate::components::UnionFind;
use crate::exponents::{gamma_hh, zeta_hh};
use crate::model::{connection_prob, Ext, ModelParams};
use crate::sampler::{build_graph_from_table, half_width, SpatialGraph, VertexTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackboneError {
    #[error("backbone regime needs zeta_hh > 0 (tau < 2 + sigma), got zeta_hh = {0}")]
    Regime(f64),
    #[error("k = {k} must satisfy 0 < k <= n = {n}")]
    Volume { k: f64, n: f64 },
    #[error("event A_bb fails, no backbone")]
    NoBackbone,
}

/// λ with survival probability 1/2 for Poisson(λ) offspring: 1/2 = e^{-λ/2}.
pub fn lambda_star_half() -> f64 {
    2.0 * LN_2
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneParams {
    pub d: usize,
    pub k: f64,
    pub n: f64,
    /// subboxes per side, ⌊(n/k)^{1/d}⌋
    pub per_side: usize,
    pub n_prime: f64,
    pub c1: f64,
    pub gamma_hh: f64,
    pub zeta_hh: f64,
    pub w_hh: f64,
    pub s_k: f64,
    /// r_k = 1 − 2^{−1/s_k}
    pub r_k_conn: f64,
    pub lambda_star_half: f64,
}

impl BackboneParams {
    pub fn num_boxes(&self) -> usize {
        self.per_side.pow(self.d as u32)
    }

    pub fn side(&self) -> f64 {
        self.k.powf(1.0 / self.d as f64)
    }

    /// ⌈s_k⌉, the size of every S(u) and the per-box requirement of A_bb.
    /// Values within 1e-9 relative above an integer round down to it.
    pub fn s_count(&self) -> usize {
        (self.s_k * (1.0 - 1e-9)).ceil().max(1.0) as usize
    }

    /// 2√d k^{1/d}
    pub fn reach(&self) -> f64 {
        2.0 * (self.d as f64).sqrt() * self.side()
    }

    pub fn grid(&self) -> SubboxGrid {
        SubboxGrid::new(self.d, self.per_side, self.side())
    }
}

/// C₁ alone; defined for any finite τ, whether or not ζ_hh > 0.
pub fn c1_constant(params: &ModelParams) -> Option<f64> {
    let t = params.tau.finite()?;
    Some(c1_raw(params, t))
}

fn c1(params: &ModelParams) -> Result<(f64, f64, f64, f64), BackboneError> {
    let (tau, alpha, sigma) = (params.tau, params.alpha(), params.sigma());
    let zhh = zeta_hh(tau, alpha, sigma);
    let t = match tau {
        Ext::Finite(t) if zhh > 0.0 => t,
        _ => return Err(BackboneError::Regime(zhh)),
    };
    Ok((c1_raw(params, t), t, gamma_hh(tau, alpha, sigma), zhh))
}

fn c1_raw(params: &ModelParams, t: f64) -> f64 {
    let (alpha, sigma) = (params.alpha(), params.sigma());
    let d = params.d as f64;
    let beta = params.beta;
    match alpha {
        Ext::Finite(a) => {
            let lhs = (params.p / 16.0) * beta.powf(a) * 2f64.powf(-a * d) * d.powf(-a * d / 2.0);
            let e = ((1.0 + sigma) * a - (t - 1.0)) / (t - 1.0);
            (lhs / LN_2.max(lambda_star_half())).powf(1.0 / e)
        }
        Ext::Inf => (beta * d.powf(-d / 2.0) * 2f64.powf(-d - 2.0 * sigma)).powf((t - 1.0) / (1.0 + sigma)),
    }
}

pub fn backbone_constants(params: &ModelParams, k: f64, n: f64) -> Result<BackboneParams, BackboneError> {
    if !(k > 0.0 && k <= n) {
        return Err(BackboneError::Volume { k, n });
    }
    let (c, t, ghh, zhh) = c1(params)?;
    let d = params.d;
    let mut per_side = (n / k).powf(1.0 / d as f64).floor() as usize;
    // guard against (n/k)^{1/d} landing just below an integer
    if ((per_side + 1) as f64).powi(d as i32) * k <= n {
        per_side += 1;
    }
    let w_hh = c.powf(-1.0 / (t - 1.0)) * k.powf(ghh);
    let s_k = k * w_hh.powf(-(t - 1.0)) / 16.0;
    Ok(BackboneParams {
        d,
        k,
        n,
        per_side,
        n_prime: k * (per_side as f64).powi(d as i32),
        c1: c,
        gamma_hh: ghh,
        zeta_hh: zhh,
        w_hh,
        s_k,
        r_k_conn: 1.0 - 2f64.powf(-1.0 / s_k),
        lambda_star_half: lambda_star_half(),
    })
}

/// Smallest k with s_k ≥ `target`.
pub fn k_for_sk(params: &ModelParams, target: f64) -> Result<f64, BackboneError> {
    let (c, t, ghh, zhh) = c1(params)?;
    let s_k = |k: f64| k * (c.powf(-1.0 / (t - 1.0)) * k.powf(ghh)).powf(-(t - 1.0)) / 16.0;
    let mut k = (16.0 * target / c).powf(1.0 / zhh);
    while s_k(k) < target {
        k *= 1.0 + 1e-12;
    }
    Ok(k)
}

// ---------------------------------------------------------------- tessellation

/// Boustrophedon order of the `per_side`^d subboxes of Λ_{n'}.
#[derive(Clone, Debug, PartialEq)]
pub struct SubboxGrid {
    pub d: usize,
    pub per_side: usize,
    pub side: f64,
    /// half side of Λ_{n'}
    pub half: f64,
}

impl SubboxGrid {
    pub fn new(d: usize, per_side: usize, side: f64) -> Self {
        SubboxGrid { d, per_side, side, half: per_side as f64 * side / 2.0 }
    }

    pub fn len(&self) -> usize {
        self.per_side.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid coordinates of the subbox with snake index `idx`.
    pub fn coords(&self, idx: usize) -> Vec<usize> {
        snake_coords(idx, self.per_side, self.d)
    }

    pub fn index(&self, c: &[usize]) -> usize {
        snake_index(c, self.per_side)
    }

    /// (lo, hi) corners of subbox `idx`.
    pub fn bounds(&self, idx: usize) -> (Vec<f64>, Vec<f64>) {
        self.coords(idx)
            .iter()
            .map(|&c| {
                let lo = -self.half + c as f64 * self.side;
                (lo, lo + self.side)
            })
            .unzip()
    }

    /// Subbox containing x (faces go to the upper box, the top face of Λ_{n'}
    /// to the last box); `None` outside Λ_{n'}.
    pub fn box_of(&self, x: &[f64]) -> Option<usize> {
        let mut c = Vec::with_capacity(self.d);
        for &v in x {
            if v < -self.half || v > self.half {
                return None;
            }
            let g = ((v + self.half) / self.side).floor() as usize;
            c.push(g.min(self.per_side - 1));
        }
        Some(self.index(&c))
    }

    /// Euclidean distance from x to subbox `idx` (0 inside).
    pub fn distance(&self, x: &[f64], idx: usize) -> f64 {
        let (lo, hi) = self.bounds(idx);
        x.iter()
            .zip(lo.iter().zip(&hi))
            .map(|(&v, (&a, &b))| {
                let t = if v < a { a - v } else if v > b { v - b } else { 0.0 };
                t * t
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Q(u): the containing subbox, else the nearest one, lowest index on ties.
    pub fn nearest(&self, x: &[f64]) -> usize {
        if let Some(i) = self.box_of(x) {
            return i;
        }
        // clamp gives the nearest grid cell; ties between cells only occur on
        // shared faces and are resolved by the lowest snake index
        let mut best = (f64::INFINITY, usize::MAX);
        let clamped: Vec<usize> = x
            .iter()
            .map(|&v| (((v + self.half) / self.side).floor().max(0.0) as usize).min(self.per_side - 1))
            .collect();
        let mut cand = vec![clamped.clone()];
        for a in 0..self.d {
            let mut more = Vec::new();
            for c in &cand {
                for delta in [-1i64, 1] {
                    let v = c[a] as i64 + delta;
                    if v >= 0 && (v as usize) < self.per_side {
                        let mut c2 = c.clone();
                        c2[a] = v as usize;
                        more.push(c2);
                    }
                }
            }
            cand.extend(more);
        }
        for c in cand {
            let i = self.index(&c);
            let dist = self.distance(x, i);
            if dist < best.0 || (dist == best.0 && i < best.1) {
                best = (dist, i);
            }
        }
        best.1
    }

    /// Largest distance from x to a point of subbox `idx`.
    pub fn far_distance(&self, x: &[f64], idx: usize) -> f64 {
        let (lo, hi) = self.bounds(idx);
        x.iter()
            .zip(lo.iter().zip(&hi))
            .map(|(&v, (&a, &b))| {
                let t = (v - a).abs().max((v - b).abs());
                t * t
            })
            .sum::<f64>()
            .sqrt()
    }
}

pub fn snake_coords(idx: usize, m: usize, d: usize) -> Vec<usize> {
    if d == 1 {
        return vec![idx];
    }
    let block = m.pow(d as u32 - 1);
    let q = idx / block;
    let rem = idx % block;
    let mut c = snake_coords(if q % 2 == 1 { block - 1 - rem } else { rem }, m, d - 1);
    c.push(q);
    c
}

pub fn snake_index(c: &[usize], m: usize) -> usize {
    let d = c.len();
    if d == 1 {
        return c[0];
    }
    let block = m.pow(d as u32 - 1);
    let q = c[d - 1];
    let rem = snake_index(&c[..d - 1], m);
    q * block + if q % 2 == 1 { block - 1 - rem } else { rem }
}

// ---------------------------------------------------------------- construction

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneResult {
    pub params: BackboneParams,
    pub holds_a_bb: bool,
    /// vertex indices of C_bb (empty when A_bb fails), increasing
    pub backbone_component: Vec<u32>,
    /// |V_{Q_i}[w_hh, 2w_hh) ∩ C_bb|, or of the largest band component when A_bb fails
    pub per_box_counts: Vec<usize>,
    /// band vertices per subbox, |V_{Q_i}[w_hh, 2w_hh)|
    pub band_counts: Vec<usize>,
    /// |C_init| followed by |Ṽ_2|, |Ṽ_3|, …; stops after the first empty set
    pub greedy_sizes: Vec<usize>,
    pub greedy_success: bool,
}

fn in_band(w: f64, bp: &BackboneParams) -> bool {
    w >= bp.w_hh && w < 2.0 * bp.w_hh
}

/// Backbone of `graph` for subboxes of volume k.
pub fn construct_backbone(graph: &SpatialGraph, k: f64) -> Result<BackboneResult, BackboneError> {
    let bp = backbone_constants(&graph.params, k, graph.volume_n)?;
    let grid = bp.grid();
    let nv = graph.vertices.len();
    let nb = grid.len();
    let band: Vec<bool> = graph.vertices.iter().map(|v| in_band(v.mark, &bp)).collect();
    let boxes: Vec<Option<usize>> = graph
        .vertices
        .iter()
        .zip(&band)
        .map(|(v, &b)| if b { grid.box_of(&v.pos) } else { None })
        .collect();
    let mut band_counts = vec![0usize; nb];
    for b in boxes.iter().flatten() {
        band_counts[*b] += 1;
    }
    let band_edges: Vec<(u32, u32)> =
        graph.edges.iter().copied().filter(|&(u, v)| band[u as usize] && band[v as usize]).collect();

    // A_bb directly from the components of the band graph
    let mut uf = UnionFind::new(nv);
    for &(u, v) in &band_edges {
        uf.union(u, v);
    }
    let mut per_root: std::collections::HashMap<u32, Vec<usize>> = std::collections::HashMap::new();
    let mut size: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
    for i in 0..nv {
        if !band[i] {
            continue;
        }
        let r = uf.find(i as u32);
        *size.entry(r).or_default() += 1;
        if let Some(b) = boxes[i] {
            per_root.entry(r).or_insert_with(|| vec![0; nb])[b] += 1;
        }
    }
    let qualifies = |r: &u32| per_root.get(r).is_some_and(|c| c.iter().all(|&x| x >= bp.s_count()));
    // largest qualifying component, else largest component; ties by smallest root
    let pick = |ok: &dyn Fn(&u32) -> bool| -> Option<u32> {
        let mut roots: Vec<(usize, u32)> = size.iter().filter(|(r, _)| ok(r)).map(|(&r, &s)| (s, r)).collect();
        roots.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        roots.first().map(|x| x.1)
    };
    let bb_root = pick(&qualifies);
    let holds = bb_root.is_some();
    let shown = bb_root.or_else(|| pick(&|_| true));
    let per_box_counts = shown.and_then(|r| per_root.get(&r).cloned()).unwrap_or_else(|| vec![0; nb]);
    let backbone_component: Vec<u32> = match bb_root {
        Some(r) => (0..nv as u32).filter(|&i| band[i as usize] && uf.find(i) == r).collect(),
        None => Vec::new(),
    };

    // greedy construction box by box
    let mut greedy_sizes = Vec::new();
    let mut in_q1 = UnionFind::new(nv);
    for &(u, v) in &band_edges {
        if boxes[u as usize] == Some(0) && boxes[v as usize] == Some(0) {
            in_q1.union(u, v);
        }
    }
    let q1: Vec<u32> = (0..nv as u32).filter(|&i| boxes[i as usize] == Some(0)).collect();
    let mut current: Vec<bool> = vec![false; nv];
    if !q1.is_empty() {
        let mut best: Option<(usize, u32)> = None;
        for &i in &q1 {
            let r = in_q1.find(i);
            let s = in_q1.component_size(r) as usize;
            if best.is_none_or(|(bs, br)| s > bs || (s == bs && r < br)) {
                best = Some((s, r));
            }
        }
        let (s, r) = best.unwrap();
        for &i in &q1 {
            if in_q1.find(i) == r {
                current[i as usize] = true;
            }
        }
        greedy_sizes.push(s);
    } else {
        greedy_sizes.push(0);
    }
    let adj = band_adjacency(nv, &band_edges);
    for b in 1..nb {
        if *greedy_sizes.last().unwrap() == 0 {
            break;
        }
        let mut next = vec![false; nv];
        let mut count = 0;
        for i in 0..nv {
            if boxes[i] == Some(b) && adj[i].iter().any(|&j| current[j as usize]) {
                next[i] = true;
                count += 1;
            }
        }
        current = next;
        greedy_sizes.push(count);
    }
    let greedy_success = greedy_sizes.len() == nb && greedy_sizes.iter().all(|&c| c >= bp.s_count());

    Ok(BackboneResult {
        params: bp,
        holds_a_bb: holds,
        backbone_component,
        per_box_counts,
        band_counts,
        greedy_sizes,
        greedy_success,
    })
}

fn band_adjacency(nv: usize, edges: &[(u32, u32)]) -> Vec<Vec<u32>> {
    let mut adj = vec![Vec::new(); nv];
    for &(u, v) in edges {
        adj[u as usize].push(v);
        adj[v as usize].push(u);
    }
    adj
}

/// S(u): the ⌈s_k⌉ highest-mark backbone vertices of Q(u).
pub fn nearest_backbone_set(graph: &SpatialGraph, result: &BackboneResult, u: usize) -> Result<Vec<u32>, BackboneError> {
    if !result.holds_a_bb {
        return Err(BackboneError::NoBackbone);
    }
    let grid = result.params.grid();
    let q = grid.nearest(&graph.vertices[u].pos);
    let mut members: Vec<u32> = result
        .backbone_component
        .iter()
        .copied()
        .filter(|&v| grid.box_of(&graph.vertices[v as usize].pos) == Some(q))
        .collect();
    members.sort_by(|&a, &b| {
        graph.vertices[b as usize].mark.total_cmp(&graph.vertices[a as usize].mark).then(a.cmp(&b))
    });
    members.truncate(result.params.s_count());
    Ok(members)
}

/// Outcome of the checks behind the connection-to-backbone claim.
#[derive(Clone, Debug, PartialEq)]
pub struct ClaimChecks {
    pub r_k_le_p: bool,
    /// vertices u with w_u ≥ 2 w_hh examined
    pub checked: usize,
    pub sizes_ok: bool,
    pub distance_ok: bool,
    pub prob_ok: bool,
}

impl ClaimChecks {
    pub fn all(&self) -> bool {
        self.r_k_le_p && self.sizes_ok && self.distance_ok && self.prob_ok
    }
}

/// For every u with w_u ≥ 2 w_hh: |S(u)| = ⌈s_k⌉, every v ∈ S(u) within
/// 2√d k^{1/d} of u and p(u, v) ≥ r_k.
pub fn claim_checks(graph: &SpatialGraph, result: &BackboneResult) -> Result<ClaimChecks, BackboneError> {
    let bp = &result.params;
    let mut out = ClaimChecks { r_k_le_p: bp.r_k_conn <= graph.params.p, checked: 0, sizes_ok: true, distance_ok: true, prob_ok: true };
    let reach = bp.reach();
    for (u, vu) in graph.vertices.iter().enumerate() {
        if vu.mark < 2.0 * bp.w_hh {
            continue;
        }
        out.checked += 1;
        let s = nearest_backbone_set(graph, result, u)?;
        if s.len() != bp.s_count() {
            out.sizes_ok = false;
        }
        for &v in &s {
            let vv = &graph.vertices[v as usize];
            let dist: f64 = vu.pos.iter().zip(&vv.pos).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if dist > reach * (1.0 + 1e-12) {
                out.distance_ok = false;
            }
            if connection_prob(vu, vv, &graph.params) < bp.r_k_conn {
                out.prob_ok = false;
            }
        }
    }
    Ok(out)
}

/// Samples G_n and keeps the subgraph induced by marks ≥ w_hh, which is all
/// that A_bb and the claim checks read. Vertex ids are those of the full sample.
pub fn sample_backbone(params: &ModelParams, n: f64, k: f64, seed: u64) -> Result<(SpatialGraph, BackboneResult), BackboneError> {
    let bp = backbone_constants(params, k, n)?;
    let table = VertexTable::sample(params, n, seed);
    let sub = table.restrict_marks(bp.w_hh, f64::INFINITY);
    let graph = build_graph_from_table(&sub, params, n, seed, None);
    let result = construct_backbone(&graph, k)?;
    Ok((graph, result))
}

/// One line of the per-seed backbone table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BackboneRow {
    pub seed: u64,
    pub a_bb: bool,
    pub band_vertices: usize,
    pub min_box_count: usize,
    pub greedy_success: bool,
    pub claims_checked: usize,
    pub claims_ok: Option<bool>,
}

pub fn backbone_row(params: &ModelParams, n: f64, k: f64, seed: u64) -> Result<BackboneRow, BackboneError> {
    let (g, r) = sample_backbone(params, n, k, seed)?;
    let claims = if r.holds_a_bb { Some(claim_checks(&g, &r)?) } else { None };
    Ok(BackboneRow {
        seed,
        a_bb: r.holds_a_bb,
        band_vertices: r.band_counts.iter().sum(),
        min_box_count: r.per_box_counts.iter().copied().min().unwrap_or(0),
        greedy_success: r.greedy_success,
        claims_checked: claims.as_ref().map_or(0, |c| c.checked),
        claims_ok: claims.map(|c| c.all()),
    })
}

// ---------------------------------------------------------------- mark ladder

/// Volume of Λ(x, β 2^{−σ} d^{−d/2} (2^j m_w)^{σ+1}) before truncation by Λ_n.
pub fn ladder_box_volume(params: &ModelParams, m_w: f64, j: u32) -> f64 {
    let d = params.d as f64;
    let s = params.sigma();
    params.beta * 2f64.powf(-s) * d.powf(-d / 2.0) * (2f64.powi(j as i32) * m_w).powf(s + 1.0)
}

/// j★ = max{j ≥ 0 : 2^{j+1} m_w < w_hh}; `None` when w_hh ≤ 2 m_w.
pub fn ladder_top(m_w: f64, w_hh: f64) -> Option<u32> {
    if 2.0 * m_w >= w_hh {
        return None;
    }
    let mut j = 0u32;
    while 2f64.powi(j as i32 + 2) * m_w < w_hh {
        j += 1;
    }
    Some(j)
}

/// Greedy mark-increasing path u = u_0, u_1, …, u_{j★}, then a hop into S(u).
/// Each u_j is the lowest-index neighbour of u_{j−1} in Q_j(x_u) × I_j.
pub fn mark_ladder_path(graph: &SpatialGraph, result: &BackboneResult, u: usize, m_w: f64) -> Result<Option<Vec<u32>>, BackboneError> {
    if !result.holds_a_bb {
        return Err(BackboneError::NoBackbone);
    }
    let adj = graph.adjacency();
    let h = half_width(graph.volume_n, graph.params.d);
    let d = graph.params.d;
    let xu = &graph.vertices[u].pos;
    let mut path = vec![u as u32];
    let mut cur = u;
    if let Some(top) = ladder_top(m_w, result.params.w_hh) {
        for j in 1..=top {
            let half = ladder_box_volume(&graph.params, m_w, j).powf(1.0 / d as f64) / 2.0;
            let (lo, hi) = (2f64.powi(j as i32) * m_w, 2f64.powi(j as i32 + 1) * m_w);
            let mut nbrs: Vec<u32> = adj[cur].clone();
            nbrs.sort_unstable();
            let next = nbrs.into_iter().find(|&v| {
                let vv = &graph.vertices[v as usize];
                vv.mark >= lo
                    && vv.mark < hi
                    && vv.pos.iter().zip(xu.iter()).all(|(a, b)| (a - b).abs() <= half && a.abs() <= h)
            });
            match next {
                Some(v) => {
                    path.push(v);
                    cur = v as usize;
                }
                None => return Ok(None),
            }
        }
    }
    let s = nearest_backbone_set(graph, result, u)?;
    match s.iter().copied().find(|v| adj[cur].contains(v)) {
        Some(v) => {
            path.push(v);
            Ok(Some(path))
        }
        None => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MarkedVertex;
    use proptest::prelude::*;

    fn graph(params: &ModelParams, n: f64, vs: Vec<MarkedVertex>, edges: Vec<(u32, u32)>) -> SpatialGraph {
        SpatialGraph { volume_n: n, vertices: vs, edges, seed: 0, params: params.clone(), palm_origin: None }
    }

    #[test]
    fn lambda_star_solves_survival() {
        // 1 − ρ = e^{−λρ} at ρ = 1/2, solved by bisection
        let (mut a, mut b) = (1.0f64, 3.0f64);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if 0.5 - (-m * 0.5).exp() < 0.0 { a = m } else { b = m }
        }
        assert!((lambda_star_half() - a).abs() < 1e-12);
        assert!((lambda_star_half() - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn c1_threshold_example() {
        // τ = 2 + σ sits on the boundary of the backbone regime: the constant
        // is defined, the constructive objects are not
        let m = ModelParams::new(1, Ext::Finite(3.0), Ext::Inf, 1.0, 2.0, 1.0).unwrap();
        assert!((c1_constant(&m).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(backbone_constants(&m, 100.0, 1000.0), Err(BackboneError::Regime(_))));
    }

    #[test]
    fn c1_solves_defining_equation() {
        let m = ModelParams::reference();
        let bp = backbone_constants(&m, 1000.0, 4000.0).unwrap();
        let (a, t, s, d) = (3.0f64, 2.2f64, 1.0f64, 1.0f64);
        let lhs = (m.p / 16.0) * m.beta.powf(a) * 2f64.powf(-a * d) * d.powf(-a * d / 2.0) * bp.c1.powf(-((1.0 + s) * a - (t - 1.0)) / (t - 1.0));
        assert!((lhs - 2.0 * LN_2).abs() < 1e-12);
        // the two expressions for s_k agree
        assert!((bp.s_k - bp.c1 / 16.0 * 1000f64.powf(bp.zeta_hh)).abs() < 1e-9 * bp.s_k);
    }

    #[test]
    fn r_k_example() {
        let m = ModelParams::reference();
        let (c, ..) = c1(&m).unwrap();
        // pick k with s_k = 1
        let k = (16.0 / c).powf(2.0);
        let bp = backbone_constants(&m, k, 4.0 * k).unwrap();
        assert!((bp.s_k - 1.0).abs() < 1e-9);
        assert!((bp.r_k_conn - 0.5).abs() < 1e-9);
    }

    #[test]
    fn regime_error() {
        let m = ModelParams::reference().with_tau(Ext::Finite(3.5));
        assert!(matches!(backbone_constants(&m, 10.0, 100.0), Err(BackboneError::Regime(_))));
    }

    #[test]
    fn k_for_sk_reaches_target() {
        let m = ModelParams::reference();
        let k = k_for_sk(&m, 4.0).unwrap();
        let bp = backbone_constants(&m, k, 1e6).unwrap();
        assert!(bp.s_k >= 4.0 && bp.s_k < 4.0 + 1e-6);
    }

    #[test]
    fn snake_is_face_adjacent() {
        for (m, d) in [(5, 1), (4, 2), (3, 3), (1, 2)] {
            let g = SubboxGrid::new(d, m, 1.0);
            for i in 0..g.len() {
                assert_eq!(g.index(&g.coords(i)), i);
                if i + 1 < g.len() {
                    let (a, b) = (g.coords(i), g.coords(i + 1));
                    let diff: usize = a.iter().zip(&b).map(|(x, y)| x.abs_diff(*y)).sum();
                    assert_eq!(diff, 1);
                }
            }
        }
    }

    #[test]
    fn nearest_box_and_distance_bound() {
        let g = SubboxGrid::new(2, 3, 2.0);
        assert_eq!(g.box_of(&[-2.5, -2.5]), Some(0));
        assert_eq!(g.box_of(&[3.2, 0.0]), None);
        let q = g.nearest(&[3.2, 0.0]);
        assert_eq!(g.coords(q), vec![2, 1]);
        // a point of Λ_n outside Λ_{n'} sees all of Q(u) within 2√d k^{1/d}
        let reach = 2.0 * 2f64.sqrt() * 2.0;
        assert!(g.far_distance(&[3.9, 3.9], g.nearest(&[3.9, 3.9])) <= reach);
    }

    #[test]
    fn empty_band_box_fails() {
        let m = ModelParams::reference();
        let k = 1000.0;
        let bp = backbone_constants(&m, k, 2.0 * k).unwrap();
        let w = bp.w_hh * 1.5;
        // all band vertices in the first subbox, none in the second
        let h = half_width(2.0 * k, 1);
        let vs: Vec<MarkedVertex> = (0..10).map(|i| MarkedVertex::new(&[-h + 1.0 + i as f64], w)).collect();
        let edges = (0..9).map(|i| (i, i + 1)).collect();
        let r = construct_backbone(&graph(&m, 2.0 * k, vs, edges), k).unwrap();
        assert_eq!(r.band_counts, vec![10, 0]);
        assert!(!r.holds_a_bb);
        assert!(!r.greedy_success);
    }

    #[test]
    fn single_box_is_largest_component() {
        let m = ModelParams::reference();
        let k = 5000.0;
        let bp = backbone_constants(&m, k, k).unwrap();
        let need = bp.s_count();
        let w = bp.w_hh * 1.2;
        let vs: Vec<MarkedVertex> = (0..need + 3).map(|i| MarkedVertex::new(&[i as f64], w)).collect();
        // a path on `need` vertices plus three isolated ones
        let edges: Vec<(u32, u32)> = (0..need as u32 - 1).map(|i| (i, i + 1)).collect();
        let g = graph(&m, k, vs.clone(), edges.clone());
        let r = construct_backbone(&g, k).unwrap();
        assert!(r.holds_a_bb && r.greedy_success);
        assert_eq!(r.backbone_component.len(), need);
        let short: Vec<(u32, u32)> = edges[1..].to_vec();
        let r = construct_backbone(&graph(&m, k, vs, short), k).unwrap();
        assert!(!r.holds_a_bb);
    }

    #[test]
    fn s_of_u_takes_top_marks() {
        let m = ModelParams::reference();
        let k = k_for_sk(&m, 4.0).unwrap();
        let bp = backbone_constants(&m, k, k).unwrap();
        assert_eq!(bp.s_count(), 4);
        let marks: Vec<f64> = (0..10).map(|i| bp.w_hh * (1.0 + 0.09 * ((i * 7) % 10) as f64)).collect();
        let mut vs: Vec<MarkedVertex> = marks.iter().enumerate().map(|(i, &w)| MarkedVertex::new(&[i as f64], w)).collect();
        vs.push(MarkedVertex::new(&[0.5], 3.0 * bp.w_hh));
        let edges: Vec<(u32, u32)> = (0..9).map(|i| (i, i + 1)).collect();
        let g = graph(&m, k, vs, edges);
        let r = construct_backbone(&g, k).unwrap();
        let s = nearest_backbone_set(&g, &r, 10).unwrap();
        let mut order: Vec<u32> = (0..10).collect();
        order.sort_by(|&a, &b| marks[b as usize].total_cmp(&marks[a as usize]));
        assert_eq!(s, order[..4].to_vec());
    }

    #[test]
    fn ladder_geometry() {
        let m = ModelParams::reference();
        for j in 0..5 {
            let r = ladder_box_volume(&m, 3.0, j + 1) / ladder_box_volume(&m, 3.0, j);
            assert!((r - 4.0).abs() < 1e-12);
        }
        assert_eq!(ladder_top(10.0, 20.0), None);
        assert_eq!(ladder_top(10.0, 20.5), Some(0));
        assert_eq!(ladder_top(1.0, 100.0), Some(5));
    }

    proptest! {
        #[test]
        fn snake_roundtrip(m in 1usize..6, d in 1usize..4, seed in 0usize..1000) {
            let n = m.pow(d as u32);
            let i = seed % n;
            prop_assert_eq!(snake_index(&snake_coords(i, m, d), m), i);
        }

        #[test]
        fn n_prime_fits(k in 1.0f64..500.0, ratio in 1.0f64..50.0, d in 1usize..4) {
            let m = ModelParams::reference().with_d(d);
            let bp = backbone_constants(&m, k, k * ratio).unwrap();
            prop_assert!(bp.n_prime <= bp.n * (1.0 + 1e-12));
            prop_assert!(bp.per_side >= 1);
            prop_assert!(((bp.per_side + 1) as f64).powi(d as i32) * k > bp.n);
        }
    }
}
