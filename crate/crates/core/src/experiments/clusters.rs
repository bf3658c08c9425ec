//! Component campaigns: cluster-size decay of the origin, the second-largest
//! component and the giant fraction.

use rayon::prelude::*;
use serde::Serialize;

use crate::components::{ClusterStats, UnionFind};
use crate::model::ModelParams;
use crate::rng;
use crate::sampler::{default_method, for_each_edge, palm_mark, CoinScheme, VertexTable};

use super::ExperimentRow;

/// Outcome of one sampled graph.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterRow {
    pub n: f64,
    pub rep: u32,
    pub seed: u64,
    pub vertices: u64,
    /// None without a palm vertex
    pub origin_cluster: Option<u32>,
    pub origin_in_giant: bool,
    pub largest: u32,
    pub second_largest: u32,
}

impl ClusterRow {
    pub fn to_row(&self, experiment: &str, params: &ModelParams) -> ExperimentRow {
        ExperimentRow {
            experiment: experiment.to_string(),
            params: params.to_string(),
            n: Some(self.n),
            k: None,
            rep: self.rep,
            seed: self.seed,
            origin_cluster: self.origin_cluster,
            largest: Some(self.largest),
            second_largest: Some(self.second_largest),
            boundary: None,
            a_bb: None,
        }
    }
}

/// Seed of replicate `rep` at volume n.
pub fn rep_seed_for(seed: u64, x: f64, rep: u32) -> u64 {
    rng::rep_seed(seed, x.to_bits(), rep as u64)
}

/// Samples G_n (plus a vertex at the origin when `palm`) and its component
/// sizes. Edges are streamed into a union-find and never stored.
pub fn sample_cluster_row(params: &ModelParams, n: f64, rep: u32, seed: u64, palm: bool) -> ClusterRow {
    let s = rep_seed_for(seed, n, rep);
    let mut table = VertexTable::sample(params, n, s);
    let origin = if palm {
        let id = table.len() as u32;
        table.push(&vec![0.0; params.d], palm_mark(params, s), id);
        Some(id as usize)
    } else {
        None
    };
    let mut uf = UnionFind::new(table.len());
    for_each_edge(&table, params, n, s, default_method(table.len()), CoinScheme::default_for(params), &mut |u, v| {
        uf.union(u, v);
    });
    let st = ClusterStats::from_union_find(&mut uf, origin);
    ClusterRow {
        n,
        rep,
        seed: s,
        vertices: table.len() as u64,
        origin_cluster: origin.map(|_| st.origin_cluster),
        origin_in_giant: origin.is_some() && st.origin_cluster == st.largest,
        largest: st.largest,
        second_largest: st.second_largest,
    }
}

/// All (n, rep) pairs, run in parallel, returned in grid order.
pub fn cluster_campaign(params: &ModelParams, n_grid: &[f64], reps: u32, seed: u64, palm: bool) -> Vec<ClusterRow> {
    let jobs: Vec<(f64, u32)> = n_grid.iter().flat_map(|&n| (0..reps).map(move |r| (n, r))).collect();
    jobs.into_par_iter().map(|(n, r)| sample_cluster_row(params, n, r, seed, palm)).collect()
}

/// Wilson score interval at z standard errors.
pub fn wilson_interval(hits: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let ph = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (ph + z2 / (2.0 * n)) / denom;
    let half = z * (ph * (1.0 - ph) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    pub k: f64,
    pub reps: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    /// p̂ = 0 or p̂ = 1; such rows stay out of the fit
    pub excluded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayResult {
    pub n: f64,
    pub rows: Vec<ClusterRow>,
    pub table: Vec<DecayRow>,
    /// p̂(k) non-increasing along the grid
    pub monotone: bool,
    /// p̂ at k = 0 bounded by the frequency of {0 ∉ giant}
    pub nested: bool,
}

/// p̂(k) = fraction of replicates with |C_n(0)| > k and 0 outside the giant.
pub fn estimate_cluster_decay(params: &ModelParams, n: f64, k_grid: &[f64], reps: u32, seed: u64) -> DecayResult {
    let rows = cluster_campaign(params, &[n], reps, seed, true);
    decay_table(n, rows, k_grid)
}

pub fn decay_table(n: f64, rows: Vec<ClusterRow>, k_grid: &[f64]) -> DecayResult {
    let total = rows.len() as u64;
    let outside = rows.iter().filter(|r| !r.origin_in_giant).count() as u64;
    let table: Vec<DecayRow> = k_grid
        .iter()
        .map(|&k| {
            let hits = rows.iter().filter(|r| !r.origin_in_giant && r.origin_cluster.is_some_and(|c| c as f64 > k)).count() as u64;
            let p_hat = if total == 0 { 0.0 } else { hits as f64 / total as f64 };
            let (lo, hi) = wilson_interval(hits, total, 1.96);
            DecayRow { k, reps: total, hits, p_hat, wilson_lo: lo, wilson_hi: hi, excluded: hits == 0 || hits == total }
        })
        .collect();
    let mut order: Vec<&DecayRow> = table.iter().collect();
    order.sort_by(|a, b| a.k.total_cmp(&b.k));
    let monotone = order.windows(2).all(|w| w[1].hits <= w[0].hits);
    let nested = table.iter().all(|r| r.hits <= outside);
    DecayResult { n, rows, table, monotone, nested }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecondRow {
    pub n: f64,
    pub reps: u64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GiantRow {
    pub n: f64,
    pub reps: u64,
    pub mean: f64,
    pub stddev: f64,
}

fn by_n(rows: &[ClusterRow]) -> Vec<(f64, Vec<&ClusterRow>)> {
    let mut out: Vec<(f64, Vec<&ClusterRow>)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(n, _)| *n == r.n) {
            Some((_, v)) => v.push(r),
            None => out.push((r.n, vec![r])),
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

pub fn summarize_second(rows: &[ClusterRow]) -> Vec<SecondRow> {
    by_n(rows)
        .into_iter()
        .map(|(n, rs)| {
            let mut xs: Vec<f64> = rs.iter().map(|r| r.second_largest as f64).collect();
            xs.sort_by(f64::total_cmp);
            SecondRow {
                n,
                reps: xs.len() as u64,
                median: quantile(&xs, 0.5),
                q25: quantile(&xs, 0.25),
                q75: quantile(&xs, 0.75),
                max: xs.last().copied().unwrap_or(f64::NAN),
            }
        })
        .collect()
}

/// Sample standard deviation (n − 1 denominator).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

pub fn summarize_giant(rows: &[ClusterRow]) -> Vec<GiantRow> {
    by_n(rows)
        .into_iter()
        .map(|(n, rs)| {
            let xs: Vec<f64> = rs.iter().map(|r| r.largest as f64 / n).collect();
            let (mean, stddev) = mean_sd(&xs);
            GiantRow { n, reps: xs.len() as u64, mean, stddev }
        })
        .collect()
}

pub fn estimate_second_largest(params: &ModelParams, n_grid: &[f64], reps: u32, seed: u64) -> (Vec<ClusterRow>, Vec<SecondRow>) {
    let rows = cluster_campaign(params, n_grid, reps, seed, false);
    let t = summarize_second(&rows);
    (rows, t)
}

pub fn estimate_giant_fraction(params: &ModelParams, n_grid: &[f64], reps: u32, seed: u64) -> (Vec<ClusterRow>, Vec<GiantRow>) {
    let rows = cluster_campaign(params, n_grid, reps, seed, false);
    let t = summarize_giant(&rows);
    (rows, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::cluster_stats;
    use crate::model::Ext;
    use crate::sampler::{build_graph, palm_insert, sample_vertices};

    #[test]
    fn streamed_stats_match_stored_graph() {
        let m = ModelParams::reference().with_beta(0.3).with_alpha(Ext::Finite(2.5));
        for rep in 0..4 {
            let r = sample_cluster_row(&m, 3000.0, rep, 9, true);
            let mut vs = sample_vertices(&m, 3000.0, r.seed);
            let o = palm_insert(&mut vs, &m, r.seed);
            let mut g = build_graph(vs, &m, 3000.0, r.seed, None);
            g.palm_origin = Some(o);
            let s = cluster_stats(&g);
            assert_eq!((r.largest, r.second_largest, r.origin_cluster), (s.largest, s.second_largest, Some(s.origin_cluster)));
        }
    }

    #[test]
    fn wilson_matches_formula() {
        let (lo, hi) = wilson_interval(0, 10, 1.96);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.2775).abs() < 1e-3);
        let (lo, hi) = wilson_interval(5, 10, 1.96);
        assert!((lo - 0.2366).abs() < 1e-3 && (hi - 0.7634).abs() < 1e-3);
    }

    #[test]
    fn decay_is_monotone_and_nested() {
        let m = ModelParams::reference().with_beta(0.15).with_p(0.8);
        let r = estimate_cluster_decay(&m, 800.0, &[0.0, 1.0, 2.0, 4.0, 8.0, 16.0], 200, 3);
        assert!(r.monotone && r.nested);
        let outside = r.rows.iter().filter(|x| !x.origin_in_giant).count() as u64;
        assert!(r.table[0].hits <= outside);
        assert!(r.table.iter().all(|t| t.wilson_lo <= t.p_hat && t.p_hat <= t.wilson_hi));
    }

    #[test]
    fn second_never_exceeds_largest() {
        let m = ModelParams::reference().with_beta(0.1).with_p(0.5);
        let rows = cluster_campaign(&m, &[200.0, 800.0], 20, 1, false);
        assert!(rows.iter().all(|r| r.second_largest <= r.largest));
        let t = summarize_second(&rows);
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|s| s.q25 <= s.median && s.median <= s.q75));
    }

    #[test]
    fn sparse_giant_fraction_small() {
        let m = ModelParams::reference().with_p(0.01).with_beta(0.01);
        let (_, t) = estimate_giant_fraction(&m, &[4096.0], 10, 2);
        assert!(t[0].mean < 0.01);
    }

    #[test]
    fn campaign_is_deterministic() {
        let m = ModelParams::reference().with_beta(0.2);
        let a = cluster_campaign(&m, &[300.0, 600.0], 5, 77, true);
        let b = cluster_campaign(&m, &[300.0, 600.0], 5, 77, true);
        assert_eq!(a, b);
    }

    #[test]
    fn quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.5), 2.5);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
    }
}
