//! Downward vertex boundary of Λ_k: the number of u ∈ Λ_k with an edge to
//! some v ∉ Λ_k with w_v ≤ w_u.
//!
//! The conditional estimator samples the vertices of Λ_k and integrates out
//! the independent Poisson process outside. Given the inside, u has a
//! downward edge to the complement with probability 1 − e^{−Λ(x_u, w_u)},
//!
//!   Λ(x, w) = ∫_{y ∉ Λ_k} E[p(‖x − y‖^d, w, V) 1{V ≤ w}] dy,
//!
//! so the per-replicate sum of these probabilities is an unbiased estimate of
//! the infinite-volume mean with no cutoff. In polar coordinates around x,
//! Λ(x, w) = (1/d) ∫_{S^{d−1}} G(ρ(θ)^d, w) dθ with ρ(θ) the exit distance
//! and G(a, w) = E[1{V ≤ w} J(βκ(w, V), a)], J(c, a) = ∫_a^∞ p ρ_prof(c/s) ds.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{Connector, Kernel, MarkedVertex, ModelParams, VertexSet};
use crate::sampler::{default_method, for_each_edge, half_width, CoinScheme, VertexTable};

use super::clusters::{mean_sd, rep_seed_for};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundaryError {
    #[error("the conditional estimator needs Poisson vertices")]
    NotPoisson,
    #[error("simulation box must have volume at least 4k, got factor {0}")]
    BoxTooSmall(f64),
    #[error("invalid input: {0}")]
    Input(String),
}

/// J, G and Λ for one parameter set.
pub struct DownwardTail {
    d: usize,
    p: f64,
    beta: f64,
    alpha: Option<f64>,
    tau: Option<f64>,
    kernel: Kernel,
    conn: Connector,
    gl: GaussLegendre,
}

const PANEL_T: f64 = 0.5;
const PANEL_PHI: f64 = 0.25;
const SKIP: f64 = 1e-14;

/// Volume of the unit Euclidean ball in ℝ^d.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / d as f64 * unit_ball_volume(d - 2),
    }
}

fn panels(lo: f64, hi: f64, width: f64, cuts: &[f64]) -> Vec<(f64, f64)> {
    let mut pts = vec![lo];
    let mut cs: Vec<f64> = cuts.iter().copied().filter(|&c| c > lo && c < hi).collect();
    cs.sort_by(f64::total_cmp);
    pts.extend(cs);
    pts.push(hi);
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let m = ((w[1] - w[0]) / width).ceil().max(1.0) as usize;
        let step = (w[1] - w[0]) / m as f64;
        for i in 0..m {
            out.push((w[0] + i as f64 * step, w[0] + (i + 1) as f64 * step));
        }
    }
    out
}

impl DownwardTail {
    pub fn new(params: &ModelParams) -> Self {
        DownwardTail {
            d: params.d,
            p: params.p,
            beta: params.beta,
            alpha: params.alpha().finite(),
            tau: params.tau.finite(),
            kernel: params.kernel,
            conn: Connector::new(params),
            gl: GaussLegendre::new(NonZeroUsize::new(8).unwrap()),
        }
    }

    /// J(c, a) = ∫_a^∞ p ρ_prof(c/s) ds.
    pub fn j(&self, c: f64, a: f64) -> f64 {
        let near = (c - a).max(0.0);
        match self.alpha {
            None => self.p * near,
            Some(al) => self.p * (near + c.powf(al) * c.max(a).powf(1.0 - al) / (al - 1.0)),
        }
    }

    fn c_of(&self, w: f64, v: f64) -> f64 {
        self.beta * self.conn.kernel(w, v)
    }

    /// G(a, w) = E[1{V ≤ w} J(βκ(w, V), a)].
    pub fn g(&self, a: f64, w: f64) -> f64 {
        match (self.tau, self.kernel) {
            (None, _) => {
                if w >= 1.0 {
                    self.j(self.c_of(w, 1.0), a)
                } else {
                    0.0
                }
            }
            (Some(_), _) if w <= 1.0 => 0.0,
            (Some(t), Kernel::Interpolation { sigma }) => self.g_closed(a, w, t, sigma),
            (Some(_), Kernel::Sum) => self.g_numeric(a, w),
        }
    }

    /// G by quadrature over t = ln v, split where βκ(w, v) = a.
    pub fn g_numeric(&self, a: f64, w: f64) -> f64 {
        let t_max = w.ln();
        let tau = match self.tau {
            Some(t) => t,
            None => return self.g(a, w),
        };
        if t_max <= 0.0 {
            return 0.0;
        }
        let mut cuts = Vec::new();
        let (c_lo, c_hi) = (self.c_of(w, 1.0), self.c_of(w, w));
        if c_lo < a && a < c_hi {
            let (mut lo, mut hi) = (0.0, t_max);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if self.c_of(w, mid.exp()) < a {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            cuts.push(0.5 * (lo + hi));
        }
        panels(0.0, t_max, PANEL_T, &cuts)
            .into_iter()
            .map(|(l, h)| {
                self.gl.integrate(l, h, |t| (tau - 1.0) * ((1.0 - tau) * t).exp() * self.j(self.c_of(w, t.exp()), a))
            })
            .sum()
    }

    /// Closed form for κ_σ: on v ≤ w, c(v) = β w v^σ and J is a sum of powers.
    fn g_closed(&self, a: f64, w: f64, tau: f64, sigma: f64) -> f64 {
        let m = |q: f64, v1: f64, v2: f64| -> f64 {
            if v2 <= v1 {
                return 0.0;
            }
            let e = q - tau + 1.0;
            if e.abs() < 1e-12 {
                (tau - 1.0) * (v2 / v1).ln()
            } else {
                (tau - 1.0) * (v2.powf(e) - v1.powf(e)) / e
            }
        };
        let bw = self.beta * w;
        if sigma == 0.0 {
            return (1.0 - w.powf(1.0 - tau)) * self.j(bw, a);
        }
        // c(v) ≥ a on [vs, w]
        let vs = if a <= bw { 1.0 } else { (a / bw).powf(1.0 / sigma).min(w) };
        let coef = match self.alpha {
            Some(al) => al / (al - 1.0),
            None => 1.0,
        };
        let mut g = self.p * (coef * bw * m(sigma, vs, w) - a * m(0.0, vs, w));
        if let Some(al) = self.alpha {
            if vs > 1.0 {
                g += self.p * bw.powf(al) * a.powf(1.0 - al) / (al - 1.0) * m(sigma * al, 1.0, vs);
            }
        }
        g.max(0.0)
    }

    /// Λ(x, w) for the complement of the cube of half side `half` centred at 0.
    pub fn lambda(&self, x: &[f64], w: f64, half: f64) -> f64 {
        let d = self.d;
        if d == 1 {
            return self.g((half - x[0]).max(0.0), w) + self.g((half + x[0]).max(0.0), w);
        }
        let h_min = x.iter().map(|&v| half - v.abs()).fold(f64::INFINITY, f64::min).max(0.0);
        let bound = unit_ball_volume(d) * self.g(h_min.powi(d as i32), w);
        if bound < SKIP {
            return 0.0;
        }
        // radii where G loses smoothness: a = βκ(w, 1) and a = βκ(w, w)
        let kinks: Vec<f64> = [self.c_of(w, 1.0), self.c_of(w, w.max(1.0))].iter().map(|c| c.powf(1.0 / d as f64)).collect();
        let mut total = 0.0;
        for axis in 0..d {
            for s in [-1.0, 1.0] {
                let h = (half - s * x[axis]).max(1e-12 * half);
                let ranges: Vec<(f64, f64)> = (0..d)
                    .filter(|&j| j != axis)
                    .map(|j| (((-half - x[j]) / h).atan(), ((half - x[j]) / h).atan()))
                    .collect();
                total += self.face_integral(h, &ranges, w, &kinks);
            }
        }
        total / d as f64
    }

    fn face_integral(&self, h: f64, ranges: &[(f64, f64)], w: f64, kinks: &[f64]) -> f64 {
        let d = self.d;
        let integrand = |tans: &[f64]| -> f64 {
            let q: f64 = 1.0 + tans.iter().map(|t| t * t).sum::<f64>();
            let jac: f64 = tans.iter().map(|t| 1.0 + t * t).product::<f64>() / q.powf(0.5 * d as f64);
            self.g((h * h * q).powf(0.5 * d as f64), w) * jac
        };
        if ranges.len() == 1 {
            // exit radius h sec φ crosses a kink radius r at φ = ±acos(h/r)
            let cuts: Vec<f64> = kinks.iter().filter(|&&r| r > h).flat_map(|&r| [(h / r).acos(), -(h / r).acos()]).collect();
            let (lo, hi) = ranges[0];
            return panels(lo, hi, PANEL_PHI, &cuts)
                .into_iter()
                .map(|(l, u)| self.gl.integrate(l, u, |phi| integrand(&[phi.tan()])))
                .sum();
        }
        self.nested(ranges, &mut Vec::with_capacity(ranges.len()), &integrand)
    }

    fn nested(&self, ranges: &[(f64, f64)], tans: &mut Vec<f64>, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        let i = tans.len();
        if i == ranges.len() {
            return f(tans);
        }
        let (lo, hi) = ranges[i];
        let mut s = 0.0;
        for (l, u) in panels(lo, hi, PANEL_PHI, &[]) {
            s += self.gl.integrate(l, u, |phi| {
                tans.push(phi.tan());
                let v = self.nested(ranges, tans, f);
                tans.pop();
                v
            });
        }
        s
    }
}

/// How the complement of Λ_k is handled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundaryMethod {
    /// Outside integrated exactly given the inside vertices; `outer` restricts
    /// the outside to the box of volume `outer`·k.
    Conditional { outer: Option<f64> },
    /// Full graph sampled in the box of volume `box_factor`·k (≥ 4).
    Direct { box_factor: f64 },
}

impl Default for BoundaryMethod {
    fn default() -> Self {
        BoundaryMethod::Conditional { outer: None }
    }
}

/// One replicate of the downward boundary of Λ_k.
pub fn downward_boundary_once(params: &ModelParams, k: f64, seed: u64, method: BoundaryMethod) -> Result<f64, BoundaryError> {
    let d = params.d;
    let half = half_width(k, d);
    match method {
        BoundaryMethod::Conditional { outer } => {
            if params.vertex_set != VertexSet::Poisson {
                return Err(BoundaryError::NotPoisson);
            }
            let tail = DownwardTail::new(params);
            let outer_half = outer.map(|f| half_width(f * k, d));
            if outer_half.is_some_and(|o| o < half) {
                return Err(BoundaryError::Input("outer box smaller than Λ_k".into()));
            }
            let t = VertexTable::sample(params, k, seed);
            let mut s = 0.0;
            for i in 0..t.len() {
                let (x, w) = (t.pos(i), t.marks[i]);
                let mut lam = tail.lambda(x, w, half);
                if let Some(o) = outer_half {
                    lam = (lam - tail.lambda(x, w, o)).max(0.0);
                }
                s += -(-lam).exp_m1();
            }
            Ok(s)
        }
        BoundaryMethod::Direct { box_factor } => {
            if !(box_factor >= 4.0) {
                return Err(BoundaryError::BoxTooSmall(box_factor));
            }
            let n = box_factor * k;
            let t = VertexTable::sample(params, n, seed);
            let inside: Vec<bool> = (0..t.len()).map(|i| t.pos(i).iter().all(|v| v.abs() <= half)).collect();
            let mut hit = vec![false; t.len()];
            for_each_edge(&t, params, n, seed, default_method(t.len()), CoinScheme::default_for(params), &mut |u, v| {
                record_edge(&inside, &t.marks, u as usize, v as usize, &mut hit)
            });
            Ok(hit.iter().filter(|&&h| h).count() as f64)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundarySample {
    pub k: f64,
    pub rep: u32,
    pub seed: u64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryRow {
    pub k: f64,
    pub reps: u64,
    pub mean: f64,
    pub stderr: f64,
}

/// Per-k mean of the downward boundary over `reps` replicates.
pub fn estimate_downward_boundary(
    params: &ModelParams,
    k_grid: &[f64],
    reps: u32,
    seed: u64,
    method: BoundaryMethod,
) -> Result<(Vec<BoundarySample>, Vec<BoundaryRow>), BoundaryError> {
    if k_grid.iter().any(|&k| !(k > 0.0)) || reps == 0 {
        return Err(BoundaryError::Input("need positive k and reps".into()));
    }
    let jobs: Vec<(f64, u32)> = k_grid.iter().flat_map(|&k| (0..reps).map(move |r| (k, r))).collect();
    let samples: Vec<BoundarySample> = jobs
        .into_par_iter()
        .map(|(k, rep)| {
            let s = rep_seed_for(seed, k, rep);
            downward_boundary_once(params, k, s, method).map(|value| BoundarySample { k, rep, seed: s, value })
        })
        .collect::<Result<_, _>>()?;
    let table = k_grid
        .iter()
        .map(|&k| {
            let xs: Vec<f64> = samples.iter().filter(|s| s.k == k).map(|s| s.value).collect();
            let (mean, sd) = mean_sd(&xs);
            BoundaryRow { k, reps: xs.len() as u64, mean, stderr: sd / (xs.len() as f64).sqrt() }
        })
        .collect();
    Ok((samples, table))
}

fn record_edge(inside: &[bool], marks: &[f64], u: usize, v: usize, hit: &mut [bool]) {
    if inside[u] != inside[v] {
        let (i, o) = if inside[u] { (u, v) } else { (v, u) };
        if is_downward(marks[i], marks[o]) {
            hit[i] = true;
        }
    }
}

/// Vertices of Λ_k with a downward edge to the complement, for a given graph.
pub fn downward_boundary_of(vertices: &[MarkedVertex], edges: &[(u32, u32)], k: f64, d: usize) -> Vec<usize> {
    let half = half_width(k, d);
    let inside: Vec<bool> = vertices.iter().map(|v| v.pos.iter().all(|x| x.abs() <= half)).collect();
    let marks: Vec<f64> = vertices.iter().map(|v| v.mark).collect();
    let mut hit = vec![false; vertices.len()];
    for &(u, v) in edges {
        record_edge(&inside, &marks, u as usize, v as usize, &mut hit);
    }
    (0..vertices.len()).filter(|&i| hit[i]).collect()
}

/// The downward-edge predicate: the edge {u, v} is downward from u iff w_u ≥ w_v.
pub fn is_downward(w_u: f64, w_v: f64) -> bool {
    w_u >= w_v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Ext;
    use rand::{Rng, SeedableRng};

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn j_matches_quadrature() {
        let m = ModelParams::reference();
        let t = DownwardTail::new(&m);
        for (c, a) in [(2.0, 0.5), (2.0, 5.0), (0.3, 0.0)] {
            // ∫_a^∞ min(1, c/s)^3 ds with s = a + u/(1−u)
            let gl = GaussLegendre::new(NonZeroUsize::new(200).unwrap());
            let num: f64 = panels(0.0, 1.0, 0.01, &[])
                .into_iter()
                .map(|(l, h)| {
                    gl.integrate(l, h, |u| {
                        let s = a + u / (1.0 - u);
                        (c / s).min(1.0).powi(3) / ((1.0 - u) * (1.0 - u))
                    })
                })
                .sum();
            assert!((t.j(c, a) - num).abs() < 1e-6 * num.max(1e-3), "{c} {a}");
        }
    }

    #[test]
    fn closed_form_matches_numeric() {
        for (tau, alpha, sigma) in [(2.2, Ext::Finite(3.0), 1.0), (2.7, Ext::Finite(1.6), 0.4), (3.5, Ext::Inf, 2.0), (2.5, Ext::Finite(2.0), 0.0)] {
            let m = ModelParams::reference().with_tau(Ext::Finite(tau)).with_alpha(alpha).with_sigma(sigma).with_beta(1.3);
            let t = DownwardTail::new(&m);
            let tau_f = tau;
            for w in [1.5, 7.0, 300.0] {
                for a in [0.0, 0.7, 9.0, 2000.0] {
                    let c = t.g_closed(a, w, tau_f, sigma);
                    let n = t.g_numeric(a, w);
                    assert!((c - n).abs() <= 1e-7 * c.abs().max(1e-12), "tau={tau} sigma={sigma} w={w} a={a}: {c} vs {n}");
                }
            }
        }
    }

    #[test]
    fn g_matches_monte_carlo() {
        // G(a, w) = E[1{V ≤ w} J(βκ(w,V), a)] by sampling V
        let m = ModelParams::reference().with_beta(0.7);
        let t = DownwardTail::new(&m);
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let (a, w) = (3.0, 12.0);
        let reps = 400_000;
        let mut s = 0.0;
        for _ in 0..reps {
            let v: f64 = (1.0 - r.random::<f64>()).powf(-1.0 / 1.2);
            if v <= w {
                s += t.j(0.7 * w * v, a);
            }
        }
        let mc = s / reps as f64;
        assert!((mc - t.g(a, w)).abs() < 0.01 * t.g(a, w), "{mc} {}", t.g(a, w));
    }

    #[test]
    fn threshold_disc_area_2d() {
        // τ = ∞, α = ∞: Λ(x) = p |B(x, √β) \ Λ_k|
        let m = ModelParams::reference().with_tau(Ext::Inf).with_alpha(Ext::Inf).with_d(2).with_beta(2.0).with_p(0.6);
        let t = DownwardTail::new(&m);
        let half = 5.0;
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for x in [[4.5, 0.0], [4.2, 4.6], [-3.9, 1.0], [0.0, 0.0], [4.9, 4.95]] {
            let rad = 2f64.sqrt();
            let trials = 400_000;
            let mut out = 0u32;
            for _ in 0..trials {
                let (dx, dy) = loop {
                    let (a, b) = (r.random::<f64>() * 2.0 - 1.0, r.random::<f64>() * 2.0 - 1.0);
                    if a * a + b * b <= 1.0 {
                        break (a * rad, b * rad);
                    }
                };
                if (x[0] + dx).abs() > half || (x[1] + dy).abs() > half {
                    out += 1;
                }
            }
            let area = out as f64 / trials as f64 * std::f64::consts::PI * 2.0;
            let lam = t.lambda(&x, 1.0, half);
            assert!((lam - 0.6 * area).abs() < 0.01, "{x:?}: {lam} vs {}", 0.6 * area);
        }
    }

    #[test]
    fn lambda_3d_against_sampling() {
        let m = ModelParams::reference().with_tau(Ext::Inf).with_alpha(Ext::Finite(2.5)).with_d(3).with_beta(1.5);
        let t = DownwardTail::new(&m);
        let half = 3.0;
        let x = [2.2, -1.0, 0.5];
        // Λ = ∫_{y ∉ cube} p min(1, β/‖x−y‖^3)^α dy, by importance sampling of radius
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let trials = 400_000;
        let mut s = 0.0;
        for _ in 0..trials {
            // direction uniform, radius with density ∝ r² on the volume s = r³ ~ Exp-like
            let dir: Vec<f64> = loop {
                let v: Vec<f64> = (0..3).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
                let n2: f64 = v.iter().map(|a| a * a).sum();
                if n2 <= 1.0 && n2 > 1e-12 {
                    break v.iter().map(|a| a / n2.sqrt()).collect();
                }
            };
            // volume s with density c/(c+s)^2
            let u: f64 = 1.0 - r.random::<f64>();
            let c = 2.0;
            let vol = c * (1.0 / u - 1.0);
            let rad = vol.cbrt();
            let y: Vec<f64> = (0..3).map(|i| x[i] + rad * dir[i]).collect();
            if y.iter().any(|v| v.abs() > half) {
                let p = (1.5 / vol).min(1.0).powf(2.5);
                s += p * (c + vol) * (c + vol) / c;
            }
        }
        // dy = (4π/3) ds in volume coordinates
        let mc = s / trials as f64 * 4.0 / 3.0 * std::f64::consts::PI;
        let lam = t.lambda(&x, 1.0, half);
        assert!((lam - mc).abs() < 0.03 * lam, "{lam} vs {mc}");
    }

    #[test]
    fn downward_predicate() {
        assert!(is_downward(3.0, 2.0));
        assert!(!is_downward(2.0, 3.0));
        // Λ_1 = [-1/2, 1/2]: u inside with mark 3, v outside with mark 2
        let vs = [MarkedVertex::new(&[0.4], 3.0), MarkedVertex::new(&[0.6], 2.0)];
        assert_eq!(downward_boundary_of(&vs, &[(0, 1)], 1.0, 1), vec![0]);
        // reverse orientation: the inside vertex has the smaller mark
        let vs = [MarkedVertex::new(&[0.4], 2.0), MarkedVertex::new(&[0.6], 3.0)];
        assert!(downward_boundary_of(&vs, &[(0, 1)], 1.0, 1).is_empty());
    }

    #[test]
    fn conditional_truncated_matches_direct() {
        // same law when the outside is cut to the simulated box
        let m = ModelParams::reference().with_beta(0.5);
        let k = 64.0;
        let reps = 400;
        let cond = estimate_downward_boundary(&m, &[k], reps, 5, BoundaryMethod::Conditional { outer: Some(8.0) }).unwrap().1[0].clone();
        let dir = estimate_downward_boundary(&m, &[k], reps, 6, BoundaryMethod::Direct { box_factor: 8.0 }).unwrap().1[0].clone();
        let se = (cond.stderr.powi(2) + dir.stderr.powi(2)).sqrt();
        assert!((cond.mean - dir.mean).abs() < 4.0 * se, "{cond:?} {dir:?}");
    }

    #[test]
    fn threshold_2d_conditional_matches_direct() {
        let m = ModelParams::reference().with_tau(Ext::Inf).with_alpha(Ext::Inf).with_d(2);
        let k = 100.0;
        let cond = estimate_downward_boundary(&m, &[k], 300, 1, BoundaryMethod::Conditional { outer: None }).unwrap().1[0].clone();
        let dir = estimate_downward_boundary(&m, &[k], 300, 2, BoundaryMethod::Direct { box_factor: 4.0 }).unwrap().1[0].clone();
        let se = (cond.stderr.powi(2) + dir.stderr.powi(2)).sqrt();
        assert!((cond.mean - dir.mean).abs() < 4.0 * se, "{cond:?} {dir:?}");
    }

    #[test]
    fn errors() {
        let m = ModelParams::reference();
        assert_eq!(downward_boundary_once(&m, 10.0, 0, BoundaryMethod::Direct { box_factor: 2.0 }), Err(BoundaryError::BoxTooSmall(2.0)));
        let lat = m.clone().with_vertex_set(VertexSet::Lattice);
        assert_eq!(downward_boundary_once(&lat, 10.0, 0, BoundaryMethod::default()), Err(BoundaryError::NotPoisson));
    }
}
