//! Expandable point sets, unit cells of Λ_n, proper covers and the
//! cover-expansion algorithm.
//!
//! Boxes Λ(x, s) are closed, axis-parallel, centred at x with volume s.
//! Distances between points and cell centres are Euclidean.

use std::collections::BTreeMap;
use std::f64::consts::E;

use rand::Rng;
use thiserror::Error;

use crate::model::{dist_pow_d, Connector, MarkedVertex, ModelParams, Point};
use crate::rng;
use crate::sampler::half_width;

/// Relative tolerance for volume ties and grazing contacts.
pub const TIE_REL: f64 = 1e-12;
/// Absolute tolerance for the geometric certificates.
pub const GEOM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverError {
    #[error("w_bar = {w_bar} must exceed {min}")]
    MarkTooSmall { w_bar: f64, min: f64 },
    #[error("s = {s} exceeds the volume n = {n}")]
    STooLarge { s: f64, n: f64 },
    #[error("points are not {s}-expandable (threshold {threshold})")]
    NotExpandable { s: f64, threshold: f64 },
    #[error("point {0} lies outside the box of volume n")]
    OutsideBox(usize),
    #[error("bad input: {0}")]
    Input(String),
}

/// ν = e d^{d/2} 2^{3d}
pub fn nu(d: usize) -> f64 {
    E * (d as f64).powf(d as f64 / 2.0) * 2f64.powi(3 * d as i32)
}

fn sup_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------- expandability

/// Infimum of the s for which `points` is s-expandable (0 for sets that are
/// expandable for every s > 0).
///
/// For a centre x let v_p = (2‖p − x‖_∞)^d, the volume of the smallest closed
/// box around x containing p. The count N_x(s') is a right-continuous step
/// function with jumps at the v_p, so N_x(s')/s' > e happens exactly on the
/// intervals [v_(k), k/e) with v_(k) < k/e, where k counts every point with
/// v_p ≤ v_(k). The threshold is the largest such k/e. Centres farther than
/// (N/e)^{1/d}/2 (sup norm) from every point have v_p ≥ N/e for all p and
/// cannot contribute.
pub fn expandability_threshold(points: &[Point], d: usize) -> f64 {
    let n_pts = points.len();
    if n_pts == 0 {
        return 0.0;
    }
    let reach = (n_pts as f64 / E).powf(1.0 / d as f64) / 2.0;
    let r = reach.ceil() as i64 + 1;
    // bucket points in a dense grid of unit cells over their bounding box
    let mut lo = vec![i64::MAX; d];
    let mut hi = vec![i64::MIN; d];
    for p in points {
        for a in 0..d {
            lo[a] = lo[a].min(p[a].floor() as i64);
            hi[a] = hi[a].max(p[a].floor() as i64);
        }
    }
    let origin = lo.clone();
    let dims: Vec<usize> = (0..d).map(|a| (hi[a] - lo[a] + 1) as usize).collect();
    let flat = |c: &[i64]| -> usize {
        let mut k = 0;
        for a in (0..d).rev() {
            k = k * dims[a] + (c[a] - origin[a]) as usize;
        }
        k
    };
    let mut grid: Vec<Vec<u32>> = vec![Vec::new(); dims.iter().product()];
    for (i, p) in points.iter().enumerate() {
        let c: Vec<i64> = p.iter().map(|x| x.floor() as i64).collect();
        grid[flat(&c)].push(i as u32);
    }
    let mut best = 0.0f64;
    let mut vs: Vec<f64> = Vec::new();
    let mut x = vec![0.0; d];
    let mut clo = vec![0i64; d];
    let mut chi = vec![0i64; d];
    let zlo: Vec<i64> = lo.iter().map(|v| v - r).collect();
    let zhi: Vec<i64> = hi.iter().map(|v| v + r + 1).collect();
    for_each_lattice(&zlo, &zhi, &mut |z| {
        for a in 0..d {
            x[a] = z[a] as f64;
            clo[a] = (z[a] - r).max(lo[a]);
            chi[a] = (z[a] + r).min(hi[a]);
        }
        vs.clear();
        for_each_lattice(&clo, &chi, &mut |c| {
            for &i in &grid[flat(c)] {
                let t = 2.0 * sup_norm(&points[i as usize], &x);
                if t < 2.0 * reach {
                    vs.push(t.powi(d as i32));
                }
            }
        });
        // k/e ≤ |vs|/e bounds every candidate of this centre
        if vs.len() as f64 / E <= best {
            return;
        }
        vs.sort_unstable_by(f64::total_cmp);
        let mut k = 0;
        while k < vs.len() {
            let v = vs[k];
            while k < vs.len() && vs[k] == v {
                k += 1;
            }
            let cand = k as f64 / E;
            if v < cand && cand > best {
                best = cand;
            }
        }
    });
    best
}

/// Iterate over the integer points of the box [lo, hi] (inclusive).
fn for_each_lattice(lo: &[i64], hi: &[i64], f: &mut dyn FnMut(&[i64])) {
    let d = lo.len();
    if (0..d).any(|a| lo[a] > hi[a]) {
        return;
    }
    let mut z = lo.to_vec();
    loop {
        f(&z);
        let mut a = 0;
        loop {
            if a == d {
                return;
            }
            z[a] += 1;
            if z[a] <= hi[a] {
                break;
            }
            z[a] = lo[a];
            a += 1;
        }
    }
}

/// Whether |points ∩ Λ_{s'}(x)| / s' ≤ e for every x ∈ ℤ^d and s' ≥ s.
pub fn is_expandable(points: &[Point], s: f64, d: usize) -> bool {
    assert!(s > 0.0, "s must be positive");
    s >= expandability_threshold(points, d)
}

/// s(w̄) = (2^d β w̄)^{1/(1-1/α)}, and 2^d β w̄ for the threshold profile.
pub fn s_of_wbar(w_bar: f64, params: &ModelParams) -> f64 {
    let base = 2f64.powi(params.d as i32) * params.beta * w_bar;
    match params.alpha().finite() {
        Some(a) => base.powf(1.0 / (1.0 - 1.0 / a)),
        None => base,
    }
}

/// Lower bound on w̄ required by the connection guarantee: (2^d d^{d/2}/β) ∨ 1.
pub fn min_wbar(params: &ModelParams) -> f64 {
    let d = params.d as f64;
    (2f64.powf(d) * d.powf(d / 2.0) / params.beta).max(1.0)
}

// ---------------------------------------------------------------- cells

/// Unit cells of Λ_n = [-h, h]^d, h = n^{1/d}/2, indexed by the integer
/// centres z with |z_a| ≤ ⌊h⌋. A point on a face shared by two unit boxes goes
/// to the box with the smaller centre; unit boxes with centre outside Λ_n are
/// merged into the nearest inside centre (coordinatewise clamping).
#[derive(Clone, Debug, PartialEq)]
pub struct CellDecomposition {
    pub n: f64,
    pub d: usize,
    pub h: f64,
    pub zmax: i64,
}

impl CellDecomposition {
    pub fn new(n: f64, d: usize) -> Self {
        let h = half_width(n, d);
        CellDecomposition { n, d, h, zmax: h.floor() as i64 }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.abs() <= self.h)
    }

    pub fn num_cells(&self) -> u64 {
        ((2 * self.zmax + 1) as u64).pow(self.d as u32)
    }

    /// Centre of the cell holding x.
    pub fn cell_of(&self, x: &[f64]) -> Vec<i64> {
        x.iter().map(|&v| ((v - 0.5).ceil() as i64).clamp(-self.zmax, self.zmax)).collect()
    }

    fn interval(&self, z: i64) -> (f64, f64) {
        let lo = if z == -self.zmax { -self.h } else { z as f64 - 0.5 };
        let hi = if z == self.zmax { self.h } else { z as f64 + 0.5 };
        (lo, hi)
    }

    /// The cell B_z as an axis-parallel box (lo, hi).
    pub fn region(&self, z: &[i64]) -> (Vec<f64>, Vec<f64>) {
        z.iter().map(|&c| self.interval(c)).unzip()
    }

    pub fn volume(&self, z: &[i64]) -> f64 {
        z.iter().map(|&c| {
            let (a, b) = self.interval(c);
            b - a
        }).product()
    }

    /// Largest Euclidean distance between two points of B_z.
    pub fn diameter(&self, z: &[i64]) -> f64 {
        z.iter().map(|&c| {
            let (a, b) = self.interval(c);
            (b - a) * (b - a)
        }).sum::<f64>().sqrt()
    }

    /// Point indices grouped by cell, cells in lexicographic order of centre.
    pub fn assign(&self, points: &[Point]) -> BTreeMap<Vec<i64>, Vec<usize>> {
        let mut m: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
        for (i, p) in points.iter().enumerate() {
            m.entry(self.cell_of(p)).or_default().push(i);
        }
        m
    }
}

// ---------------------------------------------------------------- pigeonhole

/// If m' < L(1-δ)/ν, the labels i with ℓ_i ≥ ν; they carry at least δL of the
/// total. `None` when the hypothesis fails.
pub fn pigeonhole_split(counts: &[u64], nu: f64, delta: f64) -> Option<Vec<usize>> {
    assert!(nu >= 1.0 && delta > 0.0 && delta < 1.0);
    let total: u64 = counts.iter().sum();
    if (counts.len() as f64) >= total as f64 * (1.0 - delta) / nu {
        return None;
    }
    let idx: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] as f64 >= nu).collect();
    let heavy: u64 = idx.iter().map(|&i| counts[i]).sum();
    debug_assert!(heavy as f64 >= delta * total as f64);
    Some(idx)
}

// ---------------------------------------------------------------- cover expansion

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoverKind {
    Proper,
    Expanded,
}

/// Axis-parallel cube given by centre and volume.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverBox {
    pub center: Vec<f64>,
    pub volume: f64,
}

impl CoverBox {
    pub fn side(&self, d: usize) -> f64 {
        self.volume.powf(1.0 / d as f64)
    }

    pub fn contains(&self, x: &[f64], d: usize) -> bool {
        let r = self.side(d) / 2.0;
        x.iter().zip(&self.center).all(|(a, c)| (a - c).abs() <= r)
    }

    /// Largest Euclidean distance from x to a point of the box.
    pub fn far_distance(&self, x: &[f64], d: usize) -> f64 {
        let r = self.side(d) / 2.0;
        x.iter().zip(&self.center).map(|(a, c)| {
            let t = (a - c).abs() + r;
            t * t
        }).sum::<f64>().sqrt()
    }
}

/// Output of [`expand_cells`]: boxes indexed by their label and a label for every cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Expansion {
    pub d: usize,
    pub centers: Vec<Vec<f64>>,
    pub counts: Vec<u64>,
    /// allocation[i] = label of the box cell i is allocated to
    pub allocation: Vec<usize>,
    /// labels in use, increasing
    pub labels: Vec<usize>,
    pub rounds: u64,
}

impl Expansion {
    pub fn volume(&self, j: usize) -> f64 {
        let nu = nu(self.d);
        (0..self.counts.len()).filter(|&i| self.allocation[i] == j).map(|i| self.counts[i] as f64).sum::<f64>() / nu
    }

    pub fn boxes(&self) -> Vec<(usize, CoverBox)> {
        self.labels.iter().map(|&j| (j, CoverBox { center: self.centers[j].clone(), volume: self.volume(j) })).collect()
    }
}

fn overlap(a: &[f64], sa: f64, b: &[f64], sb: f64) -> bool {
    let reach = (sa + sb) / 2.0;
    a.iter().zip(b).all(|(x, y)| (x - y).abs() < reach * (1.0 - TIE_REL))
}

/// The cover-expansion algorithm on cells with integer centres `centers` and
/// point counts `counts` (each at least ν). Starts from the identity
/// allocation and repeats the merge step until all boxes are disjoint.
pub fn expand_cells(centers: &[Vec<f64>], counts: &[u64], d: usize) -> Result<Expansion, CoverError> {
    let m = centers.len();
    if counts.len() != m {
        return Err(CoverError::Input("centers and counts differ in length".into()));
    }
    let nu = nu(d);
    if let Some(i) = (0..m).find(|&i| (counts[i] as f64) < nu) {
        return Err(CoverError::Input(format!("cell {i} holds {} < ν = {nu} points", counts[i])));
    }
    let mut alloc: Vec<usize> = (0..m).collect();
    let mut mass: Vec<u64> = counts.to_vec();
    let mut rounds = 0u64;
    let side = |mass: u64| (mass as f64 / nu).powf(1.0 / d as f64);
    loop {
        let live: Vec<usize> = (0..m).filter(|&j| mass[j] > 0).collect();
        let mut has_overlap = vec![false; m];
        for (x, &a) in live.iter().enumerate() {
            for &b in &live[x + 1..] {
                if overlap(&centers[a], side(mass[a]), &centers[b], side(mass[b])) {
                    has_overlap[a] = true;
                    has_overlap[b] = true;
                }
            }
        }
        let pick = |cands: &mut dyn Iterator<Item = usize>| -> Option<usize> {
            let mut best: Option<usize> = None;
            for j in cands {
                best = match best {
                    None => Some(j),
                    Some(b) => {
                        let (vj, vb) = (mass[j] as f64, mass[b] as f64);
                        if vj > vb * (1.0 + TIE_REL) { Some(j) } else { Some(b) }
                    }
                };
            }
            best
        };
        let Some(j1) = pick(&mut live.iter().copied().filter(|&j| has_overlap[j])) else {
            break;
        };
        let s1 = side(mass[j1]);
        let j2 = pick(&mut live.iter().copied().filter(|&j| j != j1 && overlap(&centers[j1], s1, &centers[j], side(mass[j]))))
            .expect("j1 overlaps some box");
        let reach = (d as f64).sqrt() * s1;
        for i in 0..m {
            if alloc[i] != j2 {
                continue;
            }
            let to = if euclid(&centers[i], &centers[j1]) <= reach { j1 } else { i };
            mass[j2] -= counts[i];
            mass[to] += counts[i];
            alloc[i] = to;
        }
        rounds += 1;
    }
    let labels = (0..m).filter(|&j| mass[j] > 0).collect();
    Ok(Expansion { d, centers: centers.to_vec(), counts: counts.to_vec(), allocation: alloc, labels, rounds })
}

/// Pass/fail of every certificate, with the worst slack observed.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificates {
    pub disjoint: bool,
    pub volume_formula: bool,
    pub near: bool,
    pub min_box_volume: bool,
    pub obs_far: bool,
    pub obs_dense: bool,
    pub obs_max_volume: Option<bool>,
    pub covered_volume: bool,
    pub rounds_bound: bool,
}

impl Certificates {
    pub fn all(&self) -> bool {
        self.disjoint
            && self.volume_formula
            && self.near
            && self.min_box_volume
            && self.obs_far
            && self.obs_dense
            && self.obs_max_volume.unwrap_or(true)
            && self.covered_volume
            && self.rounds_bound
    }

    pub fn rows(&self) -> Vec<(&'static str, Option<bool>)> {
        vec![
            ("disjoint", Some(self.disjoint)),
            ("volume_formula", Some(self.volume_formula)),
            ("near", Some(self.near)),
            ("box_volume_at_least_1", Some(self.min_box_volume)),
            ("far_distance", Some(self.obs_far)),
            ("enlarged_box_dense", Some(self.obs_dense)),
            ("box_volume_at_most_s", self.obs_max_volume),
            ("covered_volume", Some(self.covered_volume)),
            ("rounds_bound", Some(self.rounds_bound)),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverResult {
    pub kind: CoverKind,
    pub d: usize,
    pub n: f64,
    /// proper: the occupied cells (centre, volume of the cell region);
    /// expanded: the boxes B_j^★
    pub boxes: Vec<CoverBox>,
    /// proper: cell regions (lo, hi) clipped to Λ_n, parallel to `boxes`
    pub regions: Vec<(Vec<f64>, Vec<f64>)>,
    /// cell index (order of `cell_centers`) → box index, for allocated cells
    pub allocation: Vec<Option<usize>>,
    pub cell_centers: Vec<Vec<i64>>,
    pub cell_counts: Vec<u64>,
    pub covered_region_volume: f64,
    pub rounds: u64,
    pub input_size: usize,
    pub s: f64,
}

impl CoverResult {
    /// Uniform point of the covered region (boxes clipped to Λ_n).
    pub fn sample_point<R: Rng + ?Sized>(&self, r: &mut R) -> Vec<f64> {
        let vols: Vec<f64> = self.regions.iter().map(|(lo, hi)| lo.iter().zip(hi).map(|(a, b)| b - a).product()).collect();
        let total: f64 = vols.iter().sum();
        let mut t = r.random::<f64>() * total;
        let mut k = vols.len() - 1;
        for (i, v) in vols.iter().enumerate() {
            if t < *v {
                k = i;
                break;
            }
            t -= v;
        }
        let (lo, hi) = &self.regions[k];
        lo.iter().zip(hi).map(|(a, b)| a + (b - a) * r.random::<f64>()).collect()
    }

    /// Check every certificate against the original points.
    pub fn certify(&self, points: &[Point]) -> Certificates {
        let d = self.d;
        let nu = nu(d);
        let big_l = self.input_size as f64;
        let covered = self.covered_region_volume >= big_l / (2f64.powi(4 * d as i32 + 1) * E * (d as f64).powf(d as f64 / 2.0)) - GEOM_TOL;
        match self.kind {
            CoverKind::Proper => Certificates {
                disjoint: true,
                volume_formula: true,
                near: true,
                min_box_volume: true,
                obs_far: true,
                obs_dense: true,
                obs_max_volume: None,
                covered_volume: covered,
                rounds_bound: self.rounds == 0,
            },
            CoverKind::Expanded => {
                let nb = self.boxes.len();
                let mut disjoint = true;
                for a in 0..nb {
                    for b in a + 1..nb {
                        let (ba, bb) = (&self.boxes[a], &self.boxes[b]);
                        let reach = (ba.side(d) + bb.side(d)) / 2.0;
                        let depth = ba.center.iter().zip(&bb.center).map(|(x, y)| reach - (x - y).abs()).fold(f64::INFINITY, f64::min);
                        if depth > GEOM_TOL {
                            disjoint = false;
                        }
                    }
                }
                let mut mass = vec![0u64; nb];
                let mut near = true;
                let mut far = true;
                let cd = CellDecomposition::new(self.n, d);
                let cells = cd.assign(points);
                for (c, z) in self.cell_centers.iter().enumerate() {
                    let Some(j) = self.allocation[c] else { continue };
                    mass[j] += self.cell_counts[c];
                    let b = &self.boxes[j];
                    let zf: Vec<f64> = z.iter().map(|&v| v as f64).collect();
                    let dist = euclid(&zf, &b.center);
                    if dist.powi(d as i32) > (d as f64).powf(d as f64 / 2.0) * b.volume + GEOM_TOL {
                        near = false;
                    }
                    let bound = 4.0 * (d as f64).sqrt() * b.side(d);
                    for &i in cells.get(z).map(|v| v.as_slice()).unwrap_or(&[]) {
                        if b.far_distance(&points[i], d) > bound + GEOM_TOL {
                            far = false;
                        }
                    }
                }
                let volume_formula = (0..nb).all(|j| (self.boxes[j].volume - mass[j] as f64 / nu).abs() <= GEOM_TOL * self.boxes[j].volume.max(1.0));
                let min_box_volume = self.boxes.iter().all(|b| b.volume >= 1.0 - GEOM_TOL);
                let enlarge = (d as f64).powf(d as f64 / 2.0) * 2f64.powi(3 * d as i32);
                let dense = self.boxes.iter().all(|b| {
                    let big = CoverBox { center: b.center.clone(), volume: enlarge * b.volume };
                    let inside = points.iter().filter(|p| big.contains(p, d)).count();
                    inside as f64 >= E * big.volume * (1.0 - GEOM_TOL)
                });
                let max_vol = if self.s.is_finite() {
                    Some(self.boxes.iter().all(|b| b.volume <= self.s / enlarge + GEOM_TOL))
                } else {
                    None
                };
                let total: u64 = self.cell_counts.iter().zip(&self.allocation).filter(|(_, a)| a.is_some()).map(|(c, _)| *c).sum();
                Certificates {
                    disjoint,
                    volume_formula,
                    near,
                    min_box_volume,
                    obs_far: far,
                    obs_dense: dense,
                    obs_max_volume: max_vol,
                    covered_volume: covered,
                    rounds_bound: self.rounds as f64 <= total as f64 / nu,
                }
            }
        }
    }
}

fn clip(b: &CoverBox, h: f64, d: usize) -> (Vec<f64>, Vec<f64>) {
    let r = b.side(d) / 2.0;
    b.center.iter().map(|c| ((c - r).max(-h), (c + r).min(h))).unzip()
}

fn region_volume(lo: &[f64], hi: &[f64]) -> f64 {
    lo.iter().zip(hi).map(|(a, b)| (b - a).max(0.0)).product()
}

/// Proper cover or cover expansion of `points` ⊂ Λ_n, given that the points are
/// s-expandable (checked) and s ≤ n.
pub fn cover_with_s(points: &[Point], n: f64, s: f64, d: usize) -> Result<CoverResult, CoverError> {
    if !(s > 0.0) {
        return Err(CoverError::Input(format!("s must be positive, got {s}")));
    }
    if s > n {
        return Err(CoverError::STooLarge { s, n });
    }
    let cd = CellDecomposition::new(n, d);
    if let Some(i) = points.iter().position(|p| p.len() != d || !cd.contains(p)) {
        return Err(CoverError::OutsideBox(i));
    }
    let threshold = expandability_threshold(points, d);
    if s < threshold {
        return Err(CoverError::NotExpandable { s, threshold });
    }
    let nu = nu(d);
    let cells = cd.assign(points);
    let cell_centers: Vec<Vec<i64>> = cells.keys().cloned().collect();
    let cell_counts: Vec<u64> = cells.values().map(|v| v.len() as u64).collect();
    let big_l = points.len();
    let mprime = cell_centers.len();

    if mprime as f64 >= big_l as f64 / (2.0 * nu) {
        let regions: Vec<_> = cell_centers.iter().map(|z| cd.region(z)).collect();
        let boxes = cell_centers
            .iter()
            .map(|z| CoverBox { center: z.iter().map(|&v| v as f64).collect(), volume: cd.volume(z) })
            .collect();
        let covered = cell_centers.iter().map(|z| cd.volume(z)).sum();
        return Ok(CoverResult {
            kind: CoverKind::Proper,
            d,
            n,
            boxes,
            regions,
            allocation: (0..mprime).map(Some).collect(),
            cell_centers,
            cell_counts,
            covered_region_volume: covered,
            rounds: 0,
            input_size: big_l,
            s,
        });
    }

    let heavy = pigeonhole_split(&cell_counts, nu, 0.5).expect("no proper cover implies the pigeonhole hypothesis");
    let centers: Vec<Vec<f64>> = heavy.iter().map(|&i| cell_centers[i].iter().map(|&v| v as f64).collect()).collect();
    let counts: Vec<u64> = heavy.iter().map(|&i| cell_counts[i]).collect();
    let ex = expand_cells(&centers, &counts, d)?;
    let mut label_to_box = vec![usize::MAX; heavy.len()];
    for (b, &j) in ex.labels.iter().enumerate() {
        label_to_box[j] = b;
    }
    let boxes: Vec<CoverBox> = ex.boxes().into_iter().map(|(_, b)| b).collect();
    let mut allocation = vec![None; mprime];
    for (k, &i) in heavy.iter().enumerate() {
        allocation[i] = Some(label_to_box[ex.allocation[k]]);
    }
    let regions: Vec<_> = boxes.iter().map(|b| clip(b, cd.h, d)).collect();
    let covered = regions.iter().map(|(lo, hi)| region_volume(lo, hi)).sum();
    Ok(CoverResult {
        kind: CoverKind::Expanded,
        d,
        n,
        boxes,
        regions,
        allocation,
        cell_centers,
        cell_counts,
        covered_region_volume: covered,
        rounds: ex.rounds,
        input_size: big_l,
        s,
    })
}

/// Cover of `points` for test vertices of mark at least `w_bar`, with s = s(w̄).
pub fn cover(points: &[Point], n: f64, w_bar: f64, params: &ModelParams) -> Result<CoverResult, CoverError> {
    let min = min_wbar(params);
    if !(w_bar > min) {
        return Err(CoverError::MarkTooSmall { w_bar, min });
    }
    cover_with_s(points, n, s_of_wbar(w_bar, params), params.d)
}

/// Empirical connection frequency of test vertices placed uniformly in the
/// covered region with mark `w_bar` (the smallest admissible mark) to `l`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuaranteeCheck {
    pub trials: u64,
    pub hits: u64,
    pub frequency: f64,
    pub stderr: f64,
    /// p/2 − 3·stderr
    pub floor: f64,
}

impl GuaranteeCheck {
    pub fn passed(&self) -> bool {
        self.frequency >= self.floor
    }
}

pub fn connection_guarantee_check(
    cover: &CoverResult,
    l: &[MarkedVertex],
    w_bar: f64,
    params: &ModelParams,
    trials: u64,
    seed: u64,
) -> GuaranteeCheck {
    let conn = Connector::new(params);
    let d = params.d;
    let mut r = rng::stream(seed, rng::TAG_REP, 0);
    let mut hits = 0u64;
    for _ in 0..trials {
        let x = cover.sample_point(&mut r);
        let joined = l.iter().any(|v| {
            let q = conn.prob(dist_pow_d(&x, &v.pos, d), w_bar, v.mark);
            r.random::<f64>() < q
        });
        if joined {
            hits += 1;
        }
    }
    let f = hits as f64 / trials.max(1) as f64;
    let se = (f * (1.0 - f) / trials.max(1) as f64).sqrt();
    GuaranteeCheck { trials, hits, frequency: f, stderr: se, floor: params.p / 2.0 - 3.0 * se }
}

/// Families of random point sets used to exercise the cover construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FuzzKind {
    Uniform,
    Clustered,
    Blob,
}

/// A random point set of the given family together with a volume n and an s
/// for which the set is s-expandable and s ≤ n.
pub fn fuzz_point_set(kind: FuzzKind, d: usize, seed: u64) -> (Vec<Point>, f64, f64) {
    let mut r = rng::stream(seed, rng::TAG_REP, kind as u64 * 16 + d as u64);
    let nu = nu(d);
    let mut pts: Vec<Point> = Vec::new();
    let mut n0: f64;
    match kind {
        FuzzKind::Uniform => {
            n0 = 2f64.powi(r.random_range(4..10));
            let count = (n0 * r.random_range(0.2..2.0)) as usize + 1;
            let h = half_width(n0, d);
            for _ in 0..count {
                pts.push((0..d).map(|_| r.random_range(-h..h)).collect());
            }
        }
        FuzzKind::Clustered => {
            let k = r.random_range(1..5);
            let (span, rmax) = if d == 1 { (20.0, 4.0) } else { (8.0, 1.2) };
            let mut spread = 0.0f64;
            for _ in 0..k {
                let c: Vec<f64> = (0..d).map(|_| r.random_range(-span..span)).collect();
                let rad: f64 = r.random_range(0.3..rmax);
                let count = if d == 1 {
                    (nu * r.random_range(1.0..6.0) * (2.0 * rad).max(1.0)) as usize
                } else {
                    (nu * r.random_range(0.5..3.0)) as usize
                };
                spread = spread.max(c.iter().map(|v| v.abs()).fold(0.0, f64::max) + rad);
                for _ in 0..count {
                    pts.push(c.iter().map(|v| v + r.random_range(-rad..rad)).collect());
                }
            }
            n0 = (2.0 * spread + 2.0).powi(d as i32);
        }
        FuzzKind::Blob => {
            let count = (nu * r.random_range(1.0..if d == 1 { 8.0 } else { 4.0 })) as usize;
            let c: Vec<f64> = (0..d).map(|_| r.random_range(-5i64..=5) as f64).collect();
            for _ in 0..count {
                pts.push(c.iter().map(|v| v + r.random_range(-0.5..0.5)).collect());
            }
            n0 = 14f64.powi(d as i32);
        }
    }
    let s = expandability_threshold(&pts, d).max(1.0);
    n0 = n0.max(s);
    (pts, n0, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Ext;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use smallvec::smallvec;

    fn pts1(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| smallvec![x]).collect()
    }

    /// Ratio check over integer centres near the cloud and a fine grid of s'.
    fn brute_expandable(points: &[Point], s: f64, d: usize) -> bool {
        let n = points.len() as f64;
        let top = (n / E).max(s) * 1.01 + 1.0;
        let reach = ((top).powf(1.0 / d as f64) / 2.0).ceil() as i64 + 2;
        let lo: Vec<i64> = (0..d).map(|a| points.iter().map(|p| p[a].floor() as i64).min().unwrap_or(0) - reach).collect();
        let hi: Vec<i64> = (0..d).map(|a| points.iter().map(|p| p[a].ceil() as i64).max().unwrap_or(0) + reach).collect();
        let mut ok = true;
        for_each_lattice(&lo, &hi, &mut |z| {
            let x: Vec<f64> = z.iter().map(|&v| v as f64).collect();
            // candidate s' values: s itself and every v_p above s
            let mut cands = vec![s];
            for p in points {
                let v = (2.0 * sup_norm(p, &x)).powi(d as i32);
                if v >= s {
                    cands.push(v);
                }
            }
            for sp in cands {
                let r = sp.powf(1.0 / d as f64) / 2.0;
                let cnt = points.iter().filter(|p| sup_norm(p, &x) <= r * (1.0 + 1e-12)).count();
                if cnt as f64 / sp > E * (1.0 + 1e-12) {
                    ok = false;
                }
            }
        });
        ok
    }

    #[test]
    fn expandable_examples() {
        assert!(is_expandable(&[], 0.5, 1));
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let blob: Vec<Point> = (0..30).map(|_| smallvec![r.random::<f64>() - 0.5]).collect();
        assert!(!is_expandable(&blob, 10.0, 1));
        assert!(is_expandable(&blob, 12.0, 1));
        assert!(!brute_expandable(&blob, 10.0, 1));
        assert!(brute_expandable(&blob, 12.0, 1));
    }

    #[test]
    fn uniform_points_are_expandable() {
        let n = 1e4;
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point> = (0..10_000).map(|_| smallvec![(r.random::<f64>() - 0.5) * n]).collect();
        assert!(is_expandable(&pts, 200.0, 1));
    }

    #[test]
    fn s_of_wbar_example() {
        let m = ModelParams::new(1, Ext::Finite(2.5), Ext::Finite(2.0), 1.0, 1.0, 1.0).unwrap();
        assert!((s_of_wbar(8.0, &m) - 256.0).abs() < 1e-9);
    }

    #[test]
    fn pigeonhole_examples() {
        assert_eq!(pigeonhole_split(&[10, 1], 2.0, 0.5), Some(vec![0]));
        assert_eq!(pigeonhole_split(&[5, 5, 1], 2.0, 0.5), None);
        assert_eq!(pigeonhole_split(&[3, 3, 3], 3.0, 0.5), None);
    }

    #[test]
    fn two_cells_merge() {
        let ex = expand_cells(&[vec![0.0], vec![1.0]], &[22, 22], 1).unwrap();
        assert_eq!(ex.rounds, 1);
        assert_eq!(ex.labels, vec![0]);
        assert_eq!(ex.allocation, vec![0, 0]);
        assert!((ex.volume(0) - 44.0 / (8.0 * E)).abs() < 1e-12);
    }

    #[test]
    fn spread_points_give_proper_cover() {
        let pts = pts1(&[-3.2, -1.9, 0.1, 2.0, 3.3]);
        let c = cover_with_s(&pts, 10.0, 2.0, 1).unwrap();
        assert_eq!(c.kind, CoverKind::Proper);
        assert!(c.covered_region_volume >= 5.0 * 0.5);
        assert!(c.certify(&pts).all());
    }

    #[test]
    fn cells_partition() {
        for (n, d) in [(10.0, 1), (7.3, 1), (30.0, 2), (2.0, 1)] {
            let cd = CellDecomposition::new(n, d);
            let mut total = 0.0;
            let z = cd.zmax;
            for_each_lattice(&vec![-z; d], &vec![z; d], &mut |c| {
                let v = cd.volume(c);
                assert!(v <= 2f64.powi(d as i32) + 1e-12 && v >= 2f64.powi(-(d as i32)) - 1e-12 || cd.zmax == 0);
                assert!(cd.diameter(c) <= 2.0 * (d as f64).sqrt() + 1e-12 || cd.zmax == 0);
                total += v;
            });
            assert!((total - n).abs() < 1e-9, "{n} {d}: {total}");
        }
        let cd = CellDecomposition::new(10.0, 1);
        assert_eq!(cd.cell_of(&[0.5]), vec![0]);
        assert_eq!(cd.cell_of(&[-0.5]), vec![-1]);
        assert_eq!(cd.cell_of(&[4.99]), vec![5]);
        assert_eq!(cd.cell_of(&[5.0]), vec![5]);
        let cd = CellDecomposition::new(7.3, 1);
        assert_eq!(cd.cell_of(&[3.6]), vec![3]);
    }

    #[test]
    fn threshold_profile_planted_vertex() {
        let m = ModelParams::new(2, Ext::Finite(2.5), Ext::Inf, 1.0, 1.0, 1.0).unwrap();
        let wbar = min_wbar(&m);
        let conn = Connector::new(&m);
        // worst case: opposite corners of a merged boundary cell, distance 2√d
        let r_pow_d = 2f64.powi(2) * 2.0;
        assert_eq!(conn.prob(r_pow_d, wbar, 1.0), m.p);
    }

    proptest! {
        #[test]
        fn threshold_matches_brute_force(xs in prop::collection::vec(-4.0f64..4.0, 0..40), s in 0.5f64..12.0) {
            let pts = pts1(&xs);
            prop_assert_eq!(is_expandable(&pts, s, 1), brute_expandable(&pts, s, 1));
        }

        #[test]
        fn threshold_matches_brute_force_2d(xs in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 0..30), s in 0.5f64..10.0) {
            let pts: Vec<Point> = xs.iter().map(|&(a, b)| smallvec![a, b]).collect();
            prop_assert_eq!(is_expandable(&pts, s, 2), brute_expandable(&pts, s, 2));
        }

        #[test]
        fn subsets_stay_expandable(xs in prop::collection::vec(-5.0f64..5.0, 1..60), keep in prop::collection::vec(any::<bool>(), 60)) {
            let pts = pts1(&xs);
            let t = expandability_threshold(&pts, 1);
            let sub: Vec<Point> = pts.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| p.clone()).collect();
            prop_assert!(expandability_threshold(&sub, 1) <= t);
        }

        #[test]
        fn expansion_certificates(cells in prop::collection::vec((-6i64..6, 22u64..200), 1..12)) {
            let mut seen = std::collections::BTreeMap::new();
            for (z, c) in cells {
                seen.insert(z, c);
            }
            let centers: Vec<Vec<f64>> = seen.keys().map(|&z| vec![z as f64]).collect();
            let counts: Vec<u64> = seen.values().copied().collect();
            let ex = expand_cells(&centers, &counts, 1).unwrap();
            let boxes = ex.boxes();
            for a in 0..boxes.len() {
                for b in a + 1..boxes.len() {
                    let (x, y) = (&boxes[a].1, &boxes[b].1);
                    let gap = (x.center[0] - y.center[0]).abs() - (x.volume + y.volume) / 2.0;
                    prop_assert!(gap >= -GEOM_TOL);
                }
            }
            for (i, &j) in ex.allocation.iter().enumerate() {
                prop_assert!((centers[i][0] - centers[j][0]).abs() <= ex.volume(j) + GEOM_TOL);
            }
        }
    }
}
