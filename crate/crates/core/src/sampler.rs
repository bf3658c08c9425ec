//! Vertex sets and edge sampling inside the box Λ_n = [−n^{1/d}/2, n^{1/d}/2]^d.
//!
//! Randomness is keyed: vertex i draws from stream (seed, i), the edge coin of
//! {u, v} is `pair_uniform(seed, u, v)`. The cell-list generator buckets marks
//! into dyadic layers and uses a hierarchy of dyadic grids: cell pairs that
//! are neighbours at the finest useful level are checked pair by pair, all
//! other pairs are grouped into blocks whose distance is bounded from below.

use rand::Rng;
use rand_distr::{Distribution, Pareto, Poisson};
use thiserror::Error;

use crate::model::{dist_pow_d, Connector, Ext, MarkedVertex, ModelParams, Profile, VertexSet};
use crate::rng::{self, PairCoins, TAG_BLOCK, TAG_COUNT, TAG_PALM, TAG_VERTEX};

/// `exact` is used up to this many vertices when no method is given.
pub const EXACT_LIMIT: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Exact,
    CellList,
}

/// How the cell-list generator resolves blocks of far-apart pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoinScheme {
    /// Every candidate pair is decided by its own pair-keyed coin. Gives the
    /// same edge set as `Exact`; quadratic for polynomial profiles.
    PairKeyed,
    /// Far blocks are thinned by geometric skipping with a block-keyed stream,
    /// then accepted with the exact probability. Same law, different bits.
    Skip,
}

impl CoinScheme {
    pub fn default_for(params: &ModelParams) -> Self {
        match params.profile {
            Profile::Threshold => CoinScheme::PairKeyed,
            Profile::Polynomial { .. } => CoinScheme::Skip,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("volume must be positive, got {0}")]
    Volume(f64),
    #[error("box side {0} is too large for the cell hierarchy")]
    TooLarge(f64),
}

#[derive(Clone, Debug)]
pub struct SpatialGraph {
    pub volume_n: f64,
    pub vertices: Vec<MarkedVertex>,
    /// Sorted, `u < v`, no duplicates.
    pub edges: Vec<(u32, u32)>,
    pub seed: u64,
    pub params: ModelParams,
    pub palm_origin: Option<usize>,
}

impl SpatialGraph {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for &(u, v) in &self.edges {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        adj
    }

    /// Plain-text dump: `#` header lines, then `v id x_1 .. x_d mark`, then `e u v`.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "# ksrg graph");
        let _ = writeln!(s, "# params {}", self.params);
        let _ = writeln!(s, "# n {}", self.volume_n);
        let _ = writeln!(s, "# seed {}", self.seed);
        if let Some(o) = self.palm_origin {
            let _ = writeln!(s, "# palm_origin {o}");
        }
        let _ = writeln!(s, "# vertices {} edges {}", self.vertices.len(), self.edges.len());
        for (i, v) in self.vertices.iter().enumerate() {
            let _ = write!(s, "v {i}");
            for x in &v.pos {
                let _ = write!(s, " {x:?}");
            }
            let _ = writeln!(s, " {:?}", v.mark);
        }
        for &(u, v) in &self.edges {
            let _ = writeln!(s, "e {u} {v}");
        }
        s
    }
}

pub fn half_width(n: f64, d: usize) -> f64 {
    0.5 * n.powf(1.0 / d as f64)
}

pub fn in_box(pos: &[f64], n: f64) -> bool {
    let h = half_width(n, pos.len());
    pos.iter().all(|x| x.abs() <= h)
}

fn draw_mark<R: Rng>(tau: Ext, rng: &mut R) -> f64 {
    match tau {
        Ext::Inf => 1.0,
        Ext::Finite(t) => Pareto::new(1.0, t - 1.0).expect("tau > 2").sample(rng),
    }
}

/// Flat, cache-friendly vertex storage. `ids` are the identities used for
/// pair-keyed coins; by default the list index.
#[derive(Clone, Debug, Default)]
pub struct VertexTable {
    pub d: usize,
    pub coords: Vec<f64>,
    pub marks: Vec<f64>,
    pub ids: Vec<u32>,
}

impl VertexTable {
    pub fn new(d: usize) -> Self {
        VertexTable { d, ..Default::default() }
    }

    pub fn from_vertices(vs: &[MarkedVertex], d: usize) -> Self {
        let mut t = VertexTable::new(d);
        t.coords.reserve(vs.len() * d);
        for (i, v) in vs.iter().enumerate() {
            t.push(&v.pos, v.mark, i as u32);
        }
        t
    }

    pub fn push(&mut self, pos: &[f64], mark: f64, id: u32) {
        self.coords.extend_from_slice(&pos[..self.d]);
        self.marks.push(mark);
        self.ids.push(id);
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    #[inline]
    pub fn pos(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn to_vertices(&self) -> Vec<MarkedVertex> {
        (0..self.len()).map(|i| MarkedVertex::new(self.pos(i), self.marks[i])).collect()
    }

    /// Keeps vertices whose mark lies in `[a, b)`, retaining their ids.
    pub fn restrict_marks(&self, a: f64, b: f64) -> VertexTable {
        let mut t = VertexTable::new(self.d);
        for i in 0..self.len() {
            let w = self.marks[i];
            if w >= a && w < b {
                t.push(self.pos(i), w, self.ids[i]);
            }
        }
        t
    }

    /// Samples the vertex set of Λ_n; same law and bits as [`sample_vertices`].
    pub fn sample(params: &ModelParams, n: f64, seed: u64) -> VertexTable {
        let d = params.d;
        let h = half_width(n, d);
        let mut t = VertexTable::new(d);
        let mut pos = vec![0.0; d];
        match params.vertex_set {
            VertexSet::Poisson => {
                let mut crng = rng::stream(seed, TAG_COUNT, 0);
                let count = if n > 0.0 {
                    Poisson::new(n).expect("positive mean").sample(&mut crng) as u64
                } else {
                    0
                };
                t.coords.reserve(count as usize * d);
                t.marks.reserve(count as usize);
                t.ids.reserve(count as usize);
                for i in 0..count {
                    let mut r = rng::stream(seed, TAG_VERTEX, i);
                    for x in pos.iter_mut() {
                        *x = -h + 2.0 * h * r.random::<f64>();
                    }
                    let w = draw_mark(params.tau, &mut r);
                    t.push(&pos, w, i as u32);
                }
            }
            VertexSet::Lattice => {
                let m = h.floor() as i64;
                let side = (2 * m + 1) as u64;
                let total = side.pow(d as u32);
                for i in 0..total {
                    let mut rem = i;
                    for x in pos.iter_mut() {
                        *x = (rem % side) as f64 - m as f64;
                        rem /= side;
                    }
                    let mut r = rng::stream(seed, TAG_VERTEX, i);
                    let w = draw_mark(params.tau, &mut r);
                    t.push(&pos, w, i as u32);
                }
            }
        }
        t
    }
}

/// Marked Poisson process (or lattice) on Λ_n with Pareto marks.
pub fn sample_vertices(params: &ModelParams, n: f64, seed: u64) -> Vec<MarkedVertex> {
    VertexTable::sample(params, n, seed).to_vertices()
}

/// Appends a vertex at the origin with a fresh mark; returns its index.
pub fn palm_insert(vertices: &mut Vec<MarkedVertex>, params: &ModelParams, seed: u64) -> usize {
    let mut r = rng::stream(seed, TAG_PALM, 0);
    let w = draw_mark(params.tau, &mut r);
    vertices.push(MarkedVertex::new(&vec![0.0; params.d], w));
    vertices.len() - 1
}

/// Mark of the palm vertex for `seed` (the one [`palm_insert`] would add).
pub fn palm_mark(params: &ModelParams, seed: u64) -> f64 {
    let mut r = rng::stream(seed, TAG_PALM, 0);
    draw_mark(params.tau, &mut r)
}

pub fn default_method(num_vertices: usize) -> Method {
    if num_vertices <= EXACT_LIMIT {
        Method::Exact
    } else {
        Method::CellList
    }
}

/// Samples all edges and returns the graph. `method = None` picks the default.
pub fn build_graph(
    vertices: Vec<MarkedVertex>,
    params: &ModelParams,
    n: f64,
    seed: u64,
    method: Option<Method>,
) -> SpatialGraph {
    let table = VertexTable::from_vertices(&vertices, params.d);
    let method = method.unwrap_or_else(|| default_method(vertices.len()));
    let mut edges = Vec::new();
    for_each_edge(&table, params, n, seed, method, CoinScheme::default_for(params), &mut |u, v| {
        edges.push((u, v))
    });
    edges.sort_unstable();
    SpatialGraph { volume_n: n, vertices, edges, seed, params: params.clone(), palm_origin: None }
}

/// Builds the graph with explicit coin scheme; see [`CoinScheme`].
pub fn build_graph_with(
    vertices: Vec<MarkedVertex>,
    params: &ModelParams,
    n: f64,
    seed: u64,
    method: Method,
    coins: CoinScheme,
) -> SpatialGraph {
    let table = VertexTable::from_vertices(&vertices, params.d);
    let mut edges = Vec::new();
    for_each_edge(&table, params, n, seed, method, coins, &mut |u, v| edges.push((u, v)));
    edges.sort_unstable();
    SpatialGraph { volume_n: n, vertices, edges, seed, params: params.clone(), palm_origin: None }
}

/// Graph on the vertices of `table`, indexed in table order. Edge coins stay
/// keyed by the table ids, so a table obtained by [`VertexTable::restrict_marks`]
/// yields the induced subgraph of the full graph (bit for bit under pair-keyed
/// coins, in law under skipping).
pub fn build_graph_from_table(
    table: &VertexTable,
    params: &ModelParams,
    n: f64,
    seed: u64,
    method: Option<Method>,
) -> SpatialGraph {
    let method = method.unwrap_or_else(|| default_method(table.len()));
    let mut order: Vec<u32> = (0..table.len() as u32).collect();
    order.sort_unstable_by_key(|&i| table.ids[i as usize]);
    let local = |id: u32| -> u32 {
        let k = order.partition_point(|&i| table.ids[i as usize] < id);
        order[k]
    };
    let mut edges = Vec::new();
    for_each_edge(table, params, n, seed, method, CoinScheme::default_for(params), &mut |u, v| {
        let (a, b) = (local(u), local(v));
        edges.push(if a < b { (a, b) } else { (b, a) });
    });
    edges.sort_unstable();
    SpatialGraph { volume_n: n, vertices: table.to_vertices(), edges, seed, params: params.clone(), palm_origin: None }
}

/// Streams every edge `(id_u, id_v)`, `id_u < id_v`, of the graph on `table`.
/// `n` fixes the box used for the cell hierarchy; vertices outside it are
/// clamped into boundary cells, which affects speed but not the law.
pub fn for_each_edge(
    table: &VertexTable,
    params: &ModelParams,
    n: f64,
    seed: u64,
    method: Method,
    coins: CoinScheme,
    sink: &mut dyn FnMut(u32, u32),
) {
    let conn = Connector::new(params);
    match method {
        Method::Exact => exact_edges(table, &conn, seed, sink),
        Method::CellList => {
            let g = Hierarchy::new(table, params, n);
            g.edges(&conn, seed, coins, sink);
        }
    }
}

fn exact_edges(t: &VertexTable, conn: &Connector, seed: u64, sink: &mut dyn FnMut(u32, u32)) {
    let d = t.d;
    let coins = PairCoins::new(seed);
    for i in 0..t.len() {
        let xi = t.pos(i);
        let wi = t.marks[i];
        for k in i + 1..t.len() {
            let q = conn.prob(dist_pow_d(xi, t.pos(k), d), wi, t.marks[k]);
            if q > 0.0 {
                let (a, b) = ordered(t.ids[i], t.ids[k]);
                if coins.uniform(a, b) < q {
                    sink(a, b);
                }
            }
        }
    }
}

#[inline]
fn ordered(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Above this bound a far block is checked pair by pair even in skip mode.
const DIRECT_BOUND: f64 = 0.25;

struct Layer {
    codes: Vec<u64>,
    coords: Vec<f64>,
    marks: Vec<f64>,
    ids: Vec<u32>,
    wmax: f64,
}

struct Hierarchy {
    d: usize,
    lmax: u32,
    side: f64,
    layers: Vec<Layer>,
}

impl Hierarchy {
    fn new(t: &VertexTable, params: &ModelParams, n: f64) -> Self {
        let d = params.d;
        let side = n.powf(1.0 / d as f64);
        let h = 0.5 * side;
        let cap = (62 / d as u32).min(40);
        let lmax = if side > 1.0 { (side.log2().floor() as u32).min(cap) } else { 0 };
        let cells = (1u64 << lmax) as f64;

        let mut buckets: Vec<Vec<(u64, u32)>> = Vec::new();
        let mut c = vec![0u64; d];
        for i in 0..t.len() {
            let x = t.pos(i);
            for a in 0..d {
                let f = ((x[a] + h) / side * cells).floor();
                c[a] = f.clamp(0.0, cells - 1.0) as u64;
            }
            let code = interleave(&c, d, lmax);
            let j = layer_of(t.marks[i]);
            if buckets.len() <= j {
                buckets.resize_with(j + 1, Vec::new);
            }
            buckets[j].push((code, i as u32));
        }
        let layers = buckets
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                let mut l = Layer {
                    codes: Vec::with_capacity(b.len()),
                    coords: Vec::with_capacity(b.len() * d),
                    marks: Vec::with_capacity(b.len()),
                    ids: Vec::with_capacity(b.len()),
                    wmax: 1.0,
                };
                for (code, i) in b {
                    let i = i as usize;
                    l.codes.push(code);
                    l.coords.extend_from_slice(t.pos(i));
                    l.marks.push(t.marks[i]);
                    l.ids.push(t.ids[i]);
                    l.wmax = l.wmax.max(t.marks[i]);
                }
                l
            })
            .collect();
        Hierarchy { d, lmax, side, layers }
    }

    fn shift(&self, level: u32) -> u32 {
        self.d as u32 * (self.lmax - level)
    }

    fn range(&self, layer: &Layer, level: u32, prefix: u64) -> (usize, usize) {
        let s = self.shift(level);
        let lo = prefix << s;
        let hi = (prefix + 1) << s;
        let a = layer.codes.partition_point(|&c| c < lo);
        let b = a + layer.codes[a..].partition_point(|&c| c < hi);
        (a, b)
    }

    /// Nonempty cells of `layer` at `level` as (prefix, start, end).
    fn cells(&self, layer: &Layer, level: u32) -> Vec<(u64, usize, usize)> {
        let s = self.shift(level);
        let mut out = Vec::new();
        let mut i = 0;
        while i < layer.codes.len() {
            let p = layer.codes[i] >> s;
            let hi = (p + 1) << s;
            let e = i + layer.codes[i..].partition_point(|&c| c < hi);
            out.push((p, i, e));
            i = e;
        }
        out
    }

    fn edges(&self, conn: &Connector, seed: u64, coins: CoinScheme, sink: &mut dyn FnMut(u32, u32)) {
        let d = self.d;
        let nl = self.layers.len();
        let mut ca = vec![0u64; d];
        let mut cb = vec![0u64; d];
        let mut off = vec![0i64; d];
        let mut parent = vec![0i64; d];
        for j in 0..nl {
            if self.layers[j].codes.is_empty() {
                continue;
            }
            for j2 in j..nl {
                if self.layers[j2].codes.is_empty() {
                    continue;
                }
                let (la, lb) = (&self.layers[j], &self.layers[j2]);
                let kappa = conn.kernel(la.wmax, lb.wmax);
                let reach = (conn.beta * kappa).powf(1.0 / d as f64);
                let top = if reach >= self.side {
                    0
                } else {
                    ((self.side / reach).log2().floor().max(0.0) as u32).min(self.lmax)
                };
                let ctx = BlockCtx { conn, seed, coins: PairCoins::new(seed), j, j2, same: j == j2 };

                // neighbouring cells at the top level
                for (pa, sa, ea) in self.cells(la, top) {
                    deinterleave(pa, d, top, &mut ca);
                    let width = 1i64 << top;
                    for_each_offset(d, &mut off, &mut |o| {
                        for a in 0..d {
                            let v = ca[a] as i64 + o[a];
                            if v < 0 || v >= width {
                                return;
                            }
                            cb[a] = v as u64;
                        }
                        let pb = interleave(&cb, d, top);
                        if ctx.same && pb < pa {
                            return;
                        }
                        let (sb, eb) = if ctx.same && pb == pa { (sa, ea) } else { self.range(lb, top, pb) };
                        if sb == eb {
                            return;
                        }
                        if ctx.same && pb == pa {
                            self.within(la, sa, ea, &ctx, sink);
                        } else {
                            self.direct(la, (sa, ea), lb, (sb, eb), &ctx, sink);
                        }
                    });
                }

                // non-neighbouring cells whose parents are neighbours
                for level in 1..=top {
                    let cell = self.side / (1u64 << level) as f64;
                    let width = 1i64 << level;
                    let pwidth = 1i64 << (level - 1);
                    for (pa, sa, ea) in self.cells(la, level) {
                        deinterleave(pa, d, level, &mut ca);
                        for_each_offset(d, &mut off, &mut |o| {
                            for a in 0..d {
                                let v = (ca[a] >> 1) as i64 + o[a];
                                if v < 0 || v >= pwidth {
                                    return;
                                }
                                parent[a] = v;
                            }
                            for child in 0..(1u64 << d) {
                                let mut near = true;
                                let mut gap2 = 0.0;
                                for a in 0..d {
                                    let v = 2 * parent[a] + ((child >> a) & 1) as i64;
                                    debug_assert!(v < width);
                                    cb[a] = v as u64;
                                    let diff = (v - ca[a] as i64).abs();
                                    if diff > 1 {
                                        near = false;
                                        let g = (diff - 1) as f64 * cell;
                                        gap2 += g * g;
                                    }
                                }
                                if near {
                                    continue;
                                }
                                let pb = interleave(&cb, d, level);
                                if ctx.same && pb < pa {
                                    continue;
                                }
                                let (sb, eb) = self.range(lb, level, pb);
                                if sb == eb {
                                    continue;
                                }
                                let rmin = match d {
                                    1 => gap2.sqrt(),
                                    2 => gap2,
                                    _ => gap2.powf(0.5 * d as f64),
                                };
                                let bound = conn.prob_kappa(rmin, kappa);
                                if bound <= 0.0 {
                                    continue;
                                }
                                if coins == CoinScheme::PairKeyed || bound >= DIRECT_BOUND {
                                    self.direct(la, (sa, ea), lb, (sb, eb), &ctx, sink);
                                } else {
                                    self.skip(la, (sa, ea), lb, (sb, eb), bound, level, pa, pb, &ctx, sink);
                                }
                            }
                        });
                    }
                }
            }
        }
    }

    fn within(&self, l: &Layer, s: usize, e: usize, ctx: &BlockCtx, sink: &mut dyn FnMut(u32, u32)) {
        let d = self.d;
        for i in s..e {
            let xi = &l.coords[i * d..(i + 1) * d];
            for k in i + 1..e {
                let q = ctx.conn.prob(dist_pow_d(xi, &l.coords[k * d..(k + 1) * d], d), l.marks[i], l.marks[k]);
                test_pair(q, l.ids[i], l.ids[k], ctx.coins, sink);
            }
        }
    }

    fn direct(
        &self,
        la: &Layer,
        (sa, ea): (usize, usize),
        lb: &Layer,
        (sb, eb): (usize, usize),
        ctx: &BlockCtx,
        sink: &mut dyn FnMut(u32, u32),
    ) {
        let d = self.d;
        if d == 1 {
            for i in sa..ea {
                let (xi, wi, idi) = (la.coords[i], la.marks[i], la.ids[i]);
                for k in sb..eb {
                    let q = ctx.conn.prob((xi - lb.coords[k]).abs(), wi, lb.marks[k]);
                    test_pair(q, idi, lb.ids[k], ctx.coins, sink);
                }
            }
            return;
        }
        for i in sa..ea {
            let xi = &la.coords[i * d..(i + 1) * d];
            for k in sb..eb {
                let q = ctx.conn.prob(dist_pow_d(xi, &lb.coords[k * d..(k + 1) * d], d), la.marks[i], lb.marks[k]);
                test_pair(q, la.ids[i], lb.ids[k], ctx.coins, sink);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn skip(
        &self,
        la: &Layer,
        (sa, ea): (usize, usize),
        lb: &Layer,
        (sb, eb): (usize, usize),
        bound: f64,
        level: u32,
        pa: u64,
        pb: u64,
        ctx: &BlockCtx,
        sink: &mut dyn FnMut(u32, u32),
    ) {
        let d = self.d;
        let nb = (eb - sb) as u64;
        let total = (ea - sa) as u64 * nb;
        let mut r = rng::light_stream(&[ctx.seed, TAG_BLOCK, ctx.j as u64, ctx.j2 as u64, level as u64, pa, pb]);
        let log_q = (-bound).ln_1p();
        let mut pos: u64 = 0;
        loop {
            let u = 1.0 - r.random::<f64>();
            let jump = (u.ln() / log_q).floor();
            if jump >= (total - pos) as f64 {
                break;
            }
            pos += jump as u64;
            let i = sa + (pos / nb) as usize;
            let k = sb + (pos % nb) as usize;
            let q = ctx.conn.prob(
                dist_pow_d(&la.coords[i * d..(i + 1) * d], &lb.coords[k * d..(k + 1) * d], d),
                la.marks[i],
                lb.marks[k],
            );
            if r.random::<f64>() * bound < q {
                let (a, b) = ordered(la.ids[i], lb.ids[k]);
                sink(a, b);
            }
            pos += 1;
            if pos >= total {
                break;
            }
        }
    }
}

struct BlockCtx<'a> {
    conn: &'a Connector,
    seed: u64,
    coins: PairCoins,
    j: usize,
    j2: usize,
    same: bool,
}

#[inline]
fn test_pair(q: f64, u: u32, v: u32, coins: PairCoins, sink: &mut dyn FnMut(u32, u32)) {
    if q > 0.0 {
        let (a, b) = ordered(u, v);
        if coins.uniform(a, b) < q {
            sink(a, b);
        }
    }
}

/// Dyadic mark layer: w ∈ [2^j, 2^{j+1}).
#[inline]
pub fn layer_of(w: f64) -> usize {
    let l = w.log2().floor();
    if l <= 0.0 {
        0
    } else {
        l as usize
    }
}

fn for_each_offset(d: usize, off: &mut [i64], f: &mut dyn FnMut(&[i64])) {
    let total = 3usize.pow(d as u32);
    for mut code in 0..total {
        for o in off.iter_mut().take(d) {
            *o = (code % 3) as i64 - 1;
            code /= 3;
        }
        f(off);
    }
}

fn interleave(c: &[u64], d: usize, bits: u32) -> u64 {
    if d == 1 {
        return c[0];
    }
    let mut code = 0u64;
    for b in 0..bits {
        for (a, &ca) in c.iter().enumerate().take(d) {
            code |= ((ca >> b) & 1) << (b as usize * d + a);
        }
    }
    code
}

fn deinterleave(code: u64, d: usize, bits: u32, out: &mut [u64]) {
    if d == 1 {
        out[0] = code;
        return;
    }
    for o in out.iter_mut().take(d) {
        *o = 0;
    }
    for b in 0..bits {
        for (a, o) in out.iter_mut().enumerate().take(d) {
            *o |= ((code >> (b as usize * d + a)) & 1) << b;
        }
    }
}
