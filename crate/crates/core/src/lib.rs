//! Kernel-based spatial random graphs (KSRGs).
//!
//! Vertices live in ℝ^d with i.i.d. Pareto marks; two vertices at distance r
//! with marks w1, w2 are joined independently with probability
//! p·ρ(β κ(w1, w2) / r^d).

pub mod backbone;
pub mod components;
pub mod cover;
pub mod experiments;
pub mod exponents;
pub mod model;
pub mod profile;
pub mod rng;
pub mod sampler;

pub use components::{cluster_stats, origin_not_in_giant, ClusterStats, UnionFind};
pub use exponents::{exponent_report, phase_diagram, xi_and_gamma, zeta_girg, ConnType, ExponentReport, PhaseAxes, PhaseCell, XiGamma};
pub use model::{
    connection_prob, kernel_value, Connector, Ext, Kernel, MarkedVertex, ModelError, ModelParams,
    ParamsConfig, Profile, VertexSet,
};
pub use sampler::{build_graph, palm_insert, sample_vertices, CoinScheme, Method, SpatialGraph};
