//! Monte Carlo campaigns, slope fits and their CSV/SVG output.

pub mod boundary;
pub mod clusters;
pub mod fit;
pub mod output;

use serde::Serialize;

pub use boundary::{estimate_downward_boundary, BoundaryMethod, BoundaryRow, BoundarySample, DownwardTail};
pub use clusters::{
    cluster_campaign, estimate_cluster_decay, estimate_giant_fraction, estimate_second_largest, summarize_giant,
    summarize_second, wilson_interval, ClusterRow, DecayResult, DecayRow, GiantRow, SecondRow,
};
pub use fit::{fit_slope, fit_slope_trimmed, FitError, SlopeFit, Transform, DEFAULT_DROP};

/// One raw observation of any campaign; empty fields do not apply.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub experiment: String,
    pub params: String,
    pub n: Option<f64>,
    pub k: Option<f64>,
    pub rep: u32,
    pub seed: u64,
    pub origin_cluster: Option<u32>,
    pub largest: Option<u32>,
    pub second_largest: Option<u32>,
    pub boundary: Option<f64>,
    pub a_bb: Option<bool>,
}

impl ExperimentRow {
    pub fn boundary(params: &crate::model::ModelParams, s: &BoundarySample) -> Self {
        ExperimentRow {
            experiment: "boundary".into(),
            params: params.to_string(),
            n: None,
            k: Some(s.k),
            rep: s.rep,
            seed: s.seed,
            origin_cluster: None,
            largest: None,
            second_largest: None,
            boundary: Some(s.value),
            a_bb: None,
        }
    }
}
