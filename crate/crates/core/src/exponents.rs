//! Closed-form exponents of the cluster-size-decay phase diagram.
//!
//! Infinite τ or α are handled by taking the corresponding limits; exponents
//! that diverge are reported as `f64::NEG_INFINITY`.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{Ext, ModelParams};

/// Relative tolerance used when deciding that two exponents tie.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConnType {
    Short,
    Ll,
    Hl,
    Hh,
}

impl fmt::Display for ConnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConnType::Short => "short",
            ConnType::Ll => "ll",
            ConnType::Hl => "hl",
            ConnType::Hh => "hh",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentReport {
    pub zeta_short: f64,
    pub zeta_ll: f64,
    pub zeta_hl: f64,
    pub zeta_hh: f64,
    pub zeta_long: f64,
    pub zeta_star: f64,
    pub gamma_hl: f64,
    pub gamma_hh: f64,
    /// `None` for α = ∞.
    pub gamma_long: Option<f64>,
    pub gamma_star: f64,
    pub xi_ll: Option<f64>,
    pub xi_hl: Option<f64>,
    pub xi_hh: Option<f64>,
    pub xi_star: Option<f64>,
    pub m_long: Option<u32>,
    pub m_star: u32,
    pub dominant_types: Vec<ConnType>,
    /// 1 − γ_★(τ−1), the growth exponent of vertices above the optimal profile.
    pub profile_vertex_exponent: f64,
    /// 2 − α + γ_★ ξ_★, the growth exponent of edges below the optimal profile.
    pub profile_edge_exponent: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct XiGamma {
    pub xi_ll: Option<f64>,
    pub xi_hl: Option<f64>,
    pub xi_hh: Option<f64>,
    pub xi_star: Option<f64>,
    pub m_long: Option<u32>,
    pub gamma_long: Option<f64>,
    pub gamma_star: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExponentError {
    #[error("domain error: {0}")]
    Domain(String),
}

pub fn approx_eq(a: f64, b: f64) -> bool {
    a == b || (a.is_finite() && b.is_finite() && (a - b).abs() <= TIE_TOL * a.abs().max(b.abs()).max(1.0))
}

/// Number of entries equal to the maximum, within [`TIE_TOL`].
pub fn multiplicity(xs: &[f64]) -> u32 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    xs.iter().filter(|&&x| approx_eq(x, m)).count() as u32
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn zeta_short(d: usize) -> f64 {
    (d as f64 - 1.0) / d as f64
}

pub fn zeta_ll(alpha: Ext) -> f64 {
    match alpha {
        Ext::Finite(a) => 2.0 - a,
        Ext::Inf => f64::NEG_INFINITY,
    }
}

pub fn gamma_hl(alpha: Ext) -> f64 {
    match alpha {
        Ext::Finite(a) => 1.0 - 1.0 / a,
        Ext::Inf => 1.0,
    }
}

pub fn zeta_hl(tau: Ext, alpha: Ext) -> f64 {
    match (tau, alpha) {
        (Ext::Finite(t), Ext::Finite(a)) => (t - 1.0) / a - (t - 2.0),
        (Ext::Finite(t), Ext::Inf) => -(t - 2.0),
        (Ext::Inf, _) => f64::NEG_INFINITY,
    }
}

fn hh_long_branch(tau: Ext, alpha: Ext, sigma: f64) -> Option<(f64, f64)> {
    match (tau, alpha) {
        (Ext::Finite(t), Ext::Finite(a)) if t <= sigma + 2.0 => Some((t, a)),
        _ => None,
    }
}

pub fn gamma_hh(tau: Ext, alpha: Ext, sigma: f64) -> f64 {
    match hh_long_branch(tau, alpha, sigma) {
        Some((t, a)) => (1.0 - 1.0 / a) / (sigma + 1.0 - (t - 1.0) / a),
        None => 1.0 / (sigma + 1.0),
    }
}

pub fn zeta_hh(tau: Ext, alpha: Ext, sigma: f64) -> f64 {
    match hh_long_branch(tau, alpha, sigma) {
        Some((t, a)) => (sigma + 2.0 - t) / (sigma + 1.0 - (t - 1.0) / a),
        None => match tau {
            Ext::Finite(t) => (sigma + 2.0 - t) / (sigma + 1.0),
            Ext::Inf => f64::NEG_INFINITY,
        },
    }
}

pub fn xi_and_gamma(params: &ModelParams) -> XiGamma {
    let sigma = params.sigma();
    let Ext::Finite(a) = params.alpha() else {
        return XiGamma {
            xi_ll: None,
            xi_hl: None,
            xi_hh: None,
            xi_star: None,
            m_long: None,
            gamma_long: None,
            gamma_star: 1.0 / (sigma + 1.0),
        };
    };
    let (xi_hl, xi_hh, gamma_long) = match params.tau {
        Ext::Finite(t) => {
            let hl = a - (t - 1.0);
            let hh = (sigma + 1.0) * a - 2.0 * (t - 1.0);
            let star = max_of(&[0.0, hl, hh]);
            (hl, hh, (a - 1.0) / (star + t - 1.0))
        }
        Ext::Inf => (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0),
    };
    let xs = [0.0, xi_hl, xi_hh];
    XiGamma {
        xi_ll: Some(0.0),
        xi_hl: Some(xi_hl),
        xi_hh: Some(xi_hh),
        xi_star: Some(max_of(&xs)),
        m_long: Some(multiplicity(&xs)),
        gamma_long: Some(gamma_long),
        gamma_star: gamma_long.min(1.0 / (sigma + 1.0)),
    }
}

pub fn exponent_report(params: &ModelParams) -> ExponentReport {
    let (tau, alpha, sigma) = (params.tau, params.alpha(), params.sigma());
    let zs = zeta_short(params.d);
    let zll = zeta_ll(alpha);
    let zhl = zeta_hl(tau, alpha);
    let zhh = zeta_hh(tau, alpha, sigma);
    let zeta_long = max_of(&[zll, zhl, zhh, 0.0]);
    let zeta_star = zeta_long.max(zs);

    let cands = [(ConnType::Short, zs), (ConnType::Ll, zll), (ConnType::Hl, zhl), (ConnType::Hh, zhh)];
    let dominant_types: Vec<ConnType> =
        cands.iter().filter(|(_, z)| approx_eq(*z, zeta_star)).map(|(c, _)| *c).collect();

    let xg = xi_and_gamma(params);
    let profile_vertex_exponent = match (tau, alpha) {
        (Ext::Finite(t), _) => 1.0 - xg.gamma_star * (t - 1.0),
        // γ_★(τ−1) → α − 1 as τ → ∞
        (Ext::Inf, Ext::Finite(a)) => 2.0 - a,
        (Ext::Inf, Ext::Inf) => f64::NEG_INFINITY,
    };
    let profile_edge_exponent = match (alpha, xg.xi_star) {
        (Ext::Finite(a), Some(xs)) => Some(2.0 - a + xg.gamma_star * xs),
        _ => None,
    };

    ExponentReport {
        zeta_short: zs,
        zeta_ll: zll,
        zeta_hl: zhl,
        zeta_hh: zhh,
        zeta_long,
        zeta_star,
        gamma_hl: gamma_hl(alpha),
        gamma_hh: gamma_hh(tau, alpha, sigma),
        gamma_long: xg.gamma_long,
        gamma_star: xg.gamma_star,
        xi_ll: xg.xi_ll,
        xi_hl: xg.xi_hl,
        xi_hh: xg.xi_hh,
        xi_star: xg.xi_star,
        m_long: xg.m_long,
        m_star: dominant_types.len() as u32,
        dominant_types,
        profile_vertex_exponent,
        profile_edge_exponent,
    }
}

/// ζ_GIRG = (3 − τ)/(2 − (τ − 1)/α) for τ ∈ (2, 3).
pub fn zeta_girg(tau: f64, alpha: Ext) -> Result<f64, ExponentError> {
    if !(tau > 2.0 && tau < 3.0) {
        return Err(ExponentError::Domain(format!("tau must lie in (2, 3), got {tau}")));
    }
    match alpha {
        Ext::Finite(a) if a > 1.0 => Ok((3.0 - tau) / (2.0 - (tau - 1.0) / a)),
        Ext::Finite(a) => Err(ExponentError::Domain(format!("alpha must exceed 1, got {a}"))),
        Ext::Inf => Ok((3.0 - tau) / 2.0),
    }
}

fn fmt_num(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x:.12}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_else(|| "n/a".to_string())
}

impl ExponentReport {
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        let dom: Vec<String> = self.dominant_types.iter().map(|c| c.to_string()).collect();
        vec![
            ("zeta_short", fmt_num(self.zeta_short)),
            ("zeta_ll", fmt_num(self.zeta_ll)),
            ("zeta_hl", fmt_num(self.zeta_hl)),
            ("zeta_hh", fmt_num(self.zeta_hh)),
            ("zeta_long", fmt_num(self.zeta_long)),
            ("zeta_star", fmt_num(self.zeta_star)),
            ("gamma_hl", fmt_num(self.gamma_hl)),
            ("gamma_hh", fmt_num(self.gamma_hh)),
            ("gamma_long", fmt_opt(self.gamma_long)),
            ("gamma_star", fmt_num(self.gamma_star)),
            ("xi_ll", fmt_opt(self.xi_ll)),
            ("xi_hl", fmt_opt(self.xi_hl)),
            ("xi_hh", fmt_opt(self.xi_hh)),
            ("xi_star", fmt_opt(self.xi_star)),
            ("m_long", self.m_long.map(|m| m.to_string()).unwrap_or_else(|| "n/a".into())),
            ("m_star", self.m_star.to_string()),
            ("dominant_types", dom.join("+")),
        ]
    }
}

impl fmt::Display for ExponentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.rows() {
            writeln!(f, "{k:<16}{v}")?;
        }
        Ok(())
    }
}

/// Which pair of parameters a phase diagram sweeps. Both use x = 1/(τ−1);
/// `AlphaTau` has y = 1/α at fixed σ, `SigmaTau` has y = σ/(τ−1) at fixed α.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseAxes {
    AlphaTau,
    SigmaTau,
}

impl PhaseAxes {
    pub fn labels(self) -> (&'static str, &'static str) {
        match self {
            PhaseAxes::AlphaTau => ("1/(tau-1)", "1/alpha"),
            PhaseAxes::SigmaTau => ("1/(tau-1)", "sigma/(tau-1)"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseCell {
    pub x: f64,
    pub y: f64,
    pub tau: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub zeta_star: f64,
    pub m_star: u32,
    pub dominant: String,
}

/// Dominant type on a `resolution`² grid of cell centres in (0,1)².
/// Parameters not swept come from `base`.
pub fn phase_diagram(base: &ModelParams, axes: PhaseAxes, resolution: usize) -> Vec<PhaseCell> {
    let r = resolution.max(1);
    let mut out = Vec::with_capacity(r * r);
    for j in 0..r {
        let y = (j as f64 + 0.5) / r as f64;
        for i in 0..r {
            let x = (i as f64 + 0.5) / r as f64;
            let tau = 1.0 + 1.0 / x;
            let m = match axes {
                PhaseAxes::AlphaTau => base.clone().with_tau(Ext::Finite(tau)).with_alpha(Ext::Finite(1.0 / y)),
                PhaseAxes::SigmaTau => base.clone().with_tau(Ext::Finite(tau)).with_sigma(y / x),
            };
            let rep = exponent_report(&m);
            let dom: Vec<String> = rep.dominant_types.iter().map(|c| c.to_string()).collect();
            out.push(PhaseCell {
                x,
                y,
                tau,
                alpha: m.alpha().as_f64(),
                sigma: m.sigma(),
                zeta_star: rep.zeta_star,
                m_star: rep.m_star,
                dominant: dom.join("+"),
            });
        }
    }
    out
}
