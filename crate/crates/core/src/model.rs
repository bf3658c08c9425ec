//! Model parameters, kernels, profiles and the pairwise connection probability.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;
use thiserror::Error;

/// A parameter that may take the value +∞.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ext {
    Finite(f64),
    Inf,
}

impl Ext {
    pub fn is_inf(self) -> bool {
        matches!(self, Ext::Inf)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Ext::Finite(x) => Some(x),
            Ext::Inf => None,
        }
    }

    /// Float view, with `Inf` mapped to `f64::INFINITY`.
    pub fn as_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for Ext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ext::Finite(x) => write!(f, "{x}"),
            Ext::Inf => write!(f, "inf"),
        }
    }
}

impl FromStr for Ext {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        if matches!(t.as_str(), "inf" | "infinity" | "+inf" | "∞") {
            return Ok(Ext::Inf);
        }
        t.parse::<f64>()
            .map_err(|_| ModelError::Parse(format!("not a number or 'inf': {s:?}")))
            .and_then(|x| {
                if x.is_infinite() && x > 0.0 {
                    Ok(Ext::Inf)
                } else if x.is_finite() {
                    Ok(Ext::Finite(x))
                } else {
                    Err(ModelError::Parse(format!("not a finite value: {s:?}")))
                }
            })
    }
}

impl Serialize for Ext {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Ext::Finite(x) => s.serialize_f64(*x),
            Ext::Inf => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Ext {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ext::from_str(&x.to_string()).map_err(serde::de::Error::custom),
            Raw::Int(x) => Ok(Ext::Finite(x as f64)),
            Raw::Text(s) => Ext::from_str(&s).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel {
    /// κ_σ(w1, w2) = (w1 ∨ w2)(w1 ∧ w2)^σ
    Interpolation { sigma: f64 },
    /// κ_sum(w1, w2) = (w1^{1/d} + w2^{1/d})^d
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Profile {
    /// ρ(s) = (1 ∧ s)^α
    Polynomial { alpha: f64 },
    /// ρ(s) = 1{s ≥ 1}
    Threshold,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexSet {
    Poisson,
    Lattice,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name}: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error("parse error: {0}")]
    Parse(String),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::Invalid { name, reason: reason.into() }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub d: usize,
    pub tau: Ext,
    pub kernel: Kernel,
    pub profile: Profile,
    pub beta: f64,
    pub p: f64,
    pub vertex_set: VertexSet,
}

impl ModelParams {
    /// Poisson vertices, interpolation kernel; `alpha = Ext::Inf` selects the threshold profile.
    pub fn new(d: usize, tau: Ext, alpha: Ext, sigma: f64, beta: f64, p: f64) -> Result<Self, ModelError> {
        let profile = match alpha {
            Ext::Finite(a) => Profile::Polynomial { alpha: a },
            Ext::Inf => Profile::Threshold,
        };
        let m = ModelParams {
            d,
            tau,
            kernel: Kernel::Interpolation { sigma },
            profile,
            beta,
            p,
            vertex_set: VertexSet::Poisson,
        };
        m.validate()?;
        Ok(m)
    }

    /// d = 1, σ = 1, τ = 2.2, α = 3, β = 1, p = 1.
    pub fn reference() -> Self {
        Self::new(1, Ext::Finite(2.2), Ext::Finite(3.0), 1.0, 1.0, 1.0).expect("valid")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d == 0 {
            return Err(invalid("d", "dimension must be at least 1"));
        }
        if let Ext::Finite(t) = self.tau {
            if !(t.is_finite() && t > 2.0) {
                return Err(invalid("tau", format!("need tau > 2, got {t}")));
            }
        }
        if let Profile::Polynomial { alpha } = self.profile {
            if !(alpha.is_finite() && alpha > 1.0) {
                return Err(invalid("alpha", format!("need alpha > 1, got {alpha}")));
            }
        }
        if let Kernel::Interpolation { sigma } = self.kernel {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(invalid("sigma", format!("need sigma >= 0, got {sigma}")));
            }
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(invalid("beta", format!("need beta > 0, got {}", self.beta)));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(invalid("p", format!("need 0 < p <= 1, got {}", self.p)));
        }
        if self.vertex_set == VertexSet::Lattice && self.p.min(self.beta) >= 1.0 {
            return Err(invalid("vertex_set", "lattice vertices require min(p, beta) < 1"));
        }
        Ok(())
    }

    pub fn alpha(&self) -> Ext {
        match self.profile {
            Profile::Polynomial { alpha } => Ext::Finite(alpha),
            Profile::Threshold => Ext::Inf,
        }
    }

    /// σ as used in exponent formulas; 0 for the sum kernel.
    pub fn sigma(&self) -> f64 {
        match self.kernel {
            Kernel::Interpolation { sigma } => sigma,
            Kernel::Sum => 0.0,
        }
    }

    pub fn with_tau(mut self, tau: Ext) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_alpha(mut self, alpha: Ext) -> Self {
        self.profile = match alpha {
            Ext::Finite(a) => Profile::Polynomial { alpha: a },
            Ext::Inf => Profile::Threshold,
        };
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.kernel = Kernel::Interpolation { sigma };
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn with_d(mut self, d: usize) -> Self {
        self.d = d;
        self
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_vertex_set(mut self, vs: VertexSet) -> Self {
        self.vertex_set = vs;
        self
    }

    pub fn to_config(&self) -> ParamsConfig {
        let (kernel, sigma) = match self.kernel {
            Kernel::Interpolation { sigma } => ("interpolation".to_string(), sigma),
            Kernel::Sum => ("sum".to_string(), 0.0),
        };
        let profile = match self.profile {
            Profile::Polynomial { .. } => "polynomial",
            Profile::Threshold => "threshold",
        };
        ParamsConfig {
            d: self.d,
            tau: self.tau,
            alpha: self.alpha(),
            sigma: Some(sigma),
            kernel: Some(kernel),
            profile: Some(profile.to_string()),
            beta: Some(self.beta),
            p: Some(self.p),
            vertex_set: Some(self.vertex_set),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_config()).expect("serializable")
    }

    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        let c: ParamsConfig = toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        c.resolve()
    }
}

impl fmt::Display for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kernel = match self.kernel {
            Kernel::Interpolation { sigma } => format!("interpolation(sigma={sigma})"),
            Kernel::Sum => "sum".to_string(),
        };
        write!(
            f,
            "d={} tau={} alpha={} kernel={} beta={} p={} vertex_set={:?}",
            self.d,
            self.tau,
            self.alpha(),
            kernel,
            self.beta,
            self.p,
            self.vertex_set
        )
    }
}

/// Text-configuration form of [`ModelParams`]. Keys: d, tau, alpha, sigma,
/// kernel, profile, beta, p, vertex_set. `tau` and `alpha` accept "inf".
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub d: usize,
    pub tau: Ext,
    pub alpha: Ext,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertex_set: Option<VertexSet>,
}

impl ParamsConfig {
    pub fn resolve(&self) -> Result<ModelParams, ModelError> {
        let kernel = match self.kernel.as_deref().unwrap_or("interpolation") {
            "interpolation" => Kernel::Interpolation { sigma: self.sigma.unwrap_or(1.0) },
            "sum" => {
                if matches!(self.sigma, Some(s) if s != 0.0) {
                    return Err(invalid("sigma", "the sum kernel has sigma = 0"));
                }
                Kernel::Sum
            }
            other => return Err(invalid("kernel", format!("unknown kernel {other:?}"))),
        };
        let profile = match (self.profile.as_deref(), self.alpha) {
            (None | Some("polynomial"), Ext::Finite(alpha)) => Profile::Polynomial { alpha },
            (None | Some("threshold"), Ext::Inf) => Profile::Threshold,
            (Some("threshold"), Ext::Finite(_)) => {
                return Err(invalid("profile", "threshold profile requires alpha = inf"))
            }
            (Some("polynomial"), Ext::Inf) => {
                return Err(invalid("profile", "polynomial profile requires finite alpha"))
            }
            (Some(other), _) => return Err(invalid("profile", format!("unknown profile {other:?}"))),
        };
        let m = ModelParams {
            d: self.d,
            tau: self.tau,
            kernel,
            profile,
            beta: self.beta.unwrap_or(1.0),
            p: self.p.unwrap_or(1.0),
            vertex_set: self.vertex_set.unwrap_or(VertexSet::Poisson),
        };
        m.validate()?;
        Ok(m)
    }
}

pub type Point = SmallVec<[f64; 3]>;

#[derive(Clone, Debug, PartialEq)]
pub struct MarkedVertex {
    pub pos: Point,
    pub mark: f64,
}

impl MarkedVertex {
    pub fn new(pos: &[f64], mark: f64) -> Self {
        MarkedVertex { pos: SmallVec::from_slice(pos), mark }
    }
}

/// ‖x − y‖^d
#[inline]
pub fn dist_pow_d(x: &[f64], y: &[f64], d: usize) -> f64 {
    if d == 1 {
        return (x[0] - y[0]).abs();
    }
    let mut s = 0.0;
    for i in 0..d {
        let t = x[i] - y[i];
        s += t * t;
    }
    match d {
        2 => s,
        _ => s.powf(0.5 * d as f64),
    }
}

/// Precomputed connection-probability evaluator.
#[derive(Clone, Copy, Debug)]
pub struct Connector {
    pub d: usize,
    pub beta: f64,
    pub p: f64,
    alpha: Option<f64>,
    kernel: Kernel,
    inv_d: f64,
}

impl Connector {
    pub fn new(params: &ModelParams) -> Self {
        Connector {
            d: params.d,
            beta: params.beta,
            p: params.p,
            alpha: params.alpha().finite(),
            kernel: params.kernel,
            inv_d: 1.0 / params.d as f64,
        }
    }

    #[inline]
    pub fn kernel(&self, w1: f64, w2: f64) -> f64 {
        match self.kernel {
            Kernel::Interpolation { sigma } => {
                let (lo, hi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
                if sigma == 0.0 {
                    hi
                } else if sigma == 1.0 {
                    hi * lo
                } else {
                    hi * lo.powf(sigma)
                }
            }
            Kernel::Sum => {
                if self.d == 1 {
                    w1 + w2
                } else {
                    (w1.powf(self.inv_d) + w2.powf(self.inv_d)).powi(self.d as i32)
                }
            }
        }
    }

    /// Connection probability given ‖x_u − x_v‖^d and the two marks.
    #[inline]
    pub fn prob(&self, r_pow_d: f64, w1: f64, w2: f64) -> f64 {
        self.prob_kappa(r_pow_d, self.kernel(w1, w2))
    }

    #[inline]
    pub fn prob_kappa(&self, r_pow_d: f64, kappa: f64) -> f64 {
        let bk = self.beta * kappa;
        match self.alpha {
            None => {
                if bk >= r_pow_d {
                    self.p
                } else {
                    0.0
                }
            }
            Some(a) => {
                if bk >= r_pow_d {
                    self.p
                } else {
                    let s = bk / r_pow_d;
                    if a == 3.0 {
                        self.p * s * s * s
                    } else if a == 2.0 {
                        self.p * s * s
                    } else {
                        self.p * s.powf(a)
                    }
                }
            }
        }
    }
}

pub fn kernel_value(w1: f64, w2: f64, params: &ModelParams) -> f64 {
    Connector::new(params).kernel(w1, w2)
}

pub fn connection_prob(u: &MarkedVertex, v: &MarkedVertex, params: &ModelParams) -> f64 {
    let c = Connector::new(params);
    c.prob(dist_pow_d(&u.pos, &v.pos, params.d), u.mark, v.mark)
}
