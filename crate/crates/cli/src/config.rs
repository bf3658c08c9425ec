//! Run configuration: TOML file values overlaid by command-line flags,
//! falling back to defaults.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ksrg::model::{Ext, ModelParams, ParamsConfig, VertexSet};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum CliError {
    /// bad flags, unreadable or invalid configuration; exit status 2
    Config(String),
    /// anything failing after validation; exit status 1
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

pub fn config_err(m: impl fmt::Display) -> CliError {
    CliError::Config(m.to_string())
}

pub fn runtime_err(m: impl fmt::Display) -> CliError {
    CliError::Runtime(m.to_string())
}

/// Model table; absent keys fall back to d=1, tau=2.2, alpha=3, sigma=1, beta=p=1.
#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<Ext>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Ext>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertex_set: Option<VertexSet>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl ModelFile {
    pub fn overlay(&mut self, top: &ModelFile) {
        overlay!(self, top, d, tau, alpha, sigma, kernel, profile, beta, p, vertex_set);
    }

    pub fn resolve(&self) -> Result<ModelParams, CliError> {
        let alpha = self.alpha.unwrap_or(if self.profile.as_deref() == Some("threshold") { Ext::Inf } else { Ext::Finite(3.0) });
        let cfg = ParamsConfig {
            d: self.d.unwrap_or(1),
            tau: self.tau.unwrap_or(Ext::Finite(2.2)),
            alpha,
            sigma: self.sigma,
            kernel: self.kernel.clone(),
            profile: self.profile.clone(),
            beta: self.beta,
            p: self.p,
            vertex_set: self.vertex_set,
        };
        cfg.resolve().map_err(config_err)
    }
}

/// Everything a run can be configured with. Each subcommand reads the keys
/// it needs and ignores the rest.
#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drop_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wbar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axes: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default)]
    pub model: ModelFile,
}

impl RunFile {
    pub fn load(path: &Path) -> Result<RunFile, CliError> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    pub fn overlay(&mut self, top: &RunFile) {
        overlay!(
            self, top, command, seed, reps, n, n_grid, k_grid, k, s_k, seeds, gamma, rho, outer, drop_fraction, method,
            wbar, axes, resolution
        );
        self.model.overlay(&top.model);
    }

    /// File (if any) overlaid by the flags.
    pub fn merged(config: Option<&PathBuf>, flags: RunFile) -> Result<RunFile, CliError> {
        let mut base = match config {
            Some(p) => RunFile::load(p)?,
            None => RunFile::default(),
        };
        base.overlay(&flags);
        Ok(base)
    }

    /// TOML echo of the run with the model spelled out in full.
    pub fn resolved_text(&self, params: &ModelParams) -> Result<String, CliError> {
        let c = params.to_config();
        let mut out = self.clone();
        out.model = ModelFile {
            d: Some(c.d),
            tau: Some(c.tau),
            alpha: Some(c.alpha),
            sigma: c.sigma,
            kernel: c.kernel,
            profile: c.profile,
            beta: c.beta,
            p: c.p,
            vertex_set: c.vertex_set,
        };
        toml::to_string(&out).map_err(runtime_err)
    }
}

/// Grid syntax: comma list of numbers or powers `2^j`, or a dyadic range `2^a..2^b`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (pow2_exponent(a)?, pow2_exponent(b)?);
        if b < a {
            return Err(format!("empty range {s:?}"));
        }
        return Ok((a..=b).map(|j| 2f64.powi(j)).collect());
    }
    s.split(',').map(parse_number).collect()
}

fn pow2_exponent(s: &str) -> Result<i32, String> {
    let s = s.trim();
    s.strip_prefix("2^")
        .and_then(|e| e.parse::<i32>().ok())
        .ok_or_else(|| format!("range ends must look like 2^j, got {s:?}"))
}

/// A number, or `2^j`.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if let Some(e) = s.strip_prefix("2^") {
        return e.parse::<i32>().map(|j| 2f64.powi(j)).map_err(|_| format!("bad power {s:?}"));
    }
    s.parse::<f64>().map_err(|_| format!("not a number: {s:?}"))
}

pub fn check_grid(name: &str, g: &[f64]) -> Result<(), CliError> {
    if g.is_empty() || g.iter().any(|x| !(x.is_finite() && *x > 0.0)) || g.windows(2).any(|w| w[1] <= w[0]) {
        return Err(config_err(format!("{name} must be a non-empty increasing list of positive numbers")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("2^2..2^4").unwrap(), vec![4.0, 8.0, 16.0]);
        assert_eq!(parse_grid("1, 2^3,10").unwrap(), vec![1.0, 8.0, 10.0]);
        assert!(parse_grid("3..9").is_err());
        assert!(parse_grid("a").is_err());
    }

    #[test]
    fn flags_override_file() {
        let mut f: RunFile = toml::from_str("seed = 3\nreps = 10\n[model]\ntau = 2.5\nd = 2\n").unwrap();
        let flags = RunFile { reps: Some(20), model: ModelFile { d: Some(1), ..Default::default() }, ..Default::default() };
        f.overlay(&flags);
        assert_eq!((f.seed, f.reps), (Some(3), Some(20)));
        let m = f.model.resolve().unwrap();
        assert_eq!((m.d, m.tau), (1, Ext::Finite(2.5)));
    }

    #[test]
    fn defaults_are_reference() {
        assert_eq!(ModelFile::default().resolve().unwrap(), ModelParams::reference());
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(toml::from_str::<RunFile>("sed = 3\n").is_err());
    }

    #[test]
    fn resolved_round_trips() {
        let f = RunFile { seed: Some(7), k_grid: Some(vec![256.0, 512.0]), ..Default::default() };
        let m = ModelParams::reference();
        let text = f.resolved_text(&m).unwrap();
        let back: RunFile = toml::from_str(&text).unwrap();
        assert_eq!(back.model.resolve().unwrap(), m);
        assert_eq!(back.k_grid, f.k_grid);
    }
}
