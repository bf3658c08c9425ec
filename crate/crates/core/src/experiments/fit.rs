//! Least-squares slopes on transformed coordinates.

use serde::Serialize;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// ln x
    Log,
    /// ln ln x
    LogLog,
    /// ln(−ln x), for probabilities
    LogNegLog,
}

impl Transform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
            Transform::LogLog => x.ln().ln(),
            Transform::LogNegLog => (-x.ln()).ln(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Transform::Identity => "x",
            Transform::Log => "log",
            Transform::LogLog => "loglog",
            Transform::LogNegLog => "log(-log)",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("transformed value is not finite at point {0}")]
    NonFinite(usize),
    #[error("all x values coincide after transformation")]
    DegenerateX,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    pub x_transform: Transform,
    pub y_transform: Transform,
}

impl SlopeFit {
    pub fn predict(&self, tx: f64) -> f64 {
        self.intercept + self.slope * tx
    }
}

/// Ordinary least squares of yt(y) on xt(x).
pub fn fit_slope(points: &[(f64, f64)], xt: Transform, yt: Transform) -> Result<SlopeFit, FitError> {
    if points.len() < 4 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for (i, &(x, y)) in points.iter().enumerate() {
        let (a, b) = (xt.apply(x), yt.apply(y));
        if !a.is_finite() || !b.is_finite() {
            return Err(FitError::NonFinite(i));
        }
        xs.push(a);
        ys.push(b);
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx <= 1e-300 || sxx <= 1e-24 * xs.iter().map(|x| x * x).sum::<f64>() {
        return Err(FitError::DegenerateX);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy <= 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(SlopeFit { slope, intercept, r_squared, points: xs.len(), x_transform: xt, y_transform: yt })
}

/// Drops the smallest `drop_fraction` of the x grid before fitting.
pub fn fit_slope_trimmed(points: &[(f64, f64)], xt: Transform, yt: Transform, drop_fraction: f64) -> Result<SlopeFit, FitError> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let drop = ((pts.len() as f64) * drop_fraction.clamp(0.0, 1.0)).floor() as usize;
    fit_slope(&pts[drop..], xt, yt)
}

pub const DEFAULT_DROP: f64 = 0.2;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = (1..10).map(|i| (i as f64, 3.0 * (i as f64).powi(2))).collect();
        let f = fit_slope(&pts, Transform::Log, Transform::Log).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_y() {
        let pts: Vec<(f64, f64)> = (1..8).map(|i| (i as f64, 5.0)).collect();
        let f = fit_slope(&pts, Transform::Log, Transform::Log).unwrap();
        assert!(f.slope.abs() < 1e-12);
        assert!((0.0..=1.0).contains(&f.r_squared));
    }

    #[test]
    fn noisy_square_root() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let x = 2f64.powf(4.0 + 0.3 * i as f64);
                let noise: f64 = r.random::<f64>() * 2.0 - 1.0;
                (x, x.sqrt() * (1.0 + 0.1 * noise))
            })
            .collect();
        let f = fit_slope(&pts, Transform::Log, Transform::Log).unwrap();
        assert!((f.slope - 0.5).abs() < 0.05, "{}", f.slope);
    }

    #[test]
    fn errors() {
        let few = [(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)];
        assert_eq!(fit_slope(&few, Transform::Identity, Transform::Identity), Err(FitError::TooFewPoints(3)));
        let same = [(2.0, 1.0), (2.0, 2.0), (2.0, 3.0), (2.0, 4.0)];
        assert_eq!(fit_slope(&same, Transform::Identity, Transform::Identity), Err(FitError::DegenerateX));
        let zero = [(1.0, 0.0), (2.0, 2.0), (3.0, 3.0), (4.0, 4.0)];
        assert_eq!(fit_slope(&zero, Transform::Log, Transform::Log), Err(FitError::NonFinite(0)));
    }

    #[test]
    fn trimming_drops_smallest() {
        let mut pts: Vec<(f64, f64)> = (1..=10).map(|i| (i as f64, i as f64)).collect();
        pts[0].1 = 100.0;
        pts[1].1 = 100.0;
        pts.reverse();
        let f = fit_slope_trimmed(&pts, Transform::Identity, Transform::Identity, 0.2).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert_eq!(f.points, 8);
    }
}
