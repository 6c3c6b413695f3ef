//! Local cubic regression on a uniform strain grid.
//!
//! At every grid node a tricube-weighted cubic is fitted to the samples in
//! the surrounding window. The fitted value and the analytic first and second
//! derivatives of that cubic form the [`DerivativeProfile`]. Polynomials up to
//! degree three are reproduced exactly.

use nalgebra::{Matrix4, Vector4};

use super::SegmentError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothConfig {
    pub grid_points: usize,
    /// Half-width of the smoothing window as a fraction of the strain span.
    pub bandwidth_frac: f64,
    /// Minimum samples with positive weight inside a window; windows grow
    /// until this many are available.
    pub min_window_points: usize,
}

impl Default for SmoothConfig {
    fn default() -> Self {
        Self {
            grid_points: 512,
            bandwidth_frac: 0.05,
            min_window_points: 8,
        }
    }
}

/// Smoothed stress and its strain derivatives on a uniform grid, together
/// with the strain-sorted samples it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeProfile {
    pub grid: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub bandwidth: f64,
    pub(crate) xs: Vec<f64>,
    pub(crate) ys: Vec<f64>,
}

impl DerivativeProfile {
    pub fn step(&self) -> f64 {
        if self.grid.len() < 2 {
            0.0
        } else {
            self.grid[1] - self.grid[0]
        }
    }

    pub fn span(&self) -> (f64, f64) {
        (self.grid[0], self.grid[self.grid.len() - 1])
    }

    /// Strain-sorted samples underlying the profile.
    pub fn samples(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }
}

fn tricube(u: f64) -> f64 {
    let a = u.abs();
    if a >= 1.0 {
        0.0
    } else {
        let t = 1.0 - a * a * a;
        t * t * t
    }
}

/// Fits the weighted cubic around `x0`; returns (value, d1, d2).
fn local_cubic(xs: &[f64], ys: &[f64], x0: f64, h: f64, min_pts: usize) -> Option<(f64, f64, f64)> {
    let lo = xs.partition_point(|&x| x < x0 - h);
    let hi = xs.partition_point(|&x| x <= x0 + h);
    let mut gram = Matrix4::<f64>::zeros();
    let mut rhs = Vector4::<f64>::zeros();
    let mut used = 0usize;
    for i in lo..hi {
        let u = (xs[i] - x0) / h;
        let w = tricube(u);
        if w <= 0.0 {
            continue;
        }
        used += 1;
        let basis = [1.0, u, u * u, u * u * u];
        for r in 0..4 {
            rhs[r] += w * basis[r] * ys[i];
            for c in r..4 {
                gram[(r, c)] += w * basis[r] * basis[c];
            }
        }
    }
    if used < min_pts.max(4) {
        return None;
    }
    for r in 0..4 {
        for c in 0..r {
            gram[(r, c)] = gram[(c, r)];
        }
    }
    let coef = gram.cholesky()?.solve(&rhs);
    if !coef.iter().all(|c| c.is_finite()) {
        return None;
    }
    Some((coef[0], coef[1] / h, 2.0 * coef[2] / (h * h)))
}

/// Builds a derivative profile from `(strain, stress)` samples.
pub fn smooth_and_differentiate_points(
    pairs: &[(f64, f64)],
    cfg: &SmoothConfig,
) -> Result<DerivativeProfile, SegmentError> {
    if pairs.len() < crate::ingest::MIN_SAMPLES {
        return Err(SegmentError::TooFewPoints(pairs.len()));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let xs: Vec<f64> = sorted.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = sorted.iter().map(|p| p.1).collect();
    let (min, max) = (xs[0], xs[xs.len() - 1]);
    let span = max - min;
    if !(span >= 1e-6) {
        return Err(SegmentError::DegenerateRange(span));
    }
    let n = cfg.grid_points.max(2);
    let bandwidth = cfg.bandwidth_frac * span;
    let mut grid = Vec::with_capacity(n);
    let mut smoothed = Vec::with_capacity(n);
    let mut d1 = Vec::with_capacity(n);
    let mut d2 = Vec::with_capacity(n);
    for i in 0..n {
        let x0 = if i == n - 1 {
            max
        } else {
            min + span * i as f64 / (n - 1) as f64
        };
        let mut h = bandwidth;
        let fit = loop {
            if let Some(f) = local_cubic(&xs, &ys, x0, h, cfg.min_window_points) {
                break f;
            }
            if h > 2.0 * span {
                return Err(SegmentError::DegenerateRange(span));
            }
            h *= 1.25;
        };
        grid.push(x0);
        smoothed.push(fit.0);
        d1.push(fit.1);
        d2.push(fit.2);
    }
    Ok(DerivativeProfile {
        grid,
        smoothed,
        d1,
        d2,
        bandwidth,
        xs,
        ys,
    })
}
