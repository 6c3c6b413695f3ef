//! Region segmentation of compression curves.
//!
//! A loading curve is split into elastic, plateau and densification regions
//! by a continuous piecewise-linear fit whose breakpoints are seeded from the
//! curvature of a smoothed profile. A trailing constant-stress hold, when
//! present, becomes a fourth (creep) region fitted as strain against time.

mod piecewise;
mod record;
mod smooth;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CurvePoint, StressStrainCurve, MIN_SAMPLES};
use crate::stats::{fit_line, LineFit};

pub use piecewise::{curvature_peaks, find_breakpoints, find_breakpoints_with, piecewise_sse, BreakpointConfig};
pub use record::RecordError;
pub use smooth::{smooth_and_differentiate_points, DerivativeProfile, SmoothConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentError {
    #[error("too few points: {0}")]
    TooFewPoints(usize),
    #[error("degenerate strain range ({0:e})")]
    DegenerateRange(f64),
    #[error("breakpoint count must be 2 or 3, got {0}")]
    BadBreakCount(usize),
    #[error("segmentation failure: {0}")]
    Failure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionLabel {
    Elastic,
    Plateau,
    Densification,
    Creep,
}

impl RegionLabel {
    pub const ALL: [RegionLabel; 4] = [Self::Elastic, Self::Plateau, Self::Densification, Self::Creep];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Elastic => "elastic",
            Self::Plateau => "plateau",
            Self::Densification => "densification",
            Self::Creep => "creep",
        }
    }
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegionLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown region `{s}`"))
    }
}

/// Least-squares line over one region.
///
/// Loading regions are stress (bar) against strain; the creep region is
/// strain against time (s) at near-constant stress.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionFit {
    pub label: RegionLabel,
    pub strain_range: (f64, f64),
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub point_count: usize,
}

impl RegionFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentFlag {
    /// Elastic or densification slope not above the plateau slope.
    SlopeOrderViolation,
    /// Elastic or densification r² below the configured minimum.
    LowR2,
    /// Plateau shorter than the configured fraction of the strain span.
    NoPlateau,
}

impl SegmentFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SlopeOrderViolation => "slope_order_violation",
            Self::LowR2 => "low_r2",
            Self::NoPlateau => "no_plateau",
        }
    }
}

impl FromStr for SegmentFlag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::SlopeOrderViolation, Self::LowR2, Self::NoPlateau]
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown segmentation flag `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub sample_id: String,
    pub position_index: i64,
    /// Ascending strains: elastic→plateau, plateau→densification, and the
    /// creep onset when `has_creep`.
    pub breakpoints: Vec<f64>,
    /// In strain order.
    pub regions: Vec<RegionFit>,
    pub has_creep: bool,
    pub flags: BTreeSet<SegmentFlag>,
}

impl SegmentationResult {
    pub fn region(&self, label: RegionLabel) -> Option<&RegionFit> {
        self.regions.iter().find(|r| r.label == label)
    }

    /// Strain interval covered by all regions.
    pub fn analyzed_span(&self) -> Option<(f64, f64)> {
        Some((
            self.regions.first()?.strain_range.0,
            self.regions.last()?.strain_range.1,
        ))
    }

    pub fn is_ordered(&self) -> bool {
        !self.flags.contains(&SegmentFlag::SlopeOrderViolation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CreepConfig {
    /// Hold detected when smoothed stress stays within this fraction of max stress.
    pub stress_band_frac: f64,
    /// ... for longer than this fraction of the test duration.
    pub min_time_frac: f64,
    /// Moving-average width (samples) applied to stress before the band test.
    pub smoothing_window: usize,
}

impl Default for CreepConfig {
    fn default() -> Self {
        Self {
            stress_band_frac: 0.01,
            min_time_frac: 0.05,
            smoothing_window: 15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentConfig {
    pub smooth: SmoothConfig,
    pub breakpoints: BreakpointConfig,
    pub creep: CreepConfig,
    pub min_r2: f64,
    pub min_plateau_frac: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            smooth: SmoothConfig::default(),
            breakpoints: BreakpointConfig::default(),
            creep: CreepConfig::default(),
            min_r2: 0.95,
            min_plateau_frac: 0.05,
        }
    }
}

/// Smoothed stress and strain derivatives of an aligned curve.
pub fn smooth_and_differentiate(
    curve: &StressStrainCurve,
    cfg: &SmoothConfig,
) -> Result<DerivativeProfile, SegmentError> {
    let pairs: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.strain, p.stress)).collect();
    smooth_and_differentiate_points(&pairs, cfg)
}

fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = values.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + values[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Index where a trailing constant-stress hold begins, if there is one.
pub fn detect_creep(points: &[CurvePoint], cfg: &CreepConfig) -> Option<usize> {
    let n = points.len();
    if n < 2 * MIN_SAMPLES {
        return None;
    }
    let stress: Vec<f64> = points.iter().map(|p| p.stress).collect();
    let smooth = moving_average(&stress, cfg.smoothing_window.max(1));
    let max = stress.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return None;
    }
    let band = cfg.stress_band_frac * max;
    let (mut lo, mut hi) = (smooth[n - 1], smooth[n - 1]);
    let mut k = n - 1;
    while k > 0 {
        let v = smooth[k - 1];
        if hi.max(v) - lo.min(v) >= band {
            break;
        }
        lo = lo.min(v);
        hi = hi.max(v);
        k -= 1;
    }
    let duration = points[n - 1].time_s - points[0].time_s;
    if !(points[n - 1].time_s - points[k].time_s > cfg.min_time_frac * duration) {
        return None;
    }

    // Sharpen the onset: best split between a rising line (stress vs time)
    // and a constant hold, searched around the band-window start.
    let w = cfg.smoothing_window.max(1);
    let first = k.saturating_sub(3 * w).max(2);
    let last = (k + 3 * w).min(n - 2);
    let lead = 3 * w + 2;
    let mut best = (f64::INFINITY, k);
    for i in first..=last {
        let hold = &stress[i..];
        let hold_mean = hold.iter().sum::<f64>() / hold.len() as f64;
        let hold_sse: f64 = hold.iter().map(|s| (s - hold_mean).powi(2)).sum();
        let start = i.saturating_sub(lead);
        let ts: Vec<f64> = points[start..i].iter().map(|p| p.time_s).collect();
        let rise_sse = match fit_line(&ts, &stress[start..i]) {
            Some(LineFit { slope, intercept, .. }) => ts
                .iter()
                .zip(&stress[start..i])
                .map(|(t, s)| (s - (slope * t + intercept)).powi(2))
                .sum(),
            None => 0.0,
        };
        let cost = hold_sse + rise_sse;
        if cost < best.0 {
            best = (cost, i);
        }
    }
    let onset = best.1;
    // Leave room for three loading regions before the hold.
    (onset >= 3 * MIN_SAMPLES && n - onset >= 4).then_some(onset)
}

fn fit_region(label: RegionLabel, range: (f64, f64), xs: &[f64], ys: &[f64]) -> Result<RegionFit, SegmentError> {
    if xs.len() < 4 {
        return Err(SegmentError::Failure(format!(
            "{label} region has {} points (need 4)",
            xs.len()
        )));
    }
    let line = fit_line(xs, ys).ok_or_else(|| SegmentError::Failure(format!("{label} region is degenerate")))?;
    Ok(RegionFit {
        label,
        strain_range: range,
        slope: line.slope,
        intercept: line.intercept,
        r_squared: line.r_squared,
        point_count: xs.len(),
    })
}

/// Splits an aligned curve into labeled regions and fits each one.
pub fn segment_curve(curve: &StressStrainCurve, cfg: &SegmentConfig) -> Result<SegmentationResult, SegmentError> {
    if curve.points.len() < MIN_SAMPLES {
        return Err(SegmentError::TooFewPoints(curve.points.len()));
    }
    let creep_onset = detect_creep(&curve.points, &cfg.creep);
    let loading: &[CurvePoint] = match creep_onset {
        Some(k) => &curve.points[..=k],
        None => &curve.points,
    };
    let pairs: Vec<(f64, f64)> = loading.iter().map(|p| (p.strain, p.stress)).collect();
    let profile = smooth_and_differentiate_points(&pairs, &cfg.smooth)?;
    let bps = find_breakpoints_with(&profile, 2, &cfg.breakpoints)?;
    let (b1, b2) = (bps[0], bps[1]);
    let (xs, ys) = profile.samples();
    let (start, end) = (xs[0], xs[xs.len() - 1]);

    let pick = |lo: f64, hi: f64, last: bool| -> (Vec<f64>, Vec<f64>) {
        xs.iter()
            .zip(ys)
            .filter(|(&x, _)| x >= lo && (x < hi || (last && x <= hi)))
            .map(|(&x, &y)| (x, y))
            .unzip()
    };
    let (ex, ey) = pick(f64::NEG_INFINITY, b1, false);
    let (px, py) = pick(b1, b2, false);
    let (dx, dy) = pick(b2, f64::INFINITY, true);
    let mut regions = vec![
        fit_region(RegionLabel::Elastic, (start, b1), &ex, &ey)?,
        fit_region(RegionLabel::Plateau, (b1, b2), &px, &py)?,
        fit_region(RegionLabel::Densification, (b2, end), &dx, &dy)?,
    ];
    let mut breakpoints = vec![b1, b2];

    if let Some(k) = creep_onset {
        let hold = &curve.points[k..];
        let ts: Vec<f64> = hold.iter().map(|p| p.time_s).collect();
        let es: Vec<f64> = hold.iter().map(|p| p.strain).collect();
        let range = (
            curve.points[k].strain,
            hold.iter().map(|p| p.strain).fold(f64::NEG_INFINITY, f64::max),
        );
        let mut creep = fit_region(RegionLabel::Creep, range, &ts, &es)?;
        creep.strain_range = range;
        if range.0 > b2 {
            breakpoints.push(range.0);
        }
        regions.push(creep);
    }

    let mut flags = BTreeSet::new();
    let (e, p, d) = (&regions[0], &regions[1], &regions[2]);
    if !(e.slope > p.slope && d.slope > p.slope) {
        flags.insert(SegmentFlag::SlopeOrderViolation);
    }
    if e.r_squared < cfg.min_r2 || d.r_squared < cfg.min_r2 {
        flags.insert(SegmentFlag::LowR2);
    }
    let span = regions.last().map(|r| r.strain_range.1).unwrap_or(end) - start;
    if b2 - b1 < cfg.min_plateau_frac * span {
        flags.insert(SegmentFlag::NoPlateau);
    }

    Ok(SegmentationResult {
        sample_id: curve.sample_id.clone(),
        position_index: curve.position_index,
        breakpoints,
        has_creep: regions.len() == 4,
        regions,
        flags,
    })
}
