//! Intra-sample consistency and fit acceptance.
//!
//! Curves from different positions on one membrane are inverted to
//! strain(stress), sampled on a shared stress grid, and compared: the
//! coefficient of variation is the grid-averaged standard deviation of strain
//! divided by the grand mean strain.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::StressStrainCurve;
use crate::props::{extract_properties, PropertyFlag, PropsError};
use crate::segment::{RegionLabel, SegmentError, SegmentationResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QualityError {
    #[error("need at least 2 curves, got {0}")]
    TooFewCurves(usize),
    #[error("curve {0} has no points")]
    EmptyCurve(usize),
    #[error("stress ranges do not overlap (highest minimum {lo} bar, lowest maximum {hi} bar)")]
    EmptyOverlap { lo: f64, hi: f64 },
    #[error("grand mean strain {0} is not positive")]
    NonPositiveMeanStrain(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// n − 1 denominator.
    #[default]
    Sample,
    /// n denominator.
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvConfig {
    pub grid_points: usize,
    pub normalization: Normalization,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            grid_points: 200,
            normalization: Normalization::Sample,
        }
    }
}

/// Uniform stress grid `(min, max]` with `n` nodes; `min` itself is excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressGrid {
    pub min: f64,
    pub max: f64,
    pub values: Vec<f64>,
}

impl StressGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub sample_id: String,
    pub n_curves: usize,
    pub cv: f64,
    pub stress_grid: (f64, f64, usize),
    pub per_curve_flags: BTreeMap<i64, BTreeSet<String>>,
}

/// Running maximum of stress paired with strain, so strain(stress) is a function.
fn monotone_branch(curve: &StressStrainCurve) -> Vec<(f64, f64)> {
    let mut best = f64::NEG_INFINITY;
    curve
        .points
        .iter()
        .map(|p| {
            best = best.max(p.stress);
            (best, p.strain)
        })
        .collect()
}

fn invert(branch: &[(f64, f64)], stress: f64) -> f64 {
    let j = branch.partition_point(|&(s, _)| s < stress);
    if j == 0 {
        return branch[0].1;
    }
    if j >= branch.len() {
        return branch[branch.len() - 1].1;
    }
    let (s0, e0) = branch[j - 1];
    let (s1, e1) = branch[j];
    if s1 == s0 {
        e1
    } else {
        e0 + (e1 - e0) * (stress - s0) / (s1 - s0)
    }
}

/// Shared stress grid over the overlap of all curves' stress ranges.
pub fn common_stress_axis(curves: &[StressStrainCurve], n: usize) -> Result<StressGrid, QualityError> {
    if curves.len() < 2 {
        return Err(QualityError::TooFewCurves(curves.len()));
    }
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (i, c) in curves.iter().enumerate() {
        let branch = monotone_branch(c);
        let (first, last) = match (branch.first(), branch.last()) {
            (Some(f), Some(l)) => (f.0, l.0),
            _ => return Err(QualityError::EmptyCurve(i)),
        };
        lo = lo.max(first);
        hi = hi.min(last);
    }
    if !(hi > lo) {
        return Err(QualityError::EmptyOverlap { lo, hi });
    }
    let n = n.max(1);
    let values = (1..=n)
        .map(|i| {
            if i == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / n as f64
            }
        })
        .collect();
    Ok(StressGrid {
        min: lo,
        max: hi,
        values,
    })
}

/// Coefficient of variation with the default 200-point grid and sample std.
pub fn intra_sample_cv(curves: &[StressStrainCurve]) -> Result<ConsistencyReport, QualityError> {
    intra_sample_cv_with(curves, &CvConfig::default())
}

pub fn intra_sample_cv_with(curves: &[StressStrainCurve], cfg: &CvConfig) -> Result<ConsistencyReport, QualityError> {
    let grid = common_stress_axis(curves, cfg.grid_points)?;
    let branches: Vec<Vec<(f64, f64)>> = curves.iter().map(monotone_branch).collect();
    let k = curves.len() as f64;
    let denom = match cfg.normalization {
        Normalization::Sample => k - 1.0,
        Normalization::Population => k,
    };
    let mut std_sum = 0.0;
    let mut strain_sum = 0.0;
    let mut column = vec![0.0; curves.len()];
    for &s in &grid.values {
        for (slot, b) in column.iter_mut().zip(&branches) {
            *slot = invert(b, s);
        }
        let mean = column.iter().sum::<f64>() / k;
        let ss: f64 = column.iter().map(|e| (e - mean) * (e - mean)).sum();
        std_sum += (ss / denom).sqrt();
        strain_sum += mean;
    }
    let m = grid.len() as f64;
    let grand_mean = strain_sum / m;
    if !(grand_mean > 0.0) {
        return Err(QualityError::NonPositiveMeanStrain(grand_mean));
    }
    let cv = (std_sum / m) / grand_mean;

    let mut per_curve_flags = BTreeMap::new();
    for (c, b) in curves.iter().zip(&branches) {
        let mut flags = BTreeSet::new();
        if c.clamped_points > 0 {
            flags.insert("negative_stress_clamped".to_string());
        }
        if c.points.iter().zip(b).any(|(p, r)| p.stress < r.0) {
            flags.insert("non_monotone_stress".to_string());
        }
        per_curve_flags.insert(c.position_index, flags);
    }
    Ok(ConsistencyReport {
        sample_id: curves[0].sample_id.clone(),
        n_curves: curves.len(),
        cv,
        stress_grid: (grid.min, grid.max, grid.len()),
        per_curve_flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityConfig {
    /// Minimum r² of the elastic and densification fits.
    pub min_r2: f64,
    /// Fraction of passing curves needed for the sample to pass (inclusive).
    pub min_pass_fraction: f64,
    pub reject_pore_fraction_gt_1: bool,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            min_r2: 0.95,
            min_pass_fraction: 0.75,
            reject_pore_fraction_gt_1: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityReason {
    SegmentationFailed(String),
    LowR2 { region: RegionLabel, r_squared: f64 },
    SlopeOrderViolation,
    DegenerateIntersection,
    PropertyError(String),
    PoreFractionGt1,
}

impl fmt::Display for QualityReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SegmentationFailed(m) => write!(f, "segmentation_failed({m})"),
            Self::LowR2 { region, r_squared } => write!(f, "low_r2({region}={r_squared:.4})"),
            Self::SlopeOrderViolation => f.write_str("slope_order_violation"),
            Self::DegenerateIntersection => f.write_str("degenerate_intersection"),
            Self::PropertyError(m) => write!(f, "property_error({m})"),
            Self::PoreFractionGt1 => f.write_str("pore_fraction_gt_1"),
        }
    }
}

/// Segmentation outcome of one test position.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveOutcome {
    pub position_index: i64,
    pub segmentation: Result<SegmentationResult, SegmentError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveVerdict {
    pub position_index: i64,
    pub pass: bool,
    pub reasons: Vec<QualityReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub curves: Vec<CurveVerdict>,
    pub pass_fraction: f64,
    pub pass: bool,
}

impl QualityReport {
    /// Failure reasons as `p<position>:<reason>` joined by `;`.
    pub fn reasons_joined(&self) -> String {
        self.curves
            .iter()
            .flat_map(|c| c.reasons.iter().map(move |r| format!("p{}:{}", c.position_index, r)))
            .collect::<Vec<_>>()
            .join(";")
    }
}

fn judge(seg: &SegmentationResult, cfg: &QualityConfig) -> Vec<QualityReason> {
    let mut reasons = Vec::new();
    for label in [RegionLabel::Elastic, RegionLabel::Densification] {
        if let Some(r) = seg.region(label) {
            if r.r_squared < cfg.min_r2 {
                reasons.push(QualityReason::LowR2 {
                    region: label,
                    r_squared: r.r_squared,
                });
            }
        }
    }
    if !seg.is_ordered() {
        reasons.push(QualityReason::SlopeOrderViolation);
    }
    match extract_properties(seg) {
        Ok(p) => {
            if cfg.reject_pore_fraction_gt_1 && p.flags.contains(&PropertyFlag::PoreFractionGt1) {
                reasons.push(QualityReason::PoreFractionGt1);
            }
        }
        Err(PropsError::DegenerateIntersection) => reasons.push(QualityReason::DegenerateIntersection),
        Err(e) => reasons.push(QualityReason::PropertyError(e.to_string())),
    }
    reasons
}

/// Marks each curve pass/fail; the sample passes when enough curves do.
pub fn assess_quality(outcomes: &[CurveOutcome], cfg: &QualityConfig) -> QualityReport {
    let curves: Vec<CurveVerdict> = outcomes
        .iter()
        .map(|o| {
            let reasons = match &o.segmentation {
                Ok(seg) => judge(seg, cfg),
                Err(e) => vec![QualityReason::SegmentationFailed(e.to_string())],
            };
            CurveVerdict {
                position_index: o.position_index,
                pass: reasons.is_empty(),
                reasons,
            }
        })
        .collect();
    let passed = curves.iter().filter(|c| c.pass).count();
    let n = curves.len();
    let pass_fraction = if n == 0 { 0.0 } else { passed as f64 / n as f64 };
    QualityReport {
        pass: n > 0 && passed as f64 >= cfg.min_pass_fraction * n as f64,
        pass_fraction,
        curves,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SampleGeometry;
    use crate::segment::{RegionFit, SegmentFlag};

    fn linear(pos: i64, strain_per_bar: f64, max_stress: f64) -> StressStrainCurve {
        StressStrainCurve::from_pairs(
            "S",
            pos,
            (0..=100).map(|i| {
                let s = max_stress * i as f64 / 100.0;
                (s * strain_per_bar, s)
            }),
            SampleGeometry::new(100.0, 12.0),
        )
    }

    #[test]
    fn grid_spans_overlap() {
        let g = common_stress_axis(&[linear(0, 0.01, 100.0), linear(1, 0.01, 150.0)], 200).unwrap();
        assert_eq!(g.min, 0.0);
        assert_eq!(g.max, 100.0);
        assert!(g.values[0] > 0.0);
        assert_eq!(*g.values.last().unwrap(), 100.0);
        assert_eq!(g.len(), 200);
    }

    #[test]
    fn disjoint_ranges() {
        let mut high = linear(1, 0.01, 100.0);
        for p in &mut high.points {
            p.stress = 60.0 + p.stress * 0.4;
        }
        let low = linear(0, 0.01, 50.0);
        assert!(matches!(
            common_stress_axis(&[low, high], 200),
            Err(QualityError::EmptyOverlap { .. })
        ));
    }

    #[test]
    fn single_curve_rejected() {
        assert_eq!(
            intra_sample_cv(&[linear(0, 0.01, 100.0)]),
            Err(QualityError::TooFewCurves(1))
        );
    }

    #[test]
    fn identical_curves_have_zero_cv() {
        let c = linear(0, 0.01, 100.0);
        let r = intra_sample_cv(&[c.clone(), c.clone(), c]).unwrap();
        assert!(r.cv.abs() <= 1e-12);
    }

    #[test]
    fn two_curve_closed_form() {
        let r = intra_sample_cv(&[linear(0, 0.01, 100.0), linear(1, 0.012, 100.0)]).unwrap();
        let expected = 0.1 * 2f64.sqrt() / 1.1;
        assert!((r.cv - expected).abs() < 1e-12, "{}", r.cv);
        assert!((r.cv - 0.1286).abs() < 1e-4);
    }

    #[test]
    fn running_max_handles_unload_wiggle() {
        let mut c = linear(0, 0.01, 100.0);
        c.points[50].stress -= 5.0;
        let r = intra_sample_cv(&[c.clone(), linear(1, 0.01, 100.0)]).unwrap();
        assert!(r.per_curve_flags[&0].contains("non_monotone_stress"));
        assert!(r.cv < 0.01);
    }

    fn region(label: RegionLabel, slope: f64, intercept: f64, r2: f64) -> RegionFit {
        RegionFit {
            label,
            strain_range: (0.0, 1.0),
            slope,
            intercept,
            r_squared: r2,
            point_count: 10,
        }
    }

    fn clean(pos: i64) -> CurveOutcome {
        CurveOutcome {
            position_index: pos,
            segmentation: Ok(SegmentationResult {
                sample_id: "S".into(),
                position_index: pos,
                breakpoints: vec![0.1, 0.6],
                regions: vec![
                    region(RegionLabel::Elastic, 200.0, 0.0, 0.99),
                    region(RegionLabel::Plateau, 50.0, 10.0, 0.9),
                    region(RegionLabel::Densification, 350.0, -170.0, 0.99),
                ],
                has_creep: false,
                flags: BTreeSet::new(),
            }),
        }
    }

    #[test]
    fn clean_sample_passes() {
        let r = assess_quality(&(0..4).map(clean).collect::<Vec<_>>(), &QualityConfig::default());
        assert!(r.pass);
        assert_eq!(r.pass_fraction, 1.0);
    }

    #[test]
    fn three_of_four_is_enough() {
        let mut outcomes: Vec<CurveOutcome> = (0..4).map(clean).collect();
        outcomes[2].segmentation = Err(SegmentError::Failure("flat".into()));
        let r = assess_quality(&outcomes, &QualityConfig::default());
        assert!(r.pass);
        assert!(!r.curves[2].pass);
        outcomes[1].segmentation = Err(SegmentError::Failure("flat".into()));
        assert!(!assess_quality(&outcomes, &QualityConfig::default()).pass);
    }

    #[test]
    fn parallel_fits_fail_with_reason() {
        let outcomes: Vec<CurveOutcome> = (0..3)
            .map(|p| {
                let mut o = clean(p);
                let seg = o.segmentation.as_mut().unwrap();
                seg.regions[2] = region(RegionLabel::Densification, 50.0, 10.0, 0.99);
                seg.flags.insert(SegmentFlag::SlopeOrderViolation);
                o
            })
            .collect();
        let r = assess_quality(&outcomes, &QualityConfig::default());
        assert!(!r.pass);
        for c in &r.curves {
            assert!(c.reasons.contains(&QualityReason::DegenerateIntersection));
        }
        assert!(r.reasons_joined().contains("p0:degenerate_intersection"));
    }

    #[test]
    fn low_r2_listed() {
        let mut o = clean(0);
        o.segmentation.as_mut().unwrap().regions[0].r_squared = 0.5;
        let r = assess_quality(&[o], &QualityConfig::default());
        assert!(matches!(
            r.curves[0].reasons[0],
            QualityReason::LowR2 {
                region: RegionLabel::Elastic,
                ..
            }
        ));
    }
}
