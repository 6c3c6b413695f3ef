//! Mechanical properties from a segmented curve.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segment::{RegionLabel, SegmentFlag, SegmentationResult};

/// Plateau and densification slopes closer than this (bar) do not intersect.
pub const PARALLEL_SLOPE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropsError {
    #[error("missing {0} region")]
    MissingRegion(RegionLabel),
    #[error("non-physical elastic modulus {0} bar")]
    NonPhysicalModulus(f64),
    #[error("degenerate intersection: plateau and densification fits are parallel")]
    DegenerateIntersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyFlag {
    PoreFractionGt1,
    NoPlateau,
    LowR2,
    SlopeOrderViolation,
    /// Creep region present but with no strain accumulated.
    ZeroLengthCreep,
}

impl PropertyFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PoreFractionGt1 => "pore_fraction_gt_1",
            Self::NoPlateau => "no_plateau",
            Self::LowR2 => "low_r2",
            Self::SlopeOrderViolation => "slope_order_violation",
            Self::ZeroLengthCreep => "zero_length_creep",
        }
    }
}

impl fmt::Display for PropertyFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<SegmentFlag> for PropertyFlag {
    fn from(f: SegmentFlag) -> Self {
        match f {
            SegmentFlag::SlopeOrderViolation => Self::SlopeOrderViolation,
            SegmentFlag::LowR2 => Self::LowR2,
            SegmentFlag::NoPlateau => Self::NoPlateau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanicalProperties {
    /// bar
    pub elastic_modulus: f64,
    /// bar
    pub yield_strength: f64,
    /// Strain where the plateau and densification fits intersect; not clamped to 1.
    pub pore_fraction: f64,
    pub creep_strain: Option<f64>,
    pub flags: BTreeSet<PropertyFlag>,
}

impl MechanicalProperties {
    pub fn flags_joined(&self, sep: &str) -> String {
        self.flags.iter().map(|f| f.as_str()).collect::<Vec<_>>().join(sep)
    }
}

fn region(seg: &SegmentationResult, label: RegionLabel) -> Result<&crate::segment::RegionFit, PropsError> {
    seg.region(label).ok_or(PropsError::MissingRegion(label))
}

/// Slope of the elastic fit, bar.
pub fn elastic_modulus(seg: &SegmentationResult) -> Result<f64, PropsError> {
    let slope = region(seg, RegionLabel::Elastic)?.slope;
    if slope > 0.0 && slope.is_finite() {
        Ok(slope)
    } else {
        Err(PropsError::NonPhysicalModulus(slope))
    }
}

/// Elastic fit evaluated at the elastic→plateau breakpoint, bar.
pub fn yield_strength(seg: &SegmentationResult) -> Result<f64, PropsError> {
    let elastic = region(seg, RegionLabel::Elastic)?;
    let plateau = region(seg, RegionLabel::Plateau)?;
    Ok(elastic.eval(plateau.strain_range.0))
}

/// Strain at which the plateau and densification fits intersect.
pub fn pore_fraction(seg: &SegmentationResult) -> Result<f64, PropsError> {
    let p = region(seg, RegionLabel::Plateau)?;
    let d = region(seg, RegionLabel::Densification)?;
    let dslope = d.slope - p.slope;
    if dslope.abs() < PARALLEL_SLOPE_TOL || !dslope.is_finite() {
        return Err(PropsError::DegenerateIntersection);
    }
    Ok((p.intercept - d.intercept) / dslope)
}

/// Strain accumulated across the creep region, if there is one.
pub fn creep_strain(seg: &SegmentationResult) -> Option<f64> {
    seg.region(RegionLabel::Creep)
        .map(|r| r.strain_range.1 - r.strain_range.0)
}

pub fn extract_properties(seg: &SegmentationResult) -> Result<MechanicalProperties, PropsError> {
    let elastic_modulus = elastic_modulus(seg)?;
    let yield_strength = yield_strength(seg)?;
    let pore_fraction = pore_fraction(seg)?;
    let creep_strain = creep_strain(seg);
    let mut flags: BTreeSet<PropertyFlag> = seg.flags.iter().map(|&f| f.into()).collect();
    if pore_fraction > 1.0 {
        flags.insert(PropertyFlag::PoreFractionGt1);
    }
    if creep_strain == Some(0.0) {
        flags.insert(PropertyFlag::ZeroLengthCreep);
    }
    Ok(MechanicalProperties {
        elastic_modulus,
        yield_strength,
        pore_fraction,
        creep_strain,
        flags,
    })
}
