//! Analysis toolkit for automated porous-membrane characterization.
//!
//! The crate covers the post-processing half of a membrane fabrication
//! campaign:
//!
//! - [`ingest`]: parse force/displacement exports, convert to engineering
//!   stress (bar) and strain, align the contact point.
//! - [`segment`]: smooth, differentiate and split a compression curve into
//!   elastic, plateau, densification and creep regions.
//! - [`props`]: elastic modulus, yield strength, pore fraction, creep strain.
//! - [`quality`]: intra-sample coefficient of variation and pass/fail rules.
//! - [`formulate`]: lever-rule dilution planning from polymer stocks.
//! - [`psd`]: pore labeling, coating-correction dilation and area-weighted
//!   pore-size distributions from binary masks.
//! - [`synth`]: ground-truth curve and mask generators used as test oracles.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod formulate;
pub mod ingest;
pub mod kv;
pub mod props;
pub mod psd;
pub mod quality;
pub mod segment;
pub mod stats;
pub mod synth;

pub use ingest::{RawCurve, SampleGeometry, StressStrainCurve};
pub use props::MechanicalProperties;
pub use segment::{RegionFit, RegionLabel, SegmentationResult};
