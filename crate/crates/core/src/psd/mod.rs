//! Pore-size distributions from binary surface masks.
//!
//! Each labeled pore is assigned the diameter of a circle with the same area
//! and contributes that area to the 0.5 nm diameter bin containing it; bins are
//! normalized by the image area, so the histogram sums to the surface porosity.
//! Sputter coating narrows pores; [`dilate_mask`] grows the pore set by the
//! coating thickness to estimate the uncoated geometry.

mod edt;
mod io;
mod label;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use edt::squared_distance_to_set;
pub use io::{load_mask, read_mask_image, write_mask_pgm, MaskMeta};
pub use label::{label_image, label_pores, Pore};

pub const DEFAULT_BIN_NM: f64 = 0.5;

#[derive(Debug, Error)]
pub enum PsdError {
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("area must be positive, got {0}")]
    NonPositiveArea(f64),
    #[error("need at least 2 replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("replicates use different bin widths ({0} vs {1} nm)")]
    MismatchedBins(f64, f64),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("metadata: {0}")]
    Meta(#[from] crate::kv::KvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Binary raster, row-major, `true` = pore.
#[derive(Debug, Clone, PartialEq)]
pub struct PoreMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
    /// nm per pixel
    pub scale: f64,
    pub replicate_id: String,
    /// Set once the coating correction has been applied.
    pub corrected: bool,
}

impl PoreMask {
    pub fn new(
        width: usize,
        height: usize,
        bits: Vec<bool>,
        scale: f64,
        replicate_id: impl Into<String>,
    ) -> Result<Self, PsdError> {
        let mask = Self {
            width,
            height,
            bits,
            scale,
            replicate_id: replicate_id.into(),
            corrected: false,
        };
        mask.validate()?;
        Ok(mask)
    }

    pub fn blank(width: usize, height: usize, scale: f64) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
            scale,
            replicate_id: String::new(),
            corrected: false,
        }
    }

    pub fn validate(&self) -> Result<(), PsdError> {
        if self.bits.len() != self.width * self.height {
            return Err(PsdError::InvalidMask(format!(
                "{} bits for a {}x{} raster",
                self.bits.len(),
                self.width,
                self.height
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(PsdError::InvalidMask(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        if self.bits.iter().all(|&b| b) {
            return Err(PsdError::InvalidMask("no background pixel".into()));
        }
        Ok(())
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn pore_pixels(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// nm²
    pub fn image_area(&self) -> f64 {
        self.scale * self.scale * (self.width * self.height) as f64
    }

    /// Pixel-counted pore area over image area, in percent.
    pub fn porosity_pct(&self) -> f64 {
        self.pore_pixels() as f64 / (self.width * self.height) as f64 * 100.0
    }
}

/// Diameter of the circle with the given area.
pub fn equivalent_diameter(area: f64) -> Result<f64, PsdError> {
    if !(area > 0.0) {
        return Err(PsdError::NonPositiveArea(area));
    }
    Ok(2.0 * (area / PI).sqrt())
}

/// Grows the pore set to every pixel within `thickness_nm` (Euclidean) of an
/// original pore pixel.
pub fn dilate_mask(mask: &PoreMask, thickness_nm: f64) -> PoreMask {
    let mut out = mask.clone();
    out.corrected = true;
    if !(thickness_nm > 0.0) || mask.pore_pixels() == 0 {
        return out;
    }
    let radius = thickness_nm / mask.scale;
    let limit = radius * radius * (1.0 + 1e-12);
    let dist = squared_distance_to_set(&mask.bits, mask.width, mask.height);
    for (bit, d) in out.bits.iter_mut().zip(dist) {
        *bit = d <= limit;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdConfig {
    pub bin_nm: f64,
    /// Drop pores touching the image border instead of counting them.
    pub exclude_border: bool,
}

impl Default for PsdConfig {
    fn default() -> Self {
        Self {
            bin_nm: DEFAULT_BIN_NM,
            exclude_border: false,
        }
    }
}

/// Area-weighted histogram over diameter bins `[k·w, (k+1)·w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoreSizeDistribution {
    pub bin_width: f64,
    /// Area fraction per bin; bin `k` covers `[k·w, (k+1)·w)` nm.
    pub area_fraction: Vec<f64>,
    /// percent
    pub surface_porosity: f64,
    pub corrected: bool,
    pub pore_count: usize,
    pub border_pores: usize,
}

impl PoreSizeDistribution {
    pub fn bin_edges(&self) -> Vec<(f64, f64)> {
        (0..self.area_fraction.len())
            .map(|k| (k as f64 * self.bin_width, (k + 1) as f64 * self.bin_width))
            .collect()
    }

    pub fn total_fraction(&self) -> f64 {
        self.area_fraction.iter().sum()
    }
}

pub fn area_weighted_psd(mask: &PoreMask, bin_nm: f64) -> PoreSizeDistribution {
    area_weighted_psd_with(
        mask,
        &PsdConfig {
            bin_nm,
            ..PsdConfig::default()
        },
    )
}

pub fn area_weighted_psd_with(mask: &PoreMask, cfg: &PsdConfig) -> PoreSizeDistribution {
    let pores = label_pores(mask);
    let px_area = mask.scale * mask.scale;
    let image_area = mask.image_area();
    let border_pores = pores.iter().filter(|p| p.touches_border).count();
    let mut bins: Vec<f64> = Vec::new();
    let mut counted_pixels = 0usize;
    let mut pore_count = 0usize;
    for pore in pores.iter().filter(|p| !(cfg.exclude_border && p.touches_border)) {
        let area = pore.pixel_area as f64 * px_area;
        let d = equivalent_diameter(area).expect("labeled pores have positive area");
        let k = (d / cfg.bin_nm).floor() as usize;
        if bins.len() <= k {
            bins.resize(k + 1, 0.0);
        }
        // Circular-equivalent area equals the pixel area by construction.
        bins[k] += area / image_area;
        counted_pixels += pore.pixel_area;
        pore_count += 1;
    }
    PoreSizeDistribution {
        bin_width: cfg.bin_nm,
        area_fraction: bins,
        surface_porosity: counted_pixels as f64 / (mask.width * mask.height) as f64 * 100.0,
        corrected: mask.corrected,
        pore_count,
        border_pores,
    }
}

/// Per-bin mean and standard error across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub bin_width: f64,
    pub mean: Vec<f64>,
    pub standard_error: Vec<f64>,
    pub porosity_mean: f64,
    pub porosity_se: f64,
    pub replicates: usize,
    pub corrected: bool,
}

impl ReplicateSummary {
    pub fn bin_edges(&self) -> Vec<(f64, f64)> {
        (0..self.mean.len())
            .map(|k| (k as f64 * self.bin_width, (k + 1) as f64 * self.bin_width))
            .collect()
    }
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean ± standard error (sample std / √n) of replicate distributions.
/// Shorter histograms are padded with empty bins.
pub fn aggregate_replicates(psds: &[PoreSizeDistribution]) -> Result<ReplicateSummary, PsdError> {
    if psds.len() < 2 {
        return Err(PsdError::TooFewReplicates(psds.len()));
    }
    let width = psds[0].bin_width;
    if let Some(p) = psds.iter().find(|p| p.bin_width != width) {
        return Err(PsdError::MismatchedBins(width, p.bin_width));
    }
    let len = psds.iter().map(|p| p.area_fraction.len()).max().unwrap_or(0);
    let mut mean = Vec::with_capacity(len);
    let mut standard_error = Vec::with_capacity(len);
    for k in 0..len {
        let vals: Vec<f64> = psds
            .iter()
            .map(|p| p.area_fraction.get(k).copied().unwrap_or(0.0))
            .collect();
        let (m, se) = mean_se(&vals);
        mean.push(m);
        standard_error.push(se);
    }
    let porosities: Vec<f64> = psds.iter().map(|p| p.surface_porosity).collect();
    let (porosity_mean, porosity_se) = mean_se(&porosities);
    Ok(ReplicateSummary {
        bin_width: width,
        mean,
        standard_error,
        porosity_mean,
        porosity_se,
        replicates: psds.len(),
        corrected: psds.iter().all(|p| p.corrected),
    })
}
