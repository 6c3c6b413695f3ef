//! Run configuration: `key = value` text, layered over defaults.

use std::path::Path;

use anyhow::{bail, Context, Result};
use membrane_mech::formulate::{ViscosityModel, DEFAULT_VISCOSITY_WARN_RATIO};
use membrane_mech::ingest::{AlignConfig, ThicknessBand};
use membrane_mech::kv::KvMap;
use membrane_mech::psd::PsdConfig;
use membrane_mech::quality::{CvConfig, Normalization, QualityConfig};
use membrane_mech::segment::SegmentConfig;

pub const CONFIG_ENV: &str = "MEMBRANE_MECH_CONFIG";

const KNOWN_KEYS: &[&str] = &[
    "contact_threshold_frac",
    "contact_run_length",
    "noise_floor_bar",
    "thickness_min_um",
    "thickness_max_um",
    "smooth_grid_points",
    "smooth_bandwidth_frac",
    "min_region_points",
    "creep_band_frac",
    "creep_min_time_frac",
    "min_r2",
    "min_plateau_frac",
    "min_pass_fraction",
    "reject_pore_fraction_gt_1",
    "cv_grid_points",
    "cv_normalization",
    "rh_threshold_pct",
    "psd_bin_nm",
    "psd_exclude_border",
    "coating_nm",
    "viscosity_alpha",
    "viscosity_beta",
    "viscosity_warn_ratio",
    "default_density_g_ml",
];

#[derive(Debug, Clone)]
pub struct Settings {
    pub align: AlignConfig,
    pub thickness: ThicknessBand,
    pub segment: SegmentConfig,
    pub quality: QualityConfig,
    pub cv: CvConfig,
    /// Humidity at or above this (%) groups as high-RH.
    pub rh_threshold: f64,
    pub psd: PsdConfig,
    /// Dilation applied to masks before the PSD; 0 keeps them raw.
    pub coating_nm: f64,
    pub viscosity: ViscosityModel,
    pub viscosity_warn_ratio: f64,
    pub default_density: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            align: AlignConfig::default(),
            thickness: ThicknessBand::default(),
            segment: SegmentConfig::default(),
            quality: QualityConfig::default(),
            cv: CvConfig::default(),
            rh_threshold: 49.0,
            psd: PsdConfig::default(),
            coating_nm: 0.0,
            viscosity: ViscosityModel::default(),
            viscosity_warn_ratio: DEFAULT_VISCOSITY_WARN_RATIO,
            default_density: 1.0,
        }
    }
}

impl Settings {
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        if let Some((k, _)) = kv.iter().find(|(k, _)| !KNOWN_KEYS.contains(k)) {
            bail!("unknown config key `{k}`");
        }
        let mut s = Self::default();
        let a = &mut s.align;
        a.threshold_frac = kv.get_or("contact_threshold_frac", a.threshold_frac)?;
        a.run_length = kv.get_or("contact_run_length", a.run_length)?;
        a.noise_floor = kv.get_or("noise_floor_bar", a.noise_floor)?;
        s.thickness.min_um = kv.get_or("thickness_min_um", s.thickness.min_um)?;
        s.thickness.max_um = kv.get_or("thickness_max_um", s.thickness.max_um)?;
        let g = &mut s.segment;
        g.smooth.grid_points = kv.get_or("smooth_grid_points", g.smooth.grid_points)?;
        g.smooth.bandwidth_frac = kv.get_or("smooth_bandwidth_frac", g.smooth.bandwidth_frac)?;
        g.breakpoints.min_region_points = kv.get_or("min_region_points", g.breakpoints.min_region_points)?;
        g.creep.stress_band_frac = kv.get_or("creep_band_frac", g.creep.stress_band_frac)?;
        g.creep.min_time_frac = kv.get_or("creep_min_time_frac", g.creep.min_time_frac)?;
        g.min_r2 = kv.get_or("min_r2", g.min_r2)?;
        g.min_plateau_frac = kv.get_or("min_plateau_frac", g.min_plateau_frac)?;
        s.quality.min_r2 = g.min_r2;
        s.quality.min_pass_fraction = kv.get_or("min_pass_fraction", s.quality.min_pass_fraction)?;
        s.quality.reject_pore_fraction_gt_1 =
            kv.get_or("reject_pore_fraction_gt_1", s.quality.reject_pore_fraction_gt_1)?;
        s.cv.grid_points = kv.get_or("cv_grid_points", s.cv.grid_points)?;
        s.cv.normalization = match kv.get_str("cv_normalization") {
            None | Some("sample") => Normalization::Sample,
            Some("population") => Normalization::Population,
            Some(other) => bail!("cv_normalization must be `sample` or `population`, got `{other}`"),
        };
        s.rh_threshold = kv.get_or("rh_threshold_pct", s.rh_threshold)?;
        s.psd.bin_nm = kv.get_or("psd_bin_nm", s.psd.bin_nm)?;
        s.psd.exclude_border = kv.get_or("psd_exclude_border", s.psd.exclude_border)?;
        s.coating_nm = kv.get_or("coating_nm", s.coating_nm)?;
        s.viscosity.alpha = kv.get_or("viscosity_alpha", s.viscosity.alpha)?;
        s.viscosity.beta = kv.get_or("viscosity_beta", s.viscosity.beta)?;
        s.viscosity_warn_ratio = kv.get_or("viscosity_warn_ratio", s.viscosity_warn_ratio)?;
        s.default_density = kv.get_or("default_density_g_ml", s.default_density)?;
        if !(s.psd.bin_nm > 0.0) {
            bail!("psd_bin_nm must be positive");
        }
        if !(s.coating_nm >= 0.0) {
            bail!("coating_nm must be non-negative");
        }
        Ok(s)
    }
}

/// Reads `--config`, falling back to `$MEMBRANE_MECH_CONFIG`; `overrides`
/// (e.g. a manifest's `[config]` table) sit underneath the file.
pub fn load(path: Option<&Path>, overrides: &KvMap) -> Result<Settings> {
    let mut kv = overrides.clone();
    let env_path = std::env::var_os(CONFIG_ENV).map(std::path::PathBuf::from);
    if let Some(p) = path.map(Path::to_path_buf).or(env_path) {
        let text = std::fs::read_to_string(&p).with_context(|| format!("reading config {}", p.display()))?;
        let file = KvMap::parse(&text).with_context(|| format!("parsing config {}", p.display()))?;
        kv.merge(&file);
    }
    Settings::from_kv(&kv)
}
