//! Synthetic campaigns and mask sets for trying the pipeline end to end.

use std::path::{Path, PathBuf};

use anyhow::Result;
use membrane_mech::ingest::SampleGeometry;
use membrane_mech::psd::{write_mask_pgm, MaskMeta};
use membrane_mech::synth::{generate_curve, generate_disk_mask, random_disks, write_sample, CreepSpec, CurveSpec};

use crate::campaign::{Manifest, SampleEntry};

#[derive(Debug, Clone)]
pub struct CampaignPlan {
    pub concentrations: Vec<f64>,
    pub positions: usize,
    /// Force noise as a fraction of max stress.
    pub noise_frac: f64,
    pub seed: u64,
    /// Append a constant-stress hold to every curve.
    pub creep: bool,
}

impl Default for CampaignPlan {
    fn default() -> Self {
        Self {
            concentrations: vec![10.0, 12.0, 15.0, 17.0],
            positions: 3,
            noise_frac: 0.005,
            seed: 0,
            creep: false,
        }
    }
}

/// (label, humidity %, nitrogen)
const GROUPS: [(&str, Option<f64>, bool); 3] = [
    ("rh55", Some(55.0), false),
    ("rh40", Some(40.0), false),
    ("n2", None, true),
];

/// Deterministic jitter in [-1, 1) from indices and the seed.
fn jitter(seed: u64, a: u64, b: u64, c: u64) -> f64 {
    let mut z = seed
        ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f)
        ^ c.wrapping_mul(0x1656_67b1_9e37_79f9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

/// Modulus rises and pore fraction falls with concentration in every group.
fn spec_for(plan: &CampaignPlan, gi: usize, ci: usize, pos: usize) -> CurveSpec {
    let (label, humidity, nitrogen) = GROUPS[gi];
    let c = plan.concentrations[ci];
    let j = |k| jitter(plan.seed, gi as u64, ci as u64 * 64 + pos as u64, k);
    let modulus = (120.0 + 12.0 * (c - 10.0) + 15.0 * gi as f64) * (1.0 + 0.03 * j(1));
    let onset = 0.85 - 0.03 * (c - 10.0) - 0.02 * gi as f64 + 0.01 * j(2);
    let yield_stress = 30.0f64.min(0.5 * modulus * onset);
    let plateau = 0.08 * modulus;
    let base = CurveSpec::default();
    let onset_stress = yield_stress + plateau * (onset - yield_stress / modulus);
    let mut geometry = SampleGeometry::new(100.0 + 10.0 * j(3), c);
    geometry.humidity_pct = humidity;
    geometry.nitrogen_treated = nitrogen;
    CurveSpec {
        sample_id: format!("PSf{c}-{label}"),
        position_index: pos as i64,
        elastic_modulus: modulus,
        yield_strain: yield_stress / modulus,
        plateau_slope: plateau,
        densification_onset_strain: onset,
        densification_slope: (base.max_stress - onset_stress) / 0.15,
        creep: plan.creep.then_some(CreepSpec {
            hold_stress: 120.0,
            duration_s: 120.0,
            creep_strain: 0.02,
        }),
        noise_sigma: plan.noise_frac * base.max_stress,
        seed: plan
            .seed
            .wrapping_mul(1_000_003)
            .wrapping_add((gi * 10_000 + ci * 100 + pos) as u64),
        geometry,
        ..base
    }
}

/// Writes curves, sidecars, ground truth and `manifest.toml` into `dir`.
pub fn write_campaign(dir: &Path, plan: &CampaignPlan) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut samples = Vec::new();
    for gi in 0..GROUPS.len() {
        for ci in 0..plan.concentrations.len() {
            let mut entry = SampleEntry {
                id: String::new(),
                files: Vec::new(),
            };
            for pos in 0..plan.positions {
                let spec = spec_for(plan, gi, ci, pos);
                let (raw, truth) = generate_curve(&spec)?;
                let stem = format!("{}_p{pos}", spec.sample_id);
                let csv = write_sample(dir, &stem, &raw, &spec.geometry, &truth)?;
                entry.id = spec.sample_id.clone();
                entry
                    .files
                    .push(PathBuf::from(csv.file_name().expect("written file has a name")));
            }
            samples.push(entry);
        }
    }
    let manifest = Manifest {
        root: None,
        output: Some(PathBuf::from("report")),
        config: Default::default(),
        samples,
    };
    let path = dir.join("manifest.toml");
    std::fs::write(&path, manifest.to_toml()?)?;
    Ok(path)
}

/// Replicate disk masks for each group, as PGM plus `.meta`.
pub fn write_masks(dir: &Path, groups: &[&str], replicates: usize, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let scale = 0.5;
    let image = (200.0, 200.0);
    let mut out = Vec::new();
    for (gi, group) in groups.iter().enumerate() {
        for r in 0..replicates {
            let disks = random_disks(30, (3.0, 14.0), image, 2.0, seed.wrapping_add((gi * 1000 + r) as u64))?;
            let mask = generate_disk_mask(&disks, image, scale)?;
            let stem = format!("{group}_r{r}");
            let path = dir.join(format!("{stem}.pgm"));
            write_mask_pgm(&mask, &path)?;
            let meta = MaskMeta {
                scale,
                group: group.to_string(),
                replicate_id: stem,
            };
            std::fs::write(path.with_extension("meta"), meta.to_text())?;
            out.push(path);
        }
    }
    Ok(out)
}
