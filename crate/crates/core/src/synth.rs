//! Ground-truth generators: trilinear compression curves and disk masks.
//!
//! Curves are continuous piecewise-linear stress(strain) laws sampled
//! uniformly in strain, converted back to force and displacement, with
//! seeded Gaussian noise added to the force channel.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::ingest::{stress_to_force, write_force_displacement, RawCurve, RawSample, SampleGeometry, SampleMeta};
use crate::kv::{KvError, KvMap};
use crate::psd::PoreMask;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid curve spec: {0}")]
    InvalidSpec(String),
    #[error("disk {index} lies outside the image")]
    DiskOutOfBounds { index: usize },
    #[error("disks {a} and {b} overlap")]
    DiskOverlap { a: usize, b: usize },
    #[error("could not place {placed} of {wanted} disks without overlap")]
    Crowded { placed: usize, wanted: usize },
    #[error("ground truth: {0}")]
    Truth(#[from] KvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Constant-stress hold appended after loading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CreepSpec {
    /// bar; loading stops when this stress is reached
    pub hold_stress: f64,
    pub duration_s: f64,
    /// strain accumulated over the hold
    pub creep_strain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    pub sample_id: String,
    pub position_index: i64,
    /// bar
    pub elastic_modulus: f64,
    pub yield_strain: f64,
    /// bar
    pub plateau_slope: f64,
    pub densification_onset_strain: f64,
    /// bar
    pub densification_slope: f64,
    /// Stress at which loading ends, bar.
    pub max_stress: f64,
    pub creep: Option<CreepSpec>,
    /// Standard deviation of the force noise, expressed in bar.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Loading samples, contact to max stress inclusive.
    pub n_points: usize,
    /// µm/s
    pub displacement_rate: f64,
    /// Samples recorded before contact, with stress noise bounded by 40 % of
    /// the contact threshold.
    pub pre_contact_points: usize,
    pub geometry: SampleGeometry,
}

impl Default for CurveSpec {
    fn default() -> Self {
        Self {
            sample_id: "synth".into(),
            position_index: 0,
            elastic_modulus: 200.0,
            yield_strain: 0.15,
            plateau_slope: 20.0,
            densification_onset_strain: 0.6,
            densification_slope: 400.0,
            max_stress: 150.0,
            creep: None,
            noise_sigma: 0.0,
            seed: 0,
            n_points: 2000,
            displacement_rate: 1.0,
            pre_contact_points: 0,
            geometry: SampleGeometry::new(100.0, 12.0),
        }
    }
}

impl CurveSpec {
    pub fn yield_stress(&self) -> f64 {
        self.elastic_modulus * self.yield_strain
    }

    /// Stress at the densification onset.
    pub fn onset_stress(&self) -> f64 {
        self.yield_stress() + self.plateau_slope * (self.densification_onset_strain - self.yield_strain)
    }

    pub fn loading_end_stress(&self) -> f64 {
        self.creep.map_or(self.max_stress, |c| c.hold_stress)
    }

    pub fn loading_end_strain(&self) -> f64 {
        self.densification_onset_strain + (self.loading_end_stress() - self.onset_stress()) / self.densification_slope
    }

    /// Noiseless stress at `strain` (strain ≥ 0).
    pub fn stress_at(&self, strain: f64) -> f64 {
        if strain < self.yield_strain {
            self.elastic_modulus * strain
        } else if strain < self.densification_onset_strain {
            self.yield_stress() + self.plateau_slope * (strain - self.yield_strain)
        } else {
            self.onset_stress() + self.densification_slope * (strain - self.densification_onset_strain)
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        let finite = [
            self.elastic_modulus,
            self.yield_strain,
            self.plateau_slope,
            self.densification_onset_strain,
            self.densification_slope,
            self.max_stress,
            self.noise_sigma,
            self.displacement_rate,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("non-finite parameter".into());
        }
        if !(self.elastic_modulus > 0.0) {
            return bad(format!(
                "elastic modulus must be positive, got {}",
                self.elastic_modulus
            ));
        }
        if !(self.elastic_modulus > self.plateau_slope && self.densification_slope > self.plateau_slope) {
            return bad("plateau slope must be below the elastic and densification slopes".into());
        }
        if !(0.0 < self.yield_strain && self.yield_strain < self.densification_onset_strain) {
            return bad("need 0 < yield strain < densification onset strain".into());
        }
        if !(self.loading_end_stress() > self.onset_stress()) {
            return bad(format!(
                "loading ends at {} bar, before densification starts at {} bar",
                self.loading_end_stress(),
                self.onset_stress()
            ));
        }
        if let Some(c) = self.creep {
            if !(c.duration_s > 0.0 && c.creep_strain >= 0.0 && c.hold_stress <= self.max_stress) {
                return bad("creep hold needs positive duration, non-negative strain, hold ≤ max stress".into());
            }
        }
        if self.n_points < 16 {
            return bad(format!("n_points must be at least 16, got {}", self.n_points));
        }
        if !(self.noise_sigma >= 0.0 && self.displacement_rate > 0.0) {
            return bad("noise must be ≥ 0 and displacement rate > 0".into());
        }
        if !(self.geometry.thickness_um > 0.0 && self.geometry.pin_diameter_mm > 0.0) {
            return bad("thickness and pin diameter must be positive".into());
        }
        Ok(())
    }
}

/// Draws a trilinear law with modulus in 100–300 bar and densification onset
/// (pore fraction) in 0.4–0.9, loaded to `max_stress`; noise is `noise_frac`
/// of `max_stress`.
pub fn random_spec(seed: u64, noise_frac: f64) -> CurveSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let base = CurveSpec::default();
    let elastic_modulus = rng.random_range(100.0..300.0);
    let onset = rng.random_range(0.4..0.9);
    let yield_stress = rng.random_range(25.0..45.0f64).min(elastic_modulus * 0.5 * onset);
    let yield_strain = yield_stress / elastic_modulus;
    let plateau_slope = rng.random_range(0.02..0.15) * elastic_modulus;
    let onset_stress = yield_stress + plateau_slope * (onset - yield_strain);
    let dens_span = rng.random_range(0.1..0.2);
    CurveSpec {
        elastic_modulus,
        yield_strain,
        plateau_slope,
        densification_onset_strain: onset,
        densification_slope: (base.max_stress - onset_stress) / dens_span,
        noise_sigma: noise_frac * base.max_stress,
        seed,
        ..base
    }
}

/// Parameters a correct analysis should recover.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub elastic_modulus: f64,
    pub yield_strength: f64,
    pub plateau_slope: f64,
    pub densification_slope: f64,
    pub breakpoints: Vec<f64>,
    /// Plateau/densification intersection; equals the onset strain for a continuous law.
    pub pore_fraction: f64,
    pub creep_strain: Option<f64>,
    /// Raw strain (displacement / thickness) at first contact.
    pub contact_strain: f64,
    /// Strain step between loading samples.
    pub strain_step: f64,
}

impl GroundTruth {
    pub fn to_text(&self) -> String {
        let mut kv = KvMap::default();
        kv.insert("elastic_modulus", self.elastic_modulus);
        kv.insert("yield_strength", self.yield_strength);
        kv.insert("plateau_slope", self.plateau_slope);
        kv.insert("densification_slope", self.densification_slope);
        kv.insert(
            "breakpoints",
            self.breakpoints
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(" "),
        );
        kv.insert("pore_fraction", self.pore_fraction);
        kv.insert(
            "creep_strain",
            self.creep_strain.map(|c| c.to_string()).unwrap_or_default(),
        );
        kv.insert("contact_strain", self.contact_strain);
        kv.insert("strain_step", self.strain_step);
        kv.to_text()
    }

    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let kv = KvMap::parse(text)?;
        let breakpoints = kv
            .require_str("breakpoints")?
            .split_whitespace()
            .map(|s| {
                s.parse().map_err(|_| KvError::Invalid {
                    key: "breakpoints".into(),
                    value: s.into(),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            elastic_modulus: kv.require("elastic_modulus")?,
            yield_strength: kv.require("yield_strength")?,
            plateau_slope: kv.require("plateau_slope")?,
            densification_slope: kv.require("densification_slope")?,
            breakpoints,
            pore_fraction: kv.require("pore_fraction")?,
            creep_strain: kv.get("creep_strain")?,
            contact_strain: kv.require("contact_strain")?,
            strain_step: kv.require("strain_step")?,
        })
    }
}

pub fn generate_curve(spec: &CurveSpec) -> Result<(RawCurve, GroundTruth), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let geom = &spec.geometry;
    let force_sigma = stress_to_force(spec.noise_sigma, geom);
    let noise = Normal::new(0.0, force_sigma).expect("sigma validated non-negative");
    let thickness = geom.thickness_um;
    let end = spec.loading_end_strain();
    let step = end / (spec.n_points - 1) as f64;
    let dt = step * thickness / spec.displacement_rate;

    let mut samples = Vec::new();
    // Zero-load approach with force noise kept well under the contact threshold.
    let pad_limit = 0.4 * 0.005 * spec.loading_end_stress();
    for i in 0..spec.pre_contact_points {
        let stress = rng.random_range(-pad_limit..pad_limit);
        samples.push(RawSample {
            time_s: i as f64 * dt,
            force_n: stress_to_force(stress, geom),
            displacement_um: i as f64 * step * thickness,
        });
    }
    let contact_strain = spec.pre_contact_points as f64 * step;
    let t0 = spec.pre_contact_points as f64 * dt;
    let mut push = |rng: &mut ChaCha8Rng, time: f64, strain: f64, stress: f64| {
        samples.push(RawSample {
            time_s: time,
            force_n: stress_to_force(stress, geom) + noise.sample(rng),
            displacement_um: (contact_strain + strain) * thickness,
        });
    };
    for i in 0..spec.n_points {
        let strain = if i + 1 == spec.n_points { end } else { i as f64 * step };
        push(&mut rng, t0 + i as f64 * dt, strain, spec.stress_at(strain));
    }
    if let Some(c) = spec.creep {
        let t_end = t0 + (spec.n_points - 1) as f64 * dt;
        let m = (c.duration_s / dt).ceil().max(1.0) as usize;
        for j in 1..=m {
            let f = j as f64 / m as f64;
            push(
                &mut rng,
                t_end + f * c.duration_s,
                end + f * c.creep_strain,
                c.hold_stress,
            );
        }
    }

    let mut breakpoints = vec![spec.yield_strain, spec.densification_onset_strain];
    if spec.creep.is_some() {
        breakpoints.push(end);
    }
    let truth = GroundTruth {
        elastic_modulus: spec.elastic_modulus,
        yield_strength: spec.yield_stress(),
        plateau_slope: spec.plateau_slope,
        densification_slope: spec.densification_slope,
        breakpoints,
        pore_fraction: spec.densification_onset_strain,
        creep_strain: spec.creep.map(|c| c.creep_strain),
        contact_strain,
        strain_step: step,
    };
    let curve = RawCurve {
        sample_id: spec.sample_id.clone(),
        position_index: spec.position_index,
        samples,
    };
    Ok((curve, truth))
}

/// Writes `<dir>/<stem>.csv`, `<stem>.meta` and `<stem>.truth`; returns the CSV path.
pub fn write_sample(
    dir: &Path,
    stem: &str,
    curve: &RawCurve,
    geometry: &SampleGeometry,
    truth: &GroundTruth,
) -> Result<PathBuf, SynthError> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut w = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
    write_force_displacement(curve, &mut w)?;
    w.flush()?;
    let meta = SampleMeta {
        sample_id: curve.sample_id.clone(),
        position_index: curve.position_index,
        geometry: geometry.clone(),
    };
    std::fs::write(dir.join(format!("{stem}.meta")), meta.to_text())?;
    std::fs::write(dir.join(format!("{stem}.truth")), truth.to_text())?;
    Ok(csv_path)
}

/// Disk in nm, centre measured from the image's top-left corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub cx: f64,
    pub cy: f64,
    pub diameter: f64,
}

impl Disk {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.diameter * self.diameter / 4.0
    }
}

fn check_disks(disks: &[Disk], image_nm: (f64, f64)) -> Result<(), SynthError> {
    for (i, d) in disks.iter().enumerate() {
        let r = d.diameter / 2.0;
        if !(d.diameter > 0.0 && d.cx - r >= 0.0 && d.cy - r >= 0.0 && d.cx + r <= image_nm.0 && d.cy + r <= image_nm.1)
        {
            return Err(SynthError::DiskOutOfBounds { index: i });
        }
        for (j, e) in disks.iter().enumerate().take(i) {
            if (d.cx - e.cx).hypot(d.cy - e.cy) <= r + e.diameter / 2.0 {
                return Err(SynthError::DiskOverlap { a: j, b: i });
            }
        }
    }
    Ok(())
}

/// Rasterizes disks: a pixel is pore when its centre lies inside a disk.
pub fn generate_disk_mask(disks: &[Disk], image_nm: (f64, f64), scale: f64) -> Result<PoreMask, SynthError> {
    if !(scale > 0.0) {
        return Err(SynthError::InvalidSpec(format!("scale must be positive, got {scale}")));
    }
    check_disks(disks, image_nm)?;
    let w = (image_nm.0 / scale).round() as usize;
    let h = (image_nm.1 / scale).round() as usize;
    let mut mask = PoreMask::blank(w, h, scale);
    for d in disks {
        let r2 = d.diameter * d.diameter / 4.0;
        let x0 = ((d.cx - d.diameter / 2.0) / scale).floor().max(0.0) as usize;
        let x1 = (((d.cx + d.diameter / 2.0) / scale).ceil() as usize).min(w);
        let y0 = ((d.cy - d.diameter / 2.0) / scale).floor().max(0.0) as usize;
        let y1 = (((d.cy + d.diameter / 2.0) / scale).ceil() as usize).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                let px = (x as f64 + 0.5) * scale - d.cx;
                let py = (y as f64 + 0.5) * scale - d.cy;
                if px * px + py * py <= r2 {
                    mask.set(x, y, true);
                }
            }
        }
    }
    Ok(mask)
}

/// Places `n` non-overlapping disks at random, keeping at least `gap` nm
/// between rims and from the image edge.
pub fn random_disks(
    n: usize,
    diameter_range: (f64, f64),
    image_nm: (f64, f64),
    gap: f64,
    seed: u64,
) -> Result<Vec<Disk>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut disks: Vec<Disk> = Vec::with_capacity(n);
    let mut attempts = 0;
    while disks.len() < n {
        attempts += 1;
        if attempts > 1000 * n.max(1) {
            return Err(SynthError::Crowded {
                placed: disks.len(),
                wanted: n,
            });
        }
        let diameter = if diameter_range.1 > diameter_range.0 {
            rng.random_range(diameter_range.0..diameter_range.1)
        } else {
            diameter_range.0
        };
        let r = diameter / 2.0 + gap;
        if 2.0 * r >= image_nm.0.min(image_nm.1) {
            return Err(SynthError::Crowded {
                placed: disks.len(),
                wanted: n,
            });
        }
        let cx = rng.random_range(r..image_nm.0 - r);
        let cy = rng.random_range(r..image_nm.1 - r);
        let clear = disks
            .iter()
            .all(|e| (cx - e.cx).hypot(cy - e.cy) > diameter / 2.0 + e.diameter / 2.0 + gap);
        if clear {
            disks.push(Disk { cx, cy, diameter });
        }
    }
    Ok(disks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{align_contact, to_stress_strain, AlignConfig};

    #[test]
    fn same_seed_same_bits() {
        let spec = CurveSpec {
            noise_sigma: 1.5,
            seed: 7,
            ..CurveSpec::default()
        };
        let (a, _) = generate_curve(&spec).unwrap();
        let (b, _) = generate_curve(&spec).unwrap();
        assert_eq!(a, b);
        let (c, _) = generate_curve(&CurveSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_curve_follows_law() {
        let spec = CurveSpec::default();
        let (raw, truth) = generate_curve(&spec).unwrap();
        raw.validate().unwrap();
        assert_eq!(raw.samples.len(), spec.n_points);
        let curve = to_stress_strain(&raw, &spec.geometry).unwrap();
        for p in &curve.points {
            assert!((p.stress - spec.stress_at(p.strain)).abs() < 1e-9);
        }
        assert!((curve.max_stress() - 150.0).abs() < 1e-9);
        assert_eq!(truth.pore_fraction, 0.6);
        assert!((truth.yield_strength - 30.0).abs() < 1e-12);
    }

    #[test]
    fn aligned_without_padding() {
        let (raw, _) = generate_curve(&CurveSpec::default()).unwrap();
        let geom = SampleGeometry::new(100.0, 12.0);
        let curve = to_stress_strain(&raw, &geom).unwrap();
        let aligned = align_contact(&curve, &AlignConfig::default()).unwrap();
        assert_eq!(aligned.alignment_offset.strain, 0.0);
        assert_eq!(aligned.points.len(), curve.points.len());
    }

    #[test]
    fn pre_contact_padding_is_removed() {
        let spec = CurveSpec {
            pre_contact_points: 50,
            seed: 3,
            ..CurveSpec::default()
        };
        let (raw, truth) = generate_curve(&spec).unwrap();
        let curve = to_stress_strain(&raw, &spec.geometry).unwrap();
        let aligned = align_contact(&curve, &AlignConfig::default()).unwrap();
        assert!(
            (aligned.alignment_offset.strain - truth.contact_strain).abs() <= truth.strain_step,
            "{} vs {}",
            aligned.alignment_offset.strain,
            truth.contact_strain
        );
    }

    #[test]
    fn creep_hold_appended() {
        let spec = CurveSpec {
            creep: Some(CreepSpec {
                hold_stress: 120.0,
                duration_s: 30.0,
                creep_strain: 0.02,
            }),
            ..CurveSpec::default()
        };
        let (raw, truth) = generate_curve(&spec).unwrap();
        raw.validate().unwrap();
        let curve = to_stress_strain(&raw, &spec.geometry).unwrap();
        let last = curve.points.last().unwrap();
        assert!((last.stress - 120.0).abs() < 1e-9);
        assert!((last.strain - spec.loading_end_strain() - 0.02).abs() < 1e-12);
        assert_eq!(truth.breakpoints.len(), 3);
    }

    #[test]
    fn invalid_specs() {
        let base = CurveSpec::default();
        for spec in [
            CurveSpec {
                plateau_slope: 250.0,
                ..base.clone()
            },
            CurveSpec {
                yield_strain: 0.7,
                ..base.clone()
            },
            CurveSpec {
                max_stress: 20.0,
                ..base.clone()
            },
            CurveSpec {
                n_points: 3,
                ..base.clone()
            },
            CurveSpec {
                noise_sigma: -1.0,
                ..base.clone()
            },
        ] {
            assert!(matches!(generate_curve(&spec), Err(SynthError::InvalidSpec(_))));
        }
    }

    #[test]
    fn truth_round_trip() {
        let (_, truth) = generate_curve(&CurveSpec::default()).unwrap();
        assert_eq!(GroundTruth::parse(&truth.to_text()).unwrap(), truth);
    }

    #[test]
    fn single_disk_porosity() {
        let disk = Disk {
            cx: 50.0,
            cy: 50.0,
            diameter: 10.0,
        };
        let mask = generate_disk_mask(&[disk], (100.0, 100.0), 0.5).unwrap();
        assert_eq!((mask.width, mask.height), (200, 200));
        let analytic = std::f64::consts::PI * 25.0 / 1e4 * 100.0;
        assert!((mask.porosity_pct() - analytic).abs() <= 0.02 * analytic);
        assert_eq!(generate_disk_mask(&[], (10.0, 10.0), 0.5).unwrap().pore_pixels(), 0);
    }

    #[test]
    fn disk_validation() {
        let d = |cx, cy, diameter| Disk { cx, cy, diameter };
        assert!(matches!(
            generate_disk_mask(&[d(3.0, 50.0, 10.0)], (100.0, 100.0), 0.5),
            Err(SynthError::DiskOutOfBounds { index: 0 })
        ));
        assert!(matches!(
            generate_disk_mask(&[d(50.0, 50.0, 10.0), d(58.0, 50.0, 10.0)], (100.0, 100.0), 0.5),
            Err(SynthError::DiskOverlap { a: 0, b: 1 })
        ));
    }

    #[test]
    fn finer_pixels_shrink_area_error() {
        // RMS over a grid of sub-pixel centre offsets and several diameters.
        let rms = |scale: f64| {
            let mut acc = 0.0;
            let mut n = 0;
            for diameter in [9.3, 12.3, 17.9, 23.1] {
                for i in 0..12 {
                    for j in 0..12 {
                        let disk = Disk {
                            cx: 50.0 + i as f64 / 12.0,
                            cy: 50.0 + j as f64 / 12.0,
                            diameter,
                        };
                        let mask = generate_disk_mask(&[disk], (100.0, 100.0), scale).unwrap();
                        let area = mask.pore_pixels() as f64 * scale * scale;
                        acc += (area - disk.area()).powi(2);
                        n += 1;
                    }
                }
            }
            (acc / n as f64).sqrt()
        };
        let coarse = rms(1.0);
        let fine = rms(0.5);
        assert!(fine <= 0.5 * coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn random_disks_do_not_touch() {
        let disks = random_disks(20, (4.0, 12.0), (200.0, 200.0), 1.0, 11).unwrap();
        assert_eq!(disks.len(), 20);
        let mask = generate_disk_mask(&disks, (200.0, 200.0), 0.5).unwrap();
        assert_eq!(crate::psd::label_pores(&mask).len(), 20);
        assert_eq!(disks, random_disks(20, (4.0, 12.0), (200.0, 200.0), 1.0, 11).unwrap());
    }
}
