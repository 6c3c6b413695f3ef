//! Instrument records to aligned engineering stress-strain curves.
//!
//! Raw exports carry `time_s`, `force_N` and `displacement_um` columns.
//! Stress is force over the flat-punch contact area, expressed in bar;
//! strain is displacement over membrane thickness.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kv::{KvError, KvMap};
use crate::stats::fit_line;

/// Minimum number of samples a curve needs to be analyzed.
pub const MIN_SAMPLES: usize = 16;

/// 1 N/mm² = 1 MPa = 10 bar.
const BAR_PER_N_PER_MM2: f64 = 10.0;

const COL_TIME: &str = "time_s";
const COL_FORCE: &str = "force_N";
const COL_DISP: &str = "displacement_um";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("row {row}: non-numeric value `{value}` in column `{column}`")]
    NonNumeric {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("too few samples: {found} (need at least {MIN_SAMPLES})")]
    TooFewSamples { found: usize },
    #[error("time not strictly increasing at sample {index}")]
    TimeNotIncreasing { index: usize },
    #[error("non-finite value at sample {index}")]
    NonFinite { index: usize },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("no contact detected: stress never exceeds the contact threshold")]
    NoContact,
    #[error("metadata: {0}")]
    Meta(#[from] KvError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub time_s: f64,
    pub force_n: f64,
    pub displacement_um: f64,
}

/// Force/displacement samples from one compression test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCurve {
    pub sample_id: String,
    /// Test location on the membrane.
    pub position_index: i64,
    pub samples: Vec<RawSample>,
}

impl RawCurve {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.samples.len() < MIN_SAMPLES {
            return Err(IngestError::TooFewSamples {
                found: self.samples.len(),
            });
        }
        for (i, s) in self.samples.iter().enumerate() {
            if !(s.time_s.is_finite() && s.force_n.is_finite() && s.displacement_um.is_finite()) {
                return Err(IngestError::NonFinite { index: i });
            }
            if i > 0 && s.time_s <= self.samples[i - 1].time_s {
                return Err(IngestError::TimeNotIncreasing { index: i });
            }
        }
        Ok(())
    }
}

/// Parses delimiter-separated text (comma or tab, detected from the header).
///
/// Column order is free; `#` lines are comments. The row count is not
/// checked here, see [`RawCurve::validate`].
pub fn parse_force_displacement<R: Read>(mut reader: R, sample_id: &str) -> Result<RawCurve, IngestError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let header = text
        .lines()
        .find(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .unwrap_or("");
    let delimiter = if header.contains('\t') { b'\t' } else { b',' };

    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &'static str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(IngestError::MissingColumn(name))
    };
    let (it, ifo, idi) = (col(COL_TIME)?, col(COL_FORCE)?, col(COL_DISP)?);

    let mut samples = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| IngestError::Malformed {
            row: row + 1,
            message: e.to_string(),
        })?;
        let cell = |idx: usize, column: &'static str| -> Result<f64, IngestError> {
            let value = record.get(idx).unwrap_or("");
            value.parse::<f64>().map_err(|_| IngestError::NonNumeric {
                row: row + 1,
                column,
                value: value.to_string(),
            })
        };
        samples.push(RawSample {
            time_s: cell(it, COL_TIME)?,
            force_n: cell(ifo, COL_FORCE)?,
            displacement_um: cell(idi, COL_DISP)?,
        });
    }
    Ok(RawCurve {
        sample_id: sample_id.to_string(),
        position_index: 0,
        samples,
    })
}

/// Writes the comma-separated form read by [`parse_force_displacement`].
/// Values use the shortest representation that parses back bit-exactly.
pub fn write_force_displacement<W: Write>(curve: &RawCurve, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{COL_TIME},{COL_FORCE},{COL_DISP}")?;
    for s in &curve.samples {
        writeln!(w, "{},{},{}", s.time_s, s.force_n, s.displacement_um)?;
    }
    Ok(())
}

/// Plausible membrane thickness range, µm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThicknessBand {
    pub min_um: f64,
    pub max_um: f64,
}

impl Default for ThicknessBand {
    fn default() -> Self {
        Self {
            min_um: 20.0,
            max_um: 500.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGeometry {
    pub pin_diameter_mm: f64,
    pub thickness_um: f64,
    pub polymer_wt_pct: f64,
    pub humidity_pct: Option<f64>,
    pub nitrogen_treated: bool,
}

impl SampleGeometry {
    pub const DEFAULT_PIN_DIAMETER_MM: f64 = 5.0;

    pub fn new(thickness_um: f64, polymer_wt_pct: f64) -> Self {
        Self {
            pin_diameter_mm: Self::DEFAULT_PIN_DIAMETER_MM,
            thickness_um,
            polymer_wt_pct,
            humidity_pct: None,
            nitrogen_treated: false,
        }
    }

    /// Flat-punch contact area in mm².
    pub fn pin_area_mm2(&self) -> f64 {
        let r = self.pin_diameter_mm / 2.0;
        PI * r * r
    }

    pub fn validate(&self, band: ThicknessBand) -> Result<(), IngestError> {
        if !(self.pin_diameter_mm > 0.0) {
            return Err(IngestError::Geometry(format!(
                "pin diameter must be positive, got {}",
                self.pin_diameter_mm
            )));
        }
        if !(self.thickness_um >= band.min_um && self.thickness_um <= band.max_um) {
            return Err(IngestError::Geometry(format!(
                "thickness {} µm outside plausible band [{}, {}]",
                self.thickness_um, band.min_um, band.max_um
            )));
        }
        if !(self.polymer_wt_pct > 0.0 && self.polymer_wt_pct < 100.0) {
            return Err(IngestError::Geometry(format!(
                "polymer concentration {} wt% outside (0, 100)",
                self.polymer_wt_pct
            )));
        }
        Ok(())
    }
}

/// Contents of a `.meta` sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub sample_id: String,
    pub position_index: i64,
    pub geometry: SampleGeometry,
}

impl SampleMeta {
    pub fn from_kv(kv: &KvMap) -> Result<Self, IngestError> {
        let geometry = SampleGeometry {
            pin_diameter_mm: kv.get_or("pin_diameter_mm", SampleGeometry::DEFAULT_PIN_DIAMETER_MM)?,
            thickness_um: kv.require("thickness_um")?,
            polymer_wt_pct: kv.require("polymer_wt_pct")?,
            humidity_pct: kv.get("humidity_pct")?,
            nitrogen_treated: kv.get_or("nitrogen", false)?,
        };
        Ok(Self {
            sample_id: kv.require_str("sample_id")?.to_string(),
            position_index: kv.get_or("position_index", 0)?,
            geometry,
        })
    }

    pub fn parse(text: &str) -> Result<Self, IngestError> {
        Self::from_kv(&KvMap::parse(text)?)
    }

    pub fn to_text(&self) -> String {
        let g = &self.geometry;
        let mut kv = KvMap::default();
        kv.insert("sample_id", &self.sample_id);
        kv.insert("position_index", self.position_index);
        kv.insert("thickness_um", g.thickness_um);
        kv.insert("pin_diameter_mm", g.pin_diameter_mm);
        kv.insert("polymer_wt_pct", g.polymer_wt_pct);
        if let Some(h) = g.humidity_pct {
            kv.insert("humidity_pct", h);
        }
        kv.insert("nitrogen", g.nitrogen_treated);
        kv.to_text()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub time_s: f64,
    pub strain: f64,
    /// bar
    pub stress: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignmentOffset {
    pub strain: f64,
    pub stress: f64,
}

/// Engineering stress (bar) against engineering strain, with the time base
/// kept for creep analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressStrainCurve {
    pub sample_id: String,
    pub position_index: i64,
    pub points: Vec<CurvePoint>,
    pub geometry: SampleGeometry,
    pub alignment_offset: AlignmentOffset,
    /// Points whose stress fell below the noise floor and were clamped to it.
    pub clamped_points: usize,
}

impl StressStrainCurve {
    /// Builds a curve straight from `(strain, stress)` pairs with a unit time step.
    pub fn from_pairs(
        sample_id: &str,
        position_index: i64,
        pairs: impl IntoIterator<Item = (f64, f64)>,
        geometry: SampleGeometry,
    ) -> Self {
        let points = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (strain, stress))| CurvePoint {
                time_s: i as f64,
                strain,
                stress,
            })
            .collect();
        Self {
            sample_id: sample_id.to_string(),
            position_index,
            points,
            geometry,
            alignment_offset: AlignmentOffset::default(),
            clamped_points: 0,
        }
    }

    pub fn strains(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.strain).collect()
    }

    pub fn stresses(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.stress).collect()
    }

    pub fn max_stress(&self) -> f64 {
        self.points.iter().map(|p| p.stress).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn strain_span(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.strain), hi.max(p.strain))
            })
    }

    /// Multiplies every stress by `k`.
    pub fn scale_stress(&self, k: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.points {
            p.stress *= k;
        }
        out
    }
}

/// Converts force/displacement to stress (bar) and strain.
pub fn to_stress_strain(raw: &RawCurve, geom: &SampleGeometry) -> Result<StressStrainCurve, IngestError> {
    if !(geom.thickness_um > 0.0) {
        return Err(IngestError::Geometry(format!(
            "thickness must be positive, got {}",
            geom.thickness_um
        )));
    }
    if !(geom.pin_diameter_mm > 0.0) {
        return Err(IngestError::Geometry(format!(
            "pin diameter must be positive, got {}",
            geom.pin_diameter_mm
        )));
    }
    let area = geom.pin_area_mm2();
    let points = raw
        .samples
        .iter()
        .map(|s| CurvePoint {
            time_s: s.time_s,
            strain: s.displacement_um / geom.thickness_um,
            stress: s.force_n / area * BAR_PER_N_PER_MM2,
        })
        .collect();
    Ok(StressStrainCurve {
        sample_id: raw.sample_id.clone(),
        position_index: raw.position_index,
        points,
        geometry: geom.clone(),
        alignment_offset: AlignmentOffset::default(),
        clamped_points: 0,
    })
}

/// Inverse of the stress conversion: force in N for a stress in bar.
pub fn stress_to_force(stress_bar: f64, geom: &SampleGeometry) -> f64 {
    stress_bar / BAR_PER_N_PER_MM2 * geom.pin_area_mm2()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignConfig {
    /// Contact threshold as a fraction of the (baseline-corrected) maximum stress.
    pub threshold_frac: f64,
    /// Consecutive samples that must stay above the threshold.
    pub run_length: usize,
    /// Toe fit uses points up to this fraction of the maximum stress.
    pub toe_fit_frac: f64,
    pub min_toe_points: usize,
    /// Stresses below `-noise_floor` (bar) are clamped to it and counted.
    pub noise_floor: f64,
    pub max_iterations: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            threshold_frac: 0.005,
            run_length: 5,
            toe_fit_frac: 0.05,
            min_toe_points: 5,
            noise_floor: 0.2,
            max_iterations: 8,
        }
    }
}

struct ContactEstimate {
    strain_offset: f64,
    baseline: f64,
}

fn estimate_contact(points: &[CurvePoint], baseline: f64, cfg: &AlignConfig) -> Result<ContactEstimate, IngestError> {
    let max = points
        .iter()
        .map(|p| p.stress - baseline)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(IngestError::NoContact);
    }
    let threshold = cfg.threshold_frac * max;
    let run = cfg.run_length.max(1);
    let n = points.len();
    let contact = (0..n.saturating_sub(run - 1))
        .find(|&i| points[i..i + run].iter().all(|p| p.stress - baseline > threshold))
        .ok_or(IngestError::NoContact)?;

    let ceiling = cfg.toe_fit_frac * max;
    let mut end = contact;
    while end < n && (points[end].stress - baseline <= ceiling || end - contact < cfg.min_toe_points) {
        end += 1;
    }
    let window = &points[contact..end];
    let xs: Vec<f64> = window.iter().map(|p| p.strain).collect();
    let ys: Vec<f64> = window.iter().map(|p| p.stress - baseline).collect();
    let strain_offset = match fit_line(&xs, &ys) {
        Some(line) if line.slope > 0.0 => -line.intercept / line.slope,
        _ => points[contact].strain,
    };
    Ok(ContactEstimate {
        strain_offset,
        baseline,
    })
}

/// Finds the contact point and shifts the curve so loading starts at the origin.
///
/// Contact is the first sample whose baseline-corrected stress stays above
/// the threshold for `run_length` samples. A line fitted over the toe
/// (contact up to `toe_fit_frac` of max stress) is back-extrapolated to zero
/// stress to give the strain offset. The stress baseline is the mean stress of
/// the samples that fall before that offset; the two estimates are iterated
/// to a fixed point. Pre-contact samples are dropped.
pub fn align_contact(curve: &StressStrainCurve, cfg: &AlignConfig) -> Result<StressStrainCurve, IngestError> {
    if curve.points.len() < MIN_SAMPLES {
        return Err(IngestError::TooFewSamples {
            found: curve.points.len(),
        });
    }
    let (lo, hi) = curve.strain_span();
    let snap = 1e-9 * (hi - lo).abs().max(f64::MIN_POSITIVE);

    let mut est = estimate_contact(&curve.points, 0.0, cfg)?;
    for _ in 0..cfg.max_iterations {
        let pre: Vec<f64> = curve
            .points
            .iter()
            .filter(|p| p.strain < est.strain_offset)
            .map(|p| p.stress)
            .collect();
        let baseline = if pre.is_empty() {
            0.0
        } else {
            pre.iter().sum::<f64>() / pre.len() as f64
        };
        if baseline == est.baseline {
            break;
        }
        est = estimate_contact(&curve.points, baseline, cfg)?;
    }
    if est.strain_offset.abs() <= snap {
        est.strain_offset = 0.0;
    }

    let mut clamped = curve.clamped_points;
    let points = curve
        .points
        .iter()
        .filter(|p| p.strain >= est.strain_offset - snap)
        .map(|p| {
            let mut stress = p.stress - est.baseline;
            if stress < -cfg.noise_floor {
                stress = -cfg.noise_floor;
                clamped += 1;
            }
            CurvePoint {
                time_s: p.time_s,
                strain: p.strain - est.strain_offset,
                stress,
            }
        })
        .collect();

    Ok(StressStrainCurve {
        sample_id: curve.sample_id.clone(),
        position_index: curve.position_index,
        points,
        geometry: curve.geometry.clone(),
        alignment_offset: AlignmentOffset {
            strain: curve.alignment_offset.strain + est.strain_offset,
            stress: curve.alignment_offset.stress + est.baseline,
        },
        clamped_points: clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn csv_rows(n: usize) -> String {
        let mut s = String::from("time_s,force_N,displacement_um\n");
        for i in 0..n {
            s.push_str(&format!("{},{},{}\n", i as f64 * 0.1, i as f64 * 0.5, i as f64));
        }
        s
    }

    #[test]
    fn three_rows_parse_then_fail_validation() {
        let raw = parse_force_displacement(csv_rows(3).as_bytes(), "s").unwrap();
        assert_eq!(raw.samples.len(), 3);
        assert!(matches!(raw.validate(), Err(IngestError::TooFewSamples { found: 3 })));
    }

    #[test]
    fn missing_column_is_named() {
        let text = "time_s,force_N\n0,1\n";
        let err = parse_force_displacement(text.as_bytes(), "s").unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn("displacement_um")));
        assert!(err.to_string().contains("displacement_um"));
    }

    #[test]
    fn column_order_and_tabs() {
        let text = "# exported\ndisplacement_um\ttime_s\tforce_N\n2\t0.5\t7\n";
        let raw = parse_force_displacement(text.as_bytes(), "s").unwrap();
        assert_eq!(
            raw.samples[0],
            RawSample {
                time_s: 0.5,
                force_n: 7.0,
                displacement_um: 2.0
            }
        );
    }

    #[test]
    fn non_numeric_cell_reports_row() {
        let text = "time_s,force_N,displacement_um\n0,1,2\n1,oops,3\n";
        match parse_force_displacement(text.as_bytes(), "s").unwrap_err() {
            IngestError::NonNumeric { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "force_N");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn validation_rejects_time_reversal() {
        let mut raw = parse_force_displacement(csv_rows(20).as_bytes(), "s").unwrap();
        raw.validate().unwrap();
        raw.samples[7].time_s = raw.samples[6].time_s;
        assert!(matches!(
            raw.validate(),
            Err(IngestError::TimeNotIncreasing { index: 7 })
        ));
    }

    #[test]
    fn one_newton_on_five_mm_pin() {
        let geom = SampleGeometry::new(120.0, 15.0);
        assert_relative_eq!(geom.pin_area_mm2(), 19.634954084936208, epsilon = 1e-12);
        let raw = RawCurve {
            sample_id: "s".into(),
            position_index: 0,
            samples: vec![
                RawSample {
                    time_s: 0.0,
                    force_n: 0.0,
                    displacement_um: 0.0,
                },
                RawSample {
                    time_s: 1.0,
                    force_n: 1.0,
                    displacement_um: 60.0,
                },
            ],
        };
        let ss = to_stress_strain(&raw, &geom).unwrap();
        assert_eq!(ss.points[0].stress, 0.0);
        assert_relative_eq!(ss.points[1].stress, 0.5093, epsilon = 1e-4);
        assert_eq!(ss.points[1].strain, 0.5);
        assert_relative_eq!(stress_to_force(ss.points[1].stress, &geom), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bad_geometry() {
        let raw = RawCurve {
            sample_id: "s".into(),
            position_index: 0,
            samples: vec![],
        };
        let mut geom = SampleGeometry::new(0.0, 15.0);
        assert!(to_stress_strain(&raw, &geom).is_err());
        geom.thickness_um = 100.0;
        geom.pin_diameter_mm = 0.0;
        assert!(to_stress_strain(&raw, &geom).is_err());
    }

    #[test]
    fn geometry_band() {
        let mut g = SampleGeometry::new(100.0, 12.0);
        g.validate(ThicknessBand::default()).unwrap();
        g.thickness_um = 900.0;
        assert!(g.validate(ThicknessBand::default()).is_err());
        g.thickness_um = 100.0;
        g.polymer_wt_pct = 100.0;
        assert!(g.validate(ThicknessBand::default()).is_err());
    }

    #[test]
    fn meta_round_trip() {
        let mut geometry = SampleGeometry::new(85.0, 12.0);
        geometry.humidity_pct = Some(55.0);
        let meta = SampleMeta {
            sample_id: "M-12".into(),
            position_index: 3,
            geometry,
        };
        assert_eq!(SampleMeta::parse(&meta.to_text()).unwrap(), meta);
        let minimal = SampleMeta::parse("sample_id = x\nthickness_um = 80\npolymer_wt_pct = 10\n").unwrap();
        assert_eq!(minimal.geometry.pin_diameter_mm, 5.0);
        assert!(!minimal.geometry.nitrogen_treated);
    }

    fn line_curve(n: usize, slope: f64) -> StressStrainCurve {
        StressStrainCurve::from_pairs(
            "s",
            0,
            (0..n).map(|i| {
                let e = i as f64 * 0.001;
                (e, slope * e)
            }),
            SampleGeometry::new(100.0, 15.0),
        )
    }

    #[test]
    fn aligned_curve_is_unchanged() {
        let c = line_curve(200, 150.0);
        let a = align_contact(&c, &AlignConfig::default()).unwrap();
        assert_eq!(a.points, c.points);
        assert_eq!(a.alignment_offset, AlignmentOffset::default());
    }

    #[test]
    fn zero_stress_means_no_contact() {
        let c = line_curve(100, 0.0);
        assert!(matches!(
            align_contact(&c, &AlignConfig::default()),
            Err(IngestError::NoContact)
        ));
    }

    #[test]
    fn offset_toe_is_removed() {
        let pairs: Vec<(f64, f64)> = (0..300)
            .map(|i| {
                let e = i as f64 * 0.001;
                (e, 200.0 * (e - 0.05).max(0.0) + 0.3)
            })
            .collect();
        let c = StressStrainCurve::from_pairs("s", 0, pairs, SampleGeometry::new(100.0, 15.0));
        let a = align_contact(&c, &AlignConfig::default()).unwrap();
        assert_relative_eq!(a.alignment_offset.strain, 0.05, epsilon = 1e-9);
        assert_relative_eq!(a.alignment_offset.stress, 0.3, epsilon = 1e-12);
        assert!(a.points[0].strain.abs() < 1e-9);
        assert!(a.points[0].stress.abs() < 1e-9);
    }

    #[test]
    fn negative_dips_are_clamped_and_counted() {
        let mut c = line_curve(200, 150.0);
        c.points[150].stress = -5.0;
        let a = align_contact(&c, &AlignConfig::default()).unwrap();
        assert_eq!(a.clamped_points, 1);
        assert_eq!(a.points[150].stress, -0.2);
        let again = align_contact(&a, &AlignConfig::default()).unwrap();
        assert_eq!(again, a);
    }
}
