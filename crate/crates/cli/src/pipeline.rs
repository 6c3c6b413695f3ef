//! Per-curve analysis and per-sample aggregation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use membrane_mech::ingest::{align_contact, parse_force_displacement, to_stress_strain, SampleMeta};
use membrane_mech::props::extract_properties;
use membrane_mech::quality::{assess_quality, intra_sample_cv_with, ConsistencyReport, CurveOutcome, QualityReport};
use membrane_mech::segment::segment_curve;
use membrane_mech::{MechanicalProperties, SegmentationResult, StressStrainCurve};
use rayon::prelude::*;

use crate::settings::Settings;
use crate::table::{Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum HumidityGroup {
    HighRh,
    LowRh,
    Nitrogen,
}

impl HumidityGroup {
    /// Nitrogen exposure wins over any humidity reading.
    pub fn classify(nitrogen: bool, humidity: Option<f64>, threshold: f64) -> Option<Self> {
        if nitrogen {
            return Some(Self::Nitrogen);
        }
        humidity.map(|h| if h >= threshold { Self::HighRh } else { Self::LowRh })
    }

    pub fn label(self, threshold: f64) -> String {
        match self {
            Self::HighRh => format!("rh_ge_{threshold}"),
            Self::LowRh => format!("rh_lt_{threshold}"),
            Self::Nitrogen => "nitrogen".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Read,
    Metadata,
    Validate,
    Align,
    Segment,
    Properties,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Read => "read",
            Stage::Metadata => "metadata",
            Stage::Validate => "validate",
            Stage::Align => "align",
            Stage::Segment => "segment",
            Stage::Properties => "properties",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveError {
    pub sample_id: String,
    pub position: Option<i64>,
    pub file: PathBuf,
    pub stage: Stage,
    pub message: String,
}

/// Everything derived from one force/displacement file.
#[derive(Debug, Clone)]
pub struct CurveAnalysis {
    pub file: PathBuf,
    pub meta: SampleMeta,
    pub group: String,
    pub aligned: StressStrainCurve,
    pub segmentation: SegmentationResult,
    pub properties: MechanicalProperties,
}

pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta")
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string()
}

/// Reads `<file>` with its `.meta` sidecar and runs the curve through
/// ingest, alignment, segmentation and property extraction.
pub fn analyze_file(file: &Path, settings: &Settings) -> Result<CurveAnalysis, CurveError> {
    let mut err = CurveError {
        sample_id: stem(file),
        position: None,
        file: file.to_path_buf(),
        stage: Stage::Metadata,
        message: String::new(),
    };
    let fail = |mut e: CurveError, stage: Stage, message: String| {
        e.stage = stage;
        e.message = message;
        e
    };
    let meta_text = std::fs::read_to_string(meta_path(file)).map_err(|e| {
        fail(
            err.clone(),
            Stage::Metadata,
            format!("{}: {e}", meta_path(file).display()),
        )
    })?;
    let meta = SampleMeta::parse(&meta_text).map_err(|e| fail(err.clone(), Stage::Metadata, e.to_string()))?;
    err.sample_id = meta.sample_id.clone();
    err.position = Some(meta.position_index);
    let group = HumidityGroup::classify(
        meta.geometry.nitrogen_treated,
        meta.geometry.humidity_pct,
        settings.rh_threshold,
    )
    .ok_or_else(|| {
        fail(
            err.clone(),
            Stage::Metadata,
            "no humidity_pct and not nitrogen-treated".into(),
        )
    })?
    .label(settings.rh_threshold);

    let reader = std::fs::File::open(file).map_err(|e| fail(err.clone(), Stage::Read, e.to_string()))?;
    let mut raw = parse_force_displacement(std::io::BufReader::new(reader), &meta.sample_id)
        .map_err(|e| fail(err.clone(), Stage::Read, e.to_string()))?;
    raw.position_index = meta.position_index;
    raw.validate()
        .map_err(|e| fail(err.clone(), Stage::Validate, e.to_string()))?;
    meta.geometry
        .validate(settings.thickness)
        .map_err(|e| fail(err.clone(), Stage::Validate, e.to_string()))?;
    let curve =
        to_stress_strain(&raw, &meta.geometry).map_err(|e| fail(err.clone(), Stage::Validate, e.to_string()))?;
    let aligned = align_contact(&curve, &settings.align).map_err(|e| fail(err.clone(), Stage::Align, e.to_string()))?;
    let segmentation =
        segment_curve(&aligned, &settings.segment).map_err(|e| fail(err.clone(), Stage::Segment, e.to_string()))?;
    let properties =
        extract_properties(&segmentation).map_err(|e| fail(err.clone(), Stage::Properties, e.to_string()))?;
    Ok(CurveAnalysis {
        file: file.to_path_buf(),
        meta,
        group,
        aligned,
        segmentation,
        properties,
    })
}

/// Analyzes files on the current rayon pool; results keep input order.
pub fn analyze_files(files: &[PathBuf], settings: &Settings) -> Vec<Result<CurveAnalysis, CurveError>> {
    files.par_iter().map(|f| analyze_file(f, settings)).collect()
}

/// CSV files in `dir` that have a `.meta` sidecar, sorted by name.
pub fn curve_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv") && meta_path(p).exists())
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone)]
pub struct SampleSummary {
    pub sample_id: String,
    pub n_curves: usize,
    pub consistency: Option<ConsistencyReport>,
    pub cv_error: Option<String>,
    pub quality: QualityReport,
}

/// Groups successful analyses by sample and computes cv and quality.
pub fn summarize(analyses: &[&CurveAnalysis], settings: &Settings) -> Vec<SampleSummary> {
    let mut by_sample: BTreeMap<&str, Vec<&CurveAnalysis>> = BTreeMap::new();
    for a in analyses {
        by_sample.entry(a.meta.sample_id.as_str()).or_default().push(a);
    }
    by_sample
        .into_iter()
        .map(|(id, mut curves)| {
            curves.sort_by_key(|a| a.meta.position_index);
            let aligned: Vec<StressStrainCurve> = curves.iter().map(|a| a.aligned.clone()).collect();
            let (consistency, cv_error) = match intra_sample_cv_with(&aligned, &settings.cv) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let outcomes: Vec<CurveOutcome> = curves
                .iter()
                .map(|a| CurveOutcome {
                    position_index: a.meta.position_index,
                    segmentation: Ok(a.segmentation.clone()),
                })
                .collect();
            SampleSummary {
                sample_id: id.to_string(),
                n_curves: curves.len(),
                consistency,
                cv_error,
                quality: assess_quality(&outcomes, &settings.quality),
            }
        })
        .collect()
}

pub const PROPERTY_COLUMNS: &[&str] = &[
    "sample_id",
    "position",
    "wt_pct",
    "humidity_group",
    "modulus_bar",
    "yield_bar",
    "pore_fraction",
    "creep_strain",
    "flags",
];

pub fn properties_table(analyses: &[&CurveAnalysis]) -> Table {
    let mut t = Table::new("properties", 1, PROPERTY_COLUMNS);
    let mut sorted: Vec<&&CurveAnalysis> = analyses.iter().collect();
    sorted.sort_by(|a, b| (&a.meta.sample_id, a.meta.position_index).cmp(&(&b.meta.sample_id, b.meta.position_index)));
    for a in sorted {
        let p = &a.properties;
        t.push(vec![
            a.meta.sample_id.as_str().into(),
            a.meta.position_index.into(),
            a.meta.geometry.polymer_wt_pct.into(),
            a.group.as_str().into(),
            p.elastic_modulus.into(),
            p.yield_strength.into(),
            p.pore_fraction.into(),
            p.creep_strain.into(),
            p.flags_joined(";").into(),
        ]);
    }
    t
}

pub fn cv_table(samples: &[SampleSummary]) -> Table {
    let mut t = Table::new(
        "cv",
        1,
        &[
            "sample_id",
            "n_curves",
            "cv",
            "stress_min_bar",
            "stress_max_bar",
            "grid_points",
            "curve_flags",
            "pass_fraction",
            "quality_pass",
            "reasons",
        ],
    );
    for s in samples {
        let (cv, lo, hi, n, flags) = match &s.consistency {
            Some(r) => {
                let flags: Vec<String> = r
                    .per_curve_flags
                    .iter()
                    .flat_map(|(pos, fl)| fl.iter().map(move |f| format!("p{pos}:{f}")))
                    .collect();
                (
                    Cell::Num(r.cv),
                    Cell::Num(r.stress_grid.0),
                    Cell::Num(r.stress_grid.1),
                    Cell::from(r.stress_grid.2),
                    flags.join(";"),
                )
            }
            None => (
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                s.cv_error.clone().unwrap_or_default(),
            ),
        };
        t.push(vec![
            s.sample_id.as_str().into(),
            s.n_curves.into(),
            cv,
            lo,
            hi,
            n,
            flags.into(),
            s.quality.pass_fraction.into(),
            s.quality.pass.into(),
            s.quality.reasons_joined().into(),
        ]);
    }
    t
}

pub fn errors_table(errors: &[&CurveError]) -> Table {
    let mut t = Table::new("errors", 1, &["sample_id", "position", "file", "stage", "message"]);
    let mut sorted: Vec<&&CurveError> = errors.iter().collect();
    sorted.sort_by(|a, b| a.file.cmp(&b.file));
    for e in sorted {
        let file = e
            .file
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
        t.push(vec![
            e.sample_id.as_str().into(),
            e.position.into(),
            file.into(),
            e.stage.to_string().into(),
            e.message.as_str().into(),
        ]);
    }
    t
}
