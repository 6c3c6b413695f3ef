//! Campaign manifests and the batch runner.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use membrane_mech::kv::KvMap;
use serde::{Deserialize, Serialize};

use crate::pipeline::{
    analyze_files, cv_table, errors_table, properties_table, summarize, CurveAnalysis, CurveError, SampleSummary,
};
use crate::settings::Settings;
use crate::svg::{file_stem, overview_svg, sample_svg};
use crate::table::{Format, Table};
use crate::trend::{fit_all, trends_table, PropertyPoint, TrendFit};

/// ```toml
/// root = "."            # optional, relative to the manifest
/// output = "report"     # optional, relative to root
///
/// [config]              # optional overrides of the run config
/// min_r2 = 0.9
///
/// [[samples]]
/// id = "PSf12-a"
/// files = ["PSf12-a_p0.csv", "PSf12-a_p1.csv"]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub root: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub config: BTreeMap<String, toml::Value>,
    #[serde(default)]
    pub samples: Vec<SampleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub id: String,
    /// Force/displacement files; each needs a `.meta` sidecar next to it.
    pub files: Vec<PathBuf>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let manifest: Manifest =
            toml::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let root = match &manifest.root {
            Some(r) => base.join(r),
            None => base,
        };
        Ok((manifest, root))
    }

    pub fn config_overrides(&self) -> KvMap {
        let mut kv = KvMap::default();
        for (k, v) in &self.config {
            let text = match v {
                toml::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            kv.insert(k.clone(), text);
        }
        kv
    }

    /// Every referenced file (and its sidecar) must exist.
    pub fn resolve_files(&self, root: &Path) -> Result<Vec<PathBuf>> {
        if self.samples.iter().all(|s| s.files.is_empty()) {
            bail!("manifest lists no sample files");
        }
        let mut files = Vec::new();
        for s in &self.samples {
            for f in &s.files {
                let p = root.join(f);
                if !p.is_file() {
                    bail!("sample `{}`: file {} does not exist", s.id, p.display());
                }
                let meta = crate::pipeline::meta_path(&p);
                if !meta.is_file() {
                    bail!("sample `{}`: metadata {} does not exist", s.id, meta.display());
                }
                files.push(p);
            }
        }
        Ok(files)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(format!("# membrane-mech campaign v1\n{}", toml::to_string(self)?))
    }
}

#[derive(Debug)]
pub struct CampaignReport {
    pub analyses: Vec<CurveAnalysis>,
    pub errors: Vec<CurveError>,
    pub samples: Vec<SampleSummary>,
    pub trends: Vec<TrendFit>,
    pub notes: Vec<String>,
}

impl CampaignReport {
    pub fn property_points(&self) -> Vec<PropertyPoint> {
        self.analyses
            .iter()
            .map(|a| PropertyPoint {
                sample_id: a.meta.sample_id.clone(),
                wt_pct: a.meta.geometry.polymer_wt_pct,
                group: a.group.clone(),
                modulus: a.properties.elastic_modulus,
                pore_fraction: a.properties.pore_fraction,
            })
            .collect()
    }
}

pub fn run_campaign(files: &[PathBuf], settings: &Settings) -> CampaignReport {
    let mut analyses = Vec::new();
    let mut errors = Vec::new();
    for r in analyze_files(files, settings) {
        match r {
            Ok(a) => analyses.push(a),
            Err(e) => errors.push(e),
        }
    }
    let refs: Vec<&CurveAnalysis> = analyses.iter().collect();
    let samples = summarize(&refs, settings);
    let mut report = CampaignReport {
        analyses,
        errors,
        samples,
        trends: Vec::new(),
        notes: Vec::new(),
    };
    let (trends, skipped) = fit_all(&report.property_points());
    report.trends = trends;
    report.notes = skipped
        .into_iter()
        .map(|(g, r, e)| format!("no {r} trend for group {g}: {e}"))
        .collect();
    report
}

/// Writes the CSV (or JSON lines) tables and SVG plots; returns written paths.
pub fn write_report(report: &CampaignReport, out: &Path, format: Format) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let refs: Vec<&CurveAnalysis> = report.analyses.iter().collect();
    let errs: Vec<&CurveError> = report.errors.iter().collect();
    let tables: [Table; 4] = [
        properties_table(&refs),
        cv_table(&report.samples),
        trends_table(&report.trends),
        errors_table(&errs),
    ];
    let mut written = Vec::new();
    for t in &tables {
        written.push(t.save(out, format)?);
    }
    let mut records = String::new();
    let mut sorted = refs.clone();
    sorted.sort_by(|a, b| (&a.meta.sample_id, a.meta.position_index).cmp(&(&b.meta.sample_id, b.meta.position_index)));
    for a in &sorted {
        records.push_str(&a.segmentation.to_record());
    }
    let seg_path = out.join("segments.txt");
    std::fs::write(&seg_path, records)?;
    written.push(seg_path);

    let overview = out.join("overview.svg");
    std::fs::write(&overview, overview_svg(&report.property_points(), &report.trends))?;
    written.push(overview);
    let mut by_sample: BTreeMap<&str, Vec<&CurveAnalysis>> = BTreeMap::new();
    for a in sorted {
        by_sample.entry(a.meta.sample_id.as_str()).or_default().push(a);
    }
    for (id, curves) in by_sample {
        let p = out.join(format!("sample_{}.svg", file_stem(id)));
        std::fs::write(&p, sample_svg(id, &curves))?;
        written.push(p);
    }
    Ok(written)
}
