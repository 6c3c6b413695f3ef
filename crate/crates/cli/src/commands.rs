//! Argument parsing and the subcommand implementations.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use membrane_mech::formulate::{plan_dilution_with, Stock};
use membrane_mech::kv::KvMap;
use membrane_mech::psd::{aggregate_replicates, area_weighted_psd_with, dilate_mask, load_mask, PoreSizeDistribution};

use crate::campaign::{run_campaign, write_report, Manifest};
use crate::exit;
use crate::generate::{write_campaign, write_masks, CampaignPlan};
use crate::pipeline::{analyze_file, analyze_files, curve_files, cv_table, errors_table, properties_table, summarize};
use crate::settings::{self, Settings};
use crate::svg::{file_stem, sample_svg};
use crate::table::{Format, Table};
use crate::trend::{fit_all, read_properties, trends_table};

#[derive(Debug, Parser)]
#[command(
    name = "membrane-mech",
    version,
    about = "Compression-test analysis for porous membranes"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Key-value config file; falls back to $MEMBRANE_MECH_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory. Without it, single tables go to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment one curve and report its properties.
    Analyze { file: PathBuf },
    /// Intra-sample consistency for every curve in a directory.
    Cv { dir: PathBuf },
    /// Lever-rule blends of two stocks for one or more targets.
    PlanDilution(DilutionArgs),
    /// Pore-size distributions from mask images, aggregated per group.
    Psd {
        dir: PathBuf,
        /// Coating thickness to add back, nm; overrides `coating_nm`.
        #[arg(long)]
        coating: Option<f64>,
    },
    /// Write synthetic curves or masks with ground truth.
    Synth(SynthArgs),
    /// Run a whole campaign manifest.
    Campaign { manifest: PathBuf },
    /// Fit concentration trends from a properties table.
    Trend { csv: PathBuf },
}

#[derive(Debug, Args)]
pub struct DilutionArgs {
    /// `label:wt%[:g/mL]`, given exactly twice.
    #[arg(long, required = true, num_args = 1)]
    pub stock: Vec<String>,
    /// Target wt%; repeat for a series.
    #[arg(long, required = true)]
    pub target: Vec<f64>,
    /// Total blend mass per target, g.
    #[arg(long, default_value_t = 10.0)]
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Curves,
    Masks,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthKind::Curves)]
    pub kind: SynthKind,
    /// Force noise as a fraction of max stress.
    #[arg(long, default_value_t = 0.005)]
    pub noise: f64,
    /// Test positions per sample.
    #[arg(long, default_value_t = 3)]
    pub positions: usize,
    /// Add a constant-stress hold to each curve.
    #[arg(long)]
    pub creep: bool,
    /// Mask replicates per group.
    #[arg(long, default_value_t = 3)]
    pub replicates: usize,
}

pub fn run(cli: Cli) -> Result<i32> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.global.jobs {
        if n == 0 {
            bail!("--jobs must be at least 1");
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker pool")?;
    pool.install(|| dispatch(&cli.global, cli.command))
}

fn dispatch(g: &GlobalArgs, command: Command) -> Result<i32> {
    match command {
        Command::Analyze { file } => analyze(g, &file),
        Command::Cv { dir } => cv(g, &dir),
        Command::PlanDilution(args) => plan(g, &args),
        Command::Psd { dir, coating } => psd(g, &dir, coating),
        Command::Synth(args) => synth(g, &args),
        Command::Campaign { manifest } => campaign(g, &manifest),
        Command::Trend { csv } => trend(g, &csv),
    }
}

fn settings(g: &GlobalArgs, overrides: &KvMap) -> Result<Settings> {
    settings::load(g.config.as_deref(), overrides)
}

/// Saves into `--out` when given, otherwise prints to stdout.
fn emit(table: &Table, g: &GlobalArgs) -> Result<()> {
    match &g.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            table.save(dir, g.format)?;
        }
        None => {
            let stdout = std::io::stdout();
            table.write_to(stdout.lock(), g.format)?;
        }
    }
    Ok(())
}

fn report_errors(errors: &Table) {
    for row in &errors.rows {
        let text: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        eprintln!("failed: {}", text.join(" | "));
    }
}

fn analyze(g: &GlobalArgs, file: &Path) -> Result<i32> {
    let s = settings(g, &KvMap::default())?;
    let a = analyze_file(file, &s).map_err(|e| anyhow!("{} ({} stage): {}", e.file.display(), e.stage, e.message))?;
    emit(&properties_table(&[&a]), g)?;
    if let Some(dir) = &g.out {
        std::fs::write(dir.join("segments.txt"), a.segmentation.to_record())?;
        std::fs::write(
            dir.join(format!("sample_{}.svg", file_stem(&a.meta.sample_id))),
            sample_svg(&a.meta.sample_id, &[&a]),
        )?;
    }
    Ok(exit::OK)
}

fn cv(g: &GlobalArgs, dir: &Path) -> Result<i32> {
    let s = settings(g, &KvMap::default())?;
    let files = curve_files(dir).with_context(|| format!("listing {}", dir.display()))?;
    if files.is_empty() {
        bail!("no curve files with .meta sidecars in {}", dir.display());
    }
    let (mut ok, mut errs) = (Vec::new(), Vec::new());
    for r in analyze_files(&files, &s) {
        match r {
            Ok(a) => ok.push(a),
            Err(e) => errs.push(e),
        }
    }
    let refs: Vec<_> = ok.iter().collect();
    emit(&cv_table(&summarize(&refs, &s)), g)?;
    let err_refs: Vec<_> = errs.iter().collect();
    let errors = errors_table(&err_refs);
    if g.out.is_some() {
        emit(&errors, g)?;
    }
    report_errors(&errors);
    Ok(if errs.is_empty() { exit::OK } else { exit::PARTIAL })
}

fn parse_stock(text: &str, s: &Settings) -> Result<Stock> {
    let parts: Vec<&str> = text.split(':').collect();
    let (label, conc, density) = match parts.as_slice() {
        [l, c] => (*l, *c, None),
        [l, c, d] => (*l, *c, Some(*d)),
        _ => bail!("stock `{text}` is not label:wt%[:density]"),
    };
    let conc: f64 = conc
        .trim()
        .parse()
        .with_context(|| format!("stock `{text}`: bad concentration"))?;
    let density = match density {
        Some(d) => d
            .trim()
            .parse()
            .with_context(|| format!("stock `{text}`: bad density"))?,
        None => s.default_density,
    };
    let mut stock = Stock::new(label.trim(), conc, density);
    stock.viscosity = s.viscosity;
    Ok(stock)
}

fn plan(g: &GlobalArgs, args: &DilutionArgs) -> Result<i32> {
    let s = settings(g, &KvMap::default())?;
    let [a, b] = args.stock.as_slice() else {
        bail!("--stock must be given exactly twice");
    };
    let (a, b) = (parse_stock(a, &s)?, parse_stock(b, &s)?);
    let mut t = Table::new(
        "dilution",
        1,
        &[
            "target_wt_pct",
            "component",
            "concentration_wt_pct",
            "mass_g",
            "volume_mL",
            "viscosity_ratio",
            "warning",
        ],
    );
    for &target in &args.target {
        let plan = plan_dilution_with(&a, &b, target, args.mass, s.viscosity_warn_ratio)
            .with_context(|| format!("target {target} wt%"))?;
        if let Some(w) = &plan.warning {
            eprintln!("warning: target {target} wt%: {w}");
        }
        for c in &plan.components {
            t.push(vec![
                target.into(),
                c.label.as_str().into(),
                c.concentration.into(),
                c.mass_g.into(),
                c.volume_ml.into(),
                plan.viscosity_ratio.into(),
                plan.warning.clone().into(),
            ]);
        }
    }
    emit(&t, g)?;
    Ok(exit::OK)
}

fn mask_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm" || x == "png") && p.with_extension("meta").exists())
        .collect();
    files.sort();
    Ok(files)
}

fn psd(g: &GlobalArgs, dir: &Path, coating: Option<f64>) -> Result<i32> {
    let s = settings(g, &KvMap::default())?;
    let coating = coating.unwrap_or(s.coating_nm);
    if !(coating >= 0.0) {
        bail!("coating thickness must be non-negative, got {coating}");
    }
    let files = mask_files(dir)?;
    if files.is_empty() {
        bail!("no mask images with .meta sidecars in {}", dir.display());
    }
    let mut errors = Table::new("errors", 1, &["group", "file", "message"]);
    let mut groups: BTreeMap<String, Vec<PoreSizeDistribution>> = BTreeMap::new();
    for f in &files {
        let name = f
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        match load_mask(f) {
            Ok((mask, meta)) => {
                let mask = if coating > 0.0 {
                    dilate_mask(&mask, coating)
                } else {
                    mask
                };
                groups
                    .entry(meta.group)
                    .or_default()
                    .push(area_weighted_psd_with(&mask, &s.psd));
            }
            Err(e) => errors.push(vec!["".into(), name.into(), e.to_string().into()]),
        }
    }
    let mut t = Table::new(
        "psd",
        1,
        &[
            "group",
            "row",
            "bin_left_nm",
            "bin_right_nm",
            "mean",
            "standard_error",
            "replicates",
            "corrected",
        ],
    );
    for (group, psds) in &groups {
        match aggregate_replicates(psds) {
            Ok(summary) => {
                t.push(vec![
                    group.as_str().into(),
                    "porosity_pct".into(),
                    "".into(),
                    "".into(),
                    summary.porosity_mean.into(),
                    summary.porosity_se.into(),
                    summary.replicates.into(),
                    summary.corrected.into(),
                ]);
                for (k, (l, r)) in summary.bin_edges().into_iter().enumerate() {
                    t.push(vec![
                        group.as_str().into(),
                        "bin".into(),
                        l.into(),
                        r.into(),
                        summary.mean[k].into(),
                        summary.standard_error[k].into(),
                        summary.replicates.into(),
                        summary.corrected.into(),
                    ]);
                }
            }
            Err(e) => errors.push(vec![group.as_str().into(), "".into(), e.to_string().into()]),
        }
    }
    emit(&t, g)?;
    if g.out.is_some() {
        emit(&errors, g)?;
    }
    report_errors(&errors);
    Ok(if errors.rows.is_empty() {
        exit::OK
    } else {
        exit::PARTIAL
    })
}

fn synth(g: &GlobalArgs, args: &SynthArgs) -> Result<i32> {
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from("synth"));
    match args.kind {
        SynthKind::Curves => {
            let plan = CampaignPlan {
                positions: args.positions,
                noise_frac: args.noise,
                seed: g.seed,
                creep: args.creep,
                ..CampaignPlan::default()
            };
            let manifest = write_campaign(&out, &plan)?;
            println!("{}", manifest.display());
        }
        SynthKind::Masks => {
            let written = write_masks(&out, &["raw_a", "raw_b"], args.replicates, g.seed)?;
            println!("{} masks in {}", written.len(), out.display());
        }
    }
    Ok(exit::OK)
}

fn campaign(g: &GlobalArgs, manifest_path: &Path) -> Result<i32> {
    let (manifest, root) = Manifest::load(manifest_path)?;
    let files = manifest.resolve_files(&root)?;
    let s = settings(g, &manifest.config_overrides())?;
    let out = match (&g.out, &manifest.output) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => root.join(o),
        (None, None) => root.join("out"),
    };
    let report = run_campaign(&files, &s);
    write_report(&report, &out, g.format)?;
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    for e in &report.errors {
        eprintln!("failed: {} ({} stage): {}", e.file.display(), e.stage, e.message);
    }
    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "{} curves analyzed, {} failed, report in {}",
        report.analyses.len(),
        report.errors.len(),
        out.display()
    )?;
    Ok(if report.errors.is_empty() {
        exit::OK
    } else {
        exit::PARTIAL
    })
}

fn trend(g: &GlobalArgs, csv: &Path) -> Result<i32> {
    let points = read_properties(csv)?;
    let (fits, skipped) = fit_all(&points);
    for (group, response, e) in &skipped {
        eprintln!("note: no {response} trend for group {group}: {e}");
    }
    emit(&trends_table(&fits), g)?;
    Ok(exit::OK)
}
