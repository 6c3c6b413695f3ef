//! Property trends against polymer concentration, per humidity group.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use membrane_mech::stats::fit_line;

use crate::table::{read_csv, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Response {
    ElasticModulus,
    PoreFraction,
}

impl Response {
    pub const ALL: [Response; 2] = [Response::ElasticModulus, Response::PoreFraction];

    pub fn as_str(self) -> &'static str {
        match self {
            Response::ElasticModulus => "elastic_modulus",
            Response::PoreFraction => "pore_fraction",
        }
    }
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendFit {
    pub group: String,
    pub response: Response,
    /// response units per wt%
    pub slope: f64,
    pub intercept: f64,
    pub n: usize,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrendError {
    TooFewPoints(usize),
    NoConcentrationSpread,
}

impl fmt::Display for TrendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrendError::TooFewPoints(n) => write!(f, "need at least 2 points, got {n}"),
            TrendError::NoConcentrationSpread => f.write_str("all points share one concentration"),
        }
    }
}

impl std::error::Error for TrendError {}

/// OLS line through `(wt%, response)` points.
pub fn fit_trend(points: &[(f64, f64)], group: &str, response: Response) -> Result<TrendFit, TrendError> {
    if points.len() < 2 {
        return Err(TrendError::TooFewPoints(points.len()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(TrendError::NoConcentrationSpread);
    }
    let line = fit_line(&xs, &ys).ok_or(TrendError::NoConcentrationSpread)?;
    Ok(TrendFit {
        group: group.to_string(),
        response,
        slope: line.slope,
        intercept: line.intercept,
        n: points.len(),
        r_squared: line.r_squared,
    })
}

/// One row of `properties.csv`, as far as trends need it.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyPoint {
    pub sample_id: String,
    pub wt_pct: f64,
    pub group: String,
    pub modulus: f64,
    pub pore_fraction: f64,
}

/// Per-sample means by group: `group -> [(wt%, mean modulus, mean pore fraction)]`.
pub fn sample_means(points: &[PropertyPoint]) -> BTreeMap<String, Vec<(f64, f64, f64)>> {
    let mut acc: BTreeMap<(&str, &str), (f64, f64, f64, usize)> = BTreeMap::new();
    for p in points {
        let e = acc
            .entry((p.group.as_str(), p.sample_id.as_str()))
            .or_insert((p.wt_pct, 0.0, 0.0, 0));
        e.1 += p.modulus;
        e.2 += p.pore_fraction;
        e.3 += 1;
    }
    let mut out: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for ((group, _), (wt, m, pf, n)) in acc {
        out.entry(group.to_string())
            .or_default()
            .push((wt, m / n as f64, pf / n as f64));
    }
    out
}

/// Fits both responses for every group; groups that cannot be fitted are
/// returned separately with the reason.
pub fn fit_all(points: &[PropertyPoint]) -> (Vec<TrendFit>, Vec<(String, Response, TrendError)>) {
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    for (group, means) in sample_means(points) {
        for response in Response::ALL {
            let pts: Vec<(f64, f64)> = means
                .iter()
                .map(|&(wt, m, pf)| (wt, if response == Response::ElasticModulus { m } else { pf }))
                .collect();
            match fit_trend(&pts, &group, response) {
                Ok(f) => fits.push(f),
                Err(e) => skipped.push((group.clone(), response, e)),
            }
        }
    }
    (fits, skipped)
}

pub fn trends_table(fits: &[TrendFit]) -> Table {
    let mut t = Table::new(
        "trends",
        1,
        &["group", "response", "slope", "intercept", "n", "r_squared"],
    );
    for f in fits {
        t.push(vec![
            f.group.as_str().into(),
            f.response.as_str().into(),
            f.slope.into(),
            f.intercept.into(),
            f.n.into(),
            f.r_squared.into(),
        ]);
    }
    t
}

/// Reads the points back out of a `properties.csv`.
pub fn read_properties(path: &Path) -> Result<Vec<PropertyPoint>> {
    let (headers, rows) = read_csv(path).with_context(|| format!("reading {}", path.display()))?;
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("missing column `{name}`"))
    };
    let (id, wt, group, modulus, pf) = (
        col("sample_id")?,
        col("wt_pct")?,
        col("humidity_group")?,
        col("modulus_bar")?,
        col("pore_fraction")?,
    );
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let num = |c: usize| -> Result<f64> {
                r.get(c)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| anyhow!("row {}: bad number in `{}`", i + 1, headers[c]))
            };
            Ok(PropertyPoint {
                sample_id: r.get(id).cloned().unwrap_or_default(),
                wt_pct: num(wt)?,
                group: r.get(group).cloned().unwrap_or_default(),
                modulus: num(modulus)?,
                pore_fraction: num(pf)?,
            })
        })
        .collect()
}
