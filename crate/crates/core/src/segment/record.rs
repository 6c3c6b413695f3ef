//! Line-oriented text form of a [`SegmentationResult`].
//!
//! ```text
//! # membrane-mech segmentation v1
//! curve <sample_id> <position_index>
//! has_creep <true|false>
//! breakpoints <strain> <strain> ...
//! region <label> <start> <end> <slope> <intercept> <r_squared> <point_count>
//! flags <flag> ...
//! end
//! ```
//!
//! Fields are tab-separated; floats use the shortest round-trip form.
//! Several records may be concatenated in one file.

use std::collections::BTreeSet;

use thiserror::Error;

use super::{RegionFit, SegmentationResult};

pub const RECORD_HEADER: &str = "# membrane-mech segmentation v1";

#[derive(Debug, Error, PartialEq)]
pub enum RecordError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record not terminated by `end`")]
    Unterminated,
}

impl SegmentationResult {
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        out.push_str(RECORD_HEADER);
        out.push('\n');
        out.push_str(&format!("curve\t{}\t{}\n", self.sample_id, self.position_index));
        out.push_str(&format!("has_creep\t{}\n", self.has_creep));
        out.push_str("breakpoints");
        for b in &self.breakpoints {
            out.push_str(&format!("\t{b}"));
        }
        out.push('\n');
        for r in &self.regions {
            out.push_str(&format!(
                "region\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.label, r.strain_range.0, r.strain_range.1, r.slope, r.intercept, r.r_squared, r.point_count
            ));
        }
        out.push_str("flags");
        for f in &self.flags {
            out.push('\t');
            out.push_str(f.as_str());
        }
        out.push_str("\nend\n");
        out
    }

    /// Parses every record in `text`.
    pub fn parse_records(text: &str) -> Result<Vec<SegmentationResult>, RecordError> {
        let mut out = Vec::new();
        let mut current: Option<SegmentationResult> = None;
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let err = |message: String| RecordError::Parse { line: lineno, message };
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
            match fields[0] {
                "curve" => {
                    if current.is_some() {
                        return Err(err("nested `curve`".into()));
                    }
                    if fields.len() != 3 {
                        return Err(err("expected sample id and position".into()));
                    }
                    current = Some(SegmentationResult {
                        sample_id: fields[1].to_string(),
                        position_index: fields[2].parse().map_err(|_| err("bad position".into()))?,
                        breakpoints: Vec::new(),
                        regions: Vec::new(),
                        has_creep: false,
                        flags: BTreeSet::new(),
                    });
                }
                key => {
                    let rec = current
                        .as_mut()
                        .ok_or_else(|| err(format!("`{key}` outside a record")))?;
                    match key {
                        "has_creep" => {
                            rec.has_creep = fields
                                .get(1)
                                .and_then(|v| v.parse().ok())
                                .ok_or_else(|| err("bad has_creep".into()))?;
                        }
                        "breakpoints" => {
                            rec.breakpoints = fields[1..].iter().map(|s| num(s)).collect::<Result<_, _>>()?;
                        }
                        "region" => {
                            if fields.len() != 8 {
                                return Err(err("region needs 7 fields".into()));
                            }
                            rec.regions.push(RegionFit {
                                label: fields[1].parse().map_err(err)?,
                                strain_range: (num(fields[2])?, num(fields[3])?),
                                slope: num(fields[4])?,
                                intercept: num(fields[5])?,
                                r_squared: num(fields[6])?,
                                point_count: fields[7].parse().map_err(|_| err("bad point count".into()))?,
                            });
                        }
                        "flags" => {
                            rec.flags = fields[1..]
                                .iter()
                                .filter(|s| !s.is_empty())
                                .map(|s| s.parse().map_err(err))
                                .collect::<Result<_, _>>()?;
                        }
                        "end" => out.push(current.take().expect("checked above")),
                        other => return Err(err(format!("unknown key `{other}`"))),
                    }
                }
            }
        }
        if current.is_some() {
            return Err(RecordError::Unterminated);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{RegionLabel, SegmentFlag};
    use super::*;
    use proptest::prelude::*;

    fn sample(bp: f64, slope: f64, flags: bool) -> SegmentationResult {
        let region = |label, a, b| RegionFit {
            label,
            strain_range: (a, b),
            slope,
            intercept: -1.0 / 3.0,
            r_squared: 0.987654321,
            point_count: 42,
        };
        SegmentationResult {
            sample_id: "PSf-12 #3".into(),
            position_index: -2,
            breakpoints: vec![bp, bp * 2.0],
            regions: vec![
                region(RegionLabel::Elastic, 0.0, bp),
                region(RegionLabel::Plateau, bp, bp * 2.0),
                region(RegionLabel::Densification, bp * 2.0, 1.0),
            ],
            has_creep: false,
            flags: if flags {
                [SegmentFlag::LowR2, SegmentFlag::NoPlateau].into()
            } else {
                BTreeSet::new()
            },
        }
    }

    proptest! {
        #[test]
        fn record_round_trip(bp in 0.01f64..0.45, slope in -1e4f64..1e4, flags: bool) {
            let seg = sample(bp, slope, flags);
            let parsed = SegmentationResult::parse_records(&seg.to_record()).unwrap();
            prop_assert_eq!(parsed, vec![seg]);
        }
    }

    #[test]
    fn concatenated_records() {
        let text = format!(
            "{}{}",
            sample(0.1, 5.0, true).to_record(),
            sample(0.2, 7.0, false).to_record()
        );
        assert_eq!(SegmentationResult::parse_records(&text).unwrap().len(), 2);
    }

    #[test]
    fn rejects_truncated_record() {
        let text = sample(0.1, 5.0, false).to_record().replace("end\n", "");
        assert_eq!(SegmentationResult::parse_records(&text), Err(RecordError::Unterminated));
        assert!(SegmentationResult::parse_records("region\telastic\n").is_err());
    }
}
