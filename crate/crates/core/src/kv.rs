//! `key = value` text files: sample sidecars (`.meta`) and run configs.
//!
//! Blank lines and lines starting with `#` are ignored. Both `=` and `:`
//! separate keys from values. Later duplicates override earlier ones.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KvError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("key `{key}`: cannot parse `{value}`")]
    Invalid { key: String, value: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let split = line.find(['=', ':']).ok_or(KvError::Syntax { line: i + 1 })?;
            let key = line[..split].trim();
            if key.is_empty() {
                return Err(KvError::Syntax { line: i + 1 });
            }
            let value = line[split + 1..].trim().trim_matches('"');
            entries.insert(key.to_string(), value.to_string());
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require_str(&self, key: &str) -> Result<&str, KvError> {
        self.get_str(key).ok_or_else(|| KvError::Missing(key.to_string()))
    }

    /// Parses an optional value; an empty value counts as absent.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, KvError> {
        match self.get_str(key) {
            None | Some("") => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| KvError::Invalid {
                key: key.to_string(),
                value: v.to_string(),
            }),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, KvError> {
        self.get(key)?.ok_or_else(|| KvError::Missing(key.to_string()))
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, KvError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Overlays `other` on top of `self`.
    pub fn merge(&mut self, other: &KvMap) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_separators() {
        let kv = KvMap::parse("# header\nsample_id = A1\nthickness_um: 85.5\n\nnitrogen=true\n").unwrap();
        assert_eq!(kv.get_str("sample_id"), Some("A1"));
        assert_eq!(kv.require::<f64>("thickness_um").unwrap(), 85.5);
        assert!(kv.require::<bool>("nitrogen").unwrap());
        assert_eq!(kv.get::<f64>("humidity_pct").unwrap(), None);
    }

    #[test]
    fn reports_bad_lines_and_values() {
        assert_eq!(KvMap::parse("a = 1\njunk\n"), Err(KvError::Syntax { line: 2 }));
        let kv = KvMap::parse("x = abc").unwrap();
        assert!(matches!(kv.require::<f64>("x"), Err(KvError::Invalid { .. })));
        assert_eq!(kv.require::<f64>("y"), Err(KvError::Missing("y".into())));
    }

    #[test]
    fn text_round_trip() {
        let mut kv = KvMap::default();
        kv.insert("b", 2.5);
        kv.insert("a", "x");
        assert_eq!(KvMap::parse(&kv.to_text()).unwrap(), kv);
    }
}
