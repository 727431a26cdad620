//! Line-oriented `key = value` configuration.
//!
//! Blank lines and lines starting with `#` are skipped. List values are
//! comma separated. Recognized keys:
//!
//! | key | meaning |
//! |-----|---------|
//! | `label_column`, `tick_column`, `risk_column` | column roles (defaults: `label`, `tick`, `global_risk` when present) |
//! | `ignore` | columns to skip |
//! | `bounds.<col>` | `min,max` used for normalization |
//! | `range.<col>` | `lo,hi` normality range of a vital sign |
//! | `scale.<col>` | risk scale of a vital sign |
//! | `lambda`, `cm`, `cl`, `gap` | decay parameters |
//! | `partitions` | one count for every dimension, or one per dimension |
//! | `radius` | outlier radius in cells for placing points |
//! | `window`, `weights`, `risk_weights` | feature window, offset weights `h`, component weights `a` |
//! | `k`, `seed`, `max_iter`, `tol` | K-means settings |

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Data(format!("config line {}: expected key = value", i + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Data(format!("config line {}: empty key", i + 1)));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Data(format!("config key {key}: cannot parse '{v}'")))
            })
            .transpose()
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get(key)
            .map(|v| {
                parse_list(v)
                    .map_err(|_| Error::Data(format!("config key {key}: cannot parse '{v}'")))
            })
            .transpose()
    }

    /// `(a, b)` pair stored as `a,b`.
    pub fn pair(&self, key: &str) -> Result<Option<(f64, f64)>> {
        match self.list::<f64>(key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 => Ok(Some((v[0], v[1]))),
            Some(_) => Err(Error::Data(format!(
                "config key {key}: expected two values"
            ))),
        }
    }

    /// Entries under `prefix.`, keyed by the remainder.
    pub fn section(&self, prefix: &str) -> impl Iterator<Item = (&str, &str)> {
        let dotted = format!("{prefix}.");
        self.entries
            .iter()
            .filter_map(move |(k, v)| k.strip_prefix(&dotted).map(|rest| (rest, v.as_str())))
    }
}

pub fn parse_list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, T::Err> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}
