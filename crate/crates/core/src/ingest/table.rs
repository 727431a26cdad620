//! CSV datasets and min-max normalization.
//!
//! Dialect: the first line is a header, cells are comma separated, numbers
//! use `.` as the decimal point.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{DataRecord, Tick};
use crate::ingest::config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    Feature,
    Label,
    Tick,
    Ignore,
}

/// Which columns to treat how. Columns not otherwise named are features.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchemaConfig {
    pub label_column: Option<String>,
    pub tick_column: Option<String>,
    pub ignore: Vec<String>,
    pub bounds: BTreeMap<String, (f64, f64)>,
}

impl SchemaConfig {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let mut bounds = BTreeMap::new();
        for (col, _) in cfg.section("bounds") {
            let pair = cfg.pair(&format!("bounds.{col}"))?.expect("key exists");
            bounds.insert(col.to_string(), pair);
        }
        Ok(Self {
            label_column: cfg.get("label_column").map(str::to_string),
            tick_column: cfg.get("tick_column").map(str::to_string),
            ignore: cfg
                .get("ignore")
                .map(|v| {
                    v.split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect()
                })
                .unwrap_or_default(),
            bounds,
        })
    }

    /// Assigns a role to every header column. Without explicit names, columns
    /// called `label` and `tick` take those roles.
    pub fn resolve(&self, header: &[String]) -> Result<DatasetSchema> {
        let find = |name: &str| header.iter().position(|h| h == name);
        let require = |name: &String, what: &str| {
            find(name).ok_or_else(|| Error::Data(format!("{what} column '{name}' not in header")))
        };
        let label = match &self.label_column {
            Some(name) => Some(require(name, "label")?),
            None => find("label"),
        };
        let tick = match &self.tick_column {
            Some(name) => Some(require(name, "tick")?),
            None => find("tick"),
        };
        if label.is_some() && label == tick {
            return Err(Error::Data("label and tick column must differ".into()));
        }
        for name in &self.ignore {
            require(name, "ignored")?;
        }
        for (i, name) in header.iter().enumerate() {
            if header[..i].contains(name) {
                return Err(Error::Data(format!("duplicate column '{name}'")));
            }
        }
        let roles = header
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let role = if Some(i) == label {
                    ColumnRole::Label
                } else if Some(i) == tick {
                    ColumnRole::Tick
                } else if self.ignore.contains(name) {
                    ColumnRole::Ignore
                } else {
                    ColumnRole::Feature
                };
                (name.clone(), role)
            })
            .collect();
        let schema = DatasetSchema {
            columns: roles,
            bounds: self.bounds.clone(),
        };
        for (col, &(lo, hi)) in &schema.bounds {
            if !(lo < hi) {
                return Err(Error::Data(format!("bounds for '{col}' need min < max")));
            }
        }
        Ok(schema)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSchema {
    pub columns: Vec<(String, ColumnRole)>,
    /// Configured bounds; features without an entry are calibrated.
    pub bounds: BTreeMap<String, (f64, f64)>,
}

impl DatasetSchema {
    pub fn features(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|(_, r)| *r == ColumnRole::Feature)
            .map(|(n, _)| n.clone())
            .collect()
    }
}

/// Raw rows in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub ticks: Vec<Tick>,
    pub labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.features.iter().position(|f| f == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_csv(path: &Path, cfg: &SchemaConfig) -> Result<(DatasetSchema, Dataset)> {
    if !path.exists() {
        return Err(Error::Io(format!("{}: no such file", path.display())));
    }
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_csv(file, cfg)
}

pub fn load_csv(path: &Path, cfg: &SchemaConfig) -> Result<Dataset> {
    read_csv(path, cfg).map(|(_, d)| d)
}

/// Row numbers in errors count data rows from 1 (the header is row 0).
pub fn parse_csv<R: std::io::Read>(
    input: R,
    cfg: &SchemaConfig,
) -> Result<(DatasetSchema, Dataset)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Data("missing header".into()));
    }
    let schema = cfg.resolve(&header)?;
    let mut data = Dataset {
        features: schema.features(),
        rows: Vec::new(),
        ticks: Vec::new(),
        labels: schema
            .columns
            .iter()
            .any(|(_, r)| *r == ColumnRole::Label)
            .then(Vec::new),
    };
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Data(format!("row {row}: {e}")))?;
        if record.len() != header.len() {
            return Err(Error::Data(format!(
                "row {row}: expected {} cells, found {}",
                header.len(),
                record.len()
            )));
        }
        let mut values = Vec::with_capacity(data.features.len());
        let mut tick = None;
        for ((name, role), cell) in schema.columns.iter().zip(record.iter()) {
            let cell = cell.trim();
            match role {
                ColumnRole::Feature => {
                    let v: f64 = cell.parse().map_err(|_| {
                        Error::Data(format!(
                            "row {row}: column '{name}' is not numeric: '{cell}'"
                        ))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Data(format!(
                            "row {row}: column '{name}' is not finite"
                        )));
                    }
                    values.push(v);
                }
                ColumnRole::Tick => {
                    tick = Some(cell.parse::<Tick>().map_err(|_| {
                        Error::Data(format!(
                            "row {row}: tick '{cell}' is not a non-negative integer"
                        ))
                    })?);
                }
                ColumnRole::Label => data
                    .labels
                    .as_mut()
                    .expect("label column")
                    .push(cell.to_string()),
                ColumnRole::Ignore => {}
            }
        }
        data.rows.push(values);
        data.ticks.push(tick.unwrap_or(i as Tick));
    }
    Ok((schema, data))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub records: Vec<DataRecord>,
    /// Bounds used per feature, in feature order.
    pub bounds: Vec<(f64, f64)>,
    /// Cells that fell outside their bounds and were clamped.
    pub clamped: usize,
}

/// Per-feature bounds: configured ones win, the rest come from the data.
pub fn calibrate(
    data: &Dataset,
    configured: &BTreeMap<String, (f64, f64)>,
) -> Result<Vec<(f64, f64)>> {
    data.features
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let (lo, hi) = match configured.get(name) {
                Some(&b) => b,
                None => data
                    .rows
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                        (lo.min(r[j]), hi.max(r[j]))
                    }),
            };
            if lo < hi {
                Ok((lo, hi))
            } else {
                Err(Error::Data(format!(
                    "feature '{name}' has min = max; cannot normalize"
                )))
            }
        })
        .collect()
}

pub fn normalize(data: &Dataset, bounds: &[(f64, f64)]) -> Result<Normalized> {
    if bounds.len() != data.features.len() {
        return Err(Error::DimensionMismatch {
            expected: data.features.len(),
            found: bounds.len(),
        });
    }
    if let Some(j) = bounds.iter().position(|(lo, hi)| !(lo < hi)) {
        return Err(Error::Data(format!(
            "feature '{}' has min = max; cannot normalize",
            data.features[j]
        )));
    }
    let mut clamped = 0;
    let records = data
        .rows
        .iter()
        .zip(&data.ticks)
        .map(|(row, &tick)| {
            let values = row
                .iter()
                .zip(bounds)
                .map(|(&x, &(lo, hi))| {
                    let v = (x - lo) / (hi - lo);
                    if !(0.0..=1.0).contains(&v) {
                        clamped += 1;
                    }
                    v.clamp(0.0, 1.0)
                })
                .collect();
            DataRecord { values, tick }
        })
        .collect();
    Ok(Normalized {
        records,
        bounds: bounds.to_vec(),
        clamped,
    })
}

/// Writes records with their labels. Values use the shortest representation
/// that parses back to the same `f64`.
pub fn write_csv<W: Write>(
    out: W,
    features: &[String],
    records: &[DataRecord],
    labels: Option<&[String]>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["tick".to_string()];
    header.extend(features.iter().cloned());
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, r) in records.iter().enumerate() {
        let mut row = vec![r.tick.to_string()];
        row.extend(r.values.iter().map(f64::to_string));
        if let Some(l) = labels {
            row.push(l[i].clone());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}
