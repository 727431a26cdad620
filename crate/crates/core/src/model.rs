//! Trained models as `key=value` text (`model.txt`), reloaded by `classify`.
//!
//! Floats are written in shortest round-trip form, so a reload is exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::cluster::GridLabels;
use crate::density::ClusterLabel;
use crate::error::{Error, Result};
use crate::features::{
    classify_dstream, classify_kmeans, label_by_majority, label_by_risk, HealthStatus,
};
use crate::grid::{GridCoordinate, GridGeometry};
use crate::ingest::config::{parse_list, Config};
use crate::kmeans::KMeansModel;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelBody {
    DStream { grids: GridLabels, radius: u32 },
    KMeans { centroids: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub features: Vec<String>,
    pub bounds: Vec<(f64, f64)>,
    pub body: ModelBody,
    /// Cluster id to status; `None` when training data carried neither
    /// statuses nor a risk column.
    pub status: Option<BTreeMap<u64, HealthStatus>>,
    /// Which rule produced `status`: `majority`, `risk` or `none`.
    pub status_rule: String,
}

/// Where cluster statuses come from when training.
#[derive(Debug, Clone, Copy)]
pub enum StatusSource<'a> {
    Labels(&'a [HealthStatus]),
    Risk(&'a [f64]),
    None,
}

impl StatusSource<'_> {
    pub fn rule(&self) -> &'static str {
        match self {
            StatusSource::Labels(_) => "majority",
            StatusSource::Risk(_) => "risk",
            StatusSource::None => "none",
        }
    }
}

/// Cluster statuses from the training assignment. Every cluster in
/// `clusters` gets one; clusters no labeled record reached are unfit.
pub fn status_map(
    assignment: &[Option<u64>],
    source: StatusSource<'_>,
    clusters: impl IntoIterator<Item = u64>,
) -> Result<Option<BTreeMap<u64, HealthStatus>>> {
    let mut map = match source {
        StatusSource::Labels(s) => label_by_majority(assignment, s)?,
        StatusSource::Risk(r) => label_by_risk(assignment, r)?,
        StatusSource::None => return Ok(None),
    };
    for c in clusters {
        map.entry(c).or_insert(HealthStatus::Unfit);
    }
    Ok(Some(map))
}

impl TrainedModel {
    pub fn kmeans(features: Vec<String>, bounds: Vec<(f64, f64)>, model: &KMeansModel) -> Self {
        Self {
            features,
            bounds,
            body: ModelBody::KMeans {
                centroids: model.centroids.clone(),
            },
            status: None,
            status_rule: "none".into(),
        }
    }

    pub fn dstream(
        features: Vec<String>,
        bounds: Vec<(f64, f64)>,
        grids: GridLabels,
        radius: u32,
    ) -> Self {
        Self {
            features,
            bounds,
            body: ModelBody::DStream { grids, radius },
            status: None,
            status_rule: "none".into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.body {
            ModelBody::DStream { .. } => "dstream",
            ModelBody::KMeans { .. } => "kmeans",
        }
    }

    /// Status of a normalized point.
    pub fn classify(&self, point: &[f64]) -> Result<HealthStatus> {
        let status = self.status.as_ref().ok_or_else(|| {
            Error::Data("model carries no cluster statuses; train on labeled data".into())
        })?;
        match &self.body {
            ModelBody::KMeans { centroids } => {
                let labeling: Vec<HealthStatus> = (0..centroids.len() as u64)
                    .map(|c| status.get(&c).copied().unwrap_or(HealthStatus::Unfit))
                    .collect();
                let model = KMeansModel::from_centroids(centroids.clone());
                classify_kmeans(point, &model, &labeling)
            }
            ModelBody::DStream { grids, radius } => {
                let labeling = status.iter().map(|(&c, &s)| (ClusterLabel(c), s)).collect();
                classify_dstream(point, grids, &labeling, *radius)
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "kind={}", self.kind());
        let _ = writeln!(out, "features={}", self.features.join(","));
        for (name, (lo, hi)) in self.features.iter().zip(&self.bounds) {
            let _ = writeln!(out, "bounds.{name}={lo},{hi}");
        }
        match &self.body {
            ModelBody::DStream { grids, radius } => {
                let parts: Vec<String> = grids
                    .geometry()
                    .partitions()
                    .iter()
                    .map(u32::to_string)
                    .collect();
                let _ = writeln!(out, "partitions={}", parts.join(","));
                let _ = writeln!(out, "radius={radius}");
                for (g, label) in grids.iter() {
                    let coords: Vec<String> = g.coords().iter().map(u32::to_string).collect();
                    let _ = writeln!(out, "grid.{}={}", coords.join(":"), label.0);
                }
            }
            ModelBody::KMeans { centroids } => {
                let _ = writeln!(out, "k={}", centroids.len());
                for (i, c) in centroids.iter().enumerate() {
                    let v: Vec<String> = c.iter().map(f64::to_string).collect();
                    let _ = writeln!(out, "centroid.{i}={}", v.join(","));
                }
            }
        }
        let _ = writeln!(out, "status_rule={}", self.status_rule);
        if let Some(status) = &self.status {
            for (c, s) in status {
                let _ = writeln!(out, "status.{c}={s}");
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let cfg = Config::parse(text)?;
        let bad = |m: String| Error::Data(format!("model: {m}"));
        let features: Vec<String> = cfg
            .get("features")
            .ok_or_else(|| bad("missing features".into()))?
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if features.is_empty() {
            return Err(bad("no features".into()));
        }
        let bounds = features
            .iter()
            .map(|f| {
                cfg.pair(&format!("bounds.{f}"))?
                    .ok_or_else(|| bad(format!("missing bounds.{f}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let body = match cfg.get("kind") {
            Some("dstream") => {
                let parts = cfg
                    .list::<u32>("partitions")?
                    .ok_or_else(|| bad("missing partitions".into()))?;
                let geometry = GridGeometry::new(parts)?;
                if geometry.dims() != features.len() {
                    return Err(bad("partitions do not match features".into()));
                }
                let mut grids = GridLabels::new(geometry);
                for (key, value) in cfg.section("grid") {
                    let coords: Vec<u32> = key
                        .split(':')
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad(format!("bad grid key '{key}'")))?;
                    let g = GridCoordinate::new(coords);
                    if !grids.geometry().contains(&g) {
                        return Err(bad(format!("grid {g} lies outside the geometry")));
                    }
                    let label = value
                        .parse()
                        .map_err(|_| bad(format!("bad label '{value}'")))?;
                    grids.insert(g, ClusterLabel(label));
                }
                ModelBody::DStream {
                    grids,
                    radius: cfg.parsed("radius")?.unwrap_or(0),
                }
            }
            Some("kmeans") => {
                let k: usize = cfg.parsed("k")?.ok_or_else(|| bad("missing k".into()))?;
                let centroids = (0..k)
                    .map(|i| {
                        let v = cfg
                            .get(&format!("centroid.{i}"))
                            .ok_or_else(|| bad(format!("missing centroid.{i}")))?;
                        let c: Vec<f64> =
                            parse_list(v).map_err(|_| bad(format!("bad centroid.{i}")))?;
                        if c.len() != features.len() {
                            return Err(bad(format!("centroid.{i} has {} values", c.len())));
                        }
                        Ok(c)
                    })
                    .collect::<Result<Vec<_>>>()?;
                ModelBody::KMeans { centroids }
            }
            other => return Err(bad(format!("unknown kind {other:?}"))),
        };
        let mut status = BTreeMap::new();
        for (key, value) in cfg.section("status") {
            let c: u64 = key
                .parse()
                .map_err(|_| bad(format!("bad status key '{key}'")))?;
            status.insert(c, value.parse()?);
        }
        Ok(Self {
            features,
            bounds,
            body,
            status: (!status.is_empty()).then_some(status),
            status_rule: cfg.get("status_rule").unwrap_or("none").to_string(),
        })
    }
}
