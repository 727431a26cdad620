//! Vital-sign features and risk scoring.
//!
//! Per signal and per tick: `offset` (current value minus the window mean),
//! `slope` (least-squares trend over the window, per tick) and `dist`
//! (distance outside the normality range). Over the window of recent
//! feature vectors three risk components are formed:
//!
//! * `z1 = max |slope| / scale` for sharp changes,
//! * `z2 = |sum h_i offset_i| / (scale * sum h_i)` for long-term drift, the
//!   most recent sample carrying the largest weight,
//! * `z3 = mean dist / scale` for persistence outside the normal band.
//!
//! A signal's risk is `a1 z1 + a2 z2 + a3 z3` and the global risk is the
//! largest signal risk.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use crate::cluster::GridLabels;
use crate::density::ClusterLabel;
use crate::error::{Error, Result};
use crate::grid::Tick;
use crate::kmeans::KMeansModel;

pub const DEFAULT_WINDOW: usize = 60;

/// Healthy band `[lo, hi]` of one vital sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalityRange {
    lo: f64,
    hi: f64,
}

impl NormalityRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "normality range [{lo}, {hi}] is empty"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub name: String,
    pub range: NormalityRange,
    pub scale: f64,
}

impl SignalSpec {
    /// Scale defaults to the width of the normality range.
    pub fn new(name: impl Into<String>, range: NormalityRange) -> Self {
        Self {
            name: name.into(),
            scale: range.width(),
            range,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scale of {} must be positive",
                self.name
            )));
        }
        self.scale = scale;
        Ok(self)
    }
}

/// The monitored signals, in column order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignalSchema {
    pub signals: Vec<SignalSpec>,
}

/// The last `capacity` (value, tick) samples of one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalWindow {
    samples: VecDeque<(f64, Tick)>,
    capacity: usize,
}

impl SignalWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter(
                "window length must be positive".into(),
            ));
        }
        Ok(Self {
            samples: VecDeque::with_capacity(capacity),
            capacity,
        })
    }

    pub fn from_samples(samples: &[(f64, Tick)], capacity: usize) -> Result<Self> {
        let mut w = Self::new(capacity)?;
        for &(v, t) in samples {
            w.push(v, t)?;
        }
        Ok(w)
    }

    pub fn push(&mut self, value: f64, tick: Tick) -> Result<()> {
        if let Some(&(_, last)) = self.samples.back() {
            if tick < last {
                return Err(Error::TimeReversed {
                    earlier: last,
                    later: tick,
                });
            }
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((value, tick));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn current(&self) -> Option<f64> {
        self.samples.back().map(|&(v, _)| v)
    }

    pub fn samples(&self) -> impl Iterator<Item = &(f64, Tick)> {
        self.samples.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureVector {
    pub offset: f64,
    pub slope: f64,
    pub dist: f64,
}

/// Current value minus the window mean.
pub fn offset(w: &SignalWindow) -> Result<f64> {
    let current = w
        .current()
        .ok_or_else(|| Error::InsufficientData("offset needs a non-empty window".into()))?;
    Ok(current - window_mean(w))
}

// Mean taken relative to the first sample, so a constant window yields its
// value exactly.
fn window_mean(w: &SignalWindow) -> f64 {
    let base = w.samples().next().map_or(0.0, |&(v, _)| v);
    base + w.samples().map(|&(v, _)| v - base).sum::<f64>() / w.len() as f64
}

/// Least-squares slope of value against tick.
pub fn slope(w: &SignalWindow) -> Result<f64> {
    if w.len() < 2 {
        return Err(Error::InsufficientData(
            "slope needs at least two samples".into(),
        ));
    }
    let n = w.len() as f64;
    let t0 = w.samples().next().map_or(0, |&(_, t)| t);
    // ticks relative to the first sample keep the sums small
    let mean_t = w.samples().map(|&(_, t)| (t - t0) as f64).sum::<f64>() / n;
    let mean_v = window_mean(w);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(v, t) in w.samples() {
        let dt = (t - t0) as f64 - mean_t;
        sxy += dt * (v - mean_v);
        sxx += dt * dt;
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData(
            "slope is undefined when all ticks are equal".into(),
        ));
    }
    Ok(sxy / sxx)
}

/// Distance from `value` to the normality range; zero inside it.
pub fn dist(value: f64, range: &NormalityRange) -> f64 {
    if value < range.lo {
        range.lo - value
    } else if value > range.hi {
        value - range.hi
    } else {
        0.0
    }
}

/// Feature vector for the newest sample. A window holding a single sample
/// has no trend yet and reports a slope of zero.
pub fn extract(w: &SignalWindow, range: &NormalityRange) -> Result<FeatureVector> {
    let current = w.current().ok_or_else(|| {
        Error::InsufficientData("cannot extract features from an empty window".into())
    })?;
    let slope = match w.len() {
        1 => 0.0,
        _ => slope(w)?,
    };
    Ok(FeatureVector {
        offset: offset(w)?,
        slope,
        dist: dist(current, range),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RiskComponents {
    pub z1: f64,
    pub z2: f64,
    pub z3: f64,
}

/// Offset weights `h` and component weights `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskWeights {
    pub h: Vec<f64>,
    pub a: [f64; 3],
}

impl RiskWeights {
    /// `h = (1, 2, ..., window)`, `a = (1, 1, 1)`.
    pub fn linear(window: usize) -> Self {
        Self {
            h: (1..=window).map(|i| i as f64).collect(),
            a: [1.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.h.is_empty() || self.h.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidParameter(
                "offset weights must be non-negative".into(),
            ));
        }
        if self.h.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidParameter(
                "offset weights are all zero".into(),
            ));
        }
        if self.a.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidParameter(
                "component weights must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Risk components over a feature history (oldest first). The newest
/// entry is paired with the last weight in `h`; when the history is longer
/// than `h` only its newest `h.len()` entries count.
pub fn risk_components(history: &[FeatureVector], h: &[f64], scale: f64) -> Result<RiskComponents> {
    if history.is_empty() {
        return Err(Error::InsufficientData(
            "risk needs at least one feature vector".into(),
        ));
    }
    if h.is_empty() || h.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidParameter(
            "offset weights must be non-negative".into(),
        ));
    }
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let span = history.len().min(h.len());
    let recent = &history[history.len() - span..];
    let weights = &h[h.len() - span..];
    let weight_sum: f64 = weights.iter().sum();
    if weight_sum == 0.0 {
        return Err(Error::InvalidParameter(
            "offset weights over the window are all zero".into(),
        ));
    }

    let z1 = recent.iter().map(|f| f.slope.abs()).fold(0.0, f64::max) / scale;
    let weighted: f64 = recent.iter().zip(weights).map(|(f, w)| w * f.offset).sum();
    let z2 = weighted.abs() / (scale * weight_sum);
    let z3 = recent.iter().map(|f| f.dist).sum::<f64>() / (span as f64 * scale);
    Ok(RiskComponents { z1, z2, z3 })
}

pub fn signal_risk(z: &RiskComponents, a: &[f64; 3]) -> f64 {
    a[0] * z.z1 + a[1] * z.z2 + a[2] * z.z3
}

/// Largest per-signal risk; zero when there are no signals.
pub fn global_risk(components: &[RiskComponents], a: &[f64; 3]) -> f64 {
    components
        .iter()
        .map(|z| signal_risk(z, a))
        .fold(0.0, f64::max)
}

/// Features and risks of every signal at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickFeatures {
    pub tick: Tick,
    pub features: Vec<FeatureVector>,
    pub risks: Vec<RiskComponents>,
    pub global: f64,
}

/// Streaming feature extraction over all signals of a schema.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    schema: SignalSchema,
    weights: RiskWeights,
    windows: Vec<SignalWindow>,
    histories: Vec<VecDeque<FeatureVector>>,
    window: usize,
}

impl FeatureExtractor {
    pub fn new(schema: SignalSchema, window: usize, weights: RiskWeights) -> Result<Self> {
        weights.validate()?;
        if weights.h.len() != window {
            return Err(Error::InvalidParameter(format!(
                "{} offset weights given for a window of {window}",
                weights.h.len()
            )));
        }
        let windows = schema
            .signals
            .iter()
            .map(|_| SignalWindow::new(window))
            .collect::<Result<Vec<_>>>()?;
        let histories = vec![VecDeque::with_capacity(window); schema.signals.len()];
        Ok(Self {
            schema,
            weights,
            windows,
            histories,
            window,
        })
    }

    pub fn schema(&self) -> &SignalSchema {
        &self.schema
    }

    /// Take one sample per signal, in schema order.
    pub fn push(&mut self, tick: Tick, values: &[f64]) -> Result<TickFeatures> {
        if values.len() != self.schema.signals.len() {
            return Err(Error::DimensionMismatch {
                expected: self.schema.signals.len(),
                found: values.len(),
            });
        }
        let mut features = Vec::with_capacity(values.len());
        let mut risks = Vec::with_capacity(values.len());
        for (i, (&v, spec)) in values.iter().zip(&self.schema.signals).enumerate() {
            self.windows[i].push(v, tick)?;
            let f = extract(&self.windows[i], &spec.range)?;
            let history = &mut self.histories[i];
            if history.len() == self.window {
                history.pop_front();
            }
            history.push_back(f);
            let z = risk_components(history.make_contiguous(), &self.weights.h, spec.scale)?;
            features.push(f);
            risks.push(z);
        }
        let global = global_risk(&risks, &self.weights.a);
        Ok(TickFeatures {
            tick,
            features,
            risks,
            global,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HealthStatus {
    Fit,
    Unfit,
}

impl fmt::Display for HealthStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HealthStatus::Fit => "FIT",
            HealthStatus::Unfit => "UNFIT",
        })
    }
}

impl FromStr for HealthStatus {
    type Err = Error;

    /// Accepts `fit`/`unfit` in any case, or a class number where 0 is fit
    /// and any positive value is unfit.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("fit") {
            return Ok(HealthStatus::Fit);
        }
        if t.eq_ignore_ascii_case("unfit") {
            return Ok(HealthStatus::Unfit);
        }
        match t.parse::<f64>() {
            Ok(0.0) => Ok(HealthStatus::Fit),
            Ok(x) if x > 0.0 => Ok(HealthStatus::Unfit),
            _ => Err(Error::Data(format!("'{s}' is not a fit/unfit status"))),
        }
    }
}

/// Status of each cluster by majority of its members' known statuses.
/// A tied cluster is marked unfit.
pub fn label_by_majority<C: Ord + Copy>(
    assignment: &[Option<C>],
    truth: &[HealthStatus],
) -> Result<BTreeMap<C, HealthStatus>> {
    if assignment.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: assignment.len(),
            found: truth.len(),
        });
    }
    let mut votes: BTreeMap<C, (usize, usize)> = BTreeMap::new();
    for (c, s) in assignment.iter().zip(truth) {
        if let Some(c) = c {
            let v = votes.entry(*c).or_default();
            match s {
                HealthStatus::Fit => v.0 += 1,
                HealthStatus::Unfit => v.1 += 1,
            }
        }
    }
    Ok(votes
        .into_iter()
        .map(|(c, (fit, unfit))| {
            (
                c,
                if fit > unfit {
                    HealthStatus::Fit
                } else {
                    HealthStatus::Unfit
                },
            )
        })
        .collect())
}

/// Status of each cluster from its members' global risk: unfit when the
/// cluster mean exceeds half of the largest risk observed.
pub fn label_by_risk<C: Ord + Copy>(
    assignment: &[Option<C>],
    risks: &[f64],
) -> Result<BTreeMap<C, HealthStatus>> {
    if assignment.len() != risks.len() {
        return Err(Error::DimensionMismatch {
            expected: assignment.len(),
            found: risks.len(),
        });
    }
    let threshold = 0.5 * risks.iter().copied().fold(0.0, f64::max);
    let mut sums: BTreeMap<C, (f64, usize)> = BTreeMap::new();
    for (c, &r) in assignment.iter().zip(risks) {
        if let Some(c) = c {
            let s = sums.entry(*c).or_default();
            s.0 += r;
            s.1 += 1;
        }
    }
    Ok(sums
        .into_iter()
        .map(|(c, (sum, n))| {
            let mean = sum / n as f64;
            (
                c,
                if mean > threshold {
                    HealthStatus::Unfit
                } else {
                    HealthStatus::Fit
                },
            )
        })
        .collect())
}

fn status_for<C: Ord + Hash + fmt::Debug>(
    labeling: &BTreeMap<C, HealthStatus>,
    c: &C,
) -> Result<HealthStatus> {
    labeling
        .get(c)
        .copied()
        .ok_or_else(|| Error::Data(format!("no status is assigned to cluster {c:?}")))
}

/// Status of the nearest centroid's cluster.
pub fn classify_kmeans(
    point: &[f64],
    model: &KMeansModel,
    labeling: &[HealthStatus],
) -> Result<HealthStatus> {
    if model.centroids.is_empty() {
        return Err(Error::Data("k-means model has no centroids".into()));
    }
    if labeling.len() != model.k() {
        return Err(Error::Data(format!(
            "{} statuses given for {} clusters",
            labeling.len(),
            model.k()
        )));
    }
    if point.len() != model.centroids[0].len() {
        return Err(Error::DimensionMismatch {
            expected: model.centroids[0].len(),
            found: point.len(),
        });
    }
    Ok(labeling[model.predict(point)])
}

/// Status of the cluster owning the point's grid, or of the nearest labeled
/// grid within `radius` cells (Chebyshev). Anything farther is unfit.
pub fn classify_dstream(
    point: &[f64],
    grids: &GridLabels,
    labeling: &BTreeMap<ClusterLabel, HealthStatus>,
    radius: u32,
) -> Result<HealthStatus> {
    if grids.is_empty() {
        return Err(Error::Data("d-stream model has no labeled grids".into()));
    }
    match grids.lookup(point, radius)? {
        Some(c) => status_for(labeling, &c),
        None => Ok(HealthStatus::Unfit),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridCoordinate, GridGeometry};
    use proptest::prelude::*;

    fn window(values: &[f64]) -> SignalWindow {
        let samples: Vec<_> = values
            .iter()
            .enumerate()
            .map(|(t, &v)| (v, t as Tick))
            .collect();
        SignalWindow::from_samples(&samples, 64).unwrap()
    }

    #[test]
    fn offset_examples() {
        assert_eq!(offset(&window(&[5.0, 5.0, 5.0])).unwrap(), 0.0);
        assert_eq!(offset(&window(&[2.0, 4.0, 6.0])).unwrap(), 2.0);
        assert_eq!(offset(&window(&[7.5])).unwrap(), 0.0);
        assert!(offset(&SignalWindow::new(3).unwrap()).is_err());
    }

    #[test]
    fn slope_examples() {
        assert_eq!(slope(&window(&[3.0, 3.0, 3.0])).unwrap(), 0.0);
        assert_eq!(slope(&window(&[1.0, 2.0, 3.0])).unwrap(), 1.0);
        let w = SignalWindow::from_samples(&[(0.0, 0), (2.0, 4)], 4).unwrap();
        assert_eq!(slope(&w).unwrap(), 0.5);
        assert!(slope(&window(&[1.0])).is_err());
        let same_tick = SignalWindow::from_samples(&[(0.0, 3), (2.0, 3)], 4).unwrap();
        assert!(slope(&same_tick).is_err());
    }

    #[test]
    fn window_keeps_newest_samples() {
        let mut w = SignalWindow::new(2).unwrap();
        for t in 0..5 {
            w.push(t as f64, t).unwrap();
        }
        assert_eq!(
            w.samples().copied().collect::<Vec<_>>(),
            vec![(3.0, 3), (4.0, 4)]
        );
        assert!(w.push(1.0, 2).is_err());
    }

    #[test]
    fn dist_examples() {
        let r = NormalityRange::new(90.0, 100.0).unwrap();
        assert_eq!(dist(95.0, &r), 0.0);
        assert_eq!(dist(85.0, &r), 5.0);
        assert_eq!(dist(103.0, &r), 3.0);
        assert!(NormalityRange::new(100.0, 90.0).is_err());
    }

    #[test]
    fn risk_examples() {
        let h = RiskWeights::linear(4).h;
        let zero = risk_components(&[FeatureVector::default(); 4], &h, 2.0).unwrap();
        assert_eq!(zero, RiskComponents::default());

        let constant = vec![
            FeatureVector {
                offset: -1.5,
                ..Default::default()
            };
            3
        ];
        let z = risk_components(&constant, &h, 3.0).unwrap();
        assert!((z.z2 - 0.5).abs() < 1e-15);

        let z = risk_components(&[FeatureVector::default()], &h, 1.0).unwrap();
        assert_eq!(z.z3, 0.0);

        assert!(risk_components(&constant, &[0.0; 4], 1.0).is_err());
        assert!(risk_components(&[], &h, 1.0).is_err());
    }

    #[test]
    fn recent_offsets_weigh_more() {
        let h = RiskWeights::linear(2).h;
        let history = [
            FeatureVector {
                offset: 3.0,
                ..Default::default()
            },
            FeatureVector {
                offset: 0.0,
                ..Default::default()
            },
        ];
        // (1*3 + 2*0) / 3
        assert_eq!(risk_components(&history, &h, 1.0).unwrap().z2, 1.0);
    }

    #[test]
    fn global_risk_examples() {
        let a = [1.0; 3];
        assert_eq!(global_risk(&[RiskComponents::default(); 3], &a), 0.0);
        let one = RiskComponents {
            z1: 1.0,
            z2: 0.0,
            z3: 0.0,
        };
        assert_eq!(global_risk(&[one], &a), 1.0);
        let low = RiskComponents {
            z1: 0.2,
            ..Default::default()
        };
        let high = RiskComponents {
            z3: 0.7,
            ..Default::default()
        };
        assert_eq!(global_risk(&[low, high], &a), 0.7);
    }

    #[test]
    fn constant_in_range_signal_is_riskless() {
        let schema = SignalSchema {
            signals: vec![SignalSpec::new(
                "SpO2",
                NormalityRange::new(90.0, 100.0).unwrap(),
            )],
        };
        let mut fx = FeatureExtractor::new(schema, 5, RiskWeights::linear(5)).unwrap();
        for t in 0..20 {
            let out = fx.push(t, &[90.1]).unwrap();
            assert_eq!(out.features[0], FeatureVector::default());
            assert_eq!(out.risks[0], RiskComponents::default());
            assert_eq!(out.global, 0.0);
        }
    }

    #[test]
    fn status_parsing() {
        assert_eq!("FIT".parse::<HealthStatus>().unwrap(), HealthStatus::Fit);
        assert_eq!(
            "unfit".parse::<HealthStatus>().unwrap(),
            HealthStatus::Unfit
        );
        assert_eq!("0".parse::<HealthStatus>().unwrap(), HealthStatus::Fit);
        assert_eq!("2".parse::<HealthStatus>().unwrap(), HealthStatus::Unfit);
        assert!("maybe".parse::<HealthStatus>().is_err());
    }

    #[test]
    fn cluster_status_rules() {
        let assignment = [Some(1), Some(1), Some(1), Some(2), None];
        let truth = [
            HealthStatus::Fit,
            HealthStatus::Fit,
            HealthStatus::Unfit,
            HealthStatus::Fit,
            HealthStatus::Unfit,
        ];
        let by_vote = label_by_majority(&assignment, &truth).unwrap();
        assert_eq!(by_vote[&1], HealthStatus::Fit);
        assert_eq!(by_vote[&2], HealthStatus::Fit);

        let by_risk = label_by_risk(&assignment, &[0.1, 0.1, 0.1, 0.9, 0.0]).unwrap();
        assert_eq!(by_risk[&1], HealthStatus::Fit);
        assert_eq!(by_risk[&2], HealthStatus::Unfit);
    }

    #[test]
    fn kmeans_classification() {
        let model = KMeansModel {
            centroids: vec![vec![0.0], vec![10.0]],
            assignment: vec![],
            sse: 0.0,
            iterations: 1,
            sse_history: vec![],
            converged: true,
        };
        let labeling = [HealthStatus::Fit, HealthStatus::Unfit];
        assert_eq!(
            classify_kmeans(&[0.0], &model, &labeling).unwrap(),
            HealthStatus::Fit
        );
        assert_eq!(
            classify_kmeans(&[8.0], &model, &labeling).unwrap(),
            HealthStatus::Unfit
        );
        assert!(classify_kmeans(&[8.0], &model, &labeling[..1]).is_err());
    }

    #[test]
    fn dstream_classification() {
        let geom = GridGeometry::uniform(2, 10).unwrap();
        let mut grids = GridLabels::new(geom);
        grids.insert(GridCoordinate(vec![1, 1]), ClusterLabel(1));
        grids.insert(GridCoordinate(vec![8, 8]), ClusterLabel(2));
        let labeling = BTreeMap::from([
            (ClusterLabel(1), HealthStatus::Fit),
            (ClusterLabel(2), HealthStatus::Unfit),
        ]);
        assert_eq!(
            classify_dstream(&[0.15, 0.15], &grids, &labeling, 2).unwrap(),
            HealthStatus::Fit
        );
        assert_eq!(
            classify_dstream(&[0.85, 0.85], &grids, &labeling, 2).unwrap(),
            HealthStatus::Unfit
        );
        // two cells from (1,1): nearest-grid rule
        assert_eq!(
            classify_dstream(&[0.35, 0.15], &grids, &labeling, 2).unwrap(),
            HealthStatus::Fit
        );
        // empty middle of the space, nothing within two cells
        assert_eq!(
            classify_dstream(&[0.45, 0.55], &grids, &labeling, 2).unwrap(),
            HealthStatus::Unfit
        );
        let partial = BTreeMap::from([(ClusterLabel(1), HealthStatus::Fit)]);
        assert!(classify_dstream(&[0.85, 0.85], &grids, &partial, 2).is_err());
        assert!(classify_dstream(
            &[0.5, 0.5],
            &GridLabels::new(GridGeometry::uniform(2, 10).unwrap()),
            &labeling,
            2
        )
        .is_err());
    }

    fn series() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50.0f64..50.0, 2..40)
    }

    proptest! {
        #[test]
        fn translation_leaves_offset_and_slope(values in series(), shift in -100.0f64..100.0) {
            let base = window(&values);
            let moved: Vec<f64> = values.iter().map(|v| v + shift).collect();
            let moved = window(&moved);
            prop_assert!((offset(&base).unwrap() - offset(&moved).unwrap()).abs() < 1e-9);
            prop_assert!((slope(&base).unwrap() - slope(&moved).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn scaling_scales_offset_and_slope(values in series(), factor in 0.1f64..10.0) {
            let base = window(&values);
            let scaled: Vec<f64> = values.iter().map(|v| v * factor).collect();
            let scaled = window(&scaled);
            let magnitude = values.iter().fold(0.0f64, |m, v| m.max(v.abs())) * factor;
            let tol = 1e-12 * (1.0 + magnitude);
            let (o, s) = (offset(&base).unwrap(), slope(&base).unwrap());
            prop_assert!((offset(&scaled).unwrap() - factor * o).abs() <= tol);
            prop_assert!((slope(&scaled).unwrap() - factor * s).abs() <= tol);
        }

        #[test]
        fn risk_components_are_non_negative(
            offsets in prop::collection::vec(-5.0f64..5.0, 1..30),
            slopes in prop::collection::vec(-5.0f64..5.0, 30),
            dists in prop::collection::vec(0.0f64..5.0, 30),
        ) {
            let history: Vec<FeatureVector> = offsets
                .iter()
                .zip(&slopes)
                .zip(&dists)
                .map(|((&offset, &slope), &dist)| FeatureVector { offset, slope, dist })
                .collect();
            let z = risk_components(&history, &RiskWeights::linear(30).h, 1.5).unwrap();
            prop_assert!(z.z1 >= 0.0 && z.z2 >= 0.0 && z.z3 >= 0.0);
        }
    }
}
