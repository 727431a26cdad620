//! Accuracy and purity metrics, the K-means vs D-Stream comparison, and a
//! brute-force density oracle for auditing the engine.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::Hash;

use crate::cluster::{run_dstream, ClusteringState, GridLabels};
use crate::error::{Error, Result};
use crate::grid::{
    decay_factor, map_to_grid, DataRecord, DecayParams, GridCoordinate, GridGeometry, Tick,
};
use crate::kmeans::{kmeans_fit, KMeansConfig};

/// Percentage with two decimals, stored in hundredths of a percent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Percentage(u64);

impl Percentage {
    pub fn hundredths(&self) -> u64 {
        self.0
    }

    pub fn value(&self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Percentage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

/// `100 * correct / total`, rounded half-up to two decimals in exact
/// integer arithmetic.
pub fn accuracy(correct: u64, total: u64) -> Result<Percentage> {
    if total == 0 {
        return Err(Error::InsufficientData(
            "accuracy of zero instances is undefined".into(),
        ));
    }
    if correct > total {
        return Err(Error::InvalidParameter(format!(
            "{correct} correct out of {total}"
        )));
    }
    let scaled = u128::from(correct) * 10_000;
    let total = u128::from(total);
    Ok(Percentage(((2 * scaled + total) / (2 * total)) as u64))
}

/// Fraction of points whose cluster's majority truth label is their own.
pub fn purity<A: Hash + Eq, B: Hash + Eq>(assignment: &[A], truth: &[B]) -> Result<f64> {
    if assignment.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: assignment.len(),
            found: truth.len(),
        });
    }
    if assignment.is_empty() {
        return Err(Error::InsufficientData(
            "purity of an empty clustering is undefined".into(),
        ));
    }
    let mut table: HashMap<&A, HashMap<&B, usize>> = HashMap::new();
    for (a, b) in assignment.iter().zip(truth) {
        *table.entry(a).or_default().entry(b).or_default() += 1;
    }
    let majority: usize = table
        .values()
        .map(|m| m.values().copied().max().unwrap_or(0))
        .sum();
    Ok(majority as f64 / assignment.len() as f64)
}

/// Majority truth label of each cluster; ties go to the smallest label.
pub fn majority_mapping<C: Ord + Copy, T: Ord + Clone>(
    assignment: &[Option<C>],
    truth: &[T],
) -> BTreeMap<C, T> {
    let mut votes: BTreeMap<C, BTreeMap<&T, usize>> = BTreeMap::new();
    for (c, t) in assignment.iter().zip(truth) {
        if let Some(c) = c {
            *votes.entry(*c).or_default().entry(t).or_default() += 1;
        }
    }
    votes
        .into_iter()
        .filter_map(|(c, counts)| {
            let best = counts.values().copied().max()?;
            counts
                .into_iter()
                .find(|&(_, n)| n == best)
                .map(|(t, _)| (c, t.clone()))
        })
        .collect()
}

/// Every record ever mapped to each grid, for summing densities by brute force.
#[derive(Debug, Clone, Default)]
pub struct DensityOracle {
    records: HashMap<GridCoordinate, Vec<Tick>>,
}

impl DensityOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, g: GridCoordinate, tick: Tick) {
        self.records.entry(g).or_default().push(tick);
    }

    /// Forget a grid's records, mirroring a sporadic deletion.
    pub fn forget(&mut self, g: &GridCoordinate) {
        self.records.remove(g);
    }

    pub fn grids(&self) -> impl Iterator<Item = &GridCoordinate> {
        self.records.keys()
    }

    pub fn record_count(&self) -> usize {
        self.records.values().map(Vec::len).sum()
    }
}

/// Terms smaller than this are left out of oracle sums. Even 10^9 of them
/// stay far below any tolerance the audits use.
pub const ORACLE_NEGLIGIBLE: f64 = 1e-30;

/// `sum over x in E(g) of lambda^(t - T(x))`, skipping records so old that
/// their term is below [`ORACLE_NEGLIGIBLE`].
pub fn oracle_density(oracle: &DensityOracle, g: &GridCoordinate, t: Tick, lambda: f64) -> f64 {
    let horizon = if lambda < 1.0 {
        (ORACLE_NEGLIGIBLE.ln() / lambda.ln()).ceil() as Tick
    } else {
        Tick::MAX
    };
    oracle.records.get(g).map_or(0.0, |ticks| {
        // ticks arrive in order, so the live ones form a suffix
        let start = ticks.partition_point(|&arrival| t.saturating_sub(arrival) > horizon);
        ticks[start..]
            .iter()
            .map(|&arrival| {
                assert!(
                    arrival <= t,
                    "oracle queried at {t} before a record at {arrival}"
                );
                decay_factor(t - arrival, lambda)
            })
            .sum()
    })
}

/// Largest absolute difference between engine and oracle densities over
/// the union of grids either side knows about.
pub fn oracle_discrepancy(
    state: &ClusteringState,
    oracle: &DensityOracle,
) -> (f64, Option<GridCoordinate>) {
    let list = state.grid_list();
    let (now, lambda) = (list.now(), list.params().lambda);
    let mut worst = (0.0, None);
    let engine = list.coordinates();
    for g in engine.chain(oracle.grids().filter(|g| !list.contains(g))) {
        let diff = (list.density(g) - oracle_density(oracle, g, now, lambda)).abs();
        if diff > worst.0 || (diff.is_nan() && worst.1.is_none()) {
            worst = (diff, Some(g.clone()));
        }
    }
    worst
}

/// Outcome of replaying a stream against the brute-force oracle.
#[derive(Debug, Clone, Default)]
pub struct AuditReport {
    pub ticks: u64,
    pub offline_phases: u64,
    pub max_discrepancy: f64,
    pub worst_grid: Option<GridCoordinate>,
    /// Largest total density seen at any tick, and the bound it must respect.
    pub max_total_density: f64,
    pub total_density_bound: f64,
    pub removals: usize,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Replay `stream` tick by tick, checking after every tick that the total
/// density respects `1/(1-lambda)` and, after every offline phase, that
/// every grid's density matches the oracle within `tolerance` and the
/// clustering invariants hold.
pub fn audit_stream<'a>(
    stream: impl IntoIterator<Item = &'a DataRecord>,
    geom: GridGeometry,
    params: DecayParams,
    tolerance: f64,
) -> Result<(ClusteringState, AuditReport)> {
    let mut state = ClusteringState::with_geometry(geom, params)?;
    let mut oracle = DensityOracle::new();
    let mut report = AuditReport {
        total_density_bound: params.max_total_density() + 1e-9,
        ..Default::default()
    };
    for x in stream {
        if x.tick < state.now() {
            return Err(Error::TimeReversed {
                earlier: state.now(),
                later: x.tick,
            });
        }
        while state.now() < x.tick {
            audit_tick(&mut state, &mut oracle, &mut report, tolerance, None)?;
        }
        audit_tick(&mut state, &mut oracle, &mut report, tolerance, Some(x))?;
    }
    Ok((state, report))
}

fn audit_tick(
    state: &mut ClusteringState,
    oracle: &mut DensityOracle,
    report: &mut AuditReport,
    tolerance: f64,
    x: Option<&DataRecord>,
) -> Result<()> {
    let now = state.now();
    if let Some(x) = x {
        state.ingest(x)?;
        oracle.record(map_to_grid(x, state.geometry())?, x.tick);
    }
    let offline =
        state.offline_due() || (!state.is_initialized() && now == state.grid_list().params().gap);
    let before = state.removals().len();
    state.run_offline_phase();
    for r in &state.removals()[before..] {
        oracle.forget(&r.grid);
    }
    report.removals = state.removals().len();

    let total = state.grid_list().total_density();
    report.max_total_density = report.max_total_density.max(total);
    if total > report.total_density_bound {
        report.violations.push(format!(
            "tick {now}: total density {total} exceeds {}",
            report.total_density_bound
        ));
    }
    if offline {
        report.offline_phases += 1;
        let (diff, grid) = oracle_discrepancy(state, oracle);
        if diff > report.max_discrepancy || (diff.is_nan() && report.worst_grid.is_none()) {
            report.max_discrepancy = diff;
            report.worst_grid = grid.clone();
        }
        if !(diff <= tolerance) {
            let at = grid.map_or_else(String::new, |g| format!(" at {g}"));
            report.violations.push(format!(
                "tick {now}: density differs from oracle by {diff:e}{at}"
            ));
        }
        if let Err(e) = state.check_invariants() {
            report.violations.push(format!("tick {now}: {e}"));
        }
    }
    state.advance_tick();
    report.ticks += 1;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlgorithmRow {
    pub name: String,
    pub correct: u64,
    pub incorrect: u64,
    pub accuracy: Percentage,
}

impl AlgorithmRow {
    pub fn from_counts(name: impl Into<String>, correct: u64, incorrect: u64) -> Result<Self> {
        let accuracy = accuracy(correct, correct + incorrect)?;
        Ok(Self {
            name: name.into(),
            correct,
            incorrect,
            accuracy,
        })
    }

    fn key(&self) -> String {
        self.name
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase()
    }
}

/// Per-algorithm classification counts laid out like a results table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalReport {
    pub rows: Vec<AlgorithmRow>,
}

pub const KMEANS_ROW: &str = "Simple K-means";
pub const DSTREAM_ROW: &str = "D-stream";

impl EvalReport {
    /// Report with one K-means and one D-Stream row built from raw counts.
    pub fn from_counts(kmeans: (u64, u64), dstream: (u64, u64)) -> Result<Self> {
        Ok(Self {
            rows: vec![
                AlgorithmRow::from_counts(KMEANS_ROW, kmeans.0, kmeans.1)?,
                AlgorithmRow::from_counts(DSTREAM_ROW, dstream.0, dstream.1)?,
            ],
        })
    }

    pub fn row(&self, name: &str) -> Option<&AlgorithmRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn render_table(&self) -> String {
        let headers = [
            "Cluster Algorithm",
            "Correctly Classified Instance",
            "Incorrectly Classified Instance",
            "Prediction Accuracy",
        ];
        let cells: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.name.clone(),
                    r.correct.to_string(),
                    r.incorrect.to_string(),
                    r.accuracy.to_string(),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..4)
            .map(|i| {
                cells
                    .iter()
                    .map(|c| c[i].len())
                    .chain([headers[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |parts: &[&str]| {
            let padded: Vec<String> = parts
                .iter()
                .zip(&widths)
                .map(|(p, &w)| format!("{p:<w$}"))
                .collect();
            padded.join(" | ").trim_end().to_string() + "\n"
        };
        let mut out = line(&headers);
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        out.push_str(&line(&rule.iter().map(String::as_str).collect::<Vec<_>>()));
        for c in &cells {
            out.push_str(&line(&c.iter().map(String::as_str).collect::<Vec<_>>()));
        }
        out
    }

    /// One `key=value` per line.
    pub fn render_kv(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let k = r.key();
            out.push_str(&format!("{k}.name={}\n", r.name));
            out.push_str(&format!("{k}.correct={}\n", r.correct));
            out.push_str(&format!("{k}.incorrect={}\n", r.incorrect));
            out.push_str(&format!("{k}.accuracy={}\n", r.accuracy));
        }
        out
    }
}

/// A labeled stream fed to [`compare`].
#[derive(Debug, Clone, Copy)]
pub struct LabeledData<'a> {
    pub records: &'a [DataRecord],
    pub truth: &'a [String],
}

#[derive(Debug, Clone)]
pub struct ComparisonSettings {
    pub geometry: GridGeometry,
    pub decay: DecayParams,
    pub kmeans: KMeansConfig,
    /// How many cells away a point may sit from a labeled grid and still join it.
    pub radius: u32,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: EvalReport,
    pub kmeans_purity: f64,
    pub dstream_purity: f64,
    pub dstream_clusters: usize,
    /// Points D-Stream left outside every cluster.
    pub dstream_unassigned: usize,
}

impl Comparison {
    pub fn render_kv(&self) -> String {
        let mut out = self.report.render_kv();
        out.push_str(&format!("simplekmeans.purity={:.4}\n", self.kmeans_purity));
        out.push_str(&format!("dstream.purity={:.4}\n", self.dstream_purity));
        out.push_str(&format!("dstream.clusters={}\n", self.dstream_clusters));
        out.push_str(&format!("dstream.unassigned={}\n", self.dstream_unassigned));
        out.push_str("mapping=majority\n");
        out
    }
}

fn score<C: Ord + Copy>(assignment: &[Option<C>], truth: &[String]) -> (u64, u64) {
    let mapping = majority_mapping(assignment, truth);
    let correct = assignment
        .iter()
        .zip(truth)
        .filter(|(c, t)| c.and_then(|c| mapping.get(&c)) == Some(*t))
        .count() as u64;
    (correct, assignment.len() as u64 - correct)
}

/// Run both algorithms on the same records, map clusters to classes by
/// majority label and tabulate how many records each gets right.
pub fn compare(data: LabeledData<'_>, settings: &ComparisonSettings) -> Result<Comparison> {
    if data.truth.len() != data.records.len() {
        return Err(Error::Data(format!(
            "{} labels for {} records",
            data.truth.len(),
            data.records.len()
        )));
    }
    if data.records.is_empty() {
        return Err(Error::InsufficientData(
            "comparison needs labeled records".into(),
        ));
    }

    let (state, _) = run_dstream(data.records, settings.geometry.clone(), settings.decay)?;
    let grids = GridLabels::from_state(&state);
    let dstream_assignment = data
        .records
        .iter()
        .map(|r| grids.lookup(&r.values, settings.radius))
        .collect::<Result<Vec<_>>>()?;

    let points: Vec<Vec<f64>> = data.records.iter().map(|r| r.values.clone()).collect();
    let model = kmeans_fit(&points, &settings.kmeans)?;
    let kmeans_assignment: Vec<Option<usize>> = model.assignment.iter().map(|&a| Some(a)).collect();

    let report = EvalReport {
        rows: vec![
            {
                let (c, i) = score(&kmeans_assignment, data.truth);
                AlgorithmRow::from_counts(KMEANS_ROW, c, i)?
            },
            {
                let (c, i) = score(&dstream_assignment, data.truth);
                AlgorithmRow::from_counts(DSTREAM_ROW, c, i)?
            },
        ],
    };
    Ok(Comparison {
        report,
        kmeans_purity: purity(&kmeans_assignment, data.truth)?,
        dstream_purity: purity(&dstream_assignment, data.truth)?,
        dstream_clusters: state.cluster_count(),
        dstream_unassigned: dstream_assignment.iter().filter(|a| a.is_none()).count(),
    })
}
