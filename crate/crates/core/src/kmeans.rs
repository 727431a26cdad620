//! Batch K-means (Lloyd iterations) used as the comparison baseline.

use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 2,
            max_iter: 100,
            tol: 1e-9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub sse: f64,
    /// Assign/recompute rounds performed.
    pub iterations: usize,
    /// SSE after each assignment step, in order.
    pub sse_history: Vec<f64>,
    pub converged: bool,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn predict(&self, point: &[f64]) -> usize {
        nearest(point, &self.centroids).0
    }

    /// A model known only by its centroids, e.g. reloaded from disk.
    pub fn from_centroids(centroids: Vec<Vec<f64>>) -> Self {
        Self {
            centroids,
            assignment: Vec::new(),
            sse: 0.0,
            iterations: 0,
            sse_history: Vec::new(),
            converged: true,
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

// (index, squared distance) of the nearest centroid; ties go to the lower index
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Index of the nearest centroid for every point (Euclidean; ties to the
/// lowest index).
pub fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points.iter().map(|p| nearest(p, centroids).0).collect()
}

pub fn sse(points: &[Vec<f64>], centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum()
}

/// Mean of the points assigned to each cluster. A cluster left without
/// points is reseeded to the point farthest from its previous centroid,
/// skipping points that already coincide with a centroid.
pub fn recompute_centroids(
    points: &[Vec<f64>],
    assignment: &[usize],
    previous: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let k = previous.len();
    let d = previous.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    let mut centroids: Vec<Option<Vec<f64>>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| (n > 0).then(|| s.into_iter().map(|x| x / n as f64).collect()))
        .collect();

    for i in 0..k {
        if centroids[i].is_some() {
            continue;
        }
        let taken: Vec<&Vec<f64>> = centroids.iter().flatten().collect();
        let far = points
            .iter()
            .filter(|p| !taken.iter().any(|c| c.as_slice() == p.as_slice()))
            .map(|p| (p, squared_distance(p, &previous[i])))
            .fold(None::<(&Vec<f64>, f64)>, |best, cand| match best {
                Some(b) if b.1 >= cand.1 => Some(b),
                _ => Some(cand),
            });
        centroids[i] = Some(far.map_or_else(|| previous[i].clone(), |(p, _)| p.clone()));
    }
    centroids.into_iter().flatten().collect()
}

fn distinct_points(points: &[Vec<f64>]) -> Vec<&Vec<f64>> {
    let mut keyed: Vec<(Vec<u64>, &Vec<f64>)> = points
        .iter()
        .map(|p| (p.iter().map(|x| (x + 0.0).to_bits()).collect(), p))
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.dedup_by(|a, b| a.0 == b.0);
    keyed.into_iter().map(|(_, p)| p).collect()
}

fn validate(points: &[Vec<f64>], k: usize) -> Result<()> {
    let first = points
        .first()
        .ok_or_else(|| Error::InsufficientData("k-means needs at least one point".into()))?;
    if first.is_empty() {
        return Err(Error::InsufficientData("points have no dimensions".into()));
    }
    if let Some(p) = points.iter().find(|p| p.len() != first.len()) {
        return Err(Error::DimensionMismatch {
            expected: first.len(),
            found: p.len(),
        });
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Data("points contain non-finite values".into()));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let distinct = distinct_points(points).len();
    if k > distinct {
        return Err(Error::InsufficientData(format!(
            "k = {k} exceeds the {distinct} distinct points"
        )));
    }
    Ok(())
}

/// Seeded initialization: `k` distinct points drawn uniformly without
/// replacement (partial Fisher-Yates over the distinct points in sorted order).
pub fn initial_centroids(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<Vec<Vec<f64>>> {
    validate(points, cfg.k)?;
    let mut pool = distinct_points(points);
    let mut rng = StreamRng::new(cfg.seed);
    for i in 0..cfg.k {
        let j = i + rng.below((pool.len() - i) as u64) as usize;
        pool.swap(i, j);
    }
    Ok(pool[..cfg.k].iter().map(|p| (*p).clone()).collect())
}

pub fn kmeans_fit(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<KMeansModel> {
    let init = initial_centroids(points, cfg)?;
    kmeans_fit_from(points, init, cfg)
}

/// Lloyd iterations from explicit starting centroids.
pub fn kmeans_fit_from(
    points: &[Vec<f64>],
    init: Vec<Vec<f64>>,
    cfg: &KMeansConfig,
) -> Result<KMeansModel> {
    validate(points, init.len())?;
    if init.iter().any(|c| c.len() != points[0].len()) {
        return Err(Error::DimensionMismatch {
            expected: points[0].len(),
            found: init
                .iter()
                .map(Vec::len)
                .find(|&l| l != points[0].len())
                .unwrap_or(0),
        });
    }
    if cfg.max_iter == 0 {
        return Err(Error::InvalidParameter(
            "max_iter must be at least 1".into(),
        ));
    }
    let mut centroids = init;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        let assignment = assign(points, &centroids);
        history.push(sse(points, &centroids, &assignment));
        let next = recompute_centroids(points, &assignment, &centroids);
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        iterations += 1;
        if shift < cfg.tol {
            converged = true;
            break;
        }
    }

    let mut assignment = assign(points, &centroids);
    // the last recompute can in principle strand a centroid; repair it
    for _ in 0..centroids.len() {
        let mut counts = vec![0usize; centroids.len()];
        assignment.iter().for_each(|&a| counts[a] += 1);
        if counts.iter().all(|&n| n > 0) {
            break;
        }
        centroids = recompute_centroids(points, &assignment, &centroids);
        assignment = assign(points, &centroids);
    }
    let total = sse(points, &centroids, &assignment);
    Ok(KMeansModel {
        centroids,
        assignment,
        sse: total,
        iterations,
        sse_history: history,
        converged,
    })
}
