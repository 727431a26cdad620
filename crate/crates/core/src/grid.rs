//! Records, grid geometry, coordinate mapping and the decay arithmetic shared
//! by the online and offline components.
//!
//! Every normalized dimension `[0, 1]` is split into `p_i` equal half-open
//! cells; a value of exactly `1.0` lands in the top cell so the whole unit
//! cube is covered. Two grids are neighbors when they agree in every
//! dimension but one, where their indices differ by exactly one.

use std::fmt;

use crate::error::{Error, Result};

/// Discrete time stamp. One tick elapses per loop iteration of the stream.
pub type Tick = u64;

/// One timestamped, normalized measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DataRecord {
    pub values: Vec<f64>,
    pub tick: Tick,
}

impl DataRecord {
    pub fn new(values: Vec<f64>, tick: Tick) -> Self {
        Self { values, tick }
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }
}

/// Uniform partitioning of the unit cube into `N = p_1 * ... * p_d` cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridGeometry {
    partitions: Vec<u32>,
    total: u64,
}

impl GridGeometry {
    pub fn new(partitions: Vec<u32>) -> Result<Self> {
        if partitions.is_empty() {
            return Err(Error::InvalidGeometry(
                "at least one dimension is required".into(),
            ));
        }
        if let Some(i) = partitions.iter().position(|&p| p == 0) {
            return Err(Error::InvalidGeometry(format!(
                "dimension {i} has zero partitions"
            )));
        }
        let total = partitions
            .iter()
            .try_fold(1u64, |acc, &p| acc.checked_mul(u64::from(p)))
            .ok_or_else(|| Error::InvalidGeometry("total grid count overflows 64 bits".into()))?;
        Ok(Self { partitions, total })
    }

    /// Same number of partitions in every dimension.
    pub fn uniform(dims: usize, per_dim: u32) -> Result<Self> {
        Self::new(vec![per_dim; dims])
    }

    pub fn dims(&self) -> usize {
        self.partitions.len()
    }

    pub fn partitions(&self) -> &[u32] {
        &self.partitions
    }

    /// Total number of grids `N`.
    pub fn total_grids(&self) -> u64 {
        self.total
    }

    pub fn contains(&self, g: &GridCoordinate) -> bool {
        g.0.len() == self.partitions.len() && g.0.iter().zip(&self.partitions).all(|(&j, &p)| j < p)
    }

    /// Lower corner and width of a cell along every dimension.
    pub fn cell_bounds(&self, g: &GridCoordinate) -> Vec<(f64, f64)> {
        g.0.iter()
            .zip(&self.partitions)
            .map(|(&j, &p)| (f64::from(j) / f64::from(p), 1.0 / f64::from(p)))
            .collect()
    }
}

/// Index `(j_1, ..., j_d)` of one density grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridCoordinate(pub Vec<u32>);

impl GridCoordinate {
    pub fn new(coords: Vec<u32>) -> Self {
        Self(coords)
    }

    pub fn coords(&self) -> &[u32] {
        &self.0
    }

    /// Largest per-dimension index difference.
    pub fn chebyshev(&self, other: &GridCoordinate) -> u32 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| a.abs_diff(b))
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for GridCoordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, j) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, ")")
    }
}

/// Decay factor, offline period and the dense/sparse threshold multipliers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayParams {
    pub lambda: f64,
    pub gap: u64,
    pub c_m: f64,
    pub c_l: f64,
}

impl DecayParams {
    pub const DEFAULT_LAMBDA: f64 = 0.998;
    pub const DEFAULT_CM: f64 = 3.0;
    pub const DEFAULT_CL: f64 = 0.8;

    pub fn new(lambda: f64, gap: u64, c_m: f64, c_l: f64) -> Result<Self> {
        let params = Self {
            lambda,
            gap,
            c_m,
            c_l,
        };
        params.validate()?;
        Ok(params)
    }

    /// Parameters with `gap` derived from the other three.
    pub fn with_default_gap(lambda: f64, c_m: f64, c_l: f64) -> Result<Self> {
        let probe = Self {
            lambda,
            gap: 1,
            c_m,
            c_l,
        };
        probe.validate()?;
        Self::new(lambda, default_gap(lambda, c_m, c_l), c_m, c_l)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "decay factor must lie in (0, 1), got {}",
                self.lambda
            )));
        }
        if self.gap == 0 {
            return Err(Error::InvalidParameter("gap must be at least 1".into()));
        }
        if !(self.c_m > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "c_m must exceed 1, got {}",
                self.c_m
            )));
        }
        if !(self.c_l > 0.0 && self.c_l < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "c_l must lie in (0, 1), got {}",
                self.c_l
            )));
        }
        Ok(())
    }

    /// Upper bound on the total density of a stream with one record per tick.
    pub fn max_total_density(&self) -> f64 {
        1.0 / (1.0 - self.lambda)
    }
}

impl Default for DecayParams {
    fn default() -> Self {
        let (lambda, c_m, c_l) = (Self::DEFAULT_LAMBDA, Self::DEFAULT_CM, Self::DEFAULT_CL);
        Self {
            lambda,
            gap: default_gap(lambda, c_m, c_l),
            c_m,
            c_l,
        }
    }
}

/// `max(1, floor(log(c_l / c_m) / log(lambda)))`: the shortest time in which
/// a grid sitting on the dense threshold can decay down to the sparse one.
pub fn default_gap(lambda: f64, c_m: f64, c_l: f64) -> u64 {
    let ticks = ((c_l / c_m).ln() / lambda.ln()).floor();
    if ticks.is_finite() && ticks >= 1.0 {
        ticks as u64
    } else {
        1
    }
}

/// Cell index of a normalized record; `x_i = 1.0` maps into the top cell.
pub fn map_to_grid(x: &DataRecord, geom: &GridGeometry) -> Result<GridCoordinate> {
    map_values(&x.values, geom)
}

pub fn map_values(values: &[f64], geom: &GridGeometry) -> Result<GridCoordinate> {
    if values.len() != geom.dims() {
        return Err(Error::DimensionMismatch {
            expected: geom.dims(),
            found: values.len(),
        });
    }
    values
        .iter()
        .zip(geom.partitions())
        .enumerate()
        .map(|(dim, (&v, &p))| {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange { dim, value: v });
            }
            let j = (v * f64::from(p)).floor() as u32;
            Ok(j.min(p - 1))
        })
        .collect::<Result<Vec<_>>>()
        .map(GridCoordinate)
}

/// `lambda^(t_now - t_arrival)`.
pub fn decay_coefficient(t_arrival: Tick, t_now: Tick, lambda: f64) -> Result<f64> {
    if t_now < t_arrival {
        return Err(Error::TimeReversed {
            earlier: t_arrival,
            later: t_now,
        });
    }
    Ok(decay_factor(t_now - t_arrival, lambda))
}

#[inline]
pub(crate) fn decay_factor(elapsed: Tick, lambda: f64) -> f64 {
    if elapsed == 0 {
        1.0
    } else {
        lambda.powf(elapsed as f64)
    }
}

/// In-range grids differing from `g` by one step in exactly one dimension,
/// in ascending coordinate order.
pub fn neighbors(g: &GridCoordinate, geom: &GridGeometry) -> Vec<GridCoordinate> {
    let mut out = Vec::with_capacity(2 * g.0.len());
    for (dim, (&j, &p)) in g.0.iter().zip(geom.partitions()).enumerate() {
        if j > 0 {
            let mut h = g.0.clone();
            h[dim] = j - 1;
            out.push(GridCoordinate(h));
        }
        if j + 1 < p {
            let mut h = g.0.clone();
            h[dim] = j + 1;
            out.push(GridCoordinate(h));
        }
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(c: &[u32]) -> GridCoordinate {
        GridCoordinate(c.to_vec())
    }

    #[test]
    fn maps_lower_corner() {
        let geom = GridGeometry::uniform(2, 10).unwrap();
        let x = DataRecord::new(vec![0.0, 0.0], 0);
        assert_eq!(map_to_grid(&x, &geom).unwrap(), g(&[0, 0]));
    }

    #[test]
    fn maps_by_floor() {
        let geom = GridGeometry::uniform(2, 10).unwrap();
        let x = DataRecord::new(vec![0.25, 0.91], 0);
        assert_eq!(map_to_grid(&x, &geom).unwrap(), g(&[2, 9]));
    }

    #[test]
    fn upper_boundary_clamps_into_top_cell() {
        let geom = GridGeometry::uniform(1, 10).unwrap();
        let x = DataRecord::new(vec![1.0], 0);
        assert_eq!(map_to_grid(&x, &geom).unwrap(), g(&[9]));
    }

    #[test]
    fn mapping_rejects_bad_records() {
        let geom = GridGeometry::uniform(2, 10).unwrap();
        assert!(matches!(
            map_to_grid(&DataRecord::new(vec![0.5], 0), &geom),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
        assert!(matches!(
            map_to_grid(&DataRecord::new(vec![0.5, 1.5], 0), &geom),
            Err(Error::OutOfRange { dim: 1, .. })
        ));
        assert!(map_to_grid(&DataRecord::new(vec![f64::NAN, 0.1], 0), &geom).is_err());
    }

    #[test]
    fn geometry_validation() {
        assert!(GridGeometry::new(vec![]).is_err());
        assert!(GridGeometry::new(vec![3, 0]).is_err());
        assert!(GridGeometry::new(vec![u32::MAX, u32::MAX, u32::MAX]).is_err());
        assert_eq!(GridGeometry::new(vec![3, 4, 5]).unwrap().total_grids(), 60);
    }

    #[test]
    fn decay_examples() {
        assert_eq!(decay_coefficient(5, 5, 0.5).unwrap(), 1.0);
        assert_eq!(decay_coefficient(5, 8, 0.5).unwrap(), 0.125);
        // 0.998^1000 evaluated at 40 significant digits.
        let expected = 0.135_064_522_446_683_6;
        assert!((decay_coefficient(0, 1000, 0.998).unwrap() - expected).abs() < 1e-13);
        assert!(matches!(
            decay_coefficient(8, 5, 0.5),
            Err(Error::TimeReversed { .. })
        ));
    }

    #[test]
    fn default_gap_for_default_params() {
        // log(0.8 / 3) / log(0.998) = 660.2168...
        assert_eq!(DecayParams::default().gap, 660);
        assert_eq!(default_gap(0.5, 3.0, 0.8), 1);
        assert_eq!(default_gap(0.9, 3.0, 0.8), 12);
    }

    #[test]
    fn params_validation() {
        assert!(DecayParams::new(1.0, 1, 3.0, 0.8).is_err());
        assert!(DecayParams::new(0.5, 0, 3.0, 0.8).is_err());
        assert!(DecayParams::new(0.5, 1, 1.0, 0.8).is_err());
        assert!(DecayParams::new(0.5, 1, 3.0, 1.0).is_err());
        assert!(DecayParams::new(0.5, 1, 3.0, 0.8).is_ok());
    }

    #[test]
    fn neighbor_examples() {
        let geom = GridGeometry::uniform(2, 2).unwrap();
        assert_eq!(neighbors(&g(&[0, 0]), &geom), vec![g(&[0, 1]), g(&[1, 0])]);

        let geom = GridGeometry::uniform(2, 3).unwrap();
        assert_eq!(
            neighbors(&g(&[1, 1]), &geom),
            vec![g(&[0, 1]), g(&[1, 0]), g(&[1, 2]), g(&[2, 1])]
        );

        let geom = GridGeometry::uniform(1, 1).unwrap();
        assert!(neighbors(&g(&[0]), &geom).is_empty());
    }

    fn geometry_and_point() -> impl Strategy<Value = (Vec<u32>, Vec<f64>)> {
        prop::collection::vec(1u32..12, 1..4).prop_flat_map(|parts| {
            let d = parts.len();
            (Just(parts), prop::collection::vec(0.0f64..=1.0, d))
        })
    }

    proptest! {
        #[test]
        fn mapped_cell_contains_point((parts, x) in geometry_and_point()) {
            let geom = GridGeometry::new(parts).unwrap();
            let cell = map_values(&x, &geom).unwrap();
            prop_assert!(geom.contains(&cell));
            for (&v, (lo, w)) in x.iter().zip(geom.cell_bounds(&cell)) {
                // half-open cells, except the closed top boundary
                prop_assert!(v >= lo - 1e-12);
                prop_assert!(v < lo + w + 1e-12);
            }
        }

        #[test]
        fn neighbor_relation_is_symmetric((parts, x) in geometry_and_point()) {
            let geom = GridGeometry::new(parts).unwrap();
            let cell = map_values(&x, &geom).unwrap();
            let around = neighbors(&cell, &geom);
            prop_assert!(around.len() <= 2 * geom.dims());
            for h in &around {
                prop_assert!(geom.contains(h));
                prop_assert!(neighbors(h, &geom).contains(&cell));
            }
        }

        #[test]
        fn decay_is_a_semigroup(
            t in 0u64..10_000, a in 0u64..5_000, b in 0u64..5_000,
            lambda in 0.01f64..0.9999,
        ) {
            let whole = decay_coefficient(t, t + a + b, lambda).unwrap();
            let split = decay_coefficient(t, t + a, lambda).unwrap()
                * decay_coefficient(t + a, t + a + b, lambda).unwrap();
            prop_assert!((whole - split).abs() <= 1e-12);
        }

        #[test]
        fn decay_strictly_decreases(t in 0u64..1000, step in 1u64..50, lambda in 0.5f64..0.999) {
            let now = decay_coefficient(0, t, lambda).unwrap();
            let later = decay_coefficient(0, t + step, lambda).unwrap();
            prop_assert!(later < now);
        }
    }
}
