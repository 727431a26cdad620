//! Online density maintenance.
//!
//! Each occupied grid keeps a characteristic vector whose density is stored
//! as of its last update tick and decayed lazily: `D <- lambda^dt * D + 1`
//! on every arriving record. Between updates the true density at `t` is
//! `lambda^(t - t_g) * D`, which equals the sum of all per-record decay
//! coefficients because decay composes multiplicatively.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{
    decay_factor, map_to_grid, DataRecord, DecayParams, GridCoordinate, GridGeometry, Tick,
};

/// Cluster identifier. Labels come from a monotone counter and are never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClusterLabel(pub u64);

impl fmt::Display for ClusterLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GridAttribute {
    Sparse,
    Transitional,
    Dense,
}

impl fmt::Display for GridAttribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridAttribute::Sparse => "sparse",
            GridAttribute::Transitional => "transitional",
            GridAttribute::Dense => "dense",
        })
    }
}

/// Per-grid bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicVector {
    /// Tick of the most recent density update.
    pub last_update: Tick,
    /// Tick at which the grid was last deleted as sporadic, 0 if never.
    pub last_removal: Tick,
    /// Density as of `last_update`.
    pub density: f64,
    /// `None` is NO_CLASS.
    pub label: Option<ClusterLabel>,
    /// Inspection tick at which the grid was marked sporadic.
    pub sporadic_since: Option<Tick>,
}

impl CharacteristicVector {
    /// A vector holding `density` as of tick `at`.
    pub fn with_density(density: f64, at: Tick) -> Self {
        Self {
            density,
            ..Self::fresh(at, 0)
        }
    }

    fn fresh(now: Tick, last_removal: Tick) -> Self {
        Self {
            last_update: now,
            last_removal,
            density: 0.0,
            label: None,
            sporadic_since: None,
        }
    }

    pub fn is_sporadic(&self) -> bool {
        self.sporadic_since.is_some()
    }
}

/// `lambda^(t_now - last_update) * density`, without touching the vector.
pub fn decayed_density(cv: &CharacteristicVector, t_now: Tick, lambda: f64) -> Result<f64> {
    if t_now < cv.last_update {
        return Err(Error::TimeReversed {
            earlier: cv.last_update,
            later: t_now,
        });
    }
    Ok(decay_factor(t_now - cv.last_update, lambda) * cv.density)
}

/// `c_m / (N (1 - lambda))`.
pub fn dense_threshold(geom: &GridGeometry, params: &DecayParams) -> f64 {
    params.c_m / (geom.total_grids() as f64 * (1.0 - params.lambda))
}

/// `c_l / (N (1 - lambda))`.
pub fn sparse_threshold(geom: &GridGeometry, params: &DecayParams) -> f64 {
    params.c_l / (geom.total_grids() as f64 * (1.0 - params.lambda))
}

/// Classify a density value against the two thresholds.
pub fn classify_density(density: f64, geom: &GridGeometry, params: &DecayParams) -> GridAttribute {
    if density >= dense_threshold(geom, params) {
        GridAttribute::Dense
    } else if density <= sparse_threshold(geom, params) {
        GridAttribute::Sparse
    } else {
        GridAttribute::Transitional
    }
}

pub fn grid_attribute(
    cv: &CharacteristicVector,
    t_now: Tick,
    geom: &GridGeometry,
    params: &DecayParams,
) -> Result<GridAttribute> {
    Ok(classify_density(
        decayed_density(cv, t_now, params.lambda)?,
        geom,
        params,
    ))
}

/// Density a grid would hold at `now` had it received records at the sparse
/// rate ever since `since`: `c_l (1 - lambda^(now - since + 1)) / (N (1 - lambda))`.
pub fn sporadic_bound(since: Tick, now: Tick, geom: &GridGeometry, params: &DecayParams) -> f64 {
    let elapsed = now.saturating_sub(since) + 1;
    params.c_l * (1.0 - decay_factor(elapsed, params.lambda))
        / (geom.total_grids() as f64 * (1.0 - params.lambda))
}

/// What happened to the target grid when a record was ingested.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub grid: GridCoordinate,
    pub created: bool,
    /// Set when the grid re-entered after a sporadic deletion at that tick.
    /// Its earlier history is gone: the density restarts from zero.
    pub recreated_after: Option<Tick>,
}

/// Evidence kept for every sporadic deletion.
#[derive(Debug, Clone, PartialEq)]
pub struct Removal {
    pub grid: GridCoordinate,
    pub tick: Tick,
    pub marked_at: Tick,
    pub density_at_mark: f64,
    pub bound_at_mark: f64,
    pub density_at_removal: f64,
    pub bound_at_removal: f64,
}

/// Sparse map from occupied grids to their characteristic vectors, plus the clock.
#[derive(Debug, Clone)]
pub struct GridList {
    grids: BTreeMap<GridCoordinate, CharacteristicVector>,
    removed_at: HashMap<GridCoordinate, Tick>,
    // (density, bound) observed when a grid was marked, keyed by grid
    mark_evidence: HashMap<GridCoordinate, (f64, f64)>,
    geometry: GridGeometry,
    params: DecayParams,
    now: Tick,
}

impl GridList {
    pub fn new(geometry: GridGeometry, params: DecayParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            grids: BTreeMap::new(),
            removed_at: HashMap::new(),
            mark_evidence: HashMap::new(),
            geometry,
            params,
            now: 0,
        })
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn params(&self) -> &DecayParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    pub fn get(&self, g: &GridCoordinate) -> Option<&CharacteristicVector> {
        self.grids.get(g)
    }

    pub(crate) fn get_mut(&mut self, g: &GridCoordinate) -> Option<&mut CharacteristicVector> {
        self.grids.get_mut(g)
    }

    pub fn contains(&self, g: &GridCoordinate) -> bool {
        self.grids.contains_key(g)
    }

    /// Live grids in ascending coordinate order.
    pub fn iter(&self) -> impl Iterator<Item = (&GridCoordinate, &CharacteristicVector)> {
        self.grids.iter()
    }

    pub fn coordinates(&self) -> impl Iterator<Item = &GridCoordinate> {
        self.grids.keys()
    }

    /// Add one record observed at the current tick.
    pub fn ingest_record(&mut self, x: &DataRecord) -> Result<Ingested> {
        if x.tick != self.now {
            return Err(Error::TickMismatch {
                expected: self.now,
                found: x.tick,
            });
        }
        let grid = map_to_grid(x, &self.geometry)?;
        let now = self.now;
        let lambda = self.params.lambda;
        let mut created = false;
        let mut recreated_after = None;
        let cv = match self.grids.get_mut(&grid) {
            Some(cv) => cv,
            None => {
                created = true;
                let last_removal = self.removed_at.get(&grid).copied().unwrap_or(0);
                recreated_after = self.removed_at.get(&grid).copied();
                self.grids
                    .entry(grid.clone())
                    .or_insert_with(|| CharacteristicVector::fresh(now, last_removal))
            }
        };
        cv.density = decay_factor(now - cv.last_update, lambda) * cv.density + 1.0;
        cv.last_update = now;
        cv.sporadic_since = None;
        self.mark_evidence.remove(&grid);
        Ok(Ingested {
            grid,
            created,
            recreated_after,
        })
    }

    /// Put a characteristic vector back into the list, e.g. when restoring
    /// a snapshot. Replaces any vector already stored for `g`.
    pub fn insert_vector(&mut self, g: GridCoordinate, cv: CharacteristicVector) -> Result<()> {
        if !self.geometry.contains(&g) {
            return Err(Error::InvalidGeometry(format!(
                "grid {g} lies outside the geometry"
            )));
        }
        if cv.last_update > self.now {
            return Err(Error::TimeReversed {
                earlier: cv.last_update,
                later: self.now,
            });
        }
        if !(cv.density >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "negative density {}",
                cv.density
            )));
        }
        self.grids.insert(g, cv);
        Ok(())
    }

    /// Move the clock forward without ingesting anything.
    pub fn set_now(&mut self, now: Tick) -> Result<()> {
        if now < self.now {
            return Err(Error::TimeReversed {
                earlier: self.now,
                later: now,
            });
        }
        self.now = now;
        Ok(())
    }

    pub fn advance_tick(&mut self) {
        self.now += 1;
    }

    pub fn is_offline_tick(&self) -> bool {
        self.now.is_multiple_of(self.params.gap)
    }

    /// Density of `g` at the current tick; 0 for grids not in the list.
    pub fn density(&self, g: &GridCoordinate) -> f64 {
        self.grids
            .get(g)
            .map(|cv| decay_factor(self.now - cv.last_update, self.params.lambda) * cv.density)
            .unwrap_or(0.0)
    }

    /// Attribute of `g` at the current tick; absent grids are sparse.
    pub fn attribute(&self, g: &GridCoordinate) -> GridAttribute {
        classify_density(self.density(g), &self.geometry, &self.params)
    }

    pub fn dense_threshold(&self) -> f64 {
        dense_threshold(&self.geometry, &self.params)
    }

    pub fn sparse_threshold(&self) -> f64 {
        sparse_threshold(&self.geometry, &self.params)
    }

    pub fn total_density(&self) -> f64 {
        self.grids.keys().map(|g| self.density(g)).sum()
    }

    /// Sporadic-grid sweep, run at inspection ticks.
    ///
    /// A sparse grid whose density is below [`sporadic_bound`] is marked; a
    /// grid that was marked at the previous inspection, has received nothing
    /// since, and still satisfies the bound is deleted. Grids that stop
    /// qualifying lose their mark. Dense and transitional grids are never
    /// touched.
    pub fn detect_and_remove_sporadic(&mut self) -> Vec<Removal> {
        let now = self.now;
        let mut removals = Vec::new();
        let mut doomed = Vec::new();
        for (g, cv) in self.grids.iter_mut() {
            let density = decay_factor(now - cv.last_update, self.params.lambda) * cv.density;
            let bound = sporadic_bound(cv.last_update, now, &self.geometry, &self.params);
            let qualifies = classify_density(density, &self.geometry, &self.params)
                == GridAttribute::Sparse
                && density < bound;
            match (qualifies, cv.sporadic_since) {
                (true, Some(marked_at)) if marked_at < now => {
                    let (density_at_mark, bound_at_mark) = self
                        .mark_evidence
                        .get(g)
                        .copied()
                        .unwrap_or((f64::NAN, f64::NAN));
                    removals.push(Removal {
                        grid: g.clone(),
                        tick: now,
                        marked_at,
                        density_at_mark,
                        bound_at_mark,
                        density_at_removal: density,
                        bound_at_removal: bound,
                    });
                    doomed.push(g.clone());
                }
                (true, Some(_)) => {}
                (true, None) => {
                    cv.sporadic_since = Some(now);
                    self.mark_evidence.insert(g.clone(), (density, bound));
                }
                (false, _) => {
                    cv.sporadic_since = None;
                    self.mark_evidence.remove(g);
                }
            }
        }
        for g in doomed {
            self.grids.remove(&g);
            self.mark_evidence.remove(&g);
            self.removed_at.insert(g, now);
        }
        removals
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(parts: Vec<u32>, lambda: f64, gap: u64) -> GridList {
        let geom = GridGeometry::new(parts).unwrap();
        GridList::new(geom, DecayParams::new(lambda, gap, 3.0, 0.8).unwrap()).unwrap()
    }

    fn feed(list: &mut GridList, x: f64) {
        let tick = list.now();
        list.ingest_record(&DataRecord::new(vec![x], tick)).unwrap();
    }

    fn cv(density: f64, last_update: Tick) -> CharacteristicVector {
        CharacteristicVector {
            density,
            last_update,
            ..CharacteristicVector::fresh(0, 0)
        }
    }

    #[test]
    fn first_record_creates_unit_density() {
        let mut l = list(vec![10], 0.5, 1);
        let out = l.ingest_record(&DataRecord::new(vec![0.35], 0)).unwrap();
        assert!(out.created);
        assert_eq!(out.grid, GridCoordinate(vec![3]));
        assert_eq!(l.get(&out.grid).unwrap().density, 1.0);
    }

    #[test]
    fn lazy_update_matches_formula() {
        let mut l = list(vec![10], 0.5, 100);
        let g = GridCoordinate(vec![0]);
        // D = 1.25 at t_g = 2 (records at 0 and 2)
        feed(&mut l, 0.05);
        l.advance_tick();
        l.advance_tick();
        feed(&mut l, 0.05);
        assert_eq!(l.get(&g).unwrap().density, 1.25);
        l.advance_tick();
        l.advance_tick();
        feed(&mut l, 0.05);
        let stored = l.get(&g).unwrap();
        assert_eq!(stored.density, 1.3125);
        assert_eq!(stored.last_update, 4);
        // brute force: 0.5^4 + 0.5^2 + 0.5^0
        assert_eq!(stored.density, 0.0625 + 0.25 + 1.0);
    }

    #[test]
    fn ingest_touches_only_the_target_grid() {
        let mut l = list(vec![10], 0.5, 100);
        feed(&mut l, 0.05);
        l.advance_tick();
        feed(&mut l, 0.95);
        assert_eq!(l.get(&GridCoordinate(vec![0])).unwrap().last_update, 0);
        assert_eq!(l.get(&GridCoordinate(vec![0])).unwrap().density, 1.0);
    }

    #[test]
    fn ingest_errors() {
        let mut l = list(vec![10], 0.5, 100);
        assert!(matches!(
            l.ingest_record(&DataRecord::new(vec![0.5], 3)),
            Err(Error::TickMismatch {
                expected: 0,
                found: 3
            })
        ));
        assert!(matches!(
            l.ingest_record(&DataRecord::new(vec![-0.1], 0)),
            Err(Error::OutOfRange { .. })
        ));
        assert!(l.is_empty());
    }

    #[test]
    fn decayed_density_examples() {
        assert_eq!(decayed_density(&cv(1.0, 7), 7, 0.5).unwrap(), 1.0);
        assert_eq!(decayed_density(&cv(1.0, 7), 10, 0.5).unwrap(), 0.125);
        // 0.5^6 + 0.5^4 + 0.5^2
        assert_eq!(decayed_density(&cv(1.3125, 4), 6, 0.5).unwrap(), 0.328125);
        assert!(decayed_density(&cv(1.0, 7), 6, 0.5).is_err());
    }

    #[test]
    fn attribute_thresholds() {
        let geom = GridGeometry::uniform(2, 10).unwrap();
        let params = DecayParams::new(0.5, 1, 3.0, 0.8).unwrap();
        assert!((dense_threshold(&geom, &params) - 0.06).abs() < 1e-15);
        assert!((sparse_threshold(&geom, &params) - 0.016).abs() < 1e-15);
        let at = |d| grid_attribute(&cv(d, 0), 0, &geom, &params).unwrap();
        assert_eq!(at(0.07), GridAttribute::Dense);
        assert_eq!(at(0.01), GridAttribute::Sparse);
        assert_eq!(at(0.03), GridAttribute::Transitional);
    }

    #[test]
    fn advance_is_lazy() {
        let mut l = list(vec![10], 0.5, 3);
        feed(&mut l, 0.5);
        let before = l.get(&GridCoordinate(vec![5])).unwrap().clone();
        for _ in 0..3 {
            l.advance_tick();
        }
        assert_eq!(l.now(), 3);
        assert!(l.is_offline_tick());
        assert_eq!(l.get(&GridCoordinate(vec![5])).unwrap(), &before);
        assert_eq!(l.density(&GridCoordinate(vec![5])), 0.125);
    }

    #[test]
    fn idle_grid_is_marked_then_removed() {
        // N = 100, lambda = 0.5, c_l = 0.8
        let mut l = list(vec![100], 0.5, 10);
        let g = GridCoordinate(vec![0]);
        feed(&mut l, 0.001);
        for _ in 0..10 {
            l.advance_tick();
        }
        assert!((l.density(&g) - 0.000_976_562_5).abs() < 1e-15);
        assert!((sporadic_bound(0, 10, l.geometry(), l.params()) - 0.015_992_187_5).abs() < 1e-15);
        assert!(l.detect_and_remove_sporadic().is_empty());
        assert_eq!(l.get(&g).unwrap().sporadic_since, Some(10));
        for _ in 0..10 {
            l.advance_tick();
        }
        let removed = l.detect_and_remove_sporadic();
        assert_eq!(removed.len(), 1);
        assert_eq!(removed[0].grid, g);
        assert_eq!(removed[0].marked_at, 10);
        assert!(removed[0].density_at_mark < removed[0].bound_at_mark);
        assert!(removed[0].density_at_removal < removed[0].bound_at_removal);
        assert!(!l.contains(&g));

        // re-entry starts from zero history
        let out = l.ingest_record(&DataRecord::new(vec![0.001], 20)).unwrap();
        assert_eq!(out.recreated_after, Some(20));
        assert_eq!(l.get(&g).unwrap().density, 1.0);
        assert_eq!(l.get(&g).unwrap().last_removal, 20);
    }

    #[test]
    fn busy_grid_is_never_removed() {
        let mut l = list(vec![100], 0.5, 5);
        for _ in 0..200 {
            feed(&mut l, 0.5);
            if l.now() > 0 && l.is_offline_tick() {
                assert!(l.detect_and_remove_sporadic().is_empty());
            }
            l.advance_tick();
        }
        assert!(!l.get(&GridCoordinate(vec![50])).unwrap().is_sporadic());
    }

    #[test]
    fn fresh_record_clears_mark() {
        let mut l = list(vec![100], 0.5, 10);
        let g = GridCoordinate(vec![0]);
        feed(&mut l, 0.001);
        for _ in 0..10 {
            l.advance_tick();
        }
        l.detect_and_remove_sporadic();
        assert!(l.get(&g).unwrap().is_sporadic());
        feed(&mut l, 0.001);
        assert!(!l.get(&g).unwrap().is_sporadic());
    }

    #[test]
    fn dense_grid_is_never_marked() {
        let mut l = list(vec![100], 0.5, 10);
        feed(&mut l, 0.5);
        assert_eq!(l.attribute(&GridCoordinate(vec![50])), GridAttribute::Dense);
        l.detect_and_remove_sporadic();
        assert!(!l.get(&GridCoordinate(vec![50])).unwrap().is_sporadic());
    }
}
