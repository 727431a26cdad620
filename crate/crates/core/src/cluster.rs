//! Offline component: initial cluster formation, periodic cluster
//! adjustment, and the connectivity machinery behind both.
//!
//! A cluster is a connected set of grids under the neighbor relation. A
//! member is an *outside* grid when at least one of its neighbors is not a
//! member. Grids and clusters are always visited in ascending coordinate and
//! label order, so a run is a deterministic function of its input.
//!
//! Clusters only ever merge across a dense-dense adjacency. A transitional
//! grid is attached to whichever cluster claims it first and never bridges
//! two clusters; this keeps the dense part of every cluster identical to a
//! connected component of the dense-grid subgraph after initial clustering.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use crate::density::{ClusterLabel, GridAttribute, GridList, Removal};
use crate::error::{Error, Result};
use crate::grid::{
    map_values, neighbors, DataRecord, DecayParams, GridCoordinate, GridGeometry, Tick,
};

/// Labeled, connected group of grids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub label: ClusterLabel,
    pub members: BTreeSet<GridCoordinate>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    InitialClustering {
        clusters: usize,
    },
    Created {
        label: ClusterLabel,
        grid: GridCoordinate,
    },
    Merged {
        from: ClusterLabel,
        into: ClusterLabel,
    },
    Split {
        from: ClusterLabel,
        into: Vec<ClusterLabel>,
    },
    Removed {
        grid: GridCoordinate,
        marked_at: Tick,
    },
    /// A previously deleted grid received a record again; its density
    /// restarted from zero.
    Recreated {
        grid: GridCoordinate,
        removed_at: Tick,
    },
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::InitialClustering { .. } => "initial",
            Event::Created { .. } => "create",
            Event::Merged { .. } => "merge",
            Event::Split { .. } => "split",
            Event::Removed { .. } => "remove",
            Event::Recreated { .. } => "recreate",
        }
    }

    pub fn details(&self) -> String {
        match self {
            Event::InitialClustering { clusters } => format!("clusters={clusters}"),
            Event::Created { label, grid } => format!("label={label} grid={grid}"),
            Event::Merged { from, into } => format!("from={from} into={into}"),
            Event::Split { from, into } => {
                let parts: Vec<String> = into.iter().map(|l| l.to_string()).collect();
                format!("from={from} into={}", parts.join(","))
            }
            Event::Removed { grid, marked_at } => format!("grid={grid} marked_at={marked_at}"),
            Event::Recreated { grid, removed_at } => {
                format!("grid={grid} removed_at={removed_at} density_reset=true")
            }
        }
    }
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedEvent {
    pub tick: Tick,
    pub event: Event,
}

impl fmt::Display for LoggedEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}",
            self.tick,
            self.event.name(),
            self.event.details()
        )
    }
}

/// True iff some neighbor of `g` lies outside `members`.
pub fn is_outside_grid(g: &GridCoordinate, c: &Cluster, geom: &GridGeometry) -> Result<bool> {
    if !c.members.contains(g) {
        return Err(Error::Data(format!(
            "grid {g} is not a member of cluster {}",
            c.label
        )));
    }
    Ok(outside_of(g, &c.members, None, geom))
}

// Outside test against `members`, optionally with `extra` counted as a member.
fn outside_of(
    g: &GridCoordinate,
    members: &BTreeSet<GridCoordinate>,
    extra: Option<&GridCoordinate>,
    geom: &GridGeometry,
) -> bool {
    neighbors(g, geom)
        .iter()
        .any(|h| !members.contains(h) && Some(h) != extra)
}

/// Connected components of `members`, largest first (ties: smallest grid first).
pub fn connected_components(
    members: &BTreeSet<GridCoordinate>,
    geom: &GridGeometry,
) -> Vec<BTreeSet<GridCoordinate>> {
    let mut seen: BTreeSet<&GridCoordinate> = BTreeSet::new();
    let mut components = Vec::new();
    for start in members {
        if !seen.insert(start) {
            continue;
        }
        let mut component = BTreeSet::new();
        let mut queue = VecDeque::from([start.clone()]);
        while let Some(g) = queue.pop_front() {
            for h in neighbors(&g, geom) {
                if let Some(m) = members.get(&h) {
                    if seen.insert(m) {
                        queue.push_back(h);
                    }
                }
            }
            component.insert(g);
        }
        components.push(component);
    }
    components.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then_with(|| a.first().cmp(&b.first()))
    });
    components
}

/// Break `c` into its connected components. The largest keeps `c.label`,
/// the others draw fresh labels from `next_label`.
pub fn split_unconnected(c: &Cluster, geom: &GridGeometry, next_label: &mut u64) -> Vec<Cluster> {
    let mut parts = connected_components(&c.members, geom).into_iter();
    let mut out = Vec::new();
    if let Some(first) = parts.next() {
        out.push(Cluster {
            label: c.label,
            members: first,
        });
    }
    for members in parts {
        let label = ClusterLabel(*next_label);
        *next_label += 1;
        out.push(Cluster { label, members });
    }
    out
}

/// Snapshot of which grid belongs to which cluster; enough to place new
/// points without the densities.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLabels {
    geometry: GridGeometry,
    labels: BTreeMap<GridCoordinate, ClusterLabel>,
}

impl GridLabels {
    pub fn new(geometry: GridGeometry) -> Self {
        Self {
            geometry,
            labels: BTreeMap::new(),
        }
    }

    pub fn from_state(state: &ClusteringState) -> Self {
        Self {
            geometry: state.geometry().clone(),
            labels: state.labeled_grids().map(|(g, l)| (g.clone(), l)).collect(),
        }
    }

    pub fn insert(&mut self, g: GridCoordinate, label: ClusterLabel) {
        self.labels.insert(g, label);
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn get(&self, g: &GridCoordinate) -> Option<ClusterLabel> {
        self.labels.get(g).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GridCoordinate, ClusterLabel)> {
        self.labels.iter().map(|(g, &l)| (g, l))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cluster_labels(&self) -> BTreeSet<ClusterLabel> {
        self.labels.values().copied().collect()
    }

    /// Cluster of the grid containing `point`, else of the nearest labeled
    /// grid no more than `radius` cells away (Chebyshev distance, ties to
    /// the smaller coordinate), else `None`.
    pub fn lookup(&self, point: &[f64], radius: u32) -> Result<Option<ClusterLabel>> {
        let cell = map_values(point, &self.geometry)?;
        if let Some(l) = self.get(&cell) {
            return Ok(Some(l));
        }
        Ok(self
            .labels
            .iter()
            .map(|(g, &l)| (g.chebyshev(&cell), l))
            .filter(|&(d, _)| d <= radius)
            .min_by_key(|&(d, _)| d)
            .map(|(_, l)| l))
    }
}

/// Grid list plus the clusters formed over it.
#[derive(Debug, Clone)]
pub struct ClusteringState {
    grid_list: GridList,
    clusters: BTreeMap<ClusterLabel, BTreeSet<GridCoordinate>>,
    next_label: u64,
    last_attributes: HashMap<GridCoordinate, GridAttribute>,
    initialized: bool,
    // tick at which clusters were last brought in line with attributes
    settled_at: Option<Tick>,
    events: Vec<LoggedEvent>,
    removals: Vec<Removal>,
}

impl ClusteringState {
    pub fn new(grid_list: GridList) -> Self {
        Self {
            grid_list,
            clusters: BTreeMap::new(),
            next_label: 1,
            last_attributes: HashMap::new(),
            initialized: false,
            settled_at: None,
            events: Vec::new(),
            removals: Vec::new(),
        }
    }

    pub fn with_geometry(geom: GridGeometry, params: DecayParams) -> Result<Self> {
        Ok(Self::new(GridList::new(geom, params)?))
    }

    pub fn grid_list(&self) -> &GridList {
        &self.grid_list
    }

    pub fn geometry(&self) -> &GridGeometry {
        self.grid_list.geometry()
    }

    pub fn now(&self) -> Tick {
        self.grid_list.now()
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    /// Clusters in ascending label order.
    pub fn clusters(&self) -> impl Iterator<Item = Cluster> + '_ {
        self.clusters.iter().map(|(&label, members)| Cluster {
            label,
            members: members.clone(),
        })
    }

    pub fn cluster(&self, label: ClusterLabel) -> Option<&BTreeSet<GridCoordinate>> {
        self.clusters.get(&label)
    }

    pub fn label_of(&self, g: &GridCoordinate) -> Option<ClusterLabel> {
        self.grid_list.get(g).and_then(|cv| cv.label)
    }

    pub fn events(&self) -> &[LoggedEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<LoggedEvent> {
        std::mem::take(&mut self.events)
    }

    /// Every sporadic deletion so far, with the densities and bounds seen at
    /// the marking and the deleting inspection.
    pub fn removals(&self) -> &[Removal] {
        &self.removals
    }

    /// Labeled grids and their labels, ascending by coordinate.
    pub fn labeled_grids(&self) -> impl Iterator<Item = (&GridCoordinate, ClusterLabel)> {
        self.grid_list
            .iter()
            .filter_map(|(g, cv)| cv.label.map(|l| (g, l)))
    }

    /// Online step: add the record for the current tick.
    pub fn ingest(&mut self, x: &DataRecord) -> Result<()> {
        let out = self.grid_list.ingest_record(x)?;
        if let Some(removed_at) = out.recreated_after {
            let tick = self.now();
            self.log(
                tick,
                Event::Recreated {
                    grid: out.grid,
                    removed_at,
                },
            );
        }
        Ok(())
    }

    pub fn offline_due(&self) -> bool {
        self.now() > 0 && self.grid_list.is_offline_tick()
    }

    /// Runs whatever offline work the current tick calls for: initial
    /// clustering when `now == gap`, then sporadic removal and cluster
    /// adjustment at every positive multiple of `gap`.
    pub fn run_offline_phase(&mut self) {
        let now = self.now();
        if !self.initialized && now == self.grid_list.params().gap {
            self.initial_clustering();
        }
        if self.offline_due() {
            self.remove_sporadic();
            self.adjust_clustering();
        }
    }

    pub fn advance_tick(&mut self) {
        self.grid_list.advance_tick();
    }

    /// Feed one record, first letting any idle ticks before it elapse.
    pub fn process(&mut self, x: &DataRecord) -> Result<()> {
        if x.tick < self.now() {
            return Err(Error::TimeReversed {
                earlier: self.now(),
                later: x.tick,
            });
        }
        while self.now() < x.tick {
            self.run_offline_phase();
            self.advance_tick();
        }
        self.ingest(x)?;
        self.run_offline_phase();
        self.advance_tick();
        Ok(())
    }

    fn log(&mut self, tick: Tick, event: Event) {
        self.events.push(LoggedEvent { tick, event });
    }

    fn fresh_label(&mut self) -> ClusterLabel {
        let label = ClusterLabel(self.next_label);
        self.next_label += 1;
        label
    }

    fn size(&self, label: ClusterLabel) -> usize {
        self.clusters.get(&label).map_or(0, BTreeSet::len)
    }

    fn assign(&mut self, g: &GridCoordinate, label: ClusterLabel) {
        if let Some(old) = self.label_of(g) {
            if old == label {
                return;
            }
            self.detach(g, old);
        }
        if let Some(cv) = self.grid_list.get_mut(g) {
            cv.label = Some(label);
            self.clusters.entry(label).or_default().insert(g.clone());
        }
    }

    // Drop `g` from `label` without any connectivity repair.
    fn detach(&mut self, g: &GridCoordinate, label: ClusterLabel) {
        if let Some(members) = self.clusters.get_mut(&label) {
            members.remove(g);
            if members.is_empty() {
                self.clusters.remove(&label);
            }
        }
        if let Some(cv) = self.grid_list.get_mut(g) {
            cv.label = None;
        }
    }

    fn new_cluster(&mut self, g: &GridCoordinate) -> ClusterLabel {
        let label = self.fresh_label();
        self.assign(g, label);
        label
    }

    fn merge_into(&mut self, from: ClusterLabel, into: ClusterLabel) {
        if from == into {
            return;
        }
        let members = self.clusters.remove(&from).unwrap_or_default();
        for g in &members {
            if let Some(cv) = self.grid_list.get_mut(g) {
                cv.label = Some(into);
            }
        }
        self.clusters.entry(into).or_default().extend(members);
    }

    // Larger absorbs smaller; on equal size the smaller label survives.
    fn merge_pair(&mut self, a: ClusterLabel, b: ClusterLabel) -> (ClusterLabel, ClusterLabel) {
        let (sa, sb) = (self.size(a), self.size(b));
        let (into, from) = if sa > sb || (sa == sb && a < b) {
            (a, b)
        } else {
            (b, a)
        };
        self.merge_into(from, into);
        (from, into)
    }

    // Split `label` into connected pieces if it fell apart.
    fn repair(&mut self, label: ClusterLabel, tick: Tick) {
        let Some(members) = self.clusters.get(&label) else {
            return;
        };
        let cluster = Cluster {
            label,
            members: members.clone(),
        };
        let parts = split_unconnected(&cluster, self.grid_list.geometry(), &mut self.next_label);
        if parts.len() <= 1 {
            return;
        }
        let mut into = Vec::new();
        for part in parts.into_iter().skip(1) {
            for g in &part.members {
                self.clusters.get_mut(&label).map(|m| m.remove(g));
                if let Some(cv) = self.grid_list.get_mut(g) {
                    cv.label = Some(part.label);
                }
            }
            into.push(part.label);
            self.clusters.insert(part.label, part.members);
        }
        self.log(tick, Event::Split { from: label, into });
    }

    fn current_attributes(&self) -> BTreeMap<GridCoordinate, GridAttribute> {
        self.grid_list
            .coordinates()
            .map(|g| (g.clone(), self.grid_list.attribute(g)))
            .collect()
    }

    /// Form clusters from scratch.
    ///
    /// Every dense grid starts as its own cluster and all other grids are
    /// NO_CLASS. Then, until nothing changes, each cluster looks across its
    /// dense outside grids: a dense neighbor in another cluster triggers a
    /// merge (the larger cluster absorbs the smaller), and an unlabeled
    /// transitional neighbor is pulled in.
    pub fn initial_clustering(&mut self) {
        let now = self.now();
        let geom = self.grid_list.geometry().clone();
        let attributes = self.current_attributes();

        self.clusters.clear();
        let all: Vec<GridCoordinate> = attributes.keys().cloned().collect();
        for g in &all {
            if let Some(cv) = self.grid_list.get_mut(g) {
                cv.label = None;
            }
        }
        for (g, attr) in &attributes {
            if *attr == GridAttribute::Dense {
                self.new_cluster(g);
            }
        }

        let attr_of =
            |g: &GridCoordinate| attributes.get(g).copied().unwrap_or(GridAttribute::Sparse);
        loop {
            let mut changed = false;
            let labels: Vec<ClusterLabel> = self.clusters.keys().copied().collect();
            for c in labels {
                let Some(members) = self.clusters.get(&c) else {
                    continue;
                };
                let frontier: Vec<GridCoordinate> = members
                    .iter()
                    .filter(|g| {
                        attr_of(g) == GridAttribute::Dense && outside_of(g, members, None, &geom)
                    })
                    .cloned()
                    .collect();
                for g in frontier {
                    for h in neighbors(&g, &geom) {
                        let Some(own) = self.label_of(&g) else {
                            continue;
                        };
                        match (self.label_of(&h), attr_of(&h)) {
                            (Some(other), GridAttribute::Dense) if other != own => {
                                self.merge_pair(own, other);
                                changed = true;
                            }
                            (None, GridAttribute::Transitional) => {
                                self.assign(&h, own);
                                changed = true;
                            }
                            _ => {}
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }

        self.last_attributes = attributes.into_iter().collect();
        self.initialized = true;
        self.settled_at = Some(now);
        let clusters = self.clusters.len();
        self.log(now, Event::InitialClustering { clusters });
    }

    fn remove_sporadic(&mut self) {
        let now = self.now();
        let removals = self.grid_list.detect_and_remove_sporadic();
        for r in &removals {
            // the vector is gone; scrub any membership left behind
            let owner = self
                .clusters
                .iter()
                .find(|(_, m)| m.contains(&r.grid))
                .map(|(&l, _)| l);
            if let Some(label) = owner {
                self.clusters.get_mut(&label).map(|m| m.remove(&r.grid));
                if self.size(label) == 0 {
                    self.clusters.remove(&label);
                } else {
                    self.repair(label, now);
                }
            }
            self.last_attributes.remove(&r.grid);
            self.log(
                now,
                Event::Removed {
                    grid: r.grid.clone(),
                    marked_at: r.marked_at,
                },
            );
        }
        self.removals.extend(removals);
    }

    /// Bring clusters up to date with grids whose attribute changed since
    /// the previous offline phase. Grids new to the list count as having
    /// been sparse.
    ///
    /// Changes are handled in three passes: grids that became sparse leave
    /// their cluster (which is split if disconnected), then grids that
    /// became dense join or merge with the largest neighboring cluster, then
    /// grids that became transitional join the largest neighboring cluster
    /// of which they would be an outside grid.
    pub fn adjust_clustering(&mut self) {
        let now = self.now();
        let geom = self.grid_list.geometry().clone();
        let attributes = self.current_attributes();
        let changed: Vec<(GridCoordinate, GridAttribute)> = attributes
            .iter()
            .filter(|(g, attr)| {
                self.last_attributes
                    .get(*g)
                    .copied()
                    .unwrap_or(GridAttribute::Sparse)
                    != **attr
            })
            .map(|(g, a)| (g.clone(), *a))
            .collect();
        let attr_of =
            |g: &GridCoordinate| attributes.get(g).copied().unwrap_or(GridAttribute::Sparse);

        for (g, _) in changed.iter().filter(|(_, a)| *a == GridAttribute::Sparse) {
            if let Some(c) = self.label_of(g) {
                self.detach(g, c);
                self.repair(c, now);
            }
        }

        for (g, _) in changed.iter().filter(|(_, a)| *a == GridAttribute::Dense) {
            let best = self.largest_neighbor(g, &geom, &attr_of);
            let own = self.label_of(g);
            let Some((h, ch)) = best else {
                if own.is_none() {
                    let label = self.new_cluster(g);
                    self.log(
                        now,
                        Event::Created {
                            label,
                            grid: g.clone(),
                        },
                    );
                }
                continue;
            };
            match attr_of(&h) {
                GridAttribute::Dense => match own {
                    None => self.assign(g, ch),
                    Some(c) if c != ch => {
                        let (from, into) = if self.size(c) > self.size(ch) {
                            (ch, c)
                        } else {
                            (c, ch)
                        };
                        self.merge_into(from, into);
                        self.log(now, Event::Merged { from, into });
                    }
                    Some(_) => {}
                },
                GridAttribute::Transitional => match own {
                    None => {
                        let members = &self.clusters[&ch];
                        if outside_of(&h, members, Some(g), &geom) {
                            self.assign(g, ch);
                        } else {
                            let label = self.new_cluster(g);
                            self.log(
                                now,
                                Event::Created {
                                    label,
                                    grid: g.clone(),
                                },
                            );
                        }
                    }
                    Some(c) if c != ch && self.size(c) >= self.size(ch) => {
                        self.assign(&h, c);
                        self.repair(ch, now);
                    }
                    Some(_) => {}
                },
                GridAttribute::Sparse => {}
            }
        }

        for (g, _) in changed
            .iter()
            .filter(|(_, a)| *a == GridAttribute::Transitional)
        {
            let own = self.label_of(g);
            let mut candidates: Vec<ClusterLabel> = neighbors(g, &geom)
                .iter()
                .filter_map(|h| self.label_of(h))
                .chain(own)
                .collect();
            candidates.sort();
            candidates.dedup();
            let target = candidates
                .into_iter()
                .filter(|c| outside_of(g, &self.clusters[c], Some(g), &geom))
                .max_by(|a, b| self.size(*a).cmp(&self.size(*b)).then(b.cmp(a)));
            if let Some(target) = target {
                if own != Some(target) {
                    self.assign(g, target);
                    if let Some(old) = own {
                        self.repair(old, now);
                    }
                }
            }
        }

        self.last_attributes = attributes.into_iter().collect();
        self.settled_at = Some(now);
    }

    // Neighbor of `g` (dense or transitional) whose cluster is largest. Ties
    // go to the smaller label, then to a dense neighbor, then to the smaller
    // coordinate.
    fn largest_neighbor(
        &self,
        g: &GridCoordinate,
        geom: &GridGeometry,
        attr_of: &impl Fn(&GridCoordinate) -> GridAttribute,
    ) -> Option<(GridCoordinate, ClusterLabel)> {
        neighbors(g, geom)
            .into_iter()
            .filter(|h| attr_of(h) != GridAttribute::Sparse)
            .filter_map(|h| self.label_of(&h).map(|l| (h, l)))
            .min_by(|(ha, la), (hb, lb)| {
                self.size(*lb)
                    .cmp(&self.size(*la))
                    .then(la.cmp(lb))
                    .then(attr_of(hb).cmp(&attr_of(ha)))
                    .then(ha.cmp(hb))
            })
    }

    /// Checks the structural invariants: labels stored in grids agree with
    /// cluster membership and clusters are non-empty and connected. Right
    /// after an offline phase (same tick) every dense grid must be labeled
    /// and no sparse one may be; between phases grids decay freely and those
    /// two rules are not checked.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let geom = self.grid_list.geometry();
        let mut seen = HashMap::new();
        for (&label, members) in &self.clusters {
            if members.is_empty() {
                return Err(format!("cluster {label} is empty"));
            }
            if connected_components(members, geom).len() != 1 {
                return Err(format!("cluster {label} is not connected"));
            }
            for g in members {
                if let Some(prev) = seen.insert(g.clone(), label) {
                    return Err(format!("grid {g} belongs to clusters {prev} and {label}"));
                }
                match self.grid_list.get(g) {
                    None => return Err(format!("cluster {label} holds unknown grid {g}")),
                    Some(cv) if cv.label != Some(label) => {
                        return Err(format!(
                            "grid {g} carries {:?} but sits in {label}",
                            cv.label
                        ))
                    }
                    _ => {}
                }
            }
        }
        let settled = self.settled_at == Some(self.now());
        for (g, cv) in self.grid_list.iter() {
            let attr = self.grid_list.attribute(g);
            match cv.label {
                Some(label) => {
                    if seen.get(g) != Some(&label) {
                        return Err(format!("grid {g} carries label {label} of no cluster"));
                    }
                    if settled && attr == GridAttribute::Sparse {
                        return Err(format!("sparse grid {g} carries label {label}"));
                    }
                }
                None if settled && attr == GridAttribute::Dense => {
                    return Err(format!("dense grid {g} belongs to no cluster"));
                }
                None => {}
            }
        }
        Ok(())
    }
}

/// Run the whole online/offline loop over `stream`.
pub fn run_dstream<'a>(
    stream: impl IntoIterator<Item = &'a DataRecord>,
    geom: GridGeometry,
    params: DecayParams,
) -> Result<(ClusteringState, Vec<LoggedEvent>)> {
    let mut state = ClusteringState::with_geometry(geom, params)?;
    for x in stream {
        state.process(x)?;
    }
    let events = state.take_events();
    Ok((state, events))
}
