use dstream::cluster::GridLabels;
use dstream::eval::purity;
use dstream::ingest::{generate_synthetic, Shape, SyntheticSpec};
use dstream::{run_dstream, DecayParams, Event, GridGeometry};

#[test]
fn two_blobs_become_two_clusters() {
    let stream = generate_synthetic(&SyntheticSpec::new(Shape::Gaussians, 4000, 12)).unwrap();
    let geom = GridGeometry::uniform(2, 10).unwrap();
    let params = DecayParams::with_default_gap(0.99, 3.0, 0.8).unwrap();
    let (state, log) = run_dstream(&stream.records, geom, params).unwrap();
    assert_eq!(state.cluster_count(), 2);
    assert!(matches!(
        log[0].event,
        Event::InitialClustering { clusters: 2 }
    ));
    state.check_invariants().unwrap();

    let grids = GridLabels::from_state(&state);
    let assignment: Vec<_> = stream
        .records
        .iter()
        .map(|r| grids.lookup(&r.values, 1).unwrap())
        .collect();
    assert!(purity(&assignment, &stream.labels).unwrap() >= 0.95);
}

#[test]
fn idle_gaps_in_ticks_still_run_offline_phases() {
    let mut stream = generate_synthetic(&SyntheticSpec::new(Shape::Gaussians, 600, 1))
        .unwrap()
        .records;
    for (i, r) in stream.iter_mut().enumerate() {
        r.tick = 3 * i as u64;
    }
    let params = DecayParams::with_default_gap(0.99, 3.0, 0.8).unwrap();
    let (state, log) = run_dstream(&stream, GridGeometry::uniform(2, 10).unwrap(), params).unwrap();
    assert_eq!(state.now(), 3 * 599 + 1);
    assert_eq!(log.first().map(|e| e.tick), Some(params.gap));
}
