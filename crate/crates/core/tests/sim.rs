//! Whole runs through the simulator.

mod common;

use common::*;
use trustwatch_core::harness::{compute_metrics, single_run_csv};
use trustwatch_core::messages::NodeId;
use trustwatch_core::sim::{
    run, AdversaryProfile, EventKind, EventLog, Mobility, ScenarioConfig, World,
};

fn small(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        duration_s: 300,
        node_count: 20,
        malicious_count: 3,
        flow_count: 8,
        rng_seed: seed,
        ..ScenarioConfig::table1()
    }
}

#[test]
fn same_seed_same_bytes() {
    for seed in [1, 2] {
        let a = run(small(seed)).unwrap().log;
        let b = run(small(seed)).unwrap().log;
        assert_eq!(a.render(), b.render());
        let csv = |l: &EventLog| single_run_csv(seed, &compute_metrics(l).unwrap());
        assert_eq!(csv(&a), csv(&b));
    }
    assert_ne!(
        run(small(1)).unwrap().log.render(),
        run(small(2)).unwrap().log.render()
    );
}

#[test]
fn rendered_log_reproduces_metrics() {
    let log = run(small(3)).unwrap().log;
    let text = log.render();
    let back = EventLog::parse(&text).unwrap();
    assert_eq!(back.render(), text);
    assert_eq!(
        compute_metrics(&back).unwrap(),
        compute_metrics(&log).unwrap()
    );
}

#[test]
fn honest_network_stays_quiet() {
    let mut c = small(4);
    c.malicious_count = 0;
    let out = run(c).unwrap();
    for k in [
        EventKind::Suspicion,
        EventKind::Alarm,
        EventKind::Isolated,
        EventKind::CertIssued,
    ] {
        assert_eq!(out.log.count(k), 0, "{k}");
    }
    let m = compute_metrics(&out.log).unwrap();
    assert_eq!(m.detection_rate, None);
    assert_eq!(m.false_positive_rate, 0.0);
}

#[test]
fn idle_network_has_no_traffic() {
    let mut c = small(5);
    c.flow_count = 0;
    c.malicious_count = 0;
    let out = run(c).unwrap();
    assert_eq!(out.log.count(EventKind::Observed), 0);
    assert_eq!(compute_metrics(&out.log).unwrap().delivery_ratio, None);
}

#[test]
fn audited_run_keeps_invariants() {
    let mut c = small(6);
    c.duration_s = 120;
    let mut w = World::new(c).unwrap();
    w.set_audit(true);
    w.run_until(120_000);
    assert_eq!(w.check(), Ok(()));
}

#[test]
fn pinned_roster_is_used() {
    let mut c = small(7);
    c.malicious_nodes = Some(vec![2, 11, 19]);
    let out = run(c).unwrap();
    assert_eq!(out.malicious, ids([2, 11, 19]));
    let roles: Vec<NodeId> = out
        .log
        .of_kind(EventKind::Role)
        .filter(|r| r.get("role") == Some("malicious"))
        .map(|r| r.actor)
        .collect();
    assert_eq!(roles, vec![NodeId(2), NodeId(11), NodeId(19)]);
}

#[test]
fn effective_never_exceeds_total() {
    for seed in 1..=3 {
        let log = run(small(seed)).unwrap().log;
        let gt = trustwatch_core::harness::GroundTruth::from_log(&log).unwrap();
        for c in trustwatch_core::harness::certificate_convergence(&log, &gt).unwrap() {
            if let (Some(e), Some(t)) = (c.effective_s, c.total_s) {
                assert!(e <= t, "{c:?}");
            }
        }
    }
}

#[test]
fn local_baseline_alarms_at_least_as_often() {
    for seed in 1..=3 {
        let m = compute_metrics(&run(small(seed)).unwrap().log).unwrap();
        assert!(m.loc_alarms_total >= m.alarms_total, "seed {seed}: {m:?}");
    }
}

#[test]
fn full_flood_to_every_neighbour_converges_at_once() {
    // A dropping hub (node 1) with eight rim nodes 25 m out. Rim neighbours
    // hear each other, so each hand-off to the hub has three watchers, and
    // every honest node is the hub's neighbour: the first flood reaches all
    // of them without an exchange round.
    let mut pos = vec![(50.0, 50.0)];
    for i in 0..8 {
        let a = std::f64::consts::TAU * i as f64 / 8.0;
        pos.push((50.0 + 25.0 * a.cos(), 50.0 + 25.0 * a.sin()));
    }
    let mut c = static_cfg(pos);
    c.duration_s = 200;
    c.malicious_nodes = Some(vec![1]);
    c.malicious_count = 1;
    c.adversary = AdversaryProfile::dropper();
    c.flow_pairs = Some(vec![(2, 6), (3, 7), (4, 8), (5, 9)]);
    c.flow_rate_pps = 4.0;
    c.protocol.f_fraction = 1.0;
    let m = compute_metrics(&run(c).unwrap().log).unwrap();
    assert!(m.certificates > 0);
    assert!(m.total_convergence_time_s.unwrap() < 1.0, "{m:?}");
    assert_eq!(m.detection_rate, Some(1.0));
}

#[test]
fn mobile_and_static_both_run() {
    let mut c = small(8);
    c.mobility = Mobility::Static;
    assert!(run(c).is_ok());
}
