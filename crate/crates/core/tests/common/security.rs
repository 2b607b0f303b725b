//! Adversary cases run end to end through the simulator. Each panics on
//! failure.

use std::collections::BTreeSet;

use super::*;
use trustwatch_core::harness::compute_metrics;
use trustwatch_core::messages::NodeId;
use trustwatch_core::sim::{
    key_str, run, AdversaryProfile, EventKind, EventLog, Record, ScenarioConfig, World,
};

/// Static line of `n` plus node `n + 1` off to the side, in range of nodes 1
/// and 2 only, so two honest nodes overhear the first hop. One flow, with
/// fast sampling so the monitor reacts within seconds.
fn chain(n: usize, malicious: &[u32], adv: AdversaryProfile, flow: (u32, u32)) -> ScenarioConfig {
    let mut pos = line(n);
    pos.push((14.0, 65.0));
    let mut c = static_cfg(pos);
    c.duration_s = 240;
    c.malicious_nodes = Some(malicious.to_vec());
    c.malicious_count = malicious.len() as u32;
    c.adversary = adv;
    c.flow_pairs = Some(vec![flow]);
    c.flow_rate_pps = 4.0;
    c.protocol.monitor.sampling_prob = 1.0;
    c
}

fn about(log: &EventLog, kind: EventKind, subject: u32) -> impl Iterator<Item = &Record> {
    log.of_kind(kind)
        .filter(move |r| r.subject == Some(NodeId(subject)))
}

pub fn dropped_feedback_is_caught_by_the_omitted_respondent() {
    let adv = AdversaryProfile {
        drops_feedback_in_aggregate: true,
        ..AdversaryProfile::dropper()
    };
    let log = run(chain(3, &[2], adv, (1, 3))).unwrap().log;

    // Node 1 reported node 2 and finds its feedback missing.
    let rejected: Vec<_> = about(&log, EventKind::CertRejected, 2)
        .filter(|r| r.actor == NodeId(1))
        .collect();
    assert!(!rejected.is_empty());
    assert!(rejected
        .iter()
        .all(|r| r.get("verdict") == Some("dropped_feedback")));
    assert!(about(&log, EventKind::Escalation, 2).any(|r| r.actor == NodeId(1)));
    assert!(about(&log, EventKind::Alarm, 2).any(|r| r.actor == NodeId(1)));
    // The stripped certificate never lowers anyone's view of node 2.
    assert_eq!(
        about(&log, EventKind::CertAccepted, 2)
            .filter(|r| r.actor == NodeId(1))
            .count(),
        0
    );
}

pub fn tampered_responses_rejected_by_every_receiver() {
    let adv = AdversaryProfile {
        tampers_feedback: true,
        ..AdversaryProfile::dropper()
    };
    let log = run(chain(3, &[2], adv, (1, 3))).unwrap().log;
    let issued = about(&log, EventKind::CertIssued, 2).count();
    assert!(issued > 0);
    assert_eq!(about(&log, EventKind::CertAccepted, 2).count(), 0);
    for receiver in [1, 3] {
        let verdicts: BTreeSet<_> = about(&log, EventKind::CertRejected, 2)
            .filter(|r| r.actor == NodeId(receiver))
            .map(|r| r.get("verdict").unwrap().to_string())
            .collect();
        assert_eq!(
            verdicts,
            ["tampered_response".to_string()].into(),
            "at node {receiver}"
        );
    }
}

pub fn tampered_relayed_certificate_rejected_and_blamed() {
    // 1 - 2 - 3 - 4 - 5 with 6 beside 1 and 2: node 2 drops the flow and gets certified; node 4 is
    // the only way on to node 5 and corrupts what it passes along.
    let adv = AdversaryProfile {
        tampers_certificates: true,
        ..AdversaryProfile::dropper()
    };
    let log = run(chain(5, &[2, 4], adv, (1, 3))).unwrap().log;
    let adverse: Vec<String> = about(&log, EventKind::CertIssued, 2)
        .filter(|r| r.get("adverse") == Some("1"))
        .map(|r| r.get("key").unwrap().to_string())
        .collect();
    assert!(!adverse.is_empty());
    let at5 = |kind| {
        log.of_kind(kind)
            .filter(|r| r.actor == NodeId(5))
            .filter(|r| r.get("key").is_some_and(|k| adverse.iter().any(|a| a == k)))
            .count()
    };
    assert!(at5(EventKind::CertRejected) > 0);
    assert_eq!(at5(EventKind::CertCached), 0);
    assert_eq!(at5(EventKind::CertAccepted), 0);
    assert!(log
        .of_kind(EventKind::TamperEvidence)
        .any(|r| r.actor == NodeId(5) && r.get("from") == Some("4")));
    // Honest nodes with a clean path still took it.
    assert!(log
        .of_kind(EventKind::CertCached)
        .any(|r| r.actor == NodeId(3) && adverse.iter().any(|a| r.get("key") == Some(a))));
}

pub fn lone_false_accuser_isolates_nobody() {
    for seed in 1..=3 {
        let mut c = ScenarioConfig::table1();
        c.duration_s = 400;
        c.rng_seed = seed;
        c.malicious_count = 1;
        c.adversary = AdversaryProfile {
            false_accuser: true,
            ..AdversaryProfile::default()
        };
        let out = run(c).unwrap();
        let liar = *out.malicious.iter().next().unwrap();
        let accusations = out.log.count(EventKind::FalseAccusation);
        assert!(
            accusations >= 5,
            "seed {seed}: only {accusations} accusations"
        );
        let wrongly: Vec<_> = out
            .log
            .of_kind(EventKind::Isolated)
            .filter(|r| r.subject != Some(liar))
            .collect();
        assert!(wrongly.is_empty(), "seed {seed}: {wrongly:?}");
        assert_eq!(compute_metrics(&out.log).unwrap().false_positive_rate, 0.0);
    }
}

pub fn repeated_respondent_set_has_no_weight() {
    let mut w = World::new(static_cfg(line(4))).unwrap();
    w.run_until(1_000);
    let first = adverse_cert(&w, 2, &[1, 3], 1_000);
    let again = adverse_cert(&w, 2, &[1, 3], 1_500);
    assert_ne!(first.key(), again.key());
    w.inject_certificate(NodeId(4), NodeId(3), first);
    let after_first = w.node(NodeId(4)).table().trust_of(NodeId(2));
    w.run_until(2_000);
    w.inject_certificate(NodeId(4), NodeId(3), again.clone());
    assert_eq!(w.node(NodeId(4)).table().trust_of(NodeId(2)), after_first);
    let k = key_str(&again.key());
    let rec = w
        .log()
        .of_kind(EventKind::CertRepeat)
        .find(|r| r.get("key") == Some(&k))
        .expect("repeat noted");
    assert_eq!(rec.get("k"), Some("2"));
    // A different respondent set counts again.
    let other = adverse_cert(&w, 2, &[1, 3, 4], 2_000);
    w.inject_certificate(NodeId(4), NodeId(3), other);
    assert!(w.node(NodeId(4)).table().trust_of(NodeId(2)) < after_first);
}

pub fn certificate_droppers_delay_but_do_not_block() {
    // 1 2 3
    // 4 5 6
    // 7 8 9
    // The centre drops certificates, so 8 hears from 2 the long way round.
    let malicious = [5u32];
    let mut cfg = static_cfg(grid(3, 3));
    cfg.malicious_nodes = Some(malicious.to_vec());
    cfg.malicious_count = 1;
    cfg.adversary = AdversaryProfile {
        drops_certificates: true,
        ..AdversaryProfile::default()
    };
    let interval = cfg.protocol.exchange_interval_ms;
    let mut w = World::new(cfg).unwrap();
    let bad: BTreeSet<NodeId> = malicious.iter().copied().map(NodeId).collect();
    let honest_hops = w.topology().hops_from(NodeId(2), &bad);
    let open_hops = w.topology().hops_from(NodeId(2), &BTreeSet::new());
    let honest: Vec<u32> = (1..=9).filter(|i| !malicious.contains(i)).collect();
    let slowest = honest
        .iter()
        .map(|&i| honest_hops[i as usize - 1])
        .max()
        .unwrap();
    let unobstructed = honest
        .iter()
        .map(|&i| open_hops[i as usize - 1])
        .max()
        .unwrap();
    assert!(honest
        .iter()
        .any(|&i| honest_hops[i as usize - 1] > open_hops[i as usize - 1]));

    w.run_until(1_000);
    let cert = adverse_cert(&w, 2, &[1, 3], 1_000);
    w.place_issued_certificate(cert.clone());
    for k in 0..=slowest {
        w.run_until(k as u64 * interval + 1_000);
        let got: BTreeSet<NodeId> = holders(w.log(), &cert)
            .into_iter()
            .filter(|n| !bad.contains(n))
            .collect();
        let expect = ids(honest
            .iter()
            .copied()
            .filter(|&i| honest_hops[i as usize - 1] <= k));
        assert_eq!(got, expect, "after {k} rounds");
    }
    assert_eq!((open_hops[7], honest_hops[7]), (2, 4));
    assert_eq!((unobstructed, slowest), (3, 4));
}
