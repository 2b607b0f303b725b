//! Certificate exchange on static honest networks: after `k` rounds the
//! holders are exactly the nodes within `k` hops of the issuer.

use std::collections::BTreeSet;

use super::*;
use trustwatch_core::messages::NodeId;
use trustwatch_core::sim::World;

/// Places a certificate at `issuer` and checks the holder set round by
/// round. Returns the number of rounds needed.
fn spread(pos: Vec<(f64, f64)>, issuer: u32) -> u32 {
    let cfg = static_cfg(pos);
    let n = cfg.node_count;
    let interval = cfg.protocol.exchange_interval_ms;
    let mut w = World::new(cfg).unwrap();
    let topo = w.topology().clone();
    let d = topo.diameter();
    let hops = topo.hops_from(NodeId(issuer), &BTreeSet::new());
    assert!(
        hops.iter().all(|&h| h != u32::MAX),
        "network must be connected"
    );

    w.run_until(1_000);
    let others: Vec<u32> = (1..=n).filter(|&i| i != issuer).collect();
    let cert = adverse_cert(&w, issuer, &others, 1_000);
    w.place_issued_certificate(cert.clone());

    let mut rounds = 0;
    for k in 0..=d {
        w.run_until(k as u64 * interval + 1_000);
        let expect = ids((1..=n).filter(|&i| hops[i as usize - 1] <= k));
        assert_eq!(holders(w.log(), &cert), expect, "after {k} rounds");
        if expect.len() == n as usize {
            rounds = k;
            break;
        }
    }
    assert!(rounds <= d, "took {rounds} rounds with diameter {d}");
    assert_eq!(holders(w.log(), &cert).len(), n as usize);
    rounds
}

pub fn line_end_to_end_takes_diameter_rounds() {
    // Two nodes leave a single possible accuser, too few for an adverse certificate.
    for n in 3..=6 {
        assert_eq!(spread(line(n), 1), n as u32 - 1);
    }
}

pub fn line_from_middle() {
    assert_eq!(spread(line(5), 3), 2);
}

pub fn ring_takes_half_the_circumference() {
    assert_eq!(spread(ring(8), 1), 4);
    assert_eq!(spread(ring(7), 4), 3);
}

pub fn grid_corner_to_corner() {
    assert_eq!(spread(grid(3, 3), 1), 4);
    assert_eq!(spread(grid(2, 4), 1), 4);
    assert_eq!(spread(grid(3, 3), 5), 2);
}
