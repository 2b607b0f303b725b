use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::details;
use crate::messages::{
    certificate_group_trust, decode_rep_mess, encode_rep_mess, Authority, CertKey,
    GroupTrustCertificate, NodeId, RepMessType, RepVal, Secret, SignedResponse,
};
use crate::node::{Action, Ctx, ForwardingEvent, Node, Note, Outcome, Timer};

use super::adversary::{pick_roster, AdversaryProfile};
use super::config::{ConfigInvalid, Mobility, ScenarioConfig};
use super::log::{EventKind, EventLog};
use super::mobility::{step_mobility, MobilityState, Vec2, WaypointParams};
use super::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    BufferFull,
    Malicious,
    NoRoute,
    Isolated,
}

impl DropReason {
    pub const ALL: [DropReason; 4] = [
        DropReason::BufferFull,
        DropReason::Malicious,
        DropReason::NoRoute,
        DropReason::Isolated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DropReason::BufferFull => "buffer_full",
            DropReason::Malicious => "malicious",
            DropReason::NoRoute => "no_route",
            DropReason::Isolated => "isolated",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowCounts {
    pub sent: u64,
    pub delivered: u64,
    pub delivered_modified: u64,
    pub dropped: BTreeMap<DropReason, u64>,
}

impl FlowCounts {
    pub fn dropped_total(&self) -> u64 {
        self.dropped.values().sum()
    }
}

/// Transmission and packet accounting for one run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ledger {
    /// Control transmissions and bytes, by message type.
    pub control_messages: BTreeMap<RepMessType, u64>,
    pub control_bytes: BTreeMap<RepMessType, u64>,
    pub piggyback_bytes: u64,
    pub route_discoveries: u64,
    /// One synthetic flood per discovery.
    pub discovery_messages: u64,
    pub flows: Vec<FlowCounts>,
}

impl Ledger {
    pub fn total_control_bytes(&self) -> u64 {
        self.control_bytes.values().sum()
    }

    pub fn total_control_messages(&self) -> u64 {
        self.control_messages.values().sum()
    }

    fn charge(&mut self, frame: &[u8], transmissions: u64) {
        let Ok(ty) = RepMessType::try_from(frame[1]) else {
            return;
        };
        *self.control_messages.entry(ty).or_default() += transmissions;
        *self.control_bytes.entry(ty).or_default() += transmissions * frame.len() as u64;
    }
}

#[derive(Debug, Clone)]
struct Packet {
    id: u64,
    flow: usize,
    dst: NodeId,
    route: Vec<NodeId>,
    hop: usize,
    digest: u64,
    /// Nodes watching for the current holder to pass this packet on.
    watchers: Vec<NodeId>,
}

impl Packet {
    fn src(&self) -> NodeId {
        self.route[0]
    }
}

fn payload_digest(id: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = id.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
struct Flow {
    src: NodeId,
    dst: NodeId,
    start_ms: u64,
    next_k: u64,
    route: Option<Vec<NodeId>>,
}

enum Event {
    Mobility,
    FlowSend {
        flow: usize,
    },
    Service {
        node: NodeId,
    },
    Arrive {
        from: NodeId,
        to: NodeId,
        pkt: Packet,
        keys: Vec<CertKey>,
    },
    Deliver {
        from: NodeId,
        to: NodeId,
        frame: Vec<u8>,
        one_hop: bool,
    },
    Timer {
        node: NodeId,
        timer: Timer,
    },
    Exchange,
    FalseAccuse {
        node: NodeId,
    },
}

#[derive(Debug, Default)]
struct Buffer {
    fifo: VecDeque<Packet>,
    next_free_ms: u64,
    scheduled: bool,
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: EventLog,
    pub ledger: Ledger,
    pub malicious: BTreeSet<NodeId>,
}

pub fn key_str(k: &CertKey) -> String {
    format!("{}:{}:{}", k.subject, k.issuer, k.issued_at_ms)
}

pub fn parse_key(s: &str) -> Option<CertKey> {
    let mut it = s.split(':');
    let k = CertKey {
        subject: NodeId(it.next()?.parse().ok()?),
        issuer: NodeId(it.next()?.parse().ok()?),
        issued_at_ms: it.next()?.parse().ok()?,
    };
    it.next().is_none().then_some(k)
}

/// The simulated network.
pub struct World {
    cfg: ScenarioConfig,
    now: u64,
    seq: u64,
    queue: BTreeMap<(u64, u64), Event>,
    auth: Authority,
    nodes: Vec<Node>,
    profiles: BTreeMap<NodeId, AdversaryProfile>,
    mobility: MobilityState,
    waypoint: Option<WaypointParams>,
    topo: Topology,
    flows: Vec<Flow>,
    buffers: Vec<Buffer>,
    next_packet: u64,
    mob_rng: ChaCha8Rng,
    traffic_rng: ChaCha8Rng,
    proto_rng: ChaCha8Rng,
    log: EventLog,
    ledger: Ledger,
    audit: bool,
    ticks: u64,
}

fn idx(n: NodeId) -> usize {
    n.0 as usize - 1
}

impl World {
    pub fn new(cfg: ScenarioConfig) -> Result<World, ConfigInvalid> {
        cfg.validate()?;
        let stream = |s: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            r.set_stream(s);
            r
        };
        let mut setup = stream(0);
        let n = cfg.node_count;
        let params = cfg.effective_protocol();

        let mut auth = Authority::new(Secret::derive(b"authority", cfg.rng_seed));
        let mut nodes = Vec::with_capacity(n as usize);
        for i in 1..=n {
            let secret = Secret::derive(b"node", (cfg.rng_seed << 20) ^ i as u64);
            let binding = auth.register_key(&secret);
            auth.issue_identity(NodeId(i), &i.to_be_bytes(), binding)
                .expect("fresh ids and credentials");
            nodes.push(Node::new(NodeId(i), secret, params.clone()));
        }

        let roster = match &cfg.malicious_nodes {
            Some(ids) => ids.iter().copied().map(NodeId).collect(),
            None => pick_roster(n, cfg.malicious_count, &mut setup),
        };
        let profiles = roster
            .iter()
            .map(|&m| {
                let mut p = cfg.adversary.clone();
                if cfg.collude && p.colluding_set.is_none() {
                    p.colluding_set = Some(roster.iter().copied().filter(|&o| o != m).collect());
                }
                (m, p)
            })
            .collect();

        let start: Vec<Vec2> = match &cfg.positions {
            Some(p) => p.iter().map(|&(x, y)| Vec2 { x, y }).collect(),
            None => (0..n)
                .map(|_| Vec2 {
                    x: setup.random::<f64>() * cfg.area_w_m,
                    y: setup.random::<f64>() * cfg.area_h_m,
                })
                .collect(),
        };
        let mut mob_rng = stream(1);
        let (mobility, waypoint) = match cfg.mobility {
            Mobility::RandomWaypoint {
                max_speed_mps,
                pause_s,
            } => {
                let wp = WaypointParams {
                    width: cfg.area_w_m,
                    height: cfg.area_h_m,
                    max_speed: max_speed_mps,
                    pause_s,
                };
                (MobilityState::start(&start, &wp, &mut mob_rng), Some(wp))
            }
            Mobility::Static => (MobilityState::fixed(&start), None),
        };
        let topo = Topology::from_positions(&start, cfg.tx_range_m);

        let pairs: Vec<(NodeId, NodeId)> = match &cfg.flow_pairs {
            Some(p) => p.iter().map(|&(s, d)| (NodeId(s), NodeId(d))).collect(),
            None => (0..cfg.flow_count)
                .map(|_| {
                    let s = setup.random_range(1..=n);
                    let mut d = setup.random_range(1..n);
                    if d >= s {
                        d += 1;
                    }
                    (NodeId(s), NodeId(d))
                })
                .collect(),
        };
        let period = 1000.0 / cfg.flow_rate_pps;
        let flows: Vec<Flow> = pairs
            .into_iter()
            .map(|(src, dst)| Flow {
                src,
                dst,
                start_ms: (setup.random::<f64>() * period) as u64,
                next_k: 0,
                route: None,
            })
            .collect();

        let mut w = World {
            now: 0,
            seq: 0,
            queue: BTreeMap::new(),
            auth,
            nodes,
            profiles,
            mobility,
            waypoint,
            topo,
            buffers: (0..n).map(|_| Buffer::default()).collect(),
            next_packet: 0,
            mob_rng,
            traffic_rng: stream(2),
            proto_rng: stream(3),
            log: EventLog::default(),
            ledger: Ledger {
                flows: vec![FlowCounts::default(); flows.len()],
                ..Ledger::default()
            },
            flows,
            audit: false,
            ticks: 0,
            cfg,
        };
        w.log_preamble();
        w.schedule_initial();
        Ok(w)
    }

    fn log_preamble(&mut self) {
        let c = &self.cfg;
        let p = self.nodes[0].params();
        let d = details!(
            "seed" = c.rng_seed,
            "nodes" = c.node_count,
            "duration_ms" = c.duration_ms(),
            "tx_range_m" = c.tx_range_m,
            "flows" = self.flows.len(),
            "malicious" = self.profiles.len(),
            "exchange_ms" = p.exchange_interval_ms,
            "mon_threshold" = p.monitor.threshold,
            "mon_min_samples" = p.monitor.min_samples,
            "overhead_window_ms" = c.overhead_window_s * 1000,
        );
        self.log
            .push(0, EventKind::Config, NodeId::AUTHORITY, None, d);
        for i in 1..=c.node_count {
            let id = NodeId(i);
            let role = if self.profiles.contains_key(&id) {
                "malicious"
            } else {
                "honest"
            };
            self.log
                .push(0, EventKind::Role, id, None, details!("role" = role));
        }
        for (a, b) in self.topo.links() {
            self.log
                .push(0, EventKind::LinkUp, a, Some(b), String::new());
        }
    }

    fn schedule_initial(&mut self) {
        self.push(self.cfg.topology_step_ms, Event::Mobility);
        for f in 0..self.flows.len() {
            let at = self.flows[f].start_ms;
            self.push(at, Event::FlowSend { flow: f });
        }
        let ex = self.nodes[0].params().exchange_interval_ms;
        self.push(ex, Event::Exchange);
        let interval = self.cfg.false_accusation_interval_s * 1000;
        let accusers: Vec<NodeId> = self
            .profiles
            .iter()
            .filter(|(_, p)| p.false_accuser)
            .map(|(&n, _)| n)
            .collect();
        for n in accusers {
            let at = self.traffic_rng.random_range(0..interval) + interval;
            self.push(at, Event::FalseAccuse { node: n });
        }
    }

    fn push(&mut self, at: u64, ev: Event) {
        self.seq += 1;
        self.queue.insert((at, self.seq), ev);
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[idx(id)]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.mobility.positions()
    }

    pub fn authority(&self) -> &Authority {
        &self.auth
    }

    pub fn malicious(&self) -> BTreeSet<NodeId> {
        self.profiles.keys().copied().collect()
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    /// Re-checks packet conservation and topology consistency after every
    /// event. Slow; meant for tests.
    pub fn set_audit(&mut self, on: bool) {
        self.audit = on;
    }

    /// Hands `cert` to `at` as if `from` had sent it.
    pub fn inject_certificate(&mut self, at: NodeId, from: NodeId, cert: GroupTrustCertificate) {
        self.call(at, |n, ctx, out| n.handle_certificate(ctx, from, cert, out));
    }

    /// Hands a certificate to its issuer's cache, as though the issuer had
    /// just compiled it, without the initial flood.
    pub fn place_issued_certificate(&mut self, cert: GroupTrustCertificate) {
        self.call(cert.issuer, |n, _, out| n.hold_own_certificate(cert, out));
    }

    /// Processes every event up to and including `t_ms`.
    pub fn run_until(&mut self, t_ms: u64) {
        let end = t_ms.min(self.cfg.duration_ms());
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > end {
                break;
            }
            let ((t, _), ev) = entry.remove_entry();
            self.now = t;
            self.handle(ev);
            if self.audit {
                if let Err(e) = self.check() {
                    panic!("audit failed at {t} ms: {e}");
                }
            }
        }
        self.now = self.now.max(end);
    }

    pub fn finish(mut self) -> RunOutput {
        self.run_until(self.cfg.duration_ms());
        debug_assert_eq!(self.check(), Ok(()));
        let l = &self.ledger;
        let mut totals = FlowCounts::default();
        for f in &l.flows {
            totals.sent += f.sent;
            totals.delivered += f.delivered;
            totals.delivered_modified += f.delivered_modified;
            for (&r, &c) in &f.dropped {
                *totals.dropped.entry(r).or_default() += c;
            }
        }
        let mut d = details!(
            "control_messages" = l.total_control_messages(),
            "control_bytes" = l.total_control_bytes(),
            "piggyback_bytes" = l.piggyback_bytes,
            "route_discoveries" = l.route_discoveries,
            "discovery_messages" = l.discovery_messages,
            "sent" = totals.sent,
            "delivered" = totals.delivered,
            "delivered_modified" = totals.delivered_modified,
        );
        for r in DropReason::ALL {
            d.push_str(&format!(
                " drop_{}={}",
                r.name(),
                totals.dropped.get(&r).copied().unwrap_or(0)
            ));
        }
        let end = self.cfg.duration_ms();
        self.log
            .push(end, EventKind::Ledger, NodeId::AUTHORITY, None, d);
        RunOutput {
            malicious: self.malicious(),
            log: self.log,
            ledger: self.ledger,
        }
    }

    // ---- invariants ----

    /// Packet conservation per flow and topology/position consistency.
    pub fn check(&self) -> Result<(), String> {
        let mut in_buffer = vec![0u64; self.flows.len()];
        for b in &self.buffers {
            for p in &b.fifo {
                in_buffer[p.flow] += 1;
            }
        }
        let mut in_flight = vec![0u64; self.flows.len()];
        for ev in self.queue.values() {
            if let Event::Arrive { pkt, .. } = ev {
                in_flight[pkt.flow] += 1;
            }
        }
        for (i, f) in self.ledger.flows.iter().enumerate() {
            let rhs = f.delivered + f.dropped_total() + in_buffer[i] + in_flight[i];
            if f.sent != rhs {
                return Err(format!(
                    "flow {i}: sent {} != delivered {} + dropped {} + buffered {} + in flight {}",
                    f.sent,
                    f.delivered,
                    f.dropped_total(),
                    in_buffer[i],
                    in_flight[i]
                ));
            }
        }
        let fresh = Topology::from_positions(&self.mobility.positions(), self.cfg.tx_range_m);
        if fresh != self.topo {
            return Err("topology out of date with positions".into());
        }
        Ok(())
    }

    // ---- dispatch ----

    fn handle(&mut self, ev: Event) {
        match ev {
            Event::Mobility => self.on_mobility(),
            Event::FlowSend { flow } => self.on_flow_send(flow),
            Event::Service { node } => self.on_service(node),
            Event::Arrive {
                from,
                to,
                pkt,
                keys,
            } => self.on_arrive(from, to, pkt, keys),
            Event::Deliver {
                from,
                to,
                frame,
                one_hop,
            } => self.on_deliver(from, to, frame, one_hop),
            Event::Timer { node, timer } => {
                self.call(node, |n, ctx, out| n.on_timer(ctx, timer, out))
            }
            Event::Exchange => self.on_exchange(),
            Event::FalseAccuse { node } => self.on_false_accuse(node),
        }
    }

    fn call<F>(&mut self, id: NodeId, f: F)
    where
        F: FnOnce(&mut Node, &mut Ctx, &mut Vec<Action>),
    {
        let mut out = Vec::new();
        {
            let mut ctx = Ctx {
                now_ms: self.now,
                neighbors: self.topo.neighbors(id),
                keys: &self.auth,
                rng: &mut self.proto_rng,
            };
            f(&mut self.nodes[idx(id)], &mut ctx, &mut out);
        }
        self.apply(id, out);
    }

    fn apply(&mut self, from: NodeId, out: Vec<Action>) {
        for a in out {
            match a {
                Action::Note(n) => self.log_note(from, n),
                Action::SetTimer { at_ms, timer } => {
                    self.push(at_ms, Event::Timer { node: from, timer })
                }
                Action::Send { to, frame } => {
                    if let Some(f) = self.adversary_rewrite(from, frame) {
                        self.send_one_hop(from, to, f);
                    }
                }
                Action::Multicast { to, frame } => {
                    if let Some(f) = self.adversary_rewrite(from, frame) {
                        for t in to {
                            self.send_one_hop(from, t, f.clone());
                        }
                    }
                }
                Action::Broadcast { frame } => {
                    if let Some(f) = self.adversary_rewrite(from, frame) {
                        self.ledger.charge(&f, 1);
                        let lat = self.cfg.hop_latency_ms;
                        for &t in self.topo.neighbors(from).to_vec().iter() {
                            self.push(
                                self.now + lat,
                                Event::Deliver {
                                    from,
                                    to: t,
                                    frame: f.clone(),
                                    one_hop: true,
                                },
                            );
                        }
                    }
                }
                Action::Route { to, frame } => {
                    if let Some(f) = self.adversary_rewrite(from, frame) {
                        self.route_frame(from, to, f);
                    }
                }
                Action::Flood { frame } => {
                    if let Some(f) = self.adversary_rewrite(from, frame) {
                        self.flood(from, f);
                    }
                }
            }
        }
    }

    fn send_one_hop(&mut self, from: NodeId, to: NodeId, frame: Vec<u8>) {
        if !self.topo.are_neighbors(from, to) {
            return;
        }
        self.ledger.charge(&frame, 1);
        self.push(
            self.now + self.cfg.hop_latency_ms,
            Event::Deliver {
                from,
                to,
                frame,
                one_hop: true,
            },
        );
    }

    fn route_frame(&mut self, from: NodeId, to: NodeId, frame: Vec<u8>) {
        let isolated = self.nodes[idx(from)].isolated().clone();
        let Ok(path) = self.topo.compute_route(from, to, &isolated) else {
            return;
        };
        let hops = (path.len() - 1) as u64;
        self.ledger.charge(&frame, hops);
        // Relays that withhold certificates swallow routed ones.
        let is_cert = frame[1] == RepMessType::RepBroadcast as u8;
        if is_cert
            && path[1..path.len() - 1]
                .iter()
                .any(|r| self.profiles.get(r).is_some_and(|p| p.drops_certificates))
        {
            return;
        }
        self.push(
            self.now + hops * self.cfg.hop_latency_ms,
            Event::Deliver {
                from,
                to,
                frame,
                one_hop: false,
            },
        );
    }

    fn flood(&mut self, from: NodeId, frame: Vec<u8>) {
        let depth = self.topo.hops_from(from, &BTreeSet::new());
        let reached = depth.iter().filter(|&&d| d != u32::MAX).count() as u64;
        self.ledger.charge(&frame, reached);
        let lat = self.cfg.hop_latency_ms;
        for (i, &d) in depth.iter().enumerate() {
            if d == 0 || d == u32::MAX {
                continue;
            }
            self.push(
                self.now + d as u64 * lat,
                Event::Deliver {
                    from,
                    to: NodeId(i as u32 + 1),
                    frame: frame.clone(),
                    one_hop: false,
                },
            );
        }
    }

    fn on_deliver(&mut self, from: NodeId, to: NodeId, frame: Vec<u8>, one_hop: bool) {
        if one_hop && !self.topo.are_neighbors(from, to) {
            return;
        }
        if frame[1] == RepMessType::Challenge as u8
            && self
                .profiles
                .get(&to)
                .is_some_and(|p| p.silent_on_challenge)
        {
            return;
        }
        self.call(to, |n, ctx, out| n.receive(ctx, &frame, out));
    }

    // ---- adversaries ----

    /// Applies the sender's misbehaviour to an outgoing control frame.
    /// `None` means the frame is withheld.
    fn adversary_rewrite(&mut self, from: NodeId, frame: Vec<u8>) -> Option<Vec<u8>> {
        let Some(p) = self.profiles.get(&from) else {
            return Some(frame);
        };
        let mut f = decode_rep_mess(&frame).ok()?;
        let secret = self.nodes[idx(from)].secret().clone();
        let threshold = self.nodes[idx(from)]
            .params()
            .update
            .maliciousness_threshold;
        let subject = f.header.subject;
        let covers = p.colludes_with(subject);
        match f.header.mess_type {
            RepMessType::RepResponse | RepMessType::AlarmVote => {
                let forced = if covers {
                    RepVal::ZERO
                } else if p.false_accuser {
                    RepVal::ONE
                } else {
                    return Some(frame);
                };
                f.header.rep_val = forced;
                if f.header.mess_type == RepMessType::RepResponse {
                    f.payload = SignedResponse::payload(true).to_vec();
                }
            }
            RepMessType::RepBroadcast => {
                let mut cert = GroupTrustCertificate::decode(&f.payload).ok()?;
                if cert.issuer == from {
                    if !(p.drops_feedback_in_aggregate || p.tampers_feedback) {
                        return Some(frame);
                    }
                    let adverse = |r: &SignedResponse| r.maliciousness.to_f64() >= threshold;
                    if p.drops_feedback_in_aggregate {
                        cert.responses.retain(|r| !adverse(r));
                    } else {
                        for r in cert.responses.iter_mut().filter(|r| adverse(r)) {
                            r.maliciousness = RepVal::ZERO;
                        }
                    }
                    cert.group_trust = certificate_group_trust(&cert.responses, threshold).0;
                    cert.resign(&secret);
                } else if p.drops_certificates {
                    return None;
                } else if p.tampers_certificates {
                    cert.group_trust = if cert.group_trust == RepVal::ONE {
                        RepVal::ZERO
                    } else {
                        RepVal::ONE
                    };
                } else {
                    return Some(frame);
                }
                f.header.rep_val = cert.group_trust;
                f.payload = cert.encode();
            }
            RepMessType::CertExchange if p.drops_certificates => return None,
            _ => return Some(frame),
        }
        Some(encode_rep_mess(&f.header, &f.payload, &secret).expect("payload size unchanged"))
    }

    fn on_false_accuse(&mut self, node: NodeId) {
        let interval = self.cfg.false_accusation_interval_s * 1000;
        self.push(self.now + interval, Event::FalseAccuse { node });
        let p = &self.profiles[&node];
        let isolated = self.nodes[idx(node)].isolated();
        let targets: Vec<NodeId> = self
            .topo
            .neighbors(node)
            .iter()
            .copied()
            .filter(|&n| !p.colludes_with(n) && !isolated.contains(&n))
            .collect();
        if targets.is_empty() {
            return;
        }
        let target = targets[self.traffic_rng.random_range(0..targets.len())];
        self.log.push(
            self.now,
            EventKind::FalseAccusation,
            node,
            Some(target),
            String::new(),
        );
        self.call(node, |n, ctx, out| {
            let _ = n.initiate_challenge(ctx, target, 1.0, out);
        });
    }

    // ---- mobility and exchange ----

    fn on_mobility(&mut self) {
        let step = self.cfg.topology_step_ms;
        self.push(self.now + step, Event::Mobility);
        let Some(wp) = self.waypoint else {
            return;
        };
        let legs = step_mobility(
            &mut self.mobility,
            &wp,
            step as f64 / 1000.0,
            &mut self.mob_rng,
        );
        for l in legs {
            self.log.push(
                self.now,
                EventKind::Waypoint,
                NodeId(l.index as u32 + 1),
                None,
                details!(
                    "x" = format!("{:.2}", l.waypoint.x),
                    "y" = format!("{:.2}", l.waypoint.y),
                    "speed" = format!("{:.3}", l.speed),
                ),
            );
        }
        let next = Topology::from_positions(&self.mobility.positions(), self.cfg.tx_range_m);
        let diff = self.topo.diff(&next);
        self.topo = next;
        self.ticks += 1;
        if self.ticks.is_multiple_of(10) {
            for n in &mut self.nodes {
                n.monitor_mut().prune(self.now);
            }
        }
        if diff.up.is_empty() && diff.down.is_empty() {
            return;
        }
        let mut per: BTreeMap<NodeId, (Vec<NodeId>, Vec<NodeId>)> = BTreeMap::new();
        for &(a, b) in &diff.up {
            self.log
                .push(self.now, EventKind::LinkUp, a, Some(b), String::new());
            per.entry(a).or_default().0.push(b);
            per.entry(b).or_default().0.push(a);
        }
        for &(a, b) in &diff.down {
            self.log
                .push(self.now, EventKind::LinkDown, a, Some(b), String::new());
            per.entry(a).or_default().1.push(b);
            per.entry(b).or_default().1.push(a);
        }
        for (n, (mut up, mut down)) in per {
            up.sort();
            down.sort();
            self.call(n, |node, ctx, out| {
                node.on_link_change(ctx, &up, &down, out)
            });
        }
    }

    fn on_exchange(&mut self) {
        let ex = self.nodes[0].params().exchange_interval_ms;
        self.push(self.now + ex, Event::Exchange);
        self.log.push(
            self.now,
            EventKind::ExchangeRound,
            NodeId::AUTHORITY,
            None,
            String::new(),
        );
        for n in &mut self.nodes {
            n.replenish(self.now);
        }
        for i in 1..=self.cfg.node_count {
            self.call(NodeId(i), |n, ctx, out| n.exchange_offer(ctx, None, out));
        }
    }

    // ---- data plane ----

    fn drop_packet(&mut self, at: NodeId, pkt: &Packet, reason: DropReason) {
        *self.ledger.flows[pkt.flow]
            .dropped
            .entry(reason)
            .or_default() += 1;
        if self.cfg.log_packets {
            self.log.push(
                self.now,
                EventKind::PktDropped,
                at,
                None,
                details!("pkt" = pkt.id, "flow" = pkt.flow, "reason" = reason.name()),
            );
        }
    }

    fn discover(&mut self, src: NodeId, dst: NodeId) -> Option<Vec<NodeId>> {
        self.ledger.route_discoveries += 1;
        self.ledger.discovery_messages += self.cfg.node_count as u64;
        let isolated = self.nodes[idx(src)].isolated();
        self.topo.compute_route(src, dst, isolated).ok()
    }

    fn on_flow_send(&mut self, flow: usize) {
        let period = 1000.0 / self.cfg.flow_rate_pps;
        let f = &mut self.flows[flow];
        f.next_k += 1;
        let next = f.start_ms + (f.next_k as f64 * period).round() as u64;
        let (src, dst) = (f.src, f.dst);
        self.push(next, Event::FlowSend { flow });

        self.next_packet += 1;
        let id = self.next_packet;
        self.ledger.flows[flow].sent += 1;
        let valid = self.flows[flow]
            .route
            .as_ref()
            .is_some_and(|r| self.topo.route_valid(r, self.nodes[idx(src)].isolated()));
        if !valid {
            self.flows[flow].route = self.discover(src, dst);
        }
        if self.cfg.log_packets {
            self.log.push(
                self.now,
                EventKind::PktSent,
                src,
                Some(dst),
                details!("pkt" = id, "flow" = flow),
            );
        }
        let mut pkt = Packet {
            id,
            flow,
            dst,
            route: vec![src],
            hop: 0,
            digest: payload_digest(id),
            watchers: Vec::new(),
        };
        match &self.flows[flow].route {
            Some(r) => pkt.route = r.clone(),
            None => {
                self.drop_packet(src, &pkt, DropReason::NoRoute);
                return;
            }
        }
        self.enqueue(src, pkt);
    }

    fn enqueue(&mut self, at: NodeId, mut pkt: Packet) {
        if self.buffers[idx(at)].fifo.len() >= self.cfg.buffer_capacity {
            self.drop_packet(at, &pkt, DropReason::BufferFull);
            self.report_all(&mut pkt, at, Outcome::Dropped);
            return;
        }
        let b = &mut self.buffers[idx(at)];
        b.fifo.push_back(pkt);
        if !b.scheduled {
            b.scheduled = true;
            let at_ms = self.now.max(b.next_free_ms);
            self.push(at_ms, Event::Service { node: at });
        }
    }

    fn on_service(&mut self, x: NodeId) {
        let slot = self.cfg.service_slot_ms;
        let b = &mut self.buffers[idx(x)];
        b.scheduled = false;
        let Some(pkt) = b.fifo.pop_front() else {
            return;
        };
        b.next_free_ms = self.now + slot;
        if !b.fifo.is_empty() {
            b.scheduled = true;
            let at = b.next_free_ms;
            self.push(at, Event::Service { node: x });
        }
        self.transmit(x, pkt);
    }

    fn transmit(&mut self, x: NodeId, mut pkt: Packet) {
        let mut next = pkt.route[pkt.hop + 1];
        let usable =
            self.topo.are_neighbors(x, next) && !self.nodes[idx(x)].isolated().contains(&next);
        if !usable {
            // Salvage from here.
            match self.discover(x, pkt.dst) {
                Some(r) => {
                    pkt.route.truncate(pkt.hop);
                    pkt.route.extend(r);
                    next = pkt.route[pkt.hop + 1];
                }
                None => {
                    self.drop_packet(x, &pkt, DropReason::NoRoute);
                    return;
                }
            }
        }
        let mut outcome = Outcome::Forwarded;
        if pkt.hop > 0 {
            if let Some(p) = self.profiles.get(&x) {
                if p.tamper_prob > 0.0 && self.traffic_rng.random::<f64>() < p.tamper_prob {
                    pkt.digest ^= 1;
                    outcome = Outcome::Modified;
                }
            }
        }
        self.report_all(&mut pkt, x, outcome);
        if next != pkt.dst {
            // The sender and anyone else in range of both ends overhears the
            // hand-off and can listen for the retransmission.
            let overhearers: Vec<NodeId> = std::iter::once(x)
                .chain(
                    self.topo
                        .neighbors(x)
                        .iter()
                        .copied()
                        .filter(|&w| w != next && self.topo.are_neighbors(w, next)),
                )
                .collect();
            for w in overhearers {
                let prob = self.nodes[idx(w)].params().monitor.sampling_prob;
                if self.traffic_rng.random::<f64>() < prob {
                    self.nodes[idx(w)].monitor_sample(next, pkt.id, self.now);
                    pkt.watchers.push(w);
                }
            }
        }
        let keys = self.nodes[idx(x)].piggyback_keys();
        self.ledger.piggyback_bytes += (keys.len() * CertKey::ENCODED_LEN) as u64;
        if self.cfg.log_packets {
            self.log.push(
                self.now,
                EventKind::PktForwarded,
                x,
                Some(next),
                details!("pkt" = pkt.id, "outcome" = outcome.name()),
            );
        }
        pkt.hop += 1;
        self.push(
            self.now + self.cfg.hop_latency_ms,
            Event::Arrive {
                from: x,
                to: next,
                pkt,
                keys,
            },
        );
    }

    fn on_arrive(&mut self, from: NodeId, y: NodeId, mut pkt: Packet, keys: Vec<CertKey>) {
        if !keys.is_empty() {
            self.nodes[idx(y)].note_piggyback(from, &keys);
        }
        if y == pkt.dst {
            let fc = &mut self.ledger.flows[pkt.flow];
            fc.delivered += 1;
            let intact = pkt.digest == payload_digest(pkt.id);
            if !intact {
                fc.delivered_modified += 1;
            }
            if self.cfg.log_packets {
                self.log.push(
                    self.now,
                    EventKind::PktDelivered,
                    y,
                    Some(pkt.src()),
                    details!("pkt" = pkt.id, "intact" = intact as u8),
                );
            }
            return;
        }
        if let Some(p) = self.profiles.get(&y) {
            if p.drop_prob > 0.0 && self.traffic_rng.random::<f64>() < p.drop_prob {
                self.drop_packet(y, &pkt, DropReason::Malicious);
                self.report_all(&mut pkt, y, Outcome::Dropped);
                return;
            }
        } else if self.nodes[idx(y)].isolated().contains(&pkt.src()) {
            self.drop_packet(y, &pkt, DropReason::Isolated);
            return;
        }
        self.enqueue(y, pkt);
    }

    fn report_all(&mut self, pkt: &mut Packet, subject: NodeId, outcome: Outcome) {
        for w in std::mem::take(&mut pkt.watchers) {
            self.report(w, subject, pkt.id, outcome);
        }
    }

    fn report(&mut self, watcher: NodeId, subject: NodeId, packet_id: u64, outcome: Outcome) {
        let ev = ForwardingEvent {
            time_ms: self.now,
            subject,
            packet_id,
            outcome,
        };
        self.call(watcher, |n, ctx, out| {
            n.monitor_observe(ctx, &ev, out);
        });
    }

    // ---- notes ----

    fn log_note(&mut self, actor: NodeId, note: Note) {
        let t = self.now;
        let (kind, subject, d) = match note {
            Note::Observed {
                subject,
                outcome,
                counts,
            } => (
                EventKind::Observed,
                subject,
                details!(
                    "outcome" = outcome.name(),
                    "m" = format!("{:.4}", counts.maliciousness().unwrap_or(0.0)),
                    "n" = counts.observed(),
                ),
            ),
            Note::Suspicion {
                subject,
                maliciousness,
            } => (
                EventKind::Suspicion,
                subject,
                details!("m" = format!("{maliciousness:.4}")),
            ),
            Note::ChallengeSent { subject } => (EventKind::Challenge, subject, String::new()),
            Note::ChallengeAcked { subject } => (EventKind::ChallengeAck, subject, String::new()),
            Note::ChallengeLapsed { subject } => {
                (EventKind::ChallengeLapsed, subject, String::new())
            }
            Note::CollectionOpened { accuser, expected } => (
                EventKind::Collection,
                accuser,
                details!("expected" = expected),
            ),
            Note::ResponseSent {
                subject,
                maliciousness,
                informed,
            } => (
                EventKind::Response,
                subject,
                details!(
                    "m" = format!("{:.4}", maliciousness.to_f64()),
                    "informed" = informed as u8,
                ),
            ),
            Note::CertificateIssued {
                key,
                group_trust,
                adverse,
                respondents,
                informed,
            } => (
                EventKind::CertIssued,
                key.subject,
                details!(
                    "key" = key_str(&key),
                    "group_trust" = format!("{:.4}", group_trust.to_f64()),
                    "adverse" = adverse as u8,
                    "respondents" = respondents,
                    "informed" = informed,
                ),
            ),
            Note::CertificateAccepted {
                key,
                t_old,
                t_new,
                beta,
                k,
            } => (
                EventKind::CertAccepted,
                key.subject,
                details!(
                    "key" = key_str(&key),
                    "t_old" = format!("{t_old:.4}"),
                    "t_new" = format!("{t_new:.4}"),
                    "beta" = format!("{beta:.4}"),
                    "k" = k,
                ),
            ),
            Note::CertificateRepeat { key, k } => (
                EventKind::CertRepeat,
                key.subject,
                details!("key" = key_str(&key), "k" = k),
            ),
            Note::CertificateRejected { key, verdict } => (
                EventKind::CertRejected,
                key.subject,
                details!("key" = key_str(&key), "verdict" = verdict.name()),
            ),
            Note::CertificateCached { key } => (
                EventKind::CertCached,
                key.subject,
                details!("key" = key_str(&key)),
            ),
            Note::TamperEvidence { key, from } => (
                EventKind::TamperEvidence,
                key.subject,
                details!("key" = key_str(&key), "from" = from),
            ),
            Note::Escalation { subject, reason } => (
                EventKind::Escalation,
                subject,
                details!("reason" = reason.name()),
            ),
            Note::AlarmRaised { subject, alarm_id } => {
                (EventKind::Alarm, subject, details!("id" = alarm_id))
            }
            Note::AlarmSuppressed { subject } => {
                (EventKind::AlarmSuppressed, subject, String::new())
            }
            Note::VoteCast {
                subject,
                raiser,
                malicious,
            } => (
                EventKind::Vote,
                subject,
                details!("raiser" = raiser, "malicious" = malicious as u8),
            ),
            Note::Abstained { subject, raiser } => {
                (EventKind::Abstain, subject, details!("raiser" = raiser))
            }
            Note::VotingClosed {
                subject,
                alarm_id,
                malicious,
                total,
                isolated,
            } => (
                EventKind::VotingClosed,
                subject,
                details!(
                    "id" = alarm_id,
                    "malicious" = malicious,
                    "total" = total,
                    "isolated" = isolated as u8,
                ),
            ),
            Note::Isolated { subject, raiser } => {
                (EventKind::Isolated, subject, details!("raiser" = raiser))
            }
            Note::FrameRejected { sender, reason } => (
                EventKind::FrameRejected,
                sender,
                details!("reason" = reason),
            ),
        };
        self.log.push(t, kind, actor, Some(subject), d);
    }
}
