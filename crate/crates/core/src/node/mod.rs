//! Per-node protocol state machine.
//!
//! Handlers never touch the network directly. They take a [`Ctx`] describing
//! the node's current surroundings and push [`Action`]s that the simulator
//! carries out. Everything a node learns arrives as a signed frame, a
//! forwarding observation or a timer.

pub mod cache;
pub mod monitor;
pub mod propagation;
pub mod table;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore};
use thiserror::Error;

use crate::messages::{
    decode_rep_mess, encode_rep_mess, verify_group_certificate, AlarmPayload, Authority, CertKey,
    ExchangeOffer, Frame, GroupTrustCertificate, NodeId, RepMessType, RepVal, ReputationHeader,
    Secret, SignedResponse, TagVerifier, Verdict, VoteRef,
};
use crate::trust_math::{self, TrustError, TrustValue, UpdateParams, MALICIOUS_BELOW};

pub use cache::{CachedCertificate, CertificateCache};
pub use monitor::{ForwardingEvent, Monitor, MonitorParams, Outcome, Suspicion, WindowCounts};
pub use propagation::{compare_offer, exchange_certificates, initial_flood, ExchangeDelta};
pub use table::{ReputationTable, TableEntry};

/// When the replenishment factor is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplenishMode {
    /// Once per exchange interval, driven by [`Node::replenish`].
    Interval,
    /// Folded into every certificate update.
    Certificate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    pub update: UpdateParams,
    pub monitor: MonitorParams,
    /// `w_i` given to every informed respondent.
    pub respondent_weight: f64,
    pub challenge_ack_timeout_ms: u64,
    pub collection_window_ms: u64,
    /// Minimum spacing between two challenges of the same suspect by one
    /// accuser.
    pub challenge_cooldown_ms: u64,
    /// No new challenges are started at or after this time.
    pub challenge_until_ms: Option<u64>,
    pub f_fraction: f64,
    pub exchange_interval_ms: u64,
    pub replenish_mode: ReplenishMode,
    pub interaction_window_ms: u64,
    pub vote_window_ms: u64,
    pub vote_quorum: usize,
    pub alarm_backoff_max_ms: u64,
    pub piggyback_budget: usize,
    pub cache_capacity: usize,
    /// Observed samples a respondent needs before its feedback carries
    /// weight.
    pub respondent_min_samples: u32,
    /// Observed samples a voter without a table entry needs to vote.
    pub vote_min_samples: u32,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        let monitor = MonitorParams::default();
        ProtocolParams {
            update: UpdateParams::default(),
            monitor,
            respondent_weight: 1.0,
            challenge_ack_timeout_ms: 2_000,
            collection_window_ms: 3_000,
            challenge_cooldown_ms: 60_000,
            challenge_until_ms: None,
            f_fraction: 0.5,
            exchange_interval_ms: 60_000,
            replenish_mode: ReplenishMode::Interval,
            interaction_window_ms: 120_000,
            vote_window_ms: 2_000,
            vote_quorum: 3,
            alarm_backoff_max_ms: 500,
            piggyback_budget: 2,
            cache_capacity: 256,
            respondent_min_samples: 3,
            vote_min_samples: monitor.min_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error(transparent)]
    Trust(#[from] TrustError),
    #[error("{name} must be in [0, 1], got {value}")]
    OutOfUnit { name: &'static str, value: f64 },
    #[error("{0} must be positive")]
    NotPositive(&'static str),
}

impl ProtocolParams {
    /// Frames older than this, or repeating a seen (sender, nonce), are
    /// discarded.
    pub fn replay_window_ms(&self) -> u64 {
        2 * self.exchange_interval_ms
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        self.update.validate()?;
        for (name, value) in [
            ("sampling_prob", self.monitor.sampling_prob),
            ("monitor_threshold", self.monitor.threshold),
            ("f_fraction", self.f_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ParamError::OutOfUnit { name, value });
            }
        }
        if self.respondent_weight.is_nan() || self.respondent_weight <= 0.0 {
            return Err(ParamError::NotPositive("respondent_weight"));
        }
        for (name, v) in [
            ("monitor_window_ms", self.monitor.window_ms),
            ("exchange_interval_ms", self.exchange_interval_ms),
            ("challenge_ack_timeout_ms", self.challenge_ack_timeout_ms),
            ("collection_window_ms", self.collection_window_ms),
            ("vote_window_ms", self.vote_window_ms),
            ("cache_capacity", self.cache_capacity as u64),
        ] {
            if v == 0 {
                return Err(ParamError::NotPositive(name));
            }
        }
        Ok(())
    }
}

/// The node's view of the world for one handler call.
pub struct Ctx<'a> {
    pub now_ms: u64,
    /// Current 1-hop neighbours, ascending.
    pub neighbors: &'a [NodeId],
    pub keys: &'a Authority,
    pub rng: &'a mut dyn RngCore,
}

impl Ctx<'_> {
    fn is_neighbor(&self, n: NodeId) -> bool {
        self.neighbors.binary_search(&n).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Timer {
    ChallengeAck { suspect: NodeId },
    CollectionClose { collection: u64 },
    AlarmBackoff { subject: NodeId },
    VoteClose { alarm_id: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// One hop to a neighbour; lost if the link is gone on arrival.
    Send {
        to: NodeId,
        frame: Vec<u8>,
    },
    /// Multi-hop unicast along the current shortest path.
    Route {
        to: NodeId,
        frame: Vec<u8>,
    },
    /// One hop to each listed neighbour.
    Multicast {
        to: Vec<NodeId>,
        frame: Vec<u8>,
    },
    /// One hop to every current neighbour.
    Broadcast {
        frame: Vec<u8>,
    },
    /// Network-wide flood.
    Flood {
        frame: Vec<u8>,
    },
    SetTimer {
        at_ms: u64,
        timer: Timer,
    },
    Note(Note),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EscalationReason {
    SilentOnChallenge,
    DroppedFeedback,
}

impl EscalationReason {
    pub fn name(self) -> &'static str {
        match self {
            EscalationReason::SilentOnChallenge => "silent_on_challenge",
            EscalationReason::DroppedFeedback => "dropped_feedback",
        }
    }
}

/// Observable protocol events, for logging and metrics.
#[derive(Debug, Clone, PartialEq)]
pub enum Note {
    Observed {
        subject: NodeId,
        outcome: Outcome,
        counts: WindowCounts,
    },
    Suspicion {
        subject: NodeId,
        maliciousness: f64,
    },
    ChallengeSent {
        subject: NodeId,
    },
    ChallengeAcked {
        subject: NodeId,
    },
    ChallengeLapsed {
        subject: NodeId,
    },
    CollectionOpened {
        accuser: NodeId,
        expected: usize,
    },
    ResponseSent {
        subject: NodeId,
        maliciousness: RepVal,
        informed: bool,
    },
    CertificateIssued {
        key: CertKey,
        group_trust: RepVal,
        adverse: bool,
        respondents: usize,
        informed: usize,
    },
    CertificateAccepted {
        key: CertKey,
        t_old: f64,
        t_new: f64,
        beta: f64,
        k: u32,
    },
    CertificateRepeat {
        key: CertKey,
        k: u32,
    },
    CertificateRejected {
        key: CertKey,
        verdict: Verdict,
    },
    CertificateCached {
        key: CertKey,
    },
    TamperEvidence {
        key: CertKey,
        from: NodeId,
    },
    Escalation {
        subject: NodeId,
        reason: EscalationReason,
    },
    AlarmRaised {
        subject: NodeId,
        alarm_id: u64,
    },
    AlarmSuppressed {
        subject: NodeId,
    },
    VoteCast {
        subject: NodeId,
        raiser: NodeId,
        malicious: bool,
    },
    Abstained {
        subject: NodeId,
        raiser: NodeId,
    },
    VotingClosed {
        subject: NodeId,
        alarm_id: u64,
        malicious: usize,
        total: usize,
        isolated: bool,
    },
    Isolated {
        subject: NodeId,
        raiser: NodeId,
    },
    FrameRejected {
        sender: NodeId,
        reason: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChallengeError {
    #[error("a challenge of {0} is already open")]
    ChallengeAlreadyOpen(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChallengeState {
    pub subject: NodeId,
    pub initiated_at_ms: u64,
    pub deadline_ms: u64,
}

/// An accused node's open collection of feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct Collection {
    pub id: u64,
    pub accuser: NodeId,
    pub opened_at_ms: u64,
    pub expected: BTreeSet<NodeId>,
    pub collected: BTreeMap<NodeId, SignedResponse>,
    pub deadline_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlarmState {
    pub subject: NodeId,
    /// Voter -> (malicious, signed vote frame).
    pub votes: BTreeMap<NodeId, (bool, Vec<u8>)>,
    pub voting_deadline_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OwnResponse {
    at_ms: u64,
    maliciousness: RepVal,
    informed: bool,
}

/// Strict majority of malicious votes among at least `quorum` votes.
pub fn tally(votes: impl IntoIterator<Item = bool>, quorum: usize) -> (usize, usize, bool) {
    let (mut mal, mut total) = (0, 0);
    for v in votes {
        total += 1;
        mal += v as usize;
    }
    (mal, total, total >= quorum && 2 * mal > total)
}

#[derive(Debug, Clone)]
pub struct Node {
    id: NodeId,
    secret: Secret,
    params: ProtocolParams,
    monitor: Monitor,
    table: ReputationTable,
    cache: CertificateCache,
    nonce: u64,
    challenges: BTreeMap<NodeId, ChallengeState>,
    last_challenge: BTreeMap<NodeId, u64>,
    collection: Option<Collection>,
    collection_seq: u64,
    responded: BTreeMap<NodeId, OwnResponse>,
    alarms_seen: BTreeMap<NodeId, u64>,
    backoff_pending: BTreeSet<NodeId>,
    open_alarms: BTreeMap<u64, AlarmState>,
    voted: BTreeSet<(NodeId, u64)>,
    isolated: BTreeSet<NodeId>,
    last_contact: BTreeMap<NodeId, u64>,
    seen: BTreeMap<(NodeId, u64), u64>,
    last_replay_prune: u64,
    wanted: BTreeMap<CertKey, NodeId>,
}

impl Node {
    pub fn new(id: NodeId, secret: Secret, params: ProtocolParams) -> Self {
        Node {
            id,
            secret,
            monitor: Monitor::new(params.monitor),
            cache: CertificateCache::new(params.cache_capacity),
            params,
            table: ReputationTable::default(),
            nonce: 0,
            challenges: BTreeMap::new(),
            last_challenge: BTreeMap::new(),
            collection: None,
            collection_seq: 0,
            responded: BTreeMap::new(),
            alarms_seen: BTreeMap::new(),
            backoff_pending: BTreeSet::new(),
            open_alarms: BTreeMap::new(),
            voted: BTreeSet::new(),
            isolated: BTreeSet::new(),
            last_contact: BTreeMap::new(),
            seen: BTreeMap::new(),
            last_replay_prune: 0,
            wanted: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn secret(&self) -> &Secret {
        &self.secret
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn table(&self) -> &ReputationTable {
        &self.table
    }

    pub fn cache(&self) -> &CertificateCache {
        &self.cache
    }

    pub fn monitor(&self) -> &Monitor {
        &self.monitor
    }

    pub fn monitor_mut(&mut self) -> &mut Monitor {
        &mut self.monitor
    }

    pub fn isolated(&self) -> &BTreeSet<NodeId> {
        &self.isolated
    }

    pub fn open_challenge(&self, suspect: NodeId) -> Option<&ChallengeState> {
        self.challenges.get(&suspect)
    }

    pub fn collection(&self) -> Option<&Collection> {
        self.collection.as_ref()
    }

    pub fn open_alarm(&self, alarm_id: u64) -> Option<&AlarmState> {
        self.open_alarms.get(&alarm_id)
    }

    fn next_nonce(&mut self) -> u64 {
        self.nonce += 1;
        self.nonce
    }

    fn frame(
        &mut self,
        ty: RepMessType,
        subject: NodeId,
        rep_val: RepVal,
        payload: &[u8],
        now_ms: u64,
    ) -> Vec<u8> {
        let nonce = self.next_nonce();
        let h = ReputationHeader::new(ty, self.id, subject, rep_val, now_ms, nonce);
        encode_rep_mess(&h, payload, &self.secret).expect("control payloads fit in a frame")
    }

    fn interacted(&self, ctx: &Ctx, subject: NodeId) -> bool {
        ctx.is_neighbor(subject)
            || self
                .last_contact
                .get(&subject)
                .is_some_and(|&t| ctx.now_ms.saturating_sub(t) <= self.params.interaction_window_ms)
    }

    // ---- monitor ----

    /// Registers a packet this node handed to `neighbor` for forwarding and
    /// chose to watch.
    pub fn monitor_sample(&mut self, neighbor: NodeId, packet_id: u64, now_ms: u64) {
        self.monitor.sample(neighbor, packet_id, now_ms);
    }

    /// Feeds one overheard forwarding outcome. A resulting suspicion may
    /// start a challenge.
    pub fn monitor_observe(
        &mut self,
        ctx: &mut Ctx,
        ev: &ForwardingEvent,
        out: &mut Vec<Action>,
    ) -> Option<Suspicion> {
        let counts = self.monitor.record(ev, ctx.neighbors)?;
        out.push(Action::Note(Note::Observed {
            subject: ev.subject,
            outcome: ev.outcome,
            counts,
        }));
        let s = self.monitor.judge(ev.subject, &counts)?;
        out.push(Action::Note(Note::Suspicion {
            subject: s.subject,
            maliciousness: s.maliciousness,
        }));
        if self.should_challenge(ctx.now_ms, s.subject) {
            let _ = self.initiate_challenge(ctx, s.subject, s.maliciousness, out);
        } else if self.table.trust_of(s.subject).get() < MALICIOUS_BELOW
            && !self.alarm_suppressed(ctx.now_ms, s.subject)
        {
            // Already below the malicious threshold and still misbehaving:
            // a previous vote fell short, so ask again.
            self.raise_global_alarm(ctx, s.subject, out);
        }
        Some(s)
    }

    fn should_challenge(&self, now_ms: u64, suspect: NodeId) -> bool {
        if self.challenges.contains_key(&suspect) || self.isolated.contains(&suspect) {
            return false;
        }
        if self.params.challenge_until_ms.is_some_and(|t| now_ms >= t) {
            return false;
        }
        if self
            .last_challenge
            .get(&suspect)
            .is_some_and(|&t| now_ms < t + self.params.challenge_cooldown_ms)
        {
            return false;
        }
        self.table.trust_of(suspect).get() >= MALICIOUS_BELOW
    }

    // ---- reputation collector ----

    pub fn initiate_challenge(
        &mut self,
        ctx: &mut Ctx,
        suspect: NodeId,
        maliciousness: f64,
        out: &mut Vec<Action>,
    ) -> Result<(), ChallengeError> {
        if self.challenges.contains_key(&suspect) {
            return Err(ChallengeError::ChallengeAlreadyOpen(suspect));
        }
        let now = ctx.now_ms;
        let frame = self.frame(
            RepMessType::Challenge,
            suspect,
            RepVal::from_f64(maliciousness),
            &[],
            now,
        );
        let deadline = now + self.params.challenge_ack_timeout_ms;
        self.challenges.insert(
            suspect,
            ChallengeState {
                subject: suspect,
                initiated_at_ms: now,
                deadline_ms: deadline,
            },
        );
        self.last_challenge.insert(suspect, now);
        out.push(Action::Send { to: suspect, frame });
        out.push(Action::SetTimer {
            at_ms: deadline,
            timer: Timer::ChallengeAck { suspect },
        });
        out.push(Action::Note(Note::ChallengeSent { subject: suspect }));
        Ok(())
    }

    fn handle_challenge(&mut self, ctx: &mut Ctx, frame: &Frame, out: &mut Vec<Action>) {
        let accuser = frame.header.sender;
        if frame.header.subject != self.id {
            return;
        }
        let now = ctx.now_ms;
        let ack = self.frame(RepMessType::ChallengeAck, self.id, RepVal::ZERO, &[], now);
        out.push(Action::Send {
            to: accuser,
            frame: ack,
        });
        if self.collection.is_some() || ctx.neighbors.is_empty() {
            return;
        }
        self.collection_seq += 1;
        let id = self.collection_seq;
        let deadline = now + self.params.collection_window_ms;
        let expected: BTreeSet<NodeId> = ctx.neighbors.iter().copied().collect();
        out.push(Action::Note(Note::CollectionOpened {
            accuser,
            expected: expected.len(),
        }));
        self.collection = Some(Collection {
            id,
            accuser,
            opened_at_ms: now,
            expected,
            collected: BTreeMap::new(),
            deadline_ms: deadline,
        });
        let vb = self.frame(RepMessType::VerifyBehavior, self.id, RepVal::ZERO, &[], now);
        out.push(Action::Broadcast { frame: vb });
        out.push(Action::SetTimer {
            at_ms: deadline,
            timer: Timer::CollectionClose { collection: id },
        });
    }

    fn handle_verify_behavior(&mut self, ctx: &mut Ctx, frame: &Frame, out: &mut Vec<Action>) {
        let accused = frame.header.sender;
        if frame.header.subject != accused || !ctx.is_neighbor(accused) {
            return;
        }
        let now = ctx.now_ms;
        let counts = self.monitor.counts(accused, now);
        let informed = counts.observed() >= self.params.respondent_min_samples;
        let m = if informed {
            RepVal::from_f64(counts.maliciousness().unwrap_or(0.0))
        } else {
            RepVal::ZERO
        };
        let nonce = self.next_nonce();
        let (_, bytes) =
            SignedResponse::sign(self.id, accused, m, informed, now, nonce, &self.secret);
        self.responded.insert(
            accused,
            OwnResponse {
                at_ms: now,
                maliciousness: m,
                informed,
            },
        );
        out.push(Action::Send {
            to: accused,
            frame: bytes,
        });
        out.push(Action::Note(Note::ResponseSent {
            subject: accused,
            maliciousness: m,
            informed,
        }));
    }

    fn handle_response(&mut self, ctx: &mut Ctx, frame: &Frame, out: &mut Vec<Action>) {
        if frame.header.subject != self.id {
            return;
        }
        let Ok(resp) = SignedResponse::from_frame(frame) else {
            return;
        };
        let Some(c) = self.collection.as_mut() else {
            return;
        };
        if !c.expected.contains(&resp.respondent) {
            return;
        }
        c.collected.entry(resp.respondent).or_insert(resp);
        if c.collected.len() == c.expected.len() {
            self.aggregate_responses(ctx, out);
        }
    }

    /// Closes the open collection: builds, caches and delivers the group
    /// trust certificate.
    pub fn aggregate_responses(&mut self, ctx: &mut Ctx, out: &mut Vec<Action>) {
        let Some(c) = self.collection.take() else {
            return;
        };
        let now = ctx.now_ms;
        let responses: Vec<SignedResponse> = c.collected.into_values().collect();
        let cert = GroupTrustCertificate::build(
            self.id,
            self.id,
            responses,
            now,
            self.params.update.maliciousness_threshold,
            &self.secret,
        );
        let informed: BTreeSet<NodeId> = cert
            .responses
            .iter()
            .filter(|r| r.informed)
            .map(|r| r.respondent)
            .collect();
        let adverse = cert.is_adverse(self.params.update.maliciousness_threshold);
        out.push(Action::Note(Note::CertificateIssued {
            key: cert.key(),
            group_trust: cert.group_trust,
            adverse,
            respondents: cert.responses.len(),
            informed: informed.len(),
        }));
        let mut to: BTreeSet<NodeId> =
            initial_flood(ctx.neighbors, self.params.f_fraction, ctx.rng)
                .into_iter()
                .collect();
        to.extend(informed);
        to.remove(&self.id);
        let body = cert.encode();
        let frame = self.frame(
            RepMessType::RepBroadcast,
            cert.subject,
            cert.group_trust,
            &body,
            now,
        );
        if adverse {
            self.cache_certificate(CachedCertificate::new(cert), out);
        }
        if !to.is_empty() {
            out.push(Action::Multicast {
                to: to.into_iter().collect(),
                frame,
            });
        }
    }

    /// Stores a certificate this node compiled itself elsewhere, skipping
    /// verification and table updates.
    pub fn hold_own_certificate(&mut self, cert: GroupTrustCertificate, out: &mut Vec<Action>) {
        debug_assert_eq!(cert.issuer, self.id);
        self.cache_certificate(CachedCertificate::new(cert), out);
    }

    fn cache_certificate(&mut self, c: CachedCertificate, out: &mut Vec<Action>) {
        let key = c.cert.key();
        if self.cache.contains(&key) {
            return;
        }
        self.cache.insert(c);
        self.wanted.remove(&key);
        out.push(Action::Note(Note::CertificateCached { key }));
    }

    // ---- reputation maintainer ----

    /// Verifies a received certificate and folds it into the table.
    pub fn handle_certificate(
        &mut self,
        ctx: &mut Ctx,
        from: NodeId,
        cert: GroupTrustCertificate,
        out: &mut Vec<Action>,
    ) {
        let key = cert.key();
        let threshold = self.params.update.maliciousness_threshold;
        if let Some(held) = self.cache.get(&key) {
            if held.cert != cert {
                // Two copies of one certificate. Ours passed verification
                // when cached; blame the sender if its copy fails.
                let expected = cert.respondents();
                if !verify_group_certificate(&cert, &expected, &self.params.update, ctx.keys)
                    .is_valid()
                {
                    out.push(Action::Note(Note::TamperEvidence { key, from }));
                }
            }
            return;
        }
        if cert.subject == self.id {
            return;
        }
        let mut expected = cert.respondents();
        let own = self.responded.get(&cert.subject).copied().filter(|r| {
            cert.issued_at_ms >= r.at_ms
                && cert.issued_at_ms <= r.at_ms + self.params.collection_window_ms
        });
        if own.is_some() {
            expected.insert(self.id);
        }
        let verdict = verify_group_certificate(&cert, &expected, &self.params.update, ctx.keys);
        match &verdict {
            Verdict::Valid => {}
            Verdict::DroppedFeedback { missing, .. } if missing.contains(&self.id) => {
                out.push(Action::Note(Note::CertificateRejected {
                    key,
                    verdict: verdict.clone(),
                }));
                let own = own.expect("self expected only after responding");
                if self.omission_matters(&cert, own) {
                    out.push(Action::Note(Note::Escalation {
                        subject: cert.subject,
                        reason: EscalationReason::DroppedFeedback,
                    }));
                    self.raise_global_alarm(ctx, cert.subject, out);
                }
                return;
            }
            _ => {
                if from != cert.issuer && !cert.responses.is_empty() {
                    out.push(Action::Note(Note::TamperEvidence { key, from }));
                }
                out.push(Action::Note(Note::CertificateRejected { key, verdict }));
                return;
            }
        }
        let adverse = cert.is_adverse(threshold);
        let subject = cert.subject;
        let weight = self.params.respondent_weight;
        let obs = cert.observations(weight, |n| self.table.trust_of(n).get());
        if !obs.is_empty() {
            let k =
                self.table
                    .record_certificate(subject, cert.respondent_fingerprint(), ctx.now_ms);
            if k > 1 {
                out.push(Action::Note(Note::CertificateRepeat { key, k }));
            } else {
                self.apply_certificate(ctx, &cert, &obs, k, out);
            }
        }
        if adverse {
            self.cache_certificate(CachedCertificate::new(cert), out);
        }
    }

    /// A respondent whose adverse feedback is missing from a certificate
    /// that came out benign.
    fn omission_matters(&self, cert: &GroupTrustCertificate, own: OwnResponse) -> bool {
        let threshold = self.params.update.maliciousness_threshold;
        own.informed && own.maliciousness.to_f64() >= threshold && !cert.is_adverse(threshold)
    }

    fn apply_certificate(
        &mut self,
        ctx: &mut Ctx,
        cert: &GroupTrustCertificate,
        obs: &[trust_math::MaliciousnessObservation],
        k: u32,
        out: &mut Vec<Action>,
    ) {
        let p = self.params.update;
        let part = trust_math::partition_majority(obs, p.maliciousness_threshold)
            .expect("non-empty observations");
        let w = p.w.unwrap_or_else(|| obs.iter().map(|o| o.weight).sum());
        let a1 = trust_math::alpha1(&part.majority, w).unwrap_or(0.0);
        let a3 = trust_math::alpha3(k).unwrap_or(0.0);
        let beta = trust_math::beta(a1, p.alpha2, a3).unwrap_or(0.0);
        let delta = match self.params.replenish_mode {
            ReplenishMode::Interval => 0.0,
            ReplenishMode::Certificate => p.delta,
        };
        let t_old = self.table.trust_of(cert.subject);
        let t_cert = TrustValue::new(cert.group_trust.to_f64());
        let t_new = trust_math::update_trust(t_old, t_cert, p.alpha, beta, delta).unwrap_or(t_old);
        self.table.set(cert.subject, t_new, ctx.now_ms);
        out.push(Action::Note(Note::CertificateAccepted {
            key: cert.key(),
            t_old: t_old.get(),
            t_new: t_new.get(),
            beta,
            k,
        }));
        if t_old.get() >= MALICIOUS_BELOW && t_new.get() < MALICIOUS_BELOW {
            self.schedule_alarm(ctx, cert.subject, out);
        }
    }

    /// Applies one replenishment step to every table entry.
    pub fn replenish(&mut self, now_ms: u64) {
        if self.params.replenish_mode == ReplenishMode::Interval {
            self.table.replenish_all(self.params.update.delta, now_ms);
        }
    }

    // ---- alarm raiser ----

    fn alarm_suppressed(&self, now_ms: u64, subject: NodeId) -> bool {
        self.isolated.contains(&subject)
            || self
                .alarms_seen
                .get(&subject)
                .is_some_and(|&t| now_ms.saturating_sub(t) <= self.params.interaction_window_ms)
    }

    fn schedule_alarm(&mut self, ctx: &mut Ctx, subject: NodeId, out: &mut Vec<Action>) {
        if self.alarm_suppressed(ctx.now_ms, subject) || !self.backoff_pending.insert(subject) {
            return;
        }
        let wait = ctx.rng.random_range(0..=self.params.alarm_backoff_max_ms);
        out.push(Action::SetTimer {
            at_ms: ctx.now_ms + wait,
            timer: Timer::AlarmBackoff { subject },
        });
    }

    fn evidence_vote(&mut self, now_ms: u64, subject: NodeId) -> Option<bool> {
        if let Some(e) = self.table.get(subject) {
            return Some(e.rep_val.get() < MALICIOUS_BELOW);
        }
        let c = self.monitor.counts(subject, now_ms);
        (c.observed() >= self.params.vote_min_samples)
            .then(|| c.maliciousness().unwrap_or(0.0) > self.params.monitor.threshold)
    }

    fn vote_frame(&mut self, now_ms: u64, subject: NodeId, r: VoteRef, malicious: bool) -> Vec<u8> {
        let rep = if malicious { RepVal::ONE } else { RepVal::ZERO };
        self.frame(RepMessType::AlarmVote, subject, rep, &r.encode(), now_ms)
    }

    /// Floods a global alarm about `subject` and opens voting, unless an
    /// alarm about it was seen recently or it is already isolated.
    pub fn raise_global_alarm(&mut self, ctx: &mut Ctx, subject: NodeId, out: &mut Vec<Action>) {
        let now = ctx.now_ms;
        if self.alarm_suppressed(now, subject) {
            out.push(Action::Note(Note::AlarmSuppressed { subject }));
            return;
        }
        let alarm_id = self.next_nonce();
        let payload = AlarmPayload::Alarm { alarm_id }.encode();
        let rep = self.table.trust_of(subject);
        let frame = self.frame(
            RepMessType::GlobalAlarm,
            subject,
            RepVal::from_f64(rep.get()),
            &payload,
            now,
        );
        self.alarms_seen.insert(subject, now);
        let mut state = AlarmState {
            subject,
            votes: BTreeMap::new(),
            voting_deadline_ms: now + self.params.vote_window_ms,
        };
        if let Some(m) = self.evidence_vote(now, subject) {
            let r = VoteRef {
                raiser: self.id,
                alarm_id,
            };
            let v = self.vote_frame(now, subject, r, m);
            state.votes.insert(self.id, (m, v));
            self.voted.insert((self.id, alarm_id));
        }
        self.open_alarms.insert(alarm_id, state);
        out.push(Action::Flood { frame });
        out.push(Action::SetTimer {
            at_ms: now + self.params.vote_window_ms,
            timer: Timer::VoteClose { alarm_id },
        });
        out.push(Action::Note(Note::AlarmRaised { subject, alarm_id }));
    }

    fn handle_alarm(&mut self, ctx: &mut Ctx, frame: &Frame, out: &mut Vec<Action>) {
        let Ok(p) = AlarmPayload::decode(&frame.payload) else {
            out.push(Action::Note(Note::FrameRejected {
                sender: frame.header.sender,
                reason: "alarm payload",
            }));
            return;
        };
        let raiser = frame.header.sender;
        let subject = frame.header.subject;
        match p {
            AlarmPayload::Alarm { alarm_id } => {
                self.alarms_seen.insert(subject, ctx.now_ms);
                if subject == self.id || !self.voted.insert((raiser, alarm_id)) {
                    return;
                }
                if !self.interacted(ctx, subject) {
                    return;
                }
                match self.evidence_vote(ctx.now_ms, subject) {
                    Some(malicious) => {
                        let v = self.vote_frame(
                            ctx.now_ms,
                            subject,
                            VoteRef { raiser, alarm_id },
                            malicious,
                        );
                        out.push(Action::Route {
                            to: raiser,
                            frame: v,
                        });
                        out.push(Action::Note(Note::VoteCast {
                            subject,
                            raiser,
                            malicious,
                        }));
                    }
                    None => out.push(Action::Note(Note::Abstained { subject, raiser })),
                }
            }
            AlarmPayload::Verdict { alarm_id, votes } => {
                if self.isolated.contains(&subject) {
                    return;
                }
                if let Some(tallied) = verify_verdict(ctx.keys, raiser, subject, alarm_id, &votes) {
                    if tally(tallied, self.params.vote_quorum).2 {
                        self.isolated.insert(subject);
                        out.push(Action::Note(Note::Isolated { subject, raiser }));
                    }
                } else {
                    out.push(Action::Note(Note::FrameRejected {
                        sender: raiser,
                        reason: "verdict votes",
                    }));
                }
            }
        }
    }

    fn handle_vote(&mut self, ctx: &mut Ctx, frame: &Frame, bytes: &[u8]) {
        let Ok(r) = VoteRef::decode(&frame.payload) else {
            return;
        };
        if r.raiser != self.id {
            return;
        }
        let Some(state) = self.open_alarms.get_mut(&r.alarm_id) else {
            return;
        };
        if state.subject != frame.header.subject || ctx.now_ms > state.voting_deadline_ms {
            return;
        }
        let malicious = frame.header.rep_val == RepVal::ONE;
        state
            .votes
            .entry(frame.header.sender)
            .or_insert_with(|| (malicious, bytes.to_vec()));
    }

    fn close_voting(&mut self, ctx: &mut Ctx, alarm_id: u64, out: &mut Vec<Action>) {
        let Some(state) = self.open_alarms.remove(&alarm_id) else {
            return;
        };
        let (malicious, total, isolate) =
            tally(state.votes.values().map(|v| v.0), self.params.vote_quorum);
        out.push(Action::Note(Note::VotingClosed {
            subject: state.subject,
            alarm_id,
            malicious,
            total,
            isolated: isolate,
        }));
        if !isolate || self.isolated.contains(&state.subject) {
            return;
        }
        self.isolated.insert(state.subject);
        let votes = state.votes.into_values().map(|v| v.1).collect();
        let payload = AlarmPayload::Verdict { alarm_id, votes }.encode();
        let frame = self.frame(
            RepMessType::GlobalAlarm,
            state.subject,
            RepVal::ZERO,
            &payload,
            ctx.now_ms,
        );
        out.push(Action::Flood { frame });
        out.push(Action::Note(Note::Isolated {
            subject: state.subject,
            raiser: self.id,
        }));
    }

    // ---- reputation propagator ----

    /// Keys to attach to a data packet this node transmits.
    pub fn piggyback_keys(&self) -> Vec<CertKey> {
        propagation::piggyback(&self.cache, self.params.piggyback_budget)
    }

    /// Remembers piggybacked keys this node lacks; they are requested from
    /// `from` at the next exchange.
    pub fn note_piggyback(&mut self, from: NodeId, keys: &[CertKey]) {
        if self.isolated.contains(&from) {
            return;
        }
        for k in propagation::unknown_keys(&self.cache, keys) {
            if k.subject != self.id {
                self.wanted.entry(k).or_insert(from);
            }
        }
    }

    /// Periodic or on-contact cache exchange. With `to = None` the offer is
    /// broadcast to every neighbour.
    pub fn exchange_offer(&mut self, ctx: &mut Ctx, to: Option<NodeId>, out: &mut Vec<Action>) {
        let now = ctx.now_ms;
        if to.is_none() && !self.wanted.is_empty() {
            let mut by_source: BTreeMap<NodeId, Vec<CertKey>> = BTreeMap::new();
            for (k, src) in std::mem::take(&mut self.wanted) {
                if !self.cache.contains(&k) && !self.isolated.contains(&src) {
                    by_source.entry(src).or_default().push(k);
                }
            }
            for (src, keys) in by_source {
                let req = ExchangeOffer {
                    entries: keys.into_iter().map(|k| (k, [0; 8])).collect(),
                };
                let f = self.frame(
                    RepMessType::RepRequest,
                    src,
                    RepVal::ZERO,
                    &req.encode(),
                    now,
                );
                out.push(Action::Route { to: src, frame: f });
            }
        }
        if self.cache.is_empty() {
            return;
        }
        let offer = self.cache.offer().encode();
        match to {
            Some(n) if !self.isolated.contains(&n) => {
                let f = self.frame(RepMessType::CertExchange, n, RepVal::ZERO, &offer, now);
                out.push(Action::Send { to: n, frame: f });
            }
            Some(_) => {}
            None => {
                let f = self.frame(
                    RepMessType::CertExchange,
                    self.id,
                    RepVal::ZERO,
                    &offer,
                    now,
                );
                out.push(Action::Broadcast { frame: f });
            }
        }
    }

    fn handle_offer(&mut self, ctx: &mut Ctx, frame: &Frame, out: &mut Vec<Action>) {
        let Ok(offer) = ExchangeOffer::decode(&frame.payload) else {
            return;
        };
        let (missing, mismatched) = compare_offer(&self.cache, &offer);
        let want: Vec<CertKey> = missing
            .into_iter()
            .chain(mismatched)
            .filter(|k| k.subject != self.id)
            .collect();
        if want.is_empty() {
            return;
        }
        let from = frame.header.sender;
        let req = ExchangeOffer {
            entries: want.into_iter().map(|k| (k, [0; 8])).collect(),
        };
        let f = self.frame(
            RepMessType::RepRequest,
            from,
            RepVal::ZERO,
            &req.encode(),
            ctx.now_ms,
        );
        out.push(Action::Send { to: from, frame: f });
    }

    fn handle_request(&mut self, ctx: &mut Ctx, frame: &Frame, out: &mut Vec<Action>) {
        let Ok(req) = ExchangeOffer::decode(&frame.payload) else {
            return;
        };
        let to = frame.header.sender;
        for (k, _) in req.entries {
            let Some(c) = self.cache.get(&k) else {
                continue;
            };
            let (subject, gt, body) = (c.cert.subject, c.cert.group_trust, c.bytes.clone());
            let f = self.frame(RepMessType::RepBroadcast, subject, gt, &body, ctx.now_ms);
            out.push(if ctx.is_neighbor(to) {
                Action::Send { to, frame: f }
            } else {
                Action::Route { to, frame: f }
            });
        }
    }

    // ---- topology and timers ----

    /// Link changes seen by this node. New neighbours get an immediate
    /// exchange offer.
    pub fn on_link_change(
        &mut self,
        ctx: &mut Ctx,
        up: &[NodeId],
        down: &[NodeId],
        out: &mut Vec<Action>,
    ) {
        for &n in up.iter().chain(down) {
            self.last_contact.insert(n, ctx.now_ms);
        }
        for &n in up {
            self.exchange_offer(ctx, Some(n), out);
        }
    }

    pub fn on_timer(&mut self, ctx: &mut Ctx, timer: Timer, out: &mut Vec<Action>) {
        match timer {
            Timer::ChallengeAck { suspect } => {
                if self.challenges.remove(&suspect).is_none() {
                    return;
                }
                if !ctx.is_neighbor(suspect) {
                    out.push(Action::Note(Note::ChallengeLapsed { subject: suspect }));
                    return;
                }
                out.push(Action::Note(Note::Escalation {
                    subject: suspect,
                    reason: EscalationReason::SilentOnChallenge,
                }));
                let p = self.params.update;
                let t_old = self.table.trust_of(suspect);
                let t_new =
                    trust_math::update_trust(t_old, TrustValue::ZERO, p.alpha, p.alpha2, 0.0)
                        .unwrap_or(t_old);
                self.table.set(suspect, t_new, ctx.now_ms);
                self.raise_global_alarm(ctx, suspect, out);
            }
            Timer::CollectionClose { collection } => {
                if self.collection.as_ref().is_some_and(|c| c.id == collection) {
                    self.aggregate_responses(ctx, out);
                }
            }
            Timer::AlarmBackoff { subject } => {
                self.backoff_pending.remove(&subject);
                if self.table.trust_of(subject).get() < MALICIOUS_BELOW {
                    self.raise_global_alarm(ctx, subject, out);
                }
            }
            Timer::VoteClose { alarm_id } => self.close_voting(ctx, alarm_id, out),
        }
    }

    // ---- frame intake ----

    fn fresh(&mut self, frame: &Frame, now_ms: u64) -> bool {
        let window = self.params.replay_window_ms();
        let h = &frame.header;
        if h.timestamp_ms + window < now_ms {
            return false;
        }
        if now_ms >= self.last_replay_prune + window {
            self.seen.retain(|_, t| *t + window >= now_ms);
            self.last_replay_prune = now_ms;
        }
        self.seen
            .insert((h.sender, h.nonce), h.timestamp_ms)
            .is_none()
    }

    /// Entry point for every frame delivered to this node.
    pub fn receive(&mut self, ctx: &mut Ctx, bytes: &[u8], out: &mut Vec<Action>) {
        let frame = match decode_rep_mess(bytes) {
            Ok(f) => f,
            Err(_) => {
                out.push(Action::Note(Note::FrameRejected {
                    sender: NodeId::AUTHORITY,
                    reason: "decode",
                }));
                return;
            }
        };
        let sender = frame.header.sender;
        if sender == self.id || self.isolated.contains(&sender) {
            return;
        }
        if !ctx
            .keys
            .verify_node_tag(sender, &frame.signed_bytes(), &frame.tag)
        {
            out.push(Action::Note(Note::FrameRejected {
                sender,
                reason: "tag",
            }));
            return;
        }
        if !self.fresh(&frame, ctx.now_ms) {
            out.push(Action::Note(Note::FrameRejected {
                sender,
                reason: "replay",
            }));
            return;
        }
        match frame.header.mess_type {
            RepMessType::Challenge => self.handle_challenge(ctx, &frame, out),
            RepMessType::ChallengeAck => {
                if self.challenges.remove(&sender).is_some() {
                    out.push(Action::Note(Note::ChallengeAcked { subject: sender }));
                }
            }
            RepMessType::VerifyBehavior => self.handle_verify_behavior(ctx, &frame, out),
            RepMessType::RepResponse => self.handle_response(ctx, &frame, out),
            RepMessType::RepBroadcast => match GroupTrustCertificate::decode(&frame.payload) {
                Ok(cert) => self.handle_certificate(ctx, sender, cert, out),
                Err(_) => out.push(Action::Note(Note::FrameRejected {
                    sender,
                    reason: "certificate payload",
                })),
            },
            RepMessType::GlobalAlarm => self.handle_alarm(ctx, &frame, out),
            RepMessType::AlarmVote => self.handle_vote(ctx, &frame, bytes),
            RepMessType::CertExchange => self.handle_offer(ctx, &frame, out),
            RepMessType::RepRequest => self.handle_request(ctx, &frame, out),
        }
    }
}

/// Checks every vote frame embedded in a verdict and returns the votes, or
/// `None` if any frame is bad or a voter repeats.
pub fn verify_verdict(
    keys: &impl TagVerifier,
    raiser: NodeId,
    subject: NodeId,
    alarm_id: u64,
    votes: &[Vec<u8>],
) -> Option<Vec<bool>> {
    let mut voters = BTreeSet::new();
    let mut out = Vec::with_capacity(votes.len());
    for v in votes {
        let f = decode_rep_mess(v).ok()?;
        let r = VoteRef::decode(&f.payload).ok()?;
        let ok = f.header.mess_type == RepMessType::AlarmVote
            && f.header.subject == subject
            && r == VoteRef { raiser, alarm_id }
            && voters.insert(f.header.sender)
            && keys.verify_node_tag(f.header.sender, &f.signed_bytes(), &f.tag);
        if !ok {
            return None;
        }
        out.push(f.header.rep_val == RepVal::ONE);
    }
    Some(out)
}
