//! Promiscuous forwarding monitor: per-neighbour sliding windows over
//! sampled packets and their observed fate.

use std::collections::{BTreeMap, VecDeque};

use crate::messages::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorParams {
    /// Probability that a packet handed to a neighbour is sampled.
    pub sampling_prob: f64,
    pub window_ms: u64,
    /// Maliciousness above which a suspicion is raised.
    pub threshold: f64,
    /// Observed outcomes needed before a suspicion may be raised.
    pub min_samples: u32,
}

impl Default for MonitorParams {
    fn default() -> Self {
        MonitorParams {
            sampling_prob: 0.25,
            window_ms: 30_000,
            threshold: 0.25,
            min_samples: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Forwarded,
    Dropped,
    Modified,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Forwarded => "forwarded",
            Outcome::Dropped => "dropped",
            Outcome::Modified => "modified",
        }
    }
}

/// What the monitor learnt about one sampled packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardingEvent {
    pub time_ms: u64,
    pub subject: NodeId,
    pub packet_id: u64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Suspicion {
    pub subject: NodeId,
    pub maliciousness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WindowCounts {
    pub sampled: u32,
    pub forwarded_ok: u32,
    pub dropped: u32,
    pub modified: u32,
    pub pending: u32,
}

impl WindowCounts {
    pub fn observed(&self) -> u32 {
        self.forwarded_ok + self.dropped + self.modified
    }

    /// `(dropped + modified) / observed`, or `None` with nothing observed.
    pub fn maliciousness(&self) -> Option<f64> {
        let n = self.observed();
        (n > 0).then(|| (self.dropped + self.modified) as f64 / n as f64)
    }
}

#[derive(Debug, Clone, Default)]
pub struct MonitorWindow {
    outcomes: VecDeque<(u64, Outcome)>,
    /// Sampled packet id -> time sampled.
    pending: BTreeMap<u64, u64>,
}

impl MonitorWindow {
    fn expire(&mut self, now_ms: u64, window_ms: u64) {
        let horizon = now_ms.saturating_sub(window_ms);
        while self.outcomes.front().is_some_and(|&(t, _)| t < horizon) {
            self.outcomes.pop_front();
        }
        self.pending.retain(|_, &mut t| t >= horizon);
    }

    pub fn counts(&self) -> WindowCounts {
        let mut c = WindowCounts {
            pending: self.pending.len() as u32,
            ..WindowCounts::default()
        };
        for (_, o) in &self.outcomes {
            match o {
                Outcome::Forwarded => c.forwarded_ok += 1,
                Outcome::Dropped => c.dropped += 1,
                Outcome::Modified => c.modified += 1,
            }
        }
        c.sampled = c.observed() + c.pending;
        c
    }
}

#[derive(Debug, Clone, Default)]
pub struct Monitor {
    params: MonitorParams,
    windows: BTreeMap<NodeId, MonitorWindow>,
}

impl Monitor {
    pub fn new(params: MonitorParams) -> Self {
        Monitor {
            params,
            windows: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &MonitorParams {
        &self.params
    }

    /// Registers a packet handed to `neighbor` that was picked for sampling.
    pub fn sample(&mut self, neighbor: NodeId, packet_id: u64, now_ms: u64) {
        let w = self.windows.entry(neighbor).or_default();
        w.expire(now_ms, self.params.window_ms);
        w.pending.insert(packet_id, now_ms);
    }

    /// Records an observed outcome and returns the updated window counts.
    /// Events about nodes that are not current neighbours, or about packets
    /// that were never sampled, are ignored.
    pub fn record(&mut self, ev: &ForwardingEvent, neighbors: &[NodeId]) -> Option<WindowCounts> {
        let w = self.windows.get_mut(&ev.subject)?;
        let was_pending = w.pending.remove(&ev.packet_id).is_some();
        if !was_pending || neighbors.binary_search(&ev.subject).is_err() {
            return None;
        }
        w.expire(ev.time_ms, self.params.window_ms);
        w.outcomes.push_back((ev.time_ms, ev.outcome));
        Some(w.counts())
    }

    pub fn judge(&self, subject: NodeId, counts: &WindowCounts) -> Option<Suspicion> {
        let m = counts.maliciousness()?;
        (m > self.params.threshold && counts.observed() >= self.params.min_samples).then_some(
            Suspicion {
                subject,
                maliciousness: m,
            },
        )
    }

    pub fn observe(&mut self, ev: &ForwardingEvent, neighbors: &[NodeId]) -> Option<Suspicion> {
        let c = self.record(ev, neighbors)?;
        self.judge(ev.subject, &c)
    }

    pub fn counts(&mut self, neighbor: NodeId, now_ms: u64) -> WindowCounts {
        match self.windows.get_mut(&neighbor) {
            Some(w) => {
                w.expire(now_ms, self.params.window_ms);
                w.counts()
            }
            None => WindowCounts::default(),
        }
    }

    /// Drops windows that have gone empty.
    pub fn prune(&mut self, now_ms: u64) {
        let window_ms = self.params.window_ms;
        self.windows.retain(|_, w| {
            w.expire(now_ms, window_ms);
            !w.outcomes.is_empty() || !w.pending.is_empty()
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const N: NodeId = NodeId(7);

    fn feed(m: &mut Monitor, outcomes: &[Outcome]) -> Option<Suspicion> {
        let mut last = None;
        for (i, &o) in outcomes.iter().enumerate() {
            let t = 1_000 + i as u64 * 100;
            m.sample(N, i as u64, t);
            last = m.observe(
                &ForwardingEvent {
                    time_ms: t + 10,
                    subject: N,
                    packet_id: i as u64,
                    outcome: o,
                },
                &[N],
            );
        }
        last
    }

    #[test]
    fn honest_neighbor_never_suspected() {
        let mut m = Monitor::new(MonitorParams::default());
        assert_eq!(feed(&mut m, &[Outcome::Forwarded; 30]), None);
        assert_eq!(m.counts(N, 5_000).maliciousness(), Some(0.0));
    }

    #[test]
    fn full_dropper_suspected() {
        let mut m = Monitor::new(MonitorParams::default());
        let s = feed(&mut m, &[Outcome::Dropped; 10]).unwrap();
        assert_eq!(s.maliciousness, 1.0);
    }

    #[test]
    fn three_drops_in_twenty_is_below_threshold() {
        let mut m = Monitor::new(MonitorParams::default());
        let mut seq = vec![Outcome::Forwarded; 17];
        seq.extend([Outcome::Dropped; 3]);
        assert_eq!(feed(&mut m, &seq), None);
        let c = m.counts(N, 4_000);
        assert!((c.maliciousness().unwrap() - 0.15).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples_no_suspicion() {
        let mut m = Monitor::new(MonitorParams::default());
        assert_eq!(feed(&mut m, &[Outcome::Dropped; 9]), None);
    }

    #[test]
    fn non_neighbor_events_ignored() {
        let mut m = Monitor::new(MonitorParams::default());
        m.sample(N, 1, 0);
        let ev = ForwardingEvent {
            time_ms: 5,
            subject: N,
            packet_id: 1,
            outcome: Outcome::Dropped,
        };
        assert_eq!(m.observe(&ev, &[NodeId(2)]), None);
        assert_eq!(m.counts(N, 10), WindowCounts::default());
    }

    #[test]
    fn counts_invariant_and_window_slides() {
        let mut m = Monitor::new(MonitorParams::default());
        m.sample(N, 1, 0);
        m.sample(N, 2, 0);
        m.sample(N, 3, 0);
        m.observe(
            &ForwardingEvent {
                time_ms: 1,
                subject: N,
                packet_id: 1,
                outcome: Outcome::Modified,
            },
            &[N],
        );
        let c = m.counts(N, 2);
        assert_eq!(
            c.sampled,
            c.forwarded_ok + c.dropped + c.modified + c.pending
        );
        assert_eq!((c.modified, c.pending), (1, 2));
        assert_eq!(m.counts(N, 40_000), WindowCounts::default());
    }
}
