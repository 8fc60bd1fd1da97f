use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{Event, Hop, MessageKind, Receipt};
use crate::error::Result;
use crate::model::{LinkClass, NodeId, Topology};

/// A sequence of hops run back to back. Branches run in parallel.
pub type Branch = Vec<Hop>;

/// Virtual-clock network. Each link carries one message at a time in both
/// directions; messages on different links overlap freely.
pub struct SimNetwork<'a> {
    topology: &'a Topology,
    link_free: HashMap<(NodeId, NodeId), f64>,
    jitter: Option<(ChaCha20Rng, f64)>,
    events: Vec<Event>,
}

#[derive(PartialEq)]
struct Ready {
    at: f64,
    branch: usize,
}

impl Eq for Ready {}

impl Ord for Ready {
    fn cmp(&self, other: &Self) -> Ordering {
        self.at.total_cmp(&other.at).then(self.branch.cmp(&other.branch))
    }
}

impl PartialOrd for Ready {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<'a> SimNetwork<'a> {
    pub fn new(topology: &'a Topology) -> Self {
        Self { topology, link_free: HashMap::new(), jitter: None, events: Vec::new() }
    }

    /// Scales each transfer time by a uniform factor in `1 ± jitter`.
    pub fn with_jitter(mut self, seed: u64, jitter: f64) -> Self {
        if jitter > 0.0 {
            self.jitter = Some((ChaCha20Rng::seed_from_u64(seed), jitter.min(1.0)));
        }
        self
    }

    pub fn topology(&self) -> &Topology {
        self.topology
    }

    /// Sends `bytes` leaving at `depart_ms`, waiting for the link if it is busy.
    pub fn send(
        &mut self,
        from: &NodeId,
        to: &NodeId,
        kind: MessageKind,
        bytes: u64,
        depart_ms: f64,
    ) -> Result<Receipt> {
        let link = self.topology.link(from, to)?;
        let receipt = if link.link_class == LinkClass::SameServer {
            Receipt { start_ms: depart_ms, arrive_ms: depart_ms }
        } else {
            let key = if from <= to { (from.clone(), to.clone()) } else { (to.clone(), from.clone()) };
            let free = self.link_free.entry(key).or_insert(0.0);
            let start = depart_ms.max(*free);
            let mut cost = link.transfer_time_ms(bytes);
            if let Some((rng, j)) = self.jitter.as_mut() {
                cost *= 1.0 + rng.gen_range(-*j..=*j);
            }
            *free = start + cost;
            Receipt { start_ms: start, arrive_ms: start + cost }
        };
        self.events.push(Event {
            depart_ms: receipt.start_ms,
            arrive_ms: receipt.arrive_ms,
            from: from.clone(),
            to: to.clone(),
            kind,
            bytes,
            link_class: link.link_class,
        });
        Ok(receipt)
    }

    /// Runs branches that all start at `start_ms` and returns when each
    /// finished. Messages claim links in departure-time order across
    /// branches, ties going to the lower branch index.
    pub fn run_branches(&mut self, branches: &[Branch], start_ms: f64) -> Result<Vec<f64>> {
        let mut cursor = vec![0usize; branches.len()];
        let mut ends = vec![start_ms; branches.len()];
        let mut heap: BinaryHeap<Reverse<Ready>> =
            (0..branches.len()).map(|branch| Reverse(Ready { at: start_ms, branch })).collect();
        while let Some(Reverse(Ready { at, branch })) = heap.pop() {
            let Some(hop) = branches[branch].get(cursor[branch]) else {
                ends[branch] = at;
                continue;
            };
            cursor[branch] += 1;
            let next = match hop {
                Hop::Delay(ms) => at + ms,
                Hop::Send { from, to, kind, bytes } => self.send(from, to, *kind, *bytes, at)?.arrive_ms,
            };
            heap.push(Reverse(Ready { at: next, branch }));
        }
        Ok(ends)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}
