//! Message transports: a deterministic simulated network on a virtual clock,
//! and real sockets timed by the wall clock.

mod sim;
mod socket;

use serde::{Deserialize, Serialize};

pub use sim::{Branch, SimNetwork};
pub use socket::SocketNetwork;

use crate::model::{LinkClass, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Control,
    Data,
}

/// One recorded message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub depart_ms: f64,
    pub arrive_ms: f64,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: MessageKind,
    pub bytes: u64,
    pub link_class: LinkClass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Receipt {
    /// When the message left; later than the requested departure if the
    /// link was busy.
    pub start_ms: f64,
    pub arrive_ms: f64,
}

/// One step of a branch: a message, or local work at the current node.
#[derive(Debug, Clone, PartialEq)]
pub enum Hop {
    Send { from: NodeId, to: NodeId, kind: MessageKind, bytes: u64 },
    Delay(f64),
}

impl Hop {
    pub fn control(from: &NodeId, to: &NodeId, bytes: u64) -> Self {
        Hop::Send { from: from.clone(), to: to.clone(), kind: MessageKind::Control, bytes }
    }

    pub fn data(from: &NodeId, to: &NodeId, bytes: u64) -> Self {
        Hop::Send { from: from.clone(), to: to.clone(), kind: MessageKind::Data, bytes }
    }
}

/// Cost of going through a proxy: a fixed charge per engine-issued call
/// (disk write and bookkeeping) and the size of each reference carried on
/// the control plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyOverhead {
    pub per_call_ms: f64,
    pub per_ref_bytes: u64,
}

impl ProxyOverhead {
    pub fn new(per_call_ms: f64, per_ref_bytes: u64) -> Self {
        assert!(per_call_ms >= 0.0, "per_call_ms must be non-negative");
        Self { per_call_ms, per_ref_bytes }
    }

    pub fn none() -> Self {
        Self { per_call_ms: 0.0, per_ref_bytes: 0 }
    }
}

impl Default for ProxyOverhead {
    fn default() -> Self {
        Self { per_call_ms: 5.0, per_ref_bytes: 36 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Relative half-width of a uniform factor applied to every transfer
    /// time, e.g. 0.05 for ±5%. Off by default, which keeps runs exact.
    pub jitter: Option<f64>,
    pub overhead: ProxyOverhead,
    /// Materialize payload bytes so content hashes can be checked end to end.
    pub integrity: bool,
    pub worker_limit: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { seed: 0, jitter: None, overhead: ProxyOverhead::default(), integrity: false, worker_limit: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocketConfig {
    pub seed: u64,
    pub overhead: ProxyOverhead,
    pub integrity: bool,
    pub worker_limit: usize,
}

impl Default for SocketConfig {
    fn default() -> Self {
        Self { seed: 0, overhead: ProxyOverhead::default(), integrity: true, worker_limit: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransportHandle {
    Simulated(SimConfig),
    Socket(SocketConfig),
}

impl TransportHandle {
    pub fn simulated() -> Self {
        TransportHandle::Simulated(SimConfig::default())
    }

    pub fn socket() -> Self {
        TransportHandle::Socket(SocketConfig::default())
    }

    pub fn seed(&self) -> u64 {
        match self {
            TransportHandle::Simulated(c) => c.seed,
            TransportHandle::Socket(c) => c.seed,
        }
    }

    pub fn overhead(&self) -> ProxyOverhead {
        match self {
            TransportHandle::Simulated(c) => c.overhead,
            TransportHandle::Socket(c) => c.overhead,
        }
    }

    pub fn integrity(&self) -> bool {
        match self {
            TransportHandle::Simulated(c) => c.integrity,
            TransportHandle::Socket(c) => c.integrity,
        }
    }

    pub fn worker_limit(&self) -> usize {
        match self {
            TransportHandle::Simulated(c) => c.worker_limit,
            TransportHandle::Socket(c) => c.worker_limit,
        }
    }
}
