use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::NodeId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkClass {
    SameServer,
    Lan,
    Wan,
}

impl LinkClass {
    pub const ALL: [LinkClass; 3] = [LinkClass::SameServer, LinkClass::Lan, LinkClass::Wan];

    pub fn as_str(self) -> &'static str {
        match self {
            LinkClass::SameServer => "same_server",
            LinkClass::Lan => "lan",
            LinkClass::Wan => "wan",
        }
    }
}

impl fmt::Display for LinkClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub latency_ms: f64,
    pub bandwidth_bytes_per_ms: f64,
    pub per_message_overhead_ms: f64,
    pub link_class: LinkClass,
}

impl LinkModel {
    pub fn new(
        link_class: LinkClass,
        latency_ms: f64,
        bandwidth_bytes_per_ms: f64,
        per_message_overhead_ms: f64,
    ) -> Self {
        Self { latency_ms, bandwidth_bytes_per_ms, per_message_overhead_ms, link_class }
    }

    pub fn wan(latency_ms: f64, bandwidth_bytes_per_ms: f64) -> Self {
        Self::new(LinkClass::Wan, latency_ms, bandwidth_bytes_per_ms, 0.0)
    }

    pub fn lan(latency_ms: f64, bandwidth_bytes_per_ms: f64) -> Self {
        Self::new(LinkClass::Lan, latency_ms, bandwidth_bytes_per_ms, 0.0)
    }

    pub fn same_server() -> Self {
        Self::new(LinkClass::SameServer, 0.0, f64::INFINITY, 0.0)
    }

    pub fn with_overhead(mut self, per_message_overhead_ms: f64) -> Self {
        self.per_message_overhead_ms = per_message_overhead_ms;
        self
    }

    pub fn transfer_time_ms(&self, bytes: u64) -> f64 {
        if self.link_class == LinkClass::SameServer {
            return 0.0;
        }
        self.latency_ms + self.per_message_overhead_ms + bytes as f64 / self.bandwidth_bytes_per_ms
    }

    fn check(&self) -> Result<(), String> {
        if self.link_class == LinkClass::SameServer {
            return Ok(());
        }
        if !(self.latency_ms >= 0.0 && self.per_message_overhead_ms >= 0.0) {
            return Err("latency and overhead must be non-negative".into());
        }
        if self.bandwidth_bytes_per_ms.is_nan() || self.bandwidth_bytes_per_ms <= 0.0 {
            return Err("bandwidth must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Engine,
    Proxy,
    ServiceHost,
}

/// Where a service runs and which proxy maintains it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub host: NodeId,
    pub proxy: NodeId,
}

/// Nodes, the links between them and service placement. Links are symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    engine: NodeId,
    nodes: BTreeMap<NodeId, BTreeSet<NodeRole>>,
    links: BTreeMap<(NodeId, NodeId), LinkModel>,
    placements: BTreeMap<String, Placement>,
}

fn key(a: &NodeId, b: &NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

impl Topology {
    pub fn builder(engine: impl Into<NodeId>) -> TopologyBuilder {
        let engine = engine.into();
        let mut nodes = BTreeMap::new();
        nodes.insert(engine.clone(), BTreeSet::from([NodeRole::Engine]));
        TopologyBuilder { topo: Topology { engine, nodes, links: BTreeMap::new(), placements: BTreeMap::new() } }
    }

    pub fn engine(&self) -> &NodeId {
        &self.engine
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&NodeId, &BTreeSet<NodeRole>)> {
        self.nodes.iter()
    }

    pub fn has_role(&self, node: &NodeId, role: NodeRole) -> bool {
        self.nodes.get(node).is_some_and(|r| r.contains(&role))
    }

    pub fn proxies(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.iter().filter(|(_, r)| r.contains(&NodeRole::Proxy)).map(|(n, _)| n)
    }

    pub fn links(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &LinkModel)> {
        self.links.iter()
    }

    pub fn placements(&self) -> impl Iterator<Item = (&String, &Placement)> {
        self.placements.iter()
    }

    /// The link between two nodes; same-node pairs get a free same_server link.
    pub fn link(&self, a: &NodeId, b: &NodeId) -> Result<LinkModel> {
        if a == b {
            return Ok(LinkModel::same_server());
        }
        self.links.get(&key(a, b)).copied().ok_or_else(|| Error::Topology(format!("no link between `{a}` and `{b}`")))
    }

    pub fn class(&self, a: &NodeId, b: &NodeId) -> Result<LinkClass> {
        self.link(a, b).map(|l| l.link_class)
    }

    pub fn placement(&self, service_id: &str) -> Result<&Placement> {
        self.placements
            .get(service_id)
            .ok_or_else(|| Error::Placement(format!("service `{service_id}` has no host node")))
    }

    /// True when every engine-to-host link is LAN or same-node.
    pub fn engine_is_local(&self) -> bool {
        self.placements.values().all(|p| self.class(&self.engine, &p.host).is_ok_and(|c| c != LinkClass::Wan))
    }
}

pub struct TopologyBuilder {
    topo: Topology,
}

impl TopologyBuilder {
    pub fn node(mut self, id: impl Into<NodeId>, roles: &[NodeRole]) -> Self {
        self.topo.nodes.entry(id.into()).or_default().extend(roles.iter().copied());
        self
    }

    pub fn link(mut self, a: impl Into<NodeId>, b: impl Into<NodeId>, model: LinkModel) -> Self {
        let (a, b) = (a.into(), b.into());
        self.topo.links.insert(key(&a, &b), model);
        self
    }

    /// Places a service on `host`, maintained by the proxy on `proxy`. Both
    /// nodes are added with the matching role.
    pub fn place(mut self, service_id: impl Into<String>, host: impl Into<NodeId>, proxy: impl Into<NodeId>) -> Self {
        let (host, proxy) = (host.into(), proxy.into());
        self.topo.nodes.entry(host.clone()).or_default().insert(NodeRole::ServiceHost);
        self.topo.nodes.entry(proxy.clone()).or_default().insert(NodeRole::Proxy);
        self.topo.placements.insert(service_id.into(), Placement { host, proxy });
        self
    }

    pub fn build(self) -> Result<Topology> {
        let t = self.topo;
        for ((a, b), model) in &t.links {
            for n in [a, b] {
                if !t.nodes.contains_key(n) {
                    return Err(Error::Topology(format!("link references unknown node `{n}`")));
                }
            }
            if a == b {
                return Err(Error::Topology(format!("link from `{a}` to itself")));
            }
            model.check().map_err(|e| Error::Topology(format!("link `{a}`-`{b}`: {e}")))?;
        }
        Ok(t)
    }
}
