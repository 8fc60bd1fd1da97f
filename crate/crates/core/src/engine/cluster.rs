use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{NodeId, Topology};
use crate::proxy::{LocalPeers, Proxy, ProxyApi, ProxyConfig};
use crate::services::ServiceBehavior;
use crate::transport::{SocketNetwork, TransportHandle};

/// One proxy process per node that hosts or proxies a service, reachable
/// either in-process or over loopback sockets.
pub struct Cluster {
    endpoints: HashMap<NodeId, Arc<dyn ProxyApi>>,
    proxies: Vec<Arc<Proxy>>,
    socket: Option<SocketNetwork>,
}

fn node_seed(seed: u64, node: &NodeId) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update(node.as_str().as_bytes());
    u64::from_be_bytes(h.finalize()[..8].try_into().unwrap())
}

impl Cluster {
    /// Starts proxies for every placed service in `behaviors`. A service is
    /// registered at its proxy and, when they differ, at its host too, which
    /// answers the proxy's plain calls.
    pub fn start(topology: &Topology, behaviors: &[ServiceBehavior], transport: &TransportHandle) -> Result<Self> {
        let socket = matches!(transport, TransportHandle::Socket(_));
        let mut by_node: BTreeMap<NodeId, Vec<ServiceBehavior>> = BTreeMap::new();
        for (service, place) in topology.placements() {
            let b = behaviors
                .iter()
                .find(|b| b.id() == service)
                .ok_or_else(|| Error::Placement(format!("placed service `{service}` is not in the registry")))?;
            let mut b = b.clone();
            b.spec.host_node = place.host.clone();
            by_node.entry(place.proxy.clone()).or_default().push(b.clone());
            if place.host != place.proxy {
                by_node.entry(place.host.clone()).or_default().push(b);
            }
        }

        let mut proxies = Vec::with_capacity(by_node.len());
        for (node, services) in by_node {
            let cfg = ProxyConfig::new(node.clone())
                .worker_limit(transport.worker_limit())
                .id_seed(node_seed(transport.seed(), &node))
                .real_compute_delay(socket);
            let p = Arc::new(Proxy::new(cfg)?);
            for b in services {
                p.add_behavior(b)?;
            }
            proxies.push(p);
        }

        let mut endpoints: HashMap<NodeId, Arc<dyn ProxyApi>> = HashMap::new();
        let socket = if socket {
            let net = SocketNetwork::start(topology.clone(), &proxies)?;
            for (node, client) in net.clients() {
                endpoints.insert(node.clone(), client.clone());
            }
            Some(net)
        } else {
            let peers = Arc::new(LocalPeers::new());
            for p in &proxies {
                peers.register(p);
                p.set_peers(peers.clone());
                endpoints.insert(p.node_id().clone(), p.clone());
            }
            None
        };
        Ok(Self { endpoints, proxies, socket })
    }

    pub fn endpoint(&self, node: &NodeId) -> Result<&Arc<dyn ProxyApi>> {
        self.endpoints.get(node).ok_or_else(|| Error::Placement(format!("no proxy runs on `{node}`")))
    }

    /// The in-process proxy objects, for inspection.
    pub fn proxies(&self) -> &[Arc<Proxy>] {
        &self.proxies
    }

    pub fn proxy(&self, node: &NodeId) -> Option<&Arc<Proxy>> {
        self.proxies.iter().find(|p| p.node_id() == node)
    }

    pub fn socket(&self) -> Option<&SocketNetwork> {
        self.socket.as_ref()
    }
}
