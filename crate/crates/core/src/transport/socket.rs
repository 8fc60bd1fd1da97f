use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use super::{Event, MessageKind, Receipt};
use crate::error::{Error, ProxyError, Result};
use crate::model::{NodeId, Topology};
use crate::proxy::{Proxy, ProxyApi, ProxyServer, RemoteProxy, TcpPeers};
use crate::services::Payload;

/// Proxies served on loopback sockets, one server per node. Proxies reach
/// each other through the same sockets the engine uses.
pub struct SocketNetwork {
    topology: Topology,
    epoch: Instant,
    clients: HashMap<NodeId, Arc<RemoteProxy>>,
    events: Mutex<Vec<Event>>,
    _servers: Vec<ProxyServer>,
}

impl SocketNetwork {
    pub fn start(topology: Topology, proxies: &[Arc<Proxy>]) -> Result<Self> {
        let peers = Arc::new(TcpPeers::new());
        let mut servers = Vec::with_capacity(proxies.len());
        let mut clients = HashMap::new();
        for p in proxies {
            let server = ProxyServer::bind("127.0.0.1:0", p.clone())?;
            peers.insert(p.node_id().clone(), server.addr());
            clients.insert(p.node_id().clone(), Arc::new(RemoteProxy::new(p.node_id().clone(), server.addr())));
            servers.push(server);
        }
        for p in proxies {
            p.set_peers(peers.clone());
        }
        Ok(Self { topology, epoch: Instant::now(), clients, events: Mutex::new(Vec::new()), _servers: servers })
    }

    pub fn client(&self, node: &NodeId) -> Result<Arc<RemoteProxy>, ProxyError> {
        self.clients
            .get(node)
            .cloned()
            .ok_or_else(|| ProxyError::service_invocation(format!("node `{node}` is unreachable")))
    }

    pub fn clients(&self) -> &HashMap<NodeId, Arc<RemoteProxy>> {
        &self.clients
    }

    /// Milliseconds since the network started.
    pub fn now_ms(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64() * 1000.0
    }

    /// Pushes a raw payload to the server on `to`. The engine side has no
    /// server, so messages towards it are only recorded.
    pub fn send(&self, from: &NodeId, to: &NodeId, kind: MessageKind, payload: Payload) -> Result<Receipt> {
        let class = self.topology.class(from, to)?;
        let bytes = payload.len();
        let start = self.now_ms();
        if to != self.topology.engine() {
            self.client(to)?.transfer(payload).map_err(Error::Proxy)?;
        }
        let arrive = self.now_ms();
        self.record(Event {
            depart_ms: start,
            arrive_ms: arrive,
            from: from.clone(),
            to: to.clone(),
            kind,
            bytes,
            link_class: class,
        });
        Ok(Receipt { start_ms: start, arrive_ms: arrive })
    }

    pub fn record(&self, event: Event) {
        self.events.lock().unwrap().push(event);
    }

    pub fn take_events(&self) -> Vec<Event> {
        std::mem::take(&mut self.events.lock().unwrap())
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinkClass, LinkModel};
    use crate::proxy::ProxyConfig;

    #[test]
    fn send_reaches_a_real_server() {
        let topo = Topology::builder("e").node("a", &[]).link("e", "a", LinkModel::lan(1.0, 1.0)).build().unwrap();
        let a = Arc::new(Proxy::new(ProxyConfig::new("a")).unwrap());
        let net = SocketNetwork::start(topo, &[a]).unwrap();
        let r = net.send(&"e".into(), &"a".into(), MessageKind::Data, Payload::Bytes(vec![9; 4096])).unwrap();
        assert!(r.arrive_ms >= r.start_ms);
        let ev = net.take_events();
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].bytes, ev[0].link_class), (4096, LinkClass::Lan));
        assert!(net.send(&"e".into(), &"zz".into(), MessageKind::Data, Payload::Bytes(vec![])).is_err());
    }
}
