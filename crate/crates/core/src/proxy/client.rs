use std::collections::HashMap;
use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpStream};
use std::sync::{Arc, Mutex, RwLock};

use super::wire::{decode_response, encode_request, read_frame, write_frame};
use super::{PeerResolver, ProxyApi, Request, Response};
use crate::error::ProxyError;
use crate::model::NodeId;

struct Conn {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

/// Client side of the wire protocol. Idle connections are pooled so
/// concurrent callers each get their own stream.
pub struct RemoteProxy {
    node: NodeId,
    addr: SocketAddr,
    idle: Mutex<Vec<Conn>>,
}

fn unreachable(addr: SocketAddr, e: impl std::fmt::Display) -> ProxyError {
    ProxyError::service_invocation(format!("proxy at {addr} is unreachable: {e}"))
}

impl RemoteProxy {
    pub fn new(node: impl Into<NodeId>, addr: SocketAddr) -> Self {
        Self { node: node.into(), addr, idle: Mutex::new(Vec::new()) }
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    fn connect(&self) -> Result<Conn, ProxyError> {
        let s = TcpStream::connect(self.addr).map_err(|e| unreachable(self.addr, e))?;
        let _ = s.set_nodelay(true);
        let r = s.try_clone().map_err(|e| unreachable(self.addr, e))?;
        Ok(Conn { reader: BufReader::new(r), writer: BufWriter::new(s) })
    }
}

impl ProxyApi for RemoteProxy {
    fn node(&self) -> NodeId {
        self.node.clone()
    }

    fn request(&self, req: Request) -> Result<Response, ProxyError> {
        let mut conn = match self.idle.lock().unwrap().pop() {
            Some(c) => c,
            None => self.connect()?,
        };
        let correlation = *uuid::Uuid::new_v4().as_bytes();
        let frame = encode_request(req, correlation);
        write_frame(&mut conn.writer, &frame).map_err(|e| unreachable(self.addr, e))?;
        let reply = read_frame(&mut conn.reader)
            .map_err(|e| unreachable(self.addr, e))?
            .ok_or_else(|| unreachable(self.addr, "connection closed"))?;
        if reply.correlation != correlation {
            return Err(ProxyError::service_invocation("response correlation id does not match request"));
        }
        self.idle.lock().unwrap().push(conn);
        decode_response(&reply)
    }
}

/// Peers reached over TCP.
#[derive(Default)]
pub struct TcpPeers {
    addrs: RwLock<HashMap<NodeId, Arc<RemoteProxy>>>,
}

impl TcpPeers {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, node: impl Into<NodeId>, addr: SocketAddr) {
        let node = node.into();
        self.addrs.write().unwrap().insert(node.clone(), Arc::new(RemoteProxy::new(node, addr)));
    }
}

impl PeerResolver for TcpPeers {
    fn peer(&self, node: &NodeId) -> Result<Arc<dyn ProxyApi>, ProxyError> {
        self.addrs
            .read()
            .unwrap()
            .get(node)
            .cloned()
            .map(|p| p as Arc<dyn ProxyApi>)
            .ok_or_else(|| ProxyError::service_invocation(format!("node `{node}` is unreachable")))
    }
}
