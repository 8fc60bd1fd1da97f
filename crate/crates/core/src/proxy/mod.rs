//! The proxy: invokes services for the engine, keeps results as UUID-tagged
//! blobs and moves them directly to other proxies.

mod admission;
pub mod client;
pub mod server;
mod store;
pub mod wire;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::mpsc;
use std::sync::{Arc, Mutex, RwLock, Weak};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub use admission::{Admission, Permit, Ticket};
pub use client::{RemoteProxy, TcpPeers};
pub use server::ProxyServer;
pub use store::BlobStore;

use crate::error::{ProxyError, Result};
use crate::model::{DataId, DataRef, NodeId, ServiceSpec};
use crate::services::{Payload, ServiceBehavior, UNPLACED};

/// An argument to a plain service call: either carried inline or already
/// resident in the callee's store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallArg {
    Inline(Payload),
    Resident(DataId),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Invoke {
        service: String,
        operation: String,
        params: Vec<DataId>,
    },
    Upload {
        payloads: Vec<Payload>,
    },
    Deliver {
        recipient: NodeId,
        ids: Vec<DataId>,
    },
    Stage {
        batch: Vec<(DataId, Payload)>,
    },
    ReturnData {
        ids: Vec<DataId>,
    },
    Flush {
        ids: Vec<DataId>,
    },
    AddService {
        spec: ServiceSpec,
    },
    RemoveService {
        service_id: String,
    },
    ListServices,
    ListOperations {
        service_id: String,
    },
    ListOpParameters {
        service_id: String,
        operation: String,
    },
    ListOpReturnType {
        service_id: String,
        operation: String,
    },
    /// Plain (vanilla) service invocation with the payload returned inline.
    Call {
        service: String,
        operation: String,
        args: Vec<CallArg>,
    },
    /// Raw payload sink; acknowledges and discards.
    Transfer {
        payload: Payload,
    },
}

impl Request {
    /// Requests that occupy a worker. Staging, plain calls and registry
    /// queries are answered directly so proxy-to-proxy traffic cannot
    /// deadlock on a full queue.
    pub fn is_queued(&self) -> bool {
        matches!(
            self,
            Request::Invoke { .. }
                | Request::Upload { .. }
                | Request::Deliver { .. }
                | Request::ReturnData { .. }
                | Request::Flush { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Ref(DataRef),
    Refs(Vec<DataRef>),
    Ack(bool),
    Payloads(Vec<Payload>),
    Payload(Payload),
    Names(Vec<String>),
    Name(String),
    Done,
}

fn unexpected(r: Response) -> ProxyError {
    ProxyError::service_invocation(format!("unexpected response {r:?}"))
}

/// The proxy operations. Implemented in-process by [`Proxy`] and over TCP by
/// [`RemoteProxy`]; the typed methods are thin wrappers over `request`.
pub trait ProxyApi: Send + Sync {
    fn node(&self) -> NodeId;

    fn request(&self, req: Request) -> Result<Response, ProxyError>;

    fn invoke(&self, service: &str, operation: &str, params: &[DataId]) -> Result<DataRef, ProxyError> {
        let req = Request::Invoke { service: service.into(), operation: operation.into(), params: params.to_vec() };
        match self.request(req)? {
            Response::Ref(r) => Ok(r),
            r => Err(unexpected(r)),
        }
    }

    fn upload(&self, payloads: Vec<Payload>) -> Result<Vec<DataRef>, ProxyError> {
        match self.request(Request::Upload { payloads })? {
            Response::Refs(r) => Ok(r),
            r => Err(unexpected(r)),
        }
    }

    fn deliver(&self, recipient: &NodeId, ids: &[DataId]) -> Result<bool, ProxyError> {
        ack(self.request(Request::Deliver { recipient: recipient.clone(), ids: ids.to_vec() })?)
    }

    fn stage(&self, batch: Vec<(DataId, Payload)>) -> Result<bool, ProxyError> {
        ack(self.request(Request::Stage { batch })?)
    }

    fn return_data(&self, ids: &[DataId]) -> Result<Vec<Payload>, ProxyError> {
        match self.request(Request::ReturnData { ids: ids.to_vec() })? {
            Response::Payloads(p) => Ok(p),
            r => Err(unexpected(r)),
        }
    }

    fn flush_temp_data(&self, ids: &[DataId]) -> Result<bool, ProxyError> {
        ack(self.request(Request::Flush { ids: ids.to_vec() })?)
    }

    fn add_service(&self, spec: ServiceSpec) -> Result<(), ProxyError> {
        done(self.request(Request::AddService { spec })?)
    }

    fn remove_service(&self, service_id: &str) -> Result<(), ProxyError> {
        done(self.request(Request::RemoveService { service_id: service_id.into() })?)
    }

    fn list_services(&self) -> Result<Vec<String>, ProxyError> {
        names(self.request(Request::ListServices)?)
    }

    fn list_operations(&self, service_id: &str) -> Result<Vec<String>, ProxyError> {
        names(self.request(Request::ListOperations { service_id: service_id.into() })?)
    }

    fn list_op_parameters(&self, service_id: &str, operation: &str) -> Result<Vec<String>, ProxyError> {
        names(self.request(Request::ListOpParameters { service_id: service_id.into(), operation: operation.into() })?)
    }

    fn list_op_return_type(&self, service_id: &str, operation: &str) -> Result<String, ProxyError> {
        let req = Request::ListOpReturnType { service_id: service_id.into(), operation: operation.into() };
        match self.request(req)? {
            Response::Name(n) => Ok(n),
            r => Err(unexpected(r)),
        }
    }

    fn call(&self, service: &str, operation: &str, args: Vec<CallArg>) -> Result<Payload, ProxyError> {
        let req = Request::Call { service: service.into(), operation: operation.into(), args };
        match self.request(req)? {
            Response::Payload(p) => Ok(p),
            r => Err(unexpected(r)),
        }
    }

    fn transfer(&self, payload: Payload) -> Result<bool, ProxyError> {
        ack(self.request(Request::Transfer { payload })?)
    }
}

fn ack(r: Response) -> Result<bool, ProxyError> {
    match r {
        Response::Ack(b) => Ok(b),
        r => Err(unexpected(r)),
    }
}

fn done(r: Response) -> Result<(), ProxyError> {
    match r {
        Response::Done => Ok(()),
        r => Err(unexpected(r)),
    }
}

fn names(r: Response) -> Result<Vec<String>, ProxyError> {
    match r {
        Response::Names(n) => Ok(n),
        r => Err(unexpected(r)),
    }
}

/// Finds other proxies and service hosts by node.
pub trait PeerResolver: Send + Sync {
    fn peer(&self, node: &NodeId) -> Result<Arc<dyn ProxyApi>, ProxyError>;
}

/// In-process peers, held weakly so a cluster can drop its proxies.
#[derive(Default)]
pub struct LocalPeers {
    map: RwLock<HashMap<NodeId, Weak<Proxy>>>,
}

impl LocalPeers {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, proxy: &Arc<Proxy>) {
        self.map.write().unwrap().insert(proxy.node.clone(), Arc::downgrade(proxy));
    }
}

impl PeerResolver for LocalPeers {
    fn peer(&self, node: &NodeId) -> Result<Arc<dyn ProxyApi>, ProxyError> {
        self.map
            .read()
            .unwrap()
            .get(node)
            .and_then(Weak::upgrade)
            .map(|p| p as Arc<dyn ProxyApi>)
            .ok_or_else(|| ProxyError::service_invocation(format!("node `{node}` is unreachable")))
    }
}

#[derive(Debug, Clone)]
pub struct ProxyConfig {
    pub node: NodeId,
    pub worker_limit: usize,
    /// Spool directory; a temporary one is used when unset.
    pub spool_dir: Option<PathBuf>,
    pub quota_bytes: Option<u64>,
    /// Seed for result ids. Unseeded proxies draw random v4 UUIDs.
    pub id_seed: Option<u64>,
    /// Sleep for each service's compute delay. Off under simulation, where
    /// the delay is charged on the virtual clock instead.
    pub real_compute_delay: bool,
}

impl ProxyConfig {
    pub fn new(node: impl Into<NodeId>) -> Self {
        Self {
            node: node.into(),
            worker_limit: 4,
            spool_dir: None,
            quota_bytes: None,
            id_seed: None,
            real_compute_delay: false,
        }
    }

    pub fn worker_limit(mut self, n: usize) -> Self {
        self.worker_limit = n;
        self
    }

    pub fn spool_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.spool_dir = Some(dir.into());
        self
    }

    pub fn quota_bytes(mut self, q: u64) -> Self {
        self.quota_bytes = Some(q);
        self
    }

    pub fn id_seed(mut self, seed: u64) -> Self {
        self.id_seed = Some(seed);
        self
    }

    pub fn real_compute_delay(mut self, on: bool) -> Self {
        self.real_compute_delay = on;
        self
    }
}

pub struct Proxy {
    node: NodeId,
    registry: RwLock<BTreeMap<String, ServiceBehavior>>,
    store: BlobStore,
    admission: Admission,
    ids: Mutex<Option<ChaCha20Rng>>,
    peers: RwLock<Option<Arc<dyn PeerResolver>>>,
    real_compute_delay: bool,
}

impl Proxy {
    pub fn new(config: ProxyConfig) -> Result<Self> {
        if config.worker_limit == 0 {
            return Err(crate::Error::Config("worker_limit must be positive".into()));
        }
        let store = match &config.spool_dir {
            Some(dir) => BlobStore::open(dir, config.quota_bytes)?,
            None => BlobStore::temporary(config.quota_bytes)?,
        };
        Ok(Self {
            node: config.node,
            registry: RwLock::new(BTreeMap::new()),
            store,
            admission: Admission::new(config.worker_limit),
            ids: Mutex::new(config.id_seed.map(ChaCha20Rng::seed_from_u64)),
            peers: RwLock::new(None),
            real_compute_delay: config.real_compute_delay,
        })
    }

    pub fn node_id(&self) -> &NodeId {
        &self.node
    }

    pub fn store(&self) -> &BlobStore {
        &self.store
    }

    pub fn admission(&self) -> &Admission {
        &self.admission
    }

    pub fn set_peers(&self, peers: Arc<dyn PeerResolver>) {
        *self.peers.write().unwrap() = Some(peers);
    }

    /// Registers a service together with its compute delay.
    pub fn add_behavior(&self, behavior: ServiceBehavior) -> Result<(), ProxyError> {
        behavior.spec.check().map_err(ProxyError::proxy_admin)?;
        let mut reg = self.registry.write().unwrap();
        if reg.contains_key(behavior.id()) {
            return Err(ProxyError::proxy_admin(format!(
                "service `{}` is already maintained by the proxy",
                behavior.id()
            )));
        }
        reg.insert(behavior.id().to_owned(), behavior);
        Ok(())
    }

    /// Handles a request, waiting for a worker first if it needs one.
    pub fn handle(&self, req: Request) -> Result<Response, ProxyError> {
        if req.is_queued() {
            let _permit = self.admission.acquire();
            self.execute(req)
        } else {
            self.execute(req)
        }
    }

    /// Queues a request now and runs it on its own thread once admitted.
    /// Arrival order is fixed at the call, not when the thread starts.
    pub fn submit(self: &Arc<Self>, req: Request) -> mpsc::Receiver<Result<Response, ProxyError>> {
        let (tx, rx) = mpsc::channel();
        let ticket = req.is_queued().then(|| self.admission.ticket());
        let this = Arc::clone(self);
        std::thread::spawn(move || {
            let res = match ticket {
                Some(t) => {
                    let _permit = this.admission.wait(t);
                    this.execute(req)
                }
                None => this.execute(req),
            };
            let _ = tx.send(res);
        });
        rx
    }

    fn next_id(&self) -> DataId {
        match self.ids.lock().unwrap().as_mut() {
            Some(rng) => DataId::from_rng(rng),
            None => DataId::random(),
        }
    }

    fn peer(&self, node: &NodeId) -> Result<Arc<dyn ProxyApi>, ProxyError> {
        match self.peers.read().unwrap().as_ref() {
            Some(p) => p.peer(node),
            None => Err(ProxyError::service_invocation(format!("node `{node}` is unreachable: no peers configured"))),
        }
    }

    fn behavior(&self, service: &str) -> Result<ServiceBehavior, ProxyError> {
        self.registry
            .read()
            .unwrap()
            .get(service)
            .cloned()
            .ok_or_else(|| ProxyError::invocation_parameter(format!("service `{service}` is not maintained here")))
    }

    fn known(&self, service: &str) -> Result<ServiceBehavior, ProxyError> {
        self.behavior(service).map_err(|_| ProxyError::variable_not_found(format!("unknown service `{service}`")))
    }

    fn store_new(&self, payload: &Payload) -> Result<DataRef, ProxyError> {
        let id = self.next_id();
        self.store.put(id, payload)?;
        Ok(DataRef { id, size_bytes: payload.len(), home_proxy: self.node.clone() })
    }

    fn run_local(&self, b: &ServiceBehavior, operation: &str, inputs: &[Payload]) -> Result<Payload, ProxyError> {
        let out = b.apply(operation, inputs)?;
        if self.real_compute_delay && b.compute_delay_ms > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(b.compute_delay_ms / 1000.0));
        }
        Ok(out)
    }

    fn execute(&self, req: Request) -> Result<Response, ProxyError> {
        match req {
            Request::Invoke { service, operation, params } => {
                let b = self.behavior(&service)?;
                b.operation(&operation)?.check_arity(params.len()).map_err(ProxyError::invocation_parameter)?;
                let inputs = params.iter().map(|id| self.store.get(id)).collect::<Result<Vec<_>, _>>()?;
                let host = &b.spec.host_node;
                let out = if *host == self.node || host.as_str() == UNPLACED {
                    self.run_local(&b, &operation, &inputs)?
                } else {
                    let args = inputs.into_iter().map(CallArg::Inline).collect();
                    self.peer(host)?.call(&service, &operation, args).map_err(|e| {
                        ProxyError::service_invocation(format!("service `{service}` on `{host}` failed: {e}"))
                    })?
                };
                self.store_new(&out).map(Response::Ref)
            }
            Request::Upload { payloads } => {
                if payloads.is_empty() {
                    return Err(ProxyError::invocation_parameter("upload needs at least one payload"));
                }
                payloads.iter().map(|p| self.store_new(p)).collect::<Result<_, _>>().map(Response::Refs)
            }
            Request::Deliver { recipient, ids } => {
                let batch = ids.iter().map(|id| self.store.get(id).map(|p| (*id, p))).collect::<Result<Vec<_>, _>>()?;
                if recipient == self.node {
                    return Ok(Response::Ack(true));
                }
                let ok = self
                    .peer(&recipient)?
                    .stage(batch)
                    .map_err(|e| ProxyError::service_invocation(format!("staging at `{recipient}` failed: {e}")))?;
                Ok(Response::Ack(ok))
            }
            Request::Stage { batch } => {
                for (id, p) in &batch {
                    self.store.put(*id, p)?;
                }
                Ok(Response::Ack(true))
            }
            Request::ReturnData { ids } => {
                ids.iter().map(|id| self.store.get(id)).collect::<Result<_, _>>().map(Response::Payloads)
            }
            Request::Flush { ids } => self.store.remove_all(&ids).map(|_| Response::Ack(true)),
            Request::AddService { spec } => self.add_behavior(ServiceBehavior::new(spec)).map(|_| Response::Done),
            Request::RemoveService { service_id } => match self.registry.write().unwrap().remove(&service_id) {
                Some(_) => Ok(Response::Done),
                None => Err(ProxyError::variable_not_found(format!("unknown service `{service_id}`"))),
            },
            Request::ListServices => Ok(Response::Names(self.registry.read().unwrap().keys().cloned().collect())),
            Request::ListOperations { service_id } => {
                let b = self.known(&service_id)?;
                Ok(Response::Names(b.spec.operations.iter().map(|o| o.name.clone()).collect()))
            }
            Request::ListOpParameters { service_id, operation } => {
                let b = self.known(&service_id)?;
                let op = b.spec.operation(&operation).ok_or_else(|| {
                    ProxyError::variable_not_found(format!("service `{service_id}` has no operation `{operation}`"))
                })?;
                Ok(Response::Names(op.parameter_types()))
            }
            Request::ListOpReturnType { service_id, operation } => {
                let b = self.known(&service_id)?;
                let op = b.spec.operation(&operation).ok_or_else(|| {
                    ProxyError::variable_not_found(format!("service `{service_id}` has no operation `{operation}`"))
                })?;
                Ok(Response::Name(op.return_type().to_owned()))
            }
            Request::Call { service, operation, args } => {
                let b = self.behavior(&service)?;
                let inputs = args
                    .into_iter()
                    .map(|a| match a {
                        CallArg::Inline(p) => Ok(p),
                        CallArg::Resident(id) => self.store.get(&id),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                self.run_local(&b, &operation, &inputs).map(Response::Payload)
            }
            Request::Transfer { .. } => Ok(Response::Ack(true)),
        }
    }
}

impl ProxyApi for Proxy {
    fn node(&self) -> NodeId {
        self.node.clone()
    }

    fn request(&self, req: Request) -> Result<Response, ProxyError> {
        self.handle(req)
    }
}
