//! The orchestration engine. Control flow always goes through the engine;
//! in circulate mode data stays at proxies and moves proxy to proxy.

mod cluster;
mod composite;

use std::collections::{HashMap, HashSet};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

pub use cluster::Cluster;
pub use composite::{end_to_end_pattern, end_to_end_registry, run_end_to_end, E2E_SERVICES};

use crate::error::{Error, Result};
use crate::model::{
    validate_pattern, Case, DataId, DataRef, LinkClass, Mode, NodeId, ServiceSpec, Topology, TransferAccounting, Wire,
    WorkflowPattern,
};
use crate::proxy::CallArg;
use crate::services::{Payload, ServiceBehavior};
use crate::transport::{Event, Hop, MessageKind, ProxyOverhead, SimNetwork, TransportHandle};

/// Size of a control message before any references it carries.
pub const CONTROL_BASE_BYTES: u64 = 64;

/// A final result: a reference left at its proxy, or the payload itself.
#[derive(Debug, Clone, PartialEq)]
pub enum FinalResult {
    Ref(DataRef),
    Data(Payload),
}

impl FinalResult {
    pub fn size_bytes(&self) -> u64 {
        match self {
            FinalResult::Ref(r) => r.size_bytes,
            FinalResult::Data(p) => p.len(),
        }
    }
}

impl Serialize for FinalResult {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(1))?;
        match self {
            FinalResult::Ref(r) => m.serialize_entry("ref", r)?,
            FinalResult::Data(p) => m.serialize_entry(
                "data",
                &serde_json::json!({ "size_bytes": p.len(), "sha256": hex::encode(p.content_hash()) }),
            )?,
        }
        m.end()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunTrace {
    pub mode: Mode,
    pub case: Case,
    pub events: Vec<Event>,
    /// Data-message bytes per link class.
    pub per_class_bytes: TransferAccounting,
    pub elapsed_ms: f64,
    pub final_result: Vec<FinalResult>,
}

impl RunTrace {
    fn new(mode: Mode, case: Case, events: Vec<Event>, elapsed_ms: f64, final_result: Vec<FinalResult>) -> Self {
        let mut acc = TransferAccounting::new();
        for e in events.iter().filter(|e| e.kind == MessageKind::Data) {
            acc.record(e.link_class, e.bytes);
        }
        Self { mode, case, events, per_class_bytes: acc, elapsed_ms, final_result }
    }

    pub fn data_events(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.kind == MessageKind::Data)
    }

    /// Data bytes sent to or from `node`, same-server transfers excluded.
    pub fn data_bytes_touching(&self, node: &NodeId) -> u64 {
        self.data_events()
            .filter(|e| e.link_class != LinkClass::SameServer && (&e.from == node || &e.to == node))
            .map(|e| e.bytes)
            .sum()
    }
}

#[derive(Debug, Clone)]
enum Action {
    Upload { proxy: NodeId, wires: Vec<Wire> },
    Deliver { from: NodeId, to: NodeId, wires: Vec<Wire> },
    Invoke { stage: usize, step: usize },
    Call { stage: usize, step: usize },
    Return { from: NodeId, wires: Vec<Wire> },
}

#[derive(Debug, Clone, Default)]
struct Held {
    size: u64,
    engine: Option<Payload>,
    copies: Vec<(NodeId, DataId)>,
}

impl Held {
    fn at(&self, node: &NodeId) -> Option<DataId> {
        self.copies.iter().find(|(n, _)| n == node).map(|(_, id)| *id)
    }
}

struct StepInfo {
    service: String,
    operation: String,
    host: NodeId,
    proxy: NodeId,
    compute_ms: f64,
    inputs: Vec<Wire>,
}

struct RunCtx<'a> {
    engine: &'a Engine,
    mode: Mode,
    steps: Vec<Vec<StepInfo>>,
    held: Mutex<HashMap<Wire, Held>>,
    resident: HashMap<(usize, usize), DataId>,
    resident_bytes: u64,
    overhead: ProxyOverhead,
}

/// Executes patterns against a cluster of proxies started for `topology`.
pub struct Engine {
    topology: Topology,
    behaviors: Vec<ServiceBehavior>,
    registry: Vec<ServiceSpec>,
    transport: TransportHandle,
    cluster: Cluster,
    runs: u64,
}

impl Engine {
    pub fn new(topology: Topology, behaviors: Vec<ServiceBehavior>, transport: TransportHandle) -> Result<Self> {
        let cluster = Cluster::start(&topology, &behaviors, &transport)?;
        let registry = behaviors.iter().map(|b| b.spec.clone()).collect();
        Ok(Self { topology, behaviors, registry, transport, cluster, runs: 0 })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn registry(&self) -> &[ServiceSpec] {
        &self.registry
    }

    /// Drops every blob held by the cluster's proxies.
    pub fn clear_stores(&self) {
        for p in self.cluster.proxies() {
            let _ = p.store().remove_all(&p.store().ids());
        }
    }

    /// Reads a final result's payload without tracing the transfer.
    pub fn fetch(&self, result: &FinalResult) -> Result<Payload> {
        match result {
            FinalResult::Data(p) => Ok(p.clone()),
            FinalResult::Ref(r) => {
                let mut p = self.cluster.endpoint(&r.home_proxy)?.return_data(&[r.id])?;
                Ok(p.remove(0))
            }
        }
    }

    pub fn run(&mut self, pattern: &WorkflowPattern, mode: Mode, case: Case) -> Result<RunTrace> {
        validate_pattern(pattern, &self.registry).map_err(Error::InvalidPattern)?;
        self.runs += 1;
        let plan = pattern.plan();
        let integrity = self.transport.integrity();

        let mut steps = Vec::with_capacity(plan.stages.len());
        for stage in &plan.stages {
            let mut infos = Vec::with_capacity(stage.len());
            for step in stage {
                let b = self.behaviors.iter().find(|b| b.id() == step.call.service).expect("validated");
                let op = step.call.resolve(&b.spec).expect("validated");
                let place = self.topology.placement(&step.call.service)?;
                infos.push(StepInfo {
                    service: step.call.service.clone(),
                    operation: op.name.clone(),
                    host: place.host.clone(),
                    proxy: place.proxy.clone(),
                    compute_ms: b.compute_delay_ms,
                    inputs: step.inputs.clone(),
                });
            }
            steps.push(infos);
        }

        // Resident datasets are placed before the clock starts.
        let mut rng = ChaCha20Rng::seed_from_u64(self.transport.seed() ^ self.runs.rotate_left(32));
        let mut resident = HashMap::new();
        for (si, stage) in steps.iter().enumerate() {
            for (pi, s) in stage.iter().enumerate() {
                if s.inputs.contains(&Wire::Resident) {
                    let at = if mode == Mode::Circulate { &s.proxy } else { &s.host };
                    let id = DataId::from_rng(&mut rng);
                    let payload = Payload::synthetic("resident", pattern.initial_input_bytes, integrity);
                    self.cluster.endpoint(at)?.stage(vec![(id, payload)])?;
                    resident.insert((si, pi), id);
                }
            }
        }

        let mut held = HashMap::new();
        held.insert(
            Wire::Initial,
            Held {
                size: pattern.initial_input_bytes,
                engine: Some(Payload::synthetic("initial", pattern.initial_input_bytes, integrity)),
                copies: Vec::new(),
            },
        );
        let ctx = RunCtx {
            engine: self,
            mode,
            steps,
            held: Mutex::new(held),
            resident,
            resident_bytes: pattern.initial_input_bytes,
            overhead: self.transport.overhead(),
        };

        let mut stages: Vec<Vec<Vec<Action>>> = Vec::new();
        let mut driver = Driver::new(self);
        for si in 0..plan.stages.len() {
            let branches = ctx.plan_stage(si);
            driver.run_stage(&ctx, &branches)?;
            stages.push(branches);
        }

        let finals: Vec<Wire> = plan.finals.iter().map(|&(stage, step)| Wire::Output { stage, step }).collect();
        if mode == Mode::Circulate && case == Case::Worst {
            let mut groups: Vec<(NodeId, Vec<Wire>)> = Vec::new();
            {
                let held = ctx.held.lock().unwrap();
                for w in &finals {
                    let home = held[w].copies[0].0.clone();
                    match groups.iter_mut().find(|(h, _)| *h == home) {
                        Some(g) => g.1.push(*w),
                        None => groups.push((home, vec![*w])),
                    }
                }
            }
            let branches: Vec<Vec<Action>> =
                groups.into_iter().map(|(from, wires)| vec![Action::Return { from, wires }]).collect();
            driver.run_stage(&ctx, &branches)?;
        }

        let held = ctx.held.into_inner().unwrap();
        let final_result = finals
            .iter()
            .map(|w| {
                let h = &held[w];
                match &h.engine {
                    Some(p) => FinalResult::Data(p.clone()),
                    None => {
                        let (home, id) = h.copies[0].clone();
                        FinalResult::Ref(DataRef { id, size_bytes: h.size, home_proxy: home })
                    }
                }
            })
            .collect();
        let (events, elapsed) = driver.finish();
        Ok(RunTrace::new(mode, case, events, elapsed, final_result))
    }
}

/// Runs a pattern once on a fresh cluster.
pub fn run(
    pattern: &WorkflowPattern,
    mode: Mode,
    case: Case,
    topology: &Topology,
    transport: &TransportHandle,
    behaviors: &[ServiceBehavior],
) -> Result<RunTrace> {
    Engine::new(topology.clone(), behaviors.to_vec(), transport.clone())?.run(pattern, mode, case)
}

impl RunCtx<'_> {
    fn ctrl(&self, refs: usize) -> u64 {
        CONTROL_BASE_BYTES + refs as u64 * self.overhead.per_ref_bytes
    }

    /// Plans every step of a stage against the locations held when the stage
    /// starts. Two steps needing the same result at the same proxy both move
    /// it; staging is idempotent so the duplicate is harmless.
    fn plan_stage(&self, si: usize) -> Vec<Vec<Action>> {
        let held = self.held.lock().unwrap();
        self.steps[si]
            .iter()
            .enumerate()
            .map(|(pi, s)| {
                if self.mode == Mode::Centralized {
                    return vec![Action::Call { stage: si, step: pi }];
                }
                let mut groups: Vec<(Option<NodeId>, Vec<Wire>)> = Vec::new();
                let mut seen = HashSet::new();
                for w in &s.inputs {
                    if *w == Wire::Resident || !seen.insert(*w) || held[w].at(&s.proxy).is_some() {
                        continue;
                    }
                    let src = held[w].copies.first().map(|(n, _)| n.clone());
                    match groups.iter_mut().find(|(g, _)| *g == src) {
                        Some(g) => g.1.push(*w),
                        None => groups.push((src, vec![*w])),
                    }
                }
                let mut actions: Vec<Action> = groups
                    .into_iter()
                    .map(|(src, wires)| match src {
                        None => Action::Upload { proxy: s.proxy.clone(), wires },
                        Some(from) => Action::Deliver { from, to: s.proxy.clone(), wires },
                    })
                    .collect();
                actions.push(Action::Invoke { stage: si, step: pi });
                actions
            })
            .collect()
    }

    fn sizes(&self, wires: &[Wire]) -> u64 {
        let held = self.held.lock().unwrap();
        wires.iter().map(|w| held[w].size).sum()
    }

    fn input_size(&self, w: &Wire) -> u64 {
        match w {
            Wire::Resident => self.resident_bytes,
            w => self.held.lock().unwrap()[w].size,
        }
    }

    /// Performs one action against the proxies and returns the hops it made.
    fn exec(&self, action: &Action) -> Result<Vec<Hop>> {
        let e = self.engine.topology.engine().clone();
        let oh = self.overhead.per_call_ms;
        let cluster = &self.engine.cluster;
        Ok(match action {
            Action::Upload { proxy, wires } => {
                let payloads: Vec<Payload> = {
                    let held = self.held.lock().unwrap();
                    wires.iter().map(|w| held[w].engine.clone().expect("engine holds uploaded data")).collect()
                };
                let bytes = payloads.iter().map(Payload::len).sum();
                let refs = cluster.endpoint(proxy)?.upload(payloads)?;
                let mut held = self.held.lock().unwrap();
                for (w, r) in wires.iter().zip(&refs) {
                    held.get_mut(w).unwrap().copies.push((proxy.clone(), r.id));
                }
                vec![Hop::data(&e, proxy, bytes), Hop::Delay(oh), Hop::control(proxy, &e, self.ctrl(refs.len()))]
            }
            Action::Deliver { from, to, wires } => {
                let ids: Vec<DataId> = {
                    let held = self.held.lock().unwrap();
                    wires.iter().map(|w| held[w].at(from).expect("planned from a held copy")).collect()
                };
                let bytes = self.sizes(wires);
                cluster.endpoint(from)?.deliver(to, &ids)?;
                let mut held = self.held.lock().unwrap();
                for (w, id) in wires.iter().zip(ids) {
                    let h = held.get_mut(w).unwrap();
                    if h.at(to).is_none() {
                        h.copies.push((to.clone(), id));
                    }
                }
                vec![
                    Hop::control(&e, from, self.ctrl(wires.len())),
                    Hop::Delay(oh),
                    Hop::data(from, to, bytes),
                    Hop::control(to, from, self.ctrl(0)),
                    Hop::control(from, &e, self.ctrl(0)),
                ]
            }
            Action::Invoke { stage, step } => {
                let s = &self.steps[*stage][*step];
                let params: Vec<DataId> = {
                    let held = self.held.lock().unwrap();
                    s.inputs
                        .iter()
                        .map(|w| match w {
                            Wire::Resident => self.resident[&(*stage, *step)],
                            w => held[w].at(&s.proxy).expect("input staged before invoke"),
                        })
                        .collect()
                };
                let in_bytes: u64 = s.inputs.iter().map(|w| self.input_size(w)).sum();
                let r = cluster.endpoint(&s.proxy)?.invoke(&s.service, &s.operation, &params)?;
                let out = r.size_bytes;
                self.held.lock().unwrap().insert(
                    Wire::Output { stage: *stage, step: *step },
                    Held { size: out, engine: None, copies: vec![(s.proxy.clone(), r.id)] },
                );
                vec![
                    Hop::control(&e, &s.proxy, self.ctrl(params.len())),
                    Hop::Delay(oh),
                    Hop::data(&s.proxy, &s.host, in_bytes),
                    Hop::Delay(s.compute_ms),
                    Hop::data(&s.host, &s.proxy, out),
                    Hop::control(&s.proxy, &e, self.ctrl(1)),
                ]
            }
            Action::Call { stage, step } => {
                let s = &self.steps[*stage][*step];
                let args: Vec<CallArg> = {
                    let held = self.held.lock().unwrap();
                    s.inputs
                        .iter()
                        .map(|w| match w {
                            Wire::Resident => CallArg::Resident(self.resident[&(*stage, *step)]),
                            w => {
                                CallArg::Inline(held[w].engine.clone().expect("centralized results live at the engine"))
                            }
                        })
                        .collect()
                };
                let inline: u64 = args
                    .iter()
                    .map(|a| match a {
                        CallArg::Inline(p) => p.len(),
                        CallArg::Resident(_) => 0,
                    })
                    .sum();
                let any_inline = args.iter().any(|a| matches!(a, CallArg::Inline(_)));
                let out = cluster.endpoint(&s.host)?.call(&s.service, &s.operation, args)?;
                let out_len = out.len();
                self.held.lock().unwrap().insert(
                    Wire::Output { stage: *stage, step: *step },
                    Held { size: out_len, engine: Some(out), copies: Vec::new() },
                );
                let request =
                    if any_inline { Hop::data(&e, &s.host, inline) } else { Hop::control(&e, &s.host, self.ctrl(0)) };
                vec![request, Hop::Delay(s.compute_ms), Hop::data(&s.host, &e, out_len)]
            }
            Action::Return { from, wires } => {
                let ids: Vec<DataId> = {
                    let held = self.held.lock().unwrap();
                    wires.iter().map(|w| held[w].at(from).expect("final held at its home")).collect()
                };
                let payloads = cluster.endpoint(from)?.return_data(&ids)?;
                let bytes = payloads.iter().map(Payload::len).sum();
                let mut held = self.held.lock().unwrap();
                for (w, p) in wires.iter().zip(payloads) {
                    held.get_mut(w).unwrap().engine = Some(p);
                }
                vec![Hop::control(&e, from, self.ctrl(ids.len())), Hop::Delay(oh), Hop::data(from, &e, bytes)]
            }
        })
    }
}

/// Advances time across stages on the configured transport.
#[allow(clippy::large_enum_variant)]
enum Driver<'a> {
    Sim { net: SimNetwork<'a>, now: f64 },
    Socket { engine: &'a Engine, start: f64 },
}

impl<'a> Driver<'a> {
    fn new(engine: &'a Engine) -> Self {
        match &engine.transport {
            TransportHandle::Simulated(cfg) => {
                let mut net = SimNetwork::new(&engine.topology);
                if let Some(j) = cfg.jitter {
                    net = net.with_jitter(cfg.seed.wrapping_add(engine.runs), j);
                }
                Driver::Sim { net, now: 0.0 }
            }
            TransportHandle::Socket(_) => {
                let net = engine.cluster.socket().expect("socket cluster");
                net.take_events();
                Driver::Socket { engine, start: net.now_ms() }
            }
        }
    }

    fn run_stage(&mut self, ctx: &RunCtx<'_>, branches: &[Vec<Action>]) -> Result<()> {
        match self {
            Driver::Sim { net, now } => {
                let mut hops = Vec::with_capacity(branches.len());
                for b in branches {
                    let mut h = Vec::new();
                    for a in b {
                        h.extend(ctx.exec(a)?);
                    }
                    hops.push(h);
                }
                let ends = net.run_branches(&hops, *now)?;
                *now = ends.into_iter().fold(*now, f64::max);
                Ok(())
            }
            Driver::Socket { engine, .. } => {
                let net = engine.cluster.socket().expect("socket cluster");
                let topo = &engine.topology;
                std::thread::scope(|scope| {
                    let handles: Vec<_> = branches
                        .iter()
                        .map(|b| {
                            scope.spawn(move || -> Result<()> {
                                for a in b {
                                    let t0 = net.now_ms();
                                    let hops = ctx.exec(a)?;
                                    let t1 = net.now_ms();
                                    for hop in hops {
                                        if let Hop::Send { from, to, kind, bytes } = hop {
                                            let link_class = topo.class(&from, &to)?;
                                            net.record(Event {
                                                depart_ms: t0,
                                                arrive_ms: t1,
                                                from,
                                                to,
                                                kind,
                                                bytes,
                                                link_class,
                                            });
                                        }
                                    }
                                }
                                Ok(())
                            })
                        })
                        .collect();
                    handles.into_iter().try_for_each(|h| h.join().expect("branch thread panicked"))
                })
            }
        }
    }

    fn finish(self) -> (Vec<Event>, f64) {
        match self {
            Driver::Sim { net, now } => (net.into_events(), now),
            Driver::Socket { engine, start } => {
                let net = engine.cluster.socket().expect("socket cluster");
                let mut events = net.take_events();
                events.sort_by(|a, b| a.depart_ms.total_cmp(&b.depart_ms));
                let end = net.now_ms();
                let events = events
                    .into_iter()
                    .map(|mut e| {
                        e.depart_ms -= start;
                        e.arrive_ms -= start;
                        e
                    })
                    .collect();
                (events, end - start)
            }
        }
    }
}
