//! TOML run configuration: registry, pattern, topology, mode and case in
//! one document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::ExperimentConfig;
use crate::error::{Error, Result};
use crate::model::{Case, LinkClass, LinkModel, Mode, NodeRole, OperationSpec, ServiceSpec, Topology, WorkflowPattern};
use crate::services::{preset_behavior, ServiceBehavior};
use crate::transport::{ProxyOverhead, SimConfig, SocketConfig, TransportHandle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceEntry {
    pub id: String,
    pub host: String,
    /// Node of the proxy maintaining the service; defaults to `host`.
    #[serde(default)]
    pub proxy: Option<String>,
    /// Copy operations from a preset service, as `preset/service`.
    #[serde(default)]
    pub from: Option<String>,
    #[serde(default)]
    pub operations: Vec<OperationSpec>,
    #[serde(default)]
    pub compute_delay_ms: f64,
}

/// `[a, b, class, latency_ms, bandwidth_bytes_per_ms, overhead_ms]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkEntry(pub String, pub String, pub LinkClass, pub f64, pub f64, pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyEntry {
    pub engine: String,
    /// Extra nodes not named by any service.
    #[serde(default)]
    pub nodes: Vec<String>,
    pub links: Vec<LinkEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportChoice {
    #[default]
    Simulated,
    Socket,
}

fn default_worker_limit() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub case: Case,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub transport: TransportChoice,
    #[serde(default)]
    pub integrity: bool,
    #[serde(default)]
    pub jitter: Option<f64>,
    #[serde(default = "default_worker_limit")]
    pub worker_limit: usize,
    pub services: Vec<ServiceEntry>,
    pub pattern: WorkflowPattern,
    pub topology: TopologyEntry,
    #[serde(default)]
    pub overhead: ProxyOverhead,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn behaviors(&self) -> Result<Vec<ServiceBehavior>> {
        self.services
            .iter()
            .map(|s| {
                let mut ops = s.operations.clone();
                if let Some(from) = &s.from {
                    let (preset, id) = from
                        .split_once('/')
                        .ok_or_else(|| Error::Config(format!("`from` must be preset/service, got `{from}`")))?;
                    ops.extend(preset_behavior(preset, id)?.spec.operations);
                }
                let spec = ServiceSpec::new(s.id.clone(), s.host.clone(), ops);
                spec.check().map_err(|e| Error::Config(format!("service `{}`: {e}", s.id)))?;
                Ok(ServiceBehavior::new(spec).with_delay(s.compute_delay_ms))
            })
            .collect()
    }

    pub fn topology(&self) -> Result<Topology> {
        let mut b = Topology::builder(self.topology.engine.as_str());
        for n in &self.topology.nodes {
            b = b.node(n.as_str(), &[]);
        }
        for s in &self.services {
            b = b.place(s.id.clone(), s.host.clone(), s.proxy.clone().unwrap_or_else(|| s.host.clone()));
        }
        for LinkEntry(a, c, class, lat, bw, ovh) in &self.topology.links {
            b = b.node(a.as_str(), &[]).node(c.as_str(), &[]);
            b = b.link(a.as_str(), c.as_str(), LinkModel::new(*class, *lat, *bw, *ovh));
        }
        let t = b.build()?;
        debug_assert!(t.has_role(t.engine(), NodeRole::Engine));
        Ok(t)
    }

    pub fn transport(&self) -> TransportHandle {
        match self.transport {
            TransportChoice::Simulated => TransportHandle::Simulated(SimConfig {
                seed: self.seed,
                jitter: self.jitter,
                overhead: self.overhead,
                integrity: self.integrity,
                worker_limit: self.worker_limit,
            }),
            TransportChoice::Socket => TransportHandle::Socket(SocketConfig {
                seed: self.seed,
                overhead: self.overhead,
                integrity: self.integrity,
                worker_limit: self.worker_limit,
            }),
        }
    }
}

pub fn load_experiment(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
