use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{validate_pattern, LinkClass, NodeId, ServiceSpec, Topology, Wire, WorkflowPattern};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Every result returns to the engine (the vanilla model).
    Centralized,
    /// Results stay at proxies and move proxy to proxy.
    Circulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// Final results stay on their proxies.
    Best,
    /// Final results are fetched back to the engine.
    Worst,
}

macro_rules! text_enum {
    ($ty:ident { $($v:ident => $s:literal),* }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$v => $s),* }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($s => Ok($ty::$v),)*
                    _ => Err(format!("unknown {} `{s}`", stringify!($ty).to_lowercase())),
                }
            }
        }
    };
}

text_enum!(Mode { Centralized => "centralized", Circulate => "circulate" });
text_enum!(Case { Best => "best", Worst => "worst" });

/// Bytes and message counts per link class. Only data-carrying messages are
/// counted; control messages carry no payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferAccounting {
    pub bytes_by_class: BTreeMap<LinkClass, u64>,
    pub total_bytes: u64,
    pub message_count_by_class: BTreeMap<LinkClass, u64>,
}

impl Default for TransferAccounting {
    fn default() -> Self {
        Self {
            bytes_by_class: LinkClass::ALL.iter().map(|c| (*c, 0)).collect(),
            total_bytes: 0,
            message_count_by_class: LinkClass::ALL.iter().map(|c| (*c, 0)).collect(),
        }
    }
}

impl TransferAccounting {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one message. Same-server messages are counted but carry no bytes.
    pub fn record(&mut self, class: LinkClass, bytes: u64) {
        let bytes = if class == LinkClass::SameServer { 0 } else { bytes };
        *self.bytes_by_class.entry(class).or_default() += bytes;
        *self.message_count_by_class.entry(class).or_default() += 1;
        self.total_bytes += bytes;
    }

    pub fn bytes(&self, class: LinkClass) -> u64 {
        self.bytes_by_class.get(&class).copied().unwrap_or(0)
    }

    pub fn messages(&self, class: LinkClass) -> u64 {
        self.message_count_by_class.get(&class).copied().unwrap_or(0)
    }

    pub fn total_messages(&self) -> u64 {
        self.message_count_by_class.values().sum()
    }
}

/// Byte totals per link class for an idealized run of `pattern`.
///
/// Output sizes follow each operation's transform, so the registry is needed
/// alongside the topology. Fan-in and fan-out sources read a resident dataset
/// of `initial_input_bytes` already held where they run; a sequence's initial
/// input starts at the engine.
pub fn expected_transfer(
    pattern: &WorkflowPattern,
    mode: Mode,
    topology: &Topology,
    case: Case,
    registry: &[ServiceSpec],
) -> Result<TransferAccounting> {
    validate_pattern(pattern, registry).map_err(Error::InvalidPattern)?;
    let plan = pattern.plan();
    let engine = topology.engine().clone();
    let mut acc = TransferAccounting::new();
    let mut send = |from: &NodeId, to: &NodeId, bytes: u64| -> Result<()> {
        acc.record(topology.class(from, to)?, bytes);
        Ok(())
    };

    let size_of = |sizes: &[Vec<u64>], w: &Wire| match *w {
        Wire::Initial | Wire::Resident => pattern.initial_input_bytes,
        Wire::Output { stage, step } => sizes[stage][step],
    };

    // Result locations. Engine copies are tracked as `None`.
    let mut sizes: Vec<Vec<u64>> = Vec::with_capacity(plan.stages.len());
    let mut copies: HashMap<Wire, Vec<Option<NodeId>>> = HashMap::new();
    copies.insert(Wire::Initial, vec![None]);
    let mut homes: HashMap<(usize, usize), NodeId> = HashMap::new();

    for (si, stage) in plan.stages.iter().enumerate() {
        let snapshot = copies.clone();
        let mut stage_sizes = Vec::with_capacity(stage.len());
        for step in stage {
            let spec = registry.iter().find(|s| s.service_id == step.call.service).expect("validated");
            let op = step.call.resolve(spec).expect("validated");
            let place = topology.placement(&spec.service_id)?;
            let in_bytes: u64 = step.inputs.iter().map(|w| size_of(&sizes, w)).sum();
            let out = op.transform.output_size(in_bytes);

            match mode {
                Mode::Centralized => {
                    let inline: u64 =
                        step.inputs.iter().filter(|w| **w != Wire::Resident).map(|w| size_of(&sizes, w)).sum();
                    if step.inputs.iter().any(|w| *w != Wire::Resident) {
                        send(&engine, &place.host, inline)?;
                    }
                    send(&place.host, &engine, out)?;
                }
                Mode::Circulate => {
                    let p = &place.proxy;
                    // Group moves by source, in first-appearance order.
                    let mut groups: Vec<(Option<NodeId>, u64)> = Vec::new();
                    let mut seen = HashSet::new();
                    for w in &step.inputs {
                        if *w == Wire::Resident || !seen.insert(*w) {
                            continue;
                        }
                        let locs = &snapshot[w];
                        if locs.contains(&Some(p.clone())) {
                            continue;
                        }
                        let src = locs.iter().find(|l| l.is_some()).cloned().unwrap_or(None);
                        let bytes = size_of(&sizes, w);
                        match groups.iter_mut().find(|(s, _)| *s == src) {
                            Some(g) => g.1 += bytes,
                            None => groups.push((src, bytes)),
                        }
                        copies.get_mut(w).expect("tracked").push(Some(p.clone()));
                    }
                    for (src, bytes) in groups {
                        send(src.as_ref().unwrap_or(&engine), p, bytes)?;
                    }
                    send(p, &place.host, in_bytes)?;
                    send(&place.host, p, out)?;
                }
            }
            stage_sizes.push(out);
            homes.insert((si, stage_sizes.len() - 1), place.proxy.clone());
        }
        for i in 0..stage.len() {
            let loc = match mode {
                Mode::Centralized => None,
                Mode::Circulate => Some(homes[&(si, i)].clone()),
            };
            copies.insert(Wire::Output { stage: si, step: i }, vec![loc]);
        }
        sizes.push(stage_sizes);
    }

    if mode == Mode::Circulate && case == Case::Worst {
        let mut groups: Vec<(NodeId, u64)> = Vec::new();
        for &(s, i) in &plan.finals {
            let home = &homes[&(s, i)];
            match groups.iter_mut().find(|(h, _)| h == home) {
                Some(g) => g.1 += sizes[s][i],
                None => groups.push((home.clone(), sizes[s][i])),
            }
        }
        for (home, bytes) in groups {
            send(&home, &engine, bytes)?;
        }
    }
    Ok(acc)
}
