use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{end_to_end_pattern, end_to_end_registry, E2E_SERVICES};
use crate::error::{Error, Result};
use crate::model::{
    LinkModel, OperationSpec, ServiceCall, ServiceSpec, Step, Topology, TransformSpec, Wire, WorkflowPattern,
};
use crate::services::{preset_behavior, ServiceBehavior};
use crate::transport::ProxyOverhead;

/// Link and proxy parameters of the reference topology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Calibration {
    pub wan_latency_ms: f64,
    pub wan_bandwidth_bytes_per_ms: f64,
    pub lan_latency_ms: f64,
    pub lan_bandwidth_bytes_per_ms: f64,
    pub per_message_overhead_ms: f64,
    pub overhead: ProxyOverhead,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            wan_latency_ms: 10.0,
            wan_bandwidth_bytes_per_ms: 40_000.0,
            lan_latency_ms: 1.0,
            lan_bandwidth_bytes_per_ms: 100_000.0,
            per_message_overhead_ms: 0.0,
            overhead: ProxyOverhead::default(),
        }
    }
}

impl Calibration {
    pub fn wan(&self) -> LinkModel {
        LinkModel::wan(self.wan_latency_ms, self.wan_bandwidth_bytes_per_ms).with_overhead(self.per_message_overhead_ms)
    }

    pub fn lan(&self) -> LinkModel {
        LinkModel::lan(self.lan_latency_ms, self.lan_bandwidth_bytes_per_ms).with_overhead(self.per_message_overhead_ms)
    }
}

/// Whether the engine shares a LAN with the services or reaches them over the WAN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Locality {
    Local,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternFamily {
    Sequence,
    FanIn,
    FanOut,
    EndToEnd,
}

impl PatternFamily {
    pub const ISOLATED: [PatternFamily; 3] = [PatternFamily::Sequence, PatternFamily::FanIn, PatternFamily::FanOut];
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
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($s => Ok($ty::$v),)*
                    _ => Err(format!("unknown {} `{s}`", stringify!($ty))),
                }
            }
        }
    };
}

text_enum!(Locality { Local => "local", Remote => "remote" });
text_enum!(PatternFamily { Sequence => "sequence", FanIn => "fan_in", FanOut => "fan_out", EndToEnd => "end_to_end" });

/// Everything needed to run one configuration point.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub pattern: WorkflowPattern,
    pub behaviors: Vec<ServiceBehavior>,
    pub topology: Topology,
}

fn renamed(preset: &str, id: &str, new_id: String) -> ServiceBehavior {
    let mut b = preset_behavior(preset, id).expect("built-in preset");
    b.spec.service_id = new_id;
    b
}

/// Engine plus hosts: engine links are LAN for local runs and WAN for remote
/// ones, hosts share one LAN.
fn topology(cal: &Calibration, locality: Locality, placements: &[(String, String)]) -> Result<Topology> {
    let mut hosts: Vec<&str> = Vec::new();
    for (_, h) in placements {
        if !hosts.contains(&h.as_str()) {
            hosts.push(h);
        }
    }
    let engine_link = match locality {
        Locality::Local => cal.lan(),
        Locality::Remote => cal.wan(),
    };
    let mut b = Topology::builder("engine");
    for (s, h) in placements {
        b = b.place(s.clone(), h.clone(), h.clone());
    }
    for (i, h) in hosts.iter().enumerate() {
        b = b.link("engine", *h, engine_link);
        for other in &hosts[i + 1..] {
            b = b.link(*h, *other, cal.lan());
        }
    }
    b.build()
}

impl Scenario {
    /// The reference configuration for `family` with `services` services.
    ///
    /// Sequence: `services` growing steps (x1.2) on their own servers, the
    /// initial input uploaded by the engine. Fan-in: `services - 1` sources
    /// sharing one server read a resident dataset and feed a sink keeping a
    /// fifth. Fan-out: one source feeds `services - 1` identity sinks on
    /// their own servers. End-to-end ignores `services`. Every server runs its
    /// own proxy.
    pub fn reference(
        family: PatternFamily,
        services: usize,
        locality: Locality,
        cal: &Calibration,
        input_bytes: u64,
    ) -> Result<Scenario> {
        if family != PatternFamily::EndToEnd && services < 3 {
            return Err(Error::Config(format!("{family} needs at least 3 services, got {services}")));
        }
        let (pattern, behaviors, placements): (WorkflowPattern, Vec<ServiceBehavior>, Vec<(String, String)>) =
            match family {
                PatternFamily::Sequence => {
                    let ids: Vec<String> = (0..services).map(|i| format!("grow-{i}")).collect();
                    (
                        WorkflowPattern::sequence(ids.iter().map(ServiceCall::new).collect(), input_bytes),
                        ids.iter().map(|id| renamed("patterns", "grow", id.clone())).collect(),
                        ids.iter().enumerate().map(|(i, id)| (id.clone(), format!("s{i}"))).collect(),
                    )
                }
                PatternFamily::FanIn => {
                    let src: Vec<String> = (0..services - 1).map(|i| format!("source-{i}")).collect();
                    let mut behaviors: Vec<_> =
                        src.iter().map(|id| renamed("patterns", "identity", id.clone())).collect();
                    behaviors.push(renamed("patterns", "sink", "sink".into()));
                    let mut placements: Vec<_> = src.iter().map(|id| (id.clone(), "src".to_owned())).collect();
                    placements.push(("sink".into(), "sink".into()));
                    (
                        WorkflowPattern::fan_in(
                            src.iter().map(ServiceCall::new).collect(),
                            ServiceCall::new("sink"),
                            input_bytes,
                        ),
                        behaviors,
                        placements,
                    )
                }
                PatternFamily::FanOut => {
                    let sinks: Vec<String> = (0..services - 1).map(|i| format!("branch-{i}")).collect();
                    let mut behaviors = vec![renamed("patterns", "identity", "source".into())];
                    behaviors.extend(sinks.iter().map(|id| renamed("patterns", "identity", id.clone())));
                    let mut placements = vec![("source".to_owned(), "src".to_owned())];
                    placements.extend(sinks.iter().enumerate().map(|(i, id)| (id.clone(), format!("b{i}"))));
                    (
                        WorkflowPattern::fan_out(
                            ServiceCall::new("source"),
                            sinks.iter().map(ServiceCall::new).collect(),
                            input_bytes,
                        ),
                        behaviors,
                        placements,
                    )
                }
                PatternFamily::EndToEnd => {
                    let hosts = ["A", "A", "A", "B", "C0", "C1", "C2", "D", "F"];
                    (
                        end_to_end_pattern(input_bytes),
                        end_to_end_registry(),
                        E2E_SERVICES.iter().zip(hosts).map(|(s, h)| (s.to_string(), h.to_string())).collect(),
                    )
                }
            };
        let topology = topology(cal, locality, &placements)?;
        Ok(Scenario { pattern, behaviors, topology })
    }

    /// One query-style service: a small request in, `output_bytes` of a
    /// resident dataset back.
    pub fn single_invocation(locality: Locality, cal: &Calibration, output_bytes: u64) -> Result<Scenario> {
        let b = ServiceBehavior::new(ServiceSpec::new(
            "query",
            "unplaced",
            vec![OperationSpec::new("select", 1, TransformSpec::Identity)],
        ));
        let pattern = WorkflowPattern::composite(
            vec![vec![Step::new(ServiceCall::new("query"), vec![Wire::Resident])]],
            output_bytes,
        );
        let topology = topology(cal, locality, &[("query".into(), "server".into())])?;
        Ok(Scenario { pattern, behaviors: vec![b], topology })
    }

    pub fn services(&self) -> usize {
        self.behaviors.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_pattern, LinkClass, NodeId};

    #[test]
    fn reference_scenarios_validate() {
        let cal = Calibration::default();
        for f in [PatternFamily::Sequence, PatternFamily::FanIn, PatternFamily::FanOut, PatternFamily::EndToEnd] {
            for n in [3, 17] {
                let s = Scenario::reference(f, n, Locality::Remote, &cal, 1000).unwrap();
                let specs: Vec<_> = s.behaviors.iter().map(|b| b.spec.clone()).collect();
                validate_pattern(&s.pattern, &specs).unwrap();
                if f != PatternFamily::EndToEnd {
                    assert_eq!(s.services(), n);
                }
            }
        }
        assert!(Scenario::reference(PatternFamily::FanIn, 2, Locality::Local, &cal, 1).is_err());
    }

    #[test]
    fn locality_sets_engine_links() {
        let cal = Calibration::default();
        let e = NodeId::from("engine");
        let s = Scenario::reference(PatternFamily::Sequence, 3, Locality::Local, &cal, 1).unwrap();
        assert_eq!(s.topology.class(&e, &"s0".into()).unwrap(), LinkClass::Lan);
        assert!(s.topology.engine_is_local());
        let s = Scenario::reference(PatternFamily::Sequence, 3, Locality::Remote, &cal, 1).unwrap();
        assert_eq!(s.topology.class(&e, &"s0".into()).unwrap(), LinkClass::Wan);
        assert_eq!(s.topology.class(&"s0".into(), &"s2".into()).unwrap(), LinkClass::Lan);
    }
}
