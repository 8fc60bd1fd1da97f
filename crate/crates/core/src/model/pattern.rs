use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{OperationSpec, ServiceSpec};

/// A service operation referenced from a pattern. When `operation` is absent
/// the service's first declared operation is used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "CallRepr", into = "CallRepr")]
pub struct ServiceCall {
    pub service: String,
    pub operation: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CallRepr {
    Name(String),
    Full { service: String, operation: Option<String> },
}

impl From<CallRepr> for ServiceCall {
    fn from(r: CallRepr) -> Self {
        match r {
            CallRepr::Name(service) => Self { service, operation: None },
            CallRepr::Full { service, operation } => Self { service, operation },
        }
    }
}

impl From<ServiceCall> for CallRepr {
    fn from(c: ServiceCall) -> Self {
        match c.operation {
            None => CallRepr::Name(c.service),
            op => CallRepr::Full { service: c.service, operation: op },
        }
    }
}

impl ServiceCall {
    pub fn new(service: impl Into<String>) -> Self {
        Self { service: service.into(), operation: None }
    }

    pub fn op(service: impl Into<String>, operation: impl Into<String>) -> Self {
        Self { service: service.into(), operation: Some(operation.into()) }
    }

    /// Resolves the operation against a registry entry.
    pub fn resolve<'a>(&self, spec: &'a ServiceSpec) -> Option<&'a OperationSpec> {
        match &self.operation {
            Some(name) => spec.operation(name),
            None => spec.operations.first(),
        }
    }
}

impl fmt::Display for ServiceCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.operation {
            Some(op) => write!(f, "{}.{}", self.service, op),
            None => f.write_str(&self.service),
        }
    }
}

/// Where a step's input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Wire {
    /// The pattern's initial input, held by the engine and uploaded on demand.
    Initial,
    /// A dataset of `initial_input_bytes` already resident at the service's
    /// server; the step is triggered by a control message only.
    Resident,
    /// The output of an earlier step.
    Output { stage: usize, step: usize },
}

impl Serialize for Wire {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        match self {
            Wire::Initial => s.serialize_str("initial"),
            Wire::Resident => s.serialize_str("resident"),
            Wire::Output { stage, step } => {
                let mut st = s.serialize_struct("Output", 2)?;
                st.serialize_field("stage", stage)?;
                st.serialize_field("step", step)?;
                st.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for Wire {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Out { stage: usize, step: usize },
        }
        match Raw::deserialize(d)? {
            Raw::Text(t) if t == "initial" => Ok(Wire::Initial),
            Raw::Text(t) if t == "resident" => Ok(Wire::Resident),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("unknown wire `{t}`"))),
            Raw::Out { stage, step } => Ok(Wire::Output { stage, step }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub call: ServiceCall,
    pub inputs: Vec<Wire>,
}

impl Step {
    pub fn new(call: ServiceCall, inputs: Vec<Wire>) -> Self {
        Self { call, inputs }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatternKind {
    Sequence {
        services: Vec<ServiceCall>,
    },
    FanIn {
        sources: Vec<ServiceCall>,
        sink: ServiceCall,
    },
    FanOut {
        source: ServiceCall,
        sinks: Vec<ServiceCall>,
    },
    /// Ordered stages; steps within a stage run in parallel.
    Composite {
        stages: Vec<Vec<Step>>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowPattern {
    #[serde(flatten)]
    pub kind: PatternKind,
    pub initial_input_bytes: u64,
}

/// The pattern flattened into stages of steps, the common form executed by
/// the engine and walked by the accounting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub stages: Vec<Vec<Step>>,
    /// `(stage, step)` of every final result, in order.
    pub finals: Vec<(usize, usize)>,
}

impl WorkflowPattern {
    pub fn sequence(services: Vec<ServiceCall>, initial_input_bytes: u64) -> Self {
        Self { kind: PatternKind::Sequence { services }, initial_input_bytes }
    }

    pub fn fan_in(sources: Vec<ServiceCall>, sink: ServiceCall, initial_input_bytes: u64) -> Self {
        Self { kind: PatternKind::FanIn { sources, sink }, initial_input_bytes }
    }

    pub fn fan_out(source: ServiceCall, sinks: Vec<ServiceCall>, initial_input_bytes: u64) -> Self {
        Self { kind: PatternKind::FanOut { source, sinks }, initial_input_bytes }
    }

    pub fn composite(stages: Vec<Vec<Step>>, initial_input_bytes: u64) -> Self {
        Self { kind: PatternKind::Composite { stages }, initial_input_bytes }
    }

    pub fn plan(&self) -> Plan {
        let stages: Vec<Vec<Step>> = match &self.kind {
            PatternKind::Sequence { services } => services
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let input = if i == 0 { Wire::Initial } else { Wire::Output { stage: i - 1, step: 0 } };
                    vec![Step::new(c.clone(), vec![input])]
                })
                .collect(),
            PatternKind::FanIn { sources, sink } => vec![
                sources.iter().map(|c| Step::new(c.clone(), vec![Wire::Resident])).collect(),
                vec![Step::new(sink.clone(), (0..sources.len()).map(|step| Wire::Output { stage: 0, step }).collect())],
            ],
            PatternKind::FanOut { source, sinks } => vec![
                vec![Step::new(source.clone(), vec![Wire::Resident])],
                sinks.iter().map(|c| Step::new(c.clone(), vec![Wire::Output { stage: 0, step: 0 }])).collect(),
            ],
            PatternKind::Composite { stages } => stages.clone(),
        };
        let finals = match stages.last() {
            Some(last) => (0..last.len()).map(|i| (stages.len() - 1, i)).collect(),
            None => Vec::new(),
        };
        Plan { stages, finals }
    }

    pub fn services(&self) -> Vec<&ServiceCall> {
        match &self.kind {
            PatternKind::Sequence { services } => services.iter().collect(),
            PatternKind::FanIn { sources, sink } => sources.iter().chain(std::iter::once(sink)).collect(),
            PatternKind::FanOut { source, sinks } => std::iter::once(source).chain(sinks).collect(),
            PatternKind::Composite { stages } => stages.iter().flatten().map(|s| &s.call).collect(),
        }
    }
}

/// One structural or registry problem with a pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Checks structure and registry references. Problems are collected, not thrown.
pub fn validate_pattern(pattern: &WorkflowPattern, registry: &[ServiceSpec]) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let mut push = |location: String, message: String| out.push(Violation { location, message });

    match &pattern.kind {
        PatternKind::Sequence { services } if services.is_empty() => {
            push("sequence".into(), "Sequence requires ≥1 service".into())
        }
        PatternKind::FanIn { sources, .. } if sources.len() < 2 => {
            push("fan_in".into(), "FanIn requires ≥2 sources".into())
        }
        PatternKind::FanOut { sinks, .. } if sinks.len() < 2 => {
            push("fan_out".into(), "FanOut requires ≥2 sinks".into())
        }
        _ => {}
    }

    let plan = pattern.plan();
    for (si, stage) in plan.stages.iter().enumerate() {
        if stage.is_empty() {
            push(format!("stage {si}"), "stage has no steps".into());
        }
        for (pi, step) in stage.iter().enumerate() {
            let loc = format!("stage {si} step {pi} ({})", step.call);
            for wire in &step.inputs {
                if let Wire::Output { stage, step: st } = *wire {
                    if stage >= si {
                        push(loc.clone(), format!("input from stage {stage} is not produced by an earlier stage"));
                    } else if st >= plan.stages[stage].len() {
                        push(loc.clone(), format!("stage {stage} has no step {st}"));
                    }
                }
            }
            match registry.iter().find(|s| s.service_id == step.call.service) {
                None => push(loc, format!("unknown service \"{}\"", step.call.service)),
                Some(spec) => match step.call.resolve(spec) {
                    None => push(
                        loc,
                        format!(
                            "service \"{}\" has no operation {}",
                            spec.service_id,
                            step.call.operation.as_deref().map(|o| format!("\"{o}\"")).unwrap_or_default()
                        ),
                    ),
                    Some(op) => {
                        if let Err(e) = op.check_arity(step.inputs.len()) {
                            push(loc, e);
                        }
                    }
                },
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
