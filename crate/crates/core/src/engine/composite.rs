use super::{Engine, RunTrace};
use crate::error::{Error, Result};
use crate::model::{
    Case, Mode, OperationSpec, ServiceCall, ServiceSpec, Step, Topology, TransformSpec, Wire, WorkflowPattern,
};
use crate::services::{ServiceBehavior, UNPLACED};
use crate::transport::TransportHandle;

/// Service ids of the end-to-end composite, in stage order.
pub const E2E_SERVICES: [&str; 9] = [
    "e2e-src-0",
    "e2e-src-1",
    "e2e-src-2",
    "e2e-sink",
    "e2e-fan-0",
    "e2e-fan-1",
    "e2e-fan-2",
    "e2e-tail-0",
    "e2e-tail-1",
];

/// Behaviors for the composite: identity sources, a sink keeping a fifth of
/// what it gathers, identity fan-out branches, then a concatenating half and
/// a plain half.
pub fn end_to_end_registry() -> Vec<ServiceBehavior> {
    let spec = |id: &str, op: OperationSpec| ServiceBehavior::new(ServiceSpec::new(id, UNPLACED, vec![op]));
    let mut out = Vec::new();
    for id in &E2E_SERVICES[..3] {
        out.push(spec(id, OperationSpec::new("emit", 1, TransformSpec::Identity)));
    }
    out.push(spec("e2e-sink", OperationSpec::variadic("compose", 1, TransformSpec::ratio_of_concat(1, 5))));
    for id in &E2E_SERVICES[4..7] {
        out.push(spec(id, OperationSpec::new("echo", 1, TransformSpec::Identity)));
    }
    out.push(spec("e2e-tail-0", OperationSpec::variadic("halve", 1, TransformSpec::ratio_of_concat(1, 2))));
    out.push(spec("e2e-tail-1", OperationSpec::new("halve", 1, TransformSpec::ratio(1, 2))));
    out
}

/// Fan-in over three sources, a sink, fan-out to three branches, then two
/// sequential halving steps.
pub fn end_to_end_pattern(input_bytes: u64) -> WorkflowPattern {
    let call = |i: usize| ServiceCall::new(E2E_SERVICES[i]);
    let out = |stage, step| Wire::Output { stage, step };
    WorkflowPattern::composite(
        vec![
            (0..3).map(|i| Step::new(call(i), vec![Wire::Resident])).collect(),
            vec![Step::new(call(3), (0..3).map(|i| out(0, i)).collect())],
            (4..7).map(|i| Step::new(call(i), vec![out(1, 0)])).collect(),
            vec![Step::new(call(7), (0..3).map(|i| out(2, i)).collect())],
            vec![Step::new(call(8), vec![out(3, 0)])],
        ],
        input_bytes,
    )
}

/// Runs the fixed composite. The topology must place every id in
/// [`E2E_SERVICES`].
pub fn run_end_to_end(
    input_bytes: u64,
    topology: &Topology,
    mode: Mode,
    case: Case,
    transport: &TransportHandle,
) -> Result<RunTrace> {
    if input_bytes == 0 {
        return Err(Error::Precondition("end-to-end input must be positive".into()));
    }
    let mut engine = Engine::new(topology.clone(), end_to_end_registry(), transport.clone())?;
    engine.run(&end_to_end_pattern(input_bytes), mode, case)
}
