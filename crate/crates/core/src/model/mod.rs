//! Shared domain types: references, service descriptors, patterns, topology
//! and the analytic transfer accounting.

mod accounting;
mod ids;
mod pattern;
mod service;
mod topology;

pub use accounting::{expected_transfer, Case, Mode, TransferAccounting};
pub use ids::{DataId, DataRef, NodeId};
pub use pattern::{validate_pattern, PatternKind, Plan, ServiceCall, Step, Violation, Wire, WorkflowPattern};
pub use service::{OperationSpec, ParseRationalError, Rational, ServiceSpec, TransformSpec, BYTES_TYPE};
pub use topology::{LinkClass, LinkModel, NodeRole, Placement, Topology, TopologyBuilder};
