//! Mock services realizing input-to-output size laws.

use std::fmt;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, ProxyError, Result};
use crate::model::{OperationSpec, ServiceSpec, TransformSpec};

/// Host recorded on preset specs until a topology places them.
pub const UNPLACED: &str = "unplaced";

/// A blob moving through the system. `Sized` stands in for content that is
/// never materialized: it keeps the length and a digest that identifies it.
#[derive(Clone, PartialEq, Eq)]
pub enum Payload {
    Bytes(Vec<u8>),
    Sized { len: u64, digest: [u8; 32] },
}

impl fmt::Debug for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Bytes(b) => write!(f, "Bytes(len={})", b.len()),
            Payload::Sized { len, digest } => write!(f, "Sized(len={len}, {})", &hex::encode(digest)[..12]),
        }
    }
}

impl Payload {
    pub fn len(&self) -> u64 {
        match self {
            Payload::Bytes(b) => b.len() as u64,
            Payload::Sized { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_sized(&self) -> bool {
        matches!(self, Payload::Sized { .. })
    }

    /// SHA-256 of the bytes, or the carried digest for a sized payload.
    pub fn content_hash(&self) -> [u8; 32] {
        match self {
            Payload::Bytes(b) => Sha256::digest(b).into(),
            Payload::Sized { digest, .. } => *digest,
        }
    }

    /// Deterministic payload of `len` bytes derived from `seed`.
    pub fn generate(seed: [u8; 32], len: u64, materialize: bool) -> Payload {
        if materialize {
            let mut buf = vec![0u8; len as usize];
            ChaCha20Rng::from_seed(seed).fill_bytes(&mut buf);
            Payload::Bytes(buf)
        } else {
            let mut h = Sha256::new();
            h.update(b"sized");
            h.update(seed);
            Payload::Sized { len, digest: h.finalize().into() }
        }
    }

    /// Seeded payload named by a text label, e.g. a workflow's initial input.
    pub fn synthetic(label: &str, len: u64, materialize: bool) -> Payload {
        let mut h = Sha256::new();
        h.update(label.as_bytes());
        h.update(len.to_be_bytes());
        Payload::generate(h.finalize().into(), len, materialize)
    }
}

/// A mock service: its descriptor plus an optional fixed compute delay.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceBehavior {
    pub spec: ServiceSpec,
    pub compute_delay_ms: f64,
}

impl ServiceBehavior {
    pub fn new(spec: ServiceSpec) -> Self {
        Self { spec, compute_delay_ms: 0.0 }
    }

    pub fn with_delay(mut self, compute_delay_ms: f64) -> Self {
        self.compute_delay_ms = compute_delay_ms;
        self
    }

    pub fn id(&self) -> &str {
        &self.spec.service_id
    }

    pub fn operation(&self, name: &str) -> Result<&OperationSpec, ProxyError> {
        self.spec.operation(name).ok_or_else(|| {
            ProxyError::invocation_parameter(format!("service `{}` has no operation `{name}`", self.spec.service_id))
        })
    }

    /// Runs `operation` over `inputs`. The output length follows the size law
    /// on the summed input length; content is seeded from the service, the
    /// operation and the input hashes. The output is materialized unless some
    /// input is sized.
    pub fn apply(&self, operation: &str, inputs: &[Payload]) -> Result<Payload, ProxyError> {
        let op = self.operation(operation)?;
        op.check_arity(inputs.len()).map_err(ProxyError::invocation_parameter)?;
        let total: u64 = inputs.iter().map(Payload::len).sum();
        let out_len = op.transform.output_size(total);

        let mut h = Sha256::new();
        h.update(self.spec.service_id.as_bytes());
        h.update([0]);
        h.update(op.name.as_bytes());
        for p in inputs {
            h.update(p.content_hash());
        }
        h.update(out_len.to_be_bytes());
        let materialize = !inputs.iter().any(Payload::is_sized);
        Ok(Payload::generate(h.finalize().into(), out_len, materialize))
    }
}

fn behavior(id: &str, ops: Vec<OperationSpec>) -> ServiceBehavior {
    ServiceBehavior::new(ServiceSpec::new(id, UNPLACED, ops))
}

/// Built-in service sets: `patterns` for the benchmark shapes and `montage`
/// for the mosaic workflow components.
pub fn preset_registry(name: &str) -> Result<Vec<ServiceBehavior>> {
    match name {
        "patterns" => Ok(vec![
            behavior("grow", vec![OperationSpec::new("grow", 1, TransformSpec::ratio(6, 5))]),
            behavior("sink", vec![OperationSpec::variadic("compose", 1, TransformSpec::ratio_of_concat(1, 5))]),
            behavior("identity", vec![OperationSpec::new("echo", 1, TransformSpec::Identity)]),
            behavior("half", vec![OperationSpec::variadic("halve", 1, TransformSpec::ratio_of_concat(1, 2))]),
        ]),
        "montage" => Ok(vec![
            behavior("mProject", vec![OperationSpec::new("project", 1, TransformSpec::Identity)]),
            behavior("mDiffFit", vec![OperationSpec::new("diff_fit", 1, TransformSpec::ratio(7, 40))]),
            behavior(
                "mConcatFit",
                vec![OperationSpec::variadic("concat_fit", 1, TransformSpec::ratio_of_concat(1, 5))],
            ),
            behavior("mBgModel", vec![OperationSpec::variadic("bg_model", 1, TransformSpec::ratio_of_concat(1, 5))]),
            behavior("mBackground", vec![OperationSpec::new("background", 1, TransformSpec::Identity)]),
            behavior("mAdd", vec![OperationSpec::variadic("add", 1, TransformSpec::ratio_of_concat(4, 5))]),
        ]),
        other => Err(Error::UnknownPreset(other.to_owned())),
    }
}

/// Looks up a preset behavior by service id.
pub fn preset_behavior(preset: &str, service_id: &str) -> Result<ServiceBehavior> {
    preset_registry(preset)?
        .into_iter()
        .find(|b| b.id() == service_id)
        .ok_or_else(|| Error::UnknownPreset(format!("{preset}/{service_id}")))
}
