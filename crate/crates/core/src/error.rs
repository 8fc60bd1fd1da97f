use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::model::Violation;

/// The four failure kinds a proxy can raise. The numeric code is the one
/// carried on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProxyErrorKind {
    InvocationParameter = 1,
    VariableNotFound = 2,
    ServiceInvocation = 3,
    ProxyAdmin = 4,
}

impl ProxyErrorKind {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Self::InvocationParameter),
            2 => Some(Self::VariableNotFound),
            3 => Some(Self::ServiceInvocation),
            4 => Some(Self::ProxyAdmin),
            _ => None,
        }
    }

    /// Only failures of the backing service (network, time-out) are worth retrying.
    pub fn is_retryable(self) -> bool {
        matches!(self, Self::ServiceInvocation)
    }
}

impl fmt::Display for ProxyErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::InvocationParameter => "InvocationParameterError",
            Self::VariableNotFound => "VariableNotFoundError",
            Self::ServiceInvocation => "ServiceInvocationError",
            Self::ProxyAdmin => "ProxyAdminError",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind}: {detail}")]
pub struct ProxyError {
    pub kind: ProxyErrorKind,
    pub detail: String,
}

impl ProxyError {
    pub fn new(kind: ProxyErrorKind, detail: impl Into<String>) -> Self {
        Self { kind, detail: detail.into() }
    }

    pub fn invocation_parameter(detail: impl Into<String>) -> Self {
        Self::new(ProxyErrorKind::InvocationParameter, detail)
    }

    pub fn variable_not_found(detail: impl Into<String>) -> Self {
        Self::new(ProxyErrorKind::VariableNotFound, detail)
    }

    pub fn service_invocation(detail: impl Into<String>) -> Self {
        Self::new(ProxyErrorKind::ServiceInvocation, detail)
    }

    pub fn proxy_admin(detail: impl Into<String>) -> Self {
        Self::new(ProxyErrorKind::ProxyAdmin, detail)
    }

    pub fn is_retryable(&self) -> bool {
        self.kind.is_retryable()
    }
}

/// Crate-level error for everything above the proxy API.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Proxy(#[from] ProxyError),
    #[error("invalid pattern: {}", join_violations(.0))]
    InvalidPattern(Vec<Violation>),
    #[error("placement error: {0}")]
    Placement(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("transport error: {0}")]
    Transport(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
