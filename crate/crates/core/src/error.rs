use thiserror::Error;

use crate::qasm::QasmError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("capacity exceeded: {what} requested {requested}, cap is {cap}")]
    CapacityExceeded {
        what: &'static str,
        requested: usize,
        cap: usize,
    },
    #[error("could not allocate {bytes} bytes for the state vector")]
    ResourceError { bytes: usize },
    #[error("index {index} out of range (size {size})")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("gate acts on {0} targets; at most {1} are supported")]
    TooManyTargets(usize, usize),
    #[error("qubit {0} appears more than once among the gate's controls and targets")]
    OverlappingQubits(usize),
    #[error("measurement outcome has probability {0:e}, which is below the collapse threshold")]
    ZeroProbabilityOutcome(f64),
    #[error("hamiltonian is not hermitian (max deviation {0:e})")]
    NonHermitian(f64),
    #[error("fusion supports max_qubits == 2 only, got {0}")]
    UnsupportedMaxQubits(usize),
    #[error("circuit requires an even number of qubits, got {0}")]
    OddQubits(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Qasm(#[from] QasmError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
