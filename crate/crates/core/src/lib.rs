//! State-vector quantum circuit simulation.
//!
//! Amplitudes live in one contiguous buffer and gates update it in place
//! through bit-manipulated index pairs. Qubit 0 is the most significant bit
//! of a basis index.

pub mod bench;
pub mod circuit;
pub mod error;
pub mod evolution;
pub mod fusion;
pub mod kernels;
pub mod measure;
pub mod qasm;
pub mod statevec;

pub use circuit::{execute, Backend, Circuit, GateKind, GateOp};
pub use error::{Error, Result};
pub use kernels::GateMatrix;
pub use statevec::{Precision, StateVector};
