use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{width} qubits exceeds the dense unitary cap of {cap}")]
    WidthOverCap { width: usize, cap: usize },

    #[error("qasm line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{what}: bad magic bytes")]
    BadMagic { what: &'static str },

    #[error("{what}: unsupported format version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u16,
        expected: u16,
    },

    #[error("{what}: checksum mismatch")]
    Checksum { what: &'static str },

    #[error("{what}: malformed file: {msg}")]
    Format { what: &'static str, msg: String },

    #[error("model expects {expected} input channels, got {found}")]
    ChannelMismatch { expected: usize, found: usize },

    #[error("gate set mismatch: expected {expected}, found {found}")]
    GateSetMismatch { expected: String, found: String },

    #[error("verification failed at iteration {iteration}")]
    VerificationFailed { iteration: usize },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
