use thiserror::Error;

/// Errors raised by lattice construction, solvers and certificates.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid tree model: {0}")]
    InvalidModel(String),

    #[error("step {step} out of range for a tree with {steps} steps")]
    StepOutOfRange { step: usize, steps: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("martingale representation needs the symmetric walk (up probability {0})")]
    NonSymmetric(f64),

    #[error("negative increment {value} at node ({step}, {node})")]
    NegativeIncrement { step: usize, node: usize, value: f64 },

    #[error("lower barrier above upper barrier at node ({step}, {node}): {lower} > {upper}")]
    BarrierOrder {
        step: usize,
        node: usize,
        lower: f64,
        upper: f64,
    },

    #[error("implicit step: no sign change around e = {e} after {doublings} bracket doublings")]
    NoBracket { e: f64, doublings: u32 },

    #[error("enumeration depth {depth} exceeds cap {max_depth}")]
    DepthExceeded { depth: usize, max_depth: usize },

    #[error("envelope below obstacle at node ({step}, {node})")]
    CorruptedEnvelope { step: usize, node: usize },

    #[error("process is not a member of the dominating class: {0}")]
    NotInClass(String),

    #[error("penalized solve produced K- mass {mass} at node ({step}, {node})")]
    UpperReflection { step: usize, node: usize, mass: f64 },

    #[error("penalized iterates decreased by {violation:e} between n = {from} and n = {to}")]
    Monotonicity { from: u64, to: u64, violation: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
