use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands disagree along a named axis.
    Shape {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        found: usize,
    },
    /// A precondition that is not a plain axis mismatch.
    Contract { op: &'static str, msg: String },
    /// An image cannot support the requested pyramid depth.
    TooSmall {
        height: usize,
        width: usize,
        levels: usize,
        min_side: usize,
    },
    /// The training loss stopped being finite.
    NonFiniteLoss { step: usize },
    /// A finite-difference probe evaluated to a non-finite value.
    NonFiniteProbe { index: usize },
}

impl Error {
    pub(crate) fn contract(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Contract { op, msg: msg.into() }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape {
                op,
                axis,
                expected,
                found,
            } => write!(
                f,
                "{op}: shape mismatch on {axis} axis (expected {expected}, found {found})"
            ),
            Error::Contract { op, msg } => write!(f, "{op}: {msg}"),
            Error::TooSmall {
                height,
                width,
                levels,
                min_side,
            } => write!(
                f,
                "image {height}x{width} is too small for a {levels}-level pyramid \
                 (each side must be at least {min_side})"
            ),
            Error::NonFiniteLoss { step } => write!(f, "loss became non-finite at step {step}"),
            Error::NonFiniteProbe { index } => {
                write!(f, "objective is non-finite when probing parameter component {index}")
            }
        }
    }
}

impl core::error::Error for Error {}
