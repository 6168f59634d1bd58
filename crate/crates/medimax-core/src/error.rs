use alloc::string::String;
use core::fmt;

/// Error kinds shared by every module.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Inputs violate a documented precondition (empty set, exponent out of
    /// range, mismatched lengths, non-finite values, ...).
    Domain(String),
    /// A set or field is used with a space it does not belong to.
    SpaceMismatch,
    /// A mapped set leaves the grid it must be rasterized on.
    OutOfDomain(String),
    /// No basis set can be realized at the requested scale.
    ResolutionExhausted { scale: f64 },
    /// The instance exceeds a configured size cap.
    SizeCap { size: usize, cap: usize },
    /// The requested optimization is nonconvex (p < 1 or q < 1); only
    /// feasibility checks are available there.
    Nonconvex,
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::SpaceMismatch => write!(f, "operand belongs to a different space"),
            Error::OutOfDomain(msg) => write!(f, "out of domain: {msg}"),
            Error::ResolutionExhausted { scale } => {
                write!(f, "no basis set realizable at scale {scale}")
            }
            Error::SizeCap { size, cap } => {
                write!(f, "instance size {size} exceeds cap {cap}")
            }
            Error::Nonconvex => write!(
                f,
                "objective is nonconvex for p < 1 or q < 1; only feasibility checks are offered"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
