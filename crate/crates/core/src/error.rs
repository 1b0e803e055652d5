//! Error type shared by every module in the crate.

use std::fmt;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted by numerics, attention, data, training and evaluation.
#[derive(Debug)]
pub enum Error {
    /// Two operands have incompatible shapes for the named operation.
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// An operation produced a NaN or infinite entry.
    NonFinite { op: &'static str },
    /// A scalar argument is outside its legal range (negative threshold,
    /// non-positive epsilon, degenerate split fraction, ...).
    InvalidParameter { what: &'static str, value: f64 },
    /// A configuration is structurally inconsistent.
    InvalidConfig(String),
    /// A loss mask selects zero entries.
    DegenerateMask,
    /// A class label is outside `0..classes`.
    LabelOutOfRange { label: usize, classes: usize },
    /// `backward` was asked to differentiate a non-scalar node.
    NotScalar { rows: usize, cols: usize },
    /// Training encountered a non-finite loss and aborted.
    NonFiniteLoss { epoch: usize, step: usize, value: f64 },
    /// An operation was invoked on a model configured for a different mode.
    UnsupportedMode(String),
    /// The input collection was empty where at least one element is required.
    EmptyInput(&'static str),
    /// Underlying I/O failure.
    Io { path: PathBuf, source: std::io::Error },
    /// A serialized file does not start with the expected magic bytes.
    CorruptHeader { path: PathBuf },
    /// A serialized file ended before the declared content was read.
    Truncated { path: PathBuf },
    /// A serialized file carries an unsupported format version.
    VersionMismatch { path: PathBuf, found: u32, expected: u32 },
    /// Free-form failure while decoding a serialized file.
    MalformedFile { path: PathBuf, message: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, left, right } => write!(
                f,
                "{op}: shape mismatch {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::NonFinite { op } => write!(f, "{op}: produced a non-finite entry"),
            Error::InvalidParameter { what, value } => {
                write!(f, "invalid parameter {what} = {value}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::DegenerateMask => write!(f, "loss mask selects zero entries"),
            Error::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            Error::NotScalar { rows, cols } => {
                write!(f, "expected a 1x1 loss node, got {rows}x{cols}")
            }
            Error::NonFiniteLoss { epoch, step, value } => {
                write!(
                    f,
                    "non-finite loss {value} at epoch {epoch}, step {step}; training aborted"
                )
            }
            Error::UnsupportedMode(msg) => write!(f, "unsupported mode: {msg}"),
            Error::EmptyInput(what) => write!(f, "{what}: empty input"),
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Error::CorruptHeader { path } => {
                write!(f, "{}: corrupt or unrecognized header", path.display())
            }
            Error::Truncated { path } => write!(f, "{}: file truncated", path.display()),
            Error::VersionMismatch { path, found, expected } => write!(
                f,
                "{}: format version {found}, this build reads version {expected}",
                path.display()
            ),
            Error::MalformedFile { path, message } => {
                write!(f, "{}: {message}", path.display())
            }
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
