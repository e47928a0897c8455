//! Error types shared across the crate.

use std::fmt;

/// One violated constraint on a [`crate::spec::ConverterSpec`] field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecViolation {
    /// Name of the offending field.
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for SpecViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone)]
pub enum Error {
    /// Converter specification failed validation; all violations are listed.
    InvalidSpec(Vec<SpecViolation>),
    /// A network could not be turned into a solvable linear system.
    Assembly(String),
    /// A linear system was singular; the message names the degeneracy.
    Singular(String),
    /// Periodic steady state was not reached within the period cap.
    NonConvergence { periods: usize, residual: f64 },
    /// Simulation state became non-finite.
    Diverged { time: f64 },
    /// An operation was called with arguments outside its precondition.
    InvalidInput(String),
    /// Channel configuration or measurement problem.
    Channel(String),
    /// Config file error, with a 1-based line number when known.
    Config { line: Option<usize>, message: String },
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidSpec(violations) => {
                write!(f, "invalid converter spec:")?;
                for v in violations {
                    write!(f, "\n  - {v}")?;
                }
                Ok(())
            }
            Error::Assembly(msg) => write!(f, "network assembly failed: {msg}"),
            Error::Singular(msg) => write!(f, "singular system: {msg}"),
            Error::NonConvergence { periods, residual } => write!(
                f,
                "steady state not reached after {periods} periods (residual {residual:.3e} V)"
            ),
            Error::Diverged { time } => {
                write!(f, "simulation diverged (non-finite state) at t = {time:.6e} s")
            }
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Channel(msg) => write!(f, "channel error: {msg}"),
            Error::Config { line: Some(n), message } => write!(f, "config line {n}: {message}"),
            Error::Config { line: None, message } => write!(f, "config: {message}"),
            Error::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
