//! Error type shared across the crate.
//!
//! Three families map onto the CLI exit codes: configuration problems,
//! domain violations on individual operations, and numerical aborts raised
//! while a simulation is running.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Bad configuration: unknown key, unparsable value, failed validation.
    Config(String),
    /// An operation was called outside its domain (bad switch level,
    /// non-positive radicand, window shorter than required, ...).
    Domain(String),
    /// A running simulation had to stop: divide-by-voltage singularity,
    /// non-finite state, or collapsed output voltage. Carries the simulation
    /// time at which the abort fired.
    Numerical { t: f64, what: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Numerical { t, what } => {
                write!(f, "numerical abort at t = {t:.9} s: {what}")
            }
        }
    }
}

impl std::error::Error for Error {}
