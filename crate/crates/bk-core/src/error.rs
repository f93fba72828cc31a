//! Error type shared across the core modules.

use alloc::string::String;
use core::fmt;

/// Errors raised by construction, state transitions and path evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// A model or law parameter violates its invariant.
    InvalidParams(String),
    /// An epidemic state carries more infected hosts than there are hosts.
    InvalidState { infected: u64, hosts: u64 },
    /// A transition is not feasible in the state it was applied to.
    InfeasibleEvent(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParams(msg) => write!(f, "invalid parameters: {msg}"),
            Error::InvalidState { infected, hosts } => {
                write!(f, "invalid state: {infected} infected hosts exceeds N = {hosts}")
            }
            Error::InfeasibleEvent(msg) => write!(f, "infeasible event: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
