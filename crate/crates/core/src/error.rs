use alloc::string::String;

/// Errors produced by the kernel engine, solvers and protocols.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Malformed or inconsistent input (shapes, lengths, empty sets).
    #[error("invalid input: {0}")]
    Input(String),

    /// Input is well-formed but the problem it poses is degenerate.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A numerical procedure failed (singular system, divergence).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! input_err {
    ($($arg:tt)*) => { $crate::error::Error::Input(alloc::format!($($arg)*)) };
}

macro_rules! degenerate_err {
    ($($arg:tt)*) => { $crate::error::Error::Degenerate(alloc::format!($($arg)*)) };
}

macro_rules! numerical_err {
    ($($arg:tt)*) => { $crate::error::Error::Numerical(alloc::format!($($arg)*)) };
}

pub(crate) use {degenerate_err, input_err, numerical_err};
