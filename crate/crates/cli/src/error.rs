//! Exit-code classification.

use std::fmt;

/// Marks an error as a usage problem (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Marks a failed numeric bound, such as a benchmark ratio (exit code 3).
#[derive(Debug)]
pub struct NumericFailure(pub String);

impl fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericFailure {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// 1 for usage errors, 3 for non-finite values and failed numeric bounds,
/// 2 for everything else (missing files, malformed inputs).
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if cause.is::<NumericFailure>() {
            return EXIT_NUMERIC;
        }
        if let Some(varad_core::Error::NonFinite { .. }) = cause.downcast_ref::<varad_core::Error>() {
            return EXIT_NUMERIC;
        }
    }
    EXIT_DATA
}
