//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Variants carry enough context
//! to locate the failing subsystem without a debugger: profile lookups name the
//! offending time, solver blowups name the chain and the time stamp, scenario
//! problems name the field.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A rate profile was evaluated outside its half-open horizon.
    #[error("time {t} outside profile horizon [{start}, {end})")]
    TimeOutOfProfile { t: f64, start: f64, end: f64 },

    /// A constructor or loader rejected its inputs. `what` names the violated
    /// invariant (e.g. "q_B must lie in [0, 1]").
    #[error("invalid {field}: {what}")]
    Invalid { field: String, what: String },

    /// The transient solver produced a vector that is no longer a probability
    /// distribution. Almost always means dt is too large for the rates.
    #[error("solver instability in {chain} at t = {t}: {what}; reduce dt")]
    Instability { chain: String, t: f64, what: String },

    /// Sojourn time requested while the arrival rate is zero; callers that
    /// need a number substitute their configured max-wait sentinel.
    #[error("waiting time undefined in {chain}: arrival rate is zero with {queued} queued")]
    UndefinedWait { chain: String, queued: f64 },

    /// Scenario file could not be loaded or failed validation.
    #[error("scenario {path}: {what}")]
    Scenario { path: String, what: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("CSV {path}: {what}")]
    Csv { path: String, what: String },
}

impl Error {
    pub fn invalid(field: &str, what: impl Into<String>) -> Self {
        Error::Invalid { field: field.to_string(), what: what.into() }
    }

    pub fn scenario(path: impl Into<String>, what: impl Into<String>) -> Self {
        Error::Scenario { path: path.into(), what: what.into() }
    }
}
