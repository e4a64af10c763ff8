//! Transient queueing-network model of airport ground access.
//!
//! The crate couples three terminal-side queueing subsystems — a double-ended
//! passenger/taxi matching queue, a bus ticket office feeding a
//! fill-or-timeout departure process, and tandem subway station stages — to a
//! multinomial-logit mode choice. A successive-weighted-averages loop finds
//! the share vector consistent with the waiting times it induces, and an ant
//! lion optimizer searches queue-toll triples that minimize the worst
//! stranded-passenger count at the end of a short forecast horizon.
//!
//! Module map:
//! - [`rates`]: piecewise-constant arrival profiles, timetable flattening,
//!   mode-stream splitting
//! - [`ctmc`]: generic transient solver (RK4 over `p' = pQ(t)`), truncation
//!   policy, expectation helpers
//! - [`taxi`], [`bus`], [`subway`]: the three subsystem models
//! - [`network`]: whole-network forecast and congestion report
//! - [`choice`]: multinomial-logit mode choice over passenger classes
//! - [`equilibrium`]: successive weighted averages to the fixed point
//! - [`tollopt`]: ant lion search over toll triples
//! - [`scenario`]: on-disk TOML scenario format
//! - [`cli`]: the `queuenet` command-line entry points

pub mod bus;
pub mod choice;
pub mod cli;
pub mod ctmc;
pub mod equilibrium;
pub mod error;
pub mod network;
pub mod rates;
pub mod scenario;
pub mod subway;
pub mod taxi;
pub mod tollopt;

pub use error::{Error, Result};
