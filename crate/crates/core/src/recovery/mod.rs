//! Recovery-time effects: event encoding, enumeration, integration, and the
//! recovery-effects matrix.
//!
//! A photon arriving at a recovering detector is either lost or registers a
//! delayed "twilight" click at the end of the recovery period. Runs of
//! photons are encoded as grouped strings of three symbols (armed click,
//! twilight, lost), every distinct grouping is enumerated, each event's
//! occurrence probability is a nested integral over the photon profile, and
//! the results accumulate into a column-stochastic matrix indexed by photon
//! and click number.

mod build;
mod event;
mod grid;
mod prob;

pub use build::{build_recovery_matrix, RecoveryMatrix};
pub use event::{enumerate_events, EventString, EventSymbol};
pub use grid::RecoveryGrid;
pub use prob::{event_probability, event_probability_on_grid};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RecoveryError {
    #[error("normalization integral is zero for {0} photons")]
    NumericalUnderflow(usize),
    #[error("invalid event string: {0}")]
    InvalidEvent(String),
}
