//! Photon number-state reconstruction with a single single-photon avalanche
//! detector (SPAD).
//!
//! A SPAD emits one electrical click per avalanche and cannot resolve photon
//! number. When the light pulse is longer than the detector recovery time the
//! detector may click several times per cycle, and the ensemble click-number
//! distribution `C` is related to the incident photon-number distribution `P`
//! by a column-stochastic detector matrix, `C = D P`. This crate builds `D`
//! from measurable detector parameters (efficiency, background rate,
//! dead/reset-time recovery profile, afterpulsing), inverts the relation with
//! an expectation-maximization-entropy solver, and ships the supporting
//! tooling:
//!
//! * [`dist`] / [`detector`] — probability vectors, detector parameters,
//!   photon profiles and the recovery loss profile.
//! * [`recovery`] — encoding, enumeration, and integration of recovery-time
//!   photon events, and the recovery-effects matrix.
//! * [`detmat`] — loss, background, and afterpulse matrices and their
//!   composition into the full detector matrix.
//! * [`eme`] — the iterative reconstruction and its evaluation metrics.
//! * [`tags`] — time-tag streams, second-order delay histograms, photon
//!   profile and click-number extraction.
//! * [`charfit`] — detector characterization fits (count rate, background
//!   rate, afterpulse profile, reset time, dead-time consistency, shape
//!   factor).
//! * [`sim`] — a Monte Carlo SPAD click simulator used as the validation
//!   oracle throughout the test suite.
//! * [`pipeline`] — stream-to-report and stream-to-distribution glue.
//! * [`uncertainty`] — Monte Carlo propagation of sampling error and
//!   parameter uncertainty onto reconstructed distributions.

pub mod charfit;
pub mod detector;
pub mod detmat;
pub mod dist;
pub mod eme;
pub mod matrix;
pub mod numeric;
pub mod pipeline;
pub mod recovery;
pub mod sim;
pub mod tags;
pub mod uncertainty;

pub use detector::{CycleWindow, DetectorParams, LossProfileModel, PhotonProfile, ValUnc};
pub use dist::NumberDistribution;
pub use eme::{EmeConfig, ReconstructionResult};
pub use matrix::SquareMatrix;
pub use tags::TimeTagStream;

/// Default time-tagger tick duration in seconds (164.6 ps).
pub const TICK_SECONDS: f64 = 164.6e-12;

/// Default analysis bin width in ticks (6 ticks is about 1 ns).
pub const DEFAULT_BIN_TICKS: u64 = 6;
