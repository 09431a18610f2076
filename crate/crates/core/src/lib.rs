//! Secret-key rates for round-robin differential-phase-shift quantum key
//! distribution with threshold (yes-no) detectors.
//!
//! The crate covers the information-leakage bound `phi(N, L)`, the analytic
//! channel model, the max-min key-rate formula and its photon-number-resolving
//! baseline, parameter optimization, a Monte-Carlo simulator of the optical
//! setup and an exact Fock-state oracle for small trains.

pub mod channel;
pub mod config;
pub mod entropy;
pub mod error;
pub mod keyrate;
pub mod optimize;
pub mod oracle;
pub mod phi;
pub mod sim;

pub use channel::{ChannelParams, DetectorModel, ProtocolParams, RateObservables};
pub use error::{Error, Result};
pub use keyrate::{KeyRateReport, ZeroRateFlag};
pub use phi::{PhiCache, PhiResult, SimplexPoint};
