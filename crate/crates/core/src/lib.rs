//! Deterministic simulator and analysis toolkit for one-bit push gossip over a
//! binary symmetric channel.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: opinions, the noisy channel, seeded random streams and the
//!   round-synchronous delivery engine (push to a uniform other agent, accept one
//!   arrival, flip its bit).
//! * [`params`]: the phase schedule derived from `(n, epsilon)` and the
//!   configurable constants.
//! * [`protocols`]: the two-stage broadcast, majority consensus, the clock-shifted
//!   desynchronised variant and the two failing baselines.
//! * [`oracle`]: exact binomial tails and the numerical checks of the analytic
//!   bounds, independent of the simulator.
//! * [`harness`]: Monte Carlo batches, sweeps, Wilson intervals, scaling fits
//!   and JSON/CSV persistence.

pub mod error;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod params;
pub mod protocols;

pub use error::{Error, Result};
pub use model::{NoiseChannel, Opinion, RngStream, SimConfig};
pub use params::{ProtocolConstants, ScheduleParams};
