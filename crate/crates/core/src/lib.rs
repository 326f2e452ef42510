//! Analytical and simulated energy efficiency of 802.11a rate and
//! transmit-power control on a single saturated link.
//!
//! The crate is organised bottom-up:
//!
//! * [`phy`] — mode table, frame airtimes, AWGN packet-error model, and the
//!   indoor path-loss channel that maps transmit power to SNR.
//! * [`dcf`] — expected delay and goodput of the DCF retry process.
//! * [`energy`] — device power profiles, per-frame energy, and efficiency.
//! * [`analysis`] — grid sweeps (goodput envelope, energy/efficiency curves,
//!   sensitivity scans) and mode-transition drop detection.
//! * [`algorithms`] — PARF, Minstrel-Piano, PRCS and RRPAA controllers behind
//!   one decision interface.
//! * [`sim`] — frame-level simulator for a receiver walking towards the
//!   sender, plus run statistics and the conservativeness index.
//!
//! With the default `parallel` feature the grid sweeps and batch simulations
//! fan out over a rayon pool; `--no-default-features` builds a fully
//! sequential crate with identical results.

pub mod algorithms;
pub mod analysis;
pub mod dcf;
pub mod energy;
pub mod phy;
pub mod sim;

pub(crate) mod par;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("distance {0} m is below the 1 m floor of the path-loss model")]
    DistanceTooClose(f64),
    #[error("{0} Mbps is not a mandatory control rate (6, 12 or 24)")]
    NonMandatoryAckRate(u32),
    #[error("invalid transmission setup: {0}")]
    InvalidSetup(String),
    #[error("degenerate regression: {0}")]
    DegenerateFit(String),
    #[error("feedback does not match the controller's outstanding decision")]
    FeedbackMismatch,
    #[error("feedback timestamp went backwards")]
    OutOfOrderFeedback,
    #[error("trace is empty or has zero duration")]
    EmptyTrace,
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("malformed data file: {0}")]
    DataFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
