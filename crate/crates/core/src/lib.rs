//! Security bounds, key rates and protocol simulation for side-channel-free
//! quantum key distribution whose "vacuum" sources emit weak light.
//!
//! The crate is organized bottom-up:
//!
//! - [`params`]: configurations, window statistics and report types
//! - [`rates`]: phase-error bound and the three key-rate formulas
//! - [`channel`]: analytic interference-channel model
//! - [`oracle`]: truncated Fock-space check of the channel model
//! - [`postprocess`]: expected outcome of two-way parity pairing
//! - [`montecarlo`]: seeded finite-N simulation
//! - [`pipeline`]: asymptotic end-to-end evaluation
//! - [`optimize`]: source-parameter optimization

pub mod channel;
pub mod error;
pub mod montecarlo;
pub mod optimize;
pub mod oracle;
pub mod params;
pub mod pipeline;
pub mod postprocess;
pub mod rates;

pub use error::{ConfigError, Error, Result};
pub use params::{
    binary_entropy, validate_config, AoppStats, ChannelConfig, Detector, KeyRateReport, Mode,
    ObservedCounts, ProtocolConfig, RateDetail, SecuritySummary, SourcePair, TwccStats,
    WindowClass, WindowStats,
};
