//! Detection of reward hacking in reinforcement-learning episode logs.
//!
//! Six category detectors score each episode; a calibrated weighted vote
//! turns their signals into a risk assessment. The [`envgen`] module
//! produces labeled synthetic streams to evaluate the detectors, and
//! [`eval`] holds the metrics and experiment statistics.

pub mod detectors;
pub mod ensemble;
pub mod envgen;
pub mod episode;
pub mod error;
pub mod eval;
pub mod io;
pub mod mitigation;
pub mod signal;
pub mod stats;

pub use episode::{
    reward_checksum, validate_episode, ActionSpace, ActionValue, Episode, GroundTruth, HackingCategory,
    Severity, Step, TemporalPattern,
};
pub use error::{Error, Result};
pub use signal::{DetectorSignal, RiskAssessment, SignalWarning};
